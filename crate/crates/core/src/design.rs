//! Point-set generation: scrambled Sobol sequences and Latin hypercubes.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::RngStream;

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::arg("box bounds must be nonempty and of equal length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::arg("box lower bounds must be below upper bounds"));
        }
        Ok(DomainBox { lower, upper })
    }

    pub fn cube(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        DomainBox::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Map a point of the unit cube into the box.
    pub fn map_unit(&self, j: usize, u: f64) -> f64 {
        self.lower[j] + u * (self.upper[j] - self.lower[j])
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(j, &v)| v >= self.lower[j] && v <= self.upper[j])
    }
}

pub const SOBOL_MAX_DIM: usize = 16;
const BITS: usize = 32;

// (primitive polynomial, initial direction integers) per dimension; the
// first dimension is the van der Corput sequence.
const SOBOL_TABLE: [(u32, &[u32]); SOBOL_MAX_DIM] = [
    (1, &[]),
    (3, &[1]),
    (7, &[1, 3]),
    (11, &[1, 3, 1]),
    (13, &[1, 1, 1]),
    (19, &[1, 1, 3, 3]),
    (25, &[1, 3, 5, 13]),
    (37, &[1, 1, 5, 5, 17]),
    (41, &[1, 1, 5, 5, 5]),
    (47, &[1, 1, 7, 11, 19]),
    (55, &[1, 1, 5, 1, 1]),
    (59, &[1, 1, 1, 3, 11]),
    (61, &[1, 3, 5, 5, 31]),
    (67, &[1, 3, 3, 9, 7, 49]),
    (91, &[1, 1, 1, 15, 21, 21]),
    (97, &[1, 3, 1, 13, 27, 49]),
];

/// Direction numbers `v_k` (k = 0 is the most significant bit).
fn directions(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (BITS - 1 - k);
        }
        return v;
    }
    let (poly, init) = SOBOL_TABLE[dim];
    let s = (32 - poly.leading_zeros() - 1) as usize;
    let a = (poly >> 1) & ((1 << (s - 1)) - 1);
    for k in 0..s {
        v[k] = init[k] << (BITS - 1 - k);
    }
    for k in s..BITS {
        let mut x = v[k - s] ^ (v[k - s] >> s);
        for i in 1..s {
            if (a >> (s - 1 - i)) & 1 == 1 {
                x ^= v[k - i];
            }
        }
        v[k] = x;
    }
    v
}

/// Random linear matrix scramble (lower triangular, unit diagonal, in the
/// most-significant-bit-first sense) applied to a 32-bit word.
fn lms_scramble(columns: &[u32; BITS], x: u32) -> u32 {
    let mut out = 0;
    for (k, col) in columns.iter().enumerate() {
        if x & (1 << (BITS - 1 - k)) != 0 {
            out ^= col;
        }
    }
    out
}

/// `m` Sobol points (starting from index 1) mapped into `domain`. With a
/// scramble seed the sequence gets a linear matrix scramble plus a digital
/// shift. Requests of different sizes share prefixes.
pub fn sobol_points(m: usize, domain: &DomainBox, scramble: Option<&RngStream>) -> Result<DMatrix<f64>> {
    let d = domain.dim();
    if d > SOBOL_MAX_DIM {
        return Err(Error::arg(format!("Sobol points support at most {SOBOL_MAX_DIM} dimensions, got {d}")));
    }
    let mut rng = scramble.map(|s| s.rng());
    let mut out = DMatrix::zeros(m, d);
    for j in 0..d {
        let mut v = directions(j);
        let mut shift = 0u32;
        if let Some(r) = rng.as_mut() {
            let mut cols = [0u32; BITS];
            for (k, c) in cols.iter_mut().enumerate() {
                let below = if k + 1 < BITS { (1u32 << (BITS - 1 - k)) - 1 } else { 0 };
                *c = (1 << (BITS - 1 - k)) | (r.random::<u32>() & below);
            }
            for vk in v.iter_mut() {
                *vk = lms_scramble(&cols, *vk);
            }
            shift = r.random();
        }
        for i in 0..m {
            let idx = (i + 1) as u64;
            let gray = idx ^ (idx >> 1);
            let mut x = shift;
            for (k, vk) in v.iter().enumerate() {
                if gray >> k & 1 == 1 {
                    x ^= vk;
                }
            }
            out[(i, j)] = domain.map_unit(j, x as f64 / 2f64.powi(BITS as i32));
        }
    }
    Ok(out)
}

/// Latin hypercube design: one point per stratum along every axis, uniform
/// within strata, independent permutations across axes.
pub fn latin_hypercube(n: usize, domain: &DomainBox, rng: &RngStream) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::arg("latin hypercube needs at least one point"));
    }
    let mut r = rng.rng();
    let d = domain.dim();
    let mut out = DMatrix::zeros(n, d);
    for j in 0..d {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        for (i, &p) in perm.iter().enumerate() {
            let u = (p as f64 + r.random::<f64>()) / n as f64;
            out[(i, j)] = domain.map_unit(j, u);
        }
    }
    Ok(out)
}

/// Tensor grid with `per_dim` equally spaced points per axis (endpoints
/// included); the last coordinate varies fastest.
pub fn grid(domain: &DomainBox, per_dim: usize) -> DMatrix<f64> {
    let d = domain.dim();
    let total = per_dim.pow(d as u32);
    let mut out = DMatrix::zeros(total, d);
    for i in 0..total {
        let mut rem = i;
        for j in (0..d).rev() {
            let k = rem % per_dim;
            rem /= per_dim;
            let u = if per_dim > 1 { k as f64 / (per_dim - 1) as f64 } else { 0.5 };
            out[(i, j)] = domain.map_unit(j, u);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unscrambled_matches_reference_values() {
        let unit1 = DomainBox::cube(0.0, 1.0, 1).unwrap();
        let p = sobol_points(8, &unit1, None).unwrap();
        let want = [0.5, 0.75, 0.25, 0.375, 0.875, 0.625, 0.125, 0.1875];
        for i in 0..8 {
            assert_eq!(p[(i, 0)], want[i]);
        }
        let p = sobol_points(1, &DomainBox::cube(-5.0, 5.0, 1).unwrap(), None).unwrap();
        assert_eq!(p[(0, 0)], 0.0);

        let unit16 = DomainBox::cube(0.0, 1.0, 16).unwrap();
        let p = sobol_points(8, &unit16, None).unwrap();
        let rows: [[f64; 16]; 4] = [
            [0.5; 16],
            [0.75, 0.25, 0.25, 0.25, 0.75, 0.75, 0.25, 0.75, 0.75, 0.75, 0.75, 0.75, 0.25, 0.25, 0.75, 0.25],
            [0.375, 0.375, 0.625, 0.875, 0.375, 0.125, 0.375, 0.875, 0.875, 0.625, 0.875, 0.375, 0.375, 0.625, 0.375, 0.875],
            [0.1875, 0.3125, 0.9375, 0.4375, 0.5625, 0.3125, 0.4375, 0.9375, 0.9375, 0.3125, 0.6875, 0.0625, 0.9375, 0.9375, 0.8125, 0.9375],
        ];
        for (r, i) in [0usize, 1, 3, 7].iter().enumerate() {
            for j in 0..16 {
                assert_eq!(p[(*i, j)], rows[r][j], "point {i} dim {j}");
            }
        }
        // third point is the complement of the second
        for j in 0..16 {
            assert_eq!(p[(2, j)], 1.0 - p[(1, j)]);
        }
    }

    #[test]
    fn scrambled_points_are_stratified() {
        let unit = DomainBox::cube(0.0, 1.0, 3).unwrap();
        let p = sobol_points(64, &unit, Some(&RngStream::new(5, 0))).unwrap();
        // indices 1..=64 differ from a full 64-point net in one point, so
        // no 1/64 interval of any axis holds more than two points
        let plain = sobol_points(64, &unit, None).unwrap();
        assert_ne!(p, plain);
        for j in 0..3 {
            let mut bins = [0; 64];
            for i in 0..64 {
                bins[(p[(i, j)] * 64.0) as usize] += 1;
            }
            assert!(bins.iter().all(|&b| b <= 2), "dim {j}");
            assert!(p.column(j).iter().all(|&v| (0.0..1.0).contains(&v)));
        }
        assert!(sobol_points(4, &DomainBox::cube(0.0, 1.0, 17).unwrap(), None).is_err());
    }

    #[test]
    fn latin_hypercube_strata() {
        let unit = DomainBox::cube(0.0, 1.0, 1).unwrap();
        let p = latin_hypercube(4, &unit, &RngStream::new(1, 0)).unwrap();
        let mut bins: Vec<usize> = p.iter().map(|v| (v * 4.0) as usize).collect();
        bins.sort();
        assert_eq!(bins, vec![0, 1, 2, 3]);
        let a = latin_hypercube(10, &unit, &RngStream::new(2, 0)).unwrap();
        let b = latin_hypercube(10, &unit, &RngStream::new(2, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grid_layout() {
        let g = grid(&DomainBox::cube(-1.0, 1.0, 2).unwrap(), 3);
        assert_eq!(g.nrows(), 9);
        assert_eq!((g[(0, 0)], g[(0, 1)]), (-1.0, -1.0));
        assert_eq!((g[(1, 0)], g[(1, 1)]), (-1.0, 0.0));
        assert_eq!((g[(8, 0)], g[(8, 1)]), (1.0, 1.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn sobol_prefixes_nest(d in 1usize..=16, m in 1usize..=512, extra in 1usize..64, seed in any::<u64>()) {
            let unit = DomainBox::cube(-5.0, 5.0, d).unwrap();
            let s = RngStream::new(seed, 0);
            let short = sobol_points(m, &unit, Some(&s)).unwrap();
            let long = sobol_points(m + extra, &unit, Some(&s)).unwrap();
            prop_assert_eq!(short, long.rows(0, m).into_owned());
        }

        #[test]
        fn lhs_stratified_every_axis(n in 1usize..200, d in 1usize..4, seed in any::<u64>()) {
            let unit = DomainBox::cube(0.0, 1.0, d).unwrap();
            let p = latin_hypercube(n, &unit, &RngStream::new(seed, 0)).unwrap();
            for j in 0..d {
                let mut bins = vec![0; n];
                for i in 0..n {
                    bins[((p[(i, j)] * n as f64) as usize).min(n - 1)] += 1;
                }
                prop_assert!(bins.iter().all(|&b| b == 1));
            }
        }
    }
}
