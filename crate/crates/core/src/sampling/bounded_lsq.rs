//! Nonnegatively constrained regularized least squares
//! `min ½‖Ax − b‖²_W + ½‖x − c‖²_P  s.t. x ≥ 0`,
//! reduced to the box-constrained quadratic `min ½xᵀHx − gᵀx`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Lower bounds on every component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bounds {
    NonNegative,
    /// No bounds; the solver returns the unconstrained minimizer.
    Unbounded,
}

impl Bounds {
    fn project(self, x: &mut DVector<f64>) {
        if self == Bounds::NonNegative {
            x.apply(|v| *v = v.max(0.0));
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundedLsqProblem {
    pub a: DMatrix<f64>,
    /// SPD weight on the data misfit.
    pub w: DMatrix<f64>,
    /// SPD weight on the prior misfit.
    pub p: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub bounds: Bounds,
}

impl BoundedLsqProblem {
    pub fn new(
        a: DMatrix<f64>,
        w: DMatrix<f64>,
        p: DMatrix<f64>,
        b: DVector<f64>,
        c: DVector<f64>,
        bounds: Bounds,
    ) -> Result<Self> {
        let (n, m) = a.shape();
        if w.shape() != (n, n) || p.shape() != (m, m) || b.len() != n || c.len() != m {
            return Err(Error::arg("inconsistent least-squares problem shapes"));
        }
        Ok(BoundedLsqProblem { a, w, p, b, c, bounds })
    }

    pub fn quadratic(&self) -> Quadratic {
        let aw = self.a.transpose() * &self.w;
        let mut hessian = &aw * &self.a + &self.p;
        crate::linalg::symmetrize(&mut hessian);
        Quadratic {
            hessian,
            linear: aw * &self.b + &self.p * &self.c,
            bounds: self.bounds,
        }
    }
}

/// `½xᵀHx − gᵀx` with SPD `H`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub bounds: Bounds,
}

impl Quadratic {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) - self.linear.dot(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.hessian * x - &self.linear
    }

    /// `‖x − Π(x − ∇f(x))‖∞`.
    pub fn projected_gradient_norm(&self, x: &DVector<f64>, grad: &DVector<f64>) -> f64 {
        let mut y = x - grad;
        self.bounds.project(&mut y);
        (x - y).amax()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: 5000,
            rel_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsqSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// Iteration cap reached before the tolerance.
    pub degraded: bool,
}

pub fn solve_bounded_lsq(prob: &BoundedLsqProblem, x0: &DVector<f64>) -> LsqSolution {
    solve_quadratic(&prob.quadratic(), x0, &SolverOptions::default())
}

/// Minimizer of the quadratic over the subspace of `passive` variables
/// (the rest held at zero).
fn subspace_min(q: &Quadratic, passive: &[usize]) -> Option<DVector<f64>> {
    let k = passive.len();
    let hpp = DMatrix::from_fn(k, k, |i, j| q.hessian[(passive[i], passive[j])]);
    let lin = DVector::from_fn(k, |i, _| q.linear[passive[i]]);
    hpp.cholesky().map(|c| c.solve(&lin))
}

/// Active-set solve in the manner of Lawson and Hanson, started from the
/// positive support of the feasible point `x`. Each outer step frees the
/// bound variable with the most negative gradient; inner steps move toward
/// the subspace minimizer and drop variables that reach the bound.
fn active_set(q: &Quadratic, x: &DVector<f64>, max_steps: usize) -> Option<DVector<f64>> {
    let n = x.len();
    let mut x = x.clone();
    let mut passive: Vec<bool> = x.iter().map(|&v| v > 0.0).collect();
    if q.bounds == Bounds::Unbounded {
        passive.fill(true);
    }
    let mut steps = 0;
    let mut fresh = true;
    loop {
        if !fresh {
            let grad = q.gradient(&x);
            let enter = (0..n)
                .filter(|&i| !passive[i] && grad[i] < 0.0)
                .min_by(|&a, &b| grad[a].total_cmp(&grad[b]));
            match enter {
                Some(j) => passive[j] = true,
                None => return Some(x),
            }
        }
        fresh = false;
        loop {
            steps += 1;
            if steps > max_steps {
                return None;
            }
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            if idx.is_empty() {
                break;
            }
            let z = subspace_min(q, &idx)?;
            let mut alpha: f64 = 1.0;
            let mut blocking = None;
            for (k, &i) in idx.iter().enumerate() {
                if z[k] <= 0.0 && q.bounds == Bounds::NonNegative {
                    let a = x[i] / (x[i] - z[k]);
                    if a < alpha {
                        alpha = a;
                        blocking = Some(i);
                    }
                }
            }
            for (k, &i) in idx.iter().enumerate() {
                x[i] += alpha * (z[k] - x[i]);
            }
            match blocking {
                None => break,
                Some(b) => {
                    x[b] = 0.0;
                    for &i in &idx {
                        if x[i] <= 0.0 {
                            x[i] = 0.0;
                            passive[i] = false;
                        }
                    }
                }
            }
        }
    }
}

/// Projected gradient with Barzilai–Borwein steps and a monotone line
/// search, accelerated by Newton steps on the free subspace once the active
/// set settles. The iterate is projected at the end of every iteration.
pub fn solve_quadratic(q: &Quadratic, x0: &DVector<f64>, opts: &SolverOptions) -> LsqSolution {
    let mut x = x0.clone();
    q.bounds.project(&mut x);
    let mut grad = q.gradient(&x);
    let tol = opts.rel_tol * (1.0 + grad.amax());
    let mut fx = q.value(&x);
    let diag_max = q.hessian.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut alpha = 1.0 / diag_max;
    let active = |x: &DVector<f64>| -> Vec<bool> { x.iter().map(|&v| v == 0.0).collect() };
    let mut last_active = active(&x);
    let mut stable = 0usize;
    for it in 0..opts.max_iter {
        if q.projected_gradient_norm(&x, &grad) <= tol {
            return LsqSolution {
                x,
                iterations: it,
                degraded: false,
            };
        }
        if stable >= 2 || q.bounds == Bounds::Unbounded {
            // finish on the settled support; accepted only if it improves
            if let Some(y) = active_set(q, &x, 4 * x.len() + 10) {
                let fy = q.value(&y);
                if fy <= fx {
                    let gy = q.gradient(&y);
                    let done = q.projected_gradient_norm(&y, &gy) <= tol;
                    x = y;
                    grad = gy;
                    fx = fy;
                    if done {
                        continue;
                    }
                }
            }
            stable = 0;
        }
        // projected BB direction
        let mut trial = &x - &grad * alpha;
        q.bounds.project(&mut trial);
        let d = &trial - &x;
        let hd = &q.hessian * &d;
        let dhd = d.dot(&hd);
        let gd = grad.dot(&d);
        // exact minimizer along d, capped at the full step
        let lambda = if dhd > 0.0 { (-gd / dhd).min(1.0) } else { 1.0 };
        let mut next = &x + &d * lambda;
        q.bounds.project(&mut next);
        let s = &next - &x;
        let next_grad = q.gradient(&next);
        let y = &next_grad - &grad;
        let sy = s.dot(&y);
        alpha = if sy > 0.0 {
            (s.norm_squared() / sy).clamp(1e-30, 1e30)
        } else {
            1.0 / diag_max
        };
        x = next;
        grad = next_grad;
        fx = q.value(&x);
        let act = active(&x);
        if act == last_active {
            stable += 1;
        } else {
            stable = 0;
            last_active = act;
        }
    }
    let done = q.projected_gradient_norm(&x, &grad) <= tol;
    LsqSolution {
        x,
        iterations: opts.max_iter,
        degraded: !done,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::RngStream;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn scalar(b: f64, c: f64) -> BoundedLsqProblem {
        let one = DMatrix::identity(1, 1);
        BoundedLsqProblem::new(
            one.clone(),
            one.clone(),
            one,
            DVector::from_element(1, b),
            DVector::from_element(1, c),
            Bounds::NonNegative,
        )
        .unwrap()
    }

    #[test]
    fn scalar_examples() {
        let s = solve_bounded_lsq(&scalar(1.0, 1.0), &DVector::zeros(1));
        assert!((s.x[0] - 1.0).abs() < 1e-12);
        let s = solve_bounded_lsq(&scalar(-2.0, -2.0), &DVector::from_element(1, 3.0));
        assert_eq!(s.x[0], 0.0);
        assert!(!s.degraded);
    }

    fn random_problem(seed: u64, n: usize, m: usize, bounds: Bounds) -> BoundedLsqProblem {
        let mut r = RngStream::new(seed, 0).rng();
        let mut g = |rows, cols| DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut r));
        let a = g(n, m);
        let wf = g(n, n);
        let pf = g(m, m);
        let b = g(n, 1).column(0).into_owned();
        let c = g(m, 1).column(0).into_owned();
        BoundedLsqProblem::new(
            a,
            &wf * wf.transpose() + DMatrix::identity(n, n) * 0.1,
            &pf * pf.transpose() + DMatrix::identity(m, m) * 0.1,
            b,
            c,
            bounds,
        )
        .unwrap()
    }

    /// Solve the equality-constrained problem for every active set and keep
    /// the best feasible one.
    fn enumerate(q: &Quadratic) -> DVector<f64> {
        let m = q.linear.len();
        let mut best: Option<(f64, DVector<f64>)> = None;
        for mask in 0..(1u32 << m) {
            let free: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
            let mut x = DVector::zeros(m);
            if !free.is_empty() {
                let k = free.len();
                let h = DMatrix::from_fn(k, k, |i, j| q.hessian[(free[i], free[j])]);
                let g = DVector::from_fn(k, |i, _| q.linear[free[i]]);
                let sol = h.cholesky().unwrap().solve(&g);
                for (i, &fi) in free.iter().enumerate() {
                    x[fi] = sol[i];
                }
            }
            if x.iter().all(|&v| v >= 0.0) {
                let f = q.value(&x);
                if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                    best = Some((f, x));
                }
            }
        }
        best.unwrap().1
    }

    #[test]
    fn matches_enumeration_oracle() {
        for seed in 0..20 {
            let prob = random_problem(seed, 6, 4, Bounds::NonNegative);
            let s = solve_bounded_lsq(&prob, &DVector::zeros(4));
            let oracle = enumerate(&prob.quadratic());
            assert!((&s.x - &oracle).amax() < 1e-6, "seed {seed}: {} vs {oracle}", s.x);
        }
    }

    #[test]
    fn unbounded_matches_closed_form() {
        for seed in 0..10 {
            let prob = random_problem(100 + seed, 7, 5, Bounds::Unbounded);
            let s = solve_bounded_lsq(&prob, &DVector::zeros(5));
            let aw = prob.a.transpose() * &prob.w;
            let h = &aw * &prob.a + &prob.p;
            let rhs = &aw * &prob.b + &prob.p * &prob.c;
            let closed = h.try_inverse().unwrap() * rhs;
            assert!((&s.x - &closed).norm() <= 1e-8 * closed.norm().max(1.0));
        }
    }

    #[test]
    fn ill_conditioned_problem_converges() {
        // hessian with condition number 1e8
        let m = 40;
        let mut r = RngStream::new(4, 4).rng();
        let qm = DMatrix::<f64>::from_fn(m, m, |_, _| StandardNormal.sample(&mut r)).qr().q();
        let eig = DVector::from_fn(m, |i, _| 10f64.powf(8.0 * i as f64 / (m - 1) as f64));
        let h = &qm * DMatrix::from_diagonal(&eig) * qm.transpose();
        let g = DVector::from_fn(m, |_, _| { let z: f64 = StandardNormal.sample(&mut r); 1e4 * z });
        let q = Quadratic {
            hessian: h,
            linear: g,
            bounds: Bounds::NonNegative,
        };
        let s = solve_quadratic(&q, &DVector::zeros(m), &SolverOptions::default());
        assert!(!s.degraded, "iterations {}", s.iterations);
        assert!(s.x.iter().all(|&v| v >= 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn output_is_feasible_and_optimal(seed in 0u64..10_000, warm in -3.0f64..3.0) {
            let prob = random_problem(seed, 5, 3, Bounds::NonNegative);
            let q = prob.quadratic();
            let x0 = DVector::from_element(3, warm);
            let s = solve_quadratic(&q, &x0, &SolverOptions::default());
            prop_assert!(s.x.iter().all(|&v| v >= 0.0));
            let mut p0 = x0.clone();
            p0.apply(|v| *v = v.max(0.0));
            let tol = 1e-8 * (1.0 + q.gradient(&p0).amax());
            prop_assert!(q.projected_gradient_norm(&s.x, &q.gradient(&s.x)) <= tol);
        }
    }
}
