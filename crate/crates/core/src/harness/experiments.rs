//! Benchmark definitions: ground truths, training data, test grids and the
//! directions in which monotonicity is enforced.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{ExperimentId, NoiseModel};
use crate::applications::{solve_convdiff, solve_sir, ConvDiffConfig, SirConfig};
use crate::design::{grid, latin_hypercube, DomainBox};
use crate::error::{Error, Result, StageExt};
use crate::gp::{default_init, fit_hyperparameters, Dataset, FitOptions};
use crate::kernels::KernelParams;
use crate::sampling::RngStream;

/// Hand-picked input locations of the sparse 1d-1 benchmark.
pub const ONE_D1_POINTS: [f64; 4] = [-4.5, -2.0, 1.0, 4.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub id: ExperimentId,
    pub n_observations: usize,
    pub noise_sd: f64,
    pub domain: DomainBox,
}

pub fn synthetic_spec(id: ExperimentId) -> Result<SyntheticSpec> {
    let (dim, n, sd) = match id {
        ExperimentId::OneD1 => (1, 4, 1e-1),
        ExperimentId::OneD2 => (1, 64, 1e-1),
        ExperimentId::OneD3 => (1, 50, 3e-1),
        ExperimentId::TwoD1 => (2, 16, 1e-3),
        ExperimentId::TwoD2 => (2, 16, 1e-3),
        ExperimentId::TwoD3 => (2, 64, 1e-3),
        other => return Err(Error::arg(format!("{other} is not a synthetic experiment"))),
    };
    Ok(SyntheticSpec {
        id,
        n_observations: n,
        noise_sd: sd,
        domain: DomainBox::cube(-5.0, 5.0, dim)?,
    })
}

/// Noise-free synthetic function.
pub fn synthetic_truth(id: ExperimentId, x: &[f64]) -> f64 {
    match id {
        ExperimentId::OneD1 => (x[0] + 5.1).ln(),
        ExperimentId::OneD2 => {
            let t = x[0];
            if t < -3.0 {
                t + 3.0
            } else if t < 3.0 {
                0.0
            } else {
                t - 3.0
            }
        }
        ExperimentId::OneD3 => 4.0 / (1.0 + (4.0 - x[0]).exp()),
        ExperimentId::TwoD1 => x[1].sin(),
        ExperimentId::TwoD2 => (x[0] + 6.0).ln() * (1.0 - x[1].cos()),
        ExperimentId::TwoD3 => x[0] * x[1].cos().powi(2),
        ExperimentId::Sir | ExperimentId::ConvDiff => f64::NAN,
    }
}

fn data_stream(id: ExperimentId, seed: u64) -> RngStream {
    RngStream::new(seed, 0).derive(&format!("data/{id}"))
}

fn add_noise(values: &mut [f64], sd: f64, rng: &RngStream) -> Result<()> {
    if sd > 0.0 {
        let normal = Normal::new(0.0, sd).map_err(|e| Error::arg(e.to_string()))?;
        let mut r = rng.rng();
        for v in values {
            *v += normal.sample(&mut r);
        }
    }
    Ok(())
}

/// Training data of a synthetic benchmark: Latin-hypercube inputs (fixed
/// points for 1d-1) and noisy truth values.
pub fn generate_dataset(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    let stream = data_stream(spec.id, seed);
    let inputs = if spec.id == ExperimentId::OneD1 {
        DMatrix::from_column_slice(ONE_D1_POINTS.len(), 1, &ONE_D1_POINTS)
    } else {
        latin_hypercube(spec.n_observations, &spec.domain, &stream.derive("inputs"))?
    };
    let mut values = truth_at(spec.id, &inputs)?;
    add_noise(&mut values, spec.noise_sd, &stream.derive("noise"))?;
    Dataset::new(inputs, DVector::from_vec(values), spec.noise_sd)
}

/// Input box of every experiment. SIR inputs are (R0, t); convection-
/// diffusion inputs are (x, t, -b) so that the solution increases in each.
pub fn domain(id: ExperimentId) -> Result<DomainBox> {
    match id {
        ExperimentId::Sir => {
            let c = SirConfig::default();
            DomainBox::new(vec![c.r0_range[0], c.t_range[0]], vec![c.r0_range[1], c.t_range[1]])
        }
        ExperimentId::ConvDiff => {
            let c = ConvDiffConfig::default();
            DomainBox::new(vec![0.0, 0.0, -c.b_range[1]], vec![1.0, c.t_final, -c.b_range[0]])
        }
        other => Ok(synthetic_spec(other)?.domain),
    }
}

/// Input dimensions in which the derivative is constrained; virtual points
/// cycle through them.
pub fn constrained_dims(id: ExperimentId) -> Vec<usize> {
    match id {
        ExperimentId::Sir => vec![0, 1],
        ExperimentId::ConvDiff => vec![0, 1, 2],
        _ => vec![0],
    }
}

/// Equally spaced test grid: 200 points in 1D, 50x50 in 2D, 15^3 in 3D.
pub fn test_grid(domain: &DomainBox) -> DMatrix<f64> {
    let per_dim = match domain.dim() {
        1 => 200,
        2 => 50,
        _ => 15,
    };
    grid(domain, per_dim)
}

/// Group rows by the value of one column, keeping row order within groups.
fn group_by_column(points: &DMatrix<f64>, col: usize) -> BTreeMap<u64, Vec<usize>> {
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for i in 0..points.nrows() {
        groups.entry(points[(i, col)].to_bits()).or_default().push(i);
    }
    groups
}

/// Noise-free response at each row of `points`.
pub fn truth_at(id: ExperimentId, points: &DMatrix<f64>) -> Result<Vec<f64>> {
    let mut out = vec![0.0; points.nrows()];
    match id {
        ExperimentId::Sir => {
            let cfg = SirConfig::default();
            for (bits, rows) in group_by_column(points, 0) {
                let times: Vec<f64> = rows.iter().map(|&i| points[(i, 1)]).collect();
                let r = solve_sir(&cfg, f64::from_bits(bits), &times)?;
                for (k, &i) in rows.iter().enumerate() {
                    out[i] = r[k];
                }
            }
        }
        ExperimentId::ConvDiff => {
            let cfg = ConvDiffConfig::default();
            for (bits, rows) in group_by_column(points, 2) {
                let sol = solve_convdiff(&cfg, -f64::from_bits(bits))?;
                for &i in &rows {
                    out[i] = sol.eval(points[(i, 0)], points[(i, 1)])?;
                }
            }
        }
        syn => {
            for (i, v) in out.iter_mut().enumerate() {
                let x: Vec<f64> = points.row(i).iter().copied().collect();
                *v = synthetic_truth(syn, &x);
            }
        }
    }
    Ok(out)
}

/// Number of training points of the application studies.
pub const APPLICATION_OBSERVATIONS: usize = 64;

/// Training data for any experiment. Application inputs are drawn
/// uniformly from the domain and observed without noise unless `noise_sd`
/// overrides it.
pub fn experiment_dataset(id: ExperimentId, seed: u64, noise_sd: Option<f64>) -> Result<Dataset> {
    if id.is_synthetic() {
        let mut spec = synthetic_spec(id)?;
        if let Some(sd) = noise_sd {
            spec.noise_sd = sd;
        }
        return generate_dataset(&spec, seed);
    }
    let dom = domain(id)?;
    let stream = data_stream(id, seed);
    let mut r = stream.derive("inputs").rng();
    let inputs = DMatrix::from_fn(APPLICATION_OBSERVATIONS, dom.dim(), |_, j| {
        dom.map_unit(j, r.random::<f64>())
    });
    let mut values = truth_at(id, &inputs)?;
    let sd = noise_sd.unwrap_or(0.0);
    add_noise(&mut values, sd, &stream.derive("noise"))?;
    Dataset::new(inputs, DVector::from_vec(values), sd)
}

/// Everything shared by the methods of one (experiment, seed): data,
/// fitted hyperparameters, test grid and truth.
#[derive(Debug, Clone)]
pub struct Setting {
    pub experiment: ExperimentId,
    pub seed: u64,
    pub domain: DomainBox,
    pub data: Dataset,
    pub params: KernelParams,
    /// Fixed noise variance of the training values in the model.
    pub nugget: f64,
    /// Constant prior mean (the mean of the training values).
    pub mean_const: f64,
    pub test_points: DMatrix<f64>,
    pub truth: Vec<f64>,
}

pub fn build_setting(id: ExperimentId, seed: u64, noise_sd: Option<f64>, noise_model: NoiseModel) -> Result<Setting> {
    let data = experiment_dataset(id, seed, noise_sd).stage("data generation")?;
    let mean_const = data.values.mean();
    let nugget = match noise_model {
        NoiseModel::Interpolate => 0.0,
        NoiseModel::Known => data.noise_sd * data.noise_sd,
    };
    let opts = FitOptions {
        mean_const,
        nugget,
        ..FitOptions::default()
    };
    let params = default_init(&data)
        .and_then(|init| fit_hyperparameters(&data, &init, &opts))
        .stage("hyperparameter fit")?;
    let domain = domain(id)?;
    let test_points = test_grid(&domain);
    let truth = truth_at(id, &test_points).stage("ground truth")?;
    Ok(Setting {
        experiment: id,
        seed,
        domain,
        data,
        params,
        nugget,
        mean_const,
        test_points,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows() {
        let s = synthetic_spec(ExperimentId::OneD1).unwrap();
        let d = generate_dataset(&s, 3).unwrap();
        assert_eq!((d.len(), s.noise_sd), (4, 0.1));
        let s = synthetic_spec(ExperimentId::TwoD3).unwrap();
        let d = generate_dataset(&s, 3).unwrap();
        assert_eq!((d.len(), d.dim(), s.noise_sd), (64, 2, 1e-3));
        assert!(d.inputs.iter().all(|v| (-5.0..=5.0).contains(v)));
        let counts: Vec<usize> = ExperimentId::SYNTHETIC
            .iter()
            .map(|id| synthetic_spec(*id).unwrap().n_observations)
            .collect();
        assert_eq!(counts, vec![4, 64, 50, 16, 16, 64]);
        assert!(synthetic_spec(ExperimentId::Sir).is_err());
    }

    #[test]
    fn zero_noise_gives_exact_values() {
        for id in ExperimentId::SYNTHETIC {
            let d = experiment_dataset(*id, 1, Some(0.0)).unwrap();
            for i in 0..d.len() {
                let x: Vec<f64> = d.inputs.row(i).iter().copied().collect();
                assert_eq!(d.values[i], synthetic_truth(*id, &x));
            }
        }
    }

    #[test]
    fn truths_are_monotone_in_constrained_dims() {
        for id in ExperimentId::ALL {
            let dom = domain(*id).unwrap();
            let g = grid(&dom, 7);
            let t = truth_at(*id, &g).unwrap();
            let d = dom.dim();
            // grid index arithmetic: the last coordinate varies fastest
            for dim in constrained_dims(*id) {
                let stride = 7usize.pow((d - 1 - dim) as u32);
                for i in 0..g.nrows() {
                    if (i / stride) % 7 < 6 {
                        assert!(t[i + stride] >= t[i] - 1e-9, "{id} dim {dim} row {i}");
                    }
                }
            }
        }
    }

    #[test]
    fn application_data_and_grids() {
        let d = experiment_dataset(ExperimentId::Sir, 0, None).unwrap();
        assert_eq!((d.len(), d.dim(), d.noise_sd), (64, 2, 0.0));
        let d = experiment_dataset(ExperimentId::ConvDiff, 0, None).unwrap();
        assert_eq!((d.len(), d.dim()), (64, 3));
        assert!(d.values.iter().all(|v| (0.0..=1.0 + 1e-8).contains(v)));
        assert_eq!(test_grid(&domain(ExperimentId::OneD2).unwrap()).nrows(), 200);
        assert_eq!(test_grid(&domain(ExperimentId::Sir).unwrap()).nrows(), 2500);
        assert_eq!(test_grid(&domain(ExperimentId::ConvDiff).unwrap()).nrows(), 3375);
        let a = experiment_dataset(ExperimentId::OneD3, 5, None).unwrap();
        let b = experiment_dataset(ExperimentId::OneD3, 5, None).unwrap();
        assert_eq!(a, b);
    }
}
