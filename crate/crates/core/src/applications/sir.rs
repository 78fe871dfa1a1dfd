//! Dimensionless SIR epidemic model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirConfig {
    pub r0_range: [f64; 2],
    pub t_range: [f64; 2],
    /// Initial (S, I, R).
    pub initial: [f64; 3],
    pub rtol: f64,
    pub atol: f64,
}

impl Default for SirConfig {
    fn default() -> Self {
        SirConfig {
            r0_range: [0.01, 5.0],
            t_range: [0.0, 10.0],
            initial: [0.98, 0.02, 0.0],
            rtol: 1e-8,
            atol: 1e-12,
        }
    }
}

type State = [f64; 3];

fn rhs(r0: f64, y: &State) -> State {
    let infection = r0 * y[0] * y[1];
    [-infection, infection - y[1], y[1]]
}

// Dormand-Prince 5(4) tableau (the system is autonomous, so the nodes are not needed)
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// difference between the fifth- and fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// One DP step from `y` (with `f0 = rhs(y)`); returns the new state, its
/// derivative and the scaled error norm.
fn step(r0: f64, y: &State, f0: &State, h: f64, rtol: f64, atol: f64) -> (State, State, f64) {
    let mut k = [[0.0; 3]; 7];
    k[0] = *f0;
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            for c in 0..3 {
                ys[c] += h * A[s][j] * kj[c];
            }
        }
        k[s] = rhs(r0, &ys);
        if s == 6 {
            // the last stage is evaluated at the fifth-order solution
            let mut sq = 0.0;
            for c in 0..3 {
                let err: f64 = h * (0..7).map(|j| E[j] * k[j][c]).sum::<f64>();
                let scale = atol + rtol * y[c].abs().max(ys[c].abs());
                sq += (err / scale).powi(2);
            }
            return (ys, k[6], (sq / 3.0).sqrt());
        }
    }
    unreachable!()
}

/// Full (S, I, R) states at the requested times (which must be sorted and
/// inside the configured time range). Steps are shortened to land exactly on
/// every output time.
pub fn solve_sir_states(cfg: &SirConfig, r0: f64, t_eval: &[f64]) -> Result<Vec<State>> {
    if !(r0 > 0.0) || !r0.is_finite() {
        return Err(Error::arg(format!("R0 must be positive, got {r0}")));
    }
    let [t0, t1] = cfg.t_range;
    if t_eval.iter().any(|t| !(*t >= t0 && *t <= t1)) {
        return Err(Error::arg(format!("output times must lie in [{t0}, {t1}]")));
    }
    if t_eval.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::arg("output times must be sorted"));
    }
    let mut y = cfg.initial;
    let mut f = rhs(r0, &y);
    let mut t = t0;
    let mut h: f64 = 1e-3;
    let mut out = Vec::with_capacity(t_eval.len());
    let mut steps = 0usize;
    for &target in t_eval {
        while target - t > 1e-14 * (1.0 + t.abs()) {
            let hs = h.min(target - t);
            let (yn, fn_, err) = step(r0, &y, &f, hs, cfg.rtol, cfg.atol);
            steps += 1;
            if steps > 1_000_000 || !err.is_finite() {
                return Err(Error::Numerical(format!("SIR integration failed for R0 = {r0}")));
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                t += hs;
                y = yn;
                f = fn_;
                // do not let a short landing step shrink the step size
                h = (hs * factor).max(if hs < h { h } else { 0.0 });
            } else {
                h = hs * factor.min(1.0);
                if h < 1e-14 {
                    return Err(Error::Numerical(format!("SIR step size underflow for R0 = {r0}")));
                }
            }
        }
        t = t.max(target);
        out.push(y);
    }
    Ok(out)
}

/// Removed fraction `R(t)` at each time in `t_eval` (any order).
pub fn solve_sir(cfg: &SirConfig, r0: f64, t_eval: &[f64]) -> Result<Vec<f64>> {
    let mut order: Vec<usize> = (0..t_eval.len()).collect();
    order.sort_by(|&a, &b| t_eval[a].total_cmp(&t_eval[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| t_eval[i]).collect();
    let states = solve_sir_states(cfg, r0, &sorted)?;
    let mut out = vec![0.0; t_eval.len()];
    for (k, &i) in order.iter().enumerate() {
        out[i] = states[k][2];
    }
    Ok(out)
}
