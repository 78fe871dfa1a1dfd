//! Transient 1D convection-diffusion `u_t + b u_x - alpha u_xx = 0` on
//! `[0, 1]`, linear finite elements and backward Euler.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvDiffConfig {
    pub alpha: f64,
    pub b_range: [f64; 2],
    pub elements: usize,
    pub dt: f64,
    pub t_final: f64,
}

impl Default for ConvDiffConfig {
    fn default() -> Self {
        ConvDiffConfig {
            alpha: 0.1,
            b_range: [-1.0, 0.0],
            elements: 64,
            dt: 0.01,
            t_final: 1.5,
        }
    }
}

/// Nodal values at every time level.
#[derive(Debug, Clone)]
pub struct ConvDiffSolution {
    pub b: f64,
    pub h: f64,
    pub dt: f64,
    /// `levels[n][i]` is u at node i, time n·dt.
    pub levels: Vec<Vec<f64>>,
}

impl ConvDiffSolution {
    pub fn t_final(&self) -> f64 {
        self.dt * (self.levels.len() - 1) as f64
    }

    /// Bilinear interpolation in (x, t).
    pub fn eval(&self, x: f64, t: f64) -> Result<f64> {
        let tf = self.t_final();
        if !(0.0..=1.0).contains(&x) || !(0.0..=tf + 1e-12).contains(&t) {
            return Err(Error::arg(format!("point ({x}, {t}) is outside [0, 1] x [0, {tf}]")));
        }
        let nodes = self.levels[0].len() - 1;
        let (i, wx) = cell(x / self.h, nodes);
        let (n, wt) = cell(t / self.dt, self.levels.len() - 1);
        let at = |lvl: &[f64]| lvl[i] * (1.0 - wx) + lvl[i + 1] * wx;
        Ok(at(&self.levels[n]) * (1.0 - wt) + at(&self.levels[n + 1]) * wt)
    }
}

fn cell(pos: f64, cells: usize) -> (usize, f64) {
    let i = (pos.floor() as usize).min(cells - 1);
    (i, (pos - i as f64).clamp(0.0, 1.0))
}

/// Tridiagonal solve (Thomas algorithm); `sub[0]` and `sup[n-1]` unused.
fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    rhs[0] /= beta;
    for i in 1..n {
        c[i - 1] = sup[i - 1] / beta;
        beta = diag[i] - sub[i] * c[i - 1];
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

/// Run the solver for convection speed `b`. `u(1, t) = 1` for t > 0, the
/// boundary at 0 is left natural (zero diffusive flux), `u(x, 0) = 0`.
pub fn solve_convdiff(cfg: &ConvDiffConfig, b: f64) -> Result<ConvDiffSolution> {
    if !(cfg.alpha > 0.0) || !(cfg.dt > 0.0) || cfg.elements < 2 || !(cfg.t_final > 0.0) {
        return Err(Error::arg("convection-diffusion needs alpha > 0, dt > 0, t_final > 0 and 2+ elements"));
    }
    if !(b >= cfg.b_range[0] && b <= cfg.b_range[1]) {
        return Err(Error::arg(format!("b = {b} is outside [{}, {}]", cfg.b_range[0], cfg.b_range[1])));
    }
    let ne = cfg.elements;
    let np = ne + 1;
    let h = 1.0 / ne as f64;
    let steps = (cfg.t_final / cfg.dt).round() as usize;
    let (a, dt) = (cfg.alpha, cfg.dt);

    // element matrices: mass h/6 [2 1; 1 2], stiffness a/h [1 -1; -1 1],
    // convection b/2 [-1 1; -1 1] (rows test, columns trial)
    let mut m_sub = vec![0.0; np];
    let mut m_diag = vec![0.0; np];
    let mut m_sup = vec![0.0; np];
    let mut s_sub = vec![0.0; np];
    let mut s_diag = vec![0.0; np];
    let mut s_sup = vec![0.0; np];
    for e in 0..ne {
        let (l, r) = (e, e + 1);
        m_diag[l] += h / 3.0;
        m_diag[r] += h / 3.0;
        m_sup[l] += h / 6.0;
        m_sub[r] += h / 6.0;
        s_diag[l] += a / h - b / 2.0;
        s_sup[l] += -a / h + b / 2.0;
        s_sub[r] += -a / h - b / 2.0;
        s_diag[r] += a / h + b / 2.0;
    }
    let sub: Vec<f64> = (0..np).map(|i| m_sub[i] + dt * s_sub[i]).collect();
    let mut diag: Vec<f64> = (0..np).map(|i| m_diag[i] + dt * s_diag[i]).collect();
    let mut sup: Vec<f64> = (0..np).map(|i| m_sup[i] + dt * s_sup[i]).collect();
    // Dirichlet row at the last node; its column moves to the right side
    let coupling = sup[np - 2];
    sup[np - 2] = 0.0;
    let mut sub = sub;
    sub[np - 1] = 0.0;
    diag[np - 1] = 1.0;

    let mut levels = Vec::with_capacity(steps + 1);
    let mut u = vec![0.0; np];
    levels.push(u.clone());
    for _ in 0..steps {
        let mut rhs: Vec<f64> = (0..np)
            .map(|i| {
                let mut v = m_diag[i] * u[i];
                if i > 0 {
                    v += m_sub[i] * u[i - 1];
                }
                if i + 1 < np {
                    v += m_sup[i] * u[i + 1];
                }
                v
            })
            .collect();
        rhs[np - 2] -= coupling;
        rhs[np - 1] = 1.0;
        thomas(&sub, &diag, &sup, &mut rhs);
        u = rhs;
        levels.push(u.clone());
    }
    Ok(ConvDiffSolution { b, h, dt, levels })
}
