//! Log-linear gravity model used to fill seed cells that tickets cannot observe.
//!
//! The pooled regression is
//! `ln x = ln K + alpha ln p_i + beta ln a_j + gamma ln t_ij`
//! over every week and every direct, unmasked pair whose travel time is known
//! and whose origin boards and destination alights at least one passenger.
//! Zero flows enter the fit as 0.01.

use crate::counters::MarginVectors;
use crate::error::{Error, Result};
use crate::linalg::{householder_lstsq, invert_upper};
use crate::matrix::CellMask;
use crate::network::{DirectPathSet, StationId};
use crate::ticketing::WeeklySeedOD;
use crate::timetable::TravelTimeMatrix;

/// Flow substituted for zero cells before taking logs.
pub const ZERO_FLOW_SUBSTITUTE: f64 = 0.01;
pub const MIN_OBSERVATIONS: usize = 5;
pub const COLUMN_NAMES: [&str; 4] = ["intercept", "log_p", "log_a", "log_t"];

#[derive(Clone, Debug, PartialEq)]
pub struct GravityObservation {
    pub log_flow: f64,
    pub log_p: f64,
    pub log_a: f64,
    pub log_t: f64,
    pub week: usize,
    pub origin: StationId,
    pub dest: StationId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GravityFit {
    pub log_k: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub r_squared: f64,
    pub n_obs: usize,
    /// Standard errors in column order; `None` when there is no residual degree of freedom.
    pub std_errors: Option<[f64; 4]>,
}

impl GravityFit {
    pub fn coefficients(&self) -> [f64; 4] {
        [self.log_k, self.alpha, self.beta, self.gamma]
    }

    pub fn from_coefficients(c: [f64; 4]) -> Self {
        Self {
            log_k: c[0],
            alpha: c[1],
            beta: c[2],
            gamma: c[3],
            r_squared: f64::NAN,
            n_obs: 0,
            std_errors: None,
        }
    }

    /// Sum of squared residuals of `obs` under these coefficients.
    pub fn ssr(&self, obs: &[GravityObservation]) -> f64 {
        obs.iter()
            .map(|o| {
                let fitted =
                    self.log_k + self.alpha * o.log_p + self.beta * o.log_a + self.gamma * o.log_t;
                (o.log_flow - fitted).powi(2)
            })
            .sum()
    }
}

pub fn build_observations(
    seeds: &[WeeklySeedOD],
    margins: &[MarginVectors],
    times: &TravelTimeMatrix,
    direct: &DirectPathSet,
    mask: &CellMask,
) -> Vec<GravityObservation> {
    let n = times.dim();
    let mut obs = Vec::new();
    for (seed, m) in seeds.iter().zip(margins) {
        for i in 0..n {
            if m.p[i] == 0 {
                continue;
            }
            for j in 0..n {
                if i == j || m.a[j] == 0 || mask[(i, j)] || !direct.contains(i, j) {
                    continue;
                }
                let Some(t) = times.get(i, j) else { continue };
                let x = seed.x_star[(i, j)];
                let flow = if x == 0.0 { ZERO_FLOW_SUBSTITUTE } else { x };
                obs.push(GravityObservation {
                    log_flow: flow.ln(),
                    log_p: (m.p[i] as f64).ln(),
                    log_a: (m.a[j] as f64).ln(),
                    log_t: t.ln(),
                    week: seed.week,
                    origin: StationId(i),
                    dest: StationId(j),
                });
            }
        }
    }
    obs
}

pub fn fit_ols(obs: &[GravityObservation]) -> Result<GravityFit> {
    if obs.len() < MIN_OBSERVATIONS {
        return Err(Error::InsufficientObservations {
            required: MIN_OBSERVATIONS,
            got: obs.len(),
        });
    }
    let columns = vec![
        vec![1.0; obs.len()],
        obs.iter().map(|o| o.log_p).collect(),
        obs.iter().map(|o| o.log_a).collect(),
        obs.iter().map(|o| o.log_t).collect(),
    ];
    let y: Vec<f64> = obs.iter().map(|o| o.log_flow).collect();
    let ls = householder_lstsq(&columns, &y).map_err(|e| Error::SingularDesign {
        column: COLUMN_NAMES[e.column],
    })?;

    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ssr: f64 = ls.residuals.iter().map(|r| r * r).sum();
    // A constant response is reproduced exactly by the intercept.
    let r_squared = if sst > 0.0 {
        (1.0 - ssr / sst).clamp(0.0, 1.0)
    } else {
        1.0
    };

    let df = obs.len() - 4;
    let std_errors = (df > 0).then(|| {
        let s2 = ssr / df as f64;
        let rinv = invert_upper(&ls.r, 4);
        let mut se = [0.0; 4];
        for (k, se_k) in se.iter_mut().enumerate() {
            let v: f64 = (0..4).map(|j| rinv[k * 4 + j].powi(2)).sum();
            *se_k = (s2 * v).sqrt();
        }
        se
    });

    let c = &ls.coefficients;
    Ok(GravityFit {
        log_k: c[0],
        alpha: c[1],
        beta: c[2],
        gamma: c[3],
        r_squared,
        n_obs: obs.len(),
        std_errors,
    })
}

pub fn predict_cell(fit: &GravityFit, p_i: f64, a_j: f64, t_ij: f64) -> Result<f64> {
    for (name, v) in [("boarded", p_i), ("alighted", a_j), ("travel time", t_ij)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    Ok((fit.log_k + fit.alpha * p_i.ln() + fit.beta * a_j.ln() + fit.gamma * t_ij.ln()).exp())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FillStats {
    pub filled_cells: usize,
    /// Masked cells set to zero because a margin is zero or no travel time is known.
    pub zeroed_cells: usize,
    /// Mass present in masked cells before filling, discarded.
    pub discarded_mass: f64,
    pub predicted_mass: f64,
}

/// Overwrites every masked cell of `seed` with the gravity prediction.
pub fn fill_masked(
    seed: &mut WeeklySeedOD,
    margins: &MarginVectors,
    times: &TravelTimeMatrix,
    mask: &CellMask,
    fit: &GravityFit,
) -> Result<FillStats> {
    let n = seed.x_star.dim();
    let mut stats = FillStats::default();
    for i in 0..n {
        for j in 0..n {
            if !mask[(i, j)] {
                continue;
            }
            stats.discarded_mass += seed.x_star[(i, j)];
            let (p, a) = (margins.p[i], margins.a[j]);
            let value = match times.get(i, j) {
                Some(t) if p > 0 && a > 0 => predict_cell(fit, p as f64, a as f64, t)?,
                _ => 0.0,
            };
            if value > 0.0 {
                stats.filled_cells += 1;
                stats.predicted_mass += value;
            } else {
                stats.zeroed_cells += 1;
            }
            seed.x_star[(i, j)] = value;
        }
    }
    Ok(stats)
}
