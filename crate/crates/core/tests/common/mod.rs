//! Independent reference implementations shared by the integration tests.
//!
//! Each oracle is written against plain nested vectors and shares no code with
//! the library routine it checks.

#![allow(dead_code, clippy::needless_range_loop)]

use chrono::{Datelike, Duration, NaiveDate};
use nalgebra::{DMatrix, DVector};
use odfuse::gravity::GravityObservation;
use odfuse::{TicketKind, TicketRecord};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Alternating row then column scaling until no cell moves by `tol`.
pub fn ipf_oracle(
    seed: &[Vec<f64>],
    rho: &[f64],
    alpha: &[f64],
    tol: f64,
    max_iter: usize,
) -> Vec<Vec<f64>> {
    let n = seed.len();
    let total: f64 = seed.iter().flatten().sum();
    let mut x: Vec<Vec<f64>> = seed
        .iter()
        .map(|r| r.iter().map(|v| v / total).collect())
        .collect();
    let rt: f64 = rho.iter().sum();
    let ct: f64 = alpha.iter().sum();
    for _ in 0..max_iter {
        let before = x.clone();
        for i in 0..n {
            let s: f64 = x[i].iter().sum();
            if s > 0.0 {
                for j in 0..n {
                    x[i][j] *= rho[i] / rt / s;
                }
            }
        }
        for j in 0..n {
            let s: f64 = (0..n).map(|i| x[i][j]).sum();
            if s > 0.0 {
                for i in 0..n {
                    x[i][j] *= alpha[j] / ct / s;
                }
            }
        }
        let mut delta: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                delta = delta.max((x[i][j] - before[i][j]).abs());
            }
        }
        if delta < tol {
            break;
        }
    }
    x
}

/// Solves `(X'X) b = X'y` with an LU factorization.
pub fn normal_equations(obs: &[GravityObservation]) -> [f64; 4] {
    let n = obs.len();
    let x = DMatrix::from_fn(n, 4, |r, c| match c {
        0 => 1.0,
        1 => obs[r].log_p,
        2 => obs[r].log_a,
        _ => obs[r].log_t,
    });
    let y = DVector::from_fn(n, |r, _| obs[r].log_flow);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * y;
    let b = xtx.lu().solve(&xty).expect("nonsingular normal equations");
    [b[0], b[1], b[2], b[3]]
}

/// Modified band depth by enumerating every pair of curves at every grid point.
pub fn band_depth_oracle(curves: &[Vec<f64>]) -> Vec<f64> {
    let n = curves.len();
    let t_len = curves[0].len();
    let mut pairs = 0usize;
    let mut inside = vec![0usize; n];
    for j in 0..n {
        for k in j + 1..n {
            pairs += 1;
            for (i, c) in curves.iter().enumerate() {
                for t in 0..t_len {
                    let lo = curves[j][t].min(curves[k][t]);
                    let hi = curves[j][t].max(curves[k][t]);
                    if lo <= c[t] && c[t] <= hi {
                        inside[i] += 1;
                    }
                }
            }
        }
    }
    inside
        .iter()
        .map(|&c| c as f64 / (pairs * t_len) as f64)
        .collect()
}

/// Inter-week MSE by a direct double loop.
pub fn mse_oracle(prev: &[u64], cur: &[u64], n: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = cur[i * n + j] as f64 - prev[i * n + j] as f64;
            acc += d * d;
        }
    }
    acc / (n * n) as f64
}

/// Random strictly positive seed and margins of size `n`.
pub fn positive_instance(r: &mut ChaCha8Rng, n: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let seed = (0..n)
        .map(|_| (0..n).map(|_| r.random_range(0.01..10.0)).collect())
        .collect();
    let p = (0..n).map(|_| r.random_range(1.0..1000.0)).collect();
    let a = (0..n).map(|_| r.random_range(1.0..1000.0)).collect();
    (seed, p, a)
}

pub fn gravity_design(
    r: &mut ChaCha8Rng,
    n: usize,
    noise: f64,
    coef: [f64; 4],
) -> Vec<GravityObservation> {
    (0..n)
        .map(|k| {
            let log_p = r.random_range(0.0f64..7.0);
            let log_a = r.random_range(0.0f64..7.0);
            let log_t = r.random_range(1.0f64..5.0);
            let eps = if noise > 0.0 {
                r.random_range(-noise..noise)
            } else {
                0.0
            };
            GravityObservation {
                log_flow: coef[0] + coef[1] * log_p + coef[2] * log_a + coef[3] * log_t + eps,
                log_p,
                log_a,
                log_t,
                week: 0,
                origin: odfuse::StationId(k % 7),
                dest: odfuse::StationId((k + 1) % 7),
            }
        })
        .collect()
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn last_of_month(y: i32, m: u32) -> NaiveDate {
    let (ny, nm) = if m == 12 { (y + 1, 1) } else { (y, m + 1) };
    date(ny, nm, 1) - Duration::days(1)
}

/// Round trips per direction credited to a subscription valid on `[start, end]`.
fn subscription_mass(start: NaiveDate, end: NaiveDate) -> f64 {
    let mut per_week: std::collections::BTreeMap<NaiveDate, i64> = Default::default();
    let mut d = start;
    while d <= end {
        *per_week
            .entry(d - Duration::days(d.weekday().num_days_from_monday() as i64))
            .or_default() += 1;
        d += Duration::days(1);
    }
    per_week
        .values()
        .map(|&days| (5.0 * days as f64 / 7.0).round())
        .sum()
}

/// Both-direction mass one record contributes before calendar clipping.
pub fn closed_form(r: &TicketRecord) -> f64 {
    let units = if r.shared_fare {
        r.quantity.ceil()
    } else {
        r.quantity
    };
    let per_unit = match r.kind {
        TicketKind::Ordinary | TicketKind::SpecialRate | TicketKind::AdditionalExaction => 1.0,
        TicketKind::Carnet | TicketKind::WeeklySub => 10.0,
        TicketKind::MonthlySub => {
            let p = r.purchase_date;
            let (s, e) = if p.day() < 22 {
                (p, last_of_month(p.year(), p.month()))
            } else {
                let (y, m) = if p.month() == 12 {
                    (p.year() + 1, 1)
                } else {
                    (p.year(), p.month() + 1)
                };
                (date(y, m, 1), last_of_month(y, m))
            };
            2.0 * subscription_mass(s, e)
        }
        TicketKind::YearlySub => {
            let p = r.purchase_date;
            let (y, m) = if p.month() == 12 {
                (p.year() + 1, 12)
            } else {
                (p.year() + 1, p.month())
            };
            2.0 * subscription_mass(p, last_of_month(y, m))
        }
        TicketKind::Other => 0.0,
    };
    per_unit * units
}
