use chrono::NaiveDate;

use crate::counters::MarginVectors;
use crate::error::{Error, Result};
use crate::ipf::WeeklyOD;
use crate::network::WeekCalendar;

#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorSeries {
    pub label: String,
    /// Week index of the first value. The inter-week MSE starts at week 1.
    pub first_week: usize,
    pub values: Vec<f64>,
}

fn check_dims(ods: &[WeeklyOD]) -> Result<usize> {
    let n = ods.first().map_or(0, |od| od.x.dim());
    for od in ods {
        if od.x.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: od.x.dim(),
            });
        }
    }
    Ok(n)
}

/// Mean squared cell difference between each week and the one before.
pub fn mse_series(ods: &[WeeklyOD]) -> Result<IndicatorSeries> {
    if ods.len() < 2 {
        return Err(Error::Domain(format!(
            "MSE needs at least two weeks, got {}",
            ods.len()
        )));
    }
    let n = check_dims(ods)?;
    let cells = (n * n) as f64;
    let values = ods
        .windows(2)
        .map(|w| {
            let sq: u128 = w[1]
                .x
                .as_slice()
                .iter()
                .zip(w[0].x.as_slice())
                .map(|(&cur, &prev)| {
                    let d = cur.abs_diff(prev) as u128;
                    d * d
                })
                .sum();
            sq as f64 / cells
        })
        .collect();
    Ok(IndicatorSeries {
        label: "mse".into(),
        first_week: 1,
        values,
    })
}

/// Average over stations of row sum plus column sum.
pub fn mean_strength_series(ods: &[WeeklyOD]) -> Result<IndicatorSeries> {
    let n = check_dims(ods)?;
    let values = ods
        .iter()
        .map(|od| 2.0 * od.x.sum() as f64 / n.max(1) as f64)
        .collect();
    Ok(IndicatorSeries {
        label: "mean_strength".into(),
        first_week: 0,
        values,
    })
}

/// Per-station throughput curves; `sigma[i][w]`.
#[derive(Clone, Debug, PartialEq)]
pub struct StrengthCurves {
    pub sigma: Vec<Vec<f64>>,
    /// Each station's curve divided by its total over all weeks.
    pub sigma_norm: Vec<Vec<f64>>,
    /// Stations whose strength is zero in every week; their normalized curve is all zero.
    pub zero_total: Vec<bool>,
}

impl StrengthCurves {
    fn from_sigma(sigma: Vec<Vec<f64>>) -> Self {
        let mut sigma_norm = Vec::with_capacity(sigma.len());
        let mut zero_total = Vec::with_capacity(sigma.len());
        for row in &sigma {
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                sigma_norm.push(row.iter().map(|v| v / total).collect());
                zero_total.push(false);
            } else {
                sigma_norm.push(vec![0.0; row.len()]);
                zero_total.push(true);
            }
        }
        Self {
            sigma,
            sigma_norm,
            zero_total,
        }
    }

    pub fn n_stations(&self) -> usize {
        self.sigma.len()
    }

    pub fn num_weeks(&self) -> usize {
        self.sigma.first().map_or(0, Vec::len)
    }
}

pub fn strength_curves(ods: &[WeeklyOD]) -> Result<StrengthCurves> {
    let n = check_dims(ods)?;
    let mut sigma = vec![vec![0.0; ods.len()]; n];
    for (w, od) in ods.iter().enumerate() {
        let rows = od.x.row_sums();
        let cols = od.x.col_sums();
        for i in 0..n {
            sigma[i][w] = (rows[i] + cols[i]) as f64;
        }
    }
    Ok(StrengthCurves::from_sigma(sigma))
}

/// The same curves computed from boarded plus alighted counts.
pub fn strength_from_margins(margins: &[MarginVectors]) -> StrengthCurves {
    let n = margins.first().map_or(0, |m| m.p.len());
    let mut sigma = vec![vec![0.0; margins.len()]; n];
    for (w, m) in margins.iter().enumerate() {
        for (i, row) in sigma.iter_mut().enumerate() {
            row[w] = (m.p[i] + m.a[i]) as f64;
        }
    }
    StrengthCurves::from_sigma(sigma)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventAnnotation {
    pub date: NaiveDate,
    pub kind: String,
    pub label: String,
}

/// Event labels per calendar week, `kind:label`, in input order.
pub fn label_weeks(events: &[EventAnnotation], cal: &WeekCalendar) -> Vec<Vec<String>> {
    let mut out = vec![Vec::new(); cal.num_weeks()];
    for e in events {
        if let Some(w) = cal.week_of(e.date) {
            out[w].push(format!("{}:{}", e.kind, e.label));
        }
    }
    out
}
