//! Iterative proportional fitting of a seed matrix to boarded/alighted margins.
//!
//! Margins from counters rarely balance (total boarded differs from total
//! alighted), so the seed and both margin vectors are first normalized to
//! probabilities. Fitting then alternates full row and column rescaling
//! sweeps until no cell moves by `tol` or more. The fitted probabilities are
//! scaled back by the total boarded and rounded to whole trips.

use crate::error::{Error, Result};
use crate::matrix::{round_count, CellMask, SquareMatrix};
use crate::network::DirectPathSet;

/// Value given to structurally possible cells that received no seed mass.
pub const ZERO_CELL_FILL: f64 = 0.1;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1000;

/// Sets empty direct or masked cells to [`ZERO_CELL_FILL`]; clears the diagonal.
pub fn zero_fill(
    seed: &SquareMatrix<f64>,
    direct: &DirectPathSet,
    mask: &CellMask,
) -> SquareMatrix<f64> {
    SquareMatrix::from_fn(seed.dim(), |i, j| {
        let v = seed[(i, j)];
        if i == j {
            0.0
        } else if v == 0.0 && (direct.contains(i, j) || mask[(i, j)]) {
            ZERO_CELL_FILL
        } else {
            v
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilitySeed {
    pub pi_star: SquareMatrix<f64>,
    pub rho: Vec<f64>,
    pub alpha: Vec<f64>,
}

/// Divides the seed and each margin vector by its own total.
pub fn normalize(
    seed: &SquareMatrix<f64>,
    p: &[f64],
    a: &[f64],
    week: usize,
) -> Result<ProbabilitySeed> {
    let n = seed.dim();
    for len in [p.len(), a.len()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: len,
            });
        }
    }
    let total = |what, s: f64| {
        if s > 0.0 && s.is_finite() {
            Ok(s)
        } else {
            Err(Error::DegenerateWeek { week, what })
        }
    };
    let seed_total = total("seed", seed.sum())?;
    let p_total = total("boarded", p.iter().sum())?;
    let a_total = total("alighted", a.iter().sum())?;
    Ok(ProbabilitySeed {
        pi_star: seed.map(|v| v / seed_total),
        rho: p.iter().map(|v| v / p_total).collect(),
        alpha: a.iter().map(|v| v / a_total).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepOrder {
    RowsFirst,
    ColumnsFirst,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IpfResult {
    pub pi: SquareMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest absolute gap between target and fitted row sums.
    pub eps_row: f64,
    /// Largest absolute gap between target and fitted column sums.
    pub eps_col: f64,
}

/// Largest absolute deviation of row and column sums from their targets.
pub fn margin_errors(x: &SquareMatrix<f64>, rows: &[f64], cols: &[f64]) -> (f64, f64) {
    let max_gap = |sums: Vec<f64>, target: &[f64]| {
        sums.iter()
            .zip(target)
            .map(|(s, t)| (s - t).abs())
            .fold(0.0, f64::max)
    };
    (max_gap(x.row_sums(), rows), max_gap(x.col_sums(), cols))
}

fn check_support(ps: &ProbabilitySeed) -> Result<()> {
    let n = ps.pi_star.dim();
    for i in 0..n {
        if ps.rho[i] > 0.0 && !ps.pi_star.row(i).iter().any(|&v| v > 0.0) {
            return Err(Error::StructuralInfeasibility {
                axis: "row",
                index: i,
            });
        }
    }
    for j in 0..n {
        if ps.alpha[j] > 0.0 && !(0..n).any(|i| ps.pi_star[(i, j)] > 0.0) {
            return Err(Error::StructuralInfeasibility {
                axis: "column",
                index: j,
            });
        }
    }
    Ok(())
}

/// Rescales each row to its target; returns the largest cell change.
fn scale_rows(x: &mut SquareMatrix<f64>, target: &[f64]) -> f64 {
    let mut delta: f64 = 0.0;
    for (i, &t) in target.iter().enumerate() {
        let row = x.row_mut(i);
        let s: f64 = row.iter().sum();
        if s <= 0.0 {
            continue;
        }
        let f = t / s;
        for v in row.iter_mut() {
            let nv = *v * f;
            delta = delta.max((nv - *v).abs());
            *v = nv;
        }
    }
    delta
}

fn scale_cols(x: &mut SquareMatrix<f64>, target: &[f64]) -> f64 {
    let n = x.dim();
    let sums = x.col_sums();
    let factors: Vec<f64> = sums
        .iter()
        .zip(target)
        .map(|(&s, &t)| if s > 0.0 { t / s } else { 1.0 })
        .collect();
    let mut delta: f64 = 0.0;
    for i in 0..n {
        for (v, f) in x.row_mut(i).iter_mut().zip(&factors) {
            let nv = *v * f;
            delta = delta.max((nv - *v).abs());
            *v = nv;
        }
    }
    delta
}

pub fn ipf_run(ps: &ProbabilitySeed, tol: f64, max_iter: usize) -> Result<IpfResult> {
    ipf_run_ordered(ps, tol, max_iter, SweepOrder::RowsFirst)
}

pub fn ipf_run_ordered(
    ps: &ProbabilitySeed,
    tol: f64,
    max_iter: usize,
    order: SweepOrder,
) -> Result<IpfResult> {
    if tol.is_nan() || tol <= 0.0 || max_iter == 0 {
        return Err(Error::Config(format!(
            "IPF needs tol > 0 and max_iter >= 1 (got {tol}, {max_iter})"
        )));
    }
    check_support(ps)?;

    let mut x = ps.pi_star.clone();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let delta = match order {
            SweepOrder::RowsFirst => {
                let d = scale_rows(&mut x, &ps.rho);
                d.max(scale_cols(&mut x, &ps.alpha))
            }
            SweepOrder::ColumnsFirst => {
                let d = scale_cols(&mut x, &ps.alpha);
                d.max(scale_rows(&mut x, &ps.rho))
            }
        };
        iterations += 1;
        if delta < tol {
            converged = true;
            break;
        }
    }
    let (eps_row, eps_col) = margin_errors(&x, &ps.rho, &ps.alpha);
    Ok(IpfResult {
        pi: x,
        iterations,
        converged,
        eps_row,
        eps_col,
    })
}

/// Final integer trips for one week.
#[derive(Clone, Debug, PartialEq)]
pub struct WeeklyOD {
    pub week: usize,
    pub x: SquareMatrix<u64>,
}

/// Probabilities scaled by the total boarded, before rounding.
pub fn scale_to_trips(res: &IpfResult, total_boarded: u64) -> SquareMatrix<f64> {
    let total = total_boarded as f64;
    res.pi.map(|v| v * total)
}

/// Scales by the total boarded and rounds half away from zero. Exact zeros stay zero.
pub fn finalize(res: &IpfResult, total_boarded: u64, week: usize) -> WeeklyOD {
    WeeklyOD {
        week,
        x: scale_to_trips(res, total_boarded).map(|&v| round_count(v)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_direct_paths, Line, StationId};

    fn m(n: usize, v: &[f64]) -> SquareMatrix<f64> {
        SquareMatrix::from_vec(n, v.to_vec()).unwrap()
    }

    #[test]
    fn zero_fill_rules() {
        let d = build_direct_paths(
            &[Line::new("l", vec![StationId(0), StationId(1)]).unwrap()],
            3,
        )
        .unwrap();
        let mut mask = CellMask::filled(3, false);
        mask[(2, 0)] = true;
        let seed = m(3, &[5.0, 0.0, 0.0, 2.3, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let out = zero_fill(&seed, &d, &mask);
        assert_eq!(out[(0, 0)], 0.0);
        assert_eq!(out[(0, 1)], ZERO_CELL_FILL);
        assert_eq!(out[(1, 0)], 2.3);
        assert_eq!(out[(0, 2)], 0.0);
        assert_eq!(out[(2, 0)], ZERO_CELL_FILL);
    }

    #[test]
    fn normalization() {
        let seed = m(2, &[1.0, 1.0, 1.0, 1.0]);
        let ps = normalize(&seed, &[30.0, 70.0], &[490.0, 490.0], 0).unwrap();
        assert_eq!(ps.rho, vec![0.3, 0.7]);
        assert!(ps.pi_star.as_slice().iter().all(|&v| v == 0.25));
        assert_eq!(ps.alpha.iter().sum::<f64>(), 1.0);
        assert!(matches!(
            normalize(&seed, &[0.0, 0.0], &[1.0, 1.0], 3),
            Err(Error::DegenerateWeek {
                week: 3,
                what: "boarded"
            })
        ));
        assert!(normalize(&m(2, &[0.0; 4]), &[1.0, 1.0], &[1.0, 1.0], 0).is_err());
    }

    #[test]
    fn uniform_fixed_point_in_one_sweep() {
        let ps = normalize(&m(2, &[1.0; 4]), &[1.0, 1.0], &[1.0, 1.0], 0).unwrap();
        let res = ipf_run(&ps, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(res.iterations, 1);
        assert!(res.converged);
        assert!(res.pi.as_slice().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn empty_row_with_positive_margin_is_infeasible() {
        let ps = ProbabilitySeed {
            pi_star: m(2, &[0.0, 0.0, 0.5, 0.5]),
            rho: vec![0.5, 0.5],
            alpha: vec![0.5, 0.5],
        };
        assert!(matches!(
            ipf_run(&ps, 1e-10, 10),
            Err(Error::StructuralInfeasibility {
                axis: "row",
                index: 0
            })
        ));
    }

    #[test]
    fn max_iter_caps_without_convergence() {
        let ps = normalize(&m(2, &[1.0, 2.0, 3.0, 4.0]), &[3.0, 7.0], &[4.0, 6.0], 0).unwrap();
        let res = ipf_run(&ps, 1e-300, 3).unwrap();
        assert_eq!(res.iterations, 3);
        assert!(!res.converged);
    }

    #[test]
    fn finalize_rounding() {
        let res = IpfResult {
            pi: m(2, &[0.25; 4]),
            iterations: 1,
            converged: true,
            eps_row: 0.0,
            eps_col: 0.0,
        };
        assert!(finalize(&res, 100, 0).x.as_slice().iter().all(|&v| v == 25));
        let res = IpfResult {
            pi: m(2, &[0.005, 0.0, 0.4, 0.6]),
            ..res
        };
        let od = finalize(&res, 100, 4);
        assert_eq!(od.x.as_slice(), &[1, 0, 40, 60]);
        assert_eq!(od.week, 4);
    }
}
