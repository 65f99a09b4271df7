//! Penalized cubic B-spline smoothing on the integer week grid.
//!
//! Knots are clamped at both ends of `[0, W-1]` with equally spaced interior
//! knots. The roughness penalty is the exact integral of products of second
//! derivatives.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_BASIS_CANDIDATES: [usize; 9] = [4, 5, 6, 7, 8, 9, 10, 11, 12];
pub const DEFAULT_PENALTY_GRID: [f64; 9] = [0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0];

const DEGREE: usize = 3;
/// Smallest accepted ratio of extreme Cholesky pivots, squared.
const MIN_RCOND: f64 = 1e-13;
/// Candidates whose residual degrees of freedom fall below this are skipped.
const MIN_RESIDUAL_DF: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct CubicBSplineBasis {
    knots: Vec<f64>,
    n_points: usize,
}

fn safe_div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

impl CubicBSplineBasis {
    /// `count` basis functions on the grid `0..n_points`.
    pub fn new(count: usize, n_points: usize) -> Result<Self> {
        if count < DEGREE + 1 {
            return Err(Error::Config(format!(
                "basis count must be >= 4, got {count}"
            )));
        }
        if n_points < 2 {
            return Err(Error::Config(format!(
                "smoothing needs at least 2 grid points, got {n_points}"
            )));
        }
        let upper = (n_points - 1) as f64;
        let interior = count - DEGREE - 1;
        let mut knots = vec![0.0; DEGREE + 1];
        knots.extend((1..=interior).map(|k| upper * k as f64 / (interior + 1) as f64));
        knots.extend(std::iter::repeat_n(upper, DEGREE + 1));
        Ok(Self { knots, n_points })
    }

    pub fn count(&self) -> usize {
        self.knots.len() - DEGREE - 1
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    fn upper(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Cox-de Boor values of all basis functions of `degree` at `x`.
    fn values(&self, degree: usize, x: f64) -> Vec<f64> {
        let t = &self.knots;
        let m = t.len() - 1;
        let mut b = vec![0.0; m];
        // The right end belongs to the last non-degenerate interval.
        let span = if x >= self.upper() {
            (0..m).rev().find(|&i| t[i] < t[i + 1])
        } else {
            (0..m).find(|&i| t[i] <= x && x < t[i + 1])
        };
        if let Some(s) = span {
            b[s] = 1.0;
        }
        for p in 1..=degree {
            for i in 0..m - p {
                let left = safe_div(x - t[i], t[i + p] - t[i]) * b[i];
                let right = safe_div(t[i + p + 1] - x, t[i + p + 1] - t[i + 1]) * b[i + 1];
                b[i] = left + right;
            }
        }
        b.truncate(m - degree);
        b
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        self.values(DEGREE, x)
    }

    /// Second derivatives of all cubic basis functions at `x`.
    pub fn second_derivative(&self, x: f64) -> Vec<f64> {
        let t = &self.knots;
        let lin = self.values(1, x);
        let quad: Vec<f64> = (0..lin.len() - 1)
            .map(|i| {
                2.0 * (safe_div(lin[i], t[i + 2] - t[i])
                    - safe_div(lin[i + 1], t[i + 3] - t[i + 1]))
            })
            .collect();
        (0..quad.len() - 1)
            .map(|i| {
                3.0 * (safe_div(quad[i], t[i + 3] - t[i])
                    - safe_div(quad[i + 1], t[i + 4] - t[i + 1]))
            })
            .collect()
    }

    /// Design matrix, one row per grid point.
    pub fn design(&self) -> DMatrix<f64> {
        let k = self.count();
        let mut b = DMatrix::zeros(self.n_points, k);
        for r in 0..self.n_points {
            for (c, v) in self.eval(r as f64).into_iter().enumerate() {
                b[(r, c)] = v;
            }
        }
        b
    }

    /// `R[k][l] = integral of B_k'' B_l''` over the domain.
    ///
    /// Second derivatives are linear on each knot interval, so two-point
    /// Gauss-Legendre quadrature is exact.
    pub fn penalty(&self) -> DMatrix<f64> {
        let k = self.count();
        let mut r = DMatrix::zeros(k, k);
        let offset = 1.0 / 3f64.sqrt();
        for w in self.knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for x in [mid - half * offset, mid + half * offset] {
                let d = self.second_derivative(x);
                for i in 0..k {
                    if d[i] == 0.0 {
                        continue;
                    }
                    for j in 0..k {
                        r[(i, j)] += half * d[i] * d[j];
                    }
                }
            }
        }
        r
    }
}

/// A fixed basis and penalty applied to a family of curves.
#[derive(Clone, Debug)]
pub struct PenalizedFit {
    pub basis: CubicBSplineBasis,
    pub penalty: f64,
    design: DMatrix<f64>,
    chol: Cholesky<f64, nalgebra::Dyn>,
    /// Trace of the hat matrix.
    pub effective_df: f64,
}

impl PenalizedFit {
    pub fn new(basis: CubicBSplineBasis, penalty: f64) -> Result<Self> {
        if !penalty.is_finite() || penalty < 0.0 {
            return Err(Error::Config(format!(
                "penalty must be finite and >= 0, got {penalty}"
            )));
        }
        let design = basis.design();
        let gram = design.transpose() * &design;
        let system = &gram + basis.penalty() * penalty;
        let chol = Cholesky::new(system).ok_or_else(|| {
            Error::Conditioning(format!(
                "penalized system with {} basis functions and penalty {penalty} is not positive definite",
                basis.count()
            ))
        })?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| {
            (lo.min(d.abs()), hi.max(d.abs()))
        });
        if (lo / hi).powi(2) < MIN_RCOND {
            return Err(Error::Conditioning(format!(
                "penalized system with {} basis functions and penalty {penalty} is ill-conditioned",
                basis.count()
            )));
        }
        let effective_df = chol.solve(&gram).trace();
        Ok(Self {
            basis,
            penalty,
            design,
            chol,
            effective_df,
        })
    }

    pub fn coefficients(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.basis.n_points() {
            return Err(Error::DimensionMismatch {
                expected: self.basis.n_points(),
                got: y.len(),
            });
        }
        let rhs = self.design.transpose() * DVector::from_column_slice(y);
        Ok(self.chol.solve(&rhs).iter().copied().collect())
    }

    pub fn fitted(&self, coefficients: &[f64]) -> Vec<f64> {
        (&self.design * DVector::from_column_slice(coefficients))
            .iter()
            .copied()
            .collect()
    }

    pub fn smooth(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.fitted(&self.coefficients(y)?))
    }

    /// `n * SSE / (n - df)^2`; infinite when no residual degrees of freedom remain.
    pub fn gcv(&self, y: &[f64], fitted: &[f64]) -> f64 {
        let n = y.len() as f64;
        let sse: f64 = y.iter().zip(fitted).map(|(a, b)| (a - b).powi(2)).sum();
        let rdf = n - self.effective_df;
        if rdf < MIN_RESIDUAL_DF {
            f64::INFINITY
        } else {
            n * sse / (rdf * rdf)
        }
    }
}

/// Penalized fit of every curve with a fixed basis count and penalty.
pub fn fit_penalized(
    curves: &[Vec<f64>],
    basis_count: usize,
    penalty: f64,
) -> Result<SmoothedCurves> {
    let n_points = curves.first().map_or(0, Vec::len);
    let fit = PenalizedFit::new(CubicBSplineBasis::new(basis_count, n_points)?, penalty)?;
    let mut coefficients = Vec::with_capacity(curves.len());
    let mut fitted = Vec::with_capacity(curves.len());
    let mut gcv_sum = 0.0;
    for c in curves {
        let coef = fit.coefficients(c)?;
        let f = fit.fitted(&coef);
        gcv_sum += fit.gcv(c, &f);
        coefficients.push(coef);
        fitted.push(f);
    }
    Ok(SmoothedCurves {
        basis_count,
        penalty,
        effective_df: fit.effective_df,
        mean_gcv: gcv_sum / curves.len().max(1) as f64,
        coefficients,
        fitted,
        grid: Vec::new(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoothedCurves {
    pub basis_count: usize,
    pub penalty: f64,
    pub effective_df: f64,
    pub mean_gcv: f64,
    pub coefficients: Vec<Vec<f64>>,
    /// Fitted values on the week grid, one row per curve.
    pub fitted: Vec<Vec<f64>>,
    /// Every evaluated `(basis_count, penalty, mean_gcv)`.
    pub grid: Vec<(usize, f64, f64)>,
}

/// Selects basis count and penalty jointly by mean GCV over all curves.
///
/// Ties keep the earliest candidate in `basis_candidates` x `penalty_grid` order.
pub fn smooth_curves(
    curves: &[Vec<f64>],
    basis_candidates: &[usize],
    penalty_grid: &[f64],
) -> Result<SmoothedCurves> {
    if curves.is_empty() {
        return Err(Error::Domain("no curves to smooth".into()));
    }
    let n_points = curves[0].len();
    if let Some(c) = curves.iter().find(|c| c.len() != n_points) {
        return Err(Error::DimensionMismatch {
            expected: n_points,
            got: c.len(),
        });
    }
    if basis_candidates.is_empty() || penalty_grid.is_empty() {
        return Err(Error::Config("empty basis or penalty grid".into()));
    }
    if let Some(&k) = basis_candidates.iter().find(|&&k| k > n_points) {
        return Err(Error::Config(format!(
            "basis candidate {k} exceeds the number of weeks ({n_points})"
        )));
    }

    let mut best: Option<SmoothedCurves> = None;
    let mut grid = Vec::with_capacity(basis_candidates.len() * penalty_grid.len());
    for &k in basis_candidates {
        for &lambda in penalty_grid {
            let cand = fit_penalized(curves, k, lambda)?;
            grid.push((k, lambda, cand.mean_gcv));
            if cand.mean_gcv.is_finite() && best.as_ref().is_none_or(|b| cand.mean_gcv < b.mean_gcv)
            {
                best = Some(cand);
            }
        }
    }
    let mut best = best.ok_or_else(|| {
        Error::Conditioning("no smoothing candidate leaves residual degrees of freedom".into())
    })?;
    best.grid = grid;
    Ok(best)
}
