//! Householder QR least squares for tall, narrow design matrices.

/// Solution of `min ||X b - y||` for a column-major design.
#[derive(Clone, Debug, PartialEq)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Upper-triangular factor, row-major `p x p`.
    pub r: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankDeficient {
    /// First column whose reflected diagonal fell below the rank threshold.
    pub column: usize,
}

/// Relative threshold on `|R_kk|` against the column norm of the original design.
pub const RANK_TOL: f64 = 1e-10;

/// Solves least squares by Householder reflections applied in place.
///
/// `columns[k]` holds column `k` of the design; every column must have the
/// same length `n >= p`.
pub fn householder_lstsq(columns: &[Vec<f64>], y: &[f64]) -> Result<LeastSquares, RankDeficient> {
    let p = columns.len();
    let n = y.len();
    assert!(columns.iter().all(|c| c.len() == n), "ragged design");
    assert!(n >= p, "underdetermined system");

    let mut a: Vec<Vec<f64>> = columns.to_vec();
    let mut b = y.to_vec();
    let norms: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();

    for k in 0..p {
        let alpha_norm = a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if alpha_norm <= RANK_TOL * norms[k].max(f64::MIN_POSITIVE) {
            return Err(RankDeficient { column: k });
        }
        let alpha = if a[k][k] > 0.0 {
            -alpha_norm
        } else {
            alpha_norm
        };
        // v = x - alpha e1, stored over a[k][k..]
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for col in a.iter_mut().skip(k + 1) {
                let dot: f64 = v.iter().zip(&col[k..]).map(|(vi, ci)| vi * ci).sum();
                let f = 2.0 * dot / vnorm2;
                for (ci, vi) in col[k..].iter_mut().zip(&v) {
                    *ci -= f * vi;
                }
            }
            let dot: f64 = v.iter().zip(&b[k..]).map(|(vi, bi)| vi * bi).sum();
            let f = 2.0 * dot / vnorm2;
            for (bi, vi) in b[k..].iter_mut().zip(&v) {
                *bi -= f * vi;
            }
        }
        a[k][k] = alpha;
        for x in a[k][k + 1..].iter_mut() {
            *x = 0.0;
        }
    }

    let mut r = vec![0.0; p * p];
    for i in 0..p {
        for j in i..p {
            r[i * p + j] = a[j][i];
        }
    }
    let mut coef = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| r[i * p + j] * coef[j]).sum();
        coef[i] = (b[i] - s) / r[i * p + i];
    }

    let residuals = (0..n)
        .map(|row| {
            let fitted: f64 = columns.iter().zip(&coef).map(|(c, b)| c[row] * b).sum();
            y[row] - fitted
        })
        .collect();
    Ok(LeastSquares {
        coefficients: coef,
        residuals,
        r,
    })
}

/// Inverse of an upper-triangular row-major `p x p` matrix.
pub fn invert_upper(r: &[f64], p: usize) -> Vec<f64> {
    let mut inv = vec![0.0; p * p];
    for col in 0..p {
        for i in (0..=col).rev() {
            let rhs = if i == col { 1.0 } else { 0.0 };
            let s: f64 = (i + 1..=col).map(|j| r[i * p + j] * inv[j * p + col]).sum();
            inv[i * p + col] = (rhs - s) / r[i * p + i];
        }
    }
    inv
}
