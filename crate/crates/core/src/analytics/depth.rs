use crate::error::{Error, Result};

/// Fences sit this many band ranges beyond the central envelope.
pub const BOXPLOT_INFLATION: f64 = 1.5;

fn pairs(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Modified band depth with bands formed by pairs of curves.
///
/// At each grid point a pair fails to cover curve `i` only when both members
/// are strictly below or both strictly above it.
pub fn modified_band_depth(curves: &[Vec<f64>]) -> Vec<f64> {
    let n = curves.len();
    let t_len = curves.first().map_or(0, Vec::len);
    if n < 2 || t_len == 0 {
        return vec![1.0; n];
    }
    let total = pairs(n) as f64 * t_len as f64;
    let mut depth = vec![0.0; n];
    let mut column = vec![0.0; n];
    for t in 0..t_len {
        for (c, curve) in column.iter_mut().zip(curves) {
            *c = curve[t];
        }
        let mut sorted = column.clone();
        sorted.sort_by(f64::total_cmp);
        for (d, &v) in depth.iter_mut().zip(&column) {
            let below = sorted.partition_point(|&s| s < v);
            let above = n - sorted.partition_point(|&s| s <= v);
            *d += (pairs(n) - pairs(below) - pairs(above)) as f64;
        }
    }
    depth.iter().map(|d| d / total).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutlierReport {
    pub depth: Vec<f64>,
    pub outlier: Vec<bool>,
    /// Curves forming the central region, deepest first.
    pub central: Vec<usize>,
    pub central_lower: Vec<f64>,
    pub central_upper: Vec<f64>,
    pub fence_lower: Vec<f64>,
    pub fence_upper: Vec<f64>,
}

impl OutlierReport {
    pub fn outlier_count(&self) -> usize {
        self.outlier.iter().filter(|&&o| o).count()
    }
}

/// Functional boxplot over equal-length curves.
///
/// The central region holds the deepest half of the curves (rounded up, ties
/// to the lower index). A curve is flagged when it leaves the inflated
/// envelope at any grid point.
pub fn functional_boxplot(curves: &[Vec<f64>]) -> Result<OutlierReport> {
    let n = curves.len();
    if n < 3 {
        return Err(Error::Domain(format!(
            "functional boxplot needs at least 3 curves, got {n}"
        )));
    }
    let t_len = curves[0].len();
    if let Some(c) = curves.iter().find(|c| c.len() != t_len) {
        return Err(Error::DimensionMismatch {
            expected: t_len,
            got: c.len(),
        });
    }
    let depth = modified_band_depth(curves);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| depth[b].total_cmp(&depth[a]).then(a.cmp(&b)));
    let central: Vec<usize> = order[..n.div_ceil(2)].to_vec();

    let mut central_lower = vec![f64::INFINITY; t_len];
    let mut central_upper = vec![f64::NEG_INFINITY; t_len];
    for &c in &central {
        for t in 0..t_len {
            central_lower[t] = central_lower[t].min(curves[c][t]);
            central_upper[t] = central_upper[t].max(curves[c][t]);
        }
    }
    let range: Vec<f64> = central_upper
        .iter()
        .zip(&central_lower)
        .map(|(u, l)| u - l)
        .collect();
    let fence_lower: Vec<f64> = central_lower
        .iter()
        .zip(&range)
        .map(|(l, r)| l - BOXPLOT_INFLATION * r)
        .collect();
    let fence_upper: Vec<f64> = central_upper
        .iter()
        .zip(&range)
        .map(|(u, r)| u + BOXPLOT_INFLATION * r)
        .collect();
    let outlier = curves
        .iter()
        .map(|c| (0..t_len).any(|t| c[t] < fence_lower[t] || c[t] > fence_upper[t]))
        .collect();
    Ok(OutlierReport {
        depth,
        outlier,
        central,
        central_lower,
        central_upper,
        fence_lower,
        fence_upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn middle_constant_is_deepest() {
        let d = modified_band_depth(&[vec![0.0; 5], vec![1.0; 5], vec![2.0; 5]]);
        assert!(d[1] > d[0] && d[1] > d[2]);
        assert_eq!(d[1], 1.0);
        assert!((d[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn far_curve_flagged() {
        let mut curves: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.1; 4]).collect();
        curves.push(vec![5.0, 5.2, 5.1, 5.0]);
        let r = functional_boxplot(&curves).unwrap();
        assert_eq!(r.outlier_count(), 1);
        assert!(r.outlier[6]);
        assert_eq!(r.central.len(), 4);
    }

    #[test]
    fn too_few_curves() {
        assert!(functional_boxplot(&[vec![1.0], vec![2.0]]).is_err());
    }
}
