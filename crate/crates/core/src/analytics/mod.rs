//! Anomaly indicators over a sequence of weekly OD matrices.

mod depth;
mod indicators;
mod spline;

pub use depth::{functional_boxplot, modified_band_depth, OutlierReport, BOXPLOT_INFLATION};
pub use indicators::{
    label_weeks, mean_strength_series, mse_series, strength_curves, strength_from_margins,
    EventAnnotation, IndicatorSeries, StrengthCurves,
};
pub use spline::{
    fit_penalized, smooth_curves, CubicBSplineBasis, PenalizedFit, SmoothedCurves,
    DEFAULT_BASIS_CANDIDATES, DEFAULT_PENALTY_GRID,
};
