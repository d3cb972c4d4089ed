//! The statistics engine: descriptives, the exposure-shift fit, the two-way
//! bootstrap, cluster-robust least squares, and the framing-study regression
//! battery. All estimators consume raw rating rows — published tables and
//! figure data are derived views, never inputs.

pub mod battery;
pub mod bootstrap;
pub mod dataset;
pub mod describe;
pub mod offset_tilt;
pub mod ols;

/// Errors from the statistics engine.
#[derive(Debug, Clone, thiserror::Error)]
pub enum StatsError {
    #[error("insufficient data: {detail}")]
    InsufficientData { detail: String },
    #[error("degenerate design: {detail}")]
    DegenerateDesign { detail: String },
    #[error("rank-deficient design: {detail}")]
    RankDeficient { detail: String },
    #[error("cluster-robust inference needs at least two clusters")]
    SingleCluster,
    #[error("{dropped} of {total} bootstrap resamples were undefined")]
    TooManyDropped { dropped: usize, total: usize },
    #[error("bad data: {detail}")]
    BadData { detail: String },
}

/// Conventional significance stars: `*` p < 0.05, `**` p < 0.01,
/// `***` p < 0.001.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}
