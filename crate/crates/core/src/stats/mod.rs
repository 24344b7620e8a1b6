//! Evaluation statistics: sample SD, t-based confidence intervals, Levene's
//! variance test and the one-sample Kolmogorov–Smirnov uniformity test.

mod ks;
mod levene;
pub mod special;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ks::{ks_critical_coefficient, ks_statistic, ks_uniform_test, KS_MIN_SAMPLES};
pub use levene::{levene_test, Centering};
pub use special::{f_upper_tail, student_t_quantile};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{n} samples is outside the asymptotic regime (need more than {min})", min = KS_MIN_SAMPLES)]
    OutOfRegime { n: usize },
}

/// A labeled list of observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub label: String,
    pub values: Vec<f64>,
}

impl SampleSet {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> Result<f64, StatsError> {
        mean(&self.values)
    }

    pub fn sd(&self) -> Result<f64, StatsError> {
        sample_sd(&self.values)
    }

    pub fn confidence_interval(&self, level: f64) -> Result<(f64, f64), StatsError> {
        confidence_interval(&self.values, level)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Levene { centering: Centering },
    KsUniform,
}

/// Outcome of a hypothesis test at significance level `alpha`.
///
/// KS reports carry a critical `threshold`; Levene reports carry a `p_value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test: TestKind,
    pub statistic: f64,
    pub threshold: Option<f64>,
    pub p_value: Option<f64>,
    pub alpha: f64,
    pub reject_null: bool,
    /// Sample size of each group (one entry for single-sample tests).
    pub n: Vec<usize>,
}

pub(crate) fn check_alpha(alpha: f64) -> Result<(), StatsError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(StatsError::InvalidArgument(format!(
            "alpha must be in (0, 1), got {alpha}"
        )))
    }
}

/// Arithmetic mean, accumulated relative to the first value so that a
/// constant sample returns that constant exactly.
pub fn mean(values: &[f64]) -> Result<f64, StatsError> {
    let (&first, _) = values
        .split_first()
        .ok_or_else(|| StatsError::InsufficientData("mean of an empty sample".into()))?;
    let shift: f64 = values.iter().map(|v| v - first).sum();
    Ok(first + shift / values.len() as f64)
}

/// Sample standard deviation with the `n - 1` denominator.
pub fn sample_sd(values: &[f64]) -> Result<f64, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::InsufficientData(format!(
            "standard deviation needs at least 2 values, got {}",
            values.len()
        )));
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Ok((ss / (values.len() - 1) as f64).sqrt())
}

/// Two-sided Student-t interval `mean ± t * sd / sqrt(n)`.
pub fn confidence_interval(values: &[f64], level: f64) -> Result<(f64, f64), StatsError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::InvalidArgument(format!(
            "confidence level must be in (0, 1), got {level}"
        )));
    }
    let sd = sample_sd(values)?;
    let m = mean(values)?;
    let n = values.len();
    let t = student_t_quantile((1.0 + level) / 2.0, (n - 1) as u64)?;
    let half = t * sd / (n as f64).sqrt();
    Ok((m - half, m + half))
}
