use super::{check_alpha, StatsError, TestKind, TestReport};

/// The asymptotic critical value is only used for `n > KS_MIN_SAMPLES`.
pub const KS_MIN_SAMPLES: usize = 50;

/// Tabulated asymptotic coefficients `c(alpha)` with `D_crit = c / sqrt(n)`.
const KS_COEFFICIENTS: [(f64, f64); 7] = [
    (0.20, 1.07),
    (0.10, 1.22),
    (0.05, 1.36),
    (0.025, 1.48),
    (0.01, 1.63),
    (0.005, 1.73),
    (0.001, 1.95),
];

/// `c(alpha)` for the one-sample asymptotic critical value. Tabulated levels
/// use the customary two-decimal coefficients; other levels fall back to
/// `sqrt(-ln(alpha / 2) / 2)`.
pub fn ks_critical_coefficient(alpha: f64) -> Result<f64, StatsError> {
    check_alpha(alpha)?;
    Ok(KS_COEFFICIENTS
        .iter()
        .find(|(a, _)| *a == alpha)
        .map(|(_, c)| *c)
        .unwrap_or_else(|| (-(alpha / 2.0).ln() / 2.0).sqrt()))
}

/// `D = sup |F_n(x) - F(x)|` for a continuous uniform on `[lo, hi]`.
///
/// Evaluated at the sorted samples as
/// `max_i max(i/n - F(x_(i)), F(x_(i)) - (i-1)/n)`.
pub fn ks_statistic(values: &[f64], lo: f64, hi: f64) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::InsufficientData("KS statistic of an empty sample".into()));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(StatsError::InvalidArgument(format!(
            "uniform bounds must satisfy lo < hi, got [{lo}, {hi}]"
        )));
    }
    if let Some(v) = values.iter().find(|v| !(lo..=hi).contains(*v)) {
        return Err(StatsError::InvalidArgument(format!(
            "sample {v} lies outside [{lo}, {hi}]"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let width = hi - lo;
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let cdf = (x - lo) / width;
            let above = (i + 1) as f64 / n - cdf;
            let below = cdf - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max))
}

/// One-sample KS test against the continuous uniform on `[lo, hi]`, using the
/// asymptotic critical value `c(alpha) / sqrt(n)`. Requires `n > 50`.
pub fn ks_uniform_test(
    values: &[f64],
    lo: f64,
    hi: f64,
    alpha: f64,
) -> Result<TestReport, StatsError> {
    let coefficient = ks_critical_coefficient(alpha)?;
    let n = values.len();
    if n <= KS_MIN_SAMPLES {
        return Err(StatsError::OutOfRegime { n });
    }
    let statistic = ks_statistic(values, lo, hi)?;
    let threshold = coefficient / (n as f64).sqrt();
    Ok(TestReport {
        test: TestKind::KsUniform,
        statistic,
        threshold: Some(threshold),
        p_value: None,
        alpha,
        reject_null: statistic > threshold,
        n: vec![n],
    })
}
