use serde::{Deserialize, Serialize};

use super::{check_alpha, f_upper_tail, mean, StatsError, TestKind, TestReport};

/// Group center used for the absolute deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Centering {
    /// Classic Levene.
    #[default]
    Mean,
    /// Brown–Forsythe variant.
    Median,
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 0 {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    }
}

/// Levene's test for equal variances across `groups`.
///
/// `W = (N - k) / (k - 1) * Σ n_i (Z̄_i - Z̄)² / ΣΣ (Z_ij - Z̄_i)²` with
/// `Z_ij = |Y_ij - center_i|`, compared against `F(k - 1, N - k)`.
pub fn levene_test<G: AsRef<[f64]>>(
    groups: &[G],
    centering: Centering,
    alpha: f64,
) -> Result<TestReport, StatsError> {
    check_alpha(alpha)?;
    if groups.len() < 2 {
        return Err(StatsError::InsufficientData(format!(
            "Levene's test needs at least 2 groups, got {}",
            groups.len()
        )));
    }
    if let Some(small) = groups.iter().find(|g| g.as_ref().len() < 2) {
        return Err(StatsError::InsufficientData(format!(
            "every group needs at least 2 values, found one with {}",
            small.as_ref().len()
        )));
    }
    if groups.iter().flat_map(|g| g.as_ref()).any(|v| !v.is_finite()) {
        return Err(StatsError::InvalidArgument("non-finite observation".into()));
    }

    let deviations: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let g = g.as_ref();
            let center = match centering {
                Centering::Mean => mean(g).expect("group is non-empty"),
                Centering::Median => median(g),
            };
            g.iter().map(|y| (y - center).abs()).collect()
        })
        .collect();

    let k = deviations.len();
    let total: usize = deviations.iter().map(Vec::len).sum();
    let group_means: Vec<f64> = deviations
        .iter()
        .map(|z| mean(z).expect("group is non-empty"))
        .collect();
    let all: Vec<f64> = deviations.iter().flatten().copied().collect();
    let grand_mean = mean(&all).expect("groups are non-empty");

    let between: f64 = deviations
        .iter()
        .zip(&group_means)
        .map(|(z, zm)| z.len() as f64 * (zm - grand_mean).powi(2))
        .sum();
    let within: f64 = deviations
        .iter()
        .zip(&group_means)
        .flat_map(|(z, zm)| z.iter().map(move |v| (v - zm).powi(2)))
        .sum();

    // Each deviation carries rounding error on the order of eps * max|y|, so
    // sums of squares below that floor are treated as exactly zero.
    let magnitude = groups
        .iter()
        .flat_map(|g| g.as_ref())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let noise_floor = total as f64 * (16.0 * f64::EPSILON * magnitude).powi(2);

    let d1 = (k - 1) as u64;
    let d2 = (total - k) as u64;
    let (statistic, p_value) = if within <= noise_floor {
        if between <= noise_floor {
            (0.0, 1.0)
        } else {
            (f64::INFINITY, 0.0)
        }
    } else {
        let w = (d2 as f64 / d1 as f64) * between / within;
        (w, f_upper_tail(w, d1, d2)?)
    };

    Ok(TestReport {
        test: TestKind::Levene { centering },
        statistic,
        threshold: None,
        p_value: Some(p_value),
        alpha,
        reject_null: p_value < alpha,
        n: deviations.iter().map(Vec::len).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_have_zero_within_variance_despite_rounding() {
        // With two values per group both deviations are equal, so W is infinite
        // regardless of the rounding in the group mean.
        let a = [0.0, 0.0];
        let b = [-41.842948912273755, -88.82951050155454];
        for scale in [1.0, 0.01, 37.5] {
            let sa: Vec<f64> = a.iter().map(|v| v * scale).collect();
            let sb: Vec<f64> = b.iter().map(|v| v * scale).collect();
            let r = levene_test(&[sa, sb], Centering::Mean, 0.05).unwrap();
            assert_eq!(r.statistic, f64::INFINITY);
            assert_eq!(r.p_value, Some(0.0));
        }
    }

    #[test]
    fn identical_groups() {
        let g = [1.0, 4.0, 2.5, 8.0];
        let r = levene_test(&[g, g], Centering::Mean, 0.05).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, Some(1.0));
        assert!(!r.reject_null);
        assert_eq!(r.n, vec![4, 4]);
    }

    #[test]
    fn scipy_reference_two_groups() {
        // scipy.stats.levene([1..5], [10..50], center='mean'); median agrees
        // here because both groups are symmetric.
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [10.0, 20.0, 30.0, 40.0, 50.0];
        for c in [Centering::Mean, Centering::Median] {
            let r = levene_test(&[&a[..], &b[..]], c, 0.05).unwrap();
            assert!((r.statistic - 8.248939179632247).abs() < 1e-9);
            assert!((r.p_value.unwrap() - 0.020761963750463346).abs() < 1e-9);
            assert!(r.reject_null);
        }
    }

    #[test]
    fn scipy_reference_three_groups() {
        let a = [8.88, 9.12, 9.04, 8.98, 9.00, 9.08, 9.01, 8.85, 9.06, 8.99];
        let b = [8.88, 8.95, 9.29, 9.44, 9.15, 9.58, 8.36, 9.18, 8.67, 9.05];
        let c = [8.95, 9.12, 8.95, 8.85, 9.03, 8.84, 9.07, 8.98, 8.86, 8.98];
        let mean = levene_test(&[a, b, c], Centering::Mean, 0.05).unwrap();
        assert!((mean.statistic - 7.905194483442054).abs() < 1e-9);
        assert!((mean.p_value.unwrap() - 0.001983795817472731).abs() < 1e-9);
        let median = levene_test(&[a, b, c], Centering::Median, 0.05).unwrap();
        assert!((median.statistic - 7.584952754501659).abs() < 1e-9);
        assert!((median.p_value.unwrap() - 0.002431505967249681).abs() < 1e-9);
    }

    #[test]
    fn location_shift_invariance() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [10.0, 20.0, 30.0, 40.0, 50.0];
        let shifted: Vec<f64> = a.iter().map(|v| v + 1000.0).collect();
        let r1 = levene_test(&[&a[..], &b[..]], Centering::Mean, 0.05).unwrap();
        let r2 = levene_test(&[&shifted[..], &b[..]], Centering::Mean, 0.05).unwrap();
        assert_eq!(r1.statistic, r2.statistic);
    }

    #[test]
    fn zero_within_variance() {
        // |Y - mean| is constant inside each group but differs between groups.
        let r = levene_test(&[[0.0, 2.0], [0.0, 4.0]], Centering::Mean, 0.05).unwrap();
        assert_eq!(r.statistic, f64::INFINITY);
        assert_eq!(r.p_value, Some(0.0));
        assert!(r.reject_null);
        let r = levene_test(&[[5.0, 5.0], [1.0, 1.0]], Centering::Mean, 0.05).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, Some(1.0));
    }

    #[test]
    fn degenerate_inputs() {
        let one = [[1.0, 2.0]];
        assert!(matches!(
            levene_test(&one, Centering::Mean, 0.05),
            Err(StatsError::InsufficientData(_))
        ));
        assert!(matches!(
            levene_test(&[&[1.0, 2.0][..], &[3.0][..]], Centering::Mean, 0.05),
            Err(StatsError::InsufficientData(_))
        ));
        assert!(matches!(
            levene_test(&[[1.0, 2.0], [3.0, f64::NAN]], Centering::Mean, 0.05),
            Err(StatsError::InvalidArgument(_))
        ));
        assert!(levene_test(&[[1.0, 2.0], [3.0, 5.0]], Centering::Mean, 1.5).is_err());
    }
}
