//! Per-campaign summaries (SD and 95% CI per group) and the
//! modified-vs-unmodified Levene comparison.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{Group, Metric, MetricSample};
use super::BenchIoError;
use crate::stats::{levene_test, Centering, SampleSet, StatsError, TestReport};

pub const CI_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub group: Group,
    pub campaign: u32,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl SummaryRow {
    /// Row label in the `M 1`, `UM 1`, ... style.
    pub fn label(&self) -> String {
        format!("{} {}", self.group, self.campaign)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeveneSummary {
    #[serde(rename = "W")]
    pub w: f64,
    pub p: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub metric: Metric,
    pub campaign: u32,
    pub rows: Vec<SummaryRow>,
    pub levene: LeveneSummary,
}

fn group_values(
    samples: &[MetricSample],
    metric: Metric,
    group: Group,
    campaign: u32,
) -> SampleSet {
    let values = samples
        .iter()
        .filter(|s| s.group == group && s.campaign == campaign)
        .map(|s| metric.value(s))
        .collect();
    SampleSet::new(format!("{group} {campaign}"), values)
}

pub fn summarize_group(
    samples: &[MetricSample],
    metric: Metric,
    group: Group,
    campaign: u32,
) -> Result<SummaryRow, StatsError> {
    let set = group_values(samples, metric, group, campaign);
    if set.len() < 2 {
        return Err(StatsError::InsufficientData(format!(
            "{} {} has {} samples, need at least 2",
            set.label,
            metric.column(),
            set.len()
        )));
    }
    let (ci_low, ci_high) = set.confidence_interval(CI_LEVEL)?;
    Ok(SummaryRow {
        group,
        campaign,
        n: set.len(),
        mean: set.mean()?,
        sd: set.sd()?,
        ci_low,
        ci_high,
    })
}

fn campaigns(samples: &[MetricSample]) -> BTreeSet<u32> {
    samples.iter().map(|s| s.campaign).collect()
}

/// One row per (campaign, group) present, ordered M 1, UM 1, M 2, ...
pub fn summarize(samples: &[MetricSample], metric: Metric) -> Result<Vec<SummaryRow>, StatsError> {
    let mut rows = Vec::new();
    for campaign in campaigns(samples) {
        for group in [Group::Modified, Group::Unmodified] {
            if samples.iter().any(|s| s.campaign == campaign && s.group == group) {
                rows.push(summarize_group(samples, metric, group, campaign)?);
            }
        }
    }
    Ok(rows)
}

/// Mean-centered Levene test of M against UM within one campaign.
pub fn compare_groups(
    samples: &[MetricSample],
    metric: Metric,
    campaign: u32,
    alpha: f64,
) -> Result<TestReport, StatsError> {
    let modified = group_values(samples, metric, Group::Modified, campaign);
    let unmodified = group_values(samples, metric, Group::Unmodified, campaign);
    for set in [&modified, &unmodified] {
        if set.len() < 2 {
            return Err(StatsError::InsufficientData(format!(
                "campaign {campaign}: group {} has {} samples, need at least 2",
                set.label.split(' ').next().unwrap_or_default(),
                set.len()
            )));
        }
    }
    levene_test(&[modified.values, unmodified.values], Centering::Mean, alpha)
}

/// Builds one report per metric and campaign. With `campaign` set only that
/// campaign is reported, and it must exist.
pub fn analyze_bench(
    samples: &[MetricSample],
    metrics: &[Metric],
    campaign: Option<u32>,
    alpha: f64,
) -> Result<Vec<BenchReport>, BenchIoError> {
    let selected: Vec<u32> = match campaign {
        Some(c) => vec![c],
        None => campaigns(samples).into_iter().collect(),
    };
    if selected.is_empty() {
        return Err(StatsError::InsufficientData("no samples".into()).into());
    }
    let mut reports = Vec::new();
    for &metric in metrics {
        for &c in &selected {
            let levene = compare_groups(samples, metric, c, alpha)?;
            let rows = vec![
                summarize_group(samples, metric, Group::Modified, c)?,
                summarize_group(samples, metric, Group::Unmodified, c)?,
            ];
            reports.push(BenchReport {
                metric,
                campaign: c,
                rows,
                levene: LeveneSummary {
                    w: levene.statistic,
                    p: levene.p_value.expect("Levene reports a p-value"),
                    reject: levene.reject_null,
                },
            });
        }
    }
    Ok(reports)
}

pub fn format_sd(sd: f64) -> String {
    format!("±{sd:.4}")
}

pub fn format_value(v: f64) -> String {
    format!("{v:.4}")
}

/// Human-readable tables, one per metric, followed by the Levene lines.
pub fn render_text(reports: &[BenchReport]) -> String {
    let mut out = String::new();
    let mut metrics: Vec<Metric> = Vec::new();
    for r in reports {
        if !metrics.contains(&r.metric) {
            metrics.push(r.metric);
        }
    }
    for (i, metric) in metrics.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let of_metric: Vec<&BenchReport> = reports.iter().filter(|r| r.metric == *metric).collect();
        let _ = writeln!(out, "{}", metric.title());
        let _ = writeln!(
            out,
            "{:<6} | {:>5} | {:>14} | {:>12} | {:>14} | {:>14}",
            "Run", "n", "Mean", "SD", "95% CI low", "95% CI high"
        );
        let _ = writeln!(out, "{}", "-".repeat(6 + 5 + 14 * 3 + 12 + 5 * 3));
        for row in of_metric.iter().flat_map(|r| &r.rows) {
            let _ = writeln!(
                out,
                "{:<6} | {:>5} | {:>14} | {:>12} | {:>14} | {:>14}",
                row.label(),
                row.n,
                format_value(row.mean),
                format_sd(row.sd),
                format_value(row.ci_low),
                format_value(row.ci_high)
            );
        }
        for r in &of_metric {
            let _ = writeln!(
                out,
                "Levene (mean-centered), Run {}: W = {:.4}, p-value = {:.4}, {}",
                r.campaign,
                r.levene.w,
                r.levene.p,
                if r.levene.reject {
                    "variances differ"
                } else {
                    "no significant difference"
                }
            );
        }
    }
    out
}

pub fn render_json(reports: &[BenchReport]) -> String {
    let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
    s.push('\n');
    s
}
