//! Benchmark metric files, address logs and the summary reports built on them.

pub mod addrlog;
pub mod metrics;
pub mod report;

use thiserror::Error;

use crate::stats::StatsError;

pub use addrlog::{read_address_log, records_to_entries, write_address_log, AddressLogEntry, LogRegion};
pub use metrics::{parse_metrics, write_metrics, Group, Metric, MetricSample, METRICS_HEADER};
pub use report::{
    analyze_bench, compare_groups, render_json, render_text, summarize, summarize_group,
    BenchReport, LeveneSummary, SummaryRow,
};

#[derive(Debug, Error)]
pub enum BenchIoError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BenchIoError {
    pub(crate) fn parse(line: u64, message: impl Into<String>) -> Self {
        BenchIoError::Parse {
            line,
            message: message.into(),
        }
    }
}
