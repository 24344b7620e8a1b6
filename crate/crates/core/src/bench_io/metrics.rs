//! Comma-separated benchmark metrics.
//!
//! ```text
//! run_id,group,campaign,run_time_ms,boot_time_ms,mem_mib
//! r1,M,2,8993.5,655.7,135.6
//! ```
//!
//! `group` is `M` (modified, randomized build) or `UM` (unmodified baseline).
//! `mem_mib` is the combined VMM + unikernel resident memory in MiB.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::BenchIoError;

pub const METRICS_HEADER: [&str; 6] = [
    "run_id",
    "group",
    "campaign",
    "run_time_ms",
    "boot_time_ms",
    "mem_mib",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "M")]
    Modified,
    #[serde(rename = "UM")]
    Unmodified,
}

impl Group {
    pub fn token(self) -> &'static str {
        match self {
            Group::Modified => "M",
            Group::Unmodified => "UM",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "M" => Ok(Group::Modified),
            "UM" => Ok(Group::Unmodified),
            other => Err(format!("unknown group `{other}` (expected M or UM)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    RunTime,
    BootTime,
    Memory,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::RunTime, Metric::BootTime, Metric::Memory];

    pub fn column(self) -> &'static str {
        match self {
            Metric::RunTime => "run_time_ms",
            Metric::BootTime => "boot_time_ms",
            Metric::Memory => "mem_mib",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Metric::RunTime => "Run Time (ms)",
            Metric::BootTime => "Boot Time (ms)",
            Metric::Memory => "Mem Usage (MiB)",
        }
    }

    pub fn value(self, sample: &MetricSample) -> f64 {
        match self {
            Metric::RunTime => sample.run_time_ms,
            Metric::BootTime => sample.boot_time_ms,
            Metric::Memory => sample.mem_mib,
        }
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "run_time_ms" | "run-time" | "run" => Ok(Metric::RunTime),
            "boot_time_ms" | "boot-time" | "boot" => Ok(Metric::BootTime),
            "mem_mib" | "memory" | "mem" => Ok(Metric::Memory),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub run_id: String,
    pub group: Group,
    pub campaign: u32,
    pub run_time_ms: f64,
    pub boot_time_ms: f64,
    pub mem_mib: f64,
}

impl MetricSample {
    fn validate(&self) -> Result<(), String> {
        for metric in Metric::ALL {
            let v = metric.value(self);
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{} must be a non-negative number, got {v}", metric.column()));
            }
        }
        Ok(())
    }
}

pub fn parse_metrics(input: &str) -> Result<Vec<MetricSample>, BenchIoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input.as_bytes());

    let mut records = reader.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(BenchIoError::parse(1, "missing header")),
    };
    if header.iter().ne(METRICS_HEADER) {
        return Err(BenchIoError::parse(
            1,
            format!("expected header `{}`", METRICS_HEADER.join(",")),
        ));
    }

    let mut samples = Vec::new();
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != METRICS_HEADER.len() {
            return Err(BenchIoError::parse(
                line,
                format!("expected {} fields, found {}", METRICS_HEADER.len(), record.len()),
            ));
        }
        let number = |idx: usize| -> Result<f64, BenchIoError> {
            record[idx].parse::<f64>().map_err(|_| {
                BenchIoError::parse(line, format!("{}: `{}` is not a number", METRICS_HEADER[idx], &record[idx]))
            })
        };
        let sample = MetricSample {
            run_id: record[0].to_string(),
            group: record[1].parse().map_err(|e| BenchIoError::parse(line, e))?,
            campaign: record[2].parse().map_err(|_| {
                BenchIoError::parse(line, format!("campaign: `{}` is not a non-negative integer", &record[2]))
            })?,
            run_time_ms: number(3)?,
            boot_time_ms: number(4)?,
            mem_mib: number(5)?,
        };
        sample.validate().map_err(|e| BenchIoError::parse(line, e))?;
        samples.push(sample);
    }
    Ok(samples)
}

pub fn write_metrics<W: Write>(samples: &[MetricSample], out: W) -> Result<(), BenchIoError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(METRICS_HEADER)?;
    for s in samples {
        s.validate().map_err(BenchIoError::InvalidRecord)?;
        writer.write_record([
            s.run_id.clone(),
            s.group.token().to_string(),
            s.campaign.to_string(),
            s.run_time_ms.to_string(),
            s.boot_time_ms.to_string(),
            s.mem_mib.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
