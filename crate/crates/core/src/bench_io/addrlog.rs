//! Line-delimited address logs.
//!
//! Each line is `<instance_id> <region> <address>`, where `region` is one of
//! `base`, `heap`, `stack` and `address` is `0x` followed by exactly 16
//! lowercase hex digits.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::BenchIoError;
use crate::layout::LayoutRecord;
use crate::vas::VirtualAddress;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogRegion {
    Base,
    Heap,
    Stack,
}

impl LogRegion {
    pub fn token(self) -> &'static str {
        match self {
            LogRegion::Base => "base",
            LogRegion::Heap => "heap",
            LogRegion::Stack => "stack",
        }
    }
}

impl fmt::Display for LogRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for LogRegion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "base" => Ok(LogRegion::Base),
            "heap" => Ok(LogRegion::Heap),
            "stack" => Ok(LogRegion::Stack),
            other => Err(format!("unknown region `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddressLogEntry {
    pub instance_id: String,
    pub region: LogRegion,
    pub address: VirtualAddress,
}

/// Base, every heap segment, then the stack, for each record in order.
pub fn records_to_entries(records: &[LayoutRecord]) -> Vec<AddressLogEntry> {
    records
        .iter()
        .flat_map(|rec| {
            let id = format!("i{}", rec.instance_id);
            std::iter::once((LogRegion::Base, rec.program_base))
                .chain(rec.heap_segments.iter().map(|&a| (LogRegion::Heap, a)))
                .chain(std::iter::once((LogRegion::Stack, rec.stack_base)))
                .map(move |(region, address)| AddressLogEntry {
                    instance_id: id.clone(),
                    region,
                    address,
                })
        })
        .collect()
}

fn valid_instance_id(id: &str) -> bool {
    !id.is_empty() && !id.chars().any(char::is_whitespace)
}

pub fn write_address_log<W: Write>(
    entries: &[AddressLogEntry],
    mut out: W,
) -> Result<(), BenchIoError> {
    for e in entries {
        if !valid_instance_id(&e.instance_id) {
            return Err(BenchIoError::InvalidRecord(format!(
                "instance id {:?} must be non-empty and contain no whitespace",
                e.instance_id
            )));
        }
        writeln!(out, "{} {} {}", e.instance_id, e.region, e.address)?;
    }
    Ok(())
}

fn parse_address(token: &str) -> Result<VirtualAddress, String> {
    let digits = token
        .strip_prefix("0x")
        .ok_or_else(|| format!("address `{token}` lacks the 0x prefix"))?;
    if digits.len() != 16 || !digits.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
        return Err(format!(
            "address `{token}` is not 16 lowercase hex digits"
        ));
    }
    let value = u64::from_str_radix(digits, 16).map_err(|e| e.to_string())?;
    VirtualAddress::new(value).map_err(|e| e.to_string())
}

/// Parses a log; blank lines are skipped.
pub fn read_address_log(input: &str) -> Result<Vec<AddressLogEntry>, BenchIoError> {
    input
        .lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(idx, line)| {
            let lineno = idx as u64 + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [id, region, address] = fields[..] else {
                return Err(BenchIoError::parse(
                    lineno,
                    format!("expected 3 fields, found {}", fields.len()),
                ));
            };
            Ok(AddressLogEntry {
                instance_id: id.to_string(),
                region: region.parse().map_err(|e| BenchIoError::parse(lineno, e))?,
                address: parse_address(address).map_err(|e| BenchIoError::parse(lineno, e))?,
            })
        })
        .collect()
}
