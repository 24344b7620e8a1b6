//! Entropy sources and the 64-bit word composition used by the randomized
//! address paths.
//!
//! Three modes are available:
//!
//! * [`EntropySource::hardware`] reads the host operating system's entropy
//!   facility, so layouts differ from run to run as they would in deployment.
//! * [`EntropySource::seeded`] runs ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded
//!   through `SeedableRng::seed_from_u64`. Equal seeds give equal streams on
//!   every platform.
//! * [`EntropySource::fixed`] replays a caller-supplied list of 32-bit words
//!   and reports exhaustion as an error.

use std::fmt;
use std::str::FromStr;

use rand::rngs::OsRng;
use rand::{RngCore, SeedableRng, TryRngCore};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EntropyError {
    #[error("fixed entropy sequence exhausted after {consumed} words")]
    Exhausted { consumed: usize },
    #[error("host entropy facility failed: {0}")]
    Host(String),
}

/// Bit of the CPUID leaf 1 ECX word that advertises `rdrand`.
pub const RDRAND_FEATURE_BIT: u32 = 30;

/// Models the CPUID feature word consulted before taking a randomized path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpuProfile {
    pub feature_mask: u32,
}

impl CpuProfile {
    pub const RDRAND: CpuProfile = CpuProfile {
        feature_mask: 1 << RDRAND_FEATURE_BIT,
    };
    pub const NO_RDRAND: CpuProfile = CpuProfile { feature_mask: 0 };

    pub fn new(feature_mask: u32) -> Self {
        Self { feature_mask }
    }

    pub fn hardware_entropy_supported(&self) -> bool {
        hardware_entropy_supported(*self)
    }
}

pub fn hardware_entropy_supported(cpu: CpuProfile) -> bool {
    (cpu.feature_mask >> RDRAND_FEATURE_BIT) & 1 == 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyMode {
    Hardware,
    Seeded,
    Fixed,
}

impl fmt::Display for EntropyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntropyMode::Hardware => "hardware",
            EntropyMode::Seeded => "seeded",
            EntropyMode::Fixed => "fixed",
        })
    }
}

impl FromStr for EntropyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hardware" => Ok(EntropyMode::Hardware),
            "seeded" => Ok(EntropyMode::Seeded),
            "fixed" => Ok(EntropyMode::Fixed),
            other => Err(format!("unknown entropy mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
enum Inner {
    Hardware,
    Seeded(Box<ChaCha8Rng>),
    Fixed { words: Vec<u32>, next: usize },
}

/// A stream of 32-bit words owned by one simulated instance.
#[derive(Debug, Clone)]
pub struct EntropySource {
    inner: Inner,
    draws: u64,
}

impl EntropySource {
    pub fn hardware() -> Self {
        Self::from_inner(Inner::Hardware)
    }

    pub fn seeded(seed: u64) -> Self {
        Self::from_inner(Inner::Seeded(Box::new(ChaCha8Rng::seed_from_u64(seed))))
    }

    pub fn fixed(words: impl Into<Vec<u32>>) -> Self {
        Self::from_inner(Inner::Fixed {
            words: words.into(),
            next: 0,
        })
    }

    /// Fixed source whose [`seed_generator`] outputs are exactly `words`,
    /// each split into its high and low 32-bit halves.
    pub fn fixed_words64(words: &[u64]) -> Self {
        let halves: Vec<u32> = words
            .iter()
            .flat_map(|&w| [(w >> 32) as u32, w as u32])
            .collect();
        Self::fixed(halves)
    }

    fn from_inner(inner: Inner) -> Self {
        Self { inner, draws: 0 }
    }

    pub fn mode(&self) -> EntropyMode {
        match self.inner {
            Inner::Hardware => EntropyMode::Hardware,
            Inner::Seeded(_) => EntropyMode::Seeded,
            Inner::Fixed { .. } => EntropyMode::Fixed,
        }
    }

    /// Number of 32-bit words drawn so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Words left in a fixed sequence; `None` for unbounded modes.
    pub fn remaining(&self) -> Option<usize> {
        match &self.inner {
            Inner::Fixed { words, next } => Some(words.len() - next),
            _ => None,
        }
    }

    pub fn draw32(&mut self) -> Result<u32, EntropyError> {
        let word = match &mut self.inner {
            Inner::Hardware => OsRng
                .try_next_u32()
                .map_err(|e| EntropyError::Host(e.to_string()))?,
            Inner::Seeded(rng) => rng.next_u32(),
            Inner::Fixed { words, next } => {
                let word = *words
                    .get(*next)
                    .ok_or(EntropyError::Exhausted { consumed: *next })?;
                *next += 1;
                word
            }
        };
        self.draws += 1;
        Ok(word)
    }

    /// See [`seed_generator`].
    pub fn next_u64(&mut self) -> Result<u64, EntropyError> {
        seed_generator(self)
    }
}

/// Builds a 64-bit word from two consecutive 32-bit draws: the first is
/// shifted into the high half and XOR'd with the second.
pub fn seed_generator(source: &mut EntropySource) -> Result<u64, EntropyError> {
    let high = source.draw32()?;
    let low = source.draw32()?;
    Ok((u64::from(high) << 32) ^ u64::from(low))
}
