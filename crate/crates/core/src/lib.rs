//! Simulator and analysis toolkit for address randomization in a unikernel.
//!
//! * [`vas`]: per-instance address space with first-fit search.
//! * [`entropy`]: rdrand feature detection and 32/64-bit entropy draws.
//! * [`layout`]: program base, heap segment, stack and large-allocation
//!   placement, baseline and randomized.
//! * [`stats`]: SD, confidence intervals, Levene and KS tests.
//! * [`bench_io`]: metric files, address logs and summary reports.
//! * [`cli`]: the `aslr-sim` command line.

pub mod bench_io;
pub mod cli;
pub mod entropy;
pub mod layout;
pub mod stats;
pub mod vas;

pub use entropy::{CpuProfile, EntropySource};
pub use layout::{simulate_batch, simulate_instance, InstanceConfig, LayoutRecord, RandomizationPolicy};
pub use vas::{AddressSpace, VirtualAddress};
