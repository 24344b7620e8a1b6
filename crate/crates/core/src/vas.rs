//! Simulated virtual address space for a single unikernel instance.
//!
//! The model only tracks which ranges have been handed out. There are no page
//! tables, permissions or unmapping: the address-selection paths being modeled
//! only ever pick and reserve addresses.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exclusive upper bound of the simulated space (low canonical half).
pub const ADDRESS_CEILING: u64 = 1 << 48;

pub const DEFAULT_PAGE_SIZE: u64 = 0x1000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VasError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("address {0:#x} is outside the simulated space")]
    OutOfRange(u64),
    #[error("range {start} (+{length:#x}) overlaps existing {existing}")]
    Overlap {
        start: VirtualAddress,
        length: u64,
        existing: Region,
    },
    #[error("no free gap of {length:#x} bytes at or above {search_start}")]
    Exhausted {
        search_start: VirtualAddress,
        length: u64,
    },
}

/// A byte address below [`ADDRESS_CEILING`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct VirtualAddress(u64);

impl VirtualAddress {
    pub fn new(value: u64) -> Result<Self, VasError> {
        if value < ADDRESS_CEILING {
            Ok(Self(value))
        } else {
            Err(VasError::OutOfRange(value))
        }
    }

    /// Callers must guarantee `value < ADDRESS_CEILING`; used for the
    /// compile-time constants of the modeled boot path.
    pub const fn new_const(value: u64) -> Self {
        assert!(value < ADDRESS_CEILING);
        Self(value)
    }

    #[inline]
    pub const fn value(self) -> u64 {
        self.0
    }

    pub fn checked_add(self, offset: u64) -> Result<Self, VasError> {
        let sum = self
            .0
            .checked_add(offset)
            .ok_or(VasError::OutOfRange(u64::MAX))?;
        Self::new(sum)
    }

    pub fn is_aligned(self, alignment: u64) -> bool {
        alignment.is_power_of_two() && self.0 & (alignment - 1) == 0
    }
}

impl TryFrom<u64> for VirtualAddress {
    type Error = VasError;

    fn try_from(value: u64) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<VirtualAddress> for u64 {
    fn from(addr: VirtualAddress) -> u64 {
        addr.0
    }
}

impl fmt::Display for VirtualAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:016x}", self.0)
    }
}

impl fmt::LowerHex for VirtualAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::LowerHex::fmt(&self.0, f)
    }
}

/// Rounds `addr` down to a multiple of `alignment`.
pub fn align_down(addr: VirtualAddress, alignment: u64) -> Result<VirtualAddress, VasError> {
    if !alignment.is_power_of_two() {
        return Err(VasError::InvalidArgument(format!(
            "alignment {alignment:#x} is not a power of two"
        )));
    }
    Ok(VirtualAddress(addr.0 & !(alignment - 1)))
}

fn align_up(value: u64, alignment: u64) -> Option<u64> {
    debug_assert!(alignment.is_power_of_two());
    value
        .checked_add(alignment - 1)
        .map(|v| v & !(alignment - 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionKind {
    ProgramBase,
    HeapSegment,
    Stack,
    LargeAlloc,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub start: VirtualAddress,
    pub length: u64,
    pub kind: RegionKind,
}

impl Region {
    /// Exclusive end of the range.
    pub fn end(&self) -> u64 {
        self.start.0 + self.length
    }

    pub fn overlaps(&self, start: u64, length: u64) -> bool {
        start < self.end() && self.start.0 < start + length
    }

    pub fn contains(&self, addr: VirtualAddress) -> bool {
        self.start <= addr && addr.0 < self.end()
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} [{}, +{:#x})", self.kind, self.start, self.length)
    }
}

/// Reserved ranges of one instance, kept sorted by start address.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressSpace {
    regions: Vec<Region>,
    page_size: u64,
}

impl Default for AddressSpace {
    fn default() -> Self {
        Self::new()
    }
}

impl AddressSpace {
    pub fn new() -> Self {
        Self {
            regions: Vec::new(),
            page_size: DEFAULT_PAGE_SIZE,
        }
    }

    pub fn with_page_size(page_size: u64) -> Result<Self, VasError> {
        if !page_size.is_power_of_two() {
            return Err(VasError::InvalidArgument(format!(
                "page size {page_size:#x} is not a power of two"
            )));
        }
        Ok(Self {
            regions: Vec::new(),
            page_size,
        })
    }

    pub fn page_size(&self) -> u64 {
        self.page_size
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn regions_of(&self, kind: RegionKind) -> impl Iterator<Item = &Region> {
        self.regions.iter().filter(move |r| r.kind == kind)
    }

    /// Validates a candidate range without recording it.
    pub fn check_free(&self, start: VirtualAddress, length: u64) -> Result<(), VasError> {
        if length == 0 {
            return Err(VasError::InvalidArgument("region length must be positive".into()));
        }
        if !start.is_aligned(self.page_size) {
            return Err(VasError::InvalidArgument(format!(
                "start {start} is not aligned to the {:#x} page size",
                self.page_size
            )));
        }
        match start.0.checked_add(length) {
            Some(end) if end <= ADDRESS_CEILING => {}
            _ => return Err(VasError::OutOfRange(start.0.saturating_add(length))),
        }
        if let Some(existing) = self.find_overlap(start.0, length) {
            return Err(VasError::Overlap {
                start,
                length,
                existing: *existing,
            });
        }
        Ok(())
    }

    /// Returns the first region intersecting `[start, start + length)`.
    pub fn find_overlap(&self, start: u64, length: u64) -> Option<&Region> {
        // Regions are disjoint and sorted, so only the predecessor of the
        // insertion point and the region at it can intersect.
        let idx = self.regions.partition_point(|r| r.start.0 < start);
        let before = idx.checked_sub(1).and_then(|i| self.regions.get(i));
        before
            .into_iter()
            .chain(self.regions.get(idx))
            .find(|r| r.overlaps(start, length))
    }

    pub fn is_free(&self, start: VirtualAddress, length: u64) -> bool {
        self.check_free(start, length).is_ok()
    }

    pub fn reserve(
        &mut self,
        start: VirtualAddress,
        length: u64,
        kind: RegionKind,
    ) -> Result<Region, VasError> {
        self.check_free(start, length)?;
        let region = Region {
            start,
            length,
            kind,
        };
        let idx = self.regions.partition_point(|r| r.start < start);
        self.regions.insert(idx, region);
        Ok(region)
    }

    /// Lowest page-aligned address at or above `search_start` where `length`
    /// bytes fit without touching any reserved region.
    pub fn first_fit(
        &self,
        search_start: VirtualAddress,
        length: u64,
    ) -> Result<VirtualAddress, VasError> {
        if length == 0 {
            return Err(VasError::InvalidArgument("search length must be positive".into()));
        }
        if !search_start.is_aligned(self.page_size) {
            return Err(VasError::InvalidArgument(format!(
                "search start {search_start} is not page aligned"
            )));
        }
        let exhausted = VasError::Exhausted {
            search_start,
            length,
        };
        let mut candidate = search_start.0;
        for region in &self.regions {
            if region.end() <= candidate {
                continue;
            }
            if candidate.checked_add(length).ok_or(exhausted.clone())? <= region.start.0 {
                break;
            }
            candidate = align_up(region.end(), self.page_size).ok_or(exhausted.clone())?;
        }
        match candidate.checked_add(length) {
            Some(end) if end <= ADDRESS_CEILING => Ok(VirtualAddress(candidate)),
            _ => Err(exhausted),
        }
    }
}
