//! Address selection for the modeled unikernel boot path.
//!
//! The baseline path is fully deterministic: the program is loaded at
//! [`DEFAULT_PROGRAM_BASE`] and anonymous mappings (including the main thread
//! stack) are placed first-fit from [`ANON_SEARCH_START`]. When the CPU
//! profile advertises hardware entropy, the program base and the stack are
//! instead drawn by [`rand_gen`] under their [`RandomizationPolicy`]. Heap
//! segments always follow the base at fixed offsets, and large allocations
//! never take the randomized path.

use bitflags::bitflags;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entropy::{seed_generator, CpuProfile, EntropyError, EntropySource};
use crate::vas::{AddressSpace, Region, RegionKind, VasError, VirtualAddress, ADDRESS_CEILING};

/// Hard-coded program base used when no randomized base is available.
pub const DEFAULT_PROGRAM_BASE: VirtualAddress = VirtualAddress::new_const(0x0000_1000_0000_0000);
/// Where the anonymous-mapping allocator starts its search when no address is requested.
pub const ANON_SEARCH_START: VirtualAddress = VirtualAddress::new_const(0x0000_2000_0000_0000);

pub const ELF_BIT_CHECK: u64 = 0x0000_1000_0000_0000;
pub const ELF_RND_MASK: u64 = 0x0000_1fff_ff00_0000;
pub const STACK_BIT_CHECK: u64 = 0x0000_3000_0000_0000;
pub const STACK_RND_MASK: u64 = 0x0000_3fff_ff00_0000;

/// Offset between consecutive loaded segments.
pub const SEGMENT_STRIDE: u64 = 0x1000;
/// Randomized addresses keep their low 3 bytes clear.
pub const RANDOMIZED_ALIGNMENT: u64 = 1 << 24;

pub const DEFAULT_MAX_RETRIES: u32 = 64;
pub const DEFAULT_LARGE_ALLOC_THRESHOLD: u64 = 2 << 20;
pub const DEFAULT_STACK_SIZE: u64 = 1 << 20;
pub const DEFAULT_HEAP_SEGMENTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LayoutError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error(transparent)]
    Vas(#[from] VasError),
    #[error("layout failure: {0}")]
    LayoutFailure(String),
}

/// Required-bits check plus upper-bound mask for one class of randomized region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy")]
pub struct RandomizationPolicy {
    bit_check: u64,
    rnd_mask: u64,
    alignment: u64,
}

#[derive(Deserialize)]
struct RawPolicy {
    bit_check: u64,
    rnd_mask: u64,
    #[serde(default = "default_alignment")]
    alignment: u64,
}

fn default_alignment() -> u64 {
    RANDOMIZED_ALIGNMENT
}

impl TryFrom<RawPolicy> for RandomizationPolicy {
    type Error = LayoutError;

    fn try_from(raw: RawPolicy) -> Result<Self, Self::Error> {
        RandomizationPolicy::new(raw.bit_check, raw.rnd_mask, raw.alignment)
    }
}

impl RandomizationPolicy {
    pub const PROGRAM_BASE: RandomizationPolicy = RandomizationPolicy {
        bit_check: ELF_BIT_CHECK,
        rnd_mask: ELF_RND_MASK,
        alignment: RANDOMIZED_ALIGNMENT,
    };
    pub const STACK: RandomizationPolicy = RandomizationPolicy {
        bit_check: STACK_BIT_CHECK,
        rnd_mask: STACK_RND_MASK,
        alignment: RANDOMIZED_ALIGNMENT,
    };

    pub fn new(bit_check: u64, rnd_mask: u64, alignment: u64) -> Result<Self, LayoutError> {
        let bad = |msg: String| Err(LayoutError::InvalidArgument(msg));
        if bit_check & rnd_mask != bit_check {
            return bad(format!(
                "bit check {bit_check:#x} has bits outside mask {rnd_mask:#x}"
            ));
        }
        if rnd_mask & (RANDOMIZED_ALIGNMENT - 1) != 0 {
            return bad(format!("mask {rnd_mask:#x} does not clear the low 24 bits"));
        }
        if rnd_mask >= ADDRESS_CEILING {
            return bad(format!("mask {rnd_mask:#x} reaches above the 48-bit space"));
        }
        if !alignment.is_power_of_two() || rnd_mask & (alignment - 1) != 0 {
            return bad(format!(
                "alignment {alignment:#x} is not a power of two compatible with mask {rnd_mask:#x}"
            ));
        }
        Ok(Self {
            bit_check,
            rnd_mask,
            alignment,
        })
    }

    pub fn bit_check(&self) -> u64 {
        self.bit_check
    }

    pub fn rnd_mask(&self) -> u64 {
        self.rnd_mask
    }

    pub fn alignment(&self) -> u64 {
        self.alignment
    }

    /// Smallest address the policy can produce.
    pub fn lower_bound(&self) -> u64 {
        self.bit_check
    }

    /// Largest address the policy can produce.
    pub fn upper_bound(&self) -> u64 {
        self.rnd_mask
    }

    /// Spacing between adjacent reachable addresses when the free bits are
    /// contiguous (as for both default policies).
    pub fn stride(&self) -> u64 {
        let free = self.rnd_mask & !self.bit_check;
        if free == 0 {
            self.alignment
        } else {
            1 << free.trailing_zeros()
        }
    }

    /// Number of distinct addresses reachable under the policy.
    pub fn lattice_size(&self) -> u64 {
        1 << (self.rnd_mask & !self.bit_check).count_ones()
    }

    pub fn accepts(&self, word: u64) -> bool {
        word & self.bit_check == self.bit_check
    }

    pub fn admits(&self, addr: VirtualAddress) -> bool {
        let v = addr.value();
        v & !self.rnd_mask == 0 && self.accepts(v)
    }
}

/// Draws 64-bit words until one carries every required bit, then masks it.
///
/// The loop has no iteration cap: a live source accepts each word with
/// probability `2^-popcount(bit_check)`. Fixed sources end it with an
/// exhaustion error.
pub fn rand_gen(
    policy: &RandomizationPolicy,
    source: &mut EntropySource,
) -> Result<VirtualAddress, LayoutError> {
    loop {
        let word = seed_generator(source)?;
        if policy.accepts(word) {
            return Ok(VirtualAddress::new(word & policy.rnd_mask)?);
        }
    }
}

bitflags! {
    /// Subset of the anonymous-mapping flags relevant to address selection.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
    pub struct MapFlags: u32 {
        const POPULATE = 1 << 1;
        const STACK = 1 << 8;
        /// Ignore any requested address and draw one under the stack policy.
        const RAND = 1 << 10;
    }
}

/// Thread attributes as far as stack placement is concerned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThreadAttr {
    pub stack_size: u64,
    pub random_stack: bool,
    pub stack_flags: MapFlags,
}

impl ThreadAttr {
    pub fn new(stack_size: u64, random_stack: bool) -> Self {
        let mut stack_flags = MapFlags::STACK;
        if random_stack {
            stack_flags |= MapFlags::RAND;
        }
        Self {
            stack_size,
            random_stack,
            stack_flags,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyConfig {
    Hardware,
    Seeded(u64),
    Fixed(Vec<u32>),
}

impl EntropyConfig {
    pub fn source(&self) -> EntropySource {
        match self {
            EntropyConfig::Hardware => EntropySource::hardware(),
            EntropyConfig::Seeded(seed) => EntropySource::seeded(*seed),
            EntropyConfig::Fixed(words) => EntropySource::fixed(words.clone()),
        }
    }

    /// Per-instance configuration in a batch. Seeded batches use
    /// `seed + index` so any partition of the batch reproduces the same records.
    pub fn for_instance(&self, index: u64) -> EntropyConfig {
        match self {
            EntropyConfig::Seeded(seed) => EntropyConfig::Seeded(seed.wrapping_add(index)),
            other => other.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceConfig {
    pub cpu: CpuProfile,
    pub entropy: EntropyConfig,
    pub n_heap_segments: usize,
    pub stack_size: u64,
    pub large_alloc_threshold: u64,
    pub max_retries: u32,
    pub program_policy: RandomizationPolicy,
    pub stack_policy: RandomizationPolicy,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self {
            cpu: CpuProfile::RDRAND,
            entropy: EntropyConfig::Hardware,
            n_heap_segments: DEFAULT_HEAP_SEGMENTS,
            stack_size: DEFAULT_STACK_SIZE,
            large_alloc_threshold: DEFAULT_LARGE_ALLOC_THRESHOLD,
            max_retries: DEFAULT_MAX_RETRIES,
            program_policy: RandomizationPolicy::PROGRAM_BASE,
            stack_policy: RandomizationPolicy::STACK,
        }
    }
}

impl InstanceConfig {
    pub fn seeded(cpu: CpuProfile, seed: u64) -> Self {
        Self {
            cpu,
            entropy: EntropyConfig::Seeded(seed),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), LayoutError> {
        if self.stack_size == 0 {
            return Err(LayoutError::InvalidArgument("stack size must be positive".into()));
        }
        if self.max_retries == 0 {
            return Err(LayoutError::InvalidArgument("max_retries must be at least 1".into()));
        }
        Ok(())
    }

    pub fn engine(&self) -> LayoutEngine {
        LayoutEngine {
            program_policy: self.program_policy,
            stack_policy: self.stack_policy,
            max_retries: self.max_retries,
            large_alloc_threshold: self.large_alloc_threshold,
        }
    }
}

/// Addresses chosen for one simulated instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutRecord {
    pub instance_id: u64,
    pub program_base: VirtualAddress,
    pub heap_segments: Vec<VirtualAddress>,
    pub stack_base: VirtualAddress,
    pub randomized: bool,
}

/// Result of loading the main program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MainProgram {
    pub base: VirtualAddress,
    pub segments: Vec<VirtualAddress>,
}

/// Placement rules shared by every path of one instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutEngine {
    pub program_policy: RandomizationPolicy,
    pub stack_policy: RandomizationPolicy,
    /// Attempts made by a randomized placement before giving up on collisions.
    pub max_retries: u32,
    pub large_alloc_threshold: u64,
}

impl Default for LayoutEngine {
    fn default() -> Self {
        InstanceConfig::default().engine()
    }
}

impl LayoutEngine {
    /// Picks the program base (randomized when `cpu` supports hardware
    /// entropy, the hard-coded default otherwise) and loads `n_segments`
    /// segments from it. With zero segments a single page is still reserved
    /// for the base.
    pub fn create_main_program(
        &self,
        space: &mut AddressSpace,
        cpu: CpuProfile,
        n_segments: usize,
        source: &mut EntropySource,
    ) -> Result<MainProgram, LayoutError> {
        if space.regions_of(RegionKind::ProgramBase).next().is_some() {
            return Err(LayoutError::InvalidArgument(
                "address space already holds a program base".into(),
            ));
        }
        let span = (n_segments.max(1) as u64)
            .checked_mul(SEGMENT_STRIDE)
            .ok_or_else(|| LayoutError::InvalidArgument("too many segments".into()))?;

        let base = if cpu.hardware_entropy_supported() {
            self.randomized_slot(space, &self.program_policy, span, source, "program base")?
        } else {
            DEFAULT_PROGRAM_BASE
        };

        let segments = self.load_segments(space, base, n_segments)?;
        if n_segments == 0 {
            space
                .reserve(base, SEGMENT_STRIDE, RegionKind::ProgramBase)
                .map_err(|e| LayoutError::LayoutFailure(format!("program base: {e}")))?;
        }
        Ok(MainProgram { base, segments })
    }

    /// Draws addresses under `policy` until `length` bytes fit there.
    fn randomized_slot(
        &self,
        space: &AddressSpace,
        policy: &RandomizationPolicy,
        length: u64,
        source: &mut EntropySource,
        what: &str,
    ) -> Result<VirtualAddress, LayoutError> {
        for _ in 0..self.max_retries {
            let candidate = rand_gen(policy, source)?;
            if space.is_free(candidate, length) {
                return Ok(candidate);
            }
        }
        Err(LayoutError::LayoutFailure(format!(
            "{what}: no free randomized slot after {} attempts",
            self.max_retries
        )))
    }

    /// Reserves `n` segments at `base + i * 0x1000`. The first is recorded as
    /// the program base, the rest as heap segments. Nothing is reserved if any
    /// segment collides.
    pub fn load_segments(
        &self,
        space: &mut AddressSpace,
        base: VirtualAddress,
        n: usize,
    ) -> Result<Vec<VirtualAddress>, LayoutError> {
        if !base.is_aligned(space.page_size()) {
            return Err(LayoutError::InvalidArgument(format!(
                "segment base {base} is not page aligned"
            )));
        }
        let segments = (0..n as u64)
            .map(|i| {
                i.checked_mul(SEGMENT_STRIDE)
                    .ok_or(VasError::OutOfRange(u64::MAX))
                    .and_then(|off| base.checked_add(off))
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| LayoutError::LayoutFailure(format!("segments from {base}: {e}")))?;

        if let Some(total) = (n as u64).checked_mul(SEGMENT_STRIDE).filter(|t| *t > 0) {
            if let Err(e) = space.check_free(base, total) {
                return Err(LayoutError::LayoutFailure(format!("segments from {base}: {e}")));
            }
        }
        for (i, &addr) in segments.iter().enumerate() {
            let kind = if i == 0 {
                RegionKind::ProgramBase
            } else {
                RegionKind::HeapSegment
            };
            space.reserve(addr, SEGMENT_STRIDE, kind)?;
        }
        Ok(segments)
    }

    /// Anonymous mapping. With [`MapFlags::RAND`] the requested address is
    /// ignored and a stack-policy address is drawn; without it an absent
    /// request is placed first-fit from [`ANON_SEARCH_START`] and an explicit
    /// one is reserved as given.
    pub fn map_anon(
        &self,
        space: &mut AddressSpace,
        requested: Option<VirtualAddress>,
        length: u64,
        flags: MapFlags,
        source: &mut EntropySource,
    ) -> Result<VirtualAddress, LayoutError> {
        if length == 0 {
            return Err(LayoutError::InvalidArgument("mapping length must be positive".into()));
        }
        let kind = if flags.contains(MapFlags::STACK) {
            RegionKind::Stack
        } else {
            RegionKind::Other
        };
        let addr = if flags.contains(MapFlags::RAND) {
            self.randomized_slot(space, &self.stack_policy, length, source, "anon mapping")?
        } else {
            match requested {
                Some(addr) => addr,
                None => space.first_fit(ANON_SEARCH_START, length)?,
            }
        };
        space.reserve(addr, length, kind)?;
        Ok(addr)
    }

    pub fn allocate_stack(
        &self,
        space: &mut AddressSpace,
        attr: &ThreadAttr,
        source: &mut EntropySource,
    ) -> Result<Region, LayoutError> {
        if attr.stack_size == 0 {
            return Err(LayoutError::InvalidArgument("stack size must be positive".into()));
        }
        let start = self.map_anon(space, None, attr.stack_size, attr.stack_flags, source)?;
        Ok(Region {
            start,
            length: attr.stack_size,
            kind: RegionKind::Stack,
        })
    }

    /// Large allocations bypass randomization entirely and are placed
    /// first-fit from the anonymous search start.
    pub fn malloc_large(
        &self,
        space: &mut AddressSpace,
        length: u64,
    ) -> Result<VirtualAddress, LayoutError> {
        if length < self.large_alloc_threshold {
            return Err(LayoutError::InvalidArgument(format!(
                "{length:#x} bytes is below the large allocation threshold {:#x}",
                self.large_alloc_threshold
            )));
        }
        let addr = space.first_fit(ANON_SEARCH_START, length)?;
        space.reserve(addr, length, RegionKind::LargeAlloc)?;
        Ok(addr)
    }
}

/// A booted instance: its address space, entropy stream and chosen layout.
#[derive(Debug, Clone)]
pub struct Instance {
    engine: LayoutEngine,
    space: AddressSpace,
    source: EntropySource,
    record: LayoutRecord,
}

impl Instance {
    /// Loads the main program, then allocates the main thread stack.
    pub fn boot(instance_id: u64, cfg: &InstanceConfig) -> Result<Self, LayoutError> {
        cfg.validate()?;
        let engine = cfg.engine();
        let mut space = AddressSpace::new();
        let mut source = cfg.entropy.source();
        let randomized = cfg.cpu.hardware_entropy_supported();

        let program =
            engine.create_main_program(&mut space, cfg.cpu, cfg.n_heap_segments, &mut source)?;
        let attr = ThreadAttr::new(cfg.stack_size, randomized);
        let stack = engine.allocate_stack(&mut space, &attr, &mut source)?;

        let record = LayoutRecord {
            instance_id,
            program_base: program.base,
            heap_segments: program.segments,
            stack_base: stack.start,
            randomized,
        };
        Ok(Self {
            engine,
            space,
            source,
            record,
        })
    }

    pub fn record(&self) -> &LayoutRecord {
        &self.record
    }

    pub fn into_record(self) -> LayoutRecord {
        self.record
    }

    pub fn space(&self) -> &AddressSpace {
        &self.space
    }

    pub fn malloc_large(&mut self, length: u64) -> Result<VirtualAddress, LayoutError> {
        self.engine.malloc_large(&mut self.space, length)
    }

    pub fn map_anon(
        &mut self,
        requested: Option<VirtualAddress>,
        length: u64,
        flags: MapFlags,
    ) -> Result<VirtualAddress, LayoutError> {
        self.engine
            .map_anon(&mut self.space, requested, length, flags, &mut self.source)
    }
}

pub fn simulate_instance(instance_id: u64, cfg: &InstanceConfig) -> Result<LayoutRecord, LayoutError> {
    Instance::boot(instance_id, cfg).map(Instance::into_record)
}

/// Simulates `n` instances in parallel, ordered by instance id. Instance `i`
/// runs with `cfg.entropy.for_instance(i)`.
pub fn simulate_batch(cfg: &InstanceConfig, n: u64) -> Result<Vec<LayoutRecord>, LayoutError> {
    cfg.validate()?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let cfg = InstanceConfig {
                entropy: cfg.entropy.for_instance(i),
                ..cfg.clone()
            };
            simulate_instance(i, &cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn va(v: u64) -> VirtualAddress {
        VirtualAddress::new(v).unwrap()
    }

    #[test]
    fn default_policies_are_valid() {
        for p in [RandomizationPolicy::PROGRAM_BASE, RandomizationPolicy::STACK] {
            assert_eq!(
                RandomizationPolicy::new(p.bit_check(), p.rnd_mask(), p.alignment()).unwrap(),
                p
            );
            assert_eq!(p.stride(), 1 << 24);
        }
        assert_eq!(RandomizationPolicy::PROGRAM_BASE.lattice_size(), 1 << 20);
        assert_eq!(RandomizationPolicy::STACK.lattice_size(), 1 << 20);
    }

    #[test]
    fn policy_validation() {
        assert!(RandomizationPolicy::new(0x0000_4000_0000_0000, ELF_RND_MASK, 1 << 24).is_err());
        assert!(RandomizationPolicy::new(ELF_BIT_CHECK, 0x0000_1fff_fff0_0000, 1 << 24).is_err());
        assert!(RandomizationPolicy::new(ELF_BIT_CHECK, ELF_RND_MASK, 3).is_err());
        assert!(RandomizationPolicy::new(ELF_BIT_CHECK, ELF_RND_MASK, 1 << 25).is_err());
        assert!(RandomizationPolicy::new(0, 0x0001_0000_0000_0000, 1 << 24).is_err());
        assert!(RandomizationPolicy::new(ELF_BIT_CHECK, ELF_RND_MASK, 0x1000).is_ok());
    }

    #[test]
    fn policy_deserializes_from_toml_hex() {
        let p: RandomizationPolicy =
            toml::from_str("bit_check = 0x0000300000000000\nrnd_mask = 0x00003fffff000000\n").unwrap();
        assert_eq!(p, RandomizationPolicy::STACK);
        let bad: Result<RandomizationPolicy, _> =
            toml::from_str("bit_check = 0x0000400000000000\nrnd_mask = 0x00003fffff000000\n");
        assert!(bad.is_err());
    }

    #[test]
    fn rand_gen_examples() {
        let mut src = EntropySource::fixed_words64(&[0x0000_1234_5678_9abc]);
        assert_eq!(
            rand_gen(&RandomizationPolicy::PROGRAM_BASE, &mut src).unwrap(),
            va(0x0000_1234_5600_0000)
        );

        let mut src = EntropySource::fixed_words64(&[0x1, 0x0000_1800_0000_0000]);
        assert_eq!(
            rand_gen(&RandomizationPolicy::PROGRAM_BASE, &mut src).unwrap(),
            va(0x0000_1800_0000_0000)
        );
        assert_eq!(src.remaining(), Some(0));

        let mut src = EntropySource::fixed_words64(&[0x0000_3456_789a_bcde]);
        assert_eq!(
            rand_gen(&RandomizationPolicy::STACK, &mut src).unwrap(),
            va(0x0000_3456_7800_0000)
        );
    }

    #[test]
    fn rand_gen_stack_requires_both_bits() {
        // Bit 45 only, then bit 44 only, then both.
        let mut src = EntropySource::fixed_words64(&[
            0x0000_2000_0000_0000,
            0x0000_1000_0000_0000,
            0x0000_3000_0100_0000,
        ]);
        assert_eq!(
            rand_gen(&RandomizationPolicy::STACK, &mut src).unwrap(),
            va(0x0000_3000_0100_0000)
        );
    }

    #[test]
    fn rand_gen_high_bits_masked_off() {
        let mut src = EntropySource::fixed_words64(&[0xffff_ffff_ffff_ffff]);
        assert_eq!(
            rand_gen(&RandomizationPolicy::PROGRAM_BASE, &mut src).unwrap(),
            va(ELF_RND_MASK)
        );
    }

    #[test]
    fn rand_gen_exhaustion() {
        let mut src = EntropySource::fixed_words64(&[0x1, 0x2]);
        assert!(matches!(
            rand_gen(&RandomizationPolicy::PROGRAM_BASE, &mut src),
            Err(LayoutError::Entropy(EntropyError::Exhausted { consumed: 4 }))
        ));
    }

    #[test]
    fn create_main_program_baseline() {
        let engine = LayoutEngine::default();
        let mut space = AddressSpace::new();
        let mut src = EntropySource::fixed(Vec::new());
        let prog = engine
            .create_main_program(&mut space, CpuProfile::NO_RDRAND, 2, &mut src)
            .unwrap();
        assert_eq!(prog.base, DEFAULT_PROGRAM_BASE);
        assert_eq!(prog.segments, vec![va(0x0000_1000_0000_0000), va(0x0000_1000_0000_1000)]);
        assert_eq!(src.draws(), 0);
    }

    #[test]
    fn create_main_program_randomized() {
        let engine = LayoutEngine::default();
        let mut space = AddressSpace::new();
        let mut src = EntropySource::fixed_words64(&[0x0000_1234_5678_9abc]);
        let prog = engine
            .create_main_program(&mut space, CpuProfile::RDRAND, 3, &mut src)
            .unwrap();
        assert_eq!(prog.base, va(0x0000_1234_5600_0000));
        assert_eq!(space.regions().len(), 3);
        assert_eq!(space.regions()[0].kind, RegionKind::ProgramBase);
        assert_eq!(space.regions()[1].kind, RegionKind::HeapSegment);
    }

    #[test]
    fn create_main_program_zero_segments_reserves_base() {
        let engine = LayoutEngine::default();
        let mut space = AddressSpace::new();
        let mut src = EntropySource::fixed(Vec::new());
        let prog = engine
            .create_main_program(&mut space, CpuProfile::NO_RDRAND, 0, &mut src)
            .unwrap();
        assert!(prog.segments.is_empty());
        assert_eq!(space.regions().len(), 1);
        assert_eq!(space.regions()[0].kind, RegionKind::ProgramBase);
        assert!(engine
            .create_main_program(&mut space, CpuProfile::NO_RDRAND, 0, &mut src)
            .is_err());
    }

    #[test]
    fn create_main_program_retries_on_collision() {
        let engine = LayoutEngine::default();
        let mut space = AddressSpace::new();
        space
            .reserve(va(0x0000_1234_5600_0000), 0x1000, RegionKind::Other)
            .unwrap();
        let mut src =
            EntropySource::fixed_words64(&[0x0000_1234_5678_9abc, 0x0000_1800_0000_0000]);
        let prog = engine
            .create_main_program(&mut space, CpuProfile::RDRAND, 1, &mut src)
            .unwrap();
        assert_eq!(prog.base, va(0x0000_1800_0000_0000));
    }

    #[test]
    fn create_main_program_gives_up_after_max_retries() {
        let engine = LayoutEngine {
            max_retries: 2,
            ..LayoutEngine::default()
        };
        let mut space = AddressSpace::new();
        space
            .reserve(va(0x0000_1234_5600_0000), 0x1000, RegionKind::Other)
            .unwrap();
        let word = 0x0000_1234_5678_9abc;
        let mut src = EntropySource::fixed_words64(&[word, word, word]);
        let err = engine
            .create_main_program(&mut space, CpuProfile::RDRAND, 1, &mut src)
            .unwrap_err();
        assert!(matches!(err, LayoutError::LayoutFailure(_)));
        assert_eq!(src.remaining(), Some(2));
    }

    #[test]
    fn create_main_program_baseline_collision_fails() {
        let engine = LayoutEngine::default();
        let mut space = AddressSpace::new();
        space
            .reserve(va(0x0000_1000_0000_1000), 0x1000, RegionKind::Other)
            .unwrap();
        let mut src = EntropySource::fixed(Vec::new());
        let err = engine
            .create_main_program(&mut space, CpuProfile::NO_RDRAND, 3, &mut src)
            .unwrap_err();
        assert!(matches!(err, LayoutError::LayoutFailure(_)));
        // Nothing partially reserved.
        assert_eq!(space.regions().len(), 1);
    }

    #[test]
    fn load_segments_examples() {
        let engine = LayoutEngine::default();
        let mut space = AddressSpace::new();
        let segs = engine
            .load_segments(&mut space, va(0x0000_1000_0000_0000), 3)
            .unwrap();
        assert_eq!(
            segs,
            vec![
                va(0x0000_1000_0000_0000),
                va(0x0000_1000_0000_1000),
                va(0x0000_1000_0000_2000)
            ]
        );

        let mut space = AddressSpace::new();
        assert!(engine.load_segments(&mut space, va(0x5000), 0).unwrap().is_empty());
        assert!(space.regions().is_empty());
        assert_eq!(
            engine.load_segments(&mut space, va(0x5000), 1).unwrap(),
            vec![va(0x5000)]
        );
        assert!(matches!(
            engine.load_segments(&mut space, va(0x5000), 1),
            Err(LayoutError::LayoutFailure(_))
        ));
        assert!(matches!(
            engine.load_segments(&mut space, va(0x5800), 1),
            Err(LayoutError::InvalidArgument(_))
        ));
    }

    #[test]
    fn map_anon_examples() {
        let engine = LayoutEngine::default();

        let mut space = AddressSpace::new();
        let mut src = EntropySource::fixed(Vec::new());
        assert_eq!(
            engine
                .map_anon(&mut space, None, 0x1000, MapFlags::empty(), &mut src)
                .unwrap(),
            ANON_SEARCH_START
        );

        let mut space = AddressSpace::new();
        let mut src = EntropySource::fixed_words64(&[0x0000_3456_789a_bcde]);
        assert_eq!(
            engine
                .map_anon(
                    &mut space,
                    Some(va(0x0000_2100_0000_0000)),
                    0x1000,
                    MapFlags::RAND,
                    &mut src
                )
                .unwrap(),
            va(0x0000_3456_7800_0000)
        );

        let mut space = AddressSpace::new();
        let mut src = EntropySource::fixed(Vec::new());
        let requested = va(0x0000_2100_0000_0000);
        assert_eq!(
            engine
                .map_anon(&mut space, Some(requested), 0x1000, MapFlags::empty(), &mut src)
                .unwrap(),
            requested
        );
        assert!(matches!(
            engine.map_anon(&mut space, Some(requested), 0x1000, MapFlags::empty(), &mut src),
            Err(LayoutError::Vas(VasError::Overlap { .. }))
        ));
        assert!(matches!(
            engine.map_anon(&mut space, None, 0, MapFlags::empty(), &mut src),
            Err(LayoutError::InvalidArgument(_))
        ));
    }

    #[test]
    fn map_anon_rand_retries_then_fails() {
        let engine = LayoutEngine {
            max_retries: 3,
            ..LayoutEngine::default()
        };
        let mut space = AddressSpace::new();
        let word = 0x0000_3456_789a_bcde;
        let mut src = EntropySource::fixed_words64(&[word, word, word, word]);
        engine
            .map_anon(&mut space, None, 0x1000, MapFlags::RAND, &mut src)
            .unwrap();
        let err = engine
            .map_anon(&mut space, None, 0x1000, MapFlags::RAND, &mut src)
            .unwrap_err();
        assert!(matches!(err, LayoutError::LayoutFailure(_)));
    }

    #[test]
    fn allocate_stack_examples() {
        let engine = LayoutEngine::default();

        let mut space = AddressSpace::new();
        let mut src = EntropySource::fixed(Vec::new());
        let region = engine
            .allocate_stack(&mut space, &ThreadAttr::new(0x10000, false), &mut src)
            .unwrap();
        assert_eq!(region.start, ANON_SEARCH_START);
        assert_eq!(region.kind, RegionKind::Stack);
        assert_eq!(region.length, 0x10000);

        let mut space = AddressSpace::new();
        let mut src = EntropySource::fixed_words64(&[0x0000_3456_789a_bcde]);
        let region = engine
            .allocate_stack(&mut space, &ThreadAttr::new(0x10000, true), &mut src)
            .unwrap();
        assert_eq!(region.start, va(0x0000_3456_7800_0000));
        assert_eq!(space.regions_of(RegionKind::Stack).count(), 1);

        let err = engine
            .allocate_stack(&mut space, &ThreadAttr::new(0, true), &mut src)
            .unwrap_err();
        assert!(matches!(err, LayoutError::InvalidArgument(_)));
    }

    #[test]
    fn thread_attr_flag_chain() {
        assert!(ThreadAttr::new(0x1000, true).stack_flags.contains(MapFlags::RAND));
        assert!(!ThreadAttr::new(0x1000, false).stack_flags.contains(MapFlags::RAND));
        assert!(ThreadAttr::new(0x1000, false).stack_flags.contains(MapFlags::STACK));
    }

    #[test]
    fn malloc_large_examples() {
        let engine = LayoutEngine::default();
        let ten_mb = 10 << 20;

        let mut a = AddressSpace::new();
        let mut b = AddressSpace::new();
        let addr_a = engine.malloc_large(&mut a, ten_mb).unwrap();
        let addr_b = engine.malloc_large(&mut b, ten_mb).unwrap();
        assert_eq!(addr_a, addr_b);
        assert_eq!(addr_a, ANON_SEARCH_START);
        assert_eq!(
            engine.malloc_large(&mut a, ten_mb).unwrap(),
            va(ANON_SEARCH_START.value() + ten_mb)
        );
        assert!(matches!(
            engine.malloc_large(&mut a, 0x1000),
            Err(LayoutError::InvalidArgument(_))
        ));
    }

    #[test]
    fn simulate_instance_baseline() {
        for seed in [0, 1, 99] {
            let cfg = InstanceConfig::seeded(CpuProfile::NO_RDRAND, seed);
            let rec = simulate_instance(0, &cfg).unwrap();
            assert_eq!(rec.program_base, DEFAULT_PROGRAM_BASE);
            assert_eq!(rec.stack_base, ANON_SEARCH_START);
            assert!(!rec.randomized);
        }
    }

    #[test]
    fn simulate_instance_seeded_is_deterministic() {
        let cfg = InstanceConfig::seeded(CpuProfile::RDRAND, 1234);
        let a = simulate_instance(5, &cfg).unwrap();
        let b = simulate_instance(5, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.randomized);
        assert!(RandomizationPolicy::PROGRAM_BASE.admits(a.program_base));
        assert!(RandomizationPolicy::STACK.admits(a.stack_base));
    }

    #[test]
    fn simulate_instance_hardware_runs_differ() {
        let cfg = InstanceConfig::default();
        let a = simulate_instance(0, &cfg).unwrap();
        let b = simulate_instance(0, &cfg).unwrap();
        // Collision probability per pair is 2^-20.
        assert_ne!(a.program_base, b.program_base);
    }

    #[test]
    fn simulate_instance_rejects_bad_config() {
        let cfg = InstanceConfig {
            max_retries: 0,
            ..InstanceConfig::default()
        };
        assert!(simulate_instance(0, &cfg).is_err());
        let cfg = InstanceConfig {
            stack_size: 0,
            ..InstanceConfig::default()
        };
        assert!(simulate_instance(0, &cfg).is_err());
    }

    #[test]
    fn batch_matches_serial() {
        let cfg = InstanceConfig::seeded(CpuProfile::RDRAND, 77);
        let batch = simulate_batch(&cfg, 32).unwrap();
        for (i, rec) in batch.iter().enumerate() {
            let single = InstanceConfig::seeded(CpuProfile::RDRAND, 77 + i as u64);
            assert_eq!(*rec, simulate_instance(i as u64, &single).unwrap());
        }
    }
}
