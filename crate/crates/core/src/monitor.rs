//! Inline reference monitor.
//!
//! Ties the frame algebra, the simulated heap and the shadow table together
//! and implements the runtime events: tagging at allocation, the in-frame
//! check at address arithmetic, bounds and liveness checks at access, cast
//! checks and free.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{self, AddressWord, FrameError, FrameTag, TagConfig, TaggedWord};
use crate::heap::{AllocationRecord, HeapConfig, HeapError, HeaderState, ObjectHeader, SimHeap};
use crate::shadow::{ShadowError, ShadowTable};
use crate::types::{TypeId, TypeRegistry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "ok")]
    Ok,
    #[serde(rename = "oob")]
    OutOfBounds,
    #[serde(rename = "uaf")]
    UseAfterFree,
    #[serde(rename = "double-free")]
    DoubleFree,
    #[serde(rename = "inframe-violation")]
    InFrameViolation,
    #[serde(rename = "cast-error")]
    CastError,
    #[serde(rename = "missing-metadata")]
    MissingMetadata,
}

impl Outcome {
    pub const ALL: [Outcome; 7] = [
        Outcome::Ok,
        Outcome::OutOfBounds,
        Outcome::UseAfterFree,
        Outcome::DoubleFree,
        Outcome::InFrameViolation,
        Outcome::CastError,
        Outcome::MissingMetadata,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Outcome::Ok => "ok",
            Outcome::OutOfBounds => "oob",
            Outcome::UseAfterFree => "uaf",
            Outcome::DoubleFree => "double-free",
            Outcome::InFrameViolation => "inframe-violation",
            Outcome::CastError => "cast-error",
            Outcome::MissingMetadata => "missing-metadata",
        }
    }

    pub fn is_ok(self) -> bool {
        self == Outcome::Ok
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Outcome::ALL
            .into_iter()
            .find(|o| o.token() == s)
            .ok_or_else(|| format!("unknown outcome `{s}`"))
    }
}

/// Result of one check. `Ok` verdicts carry no offending address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub object_id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub address: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<u64>,
}

impl Verdict {
    pub fn ok(object_id: Option<u64>) -> Self {
        Self {
            outcome: Outcome::Ok,
            object_id,
            address: None,
            width: None,
        }
    }

    pub fn flag(outcome: Outcome, object_id: Option<u64>, address: AddressWord, width: Option<u64>) -> Self {
        debug_assert!(outcome != Outcome::Ok);
        Self {
            outcome,
            object_id,
            address: Some(address.get()),
            width,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.outcome.is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationPolicy {
    Abort,
    #[default]
    Record,
}

impl FromStr for ViolationPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "abort" => Ok(Self::Abort),
            "record" => Ok(Self::Record),
            _ => Err(format!("unknown policy `{s}` (expected abort|record)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorPolicy {
    pub on_violation: ViolationPolicy,
    pub arithmetic_check: bool,
}

impl Default for MonitorPolicy {
    fn default() -> Self {
        Self {
            on_violation: ViolationPolicy::Record,
            arithmetic_check: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessKind {
    Load,
    Store,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MonitorError {
    #[error(transparent)]
    Heap(#[from] HeapError),
    #[error("shadow table fault: {0}")]
    Shadow(#[from] ShadowError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("address arithmetic {addr:#x} + {delta} leaves the address space")]
    AddressWrap { addr: u64, delta: i64 },
    #[error("{0}")]
    Usage(String),
}

/// Header found through a tagged word.
#[derive(Debug, Clone, Copy)]
struct Located {
    addr: AddressWord,
    md: AddressWord,
    header: ObjectHeader,
    object_id: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Monitor {
    cfg: TagConfig,
    heap: SimHeap,
    table: ShadowTable,
    policy: MonitorPolicy,
}

impl Monitor {
    pub fn new(cfg: TagConfig, heap_cfg: HeapConfig, policy: MonitorPolicy) -> Result<Self, MonitorError> {
        Ok(Self {
            cfg,
            heap: SimHeap::new(cfg, heap_cfg)?,
            table: ShadowTable::new(cfg),
            policy,
        })
    }

    pub fn config(&self) -> &TagConfig {
        &self.cfg
    }

    pub fn policy(&self) -> MonitorPolicy {
        self.policy
    }

    pub fn heap(&self) -> &SimHeap {
        &self.heap
    }

    pub fn heap_mut(&mut self) -> &mut SimHeap {
        &mut self.heap
    }

    pub fn table(&self) -> &ShadowTable {
        &self.table
    }

    /// Allocates and returns a word addressing the payload whose tag locates
    /// the header.
    pub fn on_alloc(
        &mut self,
        size: u64,
        type_id: TypeId,
        align: u64,
    ) -> Result<(TaggedWord, AllocationRecord), MonitorError> {
        let record = self.heap.alloc(size, type_id, align)?;
        if let FrameTag::LargeFramed { wrapper_exp } = record.tag {
            let frame = frame::wrapper_frame(record.md_addr, record.extent_hi())?;
            debug_assert_eq!(frame.exp, wrapper_exp);
            self.table.insert(frame.base, wrapper_exp, record.md_addr)?;
        }
        let word = frame::encode(record.payload_base, record.tag, &self.cfg)?;
        Ok((word, record))
    }

    /// Header address derived from `w` alone. `Ok(None)` for untagged words.
    pub fn derive_metadata(&self, w: TaggedWord) -> Result<Option<AddressWord>, Outcome> {
        let (addr, tag) = frame::decode(w, &self.cfg).map_err(|_| Outcome::MissingMetadata)?;
        match tag {
            FrameTag::Untagged => Ok(None),
            FrameTag::SmallFramed { .. } => frame::derive_small_md(w, &self.cfg)
                .map(Some)
                .map_err(|_| Outcome::MissingMetadata),
            FrameTag::LargeFramed { wrapper_exp } => self
                .table
                .lookup(addr, wrapper_exp)
                .map(Some)
                .map_err(|_| Outcome::MissingMetadata),
        }
    }

    fn locate(&self, w: TaggedWord) -> Result<Option<Located>, Outcome> {
        let addr = frame::strip(w, &self.cfg);
        let Some(md) = self.derive_metadata(w)? else {
            return Ok(None);
        };
        let header = self
            .heap
            .read_header(md)
            .map_err(|_| Outcome::MissingMetadata)?;
        Ok(Some(Located {
            addr,
            md,
            header,
            object_id: self.heap.object_at_header(md),
        }))
    }

    /// Pointer arithmetic with the in-frame check. The tag is carried over
    /// unchanged, even when the check fails.
    pub fn on_arith(&self, w: TaggedWord, delta: i64) -> Result<(TaggedWord, Verdict), MonitorError> {
        let addr = frame::strip(w, &self.cfg);
        let wrap = MonitorError::AddressWrap {
            addr: addr.get(),
            delta,
        };
        let next = addr.get().checked_add_signed(delta).ok_or(wrap.clone())?;
        let next = AddressWord::checked(next, &self.cfg).map_err(|_| wrap)?;
        let result = TaggedWord::from_raw((w.raw() & !self.cfg.addr_mask()) | next.get());
        let verdict = if self.policy.arithmetic_check && !frame::in_frame(w, next, &self.cfg) {
            Verdict::flag(Outcome::InFrameViolation, None, next, None)
        } else {
            Verdict::ok(None)
        };
        Ok((result, verdict))
    }

    pub fn on_access(&self, w: TaggedWord, width: u64, _kind: AccessKind) -> Result<Verdict, MonitorError> {
        if width == 0 {
            return Err(MonitorError::Usage("access width must be at least 1".into()));
        }
        let addr = frame::strip(w, &self.cfg);
        let loc = match self.locate(w) {
            Ok(Some(loc)) => loc,
            Ok(None) => return Ok(Verdict::ok(None)),
            Err(outcome) => return Ok(Verdict::flag(outcome, None, addr, Some(width))),
        };
        let id = loc.object_id;
        if loc.header.state == HeaderState::Freed {
            return Ok(Verdict::flag(Outcome::UseAfterFree, id, addr, Some(width)));
        }
        let lower = loc.md.get() + self.cfg.header_size();
        let upper = lower + loc.header.payload_size;
        let in_bounds = lower <= addr.get()
            && addr
                .get()
                .checked_add(width)
                .is_some_and(|end| end <= upper);
        Ok(if in_bounds {
            Verdict::ok(id)
        } else {
            Verdict::flag(Outcome::OutOfBounds, id, addr, Some(width))
        })
    }

    /// Checks that the type found at the word's offset may be viewed as
    /// `target`. Objects larger than their type are treated as arrays of it.
    pub fn on_cast(&self, w: TaggedWord, target: TypeId, types: &TypeRegistry) -> Result<Verdict, MonitorError> {
        let target_size = types
            .size_of(target)
            .map_err(|e| MonitorError::Usage(e.to_string()))?;
        let addr = frame::strip(w, &self.cfg);
        let loc = match self.locate(w) {
            Ok(Some(loc)) => loc,
            Ok(None) => return Ok(Verdict::ok(None)),
            Err(outcome) => return Ok(Verdict::flag(outcome, None, addr, None)),
        };
        let id = loc.object_id;
        if loc.header.state == HeaderState::Freed {
            return Ok(Verdict::flag(Outcome::UseAfterFree, id, addr, None));
        }
        let cast_error = Verdict::flag(Outcome::CastError, id, loc.addr, None);
        let payload_base = loc.md.get() + self.cfg.header_size();
        let size = loc.header.payload_size;
        let Some(offset) = addr.get().checked_sub(payload_base) else {
            return Ok(cast_error);
        };
        if offset >= size || offset + target_size > size {
            return Ok(cast_error);
        }
        let Ok(elem_size) = types.size_of(loc.header.type_id) else {
            return Ok(cast_error);
        };
        let compatible = types
            .type_at_offset(loc.header.type_id, offset % elem_size)
            .is_some_and(|found| types.cast_compatible(found, target));
        Ok(if compatible { Verdict::ok(id) } else { cast_error })
    }

    pub fn on_free(&mut self, w: TaggedWord) -> Result<Verdict, MonitorError> {
        let addr = frame::strip(w, &self.cfg);
        let loc = match self.locate(w) {
            Ok(Some(loc)) => loc,
            Ok(None) => {
                return Err(MonitorError::Usage(format!(
                    "free through untagged word {w}"
                )))
            }
            Err(outcome) => return Ok(Verdict::flag(outcome, None, addr, None)),
        };
        let id = loc.object_id;
        if loc.header.state == HeaderState::Freed {
            return Ok(Verdict::flag(Outcome::DoubleFree, id, addr, None));
        }
        if addr.get() != loc.md.get() + self.cfg.header_size() {
            return Ok(Verdict::flag(Outcome::OutOfBounds, id, addr, None));
        }
        let object_id = id.ok_or(HeapError::MissingMetadata(loc.md.get()))?;
        let record = self.heap.free(object_id)?;
        if let FrameTag::LargeFramed { wrapper_exp } = record.tag {
            let frame = frame::wrapper_frame(record.md_addr, record.extent_hi())?;
            self.table.remove(frame.base, wrapper_exp)?;
        }
        Ok(Verdict::ok(id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BYTE: TypeId = TypeId(0);

    fn monitor() -> Monitor {
        Monitor::new(TagConfig::classic(), HeapConfig::default(), MonitorPolicy::default()).unwrap()
    }

    fn outcome(v: Result<Verdict, MonitorError>) -> Outcome {
        v.unwrap().outcome
    }

    #[test]
    fn outcome_tokens_round_trip() {
        for o in Outcome::ALL {
            assert_eq!(o.token().parse::<Outcome>().unwrap(), o);
            assert_eq!(serde_json::to_string(&o).unwrap(), format!("\"{}\"", o.token()));
        }
        assert!("bogus".parse::<Outcome>().is_err());
    }

    #[test]
    fn small_object_derives_its_header() {
        let mut m = monitor();
        let (w, rec) = m.on_alloc(10, BYTE, 16).unwrap();
        let cfg = *m.config();
        assert_eq!(w.raw() >> 63, 1);
        assert_eq!(frame::derive_small_md(w, &cfg).unwrap(), rec.md_addr);
        assert_eq!(frame::strip(w, &cfg), rec.payload_base);
    }

    #[test]
    fn slot_straddler_gets_exponent_slot_plus_one() {
        let mut m = monitor();
        // Fill so the next header lands 64 bytes below a slot boundary.
        m.on_alloc(32768 - 16 - 48 - 16, BYTE, 16).unwrap();
        let (w, rec) = m.on_alloc(100, BYTE, 16).unwrap();
        let slot = 1u64 << 15;
        assert!(rec.md_addr.get() % slot > rec.extent_hi().get() % slot);
        assert_eq!(rec.tag, FrameTag::LargeFramed { wrapper_exp: 16 });
        assert_eq!(w.raw() >> 63, 0);
        assert_eq!((w.raw() >> 48) & 0x7FFF, 16);
        assert_eq!(m.derive_metadata(w), Ok(Some(rec.md_addr)));
    }

    #[test]
    fn arith_examples() {
        let mut m = monitor();
        let (w, _) = m.on_alloc(64, BYTE, 16).unwrap();
        let (same, v) = m.on_arith(w, 0).unwrap();
        assert_eq!((same, v.outcome), (w, Outcome::Ok));

        let (far, v) = m.on_arith(w, 1 << 15).unwrap();
        assert_eq!(v.outcome, Outcome::InFrameViolation);
        // tag preserved, address moved
        assert_eq!(far.raw() & !((1 << 48) - 1), w.raw() & !((1 << 48) - 1));
        let (back, v) = m.on_arith(far, -(1 << 15)).unwrap();
        assert_eq!(v.outcome, Outcome::InFrameViolation);
        assert_eq!(back, w);
        assert_eq!(outcome(m.on_access(back, 8, AccessKind::Load)), Outcome::Ok);
    }

    #[test]
    fn large_framed_moves_freely_in_frame() {
        let mut m = monitor();
        m.on_alloc(32768 - 16 - 48 - 16, BYTE, 16).unwrap();
        let (w, rec) = m.on_alloc(100, BYTE, 16).unwrap();
        let base = rec.md_addr.get() & !0xFFFF;
        let addr = rec.payload_base.get();
        for target in [base, base + 1, base + 0x7FFF, base + 0x8000, base + 0xFFFF] {
            let delta = target as i64 - addr as i64;
            let (_, v) = m.on_arith(w, delta).unwrap();
            assert_eq!(v.outcome, Outcome::Ok, "{target:#x}");
        }
        let (_, v) = m.on_arith(w, (base + 0x10000 - addr) as i64).unwrap();
        assert_eq!(v.outcome, Outcome::InFrameViolation);
    }

    #[test]
    fn arith_wrap_is_usage_error() {
        let mut m = monitor();
        let (w, _) = m.on_alloc(8, BYTE, 16).unwrap();
        assert!(matches!(m.on_arith(w, i64::MIN), Err(MonitorError::AddressWrap { .. })));
        assert!(matches!(m.on_arith(w, 1 << 48), Err(MonitorError::AddressWrap { .. })));
    }

    #[test]
    fn access_examples() {
        let mut m = monitor();
        let (w, _) = m.on_alloc(10, BYTE, 16).unwrap();
        assert_eq!(outcome(m.on_access(w, 1, AccessKind::Load)), Outcome::Ok);
        let (p8, _) = m.on_arith(w, 8).unwrap();
        // 8 + 4 > 10
        assert_eq!(outcome(m.on_access(p8, 4, AccessKind::Store)), Outcome::OutOfBounds);
        assert_eq!(outcome(m.on_access(p8, 2, AccessKind::Store)), Outcome::Ok);
        let (p9, _) = m.on_arith(w, 9).unwrap();
        assert_eq!(outcome(m.on_access(p9, 1, AccessKind::Load)), Outcome::Ok);
        let (below, _) = m.on_arith(w, -1).unwrap();
        assert_eq!(outcome(m.on_access(below, 1, AccessKind::Load)), Outcome::OutOfBounds);
        assert!(m.on_access(w, 0, AccessKind::Load).is_err());
    }

    #[test]
    fn untagged_words_pass() {
        let m = monitor();
        let w = TaggedWord::from_raw(0x7000_dead_beef);
        assert_eq!(outcome(m.on_access(w, 8, AccessKind::Load)), Outcome::Ok);
    }

    #[test]
    fn use_after_free_and_double_free() {
        let mut m = monitor();
        let (w, _) = m.on_alloc(10, BYTE, 16).unwrap();
        assert_eq!(outcome(m.on_free(w)), Outcome::Ok);
        assert_eq!(outcome(m.on_access(w, 1, AccessKind::Load)), Outcome::UseAfterFree);
        assert_eq!(outcome(m.on_free(w)), Outcome::DoubleFree);
    }

    #[test]
    fn free_interior_is_oob() {
        let mut m = monitor();
        let (w, _) = m.on_alloc(10, BYTE, 16).unwrap();
        let (p1, _) = m.on_arith(w, 1).unwrap();
        assert_eq!(outcome(m.on_free(p1)), Outcome::OutOfBounds);
        assert_eq!(outcome(m.on_free(w)), Outcome::Ok);
    }

    #[test]
    fn large_free_retires_shadow_entry() {
        let mut m = monitor();
        m.on_alloc(32768 - 16 - 48 - 16, BYTE, 16).unwrap();
        let (w, _) = m.on_alloc(100, BYTE, 16).unwrap();
        assert_eq!(m.table().stats().live_entries, 1);
        assert_eq!(outcome(m.on_free(w)), Outcome::Ok);
        assert_eq!(m.table().stats().live_entries, 0);
        assert_eq!(outcome(m.on_access(w, 1, AccessKind::Load)), Outcome::MissingMetadata);
    }

    #[test]
    fn cast_examples() {
        let mut types = TypeRegistry::with_builtins();
        let i32t = types.lookup("int32").unwrap();
        let pair = types
            .register(crate::types::TypeDescriptor::aggregate("pair", 8, vec![(0, i32t), (4, i32t)]))
            .unwrap();
        let mut m = monitor();
        let (w, _) = m.on_alloc(8, pair, 16).unwrap();
        assert_eq!(outcome(m.on_cast(w, pair, &types)), Outcome::Ok);
        let (p4, _) = m.on_arith(w, 4).unwrap();
        assert_eq!(outcome(m.on_cast(p4, i32t, &types)), Outcome::Ok);
        let (p2, _) = m.on_arith(w, 2).unwrap();
        assert_eq!(outcome(m.on_cast(p2, i32t, &types)), Outcome::CastError);
        let (p8, _) = m.on_arith(w, 8).unwrap();
        assert_eq!(outcome(m.on_cast(p8, i32t, &types)), Outcome::CastError);
        assert_eq!(outcome(m.on_cast(p4, pair, &types)), Outcome::CastError);
    }

    #[test]
    fn cast_into_array_element() {
        let mut types = TypeRegistry::with_builtins();
        let i32t = types.lookup("int32").unwrap();
        let pair = types
            .register(crate::types::TypeDescriptor::aggregate("pair", 8, vec![(0, i32t), (4, i32t)]))
            .unwrap();
        let mut m = monitor();
        let (w, _) = m.on_alloc(24, pair, 16).unwrap();
        let (p16, _) = m.on_arith(w, 16).unwrap();
        assert_eq!(outcome(m.on_cast(p16, pair, &types)), Outcome::Ok);
        let (p20, _) = m.on_arith(w, 20).unwrap();
        assert_eq!(outcome(m.on_cast(p20, pair, &types)), Outcome::CastError);
    }
}
