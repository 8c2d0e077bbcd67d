//! Frame algebra: frames, wrapper frames, slots and the tag encoding.
//!
//! A *frame* is a `2^k`-byte block aligned to its own size. Every object
//! (header plus payload) has exactly one *wrapper frame*, the smallest frame
//! containing it. The address space is also cut into fixed *slots* of
//! `2^slot_exp` bytes, where `slot_exp + 1` is the number of spare bits.
//!
//! Tagged word layout (classic 48/16 configuration):
//!
//! ```text
//!  63  62 ........ 48 47 ............................ 0
//! +----+-------------+--------------------------------+
//! |flag| tag field   |            address             |
//! +----+-------------+--------------------------------+
//! ```
//!
//! The tag field always sits directly below the flag and is `spare_bits - 1`
//! wide. When `addr_bits + spare_bits < 64` (e.g. the 8-bit top-byte mode)
//! the bits between the address and the tag field must be zero.
//!
//! * `flag = 1`: small-framed, the field is the offset of the metadata
//!   header from the slot base.
//! * `flag = 0`, field `N != 0`: large-framed, `N = log2(wrapper frame size)`.
//! * `flag = 0`, field `0`: untagged; all checks are skipped.
//!
//! Everything here is a pure function of its inputs.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("invalid tag configuration: {0}")]
    Config(String),
    #[error("inverted bounds: lo {lo:#x} > hi {hi:#x}")]
    InvertedBounds { lo: u64, hi: u64 },
    #[error("address {addr:#x} does not fit in {addr_bits} address bits")]
    AddressRange { addr: u64, addr_bits: u32 },
    #[error("tag {0:?} does not fit the tag field")]
    Encoding(FrameTag),
    #[error("malformed tagged word {0:#018x}")]
    MalformedTag(u64),
    #[error("word {0:#018x} is not small-framed")]
    NotSmallFramed(u64),
}

/// Geometry of the tagged-address scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagConfig {
    addr_bits: u32,
    spare_bits: u32,
    header_size: u64,
}

impl TagConfig {
    pub const DEFAULT_ADDR_BITS: u32 = 48;
    pub const DEFAULT_HEADER_SIZE: u64 = 16;

    pub fn new(addr_bits: u32, spare_bits: u32, header_size: u64) -> Result<Self, FrameError> {
        if spare_bits < 2 {
            return Err(FrameError::Config(format!(
                "spare_bits must be at least 2, got {spare_bits}"
            )));
        }
        if addr_bits + spare_bits > 64 {
            return Err(FrameError::Config(format!(
                "addr_bits {addr_bits} + spare_bits {spare_bits} exceeds 64"
            )));
        }
        let slot_exp = spare_bits - 1;
        if slot_exp >= addr_bits {
            return Err(FrameError::Config(format!(
                "slot exponent {slot_exp} must be below addr_bits {addr_bits}"
            )));
        }
        // Large-framed words carry N <= addr_bits in the tag field.
        if u64::from(addr_bits) >= 1u64 << slot_exp {
            return Err(FrameError::Config(format!(
                "a {slot_exp}-bit tag field cannot hold wrapper exponents up to {addr_bits}"
            )));
        }
        if header_size < 16 || !header_size.is_power_of_two() {
            return Err(FrameError::Config(format!(
                "header_size must be a power of two >= 16, got {header_size}"
            )));
        }
        Ok(Self {
            addr_bits,
            spare_bits,
            header_size,
        })
    }

    /// 48-bit addresses with 16 spare bits (15-bit slot offsets).
    pub fn classic() -> Self {
        Self::new(Self::DEFAULT_ADDR_BITS, 16, Self::DEFAULT_HEADER_SIZE).unwrap()
    }

    /// Top-byte-ignore layout: flag plus a 7-bit field in the top byte.
    pub fn tbi() -> Self {
        Self::new(Self::DEFAULT_ADDR_BITS, 8, Self::DEFAULT_HEADER_SIZE).unwrap()
    }

    /// Default 48-bit configuration with the given spare-bit width.
    pub fn with_spare_bits(spare_bits: u32) -> Result<Self, FrameError> {
        Self::new(Self::DEFAULT_ADDR_BITS, spare_bits, Self::DEFAULT_HEADER_SIZE)
    }

    pub fn addr_bits(&self) -> u32 {
        self.addr_bits
    }

    pub fn spare_bits(&self) -> u32 {
        self.spare_bits
    }

    pub fn slot_exp(&self) -> u32 {
        self.spare_bits - 1
    }

    pub fn slot_size(&self) -> u64 {
        1 << self.slot_exp()
    }

    pub fn header_size(&self) -> u64 {
        self.header_size
    }

    pub fn addr_mask(&self) -> u64 {
        low_mask(self.addr_bits)
    }

    fn field_shift(&self) -> u32 {
        64 - self.spare_bits
    }

    fn field_mask(&self) -> u64 {
        low_mask(self.slot_exp())
    }
}

impl Default for TagConfig {
    fn default() -> Self {
        Self::classic()
    }
}

#[inline]
fn low_mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

#[inline]
fn clear_low(value: u64, bits: u32) -> u64 {
    value & !low_mask(bits)
}

/// An untagged address in the simulated space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AddressWord(u64);

impl AddressWord {
    pub const fn new(value: u64) -> Self {
        Self(value)
    }

    pub const fn get(self) -> u64 {
        self.0
    }

    pub fn checked(value: u64, cfg: &TagConfig) -> Result<Self, FrameError> {
        if value & !cfg.addr_mask() != 0 {
            return Err(FrameError::AddressRange {
                addr: value,
                addr_bits: cfg.addr_bits,
            });
        }
        Ok(Self(value))
    }
}

impl fmt::Display for AddressWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

/// A 64-bit word that may carry a [`FrameTag`] in its spare bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaggedWord(u64);

impl TaggedWord {
    pub const fn from_raw(value: u64) -> Self {
        Self(value)
    }

    pub const fn raw(self) -> u64 {
        self.0
    }
}

impl fmt::Display for TaggedWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#018x}", self.0)
    }
}

impl From<AddressWord> for TaggedWord {
    fn from(addr: AddressWord) -> Self {
        Self(addr.0)
    }
}

/// Decoded tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrameTag {
    /// Metadata sits `offset` bytes above the slot base.
    SmallFramed { offset: u64 },
    /// Wrapper frame of `2^wrapper_exp` bytes; metadata in the shadow table.
    LargeFramed { wrapper_exp: u32 },
    Untagged,
}

impl FrameTag {
    pub fn is_large(&self) -> bool {
        matches!(self, FrameTag::LargeFramed { .. })
    }

    /// Exponent of the reference frame used by the in-frame check.
    pub fn reference_exp(&self, cfg: &TagConfig) -> Option<u32> {
        match *self {
            FrameTag::SmallFramed { .. } => Some(cfg.slot_exp()),
            FrameTag::LargeFramed { wrapper_exp } => Some(wrapper_exp),
            FrameTag::Untagged => None,
        }
    }

    fn validate(&self, cfg: &TagConfig) -> Result<(), FrameError> {
        let ok = match *self {
            FrameTag::SmallFramed { offset } => offset < cfg.slot_size(),
            FrameTag::LargeFramed { wrapper_exp } => {
                wrapper_exp > cfg.slot_exp() && wrapper_exp <= cfg.addr_bits
            }
            FrameTag::Untagged => true,
        };
        if ok {
            Ok(())
        } else {
            Err(FrameError::Encoding(*self))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WrapperFrame {
    pub exp: u32,
    pub base: AddressWord,
}

impl WrapperFrame {
    /// Frame size in bytes; saturates for a full 64-bit frame.
    pub fn size(&self) -> u64 {
        if self.exp >= 64 {
            u64::MAX
        } else {
            1 << self.exp
        }
    }

    pub fn contains(&self, addr: AddressWord) -> bool {
        clear_low(addr.get(), self.exp) == self.base.get()
    }
}

/// Smallest frame containing the inclusive range `[lo, hi]`.
pub fn wrapper_frame(lo: AddressWord, hi: AddressWord) -> Result<WrapperFrame, FrameError> {
    if lo > hi {
        return Err(FrameError::InvertedBounds {
            lo: lo.get(),
            hi: hi.get(),
        });
    }
    let exp = 64 - (lo.get() ^ hi.get()).leading_zeros();
    Ok(WrapperFrame {
        exp,
        base: AddressWord(clear_low(lo.get(), exp)),
    })
}

/// Chooses the tag for an object whose full extent is `[range_lo, range_hi]`
/// and whose header starts at `md_addr`.
///
/// A wrapper exponent equal to `slot_exp` still fits in one slot and is
/// treated as small-framed.
pub fn categorize(
    range_lo: AddressWord,
    range_hi: AddressWord,
    md_addr: AddressWord,
    cfg: &TagConfig,
) -> Result<FrameTag, FrameError> {
    let frame = wrapper_frame(range_lo, range_hi)?;
    if frame.exp <= cfg.slot_exp() {
        let slot_base = clear_low(md_addr.get(), cfg.slot_exp());
        Ok(FrameTag::SmallFramed {
            offset: md_addr.get() - slot_base,
        })
    } else {
        Ok(FrameTag::LargeFramed {
            wrapper_exp: frame.exp,
        })
    }
}

pub fn encode(addr: AddressWord, tag: FrameTag, cfg: &TagConfig) -> Result<TaggedWord, FrameError> {
    let addr = AddressWord::checked(addr.get(), cfg)?;
    tag.validate(cfg)?;
    let word = match tag {
        FrameTag::SmallFramed { offset } => (1u64 << 63) | (offset << cfg.field_shift()) | addr.get(),
        FrameTag::LargeFramed { wrapper_exp } => {
            (u64::from(wrapper_exp) << cfg.field_shift()) | addr.get()
        }
        FrameTag::Untagged => addr.get(),
    };
    Ok(TaggedWord(word))
}

pub fn decode(w: TaggedWord, cfg: &TagConfig) -> Result<(AddressWord, FrameTag), FrameError> {
    let raw = w.raw();
    let flag = raw >> 63 == 1;
    let field = (raw >> cfg.field_shift()) & cfg.field_mask();
    let gap_mask = !cfg.addr_mask() & low_mask(cfg.field_shift());
    if raw & gap_mask != 0 {
        return Err(FrameError::MalformedTag(raw));
    }
    let addr = AddressWord(raw & cfg.addr_mask());
    let tag = if flag {
        FrameTag::SmallFramed { offset: field }
    } else if field == 0 {
        FrameTag::Untagged
    } else if field <= u64::from(cfg.slot_exp()) || field > u64::from(cfg.addr_bits) {
        return Err(FrameError::MalformedTag(raw));
    } else {
        FrameTag::LargeFramed {
            wrapper_exp: field as u32,
        }
    };
    Ok((addr, tag))
}

/// Address bits only. Idempotent.
pub fn strip(w: TaggedWord, cfg: &TagConfig) -> AddressWord {
    AddressWord(w.raw() & cfg.addr_mask())
}

/// Header address of a small-framed object: slot base of the word plus the
/// tagged offset.
pub fn derive_small_md(w: TaggedWord, cfg: &TagConfig) -> Result<AddressWord, FrameError> {
    match decode(w, cfg)? {
        (addr, FrameTag::SmallFramed { offset }) => {
            Ok(AddressWord(clear_low(addr.get(), cfg.slot_exp()) + offset))
        }
        _ => Err(FrameError::NotSmallFramed(w.raw())),
    }
}

/// XOR check between the source word's address and the arithmetic result.
/// Malformed source words are never in frame.
pub fn in_frame(src: TaggedWord, result_addr: AddressWord, cfg: &TagConfig) -> bool {
    let Ok((addr, tag)) = decode(src, cfg) else {
        return false;
    };
    match tag.reference_exp(cfg) {
        Some(exp) => (addr.get() ^ result_addr.get()).checked_shr(exp).unwrap_or(0) == 0,
        None => true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn a(v: u64) -> AddressWord {
        AddressWord::new(v)
    }

    /// Smallest N such that both ends agree above bit N.
    fn scan_wrapper_exp(lo: u64, hi: u64) -> u32 {
        (0..=64u32)
            .find(|&n| lo.checked_shr(n).unwrap_or(0) == hi.checked_shr(n).unwrap_or(0))
            .unwrap()
    }

    /// Packs a word with plain shifts and ors, independent of `encode`.
    fn pack(flag: bool, field: u64, addr: u64, spare: u32) -> u64 {
        let mut w = addr;
        w |= field << (64 - spare);
        if flag {
            w |= 1 << 63;
        }
        w
    }

    #[test]
    fn wrapper_frame_examples() {
        let f = wrapper_frame(a(0x1000), a(0x1000)).unwrap();
        assert_eq!((f.exp, f.base), (0, a(0x1000)));

        assert_eq!(scan_wrapper_exp(0x7FF8, 0x8007), 16);
        let f = wrapper_frame(a(0x7FF8), a(0x8007)).unwrap();
        assert_eq!((f.exp, f.base), (16, a(0)));

        assert_eq!(scan_wrapper_exp(0x1010, 0x101F), 4);
        let f = wrapper_frame(a(0x1010), a(0x101F)).unwrap();
        assert_eq!((f.exp, f.base), (4, a(0x1010)));
    }

    #[test]
    fn wrapper_frame_rejects_inverted() {
        assert!(matches!(
            wrapper_frame(a(5), a(4)),
            Err(FrameError::InvertedBounds { .. })
        ));
    }

    #[test]
    fn categorize_examples() {
        let cfg = TagConfig::classic();
        assert_eq!(scan_wrapper_exp(0x700012340010, 0x70001234003F), 6);
        let t = categorize(a(0x700012340010), a(0x70001234003F), a(0x700012340010), &cfg).unwrap();
        assert_eq!(t, FrameTag::SmallFramed { offset: 0x10 });

        assert_eq!(scan_wrapper_exp(0x700012347FF0, 0x700012348010), 16);
        let t = categorize(a(0x700012347FF0), a(0x700012348010), a(0x700012347FF0), &cfg).unwrap();
        assert_eq!(t, FrameTag::LargeFramed { wrapper_exp: 16 });

        for cfg in [TagConfig::classic(), TagConfig::tbi()] {
            let t = categorize(a(0x123457), a(0x123457), a(0x123457), &cfg).unwrap();
            assert!(matches!(t, FrameTag::SmallFramed { .. }));
        }
    }

    #[test]
    fn slot_sized_frame_is_small() {
        let cfg = TagConfig::classic();
        let t = categorize(a(0x8000), a(0xFFFF), a(0x8000), &cfg).unwrap();
        assert_eq!(t, FrameTag::SmallFramed { offset: 0 });
    }

    #[test]
    fn encode_examples() {
        let cfg = TagConfig::classic();
        let w = encode(a(0x700012340010), FrameTag::SmallFramed { offset: 0x10 }, &cfg).unwrap();
        assert_eq!(w.raw(), pack(true, 0x10, 0x700012340010, 16));
        assert_eq!(w.raw(), 0x8010700012340010);

        let w = encode(a(0x700012347FF0), FrameTag::LargeFramed { wrapper_exp: 16 }, &cfg).unwrap();
        assert_eq!(w.raw(), pack(false, 16, 0x700012347FF0, 16));
        assert_eq!(w.raw(), 0x0010700012347FF0);

        let w = encode(a(0x700012347FF0), FrameTag::Untagged, &cfg).unwrap();
        assert_eq!(w.raw(), 0x700012347FF0);
    }

    #[test]
    fn encode_rejects_out_of_field() {
        let cfg = TagConfig::classic();
        assert!(encode(a(0x1000), FrameTag::SmallFramed { offset: 1 << 15 }, &cfg).is_err());
        assert!(encode(a(0x1000), FrameTag::LargeFramed { wrapper_exp: 15 }, &cfg).is_err());
        assert!(encode(a(0x1000), FrameTag::LargeFramed { wrapper_exp: 49 }, &cfg).is_err());
        assert!(encode(a(1 << 48), FrameTag::Untagged, &cfg).is_err());

        let tbi = TagConfig::tbi();
        assert!(encode(a(0x1000), FrameTag::SmallFramed { offset: 128 }, &tbi).is_err());
        assert!(encode(a(0x1000), FrameTag::LargeFramed { wrapper_exp: 8 }, &tbi).is_ok());
    }

    #[test]
    fn decode_examples() {
        let cfg = TagConfig::classic();
        assert_eq!(
            decode(TaggedWord::from_raw(0x8010700012340010), &cfg).unwrap(),
            (a(0x700012340010), FrameTag::SmallFramed { offset: 0x10 })
        );
        assert_eq!(
            decode(TaggedWord::from_raw(0x0010700012347FF0), &cfg).unwrap(),
            (a(0x700012347FF0), FrameTag::LargeFramed { wrapper_exp: 16 })
        );
        assert_eq!(
            decode(TaggedWord::from_raw(0x700012347FF0), &cfg).unwrap(),
            (a(0x700012347FF0), FrameTag::Untagged)
        );
    }

    #[test]
    fn decode_rejects_small_large_exponent() {
        let cfg = TagConfig::classic();
        for n in 1..=15u64 {
            let w = TaggedWord::from_raw(pack(false, n, 0x1234, 16));
            assert!(matches!(decode(w, &cfg), Err(FrameError::MalformedTag(_))));
        }
        let w = TaggedWord::from_raw(pack(false, 49, 0x1234, 16));
        assert!(decode(w, &cfg).is_err());
    }

    #[test]
    fn tbi_gap_bits_must_be_zero() {
        let cfg = TagConfig::tbi();
        let w = TaggedWord::from_raw(1 << 50 | 0x1234);
        assert!(decode(w, &cfg).is_err());
        assert_eq!(strip(w, &cfg), a(0x1234));
    }

    #[test]
    fn strip_examples() {
        let cfg = TagConfig::classic();
        let w = TaggedWord::from_raw(0x8010700012340010);
        assert_eq!(strip(w, &cfg), a(0x700012340010 & ((1 << 48) - 1)));
        assert_eq!(strip(w, &cfg), a(0x700012340010));
        assert_eq!(strip(TaggedWord::from_raw(0x4242), &cfg), a(0x4242));
        let once = strip(w, &cfg);
        assert_eq!(strip(once.into(), &cfg), once);
    }

    #[test]
    fn derive_small_md_examples() {
        let cfg = TagConfig::classic();
        let w = TaggedWord::from_raw(0x8010700012345678);
        // (addr & !(2^15 - 1)) + 0x10
        assert_eq!(
            derive_small_md(w, &cfg).unwrap(),
            a((0x700012345678 / 0x8000) * 0x8000 + 0x10)
        );
        assert_eq!(derive_small_md(w, &cfg).unwrap(), a(0x700012340010));

        let base = encode(a(0x700012340000), FrameTag::SmallFramed { offset: 0 }, &cfg).unwrap();
        assert_eq!(derive_small_md(base, &cfg).unwrap(), a(0x700012340000));

        let tbi = TagConfig::tbi();
        let w = encode(a(0x700012345F3A), FrameTag::SmallFramed { offset: 0x10 }, &tbi).unwrap();
        assert_eq!(derive_small_md(w, &tbi).unwrap(), a((0x700012345F3A / 128) * 128 + 0x10));
        assert_eq!(derive_small_md(w, &tbi).unwrap(), a(0x700012345F10));

        let large = encode(a(0x1000), FrameTag::LargeFramed { wrapper_exp: 20 }, &cfg).unwrap();
        assert!(matches!(
            derive_small_md(large, &cfg),
            Err(FrameError::NotSmallFramed(_))
        ));
    }

    /// Same-frame test by comparing frame bases.
    fn same_frame(x: u64, y: u64, exp: u32) -> bool {
        let size = 1u128 << exp;
        (x as u128 / size) == (y as u128 / size)
    }

    #[test]
    fn in_frame_examples() {
        let cfg = TagConfig::classic();
        let small = encode(a(0x700012347FFF), FrameTag::SmallFramed { offset: 0 }, &cfg).unwrap();
        assert!(in_frame(small, a(0x700012347FFF), &cfg));
        assert!(!same_frame(0x700012347FFF, 0x700012348000, 15));
        assert!(!in_frame(small, a(0x700012348000), &cfg));

        let large = encode(a(0x700012340000), FrameTag::LargeFramed { wrapper_exp: 16 }, &cfg).unwrap();
        assert!(same_frame(0x700012340000, 0x700012340000 + 0xFFFF, 16));
        assert!(in_frame(large, a(0x700012340000 + 0xFFFF), &cfg));
        assert!(!same_frame(0x700012340000, 0x700012340000 + 0x10000, 16));
        assert!(!in_frame(large, a(0x700012340000 + 0x10000), &cfg));

        let untagged = TaggedWord::from_raw(0x1000);
        assert!(in_frame(untagged, a(0xFFFF_FFFF), &cfg));
    }

    #[test]
    fn config_validation() {
        assert!(TagConfig::new(48, 16, 16).is_ok());
        assert!(TagConfig::new(48, 8, 16).is_ok());
        assert!(TagConfig::new(24, 16, 16).is_ok());
        assert!(TagConfig::new(56, 16, 16).is_err());
        assert!(TagConfig::new(48, 16, 8).is_err());
        assert!(TagConfig::new(48, 16, 24).is_err());
        // 5-bit field can't hold exponents up to 48
        assert!(TagConfig::new(48, 6, 16).is_err());
        assert_eq!(TagConfig::tbi().slot_exp(), 7);
        assert_eq!(TagConfig::classic().slot_exp(), 15);
    }

    fn arb_cfg() -> impl Strategy<Value = TagConfig> {
        prop_oneof![Just(TagConfig::classic()), Just(TagConfig::tbi())]
    }

    fn arb_tag(cfg: TagConfig) -> impl Strategy<Value = FrameTag> {
        prop_oneof![
            (0..cfg.slot_size()).prop_map(|offset| FrameTag::SmallFramed { offset }),
            (cfg.slot_exp() + 1..=cfg.addr_bits())
                .prop_map(|wrapper_exp| FrameTag::LargeFramed { wrapper_exp }),
            Just(FrameTag::Untagged),
        ]
    }

    proptest! {
        #[test]
        fn round_trip(
            (cfg, tag, addr) in arb_cfg().prop_flat_map(|cfg| {
                (Just(cfg), arb_tag(cfg), 0..(1u64 << cfg.addr_bits()))
            })
        ) {
            let w = encode(a(addr), tag, &cfg).unwrap();
            prop_assert_eq!(decode(w, &cfg).unwrap(), (a(addr), tag));
            prop_assert_eq!(strip(w, &cfg), a(addr));
        }

        #[test]
        fn minimality(lo in 0u64..(1 << 48), len in 0u64..(1 << 20)) {
            let hi = lo + len;
            let f = wrapper_frame(a(lo), a(hi)).unwrap();
            prop_assert!(f.contains(a(lo)) && f.contains(a(hi)));
            if f.exp > 0 {
                let smaller = f.exp - 1;
                prop_assert!(clear_low(lo, smaller) != clear_low(hi, smaller));
            }
        }

        #[test]
        fn slot_stability(lo in 0u64..(1 << 30), len in 0u64..4096, pick in any::<u64>()) {
            let cfg = TagConfig::tbi();
            let hi = lo + len;
            if let FrameTag::SmallFramed { offset } = categorize(a(lo), a(hi), a(lo), &cfg).unwrap() {
                let inside = lo + pick % (len + 1);
                let w = encode(a(inside), FrameTag::SmallFramed { offset }, &cfg).unwrap();
                prop_assert_eq!(derive_small_md(w, &cfg).unwrap(), a(lo));
            }
        }

        #[test]
        fn straddling_is_large(slot in 1u64..(1 << 20), before in 1u64..4096, after in 0u64..4096) {
            for cfg in [TagConfig::classic(), TagConfig::tbi()] {
                let boundary = slot << cfg.slot_exp();
                let lo = boundary - before;
                let hi = boundary + after;
                let t = categorize(a(lo), a(hi), a(lo), &cfg).unwrap();
                let is_large = matches!(t, FrameTag::LargeFramed { wrapper_exp } if wrapper_exp > cfg.slot_exp());
                prop_assert!(is_large);
            }
        }
    }
}
