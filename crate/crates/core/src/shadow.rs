//! Shadow table for large-framed objects.
//!
//! One [`SlotRecord`] per slot that hosts the base of at least one live large
//! wrapper frame. Each record has one division per wrapper exponent
//! `N in (slot_exp, addr_bits]`, holding the header address of the object
//! whose wrapper frame is `(base, N)`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{AddressWord, TagConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShadowError {
    #[error("frame base {base:#x} is not aligned to 2^{exp}")]
    Misaligned { base: u64, exp: u32 },
    #[error("exponent {exp} is not a large-frame exponent")]
    BadExponent { exp: u32 },
    #[error("shadow entry collision at base {base:#x}, exp {exp}: live md {existing:#x}")]
    Collision { base: u64, exp: u32, existing: u64 },
    #[error("no shadow entry for base {base:#x}, exp {exp}")]
    Missing { base: u64, exp: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotRecord {
    pub slot_index: u64,
    /// `divisions[N - slot_exp - 1]` holds the md address for exponent `N`.
    divisions: Box<[Option<AddressWord>]>,
}

impl SlotRecord {
    fn new(slot_index: u64, len: usize) -> Self {
        Self {
            slot_index,
            divisions: vec![None; len].into_boxed_slice(),
        }
    }

    fn is_empty(&self) -> bool {
        self.divisions.iter().all(Option::is_none)
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, AddressWord)> + '_ {
        self.divisions
            .iter()
            .enumerate()
            .filter_map(|(i, md)| md.map(|md| (i, md)))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableStats {
    pub live_entries: u64,
    pub peak_entries: u64,
    pub live_slots: u64,
    pub peak_slots: u64,
    /// Bytes held by currently materialized slot records.
    pub resident_bytes: u64,
    pub peak_resident_bytes: u64,
}

#[derive(Debug, Clone)]
pub struct ShadowTable {
    cfg: TagConfig,
    slots: HashMap<u64, SlotRecord>,
    stats: TableStats,
}

impl ShadowTable {
    pub fn new(cfg: TagConfig) -> Self {
        Self {
            cfg,
            slots: HashMap::new(),
            stats: TableStats::default(),
        }
    }

    fn divisions(&self) -> usize {
        (self.cfg.addr_bits() - self.cfg.slot_exp()) as usize
    }

    /// Size of one slot record: one 8-byte metadata address per division.
    pub fn record_bytes(cfg: &TagConfig) -> u64 {
        8 * u64::from(cfg.addr_bits() - cfg.slot_exp())
    }

    pub fn stats(&self) -> TableStats {
        self.stats
    }

    fn division_index(&self, exp: u32) -> Result<usize, ShadowError> {
        if exp <= self.cfg.slot_exp() || exp > self.cfg.addr_bits() {
            return Err(ShadowError::BadExponent { exp });
        }
        Ok((exp - self.cfg.slot_exp() - 1) as usize)
    }

    fn frame_base(addr: u64, exp: u32) -> u64 {
        addr & !((1u64 << exp) - 1)
    }

    pub fn insert(
        &mut self,
        base: AddressWord,
        exp: u32,
        md_addr: AddressWord,
    ) -> Result<(), ShadowError> {
        let idx = self.division_index(exp)?;
        if Self::frame_base(base.get(), exp) != base.get() {
            return Err(ShadowError::Misaligned {
                base: base.get(),
                exp,
            });
        }
        let slot_index = base.get() >> self.cfg.slot_exp();
        let len = self.divisions();
        let record_bytes = Self::record_bytes(&self.cfg);
        let stats = &mut self.stats;
        let record = self.slots.entry(slot_index).or_insert_with(|| {
            stats.live_slots += 1;
            stats.resident_bytes += record_bytes;
            SlotRecord::new(slot_index, len)
        });
        if let Some(existing) = record.divisions[idx] {
            return Err(ShadowError::Collision {
                base: base.get(),
                exp,
                existing: existing.get(),
            });
        }
        record.divisions[idx] = Some(md_addr);
        stats.live_entries += 1;
        stats.peak_entries = stats.peak_entries.max(stats.live_entries);
        stats.peak_slots = stats.peak_slots.max(stats.live_slots);
        stats.peak_resident_bytes = stats.peak_resident_bytes.max(stats.resident_bytes);
        Ok(())
    }

    /// Header address for the large frame of exponent `exp` containing `addr`.
    pub fn lookup(&self, addr: AddressWord, exp: u32) -> Result<AddressWord, ShadowError> {
        let idx = self.division_index(exp)?;
        let base = Self::frame_base(addr.get(), exp);
        self.slots
            .get(&(base >> self.cfg.slot_exp()))
            .and_then(|r| r.divisions[idx])
            .ok_or(ShadowError::Missing { base, exp })
    }

    pub fn remove(&mut self, base: AddressWord, exp: u32) -> Result<(), ShadowError> {
        let idx = self.division_index(exp)?;
        let slot_index = base.get() >> self.cfg.slot_exp();
        let missing = ShadowError::Missing {
            base: base.get(),
            exp,
        };
        if Self::frame_base(base.get(), exp) != base.get() {
            return Err(missing);
        }
        let record = self.slots.get_mut(&slot_index).ok_or(missing.clone())?;
        if record.divisions[idx].take().is_none() {
            return Err(missing);
        }
        self.stats.live_entries -= 1;
        if record.is_empty() {
            self.slots.remove(&slot_index);
            self.stats.live_slots -= 1;
            self.stats.resident_bytes -= Self::record_bytes(&self.cfg);
        }
        Ok(())
    }

    pub fn slot(&self, slot_index: u64) -> Option<&SlotRecord> {
        self.slots.get(&slot_index)
    }
}
