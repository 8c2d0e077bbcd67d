//! Simulated heap over a sparse address space.
//!
//! Every allocation is laid out as `[header | payload]`, with the header
//! immediately below the payload. Payloads get their natural alignment only;
//! objects are never padded or re-aligned to their wrapper frame.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{self, AddressWord, FrameError, FrameTag, TagConfig};
use crate::types::TypeId;

pub const PAGE_SIZE: u64 = 4096;
pub const MAX_ALIGN: u64 = 4096;
pub const DEFAULT_ALIGN: u64 = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HeapError {
    #[error("allocation size must be at least 1")]
    ZeroSize,
    #[error("alignment {0} is not a power of two <= {MAX_ALIGN}")]
    BadAlign(u64),
    #[error("arena exhausted allocating {size} bytes")]
    OutOfSpace { size: u64 },
    #[error("allocation at {md:#x} overlaps a live extent ending at {cursor:#x}")]
    Overlap { md: u64, cursor: u64 },
    #[error("object {0} freed twice")]
    DoubleFree(u64),
    #[error("no metadata header at {0:#x}")]
    MissingMetadata(u64),
    #[error("unknown object id {0}")]
    UnknownObject(u64),
    #[error("invalid heap configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeaderState {
    Live,
    Freed,
}

/// Per-object metadata record stored at `md_addr`.
///
/// Byte layout (little endian): `payload_size: u64`, `type_id: u32`,
/// `state: u8`, 3 reserved bytes, zero padding up to the header size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObjectHeader {
    pub payload_size: u64,
    pub type_id: TypeId,
    pub state: HeaderState,
}

impl ObjectHeader {
    pub const ENCODED_LEN: usize = 16;

    pub fn to_bytes(&self) -> [u8; Self::ENCODED_LEN] {
        let mut out = [0u8; Self::ENCODED_LEN];
        out[0..8].copy_from_slice(&self.payload_size.to_le_bytes());
        out[8..12].copy_from_slice(&self.type_id.0.to_le_bytes());
        out[12] = match self.state {
            HeaderState::Live => 1,
            HeaderState::Freed => 2,
        };
        out
    }

    pub fn from_bytes(bytes: &[u8; Self::ENCODED_LEN]) -> Option<Self> {
        let state = match bytes[12] {
            1 => HeaderState::Live,
            2 => HeaderState::Freed,
            _ => return None,
        };
        Some(Self {
            payload_size: u64::from_le_bytes(bytes[0..8].try_into().unwrap()),
            type_id: TypeId(u32::from_le_bytes(bytes[8..12].try_into().unwrap())),
            state,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Placement {
    Bump,
    /// Random gaps between objects, plus occasional placements that straddle
    /// the next slot boundary.
    RandomizedGaps { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeapConfig {
    pub arena_lo: u64,
    pub arena_hi: u64,
    pub placement: Placement,
}

impl HeapConfig {
    pub const DEFAULT_ARENA_LO: u64 = 0x7000_0000_0000;
    pub const DEFAULT_ARENA_HI: u64 = 0x7FFF_FFFF_FFFF;

    pub fn with_placement(placement: Placement) -> Self {
        Self {
            placement,
            ..Self::default()
        }
    }
}

impl Default for HeapConfig {
    fn default() -> Self {
        Self {
            arena_lo: Self::DEFAULT_ARENA_LO,
            arena_hi: Self::DEFAULT_ARENA_HI,
            placement: Placement::Bump,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationRecord {
    pub object_id: u64,
    pub md_addr: AddressWord,
    pub payload_base: AddressWord,
    pub payload_size: u64,
    pub type_id: TypeId,
    pub tag: FrameTag,
    pub live: bool,
}

impl AllocationRecord {
    pub fn payload_end(&self) -> u64 {
        self.payload_base.get() + self.payload_size
    }

    /// Inclusive last byte of header plus payload.
    pub fn extent_hi(&self) -> AddressWord {
        AddressWord::new(self.payload_end() - 1)
    }
}

/// Page-granular backing store; pages are zero-filled on first touch.
#[derive(Debug, Default, Clone)]
pub struct PageStore {
    pages: HashMap<u64, Box<[u8; PAGE_SIZE as usize]>>,
}

impl PageStore {
    pub fn write(&mut self, addr: u64, bytes: &[u8]) {
        let mut addr = addr;
        let mut rest = bytes;
        while !rest.is_empty() {
            let off = (addr % PAGE_SIZE) as usize;
            let n = rest.len().min(PAGE_SIZE as usize - off);
            let page = self
                .pages
                .entry(addr / PAGE_SIZE)
                .or_insert_with(|| Box::new([0; PAGE_SIZE as usize]));
            page[off..off + n].copy_from_slice(&rest[..n]);
            rest = &rest[n..];
            addr += n as u64;
        }
    }

    /// Untouched pages read as zero and stay unmaterialized.
    pub fn read(&self, addr: u64, out: &mut [u8]) {
        let mut addr = addr;
        let mut done = 0;
        while done < out.len() {
            let off = (addr % PAGE_SIZE) as usize;
            let n = (out.len() - done).min(PAGE_SIZE as usize - off);
            match self.pages.get(&(addr / PAGE_SIZE)) {
                Some(page) => out[done..done + n].copy_from_slice(&page[off..off + n]),
                None => out[done..done + n].fill(0),
            }
            done += n;
            addr += n as u64;
        }
    }

    pub fn resident_pages(&self) -> usize {
        self.pages.len()
    }
}

#[derive(Debug, Clone)]
pub struct SimHeap {
    tag_cfg: TagConfig,
    cfg: HeapConfig,
    memory: PageStore,
    cursor: u64,
    records: Vec<AllocationRecord>,
    headers: HashMap<u64, u64>,
    rng: Option<ChaCha8Rng>,
}

impl SimHeap {
    pub fn new(tag_cfg: TagConfig, cfg: HeapConfig) -> Result<Self, HeapError> {
        if cfg.arena_lo >= cfg.arena_hi || cfg.arena_hi & !tag_cfg.addr_mask() != 0 {
            return Err(HeapError::Config(format!(
                "arena [{:#x}, {:#x}] is empty or exceeds {} address bits",
                cfg.arena_lo,
                cfg.arena_hi,
                tag_cfg.addr_bits()
            )));
        }
        let rng = match cfg.placement {
            Placement::Bump => None,
            Placement::RandomizedGaps { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        };
        Ok(Self {
            tag_cfg,
            cfg,
            memory: PageStore::default(),
            cursor: cfg.arena_lo,
            records: Vec::new(),
            headers: HashMap::new(),
            rng,
        })
    }

    pub fn tag_config(&self) -> &TagConfig {
        &self.tag_cfg
    }

    pub fn config(&self) -> &HeapConfig {
        &self.cfg
    }

    fn placement_start(&mut self, extent: u64) -> u64 {
        let Some(rng) = self.rng.as_mut() else {
            return self.cursor;
        };
        let mut start = self.cursor + rng.gen_range(0..64u64) * 16;
        if rng.gen_ratio(1, 8) {
            let slot = self.tag_cfg.slot_size();
            let boundary = (start / slot + 1) * slot;
            // Only jump when the boundary is close, to keep the arena dense.
            if boundary - start <= 8192 {
                let into = rng.gen_range(1..extent);
                start = start.max(boundary - into);
            }
        }
        start
    }

    pub fn alloc(&mut self, size: u64, type_id: TypeId, align: u64) -> Result<AllocationRecord, HeapError> {
        if size == 0 {
            return Err(HeapError::ZeroSize);
        }
        if !align.is_power_of_two() || align > MAX_ALIGN {
            return Err(HeapError::BadAlign(align));
        }
        let header = self.tag_cfg.header_size();
        let start = self.placement_start(header.saturating_add(size));
        let oos = HeapError::OutOfSpace { size };
        let payload_base = start
            .checked_add(header + align - 1)
            .map(|v| v & !(align - 1))
            .ok_or(oos.clone())?;
        let md_addr = payload_base - header;
        let end = payload_base.checked_add(size).ok_or(oos.clone())?;
        if end - 1 > self.cfg.arena_hi {
            return Err(oos);
        }
        if md_addr < self.cursor {
            return Err(HeapError::Overlap {
                md: md_addr,
                cursor: self.cursor,
            });
        }
        self.cursor = end;

        let md = AddressWord::new(md_addr);
        let tag = frame::categorize(md, AddressWord::new(end - 1), md, &self.tag_cfg)?;
        let record = AllocationRecord {
            object_id: self.records.len() as u64,
            md_addr: md,
            payload_base: AddressWord::new(payload_base),
            payload_size: size,
            type_id,
            tag,
            live: true,
        };
        let hdr = ObjectHeader {
            payload_size: size,
            type_id,
            state: HeaderState::Live,
        };
        self.write_header(md_addr, &hdr);
        self.headers.insert(md_addr, record.object_id);
        self.records.push(record);
        Ok(record)
    }

    fn write_header(&mut self, md_addr: u64, hdr: &ObjectHeader) {
        let mut bytes = vec![0u8; self.tag_cfg.header_size() as usize];
        bytes[..ObjectHeader::ENCODED_LEN].copy_from_slice(&hdr.to_bytes());
        self.memory.write(md_addr, &bytes);
    }

    /// Marks the object freed. The header stays in place (quarantined) so
    /// stale words still find it.
    pub fn free(&mut self, object_id: u64) -> Result<AllocationRecord, HeapError> {
        let record = self
            .records
            .get_mut(object_id as usize)
            .ok_or(HeapError::UnknownObject(object_id))?;
        if !record.live {
            return Err(HeapError::DoubleFree(object_id));
        }
        record.live = false;
        let record = *record;
        let hdr = ObjectHeader {
            payload_size: record.payload_size,
            type_id: record.type_id,
            state: HeaderState::Freed,
        };
        self.write_header(record.md_addr.get(), &hdr);
        Ok(record)
    }

    pub fn read_header(&self, md_addr: AddressWord) -> Result<ObjectHeader, HeapError> {
        let missing = HeapError::MissingMetadata(md_addr.get());
        if !self.headers.contains_key(&md_addr.get()) {
            return Err(missing);
        }
        let mut bytes = [0u8; ObjectHeader::ENCODED_LEN];
        self.memory.read(md_addr.get(), &mut bytes);
        ObjectHeader::from_bytes(&bytes).ok_or(missing)
    }

    pub fn object_at_header(&self, md_addr: AddressWord) -> Option<u64> {
        self.headers.get(&md_addr.get()).copied()
    }

    pub fn record(&self, object_id: u64) -> Option<&AllocationRecord> {
        self.records.get(object_id as usize)
    }

    /// Every allocation made so far, in order; freed ones included.
    pub fn records(&self) -> &[AllocationRecord] {
        &self.records
    }

    pub fn write_bytes(&mut self, addr: AddressWord, bytes: &[u8]) {
        self.memory.write(addr.get(), bytes);
    }

    pub fn read_bytes(&self, addr: AddressWord, out: &mut [u8]) {
        self.memory.read(addr.get(), out);
    }

    pub fn resident_pages(&self) -> usize {
        self.memory.resident_pages()
    }
}
