//! Run report: per-event verdicts, discrepancy table, counters and memory
//! accounting. Serialized as JSON; `summary()` renders a text table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::frame::{FrameTag, TagConfig};
use crate::heap::Placement;
use crate::monitor::{Outcome, Verdict, ViolationPolicy};
use crate::oracle::{Classification, Discrepancy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub addr_bits: u32,
    pub spare_bits: u32,
    pub slot_exp: u32,
    pub header_size: u64,
    pub placement: Placement,
    pub policy: ViolationPolicy,
    pub arithmetic_check: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub index: usize,
    pub line: usize,
    pub op: String,
    pub var: String,
    /// Untagged address the monitor checked.
    pub address: u64,
    pub monitor: Verdict,
    pub oracle: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectFailure {
    pub line: usize,
    pub event: Option<usize>,
    pub expected: Outcome,
    pub actual: Option<Outcome>,
}

/// One allocation, with the statement steps at which it was made and freed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationEntry {
    pub object_id: u64,
    pub name: String,
    pub step: usize,
    pub md_addr: u64,
    pub payload_base: u64,
    pub payload_size: u64,
    pub tag: FrameTag,
    pub freed_step: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub objects: u64,
    pub small_framed: u64,
    pub large_framed: u64,
    /// Large-framed objects whose header plus payload fits in one slot.
    pub small_sized_large_framed: u64,
    pub events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryAccounting {
    pub header_bytes: u64,
    /// Peak resident bytes of the shadow table over the run.
    pub table_resident_bytes: u64,
    pub payload_bytes: u64,
    /// `(header_bytes + table_resident_bytes) / payload_bytes`, 0 when no
    /// payload was allocated.
    pub overhead_ratio: f64,
}

impl MemoryAccounting {
    pub fn new(header_bytes: u64, table_resident_bytes: u64, payload_bytes: u64) -> Self {
        let overhead_ratio = if payload_bytes == 0 {
            0.0
        } else {
            (header_bytes + table_resident_bytes) as f64 / payload_bytes as f64
        };
        Self {
            header_bytes,
            table_resident_bytes,
            payload_bytes,
            overhead_ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ConfigEcho,
    pub counters: Counters,
    pub memory: MemoryAccounting,
    pub discrepancy_counts: BTreeMap<Classification, u64>,
    pub expect_failures: Vec<ExpectFailure>,
    pub aborted_at: Option<usize>,
    pub events: Vec<EventRecord>,
    pub discrepancies: Vec<Discrepancy>,
    pub allocations: Vec<AllocationEntry>,
}

impl RunReport {
    pub fn empty(cfg: &TagConfig, placement: Placement, policy: ViolationPolicy, arithmetic_check: bool) -> Self {
        Self {
            config: ConfigEcho {
                addr_bits: cfg.addr_bits(),
                spare_bits: cfg.spare_bits(),
                slot_exp: cfg.slot_exp(),
                header_size: cfg.header_size(),
                placement,
                policy,
                arithmetic_check,
            },
            counters: Counters::default(),
            memory: MemoryAccounting::new(0, 0, 0),
            discrepancy_counts: BTreeMap::new(),
            expect_failures: Vec::new(),
            aborted_at: None,
            events: Vec::new(),
            discrepancies: Vec::new(),
            allocations: Vec::new(),
        }
    }

    pub fn count(&self, class: Classification) -> u64 {
        self.discrepancy_counts.get(&class).copied().unwrap_or(0)
    }

    /// No expect failures, no false negatives and no unexplained
    /// discrepancies.
    pub fn passed(&self) -> bool {
        self.expect_failures.is_empty()
            && self.count(Classification::Bug) == 0
            && self.count(Classification::FalseNegative) == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let c = &self.config;
        let _ = writeln!(
            out,
            "config      addr_bits={} spare_bits={} slot=2^{} header={}B policy={:?}",
            c.addr_bits, c.spare_bits, c.slot_exp, c.header_size, c.policy
        );
        let n = &self.counters;
        let rows: [(&str, String); 9] = [
            ("events", n.events.to_string()),
            ("objects", n.objects.to_string()),
            ("small-framed", n.small_framed.to_string()),
            ("large-framed", n.large_framed.to_string()),
            ("small-sized/large-framed", n.small_sized_large_framed.to_string()),
            ("header bytes", self.memory.header_bytes.to_string()),
            ("table bytes (peak)", self.memory.table_resident_bytes.to_string()),
            ("payload bytes", self.memory.payload_bytes.to_string()),
            ("overhead ratio", format!("{:.6}", self.memory.overhead_ratio)),
        ];
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<26}{v:>14}");
        }
        for class in Classification::ALL {
            let _ = writeln!(out, "{:<26}{:>14}", class.token(), self.count(class));
        }
        let _ = writeln!(out, "{:<26}{:>14}", "expect failures", self.expect_failures.len());
        for f in &self.expect_failures {
            let actual = f.actual.map_or("<none>".to_string(), |o| o.to_string());
            let _ = writeln!(out, "  line {:<6} expected {:<18} got {}", f.line, f.expected, actual);
        }
        if let Some(at) = self.aborted_at {
            let _ = writeln!(out, "aborted at event {at}");
        }
        let _ = writeln!(out, "result{:>34}", if self.passed() { "PASS" } else { "FAIL" });
        out
    }
}
