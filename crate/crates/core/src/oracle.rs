//! Ground truth for bounds, liveness and cast checks.
//!
//! The oracle tracks every object's exact payload interval and, for each
//! trace variable, the object it was derived from (its intended referent)
//! and its current address. Verdicts are computed from those facts only;
//! nothing here looks at tags, frames or headers.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::monitor::Outcome;
use crate::types::{TypeId, TypeRegistry};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("unknown variable `{0}`")]
    UnknownVar(String),
    #[error("unknown object {0}")]
    UnknownObject(u64),
    #[error("object {id} at [{lo:#x}, {hi:#x}) overlaps live object {other}")]
    Overlap { id: u64, lo: u64, hi: u64, other: u64 },
    #[error("address {addr:#x} + {delta} wraps")]
    Wrap { addr: u64, delta: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObjectTruth {
    pub base: u64,
    pub size: u64,
    pub type_id: TypeId,
    pub live: bool,
}

impl ObjectTruth {
    pub fn end(&self) -> u64 {
        self.base + self.size
    }

    pub fn position(&self, addr: u64) -> Position {
        if addr >= self.base && addr < self.end() {
            Position::InBounds
        } else if addr == self.end() {
            Position::OnePastEnd
        } else {
            Position::Outside
        }
    }
}

/// Where an address sits relative to its intended referent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Position {
    InBounds,
    OnePastEnd,
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarTruth {
    pub referent: u64,
    pub addr: u64,
}

/// Exact interval map of live payloads plus per-variable referents.
#[derive(Debug, Clone, Default)]
pub struct ReferentMap {
    objects: HashMap<u64, ObjectTruth>,
    live: BTreeMap<u64, (u64, u64)>,
    vars: HashMap<String, VarTruth>,
}

impl ReferentMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on_alloc(&mut self, id: u64, base: u64, size: u64, type_id: TypeId) -> Result<(), OracleError> {
        let end = base + size;
        let overlap = |other: u64| OracleError::Overlap {
            id,
            lo: base,
            hi: end,
            other,
        };
        if let Some((_, &(other_end, other))) = self.live.range(..end).next_back() {
            if other_end > base {
                return Err(overlap(other));
            }
        }
        self.live.insert(base, (end, id));
        self.objects.insert(
            id,
            ObjectTruth {
                base,
                size,
                type_id,
                live: true,
            },
        );
        Ok(())
    }

    pub fn object(&self, id: u64) -> Option<&ObjectTruth> {
        self.objects.get(&id)
    }

    /// Live object whose payload contains `addr`, if any.
    pub fn object_containing(&self, addr: u64) -> Option<u64> {
        self.live
            .range(..=addr)
            .next_back()
            .filter(|(_, &(end, _))| addr < end)
            .map(|(_, &(_, id))| id)
    }

    pub fn var(&self, name: &str) -> Result<VarTruth, OracleError> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| OracleError::UnknownVar(name.to_string()))
    }

    fn referent(&self, var: &VarTruth) -> Result<ObjectTruth, OracleError> {
        self.objects
            .get(&var.referent)
            .copied()
            .ok_or(OracleError::UnknownObject(var.referent))
    }

    /// Binds `var` to `object`'s payload base plus `offset`.
    pub fn bind(&mut self, var: &str, object: u64, offset: u64) -> Result<VarTruth, OracleError> {
        let obj = self
            .objects
            .get(&object)
            .ok_or(OracleError::UnknownObject(object))?;
        let truth = VarTruth {
            referent: object,
            addr: obj.base.checked_add(offset).ok_or(OracleError::Wrap {
                addr: obj.base,
                delta: offset as i64,
            })?,
        };
        self.vars.insert(var.to_string(), truth);
        Ok(truth)
    }

    /// `dst = src + delta`; the referent carries over unchanged.
    pub fn derive(&mut self, dst: &str, src: &str, delta: i64) -> Result<VarTruth, OracleError> {
        let src = self.var(src)?;
        let addr = src
            .addr
            .checked_add_signed(delta)
            .ok_or(OracleError::Wrap { addr: src.addr, delta })?;
        let truth = VarTruth {
            referent: src.referent,
            addr,
        };
        self.vars.insert(dst.to_string(), truth);
        Ok(truth)
    }

    pub fn position(&self, var: &str) -> Result<Position, OracleError> {
        let v = self.var(var)?;
        Ok(self.referent(&v)?.position(v.addr))
    }

    /// Ok iff the referent is live and `[addr, addr + width)` lies inside
    /// its payload. Landing inside some other object does not count.
    pub fn truth_access(&self, var: &str, width: u64) -> Result<Outcome, OracleError> {
        let v = self.var(var)?;
        let obj = self.referent(&v)?;
        Ok(if !obj.live {
            Outcome::UseAfterFree
        } else if v.addr >= obj.base && v.addr.checked_add(width).is_some_and(|e| e <= obj.end()) {
            Outcome::Ok
        } else {
            Outcome::OutOfBounds
        })
    }

    pub fn truth_cast(&self, var: &str, target: TypeId, types: &TypeRegistry) -> Result<Outcome, OracleError> {
        let v = self.var(var)?;
        let obj = self.referent(&v)?;
        if !obj.live {
            return Ok(Outcome::UseAfterFree);
        }
        let (Ok(target_size), Ok(elem_size)) = (types.size_of(target), types.size_of(obj.type_id)) else {
            return Ok(Outcome::CastError);
        };
        let Some(offset) = v.addr.checked_sub(obj.base) else {
            return Ok(Outcome::CastError);
        };
        if offset >= obj.size || offset + target_size > obj.size {
            return Ok(Outcome::CastError);
        }
        let ok = types
            .type_at_offset(obj.type_id, offset % elem_size)
            .is_some_and(|found| types.cast_compatible(found, target));
        Ok(if ok { Outcome::Ok } else { Outcome::CastError })
    }

    /// Applies the free when the truth verdict is Ok.
    pub fn truth_free(&mut self, var: &str) -> Result<Outcome, OracleError> {
        let v = self.var(var)?;
        let obj = self.referent(&v)?;
        if !obj.live {
            return Ok(Outcome::DoubleFree);
        }
        if v.addr != obj.base {
            return Ok(Outcome::OutOfBounds);
        }
        self.live.remove(&obj.base);
        if let Some(o) = self.objects.get_mut(&v.referent) {
            o.live = false;
        }
        Ok(Outcome::Ok)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    TrueDetection,
    #[serde(rename = "fp-out-and-back")]
    FpOutAndBack,
    #[serde(rename = "fp-one-past-end")]
    FpOnePastEnd,
    FalseNegative,
    Bug,
}

impl Classification {
    pub const ALL: [Classification; 5] = [
        Classification::TrueDetection,
        Classification::FpOutAndBack,
        Classification::FpOnePastEnd,
        Classification::FalseNegative,
        Classification::Bug,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Classification::TrueDetection => "true-detection",
            Classification::FpOutAndBack => "fp-out-and-back",
            Classification::FpOnePastEnd => "fp-one-past-end",
            Classification::FalseNegative => "false-negative",
            Classification::Bug => "bug",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arith,
    Access,
    Cast,
    Free,
}

/// Per-event facts needed to classify a monitor/oracle pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventFacts {
    pub index: usize,
    pub kind: EventKind,
    pub monitor: Outcome,
    pub oracle: Outcome,
    /// Monitor-flagged arithmetic events on the word's derivation chain
    /// since its address was last inside the referent.
    pub pending: Vec<usize>,
    /// For arithmetic: positions of source and result.
    pub arith: Option<(Position, Position)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub event: usize,
    pub monitor: Outcome,
    pub oracle: Outcome,
    pub class: Classification,
}

/// Classifies one event. `confirmed` is true when a flagged arithmetic
/// event was followed by an oracle-flagged dereference through the word it
/// produced. Returns `None` when both sides agree on Ok.
pub fn classify(facts: &EventFacts, confirmed: bool) -> Option<Classification> {
    use Classification::*;
    let (m, o) = (facts.monitor, facts.oracle);
    if m.is_ok() && o.is_ok() {
        return None;
    }
    if m == o {
        return Some(TrueDetection);
    }
    let caught_earlier = !facts.pending.is_empty();
    Some(match (m.is_ok(), o.is_ok()) {
        // oracle-only
        (true, false) if caught_earlier => TrueDetection,
        (true, false) => FalseNegative,
        // both flagged, different reasons
        (false, false) if caught_earlier => TrueDetection,
        // a freed large-framed object has no shadow entry left
        (false, false)
            if m == Outcome::MissingMetadata && matches!(o, Outcome::UseAfterFree | Outcome::DoubleFree) =>
        {
            TrueDetection
        }
        (false, false) => Bug,
        // monitor-only
        _ => match (facts.kind, m, facts.arith) {
            (EventKind::Arith, Outcome::InFrameViolation, Some((src, dst))) => {
                if confirmed {
                    TrueDetection
                } else if src == Position::OnePastEnd || dst == Position::OnePastEnd {
                    FpOnePastEnd
                } else if src == Position::InBounds && dst == Position::InBounds {
                    Bug
                } else {
                    FpOutAndBack
                }
            }
            _ => Bug,
        },
    })
}

/// Classifies a whole run.
pub fn classify_run(events: &[EventFacts]) -> Vec<Discrepancy> {
    let confirmed: HashSet<usize> = events
        .iter()
        .filter(|e| e.kind != EventKind::Arith && !e.oracle.is_ok())
        .flat_map(|e| e.pending.iter().copied())
        .collect();
    events
        .iter()
        .filter_map(|e| {
            classify(e, confirmed.contains(&e.index)).map(|class| Discrepancy {
                event: e.index,
                monitor: e.monitor,
                oracle: e.oracle,
                class,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const BYTE: TypeId = TypeId(0);

    fn map() -> ReferentMap {
        let mut m = ReferentMap::new();
        m.on_alloc(0, 0x1000, 10, BYTE).unwrap();
        m.on_alloc(1, 0x1020, 16, BYTE).unwrap();
        m
    }

    #[test]
    fn in_bounds_access() {
        let mut m = map();
        m.bind("p", 0, 0).unwrap();
        assert_eq!(m.truth_access("p", 10).unwrap(), Outcome::Ok);
        m.derive("q", "p", 9).unwrap();
        assert_eq!(m.truth_access("q", 1).unwrap(), Outcome::Ok);
        assert_eq!(m.truth_access("q", 2).unwrap(), Outcome::OutOfBounds);
    }

    #[test]
    fn neighbor_landing_is_oob() {
        let mut m = map();
        m.bind("p", 0, 0).unwrap();
        m.derive("q", "p", 0x24).unwrap();
        assert_eq!(m.object_containing(0x1024), Some(1));
        assert_eq!(m.truth_access("q", 4).unwrap(), Outcome::OutOfBounds);
    }

    #[test]
    fn access_after_free() {
        let mut m = map();
        m.bind("p", 0, 0).unwrap();
        assert_eq!(m.truth_free("p").unwrap(), Outcome::Ok);
        assert_eq!(m.truth_access("p", 1).unwrap(), Outcome::UseAfterFree);
        assert_eq!(m.truth_free("p").unwrap(), Outcome::DoubleFree);
        assert_eq!(m.object_containing(0x1000), None);
    }

    #[test]
    fn free_interior_is_oob() {
        let mut m = map();
        m.bind("p", 0, 1).unwrap();
        assert_eq!(m.truth_free("p").unwrap(), Outcome::OutOfBounds);
    }

    #[test]
    fn unknown_var() {
        let m = map();
        assert!(matches!(m.truth_access("nope", 1), Err(OracleError::UnknownVar(_))));
    }

    #[test]
    fn overlap_rejected() {
        let mut m = map();
        assert!(m.on_alloc(2, 0x1008, 4, BYTE).is_err());
        assert!(m.on_alloc(2, 0x1018, 9, BYTE).is_err());
        assert!(m.on_alloc(2, 0x100A, 4, BYTE).is_ok());
    }

    #[test]
    fn positions() {
        let mut m = map();
        m.bind("p", 0, 0).unwrap();
        m.derive("e", "p", 10).unwrap();
        m.derive("x", "p", -1).unwrap();
        assert_eq!(m.position("p").unwrap(), Position::InBounds);
        assert_eq!(m.position("e").unwrap(), Position::OnePastEnd);
        assert_eq!(m.position("x").unwrap(), Position::Outside);
    }

    fn facts(index: usize, kind: EventKind, monitor: Outcome, oracle: Outcome) -> EventFacts {
        EventFacts {
            index,
            kind,
            monitor,
            oracle,
            pending: vec![],
            arith: None,
        }
    }

    #[test]
    fn matching_ok_is_not_a_discrepancy() {
        assert_eq!(classify(&facts(0, EventKind::Access, Outcome::Ok, Outcome::Ok), false), None);
        assert_eq!(
            classify(&facts(0, EventKind::Access, Outcome::OutOfBounds, Outcome::OutOfBounds), false),
            Some(Classification::TrueDetection)
        );
    }

    #[test]
    fn oracle_only_is_false_negative() {
        let f = facts(0, EventKind::Access, Outcome::Ok, Outcome::OutOfBounds);
        assert_eq!(classify(&f, false), Some(Classification::FalseNegative));
        let f = EventFacts {
            pending: vec![3],
            ..f
        };
        assert_eq!(classify(&f, false), Some(Classification::TrueDetection));
    }

    #[test]
    fn out_and_back_run() {
        // 0: q = p + big (flag), 1: r = q - big (flag), 2: load r ok
        let events = vec![
            EventFacts {
                arith: Some((Position::InBounds, Position::Outside)),
                ..facts(0, EventKind::Arith, Outcome::InFrameViolation, Outcome::Ok)
            },
            EventFacts {
                arith: Some((Position::Outside, Position::InBounds)),
                pending: vec![0],
                ..facts(1, EventKind::Arith, Outcome::InFrameViolation, Outcome::Ok)
            },
            facts(2, EventKind::Access, Outcome::Ok, Outcome::Ok),
        ];
        let d = classify_run(&events);
        assert_eq!(d.len(), 2);
        assert!(d.iter().all(|d| d.class == Classification::FpOutAndBack));
    }

    #[test]
    fn one_past_end_run() {
        let events = vec![EventFacts {
            arith: Some((Position::InBounds, Position::OnePastEnd)),
            ..facts(0, EventKind::Arith, Outcome::InFrameViolation, Outcome::Ok)
        }];
        assert_eq!(classify_run(&events)[0].class, Classification::FpOnePastEnd);
    }

    #[test]
    fn confirmed_arith_is_true_detection() {
        let events = vec![
            EventFacts {
                arith: Some((Position::InBounds, Position::Outside)),
                ..facts(0, EventKind::Arith, Outcome::InFrameViolation, Outcome::Ok)
            },
            EventFacts {
                pending: vec![0],
                ..facts(1, EventKind::Access, Outcome::Ok, Outcome::OutOfBounds)
            },
        ];
        let d = classify_run(&events);
        assert!(d.iter().all(|d| d.class == Classification::TrueDetection));
    }

    #[test]
    fn in_bounds_flag_is_bug() {
        let f = EventFacts {
            arith: Some((Position::InBounds, Position::InBounds)),
            ..facts(0, EventKind::Arith, Outcome::InFrameViolation, Outcome::Ok)
        };
        assert_eq!(classify(&f, false), Some(Classification::Bug));
        let f = facts(0, EventKind::Access, Outcome::OutOfBounds, Outcome::Ok);
        assert_eq!(classify(&f, false), Some(Classification::Bug));
    }

    #[test]
    fn retired_shadow_entry_counts_as_uaf() {
        let f = facts(0, EventKind::Access, Outcome::MissingMetadata, Outcome::UseAfterFree);
        assert_eq!(classify(&f, false), Some(Classification::TrueDetection));
        let f = facts(0, EventKind::Access, Outcome::CastError, Outcome::OutOfBounds);
        assert_eq!(classify(&f, false), Some(Classification::Bug));
    }
}
