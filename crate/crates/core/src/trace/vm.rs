//! Trace VM: runs a [`TraceProgram`] through the monitor and the oracle in
//! lockstep and builds a [`RunReport`].

use std::collections::HashMap;

use thiserror::Error;

use crate::frame::{self, TagConfig, TaggedWord};
use crate::heap::{HeapConfig, DEFAULT_ALIGN};
use crate::monitor::{AccessKind, Monitor, MonitorError, MonitorPolicy, Outcome, Verdict, ViolationPolicy};
use crate::oracle::{self, EventFacts, EventKind, OracleError, Position, ReferentMap};
use crate::types::{TypeDescriptor, TypeError, TypeRegistry};

use super::parse::{Statement, TraceProgram};
use super::report::{AllocationEntry, EventRecord, ExpectFailure, MemoryAccounting, RunReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunConfig {
    pub tag: TagConfig,
    pub heap: HeapConfig,
    pub policy: MonitorPolicy,
}

impl RunConfig {
    pub fn new(tag: TagConfig, heap: HeapConfig, policy: MonitorPolicy) -> Self {
        Self { tag, heap, policy }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("line {line}: {source}")]
    Monitor { line: usize, source: MonitorError },
    #[error("line {line}: oracle: {source}")]
    Oracle { line: usize, source: OracleError },
    #[error("line {line}: {source}")]
    Type { line: usize, source: TypeError },
    #[error("line {line}: undefined name `{name}`")]
    Undefined { line: usize, name: String },
    #[error(transparent)]
    Setup(MonitorError),
}

#[derive(Debug, Clone, Copy)]
struct ObjectSlot {
    id: u64,
    word: TaggedWord,
}

#[derive(Debug, Clone)]
struct VarSlot {
    word: TaggedWord,
    pending: Vec<usize>,
}

struct Vm {
    monitor: Monitor,
    oracle: ReferentMap,
    types: TypeRegistry,
    objects: HashMap<String, ObjectSlot>,
    vars: HashMap<String, VarSlot>,
    facts: Vec<EventFacts>,
    report: RunReport,
    line: usize,
}

impl Vm {
    fn monitor_err(&self, source: MonitorError) -> RunError {
        RunError::Monitor {
            line: self.line,
            source,
        }
    }

    fn oracle_err(&self, source: OracleError) -> RunError {
        RunError::Oracle {
            line: self.line,
            source,
        }
    }

    fn type_err(&self, source: TypeError) -> RunError {
        RunError::Type {
            line: self.line,
            source,
        }
    }

    fn undefined(&self, name: &str) -> RunError {
        RunError::Undefined {
            line: self.line,
            name: name.to_string(),
        }
    }

    fn var(&self, name: &str) -> Result<VarSlot, RunError> {
        self.vars.get(name).cloned().ok_or_else(|| self.undefined(name))
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        kind: EventKind,
        op: &str,
        var: &str,
        word: TaggedWord,
        monitor: Verdict,
        oracle: Outcome,
        pending: Vec<usize>,
        arith: Option<(Position, Position)>,
    ) -> usize {
        let index = self.facts.len();
        self.facts.push(EventFacts {
            index,
            kind,
            monitor: monitor.outcome,
            oracle,
            pending,
            arith,
        });
        self.report.events.push(EventRecord {
            index,
            line: self.line,
            op: op.to_string(),
            var: var.to_string(),
            address: frame::strip(word, self.monitor.config()).get(),
            monitor,
            oracle,
        });
        index
    }

    /// Shared tail of `let` and `add`: records an arithmetic event producing
    /// `dst` and updates its pending violations.
    fn arith_event(
        &mut self,
        op: &str,
        dst: &str,
        result: TaggedWord,
        verdict: Verdict,
        src_pos: Position,
        inherited: Vec<usize>,
    ) -> Result<usize, RunError> {
        let dst_pos = self.oracle.position(dst).map_err(|e| self.oracle_err(e))?;
        let index = self.facts.len();
        let pending = if dst_pos == Position::InBounds {
            Vec::new()
        } else {
            let mut p = inherited.clone();
            if !verdict.is_ok() {
                p.push(index);
            }
            p
        };
        self.record(
            EventKind::Arith,
            op,
            dst,
            result,
            verdict,
            Outcome::Ok,
            inherited,
            Some((src_pos, dst_pos)),
        );
        self.vars.insert(dst.to_string(), VarSlot { word: result, pending });
        Ok(index)
    }

    fn step(&mut self, step: usize, stmt: &Statement) -> Result<Option<usize>, RunError> {
        match stmt {
            Statement::TypedefPrim { name, size } => {
                self.types
                    .register(TypeDescriptor::primitive(name.clone(), *size))
                    .map_err(|e| self.type_err(e))?;
                Ok(None)
            }
            Statement::TypedefStruct { name, size, fields } => {
                let fields = fields
                    .iter()
                    .map(|(off, ty)| Ok((*off, self.types.lookup(ty)?)))
                    .collect::<Result<Vec<_>, TypeError>>()
                    .map_err(|e| self.type_err(e))?;
                self.types
                    .register(TypeDescriptor::aggregate(name.clone(), *size, fields))
                    .map_err(|e| self.type_err(e))?;
                Ok(None)
            }
            Statement::Alloc { id, size, ty, align } => {
                let type_id = self
                    .types
                    .lookup(ty.as_deref().unwrap_or("byte"))
                    .map_err(|e| self.type_err(e))?;
                let (word, rec) = self
                    .monitor
                    .on_alloc(*size, type_id, align.unwrap_or(DEFAULT_ALIGN))
                    .map_err(|e| self.monitor_err(e))?;
                self.oracle
                    .on_alloc(rec.object_id, rec.payload_base.get(), rec.payload_size, type_id)
                    .map_err(|e| self.oracle_err(e))?;
                self.objects.insert(
                    id.clone(),
                    ObjectSlot {
                        id: rec.object_id,
                        word,
                    },
                );
                let counters = &mut self.report.counters;
                counters.objects += 1;
                if rec.tag.is_large() {
                    counters.large_framed += 1;
                    let extent = self.monitor.config().header_size() + rec.payload_size;
                    if extent <= self.monitor.config().slot_size() {
                        counters.small_sized_large_framed += 1;
                    }
                } else {
                    counters.small_framed += 1;
                }
                self.report.allocations.push(AllocationEntry {
                    object_id: rec.object_id,
                    name: id.clone(),
                    step,
                    md_addr: rec.md_addr.get(),
                    payload_base: rec.payload_base.get(),
                    payload_size: rec.payload_size,
                    tag: rec.tag,
                    freed_step: None,
                });
                Ok(None)
            }
            Statement::Let { var, object, offset } => {
                let obj = *self.objects.get(object).ok_or_else(|| self.undefined(object))?;
                let delta = i64::try_from(*offset).map_err(|_| {
                    self.monitor_err(MonitorError::Usage(format!("offset {offset} too large")))
                })?;
                let (word, verdict) = self
                    .monitor
                    .on_arith(obj.word, delta)
                    .map_err(|e| self.monitor_err(e))?;
                self.oracle
                    .bind(var, obj.id, *offset)
                    .map_err(|e| self.oracle_err(e))?;
                let idx = self.arith_event("let", var, word, verdict, Position::InBounds, Vec::new())?;
                Ok(Some(idx))
            }
            Statement::Add { dst, src, delta } => {
                let src_slot = self.var(src)?;
                let src_pos = self.oracle.position(src).map_err(|e| self.oracle_err(e))?;
                let (word, verdict) = self
                    .monitor
                    .on_arith(src_slot.word, *delta)
                    .map_err(|e| self.monitor_err(e))?;
                self.oracle
                    .derive(dst, src, *delta)
                    .map_err(|e| self.oracle_err(e))?;
                let idx = self.arith_event("add", dst, word, verdict, src_pos, src_slot.pending)?;
                Ok(Some(idx))
            }
            Statement::Load { var, width } | Statement::Store { var, width } => {
                let (kind, op) = match stmt {
                    Statement::Load { .. } => (AccessKind::Load, "load"),
                    _ => (AccessKind::Store, "store"),
                };
                let slot = self.var(var)?;
                let verdict = self
                    .monitor
                    .on_access(slot.word, *width, kind)
                    .map_err(|e| self.monitor_err(e))?;
                let truth = self
                    .oracle
                    .truth_access(var, *width)
                    .map_err(|e| self.oracle_err(e))?;
                Ok(Some(self.record(
                    EventKind::Access,
                    op,
                    var,
                    slot.word,
                    verdict,
                    truth,
                    slot.pending,
                    None,
                )))
            }
            Statement::Cast { var, ty } => {
                let target = self.types.lookup(ty).map_err(|e| self.type_err(e))?;
                let slot = self.var(var)?;
                let verdict = self
                    .monitor
                    .on_cast(slot.word, target, &self.types)
                    .map_err(|e| self.monitor_err(e))?;
                let truth = self
                    .oracle
                    .truth_cast(var, target, &self.types)
                    .map_err(|e| self.oracle_err(e))?;
                Ok(Some(self.record(
                    EventKind::Cast,
                    "cast",
                    var,
                    slot.word,
                    verdict,
                    truth,
                    slot.pending,
                    None,
                )))
            }
            Statement::Free { target } => {
                let (oracle_var, slot) = if let Some(slot) = self.vars.get(target) {
                    (target.clone(), slot.clone())
                } else {
                    let obj = *self.objects.get(target).ok_or_else(|| self.undefined(target))?;
                    // '@' cannot start a trace identifier
                    let name = format!("@{target}");
                    self.oracle.bind(&name, obj.id, 0).map_err(|e| self.oracle_err(e))?;
                    (
                        name,
                        VarSlot {
                            word: obj.word,
                            pending: Vec::new(),
                        },
                    )
                };
                let verdict = self
                    .monitor
                    .on_free(slot.word)
                    .map_err(|e| self.monitor_err(e))?;
                let truth = self
                    .oracle
                    .truth_free(&oracle_var)
                    .map_err(|e| self.oracle_err(e))?;
                if verdict.is_ok() {
                    if let Some(id) = verdict.object_id {
                        if let Some(entry) = self.report.allocations.iter_mut().find(|a| a.object_id == id) {
                            entry.freed_step = Some(step);
                        }
                    }
                }
                Ok(Some(self.record(
                    EventKind::Free,
                    "free",
                    target,
                    slot.word,
                    verdict,
                    truth,
                    slot.pending,
                    None,
                )))
            }
            Statement::Expect(_) => Ok(None),
        }
    }
}

/// Executes `program` under `cfg`. Deterministic for a given program and
/// configuration (the placement seed lives in `cfg.heap`).
pub fn run(program: &TraceProgram, cfg: &RunConfig) -> Result<RunReport, RunError> {
    let monitor = Monitor::new(cfg.tag, cfg.heap, cfg.policy).map_err(RunError::Setup)?;
    let mut vm = Vm {
        monitor,
        oracle: ReferentMap::new(),
        types: TypeRegistry::with_builtins(),
        objects: HashMap::new(),
        vars: HashMap::new(),
        facts: Vec::new(),
        report: RunReport::empty(
            &cfg.tag,
            cfg.heap.placement,
            cfg.policy.on_violation,
            cfg.policy.arithmetic_check,
        ),
        line: 0,
    };
    let mut last_event: Option<usize> = None;
    let mut stop_after_expect = false;

    for (step, line) in program.statements.iter().enumerate() {
        vm.line = line.line;
        if let Statement::Expect(expected) = line.stmt {
            let actual = last_event.map(|i| vm.report.events[i].monitor.outcome);
            if actual != Some(expected) {
                vm.report.expect_failures.push(ExpectFailure {
                    line: line.line,
                    event: last_event,
                    expected,
                    actual,
                });
            }
            continue;
        }
        if stop_after_expect {
            break;
        }
        if let Some(i) = vm.step(step, &line.stmt)? {
            last_event = Some(i);
            let flagged = !vm.report.events[i].monitor.is_ok();
            if flagged && cfg.policy.on_violation == ViolationPolicy::Abort {
                vm.report.aborted_at = Some(i);
                stop_after_expect = true;
            }
        }
    }

    let mut report = vm.report;
    report.counters.events = report.events.len() as u64;
    report.discrepancies = oracle::classify_run(&vm.facts);
    for d in &report.discrepancies {
        *report.discrepancy_counts.entry(d.class).or_insert(0) += 1;
    }
    let header_bytes = cfg.tag.header_size() * report.counters.objects;
    let payload_bytes = report.allocations.iter().map(|a| a.payload_size).sum();
    let table_bytes = vm.monitor.table().stats().peak_resident_bytes;
    report.memory = MemoryAccounting::new(header_bytes, table_bytes, payload_bytes);
    Ok(report)
}
