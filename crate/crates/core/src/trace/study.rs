//! Tag-width study: how the spare-bit budget shifts objects from
//! small-framed to large-framed and what that costs in shadow-table memory.

use std::io;

use serde::{Deserialize, Serialize};

use crate::frame::TagConfig;
use crate::heap::{HeapConfig, Placement};
use crate::monitor::MonitorPolicy;

use super::fuzz::{fuzz, FuzzParams, OpMix, SizeDist};
use super::vm::{run, RunConfig, RunError};

/// Column order of the CSV output.
pub const CSV_COLUMNS: [&str; 7] = [
    "spare_bits",
    "seed",
    "objects",
    "large_framed_fraction",
    "small_sized_large_framed_fraction",
    "table_resident_bytes",
    "overhead_ratio",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub spare_bits: u32,
    pub seed: u64,
    pub objects: u64,
    pub large_framed_fraction: f64,
    pub small_sized_large_framed_fraction: f64,
    pub table_resident_bytes: u64,
    pub overhead_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudyParams {
    pub size_dist: SizeDist,
    pub seeds: Vec<u64>,
    pub spare_bits: Vec<u32>,
    pub n_objects: usize,
    pub placement: Placement,
}

impl Default for StudyParams {
    fn default() -> Self {
        Self {
            size_dist: SizeDist::Uniform { lo: 1, hi: 4096 },
            seeds: (0..10).collect(),
            spare_bits: vec![16, 8],
            n_objects: 2000,
            placement: Placement::Bump,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("tag configuration: {0}")]
    Config(#[from] crate::frame::FrameError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One allocation-only run per (spare_bits, seed), in that nesting order.
/// Runs are independent and execute on scoped threads.
pub fn tag_width_study(params: &StudyParams) -> Result<Vec<StudyRow>, StudyError> {
    let configs = params
        .spare_bits
        .iter()
        .map(|&bits| TagConfig::with_spare_bits(bits))
        .collect::<Result<Vec<_>, _>>()?;
    let fuzz_params = FuzzParams {
        n_objects: params.n_objects,
        size_dist: params.size_dist,
        op_mix: OpMix::default(),
        ops_per_object: 0,
        placement: params.placement,
    };
    let jobs: Vec<(TagConfig, u64)> = configs
        .iter()
        .flat_map(|&cfg| params.seeds.iter().map(move |&seed| (cfg, seed)))
        .collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(tag, seed)| {
                let fuzz_params = &fuzz_params;
                scope.spawn(move || study_run(tag, seed, fuzz_params))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("study worker panicked"))
            .collect()
    })
}

fn study_run(tag: TagConfig, seed: u64, fuzz_params: &FuzzParams) -> Result<StudyRow, StudyError> {
    let program = fuzz(seed, fuzz_params);
    let placement = match fuzz_params.placement {
        Placement::Bump => Placement::Bump,
        Placement::RandomizedGaps { .. } => Placement::RandomizedGaps { seed },
    };
    let cfg = RunConfig::new(tag, HeapConfig::with_placement(placement), MonitorPolicy::default());
    let report = run(&program, &cfg)?;
    let n = report.counters.objects;
    let frac = |k: u64| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    Ok(StudyRow {
        spare_bits: tag.spare_bits(),
        seed,
        objects: n,
        large_framed_fraction: frac(report.counters.large_framed),
        small_sized_large_framed_fraction: frac(report.counters.small_sized_large_framed),
        table_resident_bytes: report.memory.table_resident_bytes,
        overhead_ratio: report.memory.overhead_ratio,
    })
}

/// Writes rows with a header line in [`CSV_COLUMNS`] order.
pub fn write_csv(rows: &[StudyRow], out: impl io::Write) -> Result<(), StudyError> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
