//! Trace language, VM, fuzz generator and the tag-width study.

pub mod fuzz;
pub mod parse;
pub mod report;
pub mod study;
pub mod vm;

pub use fuzz::{fuzz, FuzzParams, OpKind, OpMix, SizeDist};
pub use parse::{parse, Line, ParseError, Statement, TraceProgram};
pub use report::RunReport;
pub use study::{tag_width_study, write_csv, StudyParams, StudyRow, CSV_COLUMNS};
pub use vm::{run, RunConfig, RunError};
