use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use framer::heap::{HeapConfig, Placement};
use framer::monitor::{MonitorPolicy, ViolationPolicy};
use framer::trace::{self, FuzzParams, OpMix, RunConfig, RunReport, SizeDist, StudyParams};
use framer::TagConfig;

#[derive(Parser)]
#[command(name = "framer", version, about = "Frame-tagged pointer monitor simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a trace file through the monitor and the oracle.
    Run {
        trace: PathBuf,
        /// Placement seed, used with `--placement gaps`.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Generate a seeded trace; with --run, execute it as well.
    Fuzz {
        /// Program seed; also seeds `--placement gaps`.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        objects: usize,
        /// `uniform:LO:HI` or `fixed:N`.
        #[arg(long, default_value = "uniform:1:256")]
        sizes: SizeDist,
        /// Weight overrides, e.g. `free=0,uaf=0`. Categories: in, oob,
        /// out-and-back, one-past-end, free, uaf, cast.
        #[arg(long, default_value = "")]
        mix: String,
        #[arg(long, default_value_t = 4)]
        ops_per_object: usize,
        /// Write the program here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        run: bool,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Compare tag widths on allocation-only workloads and write a CSV.
    Study {
        #[arg(long, default_value = "uniform:1:4096")]
        sizes: SizeDist,
        /// Number of seeds; seeds 0..N are used.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 2000)]
        objects: usize,
        #[arg(long, value_delimiter = ',', default_value = "16,8")]
        spare_bits: Vec<u32>,
        #[arg(long, value_enum, default_value_t = PlacementArg::Bump)]
        placement: PlacementArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExecArgs {
    #[arg(long, default_value_t = 16)]
    spare_bits: u32,
    #[arg(long, value_enum, default_value_t = PolicyArg::Record)]
    policy: PolicyArg,
    #[arg(long, value_enum, default_value_t = PlacementArg::Bump)]
    placement: PlacementArg,
    /// Disable the in-frame check on pointer arithmetic.
    #[arg(long)]
    no_arith_check: bool,
    /// Write the full JSON report here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Skip the text summary.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Abort,
    Record,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlacementArg {
    Bump,
    Gaps,
}

impl PlacementArg {
    fn placement(self, seed: u64) -> Placement {
        match self {
            PlacementArg::Bump => Placement::Bump,
            PlacementArg::Gaps => Placement::RandomizedGaps { seed },
        }
    }
}

impl ExecArgs {
    fn run_config(&self, seed: u64) -> Result<RunConfig> {
        let tag = TagConfig::with_spare_bits(self.spare_bits)?;
        let policy = MonitorPolicy {
            on_violation: match self.policy {
                PolicyArg::Abort => ViolationPolicy::Abort,
                PolicyArg::Record => ViolationPolicy::Record,
            },
            arithmetic_check: !self.no_arith_check,
        };
        let heap = HeapConfig::with_placement(self.placement.placement(seed));
        Ok(RunConfig::new(tag, heap, policy))
    }

    fn execute(&self, program: &trace::TraceProgram, seed: u64) -> Result<ExitCode> {
        let report = trace::run(program, &self.run_config(seed)?)?;
        self.emit(&report)?;
        Ok(if report.passed() {
            ExitCode::SUCCESS
        } else {
            ExitCode::FAILURE
        })
    }

    fn emit(&self, report: &RunReport) -> Result<()> {
        if let Some(path) = &self.json {
            fs::write(path, report.to_json() + "\n")
                .with_context(|| format!("writing {}", path.display()))?;
        }
        if !self.quiet {
            print!("{}", report.summary());
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { trace, seed, exec } => {
            let text = fs::read_to_string(&trace).with_context(|| format!("reading {}", trace.display()))?;
            let program = trace::parse(&text).with_context(|| format!("parsing {}", trace.display()))?;
            exec.execute(&program, seed)
        }
        Command::Fuzz {
            seed,
            objects,
            sizes,
            mix,
            ops_per_object,
            out,
            run,
            exec,
        } => {
            let op_mix: OpMix = if mix.is_empty() {
                OpMix::default()
            } else {
                mix.parse().map_err(anyhow::Error::msg)?
            };
            let params = FuzzParams {
                n_objects: objects,
                size_dist: sizes,
                op_mix,
                ops_per_object,
                placement: exec.placement.placement(seed),
            };
            let program = trace::fuzz(seed, &params);
            match &out {
                Some(path) => fs::write(path, program.to_string())
                    .with_context(|| format!("writing {}", path.display()))?,
                None if !run => io::stdout().write_all(program.to_string().as_bytes())?,
                None => {}
            }
            if run {
                exec.execute(&program, seed)
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
        Command::Study {
            sizes,
            seeds,
            objects,
            spare_bits,
            placement,
            out,
        } => {
            if seeds == 0 {
                bail!("--seeds must be at least 1");
            }
            let params = StudyParams {
                size_dist: sizes,
                seeds: (0..seeds).collect(),
                spare_bits,
                n_objects: objects,
                placement: placement.placement(0),
            };
            let rows = trace::tag_width_study(&params)?;
            match &out {
                Some(path) => {
                    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
                    trace::write_csv(&rows, file)?;
                }
                None => trace::write_csv(&rows, io::stdout().lock())?,
            }
            if out.is_some() {
                println!("{:>10} {:>6} {:>8} {:>12} {:>12} {:>12} {:>10}", "spare_bits", "seed", "objects", "large_frac", "ssl_frac", "table_bytes", "overhead");
                for r in &rows {
                    println!(
                        "{:>10} {:>6} {:>8} {:>12.6} {:>12.6} {:>12} {:>10.6}",
                        r.spare_bits,
                        r.seed,
                        r.objects,
                        r.large_framed_fraction,
                        r.small_sized_large_framed_fraction,
                        r.table_resident_bytes,
                        r.overhead_ratio
                    );
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
