//! Command-line front end: record histories from instrumented stacks, check
//! them, print witnesses, run the brute-force oracle, fuzz the checker
//! against the oracle, and benchmark the two.
//!
//! Exit codes: 0 linearizable (or fuzz agreement), 1 violation found,
//! 2 usage or input error, 3 internal invariant broken.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use stacklin::bench::{bench, render_table};
use stacklin::checker::{Verdict, DEFAULT_MAX_SEARCH_POPS};
use stacklin::fuzz::{fuzz, FuzzConfig};
use stacklin::history::{emit_history, parse_history, History};
use stacklin::oracle::{oracle_check, DEFAULT_ORACLE_MAX_OPS};
use stacklin::pipeline::{decide, PipelineError, PipelineOptions, PopOrderMode};
use stacklin::report::Report;
use stacklin::stacks::{record_stress, ImplKind, StressConfig};

#[derive(Parser)]
#[command(
    name = "stacklin",
    version,
    about = "Linearizability checking for concurrent stack histories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ImplArg {
    Treiber,
    Hsy,
    Ts,
}

impl From<ImplArg> for ImplKind {
    fn from(a: ImplArg) -> ImplKind {
        match a {
            ImplArg::Treiber => ImplKind::Treiber,
            ImplArg::Hsy => ImplKind::Hsy,
            ImplArg::Ts => ImplKind::Ts,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum OrderArg {
    Recorded,
    Search,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ReportArg {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run an instrumented stack under concurrent stress and write the
    /// recorded history.
    Record {
        #[arg(long = "impl", value_enum)]
        implementation: ImplArg,
        #[arg(long, default_value_t = 4)]
        threads: usize,
        /// Operations per thread.
        #[arg(long, default_value_t = 250)]
        ops: usize,
        #[arg(long, default_value_t = 0.5)]
        pop_ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decide linearizability of a history file.
    Check {
        file: PathBuf,
        /// Strip elimination pairs before checking.
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        strip_elim: bool,
        /// Pop order source; defaults to recorded ranks when complete,
        /// otherwise search.
        #[arg(long, value_enum)]
        pop_order: Option<OrderArg>,
        #[arg(long, default_value_t = DEFAULT_MAX_SEARCH_POPS)]
        max_search_pops: usize,
        #[arg(long, value_enum, default_value_t = ReportArg::Text)]
        report: ReportArg,
    },
    /// Print a witness linearization, one op id per line.
    Lin {
        file: PathBuf,
        #[arg(long, value_enum)]
        pop_order: Option<OrderArg>,
        #[arg(long, default_value_t = DEFAULT_MAX_SEARCH_POPS)]
        max_search_pops: usize,
    },
    /// Ground-truth decision by bounded exhaustive search.
    Oracle {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ORACLE_MAX_OPS)]
        max_ops: usize,
        #[arg(long, value_enum, default_value_t = ReportArg::Text)]
        report: ReportArg,
    },
    /// Compare pipeline and oracle verdicts over generated histories.
    Fuzz {
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 8)]
        max_ops: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also test value-swap and rank-shuffle mutants.
        #[arg(long, default_value_t = false)]
        mutate: bool,
        #[arg(long, default_value_t = 0.5)]
        pop_ratio: f64,
        /// Directory for persisted disagreements.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ReportArg::Text)]
        report: ReportArg,
    },
    /// Time the checker against the oracle across history sizes.
    Bench {
        #[arg(long = "impl", value_enum)]
        implementation: ImplArg,
        /// Comma-separated ascending operation counts.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_VIOLATION: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("stacklin: {message}");
    ExitCode::from(code)
}

fn load_history(path: &PathBuf) -> Result<(History, Vec<String>), ExitCode> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| fail(EXIT_USAGE, format!("{}: {e}", path.display())))?;
    let parsed =
        parse_history(&text).map_err(|e| fail(EXIT_USAGE, format!("{}: {e}", path.display())))?;
    Ok((parsed.history, parsed.warnings))
}

fn pipeline_options(
    strip_elim: bool,
    pop_order: Option<OrderArg>,
    max_search_pops: usize,
) -> PipelineOptions {
    PipelineOptions {
        strip_elim,
        pop_order: match pop_order {
            Some(OrderArg::Recorded) => PopOrderMode::Recorded,
            Some(OrderArg::Search) => PopOrderMode::Search,
            None => PopOrderMode::Auto,
        },
        max_search_pops,
    }
}

fn emit_report(verdict: &Verdict, warnings: Vec<String>, format: ReportArg) -> ExitCode {
    let report = Report::new(verdict, warnings);
    match format {
        ReportArg::Json => println!("{}", report.to_json()),
        ReportArg::Text => print!("{}", report.to_text()),
    }
    if verdict.is_linearizable() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VIOLATION)
    }
}

fn pipeline_exit(err: PipelineError) -> ExitCode {
    match err {
        PipelineError::Order(e) => fail(EXIT_USAGE, e),
        PipelineError::Witness(e) => fail(EXIT_INTERNAL, e),
    }
}

fn run() -> ExitCode {
    match Cli::parse().command {
        Command::Record {
            implementation,
            threads,
            ops,
            pop_ratio,
            seed,
            out,
        } => {
            let cfg = StressConfig {
                pop_ratio,
                timeout: Duration::from_secs(30),
                ..StressConfig::new(implementation.into(), threads, ops, seed)
            };
            let run = match record_stress(&cfg) {
                Ok(run) => run,
                Err(e) => return fail(EXIT_INTERNAL, e),
            };
            for w in &run.warnings {
                eprintln!("stacklin: warning: {w}");
            }
            let text = emit_history(&run.history);
            match out {
                Some(path) => {
                    if let Err(e) = std::fs::write(&path, text) {
                        return fail(EXIT_USAGE, format!("{}: {e}", path.display()));
                    }
                }
                None => print!("{text}"),
            }
            ExitCode::SUCCESS
        }
        Command::Check {
            file,
            strip_elim,
            pop_order,
            max_search_pops,
            report,
        } => {
            let (history, warnings) = match load_history(&file) {
                Ok(x) => x,
                Err(code) => return code,
            };
            let opts = pipeline_options(strip_elim, pop_order, max_search_pops);
            match decide(&history, &opts) {
                Ok(outcome) => emit_report(&outcome.verdict, warnings, report),
                Err(e) => pipeline_exit(e),
            }
        }
        Command::Lin {
            file,
            pop_order,
            max_search_pops,
        } => {
            let (history, warnings) = match load_history(&file) {
                Ok(x) => x,
                Err(code) => return code,
            };
            for w in warnings {
                eprintln!("stacklin: warning: {w}");
            }
            let opts = pipeline_options(true, pop_order, max_search_pops);
            match decide(&history, &opts) {
                Ok(outcome) => match outcome.verdict {
                    Verdict::Linearizable { witness } => {
                        for op in witness {
                            println!("{op}");
                        }
                        ExitCode::SUCCESS
                    }
                    Verdict::Violation(v) => {
                        println!("VIOLATION: {v}");
                        ExitCode::from(EXIT_VIOLATION)
                    }
                },
                Err(e) => pipeline_exit(e),
            }
        }
        Command::Oracle {
            file,
            max_ops,
            report,
        } => {
            let (history, warnings) = match load_history(&file) {
                Ok(x) => x,
                Err(code) => return code,
            };
            match oracle_check(&history, max_ops) {
                Ok(verdict) => emit_report(&verdict, warnings, report),
                Err(e) => fail(EXIT_USAGE, e),
            }
        }
        Command::Fuzz {
            trials,
            max_ops,
            seed,
            mutate,
            pop_ratio,
            out,
            report,
        } => {
            let cfg = FuzzConfig {
                trials,
                max_ops,
                seed,
                mutate,
                pop_ratio,
                ..Default::default()
            };
            let report_data = match fuzz(&cfg, out.as_deref()) {
                Ok(r) => r,
                Err(e) => return fail(EXIT_USAGE, e),
            };
            match report {
                ReportArg::Json => println!(
                    "{}",
                    serde_json::to_string_pretty(&report_data).expect("report serializes")
                ),
                ReportArg::Text => {
                    println!(
                        "trials {}  agreements {}  disagreements {}",
                        report_data.trials, report_data.agreements, report_data.disagreements
                    );
                    if cfg.mutate {
                        println!(
                            "mutants {}  oracle-rejected {}  killed {}",
                            report_data.mutants_tested,
                            report_data.mutants_oracle_rejected,
                            report_data.mutants_killed
                        );
                    }
                    for (label, n) in &report_data.violations_by_label {
                        println!("violation {label}: {n}");
                    }
                    for path in &report_data.disagreement_files {
                        println!("persisted: {}", path.display());
                    }
                }
            }
            if report_data.disagreements == 0 && report_data.strip_soundness_violations == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VIOLATION)
            }
        }
        Command::Bench {
            implementation,
            sizes,
            seed,
            out,
        } => {
            let rows = match bench(implementation.into(), &sizes, seed, DEFAULT_ORACLE_MAX_OPS) {
                Ok(rows) => rows,
                Err(e) => return fail(EXIT_USAGE, e),
            };
            let table = render_table(&rows);
            match out {
                Some(path) => {
                    if let Err(e) = std::fs::write(&path, table) {
                        return fail(EXIT_USAGE, format!("{}: {e}", path.display()));
                    }
                }
                None => print!("{table}"),
            }
            ExitCode::SUCCESS
        }
    }
}

fn main() -> ExitCode {
    run()
}
