//! `mimpde run | verify | table | list`.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::error::Error;
use crate::experiment::ExperimentId;
use crate::optimizer::{threads_from_env, THREADS_ENV};

use super::catalogue::{architecture_rows, paper_settings};
use super::config::RunConfig;
use super::tables::{table, Budget, TableId, TableOptions};
use super::verify::{run_suite, SuiteSize};

#[derive(Debug, Parser)]
#[command(name = "mimpde", version, about = "Deep mixed residual PDE solver with exact boundary and initial conditions")]
#[command(after_help = "Point-parallel loss evaluation uses MIMPDE_THREADS threads (default 1).")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one configuration file and write its curve and record files.
    Run {
        config: PathBuf,
        /// Overrides the `output` key.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the no-training property suite.
    Verify,
    /// Run (or resume) every row of a result table.
    Table {
        /// T1 to T10.
        id: String,
        #[arg(long, default_value = "desk")]
        budget: String,
        #[arg(long, default_value = "tables")]
        out: PathBuf,
        /// Skip rows above this dimension.
        #[arg(long)]
        max_dim: Option<usize>,
        /// Cap every run at this many epochs.
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List experiments, methods, printed architectures and tables.
    List,
}

/// Exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

/// Runs a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    match cli.command {
        Command::Run { config, out } => cmd_run(&config, out),
        Command::Verify => cmd_verify(),
        Command::Table {
            id,
            budget,
            out,
            max_dim,
            max_epochs,
            seed,
        } => cmd_table(&id, &budget, out, max_dim, max_epochs, seed),
        Command::List => {
            cmd_list();
            EXIT_OK
        }
    }
}

fn cmd_run(path: &PathBuf, out: Option<PathBuf>) -> i32 {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return EXIT_INVALID;
        }
    };
    let mut cfg = match RunConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: invalid config {}: {e}", path.display());
            return EXIT_INVALID;
        }
    };
    if let Some(o) = out {
        cfg.output = o;
    }
    let threads = threads_from_env();
    eprintln!("running {} on {threads} thread(s)", cfg.stem());
    let progress = |r: &crate::optimizer::CurveRow| eprintln!("epoch {:>7}  loss {:.4e}  rel_l2 {:.4e}", r.epoch, r.loss, r.rel_l2);
    match super::run_config_with(&cfg, threads, progress) {
        Ok(rec) => {
            println!("curve: {}", rec.curve_path(&cfg.output).display());
            println!("record: {}", rec.record_path(&cfg.output).display());
            if rec.diverged() {
                println!("diverged after {} epochs; files keep the last finite state", rec.epochs_run);
                EXIT_DIVERGED
            } else {
                println!(
                    "final rel_l2 = {:.6e} after {} epochs ({:.1} s)",
                    rec.final_error, rec.epochs_run, rec.wall_clock_secs
                );
                EXIT_OK
            }
        }
        Err(e @ (Error::InvalidConfig { .. } | Error::UnknownExperiment { .. })) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILED
        }
    }
}

fn cmd_verify() -> i32 {
    let start = Instant::now();
    let results = run_suite(SuiteSize::default());
    let mut ok = true;
    for r in &results {
        println!("{}", r.line());
        ok &= r.passed;
    }
    let passed = results.iter().filter(|r| r.passed).count();
    println!("{passed}/{} properties passed in {:.1} s", results.len(), start.elapsed().as_secs_f64());
    if ok {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

fn cmd_table(id: &str, budget: &str, out: PathBuf, max_dim: Option<usize>, max_epochs: Option<usize>, seed: u64) -> i32 {
    let parsed = id.parse::<TableId>().and_then(|t| Ok((t, budget.parse::<Budget>()?)));
    let (id, budget) = match parsed {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    let mut opts = TableOptions::new(budget, out);
    if let Some(m) = max_dim {
        opts.max_dim = m;
    }
    opts.max_epochs = max_epochs;
    opts.seed = seed;
    match super::tables::run_table(id, &opts, |line| eprintln!("{line}")) {
        Ok((path, text)) => {
            print!("{text}");
            eprintln!("table written to {}", path.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILED
        }
    }
}

fn cmd_list() {
    println!("experiments (id: methods; printed (d, n, m) rows; caption activation, samples, epochs at the first row):");
    for id in ExperimentId::ALL {
        let methods: Vec<&str> = id.methods().iter().map(|m| m.name()).collect();
        let rows: Vec<String> = architecture_rows(id).iter().map(|(d, n, m)| format!("({d},{n},{m})")).collect();
        let d0 = architecture_rows(id)[0].0;
        let p = paper_settings(id, d0);
        println!(
            "  {id}: {}; {}; {}, {}, {}",
            methods.join(" "),
            rows.join(" "),
            p.activation,
            p.samples,
            p.epochs
        );
    }
    println!("tables:");
    for t in TableId::ALL {
        println!("  {t}: {} ({} rows)", t.title(), table(t).rows.len());
    }
    println!("threads: {THREADS_ENV}={}", threads_from_env());
}
