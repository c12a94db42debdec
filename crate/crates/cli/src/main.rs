//! Command-line runner for isodiam experiment configs.
//!
//! `isodiam --config run.json` runs one experiment; `isodiam --suite` runs
//! every config in a directory (default `configs/`) on a worker pool and
//! prints a summary table. Reports and CSV files land in `--out`.
//!
//! Exit codes: 0 when every experiment passes (or is flagged under
//! tightened tolerances), 1 when one fails, 2 when a config is invalid.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use isodiam::experiment::{self, ExperimentConfig, RunError, RunOptions, Status, SummaryRow};
use rayon::prelude::*;

#[derive(Debug, Parser)]
#[command(name = "isodiam", version, about = "Run rad·P versus 2V experiments from JSON configs")]
struct Cli {
    /// A single experiment config.
    #[arg(long, conflicts_with = "suite", required_unless_present = "suite")]
    config: Option<PathBuf>,
    /// Run every config in DIR.
    #[arg(long, value_name = "DIR", num_args = 0..=1, default_missing_value = "configs")]
    suite: Option<PathBuf>,
    /// Only run suite configs whose name contains this string.
    #[arg(long)]
    filter: Option<String>,
    /// Override the seed of every config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Multiply every tolerance by this factor.
    #[arg(long, default_value_t = 1.0)]
    tol_scale: f64,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    jobs: Option<usize>,
}

struct JobResult {
    path: PathBuf,
    row: Result<SummaryRow, RunError>,
    seconds: f64,
}

fn run_one(path: &Path, opts: RunOptions, out: &Path) -> Result<SummaryRow, RunError> {
    let cfg = ExperimentConfig::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let outcome = experiment::run(&cfg, base, opts)?;
    outcome.write(out)?;
    Ok(SummaryRow::from_report(&outcome.report))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if !(cli.tol_scale > 0.0 && cli.tol_scale.is_finite()) {
        eprintln!("error: --tol-scale must be positive, got {}", cli.tol_scale);
        return ExitCode::from(2);
    }
    let paths = match (&cli.config, &cli.suite) {
        (Some(p), _) => vec![p.clone()],
        (None, Some(dir)) => match experiment::list_configs(dir) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", dir.display());
                return ExitCode::from(2);
            }
        },
        (None, None) => unreachable!("clap requires one of --config and --suite"),
    };
    let paths: Vec<PathBuf> = match &cli.filter {
        Some(f) => paths.into_iter().filter(|p| p.file_stem().is_some_and(|s| s.to_string_lossy().contains(f.as_str()))).collect(),
        None => paths,
    };
    if paths.is_empty() {
        eprintln!("error: no configs selected");
        return ExitCode::from(2);
    }
    let opts = RunOptions { seed: cli.seed, tol_scale: cli.tol_scale };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        pool = pool.num_threads(j.max(1));
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    };
    let started = Instant::now();
    let results: Vec<JobResult> = pool.install(|| {
        paths
            .par_iter()
            .map(|p| {
                let t = Instant::now();
                let row = run_one(p, opts, &cli.out);
                JobResult { path: p.clone(), row, seconds: t.elapsed().as_secs_f64() }
            })
            .collect()
    });
    let code = report(&results, &cli.out);
    println!("total wall-clock {:.1} s", started.elapsed().as_secs_f64());
    ExitCode::from(code)
}

/// Print the table, write `summary.csv`, and pick the exit code.
fn report(results: &[JobResult], out: &Path) -> u8 {
    let mut code = 0u8;
    let mut rows = Vec::new();
    println!("{:<36} {:<9} {:<8} {:>7} {:>8}  claim", "experiment", "kind", "result", "checks", "seconds");
    for r in results {
        let stem = r.path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        match &r.row {
            Ok(row) => {
                if row.status == Status::Fail {
                    code = code.max(1);
                }
                let checks = format!("{}/{}", row.checks_passed, row.checks);
                println!("{:<36} {:<9} {:<8} {:>7} {:>8.2}  {}", row.name, row.kind, row.status.label(), checks, r.seconds, row.claim);
                rows.push(row.clone());
            }
            Err(e) => {
                code = code.max(e.exit_code() as u8);
                println!("{:<36} {:<9} {:<8} {:>7} {:>8.2}  {e}", stem, "-", Status::Error.label(), "-", r.seconds);
                rows.push(SummaryRow {
                    name: stem,
                    kind: String::new(),
                    status: Status::Error,
                    checks_passed: 0,
                    checks: 0,
                    claim: e.to_string(),
                });
            }
        }
    }
    let write = std::fs::create_dir_all(out)
        .map_err(|e| e.to_string())
        .and_then(|_| experiment::summary_csv(&rows).map_err(|e| e.to_string()))
        .and_then(|csv| std::fs::write(out.join("summary.csv"), csv).map_err(|e| e.to_string()));
    if let Err(e) = write {
        eprintln!("error: cannot write {}: {e}", out.join("summary.csv").display());
        code = code.max(1);
    }
    code
}
