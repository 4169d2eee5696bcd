use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cbl_core::graph::io::{load_graph, save_graph};
use cbl_core::harness::io::{read_csv, write_csv, write_json, TiersFile};
use cbl_core::harness::{run_bench, score_report, BenchGrid, DiscoveryReport, OracleReport};
use cbl_core::oracle::run_cbl_oracle;
use cbl_core::sample::{run_cbl_sample, RunConfig};
use cbl_core::simgen::{gen_dataset, SimSpec};
use cbl_core::stability::{max_errors_bound, rconcave_tail_bound};
use cbl_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

/// Ancestral structure discovery over a background/foreground split.
#[derive(Parser)]
#[command(name = "cbl", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Overrides the seed of the spec, config or grid.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output path (a directory for `bench`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset, its truth graph and tier manifest.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        tiers: Option<PathBuf>,
    },
    /// Run the finite-sample learner on a CSV file.
    Discover {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        tiers: PathBuf,
        /// Run configuration JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Evidence::Summary)]
        evidence: Evidence,
    },
    /// Run the oracle learner against a known graph.
    Oracle {
        #[arg(long)]
        graph: PathBuf,
    },
    /// Print the r-concave tail bound and the error bound.
    Bound {
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        tau: f64,
        /// Number of complementary pairs.
        #[arg(long = "B")]
        b: usize,
        #[arg(long, default_value_t = -0.25, allow_negative_numbers = true)]
        r: f64,
        /// Size of the low-rate set; the error bound is per candidate when
        /// omitted.
        #[arg(long, default_value_t = 1)]
        low_count: usize,
    },
    /// Run a simulation grid.
    Bench {
        #[arg(long)]
        grid: PathBuf,
    },
    /// Score a discovery result against a truth graph.
    Score {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Evidence {
    Summary,
    Full,
}

/// Error with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

const CONFIG: u8 = 2;
const DATA: u8 = 3;

impl Failure {
    fn config(e: impl std::fmt::Display) -> Failure {
        Failure {
            code: CONFIG,
            message: e.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure {
            code: if e.is_config() { CONFIG } else { DATA },
            message: e.to_string(),
        }
    }
}

type Outcome = Result<(), Failure>;

/// Configuration files: every failure, including IO, is a config error.
fn load_config<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::config(format!("{what} {}: {e}", path.display())))
}

fn require_out(common: &Common, command: &str) -> Result<PathBuf, Failure> {
    common
        .out
        .clone()
        .ok_or_else(|| Failure::config(format!("{command} needs --out")))
}

/// Writes JSON to `--out` if given, else to stdout.
fn emit<T: serde::Serialize>(common: &Common, value: &T) -> Outcome {
    match &common.out {
        Some(path) => Ok(write_json(path, value)?),
        None => {
            let text = serde_json::to_string_pretty(value).map_err(Failure::config)?;
            match writeln!(std::io::stdout(), "{text}") {
                // a closed pipe (`cbl ... | head`) is not an error
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io(e).into()),
                _ => Ok(()),
            }
        }
    }
}

fn simulate(common: &Common, spec: &Path, truth: Option<&Path>, tiers: Option<&Path>) -> Outcome {
    let mut spec: SimSpec = load_config(spec, "simulation spec")?;
    if let Some(s) = common.seed {
        spec.seed = s;
    }
    let out = require_out(common, "simulate")?;
    let ds = gen_dataset::<f64>(&spec)?;
    let names: Vec<String> = ds.columns.iter().map(|c| c.name.clone()).collect();
    write_csv(&out, &names, &ds.values)?;
    if let Some(p) = truth {
        save_graph(p, &ds.truth)?;
    }
    if let Some(p) = tiers {
        TiersFile { columns: ds.columns }.save(p)?;
    }
    eprintln!("wrote {} rows x {} columns to {}", spec.n, names.len(), out.display());
    Ok(())
}

fn discover(common: &Common, data: &Path, tiers: &Path, config: Option<&Path>, evidence: Evidence) -> Outcome {
    let mut cfg: RunConfig = match config {
        Some(p) => load_config(p, "run config")?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let table = read_csv::<f64>(data)?;
    let tiers = TiersFile::load(tiers)?.align(&table.names)?;
    let result = run_cbl_sample(table.values.view(), &tiers, &cfg)?;
    let report = DiscoveryReport::new(&result, &table.names, evidence == Evidence::Full);
    for e in &report.entries {
        eprintln!("{} {} {}", e.row, e.symbol, e.col);
    }
    emit(common, &report)
}

fn oracle(common: &Common, graph: &Path) -> Outcome {
    let g = load_graph(graph)?;
    let report = OracleReport::new(&g, &run_cbl_oracle(&g))?;
    emit(common, &report)
}

fn bound(common: &Common, theta: f64, tau: f64, b: usize, r: f64, low_count: usize) -> Outcome {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Failure::config(format!("--theta must lie in (0, 1], got {theta}")));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Failure::config(format!("--tau must lie in [0, 1], got {tau}")));
    }
    if b == 0 {
        return Err(Failure::config("--B must be at least 1"));
    }
    if !(r < 0.0) {
        return Err(Failure::config(format!("--r must be negative, got {r}")));
    }
    let d = rconcave_tail_bound(theta, tau, 2 * b, r);
    let value = serde_json::json!({
        "theta": theta,
        "tau": tau,
        "B": b,
        "r": r,
        "grid": 2 * b,
        "D": d,
        "low_count": low_count,
        "error_bound": max_errors_bound(theta, tau, b, low_count),
    });
    emit(common, &value)
}

fn bench(common: &Common, grid: &Path) -> Outcome {
    let mut grid: BenchGrid = load_config(grid, "bench grid")?;
    if let Some(s) = common.seed {
        grid.seed = s;
    }
    let out = require_out(common, "bench")?;
    let outcome = run_bench(&grid, &out)?;
    for agg in &outcome.aggregates {
        let acc = agg.accuracy_mean.map_or("-".to_string(), |a| format!("{a:.3}"));
        eprintln!("{}: accuracy {acc}, NA rate {:.3}", agg.key, agg.na_rate_mean);
    }
    eprintln!(
        "{} cells run, {} skipped; results in {}",
        outcome.ran.len(),
        outcome.skipped.len(),
        out.display()
    );
    Ok(())
}

fn score(common: &Common, result: &Path, truth: &Path) -> Outcome {
    let text = std::fs::read_to_string(result).map_err(|e| Failure::from(Error::Io(e)))?;
    let report: DiscoveryReport = serde_json::from_str(&text).map_err(|e| Failure {
        code: DATA,
        message: format!("result {}: {e}", result.display()),
    })?;
    let g = load_graph(truth)?;
    emit(common, &score_report(&report, &g)?)
}

fn run(cli: Cli) -> Outcome {
    if let Some(t) = cli.common.threads {
        if t == 0 {
            return Err(Failure::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(Failure::config)?;
    }
    let c = &cli.common;
    match &cli.command {
        Command::Simulate { spec, truth, tiers } => simulate(c, spec, truth.as_deref(), tiers.as_deref()),
        Command::Discover {
            data,
            tiers,
            config,
            evidence,
        } => discover(c, data, tiers, config.as_deref(), *evidence),
        Command::Oracle { graph } => oracle(c, graph),
        Command::Bound {
            theta,
            tau,
            b,
            r,
            low_count,
        } => bound(c, *theta, *tau, *b, *r, *low_count),
        Command::Bench { grid } => bench(c, grid),
        Command::Score { result, truth } => score(c, result, truth),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn error_codes() {
        assert_eq!(Failure::from(Error::Config("x".into())).code, CONFIG);
        assert_eq!(Failure::from(Error::Data("x".into())).code, DATA);
    }
}
