//! Grid benchmark: simulate → discover → score for every cell and
//! replicate, with resumable, atomically written output.
//!
//! Output layout under the target directory:
//!
//! - `cells/<key>.csv`: one row per replicate; every value is a pure
//!   function of the recorded seed, so rows reproduce bitwise.
//! - `cells/<key>.json`: the cell aggregate, including wall times.
//! - `manifest.json`: the grid and the completed cells. A rerun skips
//!   them and leaves their files untouched.
//! - `results.csv`, `aggregate.json`: all cells, in grid order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use parking_lot::Mutex;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::{write_atomic, write_json};
use super::metrics::{label, metric_accuracy, Confusion, DECLARED, TRUE};
use crate::error::{Error, Result};
use crate::sample::{run_cbl_sample, RunConfig, SampleResult};
use crate::simgen::{gen_dataset, Regime, SimSpec};

fn one<T>(v: T) -> Vec<T> {
    vec![v]
}
fn default_d_x() -> Vec<usize> {
    one(2)
}
fn default_sparsity() -> Vec<f64> {
    one(0.5)
}
fn default_snr() -> Vec<f64> {
    one(2.0)
}
fn default_rho() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchGrid {
    pub n: Vec<usize>,
    pub d_z: Vec<usize>,
    #[serde(default = "default_d_x")]
    pub d_x: Vec<usize>,
    #[serde(default = "default_sparsity")]
    pub sparsity: Vec<f64>,
    #[serde(default = "default_snr")]
    pub snr: Vec<f64>,
    pub regime: Vec<Regime>,
    #[serde(default)]
    pub nonlinear: bool,
    #[serde(default = "default_rho")]
    pub rho: f64,
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Seeds inside are replaced per replicate.
    #[serde(default)]
    pub run: RunConfig,
}

/// One point of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub d_z: usize,
    pub d_x: usize,
    pub sparsity: f64,
    pub snr: f64,
    pub regime: Regime,
    pub nonlinear: bool,
    pub rho: f64,
}

impl Cell {
    /// Stable identifier, also the file stem.
    pub fn key(&self) -> String {
        let regime = serde_json::to_value(self.regime).expect("regime serializes");
        format!(
            "n{}-dz{}-dx{}-sp{}-snr{}-{}-{}",
            self.n,
            self.d_z,
            self.d_x,
            self.sparsity,
            self.snr,
            regime.as_str().unwrap_or("regime"),
            if self.nonlinear { "nonlinear" } else { "linear" }
        )
    }

    pub fn sim_spec(&self, seed: u64) -> SimSpec {
        SimSpec {
            sparsity: self.sparsity,
            rho: self.rho,
            snr: self.snr,
            nonlinear: self.nonlinear,
            regime: self.regime,
            seed,
            ..SimSpec::new(self.n, self.d_z, self.d_x)
        }
    }
}

impl BenchGrid {
    /// Cells in lexicographic grid order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &d_z in &self.d_z {
                for &d_x in &self.d_x {
                    for &sparsity in &self.sparsity {
                        for &snr in &self.snr {
                            for &regime in &self.regime {
                                out.push(Cell {
                                    n,
                                    d_z,
                                    d_x,
                                    sparsity,
                                    snr,
                                    regime,
                                    nonlinear: self.nonlinear,
                                    rho: self.rho,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("n", self.n.is_empty()),
            ("d_z", self.d_z.is_empty()),
            ("d_x", self.d_x.is_empty()),
            ("sparsity", self.sparsity.is_empty()),
            ("snr", self.snr.is_empty()),
            ("regime", self.regime.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::Config(format!("grid axis {name} is empty")));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        self.run.validate()?;
        let cells = self.cells();
        for c in &cells {
            c.sim_spec(0).validate()?;
        }
        let mut keys: Vec<String> = cells.iter().map(Cell::key).collect();
        keys.sort();
        keys.dedup();
        if keys.len() != cells.len() {
            return Err(Error::Config("grid axes contain duplicate values".into()));
        }
        Ok(())
    }
}

/// Seed of replicate `rep` in the cell with key `key`. Depends only on
/// the grid seed and the cell's own parameters, so growing a grid leaves
/// existing cells' seeds unchanged.
pub fn replicate_seed(grid_seed: u64, key: &str, rep: usize) -> u64 {
    // FNV-1a: a stable, dependency-free digest of the key
    let digest = key
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3));
    let mut rng = ChaCha8Rng::seed_from_u64(grid_seed ^ digest);
    rng.set_stream(rep as u64);
    rng.next_u64()
}

/// Scored outcome of one replicate. No timing: rows reproduce bitwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRow {
    pub cell: String,
    pub replicate: usize,
    pub seed: u64,
    pub accuracy: Option<f64>,
    pub na_rate: f64,
    pub decided: usize,
    pub correct: usize,
    pub pairs: usize,
    pub passes: usize,
    pub converged: bool,
    pub selector_calls: usize,
    pub confusion: Confusion,
}

impl ReplicateRow {
    pub fn header() -> Vec<String> {
        let mut h: Vec<String> = [
            "cell",
            "replicate",
            "seed",
            "accuracy",
            "na_rate",
            "decided",
            "correct",
            "pairs",
            "passes",
            "converged",
            "selector_calls",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for d in DECLARED {
            for t in TRUE {
                h.push(format!("{}_{}", label(d), label(t)));
            }
        }
        h
    }

    pub fn record(&self) -> Vec<String> {
        let mut r = vec![
            self.cell.clone(),
            self.replicate.to_string(),
            self.seed.to_string(),
            self.accuracy.map(|a| a.to_string()).unwrap_or_default(),
            self.na_rate.to_string(),
            self.decided.to_string(),
            self.correct.to_string(),
            self.pairs.to_string(),
            self.passes.to_string(),
            self.converged.to_string(),
            self.selector_calls.to_string(),
        ];
        r.extend(self.confusion.cells().map(|(_, _, c)| c.to_string()));
        r
    }

    pub fn from_record(rec: &csv::StringRecord) -> Result<ReplicateRow> {
        let expected = ReplicateRow::header().len();
        if rec.len() != expected {
            return Err(Error::Data(format!("bench row has {} fields, expected {expected}", rec.len())));
        }
        fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
            s.parse().map_err(|_| Error::Data(format!("bench row: bad {what} {s:?}")))
        }
        let mut confusion = Confusion::default();
        for (k, cell) in confusion.counts.iter_mut().flatten().enumerate() {
            *cell = num(&rec[11 + k], "confusion count")?;
        }
        Ok(ReplicateRow {
            cell: rec[0].to_string(),
            replicate: num(&rec[1], "replicate")?,
            seed: num(&rec[2], "seed")?,
            accuracy: if rec[3].is_empty() { None } else { Some(num(&rec[3], "accuracy")?) },
            na_rate: num(&rec[4], "na_rate")?,
            decided: num(&rec[5], "decided")?,
            correct: num(&rec[6], "correct")?,
            pairs: num(&rec[7], "pairs")?,
            passes: num(&rec[8], "passes")?,
            converged: num(&rec[9], "converged")?,
            selector_calls: num(&rec[10], "selector_calls")?,
            confusion,
        })
    }
}

pub fn rows_to_csv(rows: &[ReplicateRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ReplicateRow::header())?;
    for r in rows {
        w.write_record(r.record())?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<ReplicateRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != ReplicateRow::header() {
        return Err(Error::Data("bench file has an unexpected header".into()));
    }
    reader.records().map(|r| ReplicateRow::from_record(&r?)).collect()
}

/// Simulates, discovers and scores one replicate.
pub fn run_replicate(cell: &Cell, rep: usize, seed: u64, run: &RunConfig) -> Result<(ReplicateRow, SampleResult)> {
    let ds = gen_dataset::<f64>(&cell.sim_spec(seed))?;
    let tiers: Vec<_> = ds.columns.iter().map(|c| c.tier).collect();
    let config = RunConfig { seed, ..run.clone() };
    let result = run_cbl_sample(ds.values.view(), &tiers, &config)?;
    let score = metric_accuracy(&result.matrix, &ds.truth)?;
    let row = ReplicateRow {
        cell: cell.key(),
        replicate: rep,
        seed,
        accuracy: score.accuracy,
        na_rate: score.na_rate,
        decided: score.decided,
        correct: score.correct,
        pairs: score.pairs,
        passes: result.passes,
        converged: result.converged,
        selector_calls: result.selector_calls,
        confusion: score.confusion,
    };
    Ok((row, result))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub key: String,
    pub cell: Cell,
    pub replicates: usize,
    /// Replicates with at least one decided pair.
    pub scored: usize,
    pub accuracy_mean: Option<f64>,
    pub accuracy_se: Option<f64>,
    pub na_rate_mean: f64,
    pub na_rate_se: f64,
    pub confusion: Confusion,
    pub seeds: Vec<u64>,
    pub wall_seconds: Vec<f64>,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn aggregate(cell: &Cell, rows: &[ReplicateRow], wall_seconds: Vec<f64>) -> CellAggregate {
    let acc: Vec<f64> = rows.iter().filter_map(|r| r.accuracy).collect();
    let na: Vec<f64> = rows.iter().map(|r| r.na_rate).collect();
    let (accuracy_mean, accuracy_se) = if acc.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_se(&acc);
        (Some(m), Some(s))
    };
    let (na_rate_mean, na_rate_se) = if na.is_empty() { (0.0, 0.0) } else { mean_se(&na) };
    let mut confusion = Confusion::default();
    rows.iter().for_each(|r| confusion.merge(&r.confusion));
    CellAggregate {
        key: cell.key(),
        cell: cell.clone(),
        replicates: rows.len(),
        scored: acc.len(),
        accuracy_mean,
        accuracy_se,
        na_rate_mean,
        na_rate_se,
        confusion,
        seeds: rows.iter().map(|r| r.seed).collect(),
        wall_seconds,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub grid: BenchGrid,
    /// Completed cell keys and their row counts.
    pub completed: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub rows: Vec<ReplicateRow>,
    pub aggregates: Vec<CellAggregate>,
    pub ran: Vec<String>,
    pub skipped: Vec<String>,
}

fn cell_paths(out: &Path, key: &str) -> (PathBuf, PathBuf) {
    let dir = out.join("cells");
    (dir.join(format!("{key}.csv")), dir.join(format!("{key}.json")))
}

fn run_cell(grid: &BenchGrid, cell: &Cell) -> Result<(Vec<ReplicateRow>, Vec<f64>)> {
    let key = cell.key();
    let mut rows = Vec::with_capacity(grid.replicates);
    let mut wall = Vec::with_capacity(grid.replicates);
    for rep in 0..grid.replicates {
        let t = Instant::now();
        let (row, _) = run_replicate(cell, rep, replicate_seed(grid.seed, &key, rep), &grid.run)?;
        wall.push(t.elapsed().as_secs_f64());
        rows.push(row);
    }
    Ok((rows, wall))
}

/// Runs every cell of `grid` not already completed under `out`. Cells run
/// on the current rayon pool.
pub fn run_bench(grid: &BenchGrid, out: &Path) -> Result<BenchOutcome> {
    grid.validate()?;
    let manifest_path = out.join("manifest.json");
    let mut manifest = if manifest_path.exists() {
        let text = std::fs::read_to_string(&manifest_path)?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::json("manifest", e))?;
        if m.grid != *grid {
            return Err(Error::Config(format!(
                "{} belongs to a different grid; use a fresh output directory",
                manifest_path.display()
            )));
        }
        m
    } else {
        Manifest {
            grid: grid.clone(),
            completed: BTreeMap::new(),
        }
    };
    let cells = grid.cells();
    let done = |c: &Cell| {
        let (csv, json) = cell_paths(out, &c.key());
        manifest.completed.contains_key(&c.key()) && csv.exists() && json.exists()
    };
    let pending: Vec<&Cell> = cells.iter().filter(|c| !done(c)).collect();
    let skipped: Vec<String> = cells.iter().filter(|c| done(c)).map(Cell::key).collect();
    // completed cells absent on disk are rerun
    manifest.completed.retain(|k, _| skipped.contains(k));
    write_json(&manifest_path, &manifest)?;

    let shared = Mutex::new(manifest);
    pending.par_iter().try_for_each(|cell| -> Result<()> {
        let (rows, wall) = run_cell(grid, cell)?;
        let key = cell.key();
        let (csv_path, json_path) = cell_paths(out, &key);
        write_atomic(&csv_path, rows_to_csv(&rows)?.as_bytes())?;
        write_json(&json_path, &aggregate(cell, &rows, wall))?;
        let mut m = shared.lock();
        m.completed.insert(key, rows.len());
        write_json(&manifest_path, &*m)
    })?;

    let mut all_rows = Vec::new();
    let mut aggregates = Vec::new();
    for cell in &cells {
        let (csv_path, json_path) = cell_paths(out, &cell.key());
        all_rows.extend(rows_from_csv(&std::fs::read_to_string(csv_path)?)?);
        let text = std::fs::read_to_string(json_path)?;
        aggregates.push(serde_json::from_str::<CellAggregate>(&text).map_err(|e| Error::json("cell aggregate", e))?);
    }
    write_atomic(&out.join("results.csv"), rows_to_csv(&all_rows)?.as_bytes())?;
    write_json(&out.join("aggregate.json"), &aggregates)?;
    Ok(BenchOutcome {
        rows: all_rows,
        aggregates,
        ran: pending.iter().map(|c| c.key()).collect(),
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> BenchGrid {
        BenchGrid {
            n: vec![200],
            d_z: vec![6],
            d_x: vec![2],
            sparsity: vec![0.5],
            snr: vec![2.0],
            regime: vec![Regime::Edge, Regime::Separable],
            nonlinear: false,
            rho: 0.25,
            replicates: 2,
            seed: 7,
            run: RunConfig {
                b: 4,
                ..RunConfig::default()
            },
        }
    }

    #[test]
    fn seeds_depend_on_cell_and_replicate() {
        let a = replicate_seed(1, "k", 0);
        assert_eq!(a, replicate_seed(1, "k", 0));
        assert_ne!(a, replicate_seed(1, "k", 1));
        assert_ne!(a, replicate_seed(1, "j", 0));
        assert_ne!(a, replicate_seed(2, "k", 0));
    }

    #[test]
    fn keys_are_distinct_and_validated() {
        let g = grid();
        let keys: Vec<String> = g.cells().iter().map(Cell::key).collect();
        assert_eq!(keys, vec!["n200-dz6-dx2-sp0.5-snr2-edge-linear", "n200-dz6-dx2-sp0.5-snr2-separable-linear"]);
        assert!(g.validate().is_ok());
        let bad = BenchGrid {
            regime: vec![Regime::Edge, Regime::Edge],
            ..grid()
        };
        assert!(bad.validate().unwrap_err().is_config());
    }

    #[test]
    fn rows_round_trip() {
        let g = grid();
        let cell = &g.cells()[0];
        let (row, _) = run_replicate(cell, 0, 11, &g.run).unwrap();
        let back = rows_from_csv(&rows_to_csv(std::slice::from_ref(&row)).unwrap()).unwrap();
        assert_eq!(back, vec![row]);
    }
}
