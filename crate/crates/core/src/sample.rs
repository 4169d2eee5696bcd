//! Finite-sample CBL: per undecided pair, refit the regression quartet on
//! `2B` complementary half-samples, test for an unordered pair by omission
//! rates, otherwise run stability selection on the (de)activation rates.
//! Passes repeat until nothing changes.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AncestralMatrix, Refinement, Relation, Tier};
use crate::scalar::Scalar;
use crate::select::{gbm_fit, lasso, split_rows, ActiveSet, Method, Moments, SelectionMode, SelectorSpec};
use crate::stability::{adaptive_epsilon, estimate_rates, stability_select, Firing, Phi, Psi, Quartet, RateTable};

fn default_b() -> usize {
    50
}
fn default_gamma() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Number of complementary pairs; `2B` subsamples per pair and pass.
    #[serde(default = "default_b")]
    pub b: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub selector: SelectorSpec,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to `2·pairs + 1`, enough for every entry to be refined
    /// twice.
    #[serde(default)]
    pub max_passes: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            b: default_b(),
            gamma: default_gamma(),
            selector: SelectorSpec::default(),
            seed: 0,
            max_passes: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.b < 2 {
            return Err(Error::Config(format!("B must be at least 2, got {}", self.b)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if self.max_passes == Some(0) {
            return Err(Error::Config("max_passes must be positive".into()));
        }
        self.selector.validate()
    }
}

/// `B` pairs of disjoint half-samples of `0..n`, each of size `⌊n/2⌋`;
/// returned flat as `[D1, D2, D3, …]`, each sorted.
pub fn draw_complementary_pairs(n: usize, b: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if n < 2 {
        return Err(Error::Data(format!("need at least 2 rows to halve, got {n}")));
    }
    let half = n / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(2 * b);
    for _ in 0..b {
        rows.shuffle(&mut rng);
        let mut first = rows[..half].to_vec();
        let mut second = rows[half..2 * half].to_vec();
        first.sort_unstable();
        second.sort_unstable();
        out.push(first);
        out.push(second);
    }
    Ok(out)
}

/// Seed for a (pass, pair) cell, independent of evaluation order.
fn pair_seed(seed: u64, pass: usize, i: usize, j: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((pass as u64) << 42) ^ ((i as u64) << 21) ^ j as u64);
    rng.next_u64()
}

fn subsample_seed(pair: u64, b: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(pair);
    rng.set_stream(b as u64 + 1);
    rng.next_u64()
}

/// Fits the quartet for foreground columns `i`, `j` given conditioning
/// columns `a` (all ids into `data`) on `rows`. All four fits share one
/// train/validation split drawn from `split_seed`.
pub fn fit_quartet<F: Scalar>(
    data: ArrayView2<F>,
    a: &[usize],
    i: usize,
    j: usize,
    rows: &[usize],
    selector: &SelectorSpec,
    split_seed: u64,
) -> Result<Quartet> {
    if a.contains(&i) || a.contains(&j) || i == j {
        return Err(Error::Config("conditioning set must exclude the pair".into()));
    }
    let (train, val) = split_rows(rows, selector.train_fraction, split_seed)?;
    let p = a.len();
    // block columns: A…, X_i, X_j
    let mut cols = a.to_vec();
    cols.push(i);
    cols.push(j);
    let (bi, bj) = (p, p + 1);
    let with = |extra: usize| -> Vec<usize> { (0..p).chain(std::iter::once(extra)).collect() };
    let base: Vec<usize> = (0..p).collect();
    let fits = [(base.clone(), bi), (with(bj), bi), (base, bj), (with(bi), bj)];

    let sets: Vec<ActiveSet> = match selector.method {
        Method::LassoPath => {
            let block = data.select(Axis(1), &cols);
            let m = Moments::new(block.view(), &train, &val)?;
            fits.iter()
                .map(|(preds, resp)| {
                    let (sel, score) = match selector.mode {
                        SelectionMode::Joint => lasso::joint_selection(&m, preds, *resp, &selector.lasso),
                        SelectionMode::PerCandidate => {
                            lasso::per_candidate_selection(&m, preds, *resp, &selector.lasso)
                        }
                    };
                    ActiveSet::new(sel, score).relabel(preds)
                })
                .collect()
        }
        Method::GradientBoost => {
            let block = data.select(Axis(1), &cols);
            fits.iter()
                .map(|(preds, resp)| {
                    let x: Array2<F> = block.select(Axis(1), preds);
                    let fit = gbm_fit(x.view(), block.column(*resp), &train, &val, &selector.gbm, split_seed)?;
                    Ok(ActiveSet::new(fit.active(), fit.best_val_loss().as_f64()).relabel(preds))
                })
                .collect::<Result<_>>()?
        }
    };
    let to_ids = |s: &ActiveSet| ActiveSet::new(s.selected.iter().map(|&k| cols[k]).collect(), s.fit_score);
    Ok(Quartet {
        s0_i: to_ids(&sets[0]),
        s1_i: to_ids(&sets[1]),
        s0_j: to_ids(&sets[2]),
        s1_j: to_ids(&sets[3]),
    })
}

/// Omission rates `(r_i⁰, r_j⁰)`: how often each foreground variable is
/// dropped from the other's full model.
pub fn omission_rates(quartets: &[Quartet], i: usize, j: usize) -> (f64, f64) {
    let total = quartets.len().max(1) as f64;
    let ri = quartets.iter().filter(|q| !q.s1_j.contains(i)).count() as f64 / total;
    let rj = quartets.iter().filter(|q| !q.s1_i.contains(j)).count() as f64 / total;
    (ri, rj)
}

/// True when either omission rate exceeds `gamma`.
pub fn decide_unordered(quartets: &[Quartet], i: usize, j: usize, gamma: f64) -> bool {
    let (ri, rj) = omission_rates(quartets, i, j);
    ri > gamma || rj > gamma
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiredFamily {
    pub phi: Phi,
    pub psi: Psi,
    pub relation: Relation,
    pub firing: Firing,
}

/// Everything computed for one pair in one pass. `i > j` are foreground
/// positions; the decision is relative to `(i, j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEvidence {
    pub pass: usize,
    pub i: usize,
    pub j: usize,
    pub seed: u64,
    /// Conditioning columns (data column ids).
    pub conditioning: Vec<usize>,
    pub quartets: Vec<Quartet>,
    pub omission: (f64, f64),
    pub rates: Option<RateTable>,
    pub epsilon: Option<f64>,
    pub fired: Vec<FiredFamily>,
    pub decision: Relation,
    /// Whether the decision changed the matrix at the pass barrier.
    pub applied: bool,
}

/// Final state of one matrix entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub i: usize,
    pub j: usize,
    pub relation: Relation,
    /// Pass that last refined the entry.
    pub pass: usize,
    /// For ordered entries: the conditioning set used (data column ids).
    pub adjustment_set: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleResult {
    /// Data column ids of the foreground, in matrix order.
    pub foreground: Vec<usize>,
    pub background: Vec<usize>,
    pub matrix: AncestralMatrix,
    pub decisions: Vec<Decision>,
    pub evidence: Vec<PairEvidence>,
    pub passes: usize,
    pub converged: bool,
    pub selector_calls: usize,
}

impl SampleResult {
    pub fn decision(&self, i: usize, j: usize) -> Option<&Decision> {
        let (i, j) = if i > j { (i, j) } else { (j, i) };
        self.decisions.iter().find(|d| d.i == i && d.j == j)
    }
}

fn combine(rates: &RateTable, epsilon: f64) -> (Vec<FiredFamily>, Relation) {
    let mut fired = Vec::new();
    let mut decision = Relation::Na;
    for psi in Psi::ALL {
        for phi in Phi::ALL {
            if let Some((relation, firing)) = stability_select(rates, phi, psi, epsilon) {
                fired.push(FiredFamily {
                    phi,
                    psi,
                    relation,
                    firing,
                });
                // within one ordering a deactivation is the stronger claim;
                // the join keeps it
                decision = decision.join(relation).unwrap_or(decision);
            }
        }
    }
    (fired, decision)
}

/// Recomputes the decision of `ev` from its stored quartets.
pub fn replay(ev: &PairEvidence, fg: &[usize], b: usize, gamma: f64) -> Result<Relation> {
    if decide_unordered(&ev.quartets, fg[ev.i], fg[ev.j], gamma) {
        return Ok(Relation::Unordered);
    }
    let rates = estimate_rates(&ev.quartets, &ev.conditioning, b)?;
    Ok(combine(&rates, adaptive_epsilon(&rates)).1)
}

struct Problem<'a, F> {
    data: ArrayView2<'a, F>,
    fg: Vec<usize>,
    bg: Vec<usize>,
    config: &'a RunConfig,
}

impl<F: Scalar> Problem<'_, F> {
    fn conditioning(&self, m: &AncestralMatrix, i: usize, j: usize) -> Vec<usize> {
        let mut a = self.bg.clone();
        for k in 0..self.fg.len() {
            if k != i && k != j && m.known_non_descendant(k, i) && m.known_non_descendant(k, j) {
                a.push(self.fg[k]);
            }
        }
        a
    }

    fn evaluate(&self, m: &AncestralMatrix, i: usize, j: usize, pass: usize) -> Result<PairEvidence> {
        let cfg = self.config;
        let seed = pair_seed(cfg.seed, pass, i, j);
        let a = self.conditioning(m, i, j);
        let (ci, cj) = (self.fg[i], self.fg[j]);
        let subsamples = draw_complementary_pairs(self.data.nrows(), cfg.b, seed)?;
        let quartets: Vec<Quartet> = subsamples
            .par_iter()
            .enumerate()
            .map(|(b, rows)| fit_quartet(self.data, &a, ci, cj, rows, &cfg.selector, subsample_seed(seed, b)))
            .collect::<Result<_>>()?;
        let omission = omission_rates(&quartets, ci, cj);
        let mut ev = PairEvidence {
            pass,
            i,
            j,
            seed,
            conditioning: a,
            quartets,
            omission,
            rates: None,
            epsilon: None,
            fired: Vec::new(),
            decision: Relation::Na,
            applied: false,
        };
        if omission.0 > cfg.gamma || omission.1 > cfg.gamma {
            ev.decision = Relation::Unordered;
            return Ok(ev);
        }
        let rates = estimate_rates(&ev.quartets, &ev.conditioning, cfg.b)?;
        let epsilon = adaptive_epsilon(&rates);
        let (fired, decision) = combine(&rates, epsilon);
        ev.rates = Some(rates);
        ev.epsilon = Some(epsilon);
        ev.fired = fired;
        ev.decision = decision;
        Ok(ev)
    }
}

fn split_tiers(data: ArrayView2<impl Scalar>, tiers: &[Tier]) -> Result<(Vec<usize>, Vec<usize>)> {
    if tiers.len() != data.ncols() {
        return Err(Error::Data(format!(
            "tier manifest lists {} columns but the data has {}",
            tiers.len(),
            data.ncols()
        )));
    }
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for (c, t) in tiers.iter().enumerate() {
        match t {
            Tier::Background => bg.push(c),
            Tier::Foreground => fg.push(c),
            Tier::Latent => return Err(Error::Data(format!("column {c} is tagged latent"))),
        }
    }
    if let Some((r, c)) = data.indexed_iter().find(|(_, v)| !v.is_finite()).map(|(ix, _)| ix) {
        return Err(Error::Data(format!("non-finite value at row {r}, column {c}")));
    }
    Ok((fg, bg))
}

/// Runs finite-sample CBL on `data` (rows = samples) with column tiers.
pub fn run_cbl_sample<F: Scalar>(data: ArrayView2<F>, tiers: &[Tier], config: &RunConfig) -> Result<SampleResult> {
    config.validate()?;
    let (fg, bg) = split_tiers(data, tiers)?;
    if data.nrows() < 40 {
        return Err(Error::Data(format!("need at least 40 rows, got {}", data.nrows())));
    }
    let d = fg.len();
    let mut m = AncestralMatrix::new(d);
    let n_pairs = d * d.saturating_sub(1) / 2;
    let max_passes = config.max_passes.unwrap_or(2 * n_pairs + 1);
    let problem = Problem {
        data,
        fg: fg.clone(),
        bg: bg.clone(),
        config,
    };
    let mut decisions: Vec<Decision> = m
        .pairs()
        .into_iter()
        .map(|(i, j)| Decision {
            i,
            j,
            relation: Relation::Na,
            pass: 0,
            adjustment_set: None,
        })
        .collect();
    let mut evidence = Vec::new();
    let mut passes = 0;
    let mut converged = false;
    while passes < max_passes {
        let todo: Vec<(usize, usize)> = m.pairs().into_iter().filter(|&(i, j)| !m.get(i, j).is_complete()).collect();
        if todo.is_empty() {
            converged = true;
            break;
        }
        passes += 1;
        let snapshot = m.clone();
        let mut results: Vec<PairEvidence> = todo
            .par_iter()
            .map(|&(i, j)| problem.evaluate(&snapshot, i, j, passes))
            .collect::<Result<_>>()?;
        let mut changed = false;
        for ev in results.iter_mut() {
            if ev.decision == Relation::Na {
                continue;
            }
            if let Refinement::Refined(rel) = m.refine(ev.i, ev.j, ev.decision) {
                ev.applied = true;
                changed = true;
                let slot = decisions.iter_mut().find(|d| d.i == ev.i && d.j == ev.j).expect("pair exists");
                slot.relation = rel;
                slot.pass = passes;
                if matches!(rel, Relation::Precedes | Relation::PrecededBy) {
                    let source_is_ordered = matches!(ev.decision, Relation::Precedes | Relation::PrecededBy);
                    if source_is_ordered || slot.adjustment_set.is_none() {
                        slot.adjustment_set = Some(ev.conditioning.clone());
                    }
                }
            }
        }
        evidence.extend(results);
        if !changed {
            converged = true;
            break;
        }
    }
    let selector_calls = evidence.iter().map(|e| 4 * e.quartets.len()).sum();
    Ok(SampleResult {
        foreground: fg,
        background: bg,
        matrix: m,
        decisions,
        evidence,
        passes,
        converged,
        selector_calls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complementary_pairs_are_disjoint_halves() {
        let sets = draw_complementary_pairs(10, 1, 7).unwrap();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].len(), 5);
        assert!(sets[0].iter().all(|r| !sets[1].contains(r)));
        let many = draw_complementary_pairs(101, 20, 3).unwrap();
        for pair in many.chunks(2) {
            assert_eq!((pair[0].len(), pair[1].len()), (50, 50));
            assert!(pair[0].iter().all(|r| pair[1].binary_search(r).is_err()));
        }
        assert_eq!(many, draw_complementary_pairs(101, 20, 3).unwrap());
        assert!(draw_complementary_pairs(1, 1, 0).is_err());
    }

    fn quartet(s1_i: &[usize], s1_j: &[usize]) -> Quartet {
        Quartet {
            s0_i: ActiveSet::new(vec![], 0.0),
            s1_i: ActiveSet::new(s1_i.to_vec(), 0.0),
            s0_j: ActiveSet::new(vec![], 0.0),
            s1_j: ActiveSet::new(s1_j.to_vec(), 0.0),
        }
    }

    #[test]
    fn gamma_test_is_strict() {
        // column 10 = X_i, 11 = X_j
        let never = vec![quartet(&[11], &[]); 4];
        assert!(decide_unordered(&never, 10, 11, 0.5));
        let always = vec![quartet(&[11], &[10]); 4];
        assert!(!decide_unordered(&always, 10, 11, 0.5));
        let mut qs = vec![quartet(&[11], &[10]); 48];
        qs.extend(vec![quartet(&[11], &[]); 52]);
        let (ri, _) = omission_rates(&qs, 10, 11);
        assert!((ri - 0.52).abs() < 1e-12);
        assert!(decide_unordered(&qs, 10, 11, 0.5));
        let mut half = vec![quartet(&[11], &[10]); 50];
        half.extend(vec![quartet(&[11], &[]); 50]);
        assert!(!decide_unordered(&half, 10, 11, 0.5));
    }

    #[test]
    fn config_validation() {
        let mut c = RunConfig::default();
        assert!(c.validate().is_ok());
        c.b = 1;
        assert!(c.validate().unwrap_err().is_config());
        let c = RunConfig {
            gamma: 1.0,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn tier_mismatch_is_a_data_error() {
        let data = Array2::<f64>::zeros((50, 3));
        let err = run_cbl_sample(data.view(), &[Tier::Background, Tier::Foreground], &RunConfig::default());
        assert!(matches!(err, Err(Error::Data(_))));
    }
}
