use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AncestralMatrix, Relation, TieredGraph};
use crate::scalar::Scalar;

/// Declared relations in table order.
pub const DECLARED: [Relation; 6] = [
    Relation::Na,
    Relation::Precedes,
    Relation::PrecededBy,
    Relation::NotDescendant,
    Relation::NotAncestor,
    Relation::Unordered,
];
/// True relations in table order.
pub const TRUE: [Relation; 3] = [Relation::Precedes, Relation::PrecededBy, Relation::Unordered];

/// Short ASCII labels used in column names.
pub fn label(r: Relation) -> &'static str {
    match r {
        Relation::Na => "na",
        Relation::Precedes => "prec",
        Relation::PrecededBy => "precby",
        Relation::NotDescendant => "ndesc",
        Relation::NotAncestor => "nanc",
        Relation::Unordered => "unord",
    }
}

/// `counts[declared][true]` over ordered pairs `(i, j)`, `i > j`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: [[usize; 3]; 6],
}

impl Confusion {
    fn slot(r: Relation, table: &[Relation]) -> usize {
        table.iter().position(|&t| t == r).expect("relation in table")
    }

    pub fn add(&mut self, declared: Relation, truth: Relation) {
        self.counts[Self::slot(declared, &DECLARED)][Self::slot(truth, &TRUE)] += 1;
    }

    pub fn get(&self, declared: Relation, truth: Relation) -> usize {
        self.counts[Self::slot(declared, &DECLARED)][Self::slot(truth, &TRUE)]
    }

    pub fn merge(&mut self, other: &Confusion) {
        for (a, b) in self.counts.iter_mut().flatten().zip(other.counts.iter().flatten()) {
            *a += b;
        }
    }

    /// Flattened `(declared, true, count)` cells in table order.
    pub fn cells(&self) -> impl Iterator<Item = (Relation, Relation, usize)> + '_ {
        DECLARED
            .iter()
            .enumerate()
            .flat_map(move |(a, &d)| TRUE.iter().enumerate().map(move |(b, &t)| (d, t, self.counts[a][b])))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// Fraction of decided entries that the truth does not contradict;
    /// `None` when nothing was decided.
    pub accuracy: Option<f64>,
    pub na_rate: f64,
    pub decided: usize,
    pub correct: usize,
    pub pairs: usize,
    pub confusion: Confusion,
}

/// Scores `m` against the foreground of `truth`; matrix position `k` is the
/// `k`-th foreground vertex. A `⪯` entry is correct unless the truth
/// reverses it.
pub fn metric_accuracy(m: &AncestralMatrix, truth: &TieredGraph) -> Result<AccuracyReport> {
    let fg = truth.foreground();
    if m.dim() != fg.len() {
        return Err(Error::Data(format!(
            "matrix covers {} foreground variables but the graph has {}",
            m.dim(),
            fg.len()
        )));
    }
    let mut confusion = Confusion::default();
    let (mut decided, mut correct, mut pairs) = (0, 0, 0);
    for (i, j) in m.pairs() {
        let declared = m.get(i, j);
        let t = truth.true_relation(fg[i], fg[j])?;
        confusion.add(declared, t);
        pairs += 1;
        if declared.is_decided() {
            decided += 1;
            correct += usize::from(declared.admits(t));
        }
    }
    Ok(AccuracyReport {
        accuracy: (decided > 0).then(|| correct as f64 / decided as f64),
        na_rate: if pairs == 0 { 0.0 } else { (pairs - decided) as f64 / pairs as f64 },
        decided,
        correct,
        pairs,
        confusion,
    })
}

/// Proportion of variance explained, `1 − Σε² / Σ(y − ȳ)²`.
pub fn metric_pve<F: Scalar>(residuals: &[F], y: &[F]) -> Result<f64> {
    if residuals.len() != y.len() {
        return Err(Error::Data(format!("{} residuals for {} responses", residuals.len(), y.len())));
    }
    if y.is_empty() {
        return Err(Error::Data("empty response".into()));
    }
    let mean = y.iter().map(|v| v.as_f64()).sum::<f64>() / y.len() as f64;
    let tss: f64 = y.iter().map(|v| (v.as_f64() - mean).powi(2)).sum();
    if tss <= 0.0 {
        return Err(Error::Data("response has zero variance".into()));
    }
    let rss: f64 = residuals.iter().map(|e| e.as_f64().powi(2)).sum();
    Ok(1.0 - rss / tss)
}
