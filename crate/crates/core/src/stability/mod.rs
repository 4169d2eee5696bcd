//! Complementary-pairs stability selection over (de)activation events.

pub mod bound;

use serde::{Deserialize, Serialize};

pub use bound::{max_errors_bound, rconcave_tail_bound};

use crate::error::{Error, Result};
use crate::graph::Relation;
use crate::select::ActiveSet;

/// Event family: whether adding the other foreground variable removes
/// (`Deactivation`) or adds (`Activation`) a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phi {
    Deactivation,
    Activation,
}

/// Ordering the event speaks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Psi {
    /// `i ⪯ j`
    IBeforeJ,
    /// `j ⪯ i`
    JBeforeI,
}

impl Phi {
    pub const ALL: [Phi; 2] = [Phi::Deactivation, Phi::Activation];
}
impl Psi {
    pub const ALL: [Psi; 2] = [Psi::IBeforeJ, Psi::JBeforeI];
}

/// Relation (for the ordered pair `(i, j)`) licensed when `(φ, ψ)` fires.
pub fn implied_relation(phi: Phi, psi: Psi) -> Relation {
    match (phi, psi) {
        (Phi::Deactivation, Psi::IBeforeJ) => Relation::Precedes,
        (Phi::Activation, Psi::IBeforeJ) => Relation::NotDescendant,
        (Phi::Deactivation, Psi::JBeforeI) => Relation::PrecededBy,
        (Phi::Activation, Psi::JBeforeI) => Relation::NotAncestor,
    }
}

/// Active sets from one subsample: each foreground variable regressed on
/// the conditioning set without (`0`) and with (`1`) the other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quartet {
    pub s0_i: ActiveSet,
    pub s1_i: ActiveSet,
    pub s0_j: ActiveSet,
    pub s1_j: ActiveSet,
}

/// Per-candidate event counts out of `2B` subsamples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateTable {
    pub b: usize,
    /// Candidate column ids, in conditioning-set order.
    pub candidates: Vec<usize>,
    /// `counts[φ][ψ][k]`.
    pub counts: [[Vec<u32>; 2]; 2],
}

impl RateTable {
    pub fn subsamples(&self) -> usize {
        2 * self.b
    }

    pub fn counts(&self, phi: Phi, psi: Psi) -> &[u32] {
        &self.counts[phi as usize][psi as usize]
    }

    pub fn rates(&self, phi: Phi, psi: Psi) -> Vec<f64> {
        let denom = self.subsamples() as f64;
        self.counts(phi, psi).iter().map(|&c| c as f64 / denom).collect()
    }

    /// Largest count for ordering `ψ` across both event families.
    fn max_count(&self, psi: Psi) -> u32 {
        Phi::ALL
            .iter()
            .flat_map(|&phi| self.counts(phi, psi).iter().copied())
            .max()
            .unwrap_or(0)
    }
}

/// Counts the four event families over `2B` quartets.
pub fn estimate_rates(quartets: &[Quartet], candidates: &[usize], b: usize) -> Result<RateTable> {
    if quartets.len() != 2 * b {
        return Err(Error::Data(format!(
            "expected {} quartets for B = {b}, got {}",
            2 * b,
            quartets.len()
        )));
    }
    let mut counts: [[Vec<u32>; 2]; 2] = Default::default();
    for row in counts.iter_mut() {
        for cell in row.iter_mut() {
            *cell = vec![0; candidates.len()];
        }
    }
    let leaves = |from: &ActiveSet, to: &ActiveSet, c: usize| from.contains(c) && !to.contains(c);
    for q in quartets {
        for (k, &c) in candidates.iter().enumerate() {
            let events = [
                (Phi::Deactivation, Psi::IBeforeJ, leaves(&q.s0_j, &q.s1_j, c)),
                (Phi::Activation, Psi::IBeforeJ, leaves(&q.s1_i, &q.s0_i, c)),
                (Phi::Deactivation, Psi::JBeforeI, leaves(&q.s0_i, &q.s1_i, c)),
                (Phi::Activation, Psi::JBeforeI, leaves(&q.s1_j, &q.s0_j, c)),
            ];
            for (phi, psi, hit) in events {
                if hit {
                    counts[phi as usize][psi as usize][k] += 1;
                }
            }
        }
    }
    Ok(RateTable {
        b,
        candidates: candidates.to_vec(),
        counts,
    })
}

/// Smallest grid threshold at which at most one ordering still has a
/// candidate at or above it; 0 when the orderings never conflict.
pub fn adaptive_epsilon(table: &RateTable) -> f64 {
    let m = table.max_count(Psi::IBeforeJ).min(table.max_count(Psi::JBeforeI));
    if m == 0 {
        0.0
    } else {
        (m + 1) as f64 / table.subsamples() as f64
    }
}

/// Where and why a `(φ, ψ)` family fired.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Firing {
    pub tau: f64,
    pub selected: usize,
    pub bound: f64,
    pub theta: f64,
    pub low_count: usize,
}

/// Decision rule for one family of counts out of `2B`: with `θ̂` the mean
/// rate and `L̂` the candidates at or below it, fires at the first grid
/// `τ > max(ε, θ̂)` where more candidates reach `τ` than the error bound
/// allows.
pub fn select_counts(counts: &[u32], b: usize, epsilon: f64) -> Option<Firing> {
    if counts.is_empty() {
        return None;
    }
    let denom = (2 * b) as f64;
    let theta = counts.iter().map(|&c| c as f64).sum::<f64>() / (counts.len() as f64 * denom);
    let low_count = counts.iter().filter(|&&c| c as f64 / denom <= theta).count();
    for m in 1..=2 * b {
        let tau = m as f64 / denom;
        if tau <= epsilon || tau <= theta {
            continue;
        }
        let selected = counts.iter().filter(|&&c| c as usize >= m).count();
        if selected == 0 {
            break;
        }
        let bound = max_errors_bound(theta, tau, b, low_count);
        if selected as f64 > bound {
            return Some(Firing {
                tau,
                selected,
                bound,
                theta,
                low_count,
            });
        }
    }
    None
}

/// Applies [`select_counts`] to one family of `table` and maps a firing to
/// its relation.
pub fn stability_select(table: &RateTable, phi: Phi, psi: Psi, epsilon: f64) -> Option<(Relation, Firing)> {
    select_counts(table.counts(phi, psi), table.b, epsilon).map(|f| (implied_relation(phi, psi), f))
}
