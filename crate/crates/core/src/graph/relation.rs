use std::fmt;

use serde::{Deserialize, Serialize};

use super::TieredGraph;
use crate::error::{Error, Result};

/// Knowledge about the ancestral relation of an ordered pair `(a, b)`.
///
/// Each variant is the set of worlds it leaves open among `a ≺ b`,
/// `b ≺ a` and `a ∼ b`; combining evidence intersects those sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// Nothing known.
    #[default]
    #[serde(rename = "NA")]
    Na,
    /// `a ≺ b`: a is an ancestor of b.
    Precedes,
    /// `b ≺ a`.
    PrecededBy,
    /// `a ⪯ b`: a is not a descendant of b.
    NotDescendant,
    /// `b ⪯ a`: a is not an ancestor of b.
    NotAncestor,
    /// `a ∼ b`: neither is an ancestor of the other.
    Unordered,
}

const PRECEDES: u8 = 0b001;
const PRECEDED_BY: u8 = 0b010;
const UNORDERED: u8 = 0b100;

impl Relation {
    fn worlds(self) -> u8 {
        match self {
            Relation::Na => PRECEDES | PRECEDED_BY | UNORDERED,
            Relation::Precedes => PRECEDES,
            Relation::PrecededBy => PRECEDED_BY,
            Relation::NotDescendant => PRECEDES | UNORDERED,
            Relation::NotAncestor => PRECEDED_BY | UNORDERED,
            Relation::Unordered => UNORDERED,
        }
    }

    fn from_worlds(w: u8) -> Option<Relation> {
        Some(match w {
            0b111 => Relation::Na,
            PRECEDES => Relation::Precedes,
            PRECEDED_BY => Relation::PrecededBy,
            0b101 => Relation::NotDescendant,
            0b110 => Relation::NotAncestor,
            UNORDERED => Relation::Unordered,
            // empty set, or {a ≺ b, b ≺ a} which sound rules never produce
            _ => return None,
        })
    }

    /// 0 for NA, 1 for the one-sided `⪯` relations, 2 for `≺` and `∼`.
    pub fn informativeness(self) -> u8 {
        3 - self.worlds().count_ones() as u8
    }

    pub fn is_decided(self) -> bool {
        self != Relation::Na
    }

    /// Fully informative relations are never revisited.
    pub fn is_complete(self) -> bool {
        self.informativeness() == 2
    }

    /// The same knowledge stated for the pair `(b, a)`.
    pub fn flip(self) -> Relation {
        match self {
            Relation::Na => Relation::Na,
            Relation::Precedes => Relation::PrecededBy,
            Relation::PrecededBy => Relation::Precedes,
            Relation::NotDescendant => Relation::NotAncestor,
            Relation::NotAncestor => Relation::NotDescendant,
            Relation::Unordered => Relation::Unordered,
        }
    }

    /// Conjunction of two pieces of evidence; `None` when they contradict.
    pub fn join(self, other: Relation) -> Option<Relation> {
        Relation::from_worlds(self.worlds() & other.worlds())
    }

    /// True when `truth` (one of `≺`, `≻`, `∼`) is among the worlds this
    /// relation leaves open.
    pub fn admits(self, truth: Relation) -> bool {
        self.worlds() & truth.worlds() == truth.worlds()
    }

    /// `a ⪯ b` is known: a is not a descendant of b.
    pub fn implies_not_descendant(self) -> bool {
        self.worlds() & PRECEDED_BY == 0
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Na => "NA",
            Relation::Precedes => "≺",
            Relation::PrecededBy => "≻",
            Relation::NotDescendant => "⪯",
            Relation::NotAncestor => "⪰",
            Relation::Unordered => "∼",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Outcome of offering new evidence to an [`AncestralMatrix`] entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Refinement {
    Unchanged,
    Refined(Relation),
    Conflict,
}

/// Lower-triangular record of relations among `d` foreground variables.
/// Entry `(i, j)` with `i > j` stores the relation of the ordered pair
/// `(X_i, X_j)`; lookups in the other orientation are flipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AncestralMatrix {
    d: usize,
    entries: Vec<Relation>,
}

impl AncestralMatrix {
    pub fn new(d: usize) -> Self {
        AncestralMatrix {
            d,
            entries: vec![Relation::Na; d * d.saturating_sub(1) / 2],
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    fn slot(i: usize, j: usize) -> usize {
        debug_assert!(i > j);
        i * (i - 1) / 2 + j
    }

    /// Relation of `(X_i, X_j)` for any `i != j`.
    pub fn get(&self, i: usize, j: usize) -> Relation {
        assert!(i != j && i < self.d && j < self.d, "pair ({i}, {j}) out of range");
        if i > j {
            self.entries[Self::slot(i, j)]
        } else {
            self.entries[Self::slot(j, i)].flip()
        }
    }

    /// Joins `rel` (stated for `(X_i, X_j)`) into the stored entry. The entry
    /// only ever gains information; contradicting evidence is rejected.
    pub fn refine(&mut self, i: usize, j: usize, rel: Relation) -> Refinement {
        let current = self.get(i, j);
        match current.join(rel) {
            None => Refinement::Conflict,
            Some(next) if next == current => Refinement::Unchanged,
            Some(next) => {
                if i > j {
                    self.entries[Self::slot(i, j)] = next;
                } else {
                    self.entries[Self::slot(j, i)] = next.flip();
                }
                Refinement::Refined(next)
            }
        }
    }

    /// Lower-triangular pairs `(i, j)`, `i > j`, in ascending `(j, i)` order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.entries.len());
        for j in 0..self.d {
            for i in j + 1..self.d {
                out.push((i, j));
            }
        }
        out
    }

    /// Known `X_k ⪯ X_i`.
    pub fn known_non_descendant(&self, k: usize, i: usize) -> bool {
        k != i && self.get(k, i).implies_not_descendant()
    }

    pub fn is_complete(&self) -> bool {
        self.entries.iter().all(|r| r.is_complete())
    }

    pub fn decided_count(&self) -> usize {
        self.entries.iter().filter(|r| r.is_decided()).count()
    }

    /// Ground-truth matrix for the foreground of `g`.
    pub fn from_truth(g: &TieredGraph) -> AncestralMatrix {
        let d = g.foreground().len();
        let mut m = AncestralMatrix::new(d);
        for (i, j) in m.pairs() {
            let rel = true_relation_pos(g, i, j);
            m.entries[Self::slot(i, j)] = rel;
        }
        m
    }
}

fn true_relation_pos(g: &TieredGraph, i: usize, j: usize) -> Relation {
    let (a, b) = (g.foreground()[i], g.foreground()[j]);
    if g.is_ancestor(a, b) {
        Relation::Precedes
    } else if g.is_ancestor(b, a) {
        Relation::PrecededBy
    } else {
        Relation::Unordered
    }
}

/// Ground-truth relation of foreground vertices `i` and `j` (vertex ids)
/// from directed reachability; latent vertices never count as ancestors.
pub fn true_relation(g: &TieredGraph, i: usize, j: usize) -> Result<Relation> {
    for v in [i, j] {
        if g.vertex(v)?.tier != super::Tier::Foreground {
            return Err(Error::NotForeground(v));
        }
    }
    if i == j {
        return Err(Error::SelfPair(i));
    }
    Ok(if g.is_ancestor(i, j) {
        Relation::Precedes
    } else if g.is_ancestor(j, i) {
        Relation::PrecededBy
    } else {
        Relation::Unordered
    })
}

impl TieredGraph {
    /// See [`true_relation`].
    pub fn true_relation(&self, i: usize, j: usize) -> Result<Relation> {
        true_relation(self, i, j)
    }
}
