//! Fixpoint learner against an exact independence oracle.
//!
//! The oracle is d-separation in a known [`TieredGraph`]. Queries are
//! restricted to the lazy form: the conditioning set is always the full set
//! of known common non-descendants of a foreground pair (plus, optionally,
//! the other member of the pair), never an arbitrary subset.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{AncestralMatrix, Refinement, Relation, TieredGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum QueryKind {
    /// `X_i ⫫ X_j | S_ij`
    MarginalPair,
    /// `W ⫫ X_i | S_ij \ {W} ∪ φ(X_j)`
    WithWitness,
}

/// A lazy-oracle query. Callers name the pair, the witness and whether the
/// other pair member joins the conditioning set; the set itself is always
/// derived from the current matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct LazyQuery {
    pub kind: QueryKind,
    /// Foreground position of the tested variable.
    pub i: usize,
    /// Foreground position of the other pair member.
    pub j: usize,
    /// Vertex id of the witness (`WithWitness` only).
    pub w: Option<usize>,
    /// `φ(X_j) = {X_j}` when set.
    pub include_j: bool,
}

impl LazyQuery {
    pub fn marginal(i: usize, j: usize) -> Self {
        LazyQuery {
            kind: QueryKind::MarginalPair,
            i,
            j,
            w: None,
            include_j: false,
        }
    }

    pub fn witness(w: usize, i: usize, j: usize, include_j: bool) -> Self {
        LazyQuery {
            kind: QueryKind::WithWitness,
            i,
            j,
            w: Some(w),
            include_j,
        }
    }

    /// Conditioning set this query implies under `m`.
    pub fn conditioning_set(&self, g: &TieredGraph, m: &AncestralMatrix) -> Result<Vec<usize>> {
        let mut s = known_common_non_descendants(g, m, self.i, self.j);
        if let Some(w) = self.w {
            let pos = s.iter().position(|&v| v == w).ok_or(Error::WitnessNotInSet(w))?;
            s.remove(pos);
        }
        if self.include_j {
            s.push(g.foreground()[self.j]);
        }
        Ok(s)
    }
}

/// `S_ij`: the background plus every other foreground variable known to be
/// a non-descendant of both `X_i` and `X_j`. Positions index the foreground.
pub fn known_common_non_descendants(
    g: &TieredGraph,
    m: &AncestralMatrix,
    i: usize,
    j: usize,
) -> Vec<usize> {
    let fg = g.foreground();
    let mut s: Vec<usize> = g.background().to_vec();
    s.extend(
        (0..fg.len())
            .filter(|&k| k != i && k != j && m.known_non_descendant(k, i) && m.known_non_descendant(k, j))
            .map(|k| fg[k]),
    );
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct TranscriptEntry {
    pub query: LazyQuery,
    pub independent: bool,
    /// Pass number (1-based) in which the query was issued.
    pub iteration: usize,
    pub conditioning: Vec<usize>,
}

/// Every query a run issued, with the matrix each pass started from.
#[derive(Debug, Clone, Default, Serialize)]
pub struct OracleTranscript {
    pub entries: Vec<TranscriptEntry>,
    pub snapshots: Vec<AncestralMatrix>,
}

impl OracleTranscript {
    /// Checks that every recorded conditioning set is exactly the one the
    /// lazy discipline allows for its pass, and that snapshots only gain
    /// information.
    pub fn audit(&self, g: &TieredGraph) -> std::result::Result<(), String> {
        for e in &self.entries {
            let m = self
                .snapshots
                .get(e.iteration - 1)
                .ok_or_else(|| format!("no snapshot for pass {}", e.iteration))?;
            let mut expect = e.query.conditioning_set(g, m).map_err(|err| err.to_string())?;
            let mut got = e.conditioning.clone();
            expect.sort_unstable();
            got.sort_unstable();
            if expect != got {
                return Err(format!("query {:?} used {:?}, lazy set is {:?}", e.query, got, expect));
            }
        }
        for w in self.snapshots.windows(2) {
            for (i, j) in w[0].pairs() {
                let (before, after) = (w[0].get(i, j), w[1].get(i, j));
                if before.join(after) != Some(after) {
                    return Err(format!("entry ({i}, {j}) went from {before} to {after}"));
                }
            }
        }
        Ok(())
    }
}

/// Answers lazy queries by d-separation against a fixed matrix snapshot.
pub struct LazyOracle<'a> {
    graph: &'a TieredGraph,
    matrix: &'a AncestralMatrix,
    iteration: usize,
    log: Option<Vec<TranscriptEntry>>,
}

impl<'a> LazyOracle<'a> {
    pub fn new(graph: &'a TieredGraph, matrix: &'a AncestralMatrix, iteration: usize, record: bool) -> Self {
        LazyOracle {
            graph,
            matrix,
            iteration,
            log: record.then(Vec::new),
        }
    }

    pub fn ask(&mut self, q: LazyQuery) -> bool {
        let cond = q
            .conditioning_set(self.graph, self.matrix)
            .expect("witness drawn from the lazy set");
        let fg = self.graph.foreground();
        let tested = fg[q.i];
        let other = match q.kind {
            QueryKind::MarginalPair => fg[q.j],
            QueryKind::WithWitness => q.w.expect("witness query carries a witness"),
        };
        let answer = self.graph.independent(tested, other, &cond);
        if let Some(log) = self.log.as_mut() {
            log.push(TranscriptEntry {
                query: q,
                independent: answer,
                iteration: self.iteration,
                conditioning: cond,
            });
        }
        answer
    }

    fn into_log(self) -> Vec<TranscriptEntry> {
        self.log.unwrap_or_default()
    }
}

fn check_witness(w: usize, set: &[usize]) -> Result<Vec<usize>> {
    if !set.contains(&w) {
        return Err(Error::WitnessNotInSet(w));
    }
    Ok(set.iter().copied().filter(|&v| v != w).collect())
}

/// `W ⫫ X_j | A \ {W} ∪ {X_i}` and `W ⫫̸ X_j | A \ {W}`: conditioning on
/// `X_i` switches the dependence off, which licenses `X_i ≺ X_j`.
/// `i`, `j` and `w` are vertex ids.
pub fn minimal_deactivator_holds(
    g: &TieredGraph,
    w: usize,
    i: usize,
    j: usize,
    set: &[usize],
) -> Result<bool> {
    let mut rest = check_witness(w, set)?;
    let without = g.d_separated(&[w], &[j], &rest)?;
    rest.push(i);
    let with = g.d_separated(&[w], &[j], &rest)?;
    Ok(with && !without)
}

/// `W ⫫̸ X_i | A \ {W} ∪ {X_j}` and `W ⫫ X_i | A \ {W}`: conditioning on
/// `X_j` switches a dependence on, which licenses `X_i ⪯ X_j`.
pub fn minimal_activator_holds(
    g: &TieredGraph,
    w: usize,
    i: usize,
    j: usize,
    set: &[usize],
) -> Result<bool> {
    let mut rest = check_witness(w, set)?;
    let without = g.d_separated(&[w], &[i], &rest)?;
    rest.push(j);
    let with = g.d_separated(&[w], &[i], &rest)?;
    Ok(!with && without)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Rule {
    /// minimal deactivation
    R1,
    /// minimal activation
    R2,
    /// separation by the known non-descendants
    R3,
}

/// Why an entry holds the value it does.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub rule: Rule,
    /// Vertex id of the (de)activating witness.
    pub witness: Option<usize>,
    pub pass: usize,
    /// For `≺` entries: the conditioning set used, a valid adjustment set
    /// for the ordered pair.
    pub adjustment_set: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OracleOptions {
    pub record_transcript: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub matrix: AncestralMatrix,
    /// Keyed by lower-triangular foreground positions `(i, j)`, `i > j`.
    pub provenance: BTreeMap<(usize, usize), Provenance>,
    pub passes: usize,
    pub transcript: Option<OracleTranscript>,
}

struct PairOutcome {
    relation: Relation,
    provenance: Option<Provenance>,
    log: Vec<TranscriptEntry>,
}

fn evaluate_pair(
    g: &TieredGraph,
    m: &AncestralMatrix,
    (i, j): (usize, usize),
    pass: usize,
    record: bool,
) -> PairOutcome {
    let mut oracle = LazyOracle::new(g, m, pass, record);
    let set = known_common_non_descendants(g, m, i, j);

    if oracle.ask(LazyQuery::marginal(i, j)) {
        return PairOutcome {
            relation: Relation::Unordered,
            provenance: Some(Provenance {
                rule: Rule::R3,
                witness: None,
                pass,
                adjustment_set: None,
            }),
            log: oracle.into_log(),
        };
    }

    let mut relation = Relation::Na;
    let mut provenance = None;
    for &w in &set {
        // (tested, other): the tested variable's dependence on w
        let deactivated = |t: usize, o: usize, oracle: &mut LazyOracle| {
            oracle.ask(LazyQuery::witness(w, t, o, true)) && !oracle.ask(LazyQuery::witness(w, t, o, false))
        };
        let found = if deactivated(j, i, &mut oracle) {
            Some((Relation::Precedes, Rule::R1))
        } else if deactivated(i, j, &mut oracle) {
            Some((Relation::PrecededBy, Rule::R1))
        } else if !oracle.ask(LazyQuery::witness(w, j, i, true)) && oracle.ask(LazyQuery::witness(w, j, i, false)) {
            Some((Relation::NotAncestor, Rule::R2))
        } else if !oracle.ask(LazyQuery::witness(w, i, j, true)) && oracle.ask(LazyQuery::witness(w, i, j, false)) {
            Some((Relation::NotDescendant, Rule::R2))
        } else {
            None
        };
        if let Some((rel, rule)) = found {
            if let Some(joined) = relation.join(rel) {
                if joined != relation {
                    relation = joined;
                    let ordered = matches!(joined, Relation::Precedes | Relation::PrecededBy);
                    provenance = Some(Provenance {
                        rule,
                        witness: Some(w),
                        pass,
                        adjustment_set: ordered.then(|| set.clone()),
                    });
                }
            }
            if relation.is_complete() {
                break;
            }
        }
    }
    PairOutcome {
        relation,
        provenance,
        log: oracle.into_log(),
    }
}

/// Runs the fixpoint learner with default options (no transcript).
pub fn run_cbl_oracle(g: &TieredGraph) -> OracleResult {
    run_cbl_oracle_with(g, OracleOptions::default())
}

/// Repeats passes over every pair not yet fully decided until a pass
/// changes nothing. Within a pass all pairs read the matrix as it stood at
/// the start of the pass; updates are published at the pass barrier, so the
/// result does not depend on pair order or thread count.
pub fn run_cbl_oracle_with(g: &TieredGraph, opts: OracleOptions) -> OracleResult {
    let d = g.foreground().len();
    let mut m = AncestralMatrix::new(d);
    let mut provenance = BTreeMap::new();
    let mut transcript = opts.record_transcript.then(OracleTranscript::default);
    let mut passes = 0;

    loop {
        passes += 1;
        let pending: Vec<(usize, usize)> = m
            .pairs()
            .into_iter()
            .filter(|&(i, j)| !m.get(i, j).is_complete())
            .collect();
        let outcomes: Vec<PairOutcome> = pending
            .par_iter()
            .map(|&pair| evaluate_pair(g, &m, pair, passes, opts.record_transcript))
            .collect();

        if let Some(t) = transcript.as_mut() {
            t.snapshots.push(m.clone());
        }
        let mut changed = false;
        for (&(i, j), outcome) in pending.iter().zip(outcomes) {
            if let Some(t) = transcript.as_mut() {
                t.entries.extend(outcome.log);
            }
            if let Refinement::Refined(_) = m.refine(i, j, outcome.relation) {
                changed = true;
                if let Some(p) = outcome.provenance {
                    provenance.insert((i, j), p);
                }
            }
        }
        if !changed {
            break;
        }
    }

    OracleResult {
        matrix: m,
        provenance,
        passes,
        transcript,
    }
}
