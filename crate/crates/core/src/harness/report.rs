//! JSON result files written by `discover` and `oracle`, and scoring of a
//! saved result against a truth graph by variable name.

use serde::{Deserialize, Serialize};

use super::metrics::{metric_accuracy, AccuracyReport};
use crate::error::{Error, Result};
use crate::graph::{check_identifiability, AncestralMatrix, Condition, Relation, TieredGraph};
use crate::oracle::{OracleResult, Rule};
use crate::sample::{FiredFamily, PairEvidence, SampleResult};

/// One lower-triangular matrix entry: the relation of `row` to `col`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub row: String,
    pub col: String,
    pub relation: Relation,
    pub symbol: String,
    /// Pass that last refined the entry (0 when never decided).
    pub pass: usize,
    /// Conditioning set behind an ordered entry: an adjustment set for the
    /// pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjustment_set: Option<Vec<String>>,
    /// Families that fired in the deciding pass.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fired: Vec<FiredFamily>,
    /// Omission rates of the deciding pass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omission: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    /// Foreground names in matrix order.
    pub foreground: Vec<String>,
    pub entries: Vec<Entry>,
    pub passes: usize,
    pub converged: bool,
    pub selector_calls: usize,
    /// Full per-pass evidence (active sets, rate tables) on request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<Vec<PairEvidence>>,
}

impl DiscoveryReport {
    /// `names` are the data column names.
    pub fn new(result: &SampleResult, names: &[String], full_evidence: bool) -> DiscoveryReport {
        let fg: Vec<String> = result.foreground.iter().map(|&c| names[c].clone()).collect();
        let entries = result
            .matrix
            .pairs()
            .into_iter()
            .map(|(i, j)| {
                let decision = result.decision(i, j);
                let pass = decision.map_or(0, |d| d.pass);
                let deciding = result.evidence.iter().find(|e| e.i == i && e.j == j && e.pass == pass && e.applied);
                let relation = result.matrix.get(i, j);
                Entry {
                    row: fg[i].clone(),
                    col: fg[j].clone(),
                    relation,
                    symbol: relation.symbol().into(),
                    pass,
                    adjustment_set: decision
                        .and_then(|d| d.adjustment_set.as_ref())
                        .map(|a| a.iter().map(|&c| names[c].clone()).collect()),
                    fired: deciding.map(|e| e.fired.clone()).unwrap_or_default(),
                    omission: deciding.map(|e| e.omission),
                }
            })
            .collect();
        DiscoveryReport {
            foreground: fg,
            entries,
            passes: result.passes,
            converged: result.converged,
            selector_calls: result.selector_calls,
            evidence: full_evidence.then(|| result.evidence.clone()),
        }
    }

    /// Rebuilds the matrix in this report's foreground order.
    pub fn matrix(&self) -> Result<AncestralMatrix> {
        entries_to_matrix(&self.foreground, &self.entries, &self.foreground)
    }
}

fn entries_to_matrix(names: &[String], entries: &[Entry], order: &[String]) -> Result<AncestralMatrix> {
    let pos = |name: &str| {
        order
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Data(format!("unknown foreground variable {name:?}")))
    };
    if names.len() != order.len() {
        return Err(Error::Data(format!(
            "result has {} foreground variables, truth has {}",
            names.len(),
            order.len()
        )));
    }
    for n in names {
        pos(n)?;
    }
    let mut m = AncestralMatrix::new(order.len());
    for e in entries {
        let (a, b) = (pos(&e.row)?, pos(&e.col)?);
        if a == b {
            return Err(Error::Data(format!("entry relates {:?} to itself", e.row)));
        }
        m.refine(a, b, e.relation);
    }
    Ok(m)
}

/// Scores a saved discovery against `truth`, matching variables by name.
pub fn score_report(report: &DiscoveryReport, truth: &TieredGraph) -> Result<AccuracyReport> {
    let order: Vec<String> = truth.foreground().iter().map(|&v| truth.name(v).to_string()).collect();
    let m = entries_to_matrix(&report.foreground, &report.entries, &order)?;
    metric_accuracy(&m, truth)
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleEntry {
    pub row: String,
    pub col: String,
    pub relation: Relation,
    pub symbol: String,
    pub truth: Relation,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<Rule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adjustment_set: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub foreground: Vec<String>,
    pub entries: Vec<OracleEntry>,
    pub passes: usize,
    pub complete: bool,
    pub identifiable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violation: Option<(Condition, String, String)>,
}

impl OracleReport {
    pub fn new(g: &TieredGraph, result: &OracleResult) -> Result<OracleReport> {
        let fg = g.foreground();
        let name = |v: usize| g.name(v).to_string();
        let entries = result
            .matrix
            .pairs()
            .into_iter()
            .map(|(i, j)| {
                let relation = result.matrix.get(i, j);
                let prov = result.provenance.get(&(i, j));
                Ok(OracleEntry {
                    row: name(fg[i]),
                    col: name(fg[j]),
                    relation,
                    symbol: relation.symbol().into(),
                    truth: g.true_relation(fg[i], fg[j])?,
                    rule: prov.map(|p| p.rule),
                    witness: prov.and_then(|p| p.witness).map(name),
                    adjustment_set: prov
                        .and_then(|p| p.adjustment_set.as_ref())
                        .map(|a| a.iter().map(|&v| name(v)).collect()),
                })
            })
            .collect::<Result<_>>()?;
        let id = check_identifiability(g);
        Ok(OracleReport {
            foreground: fg.iter().map(|&v| name(v)).collect(),
            entries,
            passes: result.passes,
            complete: result.matrix.is_complete(),
            identifiable: id.identifiable,
            violation: id.violation.map(|(c, a, b)| (c, name(a), name(b))),
        })
    }
}
