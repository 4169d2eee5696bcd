use serde::Serialize;

use super::{Tier, TieredGraph};

/// The two graphical conditions under which the full causal order of the
/// foreground is recoverable from lazy queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Condition {
    /// No active backdoor path between a foreground pair given the
    /// background plus the pair's common foreground ancestors.
    Blanket,
    /// Each ordered pair `X_i ≺ X_j` has a neighbour `V` of `X_i` among
    /// `X_i`'s non-descendants that is separated from `X_j` given the other
    /// non-descendants of `X_i` (including `X_i`).
    Deactivator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IdentifiabilityReport {
    pub identifiable: bool,
    /// First violated condition with the offending pair (vertex ids, the
    /// ancestor first when ordered).
    pub violation: Option<(Condition, usize, usize)>,
}

/// Evaluates both identifiability conditions literally on `g`.
///
/// Pairs are visited in ascending `(j, i)` order over foreground positions;
/// condition (i) is checked for every pair before condition (ii).
pub fn check_identifiability(g: &TieredGraph) -> IdentifiabilityReport {
    let fg = g.foreground();
    let n = g.n_vertices();
    let mut pairs = Vec::new();
    for j in 0..fg.len() {
        for i in j + 1..fg.len() {
            let (a, b) = (fg[i], fg[j]);
            // orient so that a precedes b when the pair is ordered
            if g.is_ancestor(b, a) {
                pairs.push((b, a, true));
            } else {
                pairs.push((a, b, g.is_ancestor(a, b)));
            }
        }
    }

    for &(a, b, ordered) in &pairs {
        let mut cond: Vec<usize> = g.background().to_vec();
        cond.extend(
            fg.iter()
                .copied()
                .filter(|&k| k != a && k != b && g.is_ancestor(k, a) && g.is_ancestor(k, b)),
        );
        let blocked = if ordered {
            g.without_outgoing(a).independent(a, b, &cond)
        } else {
            g.independent(a, b, &cond)
        };
        if !blocked {
            return IdentifiabilityReport {
                identifiable: false,
                violation: Some((Condition::Blanket, a, b)),
            };
        }
    }

    for &(a, b, ordered) in &pairs {
        if !ordered {
            continue;
        }
        // observed non-descendants of a, including a itself
        let nondesc: Vec<usize> = (0..n)
            .filter(|&v| g.tier(v) != Tier::Latent && !g.is_ancestor(a, v))
            .collect();
        let witnessed = g
            .admg_neighbours(a)
            .into_iter()
            .filter(|v| nondesc.contains(v))
            .any(|v| {
                let rest: Vec<usize> = nondesc.iter().copied().filter(|&u| u != v).collect();
                g.independent(v, b, &rest)
            });
        if !witnessed {
            return IdentifiabilityReport {
                identifiable: false,
                violation: Some((Condition::Deactivator, a, b)),
            };
        }
    }

    IdentifiabilityReport {
        identifiable: true,
        violation: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instrument_makes_edge_identifiable() {
        let mut b = TieredGraph::builder();
        let z1 = b.background("Z1");
        let x1 = b.foreground("X1");
        let x2 = b.foreground("X2");
        b.edge(z1, x1).edge(x1, x2);
        let report = check_identifiability(&b.build().unwrap());
        assert!(report.identifiable, "{report:?}");
    }

    #[test]
    fn bare_edge_lacks_a_deactivator() {
        let mut b = TieredGraph::builder();
        let x1 = b.foreground("X1");
        let x2 = b.foreground("X2");
        b.edge(x1, x2);
        let report = check_identifiability(&b.build().unwrap());
        assert!(!report.identifiable);
        assert_eq!(report.violation, Some((Condition::Deactivator, x1, x2)));
    }

    #[test]
    fn hidden_confounding_breaks_the_blanket() {
        let mut b = TieredGraph::builder();
        let z1 = b.background("Z1");
        let x1 = b.foreground("X1");
        let x2 = b.foreground("X2");
        b.edge(z1, x1).edge(x1, x2).bidirected(x1, x2);
        let report = check_identifiability(&b.build().unwrap());
        assert_eq!(report.violation, Some((Condition::Blanket, x1, x2)));
    }
}
