//! Two-tier acyclic directed mixed graphs.
//!
//! A [`TieredGraph`] holds observed background (`Z`) and foreground (`X`)
//! vertices, optionally explicit latent vertices, directed edges and
//! bidirected edges. Bidirected edges and latent vertices are two spellings
//! of the same thing: `a <-> b` is `a <- U -> b` for a fresh parentless `U`.
//! Every graph keeps a latent-DAG form internally and all separation
//! queries run against it.

mod dsep;
mod identify;
pub mod io;
mod relation;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dsep::Dag;
pub use identify::{check_identifiability, Condition, IdentifiabilityReport};
pub use relation::{true_relation, AncestralMatrix, Refinement, Relation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Background,
    Foreground,
    Latent,
}

impl Tier {
    pub fn is_observed(self) -> bool {
        self != Tier::Latent
    }
}

/// Dense vertex index together with its tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexId {
    pub id: usize,
    pub tier: Tier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: usize,
    pub name: String,
    pub tier: Tier,
}

/// Which spelling of hidden confounding [`canonicalize`] should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    /// Every bidirected edge becomes a fresh latent vertex.
    Latent,
    /// Every latent vertex becomes a bidirected edge between its children.
    Bidirected,
}

/// Validated two-tier ADMG. Immutable once built.
#[derive(Debug, Clone)]
pub struct TieredGraph {
    vertices: Vec<Vertex>,
    directed: BTreeSet<(usize, usize)>,
    bidirected: BTreeSet<(usize, usize)>,
    dag: Dag,
    // reach[a][b]: directed path a -> ... -> b of length >= 1
    reach: Vec<Vec<bool>>,
    foreground: Vec<usize>,
    background: Vec<usize>,
}

impl PartialEq for TieredGraph {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices
            && self.directed == other.directed
            && self.bidirected == other.bidirected
    }
}

fn unordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl TieredGraph {
    /// Builds and validates a graph.
    ///
    /// Rejects: non-dense ids, dangling or self edges, directed cycles,
    /// foreground-to-background edges, latent vertices with parents or a
    /// child count other than two, and bidirected edges touching latents.
    pub fn new(
        vertices: Vec<Vertex>,
        directed: impl IntoIterator<Item = (usize, usize)>,
        bidirected: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let n = vertices.len();
        for (pos, v) in vertices.iter().enumerate() {
            if v.id != pos {
                return Err(Error::InvalidGraph(format!(
                    "vertex ids must be dense and ordered: position {pos} holds id {}",
                    v.id
                )));
            }
        }
        let directed: BTreeSet<(usize, usize)> = directed.into_iter().collect();
        let bidirected: BTreeSet<(usize, usize)> =
            bidirected.into_iter().map(|(a, b)| unordered(a, b)).collect();

        for &(a, b) in directed.iter().chain(bidirected.iter()) {
            if a >= n {
                return Err(Error::UnknownVertex(a));
            }
            if b >= n {
                return Err(Error::UnknownVertex(b));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self loop on vertex {a}")));
            }
        }
        for &(a, b) in &directed {
            let (ta, tb) = (vertices[a].tier, vertices[b].tier);
            if ta == Tier::Foreground && tb == Tier::Background {
                return Err(Error::InvalidGraph(format!(
                    "edge {} -> {} points from the foreground into the background",
                    vertices[a].name, vertices[b].name
                )));
            }
            if tb == Tier::Latent {
                return Err(Error::InvalidGraph(format!(
                    "latent vertex {} has a parent",
                    vertices[b].name
                )));
            }
        }
        for &(a, b) in &bidirected {
            if !vertices[a].tier.is_observed() || !vertices[b].tier.is_observed() {
                return Err(Error::InvalidGraph(format!(
                    "bidirected edge {a} <-> {b} touches a latent vertex"
                )));
            }
        }
        for v in vertices.iter().filter(|v| v.tier == Tier::Latent) {
            let children = directed.iter().filter(|&&(a, _)| a == v.id).count();
            if children != 2 {
                return Err(Error::InvalidGraph(format!(
                    "latent vertex {} has {children} children, expected exactly two",
                    v.name
                )));
            }
        }

        let dag = Dag::latent_form(n, &directed, &bidirected);
        let order = dag
            .topological_order()
            .ok_or_else(|| Error::InvalidGraph("directed part contains a cycle".into()))?;

        let mut reach = vec![vec![false; n]; n];
        for &v in order.iter().rev() {
            if v >= n {
                continue;
            }
            for &c in dag.children(v) {
                if c < n {
                    reach[v][c] = true;
                    let (row_v, row_c) = if v < c {
                        let (lo, hi) = reach.split_at_mut(c);
                        (&mut lo[v], &hi[0])
                    } else {
                        let (lo, hi) = reach.split_at_mut(v);
                        (&mut hi[0], &lo[c])
                    };
                    for (dst, &src) in row_v.iter_mut().zip(row_c.iter()) {
                        *dst |= src;
                    }
                }
            }
        }

        let foreground = vertices
            .iter()
            .filter(|v| v.tier == Tier::Foreground)
            .map(|v| v.id)
            .collect();
        let background = vertices
            .iter()
            .filter(|v| v.tier == Tier::Background)
            .map(|v| v.id)
            .collect();

        Ok(TieredGraph {
            vertices,
            directed,
            bidirected,
            dag,
            reach,
            foreground,
            background,
        })
    }

    pub fn builder() -> GraphBuilder {
        GraphBuilder::default()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, id: usize) -> Result<VertexId> {
        self.vertices
            .get(id)
            .map(|v| VertexId { id, tier: v.tier })
            .ok_or(Error::UnknownVertex(id))
    }

    pub fn tier(&self, id: usize) -> Tier {
        self.vertices[id].tier
    }

    pub fn name(&self, id: usize) -> &str {
        &self.vertices[id].name
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v.name == name)
    }

    pub fn directed_edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.directed
    }

    pub fn bidirected_edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.bidirected
    }

    /// Foreground vertex ids in id order. Positions in this slice index
    /// the rows and columns of an [`AncestralMatrix`].
    pub fn foreground(&self) -> &[usize] {
        &self.foreground
    }

    pub fn background(&self) -> &[usize] {
        &self.background
    }

    pub fn observed(&self) -> impl Iterator<Item = usize> + '_ {
        self.vertices
            .iter()
            .filter(|v| v.tier.is_observed())
            .map(|v| v.id)
    }

    /// Latent-DAG form used by separation queries.
    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    /// True iff there is a directed path `a -> ... -> b`.
    pub fn is_ancestor(&self, a: usize, b: usize) -> bool {
        self.reach[a][b]
    }

    /// Observed vertices adjacent to `v` in the bidirected form, i.e. via a
    /// directed edge in either direction or a shared latent parent.
    pub fn admg_neighbours(&self, v: usize) -> BTreeSet<usize> {
        let n = self.n_vertices();
        let mut out = BTreeSet::new();
        for &p in self.dag.parents(v) {
            if p < n && self.tier(p).is_observed() {
                out.insert(p);
            } else {
                out.extend(self.dag.children(p).iter().copied().filter(|&c| c != v));
            }
        }
        for &c in self.dag.children(v) {
            out.insert(c);
        }
        out
    }

    /// Copy of the graph with every directed edge leaving `v` removed.
    pub fn without_outgoing(&self, v: usize) -> TieredGraph {
        let directed: Vec<_> = self
            .directed
            .iter()
            .copied()
            .filter(|&(a, _)| a != v)
            .collect();
        TieredGraph::new(self.vertices.clone(), directed, self.bidirected.iter().copied())
            .expect("removing edges preserves validity")
    }
}

/// Rewrites hidden confounding into the requested [`Form`].
///
/// Latent form: each bidirected edge `a <-> b` becomes a latent `U_a_b`
/// appended after the existing vertices. Bidirected form: each latent
/// vertex is dropped and its two children are joined by a bidirected edge;
/// observed vertices are renumbered densely in their original order.
/// Separation answers over observed vertices are identical in both forms.
pub fn canonicalize(g: &TieredGraph, form: Form) -> Result<TieredGraph> {
    match form {
        Form::Latent => {
            let mut vertices = g.vertices.clone();
            let mut directed = g.directed.clone();
            for &(a, b) in &g.bidirected {
                let id = vertices.len();
                vertices.push(Vertex {
                    id,
                    name: format!("U_{}_{}", g.name(a), g.name(b)),
                    tier: Tier::Latent,
                });
                directed.insert((id, a));
                directed.insert((id, b));
            }
            TieredGraph::new(vertices, directed, std::iter::empty())
        }
        Form::Bidirected => {
            let mut remap = vec![usize::MAX; g.n_vertices()];
            let mut vertices = Vec::new();
            for v in g.vertices.iter().filter(|v| v.tier.is_observed()) {
                remap[v.id] = vertices.len();
                vertices.push(Vertex {
                    id: vertices.len(),
                    name: v.name.clone(),
                    tier: v.tier,
                });
            }
            let mut directed = BTreeSet::new();
            let mut bidirected: BTreeSet<(usize, usize)> = g
                .bidirected
                .iter()
                .map(|&(a, b)| unordered(remap[a], remap[b]))
                .collect();
            for v in g.vertices.iter().filter(|v| v.tier == Tier::Latent) {
                let kids: Vec<usize> = g.dag.children(v.id).to_vec();
                if kids.len() != 2 || !g.dag.parents(v.id).is_empty() {
                    return Err(Error::InvalidGraph(format!(
                        "latent vertex {} is not a parentless two-child confounder",
                        v.name
                    )));
                }
                bidirected.insert(unordered(remap[kids[0]], remap[kids[1]]));
            }
            for &(a, b) in &g.directed {
                if g.tier(a).is_observed() {
                    directed.insert((remap[a], remap[b]));
                }
            }
            TieredGraph::new(vertices, directed, bidirected)
        }
    }
}

/// Incremental construction helper; ids are handed out densely.
#[derive(Debug, Default, Clone)]
pub struct GraphBuilder {
    vertices: Vec<Vertex>,
    directed: Vec<(usize, usize)>,
    bidirected: Vec<(usize, usize)>,
}

impl GraphBuilder {
    pub fn vertex(&mut self, name: impl Into<String>, tier: Tier) -> usize {
        let id = self.vertices.len();
        self.vertices.push(Vertex {
            id,
            name: name.into(),
            tier,
        });
        id
    }

    pub fn background(&mut self, name: impl Into<String>) -> usize {
        self.vertex(name, Tier::Background)
    }

    pub fn foreground(&mut self, name: impl Into<String>) -> usize {
        self.vertex(name, Tier::Foreground)
    }

    pub fn latent(&mut self, name: impl Into<String>) -> usize {
        self.vertex(name, Tier::Latent)
    }

    pub fn edge(&mut self, from: usize, to: usize) -> &mut Self {
        self.directed.push((from, to));
        self
    }

    pub fn bidirected(&mut self, a: usize, b: usize) -> &mut Self {
        self.bidirected.push((a, b));
        self
    }

    pub fn build(&self) -> Result<TieredGraph> {
        TieredGraph::new(
            self.vertices.clone(),
            self.directed.iter().copied(),
            self.bidirected.iter().copied(),
        )
    }
}
