use std::collections::{BTreeSet, VecDeque};

use super::{Tier, TieredGraph};
use crate::error::{Error, Result};

/// Plain DAG adjacency, including latent vertices. Vertices `0..observed`
/// mirror the owning graph; any further vertices are fresh latents standing
/// in for bidirected edges.
#[derive(Debug, Clone)]
pub struct Dag {
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl Dag {
    pub(super) fn latent_form(
        n: usize,
        directed: &BTreeSet<(usize, usize)>,
        bidirected: &BTreeSet<(usize, usize)>,
    ) -> Dag {
        let total = n + bidirected.len();
        let mut parents = vec![Vec::new(); total];
        let mut children = vec![Vec::new(); total];
        for &(a, b) in directed {
            children[a].push(b);
            parents[b].push(a);
        }
        for (k, &(a, b)) in bidirected.iter().enumerate() {
            let u = n + k;
            children[u].push(a);
            children[u].push(b);
            parents[a].push(u);
            parents[b].push(u);
        }
        Dag { parents, children }
    }

    /// Builds a DAG directly from an edge list (no tiers). Used for
    /// exhaustive separation checks on unlabelled graphs.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Dag {
        let set: BTreeSet<_> = edges.iter().copied().collect();
        Dag::latent_form(n, &set, &BTreeSet::new())
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub(super) fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.len();
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Vertices d-connected to some source given `given` (a membership
    /// mask). Reachability traversal over (vertex, direction) states; linear
    /// in the size of the graph.
    pub fn reachable(&self, sources: &[usize], given: &[bool]) -> Vec<bool> {
        let n = self.len();
        // ancestors of the conditioning set, inclusive
        let mut anc = vec![false; n];
        let mut stack: Vec<usize> = (0..n).filter(|&v| given[v]).collect();
        while let Some(v) = stack.pop() {
            if anc[v] {
                continue;
            }
            anc[v] = true;
            stack.extend(self.parents[v].iter().copied().filter(|&p| !anc[p]));
        }

        // visited[2v] = arrived from a child (moving up), [2v+1] = from a parent
        let mut visited = vec![false; 2 * n];
        let mut reached = vec![false; n];
        let mut queue: Vec<(usize, bool)> = sources.iter().map(|&s| (s, true)).collect();
        while let Some((v, up)) = queue.pop() {
            let slot = 2 * v + usize::from(!up);
            if visited[slot] {
                continue;
            }
            visited[slot] = true;
            if !given[v] {
                reached[v] = true;
            }
            if up {
                if !given[v] {
                    queue.extend(self.parents[v].iter().map(|&p| (p, true)));
                    queue.extend(self.children[v].iter().map(|&c| (c, false)));
                }
            } else {
                if !given[v] {
                    queue.extend(self.children[v].iter().map(|&c| (c, false)));
                }
                if anc[v] {
                    queue.extend(self.parents[v].iter().map(|&p| (p, true)));
                }
            }
        }
        reached
    }

    /// `a ⫫ b | c` for vertex sets given as slices. No validation.
    pub fn separated(&self, a: &[usize], b: &[usize], c: &[usize]) -> bool {
        let mut given = vec![false; self.len()];
        for &v in c {
            given[v] = true;
        }
        let reached = self.reachable(a, &given);
        !b.iter().any(|&v| reached[v])
    }
}

impl TieredGraph {
    /// d-separation of observed vertex sets `a` and `b` given `c`,
    /// evaluated on the latent-DAG form.
    pub fn d_separated(&self, a: &[usize], b: &[usize], c: &[usize]) -> Result<bool> {
        let n = self.n_vertices();
        let mut owner = vec![0u8; n];
        for (tag, set) in [(1u8, a), (2, b), (3, c)] {
            for &v in set {
                if v >= n {
                    return Err(Error::UnknownVertex(v));
                }
                if self.tier(v) == Tier::Latent {
                    return Err(Error::LatentQuery(v));
                }
                if owner[v] != 0 && owner[v] != tag {
                    return Err(Error::OverlappingSets(v));
                }
                owner[v] = tag;
            }
        }
        Ok(self.separated_unchecked(a, b, c))
    }

    /// [`TieredGraph::d_separated`] without input validation, for callers
    /// that construct their query sets from the graph itself.
    pub fn separated_unchecked(&self, a: &[usize], b: &[usize], c: &[usize]) -> bool {
        self.dag().separated(a, b, c)
    }

    /// Single-vertex convenience form of [`TieredGraph::separated_unchecked`].
    pub fn independent(&self, a: usize, b: usize, c: &[usize]) -> bool {
        self.separated_unchecked(&[a], &[b], c)
    }
}
