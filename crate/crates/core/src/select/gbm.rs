//! Least-squares gradient boosting with depth-limited regression trees and
//! validation early stopping. Trees are grown level by level from
//! per-feature presorted row orders, so each level costs `O(n·p)`.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn default_max_trees() -> usize {
    3500
}
fn default_patience() -> usize {
    10
}
fn default_max_depth() -> usize {
    3
}
fn default_learning_rate() -> f64 {
    0.1
}
fn default_subsample() -> f64 {
    1.0
}
fn default_min_samples_leaf() -> usize {
    20
}
fn default_min_rel_improvement() -> f64 {
    1e-3
}
fn default_split_penalty() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbmParams {
    #[serde(default = "default_max_trees")]
    pub max_trees: usize,
    /// Rounds without validation improvement before stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_max_depth")]
    pub max_depth: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    /// Row fraction drawn (without replacement) for each tree.
    #[serde(default = "default_subsample")]
    pub subsample: f64,
    #[serde(default = "default_min_samples_leaf")]
    pub min_samples_leaf: usize,
    /// A round counts as an improvement only if it lowers the best
    /// validation error by more than this fraction.
    #[serde(default = "default_min_rel_improvement")]
    pub min_rel_improvement: f64,
    /// A split must cut the node's squared error by more than
    /// `split_penalty · 2·ln(p·n_node)` node variances, about the largest
    /// cut pure noise achieves. 0 disables the check.
    #[serde(default = "default_split_penalty")]
    pub split_penalty: f64,
}

impl Default for GbmParams {
    fn default() -> Self {
        GbmParams {
            max_trees: default_max_trees(),
            patience: default_patience(),
            max_depth: default_max_depth(),
            learning_rate: default_learning_rate(),
            subsample: default_subsample(),
            min_samples_leaf: default_min_samples_leaf(),
            min_rel_improvement: default_min_rel_improvement(),
            split_penalty: default_split_penalty(),
        }
    }
}

impl GbmParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_trees == 0 || self.patience == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::Config("max_trees, patience, max_depth and min_samples_leaf must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!("learning_rate must lie in (0, 1], got {}", self.learning_rate)));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config(format!("subsample must lie in (0, 1], got {}", self.subsample)));
        }
        if !(self.min_rel_improvement >= 0.0 && self.split_penalty >= 0.0) {
            return Err(Error::Config("min_rel_improvement and split_penalty must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Node<F> {
    Leaf(F),
    Split {
        feature: usize,
        threshold: F,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct Tree<F> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Tree<F> {
    pub fn predict(&self, x: ArrayView2<F>, row: usize) -> F {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[[row, *feature]] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf(_) => None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct GbmFit<F> {
    pub init: F,
    pub trees: Vec<Tree<F>>,
    /// Number of leading trees kept by early stopping.
    pub best_iteration: usize,
    /// Training MSE before any tree and after each round.
    pub train_loss: Vec<F>,
    pub val_loss: Vec<F>,
}

impl<F: Scalar> GbmFit<F> {
    /// Columns split on by the kept trees, ascending.
    pub fn active(&self) -> Vec<usize> {
        let mut cols: Vec<usize> = self.trees[..self.best_iteration]
            .iter()
            .flat_map(|t| t.features())
            .collect();
        cols.sort_unstable();
        cols.dedup();
        cols
    }

    pub fn best_val_loss(&self) -> F {
        self.val_loss[self.best_iteration]
    }
}

struct Grower<'a, F> {
    x: ArrayView2<'a, F>,
    /// Per feature: training positions sorted by value.
    order: Vec<Vec<u32>>,
    train: &'a [usize],
    params: &'a GbmParams,
}

#[derive(Clone, Copy)]
struct Best<F> {
    gain: F,
    feature: usize,
    threshold: F,
    left_count: usize,
}

impl<'a, F: Scalar> Grower<'a, F> {
    fn new(x: ArrayView2<'a, F>, train: &'a [usize], params: &'a GbmParams) -> Self {
        let order = (0..x.ncols())
            .map(|f| {
                let mut idx: Vec<u32> = (0..train.len() as u32).collect();
                idx.sort_by(|&a, &b| {
                    x[[train[a as usize], f]]
                        .partial_cmp(&x[[train[b as usize], f]])
                        .unwrap_or(std::cmp::Ordering::Equal)
                });
                idx
            })
            .collect();
        Grower { x, order, train, params }
    }

    /// Grows one tree on `resid` over the positions flagged in `in_bag`.
    fn grow(&self, resid: &[F], in_bag: &[bool]) -> Tree<F> {
        const NONE: u32 = u32::MAX;
        let min_leaf = self.params.min_samples_leaf;
        let lr = F::of(self.params.learning_rate);
        let mut nodes: Vec<Node<F>> = vec![Node::Leaf(F::zero())];
        // position → open node id at the current level
        let mut node_of: Vec<u32> = in_bag.iter().map(|&b| if b { 0 } else { NONE }).collect();
        let mut open: Vec<usize> = vec![0];
        let mut sums: Vec<(F, usize)> = vec![(F::zero(), 0)];
        let mut squares: Vec<F> = vec![F::zero()];
        for (pos, &b) in in_bag.iter().enumerate() {
            if b {
                sums[0].0 += resid[pos];
                sums[0].1 += 1;
                squares[0] += resid[pos] * resid[pos];
            }
        }
        let n_features = F::of(self.order.len().max(1) as f64);
        let penalty = F::of(2.0 * self.params.split_penalty);

        for _depth in 0..self.params.max_depth {
            if open.is_empty() {
                break;
            }
            let mut best: Vec<Option<Best<F>>> = vec![None; open.len()];
            let mut left: Vec<(F, usize)> = vec![(F::zero(), 0); open.len()];
            let mut last: Vec<Option<F>> = vec![None; open.len()];
            let slot_lookup: Vec<u32> = {
                let mut v = vec![NONE; nodes.len()];
                for (s, &o) in open.iter().enumerate() {
                    v[o] = s as u32;
                }
                v
            };
            for (f, order) in self.order.iter().enumerate() {
                left.iter_mut().for_each(|l| *l = (F::zero(), 0));
                last.iter_mut().for_each(|l| *l = None);
                for &pos in order {
                    let pos = pos as usize;
                    let node = node_of[pos];
                    if node == NONE {
                        continue;
                    }
                    let s = slot_lookup[node as usize] as usize;
                    let value = self.x[[self.train[pos], f]];
                    if let Some(prev) = last[s] {
                        if value > prev {
                            let (total, count) = sums[open[s]];
                            let (ls, lc) = left[s];
                            let rc = count - lc;
                            if lc >= min_leaf && rc >= min_leaf {
                                let rs = total - ls;
                                let gain = ls * ls / F::of(lc as f64) + rs * rs / F::of(rc as f64)
                                    - total * total / F::of(count as f64);
                                if best[s].is_none_or(|b| gain > b.gain) {
                                    best[s] = Some(Best {
                                        gain,
                                        feature: f,
                                        threshold: prev + (value - prev) / F::of(2.0),
                                        left_count: lc,
                                    });
                                }
                            }
                        }
                    }
                    last[s] = Some(value);
                    left[s].0 += resid[pos];
                    left[s].1 += 1;
                }
            }

            let mut next_open = Vec::new();
            let mut remap: Vec<(u32, u32)> = vec![(NONE, NONE); nodes.len()];
            for (s, &node) in open.iter().enumerate() {
                let Some(b) = best[s] else { continue };
                let (total, count) = sums[node];
                let nf = F::of(count as f64);
                let scale = total * total / nf;
                if !(b.gain > F::epsilon() * F::of(64.0) * (scale + F::one())) {
                    continue;
                }
                let variance = (squares[node] - scale).max(F::zero()) / nf;
                if b.gain <= penalty * (n_features * nf).ln() * variance {
                    continue;
                }
                let l = nodes.len();
                nodes.push(Node::Leaf(F::zero()));
                nodes.push(Node::Leaf(F::zero()));
                sums.push((F::zero(), b.left_count));
                sums.push((F::zero(), count - b.left_count));
                squares.push(F::zero());
                squares.push(F::zero());
                nodes[node] = Node::Split {
                    feature: b.feature,
                    threshold: b.threshold,
                    left: l,
                    right: l + 1,
                };
                remap[node] = (l as u32, (l + 1) as u32);
                next_open.push(l);
                next_open.push(l + 1);
            }
            if next_open.is_empty() {
                break;
            }
            for (pos, node) in node_of.iter_mut().enumerate() {
                if *node == NONE {
                    continue;
                }
                let (l, r) = remap[*node as usize];
                if l == NONE {
                    *node = NONE;
                    continue;
                }
                let Node::Split { feature, threshold, .. } = &nodes[*node as usize] else {
                    unreachable!()
                };
                *node = if self.x[[self.train[pos], *feature]] <= *threshold { l } else { r };
                sums[*node as usize].0 += resid[pos];
                squares[*node as usize] += resid[pos] * resid[pos];
            }
            open = next_open;
        }

        for (id, node) in nodes.iter_mut().enumerate() {
            if let Node::Leaf(v) = node {
                let (s, c) = sums[id];
                *v = if c > 0 { lr * s / F::of(c as f64) } else { F::zero() };
            }
        }
        Tree { nodes }
    }
}

/// Boosts on `train`, early-stopping on `val`.
pub fn gbm_fit<F: Scalar>(
    x: ArrayView2<F>,
    y: ArrayView1<F>,
    train: &[usize],
    val: &[usize],
    params: &GbmParams,
    seed: u64,
) -> Result<GbmFit<F>> {
    params.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::Data(format!("{} predictor rows but {} responses", x.nrows(), y.len())));
    }
    if train.len() < 2 {
        return Err(Error::Data(format!("need at least 2 training rows, got {}", train.len())));
    }
    if val.is_empty() {
        return Err(Error::Data("no validation rows".into()));
    }
    let nt = train.len();
    let init = train.iter().map(|&r| y[r]).sum::<F>() / F::of(nt as f64);
    let mut pred_t = vec![init; nt];
    let mut pred_v = vec![init; val.len()];
    let mse = |pred: &[F], rows: &[usize]| {
        pred.iter().zip(rows).map(|(p, &r)| (y[r] - *p).powi(2)).sum::<F>() / F::of(rows.len() as f64)
    };
    let grower = Grower::new(x, train, params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bag_size = ((params.subsample * nt as f64).round() as usize).clamp(1, nt);

    let mut fit = GbmFit {
        init,
        trees: Vec::new(),
        best_iteration: 0,
        train_loss: vec![mse(&pred_t, train)],
        val_loss: vec![mse(&pred_v, val)],
    };
    let mut best = fit.val_loss[0];
    let mut stale = 0;
    let factor = F::one() - F::of(params.min_rel_improvement);
    let mut resid = vec![F::zero(); nt];
    let mut in_bag = vec![true; nt];
    for round in 1..=params.max_trees {
        for (k, r) in resid.iter_mut().enumerate() {
            *r = y[train[k]] - pred_t[k];
        }
        if bag_size < nt {
            in_bag.iter_mut().for_each(|b| *b = false);
            for k in sample(&mut rng, nt, bag_size) {
                in_bag[k] = true;
            }
        }
        let tree = grower.grow(&resid, &in_bag);
        for (k, &r) in train.iter().enumerate() {
            pred_t[k] += tree.predict(x, r);
        }
        for (k, &r) in val.iter().enumerate() {
            pred_v[k] += tree.predict(x, r);
        }
        fit.trees.push(tree);
        fit.train_loss.push(mse(&pred_t, train));
        let v = mse(&pred_v, val);
        fit.val_loss.push(v);
        if v < best * factor {
            best = v;
            fit.best_iteration = round;
            stale = 0;
        } else {
            stale += 1;
            if stale >= params.patience {
                break;
            }
        }
    }
    Ok(fit)
}
