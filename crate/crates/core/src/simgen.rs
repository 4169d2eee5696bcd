//! Simulation design: random two-tier graphs, an AR(1)-Toeplitz Gaussian
//! background, optional nonlinear background transforms, Rademacher edge
//! weights and SNR-calibrated Gaussian noise.
//!
//! `sparsity` is the probability that a potential edge is absent, so the
//! default `0.5` gives presence probability one half and `0.75` gives a
//! quarter.
//!
//! The truth graph records background-to-foreground and foreground edges
//! only. Dependence among background columns comes from the correlated
//! draw and is not represented as edges.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Tier, TieredGraph, Vertex};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `X1 -> X2` is forced; other edges random.
    Edge,
    /// No foreground edges and no hidden confounding.
    Separable,
    /// As `Separable`, then half the shared background parents of `X1`
    /// and `X2` are hidden.
    LatentConfounded,
    /// Every edge random.
    FreeMultivariate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Quadratic,
    SqrtAbs,
    Softplus,
    Relu,
}

impl Transform {
    pub const ALL: [Transform; 4] = [
        Transform::Quadratic,
        Transform::SqrtAbs,
        Transform::Softplus,
        Transform::Relu,
    ];

    pub fn apply<F: Scalar>(self, z: F) -> F {
        match self {
            Transform::Quadratic => z * z,
            Transform::SqrtAbs => z.abs().sqrt(),
            // log(1 + e^z) without overflow for large z
            Transform::Softplus => {
                if z > F::zero() {
                    z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p()
                }
            }
            Transform::Relu => z.max(F::zero()),
        }
    }
}

/// Applies `kind` elementwise in place.
pub fn apply_transform<F: Scalar>(values: &mut [F], kind: Transform) {
    for v in values.iter_mut() {
        *v = kind.apply(*v);
    }
}

fn default_sparsity() -> f64 {
    0.5
}
fn default_rho() -> f64 {
    0.25
}
fn default_snr() -> f64 {
    2.0
}
fn default_regime() -> Regime {
    Regime::FreeMultivariate
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub n: usize,
    pub d_z: usize,
    pub d_x: usize,
    /// Probability that a potential edge is absent.
    #[serde(default = "default_sparsity")]
    pub sparsity: f64,
    /// Separate absence probability for foreground-to-foreground edges;
    /// falls back to `sparsity`.
    #[serde(default)]
    pub xx_sparsity: Option<f64>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_snr")]
    pub snr: f64,
    #[serde(default)]
    pub nonlinear: bool,
    #[serde(default = "default_regime")]
    pub regime: Regime,
    #[serde(default)]
    pub seed: u64,
}

impl SimSpec {
    pub fn new(n: usize, d_z: usize, d_x: usize) -> Self {
        SimSpec {
            n,
            d_z,
            d_x,
            sparsity: default_sparsity(),
            xx_sparsity: None,
            rho: default_rho(),
            snr: default_snr(),
            nonlinear: false,
            regime: default_regime(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d_z == 0 || self.d_x == 0 {
            return Err(Error::Config("n, d_z and d_x must be at least 1".into()));
        }
        for (name, p) in [("sparsity", Some(self.sparsity)), ("xx_sparsity", self.xx_sparsity)] {
            if let Some(p) = p {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
                }
            }
        }
        if !(self.snr > 0.0) {
            return Err(Error::Config(format!("snr must be positive, got {}", self.snr)));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in (-1, 1), got {}", self.rho)));
        }
        if self.regime != Regime::FreeMultivariate && self.d_x < 2 {
            return Err(Error::Config("bivariate regimes need d_x >= 2".into()));
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Column metadata in data-file order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub tier: Tier,
}

#[derive(Debug, Clone)]
pub struct Dataset<F> {
    /// `n × (observed d_z + d_x)`, background columns first.
    pub values: Array2<F>,
    pub columns: Vec<Column>,
    pub truth: TieredGraph,
    /// Edge weights keyed by truth vertex ids `(parent, child)`.
    pub weights: BTreeMap<(usize, usize), F>,
    /// Background transforms keyed by truth vertex id (nonlinear mode).
    pub transforms: BTreeMap<usize, Transform>,
    /// Noise variance used for each foreground equation.
    pub noise_variance: Vec<F>,
}

struct Layout {
    graph: TieredGraph,
    // background index (0..d_z) of each truth vertex, if background
    z_index: Vec<Option<usize>>,
    // background indices hidden from the data
    hidden: Vec<usize>,
    // every parent of each foreground (by position), as source ids:
    // Ok(truth vertex id) or Err(hidden background index)
    fg_parents: Vec<Vec<Source>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Source {
    Background(usize),
    Foreground(usize),
}

fn layout(spec: &SimSpec, rng: &mut ChaCha8Rng) -> Layout {
    let (d_z, d_x) = (spec.d_z, spec.d_x);
    let p_zx = 1.0 - spec.sparsity;
    let p_xx = 1.0 - spec.xx_sparsity.unwrap_or(spec.sparsity);

    let mut zx = vec![vec![false; d_x]; d_z];
    for row in zx.iter_mut() {
        for cell in row.iter_mut() {
            *cell = rng.random::<f64>() < p_zx;
        }
    }
    let mut xx = vec![vec![false; d_x]; d_x];
    for i in 0..d_x {
        for j in i + 1..d_x {
            xx[i][j] = rng.random::<f64>() < p_xx;
        }
    }
    match spec.regime {
        Regime::Edge => xx[0][1] = true,
        Regime::Separable | Regime::LatentConfounded => {
            xx.iter_mut().for_each(|r| r.iter_mut().for_each(|c| *c = false))
        }
        Regime::FreeMultivariate => {}
    }

    let mut hidden = Vec::new();
    if spec.regime == Regime::LatentConfounded {
        let mut shared: Vec<usize> = (0..d_z).filter(|&k| zx[k][0] && zx[k][1]).collect();
        if shared.is_empty() {
            let k = rng.random_range(0..d_z);
            zx[k][0] = true;
            zx[k][1] = true;
            shared.push(k);
        }
        shared.shuffle(rng);
        hidden = shared[..shared.len().div_ceil(2)].to_vec();
        hidden.sort_unstable();
    }

    let mut vertices = Vec::new();
    let mut z_index = Vec::new();
    let mut z_vertex = vec![None; d_z];
    for (k, slot) in z_vertex.iter_mut().enumerate() {
        if hidden.contains(&k) {
            continue;
        }
        *slot = Some(vertices.len());
        z_index.push(Some(k));
        vertices.push(Vertex {
            id: vertices.len(),
            name: format!("Z{}", k + 1),
            tier: Tier::Background,
        });
    }
    let x_vertex: Vec<usize> = (0..d_x)
        .map(|i| {
            let id = vertices.len();
            z_index.push(None);
            vertices.push(Vertex {
                id,
                name: format!("X{}", i + 1),
                tier: Tier::Foreground,
            });
            id
        })
        .collect();

    let mut directed = Vec::new();
    let mut bidirected = Vec::new();
    let mut fg_parents = vec![Vec::new(); d_x];
    for k in 0..d_z {
        let children: Vec<usize> = (0..d_x).filter(|&i| zx[k][i]).collect();
        for &i in &children {
            fg_parents[i].push(Source::Background(k));
            if let Some(v) = z_vertex[k] {
                directed.push((v, x_vertex[i]));
            }
        }
        if z_vertex[k].is_none() {
            for (a, &ca) in children.iter().enumerate() {
                for &cb in &children[a + 1..] {
                    bidirected.push((x_vertex[ca], x_vertex[cb]));
                }
            }
        }
    }
    for i in 0..d_x {
        for j in i + 1..d_x {
            if xx[i][j] {
                directed.push((x_vertex[i], x_vertex[j]));
                fg_parents[j].push(Source::Foreground(i));
            }
        }
    }
    let graph = TieredGraph::new(vertices, directed, bidirected).expect("generated graph is valid");
    Layout {
        graph,
        z_index,
        hidden,
        fg_parents,
    }
}

/// Draws the truth graph for `spec` (identical to the graph of
/// [`gen_dataset`] with the same spec).
pub fn gen_graph(spec: &SimSpec) -> TieredGraph {
    layout(spec, &mut spec.rng(0)).graph
}

/// Draws a dataset. Same spec and seed give bitwise identical output.
pub fn gen_dataset<F: Scalar>(spec: &SimSpec) -> Result<Dataset<F>> {
    gen_dataset_draw(spec, 0)
}

/// Draw number `draw` from the structural model of `spec`: graph, weights
/// and transforms depend on the seed alone, the samples also on `draw`.
/// Draw 0 is [`gen_dataset`].
pub fn gen_dataset_draw<F: Scalar>(spec: &SimSpec, draw: u64) -> Result<Dataset<F>> {
    spec.validate()?;
    let lay = layout(spec, &mut spec.rng(0));
    let (n, d_z, d_x) = (spec.n, spec.d_z, spec.d_x);

    let mut model_rng = spec.rng(1);
    let mut transforms_by_z = BTreeMap::new();
    if spec.nonlinear {
        let mut order: Vec<usize> = (0..d_z).collect();
        order.shuffle(&mut model_rng);
        let count = (0.8 * d_z as f64).round() as usize;
        let mut chosen: Vec<usize> = order[..count].to_vec();
        chosen.sort_unstable();
        for k in chosen {
            transforms_by_z.insert(k, Transform::ALL[model_rng.random_range(0..4)]);
        }
    }
    let weights_src: Vec<Vec<(Source, f64)>> = lay
        .fg_parents
        .iter()
        .map(|ps| {
            ps.iter()
                .map(|&src| (src, if model_rng.random::<bool>() { 1.0 } else { -1.0 }))
                .collect()
        })
        .collect();

    let mut rng = spec.rng(2 + draw);
    // AR(1) recursion gives covariance (1/d_z) * rho^|a-b| exactly
    let scale = (1.0 / d_z as f64).sqrt();
    let innov = scale * (1.0 - spec.rho * spec.rho).sqrt();
    let mut z = Array2::<f64>::zeros((n, d_z));
    for r in 0..n {
        let mut prev = 0.0;
        for k in 0..d_z {
            let e: f64 = StandardNormal.sample(&mut rng);
            prev = if k == 0 { scale * e } else { spec.rho * prev + innov * e };
            z[[r, k]] = prev;
        }
    }
    let mut ztilde = z.clone();
    for (&k, &t) in &transforms_by_z {
        ztilde.column_mut(k).mapv_inplace(|v| t.apply(v));
    }

    let mut x = Array2::<f64>::zeros((n, d_x));
    let mut noise_variance = Vec::with_capacity(d_x);
    for i in 0..d_x {
        let mut signal = vec![0.0; n];
        for &(src, beta) in &weights_src[i] {
            for (r, s) in signal.iter_mut().enumerate() {
                *s += beta
                    * match src {
                        Source::Background(k) => ztilde[[r, k]],
                        Source::Foreground(p) => x[[r, p]],
                    };
            }
        }
        let mean = signal.iter().sum::<f64>() / n as f64;
        let var = signal.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64;
        let nv = if var > 0.0 { var / spec.snr } else { 1.0 };
        noise_variance.push(F::of(nv));
        let sd = nv.sqrt();
        for (r, s) in signal.iter().enumerate() {
            let e: f64 = StandardNormal.sample(&mut rng);
            x[[r, i]] = s + sd * e;
        }
    }

    let observed_z: Vec<usize> = (0..d_z).filter(|k| !lay.hidden.contains(k)).collect();
    let mut values = Array2::<F>::zeros((n, observed_z.len() + d_x));
    for r in 0..n {
        for (c, &k) in observed_z.iter().enumerate() {
            values[[r, c]] = F::of(z[[r, k]]);
        }
        for i in 0..d_x {
            values[[r, observed_z.len() + i]] = F::of(x[[r, i]]);
        }
    }

    let g = &lay.graph;
    let z_vertex = |k: usize| lay.z_index.iter().position(|&zi| zi == Some(k));
    let x_vertex = |i: usize| g.foreground()[i];
    let mut weights = BTreeMap::new();
    for (i, ws) in weights_src.iter().enumerate() {
        for &(src, beta) in ws {
            let parent = match src {
                Source::Background(k) => match z_vertex(k) {
                    Some(v) => v,
                    None => continue,
                },
                Source::Foreground(p) => x_vertex(p),
            };
            weights.insert((parent, x_vertex(i)), F::of(beta));
        }
    }
    let transforms = transforms_by_z
        .into_iter()
        .filter_map(|(k, t)| z_vertex(k).map(|v| (v, t)))
        .collect();
    let columns = g
        .vertices()
        .iter()
        .filter(|v| v.tier.is_observed())
        .map(|v| Column {
            name: v.name.clone(),
            tier: v.tier,
        })
        .collect();

    Ok(Dataset {
        values,
        columns,
        truth: lay.graph,
        weights,
        transforms,
        noise_variance,
    })
}

/// Parameters for [`random_admg`].
#[derive(Debug, Clone, Copy)]
pub struct AdmgSpec {
    pub d_z: usize,
    pub d_x: usize,
    /// Presence probability of each background-to-background edge.
    pub p_zz: f64,
    /// Presence probability of each background-to-foreground edge.
    pub p_zx: f64,
    /// Presence probability of each foreground edge `X_a -> X_b`, `a < b`.
    pub p_xx: f64,
    /// Presence probability of a bidirected edge between any two observed
    /// vertices.
    pub p_bidirected: f64,
}

/// Random two-tier ADMG for property sweeps.
pub fn random_admg<R: Rng>(rng: &mut R, spec: &AdmgSpec) -> TieredGraph {
    let mut b = TieredGraph::builder();
    let zs: Vec<usize> = (0..spec.d_z).map(|k| b.background(format!("Z{}", k + 1))).collect();
    let xs: Vec<usize> = (0..spec.d_x).map(|k| b.foreground(format!("X{}", k + 1))).collect();
    for a in 0..zs.len() {
        for c in a + 1..zs.len() {
            if rng.random::<f64>() < spec.p_zz {
                b.edge(zs[a], zs[c]);
            }
        }
    }
    for &z in &zs {
        for &x in &xs {
            if rng.random::<f64>() < spec.p_zx {
                b.edge(z, x);
            }
        }
    }
    for a in 0..xs.len() {
        for c in a + 1..xs.len() {
            if rng.random::<f64>() < spec.p_xx {
                b.edge(xs[a], xs[c]);
            }
        }
    }
    let all: Vec<usize> = zs.iter().chain(xs.iter()).copied().collect();
    for a in 0..all.len() {
        for c in a + 1..all.len() {
            if rng.random::<f64>() < spec.p_bidirected {
                b.bidirected(all[a], all[c]);
            }
        }
    }
    b.build().expect("random ADMG respects tier order")
}
