//! Regression-based selectors standing in for conditional-independence
//! tests: a predictor is "dependent" if the fitted model keeps it.

pub mod gbm;
pub mod lasso;

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use gbm::{gbm_fit, GbmFit, GbmParams};
pub use lasso::{lasso_path, LassoParams, LassoPath, Moments};

/// Selected predictor columns plus the validation error of the fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveSet {
    /// Sorted, deduplicated column indices.
    pub selected: Vec<usize>,
    pub fit_score: f64,
}

impl ActiveSet {
    pub fn new(mut selected: Vec<usize>, fit_score: f64) -> Self {
        selected.sort_unstable();
        selected.dedup();
        ActiveSet { selected, fit_score }
    }

    pub fn contains(&self, col: usize) -> bool {
        self.selected.binary_search(&col).is_ok()
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    /// Maps local predictor positions to ids through `columns`.
    pub fn relabel(&self, columns: &[usize]) -> ActiveSet {
        ActiveSet::new(self.selected.iter().map(|&k| columns[k]).collect(), self.fit_score)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LassoPath,
    GradientBoost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// One fit over the whole conditioning set.
    #[default]
    Joint,
    /// One fit per candidate, penalizing only that candidate (lasso only).
    PerCandidate,
}

fn default_train_fraction() -> f64 {
    0.8
}
fn default_method() -> Method {
    Method::LassoPath
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectorSpec {
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub lasso: LassoParams,
    #[serde(default)]
    pub gbm: GbmParams,
    #[serde(default)]
    pub mode: SelectionMode,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SelectorSpec {
    fn default() -> Self {
        SelectorSpec {
            method: default_method(),
            train_fraction: default_train_fraction(),
            lasso: LassoParams::default(),
            gbm: GbmParams::default(),
            mode: SelectionMode::Joint,
            seed: 0,
        }
    }
}

impl SelectorSpec {
    pub fn gbm() -> Self {
        SelectorSpec {
            method: Method::GradientBoost,
            ..SelectorSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.method == Method::GradientBoost && self.mode == SelectionMode::PerCandidate {
            return Err(Error::Config("per_candidate mode is only available with lasso_path".into()));
        }
        self.lasso.validate()?;
        self.gbm.validate()
    }
}

/// Shuffles `rows` with `seed` and cuts off the leading training share.
pub fn split_rows(rows: &[usize], train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut shuffled = rows.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((train_fraction * rows.len() as f64).round() as usize).min(rows.len());
    if n_train < 2 {
        return Err(Error::Data(format!("need at least 2 training rows, got {n_train}")));
    }
    if n_train == rows.len() {
        return Err(Error::Data("no validation rows left after the split".into()));
    }
    let val = shuffled.split_off(n_train);
    Ok((shuffled, val))
}

fn with_response<F: Scalar>(x: ArrayView2<F>, y: ArrayView1<F>) -> Result<ndarray::Array2<F>> {
    if x.nrows() != y.len() {
        return Err(Error::Data(format!("{} predictor rows but {} responses", x.nrows(), y.len())));
    }
    let p = x.ncols();
    let mut block = ndarray::Array2::<F>::zeros((x.nrows(), p + 1));
    block.slice_mut(ndarray::s![.., ..p]).assign(&x);
    block.column_mut(p).assign(&y);
    Ok(block)
}

/// Lasso selection over `rows`, with λ chosen on a held-out split.
pub fn lasso_active_set<F: Scalar>(x: ArrayView2<F>, y: ArrayView1<F>, rows: &[usize], spec: &SelectorSpec) -> Result<ActiveSet> {
    spec.validate()?;
    let (train, val) = split_rows(rows, spec.train_fraction, spec.seed)?;
    let block = with_response(x, y)?;
    let m = Moments::new(block.view(), &train, &val)?;
    let p = x.ncols();
    let predictors: Vec<usize> = (0..p).collect();
    let (sel, score) = match spec.mode {
        SelectionMode::Joint => lasso::joint_selection(&m, &predictors, p, &spec.lasso),
        SelectionMode::PerCandidate => lasso::per_candidate_selection(&m, &predictors, p, &spec.lasso),
    };
    Ok(ActiveSet::new(sel, score))
}

/// Boosting selection over `rows`: every column used by a kept tree.
pub fn gbm_active_set<F: Scalar>(x: ArrayView2<F>, y: ArrayView1<F>, rows: &[usize], spec: &SelectorSpec) -> Result<ActiveSet> {
    spec.validate()?;
    let (train, val) = split_rows(rows, spec.train_fraction, spec.seed)?;
    let fit = gbm_fit(x, y, &train, &val, &spec.gbm, spec.seed)?;
    Ok(ActiveSet::new(fit.active(), fit.best_val_loss().as_f64()))
}

/// Dispatches on `spec.method`.
pub fn select<F: Scalar>(spec: &SelectorSpec, x: ArrayView2<F>, y: ArrayView1<F>, rows: &[usize]) -> Result<ActiveSet> {
    match spec.method {
        Method::LassoPath => lasso_active_set(x, y, rows, spec),
        Method::GradientBoost => gbm_active_set(x, y, rows, spec),
    }
}
