//! Lasso path by covariance-update coordinate descent.
//!
//! Everything is computed from standardized second moments: columns are
//! centred and scaled by their training-row mean and population standard
//! deviation, so the training Gram matrix has a unit diagonal and the
//! validation error of any coefficient vector is a quadratic form. Several
//! regressions over subsets of the same columns share one [`Moments`].

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn default_n_lambda() -> usize {
    100
}
fn default_lambda_ratio() -> f64 {
    1e-3
}
fn default_max_sweeps() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LassoParams {
    #[serde(default = "default_n_lambda")]
    pub n_lambda: usize,
    /// Smallest λ as a fraction of λ_max.
    #[serde(default = "default_lambda_ratio")]
    pub lambda_ratio: f64,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
}

impl Default for LassoParams {
    fn default() -> Self {
        LassoParams {
            n_lambda: default_n_lambda(),
            lambda_ratio: default_lambda_ratio(),
            max_sweeps: default_max_sweeps(),
        }
    }
}

impl LassoParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_lambda == 0 || self.max_sweeps == 0 {
            return Err(Error::Config("n_lambda and max_sweeps must be positive".into()));
        }
        if !(self.lambda_ratio > 0.0 && self.lambda_ratio < 1.0) {
            return Err(Error::Config(format!("lambda_ratio must lie in (0, 1), got {}", self.lambda_ratio)));
        }
        Ok(())
    }
}

/// Standardized training and validation moments of a block of columns.
#[derive(Debug, Clone)]
pub struct Moments<F> {
    pub mean: Vec<F>,
    /// Population standard deviation on training rows; zero marks a
    /// constant column.
    pub scale: Vec<F>,
    /// `Xs'Xs / n_train` over training rows.
    pub gram: Array2<F>,
    /// `Xs'Xs / n_val` over validation rows, standardized with training
    /// statistics.
    pub val_gram: Array2<F>,
    pub n_train: usize,
    pub n_val: usize,
}

fn standardized_block<F: Scalar>(data: ArrayView2<F>, rows: &[usize], mean: &[F], scale: &[F]) -> Array2<F> {
    let q = data.ncols();
    let mut out = Array2::<F>::zeros((rows.len(), q));
    for (r, &row) in rows.iter().enumerate() {
        for c in 0..q {
            if scale[c] > F::zero() {
                out[[r, c]] = (data[[row, c]] - mean[c]) / scale[c];
            }
        }
    }
    out
}

impl<F: Scalar> Moments<F> {
    pub fn new(data: ArrayView2<F>, train: &[usize], val: &[usize]) -> Result<Self> {
        if train.len() < 2 {
            return Err(Error::Data(format!("need at least 2 training rows, got {}", train.len())));
        }
        if val.is_empty() {
            return Err(Error::Data("no validation rows".into()));
        }
        let q = data.ncols();
        let nt = F::of(train.len() as f64);
        let mut mean = vec![F::zero(); q];
        let mut scale = vec![F::zero(); q];
        for c in 0..q {
            let m = train.iter().map(|&r| data[[r, c]]).sum::<F>() / nt;
            let v = train.iter().map(|&r| (data[[r, c]] - m).powi(2)).sum::<F>() / nt;
            mean[c] = m;
            // relative threshold: constant up to rounding counts as constant
            let tiny = F::epsilon() * F::of(16.0) * (m.abs() + F::one());
            scale[c] = if v.sqrt() > tiny { v.sqrt() } else { F::zero() };
        }
        let xt = standardized_block(data, train, &mean, &scale);
        let xv = standardized_block(data, val, &mean, &scale);
        let gram = xt.t().dot(&xt).mapv(|v| v / nt);
        let nv = F::of(val.len() as f64);
        let val_gram = xv.t().dot(&xv).mapv(|v| v / nv);
        Ok(Moments {
            mean,
            scale,
            gram,
            val_gram,
            n_train: train.len(),
            n_val: val.len(),
        })
    }

    pub fn is_constant(&self, col: usize) -> bool {
        self.scale[col] == F::zero()
    }
}

/// Solution path over a log-spaced λ grid, coefficients on the
/// standardized scale.
#[derive(Debug, Clone)]
pub struct LassoPath<F> {
    /// Column ids (into the moments block) of the predictors.
    pub predictors: Vec<usize>,
    pub response: usize,
    pub lambdas: Vec<F>,
    pub coefs: Vec<Vec<F>>,
    pub val_mse: Vec<F>,
    /// Index of the λ with the smallest validation error (ties go to the
    /// larger λ).
    pub chosen: usize,
}

impl<F: Scalar> LassoPath<F> {
    pub fn lambda_max(&self) -> F {
        self.lambdas.first().copied().unwrap_or_else(F::zero)
    }

    /// Positions (into `predictors`) with nonzero coefficients at step `s`.
    pub fn support(&self, step: usize) -> Vec<usize> {
        self.coefs[step]
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != F::zero())
            .map(|(k, _)| k)
            .collect()
    }
}

fn soft_threshold<F: Scalar>(z: F, t: F) -> F {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        F::zero()
    }
}

struct Problem<'a, F> {
    g: &'a Array2<F>,
    pf: &'a [F],
    usable: &'a [bool],
    tol: F,
}

impl<F: Scalar> Problem<'_, F> {
    /// One cyclic pass over `coords`; returns the largest coefficient move.
    fn sweep(&self, coords: &[usize], lambda: F, beta: &mut [F], grad: &mut [F]) -> F {
        let mut max_delta = F::zero();
        for &k in coords {
            let gkk = self.g[[k, k]];
            let old = beta[k];
            let z = grad[k] + gkk * old;
            let new = soft_threshold(z, lambda * self.pf[k]) / gkk;
            if new != old {
                let delta = new - old;
                beta[k] = new;
                // g is symmetric: row k is column k, and contiguous
                for (gl, &gk) in grad.iter_mut().zip(self.g.row(k)) {
                    *gl -= gk * delta;
                }
                max_delta = max_delta.max(delta.abs() * gkk.sqrt());
            }
        }
        max_delta
    }

    fn solve(&self, lambda: F, beta: &mut [F], grad: &mut [F], max_sweeps: usize, only: Option<&[bool]>) {
        let all: Vec<usize> = (0..beta.len())
            .filter(|&k| self.usable[k] && only.is_none_or(|o| o[k]))
            .collect();
        let mut sweeps = 0;
        while sweeps < max_sweeps {
            let d = self.sweep(&all, lambda, beta, grad);
            sweeps += 1;
            if d < self.tol {
                break;
            }
            loop {
                let active: Vec<usize> = all.iter().copied().filter(|&k| beta[k] != F::zero()).collect();
                let d = self.sweep(&active, lambda, beta, grad);
                sweeps += 1;
                if d < self.tol || sweeps >= max_sweeps {
                    break;
                }
            }
        }
    }
}

/// Fits the path of `response` on `predictors` (column ids of `m`).
/// `penalty` gives per-predictor factors (0 = unpenalized); `None` means
/// all ones.
pub fn lasso_path_moments<F: Scalar>(
    m: &Moments<F>,
    predictors: &[usize],
    response: usize,
    penalty: Option<&[F]>,
    params: &LassoParams,
) -> LassoPath<F> {
    let p = predictors.len();
    let g = Array2::from_shape_fn((p, p), |(a, b)| m.gram[[predictors[a], predictors[b]]]);
    let v = Array2::from_shape_fn((p, p), |(a, b)| m.val_gram[[predictors[a], predictors[b]]]);
    let c: Vec<F> = predictors.iter().map(|&k| m.gram[[k, response]]).collect();
    let vc: Vec<F> = predictors.iter().map(|&k| m.val_gram[[k, response]]).collect();
    let vyy = m.val_gram[[response, response]];
    let ones = vec![F::one(); p];
    let pf = penalty.unwrap_or(&ones);
    let usable: Vec<bool> = predictors
        .iter()
        .map(|&k| !m.is_constant(k) && m.gram[[k, k]] > F::zero())
        .collect();
    let tol = F::of(1e-10).max(F::epsilon() * F::of(64.0));
    let problem = Problem {
        g: &g,
        pf,
        usable: &usable,
        tol,
    };

    let mut beta = vec![F::zero(); p];
    let mut grad = c.clone();
    let constant_response = m.is_constant(response);
    let unpenalized: Vec<bool> = pf.iter().map(|&w| w == F::zero()).collect();
    if !constant_response && unpenalized.iter().any(|&u| u) {
        problem.solve(F::zero(), &mut beta, &mut grad, params.max_sweeps, Some(&unpenalized));
    }
    let lambda_max = if constant_response {
        F::zero()
    } else {
        (0..p)
            .filter(|&k| usable[k] && pf[k] > F::zero())
            .map(|k| grad[k].abs() / pf[k])
            .fold(F::zero(), F::max)
    };

    let val_mse = |beta: &[F]| {
        let mut quad = F::zero();
        let mut lin = F::zero();
        for a in 0..p {
            if beta[a] == F::zero() {
                continue;
            }
            lin += beta[a] * vc[a];
            for b in 0..p {
                if beta[b] != F::zero() {
                    quad += beta[a] * v[[a, b]] * beta[b];
                }
            }
        }
        vyy - F::of(2.0) * lin + quad
    };

    let n = params.n_lambda;
    let mut lambdas = Vec::with_capacity(n);
    let mut coefs = Vec::with_capacity(n);
    let mut mses = Vec::with_capacity(n);
    let mut chosen = 0;
    for s in 0..n {
        let frac = if n > 1 { s as f64 / (n - 1) as f64 } else { 0.0 };
        let lambda = lambda_max * F::of(params.lambda_ratio.powf(frac));
        if lambda_max > F::zero() {
            problem.solve(lambda, &mut beta, &mut grad, params.max_sweeps, None);
        }
        let mse = val_mse(&beta);
        if s == 0 || mse < mses[chosen] {
            chosen = s;
        }
        lambdas.push(lambda);
        coefs.push(beta.clone());
        mses.push(mse);
    }
    LassoPath {
        predictors: predictors.to_vec(),
        response,
        lambdas,
        coefs,
        val_mse: mses,
        chosen,
    }
}

/// Fits the path for a plain predictor matrix and response over the given
/// training and validation rows. Predictor `k` is moments column `k`; the
/// response is the last column.
pub fn lasso_path<F: Scalar>(
    x: ArrayView2<F>,
    y: ArrayView1<F>,
    train: &[usize],
    val: &[usize],
    penalty: Option<&[F]>,
    params: &LassoParams,
) -> Result<(Moments<F>, LassoPath<F>)> {
    if x.nrows() != y.len() {
        return Err(Error::Data(format!("{} predictor rows but {} responses", x.nrows(), y.len())));
    }
    params.validate()?;
    let p = x.ncols();
    let mut block = Array2::<F>::zeros((x.nrows(), p + 1));
    block.slice_mut(ndarray::s![.., ..p]).assign(&x);
    block.column_mut(p).assign(&y);
    let m = Moments::new(block.view(), train, val)?;
    let predictors: Vec<usize> = (0..p).collect();
    let path = lasso_path_moments(&m, &predictors, p, penalty, params);
    Ok((m, path))
}

/// Joint selection: predictors (positions into `predictors`) with nonzero
/// coefficients at the validation-chosen λ.
pub fn joint_selection<F: Scalar>(
    m: &Moments<F>,
    predictors: &[usize],
    response: usize,
    params: &LassoParams,
) -> (Vec<usize>, f64) {
    let path = lasso_path_moments(m, predictors, response, None, params);
    (path.support(path.chosen), path.val_mse[path.chosen].as_f64())
}

/// Per-candidate selection: each predictor is kept if it survives a fit in
/// which it alone is penalized.
pub fn per_candidate_selection<F: Scalar>(
    m: &Moments<F>,
    predictors: &[usize],
    response: usize,
    params: &LassoParams,
) -> (Vec<usize>, f64) {
    let p = predictors.len();
    let mut kept = Vec::new();
    let mut score = f64::INFINITY;
    for k in 0..p {
        let mut pf = vec![F::zero(); p];
        pf[k] = F::one();
        let path = lasso_path_moments(m, predictors, response, Some(&pf), params);
        if path.coefs[path.chosen][k] != F::zero() {
            kept.push(k);
        }
        score = score.min(path.val_mse[path.chosen].as_f64());
    }
    (kept, if p == 0 { m.val_gram[[response, response]].as_f64() } else { score })
}
