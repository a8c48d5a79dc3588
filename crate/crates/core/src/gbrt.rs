//! Gradient boosting of regression trees with squared-error loss.
//!
//! Each stage fits a tree to the current residuals, scales it by the exact
//! line-search step `β` and adds it to the ensemble shrunk by the learning
//! rate `ν`:
//!
//! ```text
//! F_0 = mean(y)
//! F_m = F_{m-1} + ν · β_m · h_m(x)
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::InstanceSet;
use crate::real::Real;
use crate::tree::{fit_tree, RegressionTree, TreeError, N_FEATURES};

#[derive(Debug, Error, PartialEq)]
pub enum GbrtError {
    #[error("no training instances")]
    EmptyTraining,
    #[error("sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbrtConfig<T> {
    /// Number of boosting stages `M`.
    pub n_learners: usize,
    /// Shrinkage `ν` in (0, 1].
    pub learning_rate: T,
    /// Split budget `D` of every tree.
    pub max_splits: usize,
    pub min_leaf: usize,
}

impl<T: Real> Default for GbrtConfig<T> {
    fn default() -> Self {
        Self {
            n_learners: 8,
            learning_rate: T::lit(0.1),
            max_splits: 3,
            min_leaf: 5,
        }
    }
}

impl<T: Real> GbrtConfig<T> {
    pub fn validate(&self) -> Result<(), GbrtError> {
        if !(self.learning_rate > T::zero() && self.learning_rate <= T::one()) {
            return Err(GbrtError::InvalidConfig(format!(
                "learning rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        if self.min_leaf == 0 {
            return Err(GbrtError::InvalidConfig("min_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage<T> {
    pub beta: T,
    pub tree: RegressionTree<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbrtModel<T> {
    pub config: GbrtConfig<T>,
    pub f0: T,
    pub stages: Vec<Stage<T>>,
    /// Training MSE after each stage.
    pub training_loss_curve: Vec<T>,
}

/// `ν·β·h`, evaluated identically during training and prediction so staged
/// sums are reproducible bit for bit.
#[inline]
fn contribution<T: Real>(nu: T, beta: T, h: T) -> T {
    nu * beta * h
}

/// Exact minimiser of `Σ (r_i − β h_i)²`; zero for an all-zero direction.
pub fn line_search_beta<T: Real>(residuals: &[T], tree_preds: &[T]) -> Result<T, GbrtError> {
    if residuals.len() != tree_preds.len() {
        return Err(GbrtError::LengthMismatch(residuals.len(), tree_preds.len()));
    }
    let num: T = residuals.iter().zip(tree_preds).map(|(&r, &h)| r * h).sum();
    let den: T = tree_preds.iter().map(|&h| h * h).sum();
    if den == T::zero() {
        Ok(T::zero())
    } else {
        Ok(num / den)
    }
}

/// Mean with one correction pass, exact for constant input.
fn two_pass_mean<T: Real>(y: &[T]) -> T {
    let n = T::from_count(y.len());
    let rough = y.iter().copied().sum::<T>() / n;
    rough + y.iter().map(|&v| v - rough).sum::<T>() / n
}

fn mean_squared<T: Real>(y: &[T], f: &[T]) -> T {
    y.iter().zip(f).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>() / T::from_count(y.len())
}

/// Boosts on a raw feature matrix.
pub fn fit_gbrt_xy<T: Real>(
    x: &[[T; N_FEATURES]],
    y: &[T],
    config: &GbrtConfig<T>,
) -> Result<GbrtModel<T>, GbrtError> {
    config.validate()?;
    if x.len() != y.len() {
        return Err(GbrtError::LengthMismatch(x.len(), y.len()));
    }
    if y.is_empty() {
        return Err(GbrtError::EmptyTraining);
    }
    let n = y.len();
    let f0 = two_pass_mean(y);
    let mut fitted = vec![f0; n];
    let mut residuals = vec![T::zero(); n];
    let mut preds = vec![T::zero(); n];
    let mut stages = Vec::with_capacity(config.n_learners);
    let mut curve = Vec::with_capacity(config.n_learners);
    let nu = config.learning_rate;

    for _ in 0..config.n_learners {
        for i in 0..n {
            residuals[i] = y[i] - fitted[i];
        }
        let tree = fit_tree(x, &residuals, config.max_splits, config.min_leaf)?;
        for i in 0..n {
            preds[i] = tree.predict(&x[i]);
        }
        let beta = line_search_beta(&residuals, &preds)?;
        for i in 0..n {
            fitted[i] = fitted[i] + contribution(nu, beta, preds[i]);
        }
        curve.push(mean_squared(y, &fitted));
        stages.push(Stage { beta, tree });
    }
    Ok(GbrtModel {
        config: *config,
        f0,
        stages,
        training_loss_curve: curve,
    })
}

/// Boosts on the instances' `[v(t+τ), Δv(t), Δx(t)] → acc(t+τ)` pairs.
pub fn fit_gbrt<T: Real>(train: &InstanceSet<T>, config: &GbrtConfig<T>) -> Result<GbrtModel<T>, GbrtError> {
    fit_gbrt_xy(&train.features(), &train.responses(), config)
}

impl<T: Real> GbrtModel<T> {
    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn predict(&self, x: &[T; N_FEATURES]) -> T {
        let nu = self.config.learning_rate;
        self.stages
            .iter()
            .fold(self.f0, |f, s| f + contribution(nu, s.beta, s.tree.predict(x)))
    }

    pub fn predict_batch(&self, xs: &[[T; N_FEATURES]]) -> Vec<T> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    /// `F_0(x), F_1(x), …, F_M(x)`.
    pub fn staged_predict(&self, x: &[T; N_FEATURES]) -> Vec<T> {
        let nu = self.config.learning_rate;
        let mut out = Vec::with_capacity(self.stages.len() + 1);
        let mut f = self.f0;
        out.push(f);
        for s in &self.stages {
            f = f + contribution(nu, s.beta, s.tree.predict(x));
            out.push(f);
        }
        out
    }

    /// The first `m` stages as a standalone model.
    pub fn truncated(&self, m: usize) -> Self {
        let m = m.min(self.stages.len());
        Self {
            config: GbrtConfig {
                n_learners: m,
                ..self.config
            },
            f0: self.f0,
            stages: self.stages[..m].to_vec(),
            training_loss_curve: self.training_loss_curve[..m].to_vec(),
        }
    }
}

/// Same as [`GbrtModel::predict`].
pub fn predict<T: Real>(model: &GbrtModel<T>, x: &[T; N_FEATURES]) -> T {
    model.predict(x)
}

/// Same as [`GbrtModel::staged_predict`].
pub fn staged_predict<T: Real>(model: &GbrtModel<T>, x: &[T; N_FEATURES]) -> Vec<T> {
    model.staged_predict(x)
}
