//! Model assessment: MSE, contiguous k-fold cross-validation, the `(ν, M)`
//! grid, depth and reaction-time sweeps and the held-out comparison of the
//! two models.
//!
//! Independent fits (grid rows × folds, sweep rows × folds) run on the
//! current rayon pool. Every job writes to its own slot and results are
//! reduced in a fixed order, so reports do not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{build_instances, contiguous_folds, split_train_test, DatasetError, InstanceSet, ReactionTime};
use crate::gbrt::{fit_gbrt, GbrtConfig, GbrtError};
use crate::ghr::{calibrate_ghr_with, predict_set, GhrBounds, GhrError, GhrParameters};
use crate::nelder_mead::NelderMeadOptions;
use crate::real::Real;
use crate::trajectory_io::FollowerLeaderSeries;

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("cannot score an empty sequence")]
    Empty,
    #[error("axis `{0}` is empty")]
    EmptyAxis(&'static str),
    #[error("M values must be strictly increasing")]
    UnsortedM,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Gbrt(#[from] GbrtError),
    #[error(transparent)]
    Ghr(#[from] GhrError),
}

/// The learning rates `0.1, 0.3, 0.5, 0.8, 1`.
pub fn default_nu_values<T: Real>() -> Vec<T> {
    [0.1, 0.3, 0.5, 0.8, 1.0].iter().map(|&v| T::lit(v)).collect()
}

/// `1..=9`, `10..=90` by 10 and `100..=1000` by 100.
pub fn default_m_values() -> Vec<usize> {
    (1..10)
        .chain((10..100).step_by(10))
        .chain((100..=1000).step_by(100))
        .collect()
}

pub fn default_depths() -> Vec<usize> {
    (1..=10).collect()
}

/// Seconds of the default reaction-time grid.
pub fn default_taus() -> Vec<f64> {
    ReactionTime::grid().into_iter().map(ReactionTime::seconds).collect()
}

pub fn mse<T: Real>(predicted: &[T], observed: &[T]) -> Result<T, EvalError> {
    if predicted.len() != observed.len() {
        return Err(EvalError::LengthMismatch(predicted.len(), observed.len()));
    }
    if predicted.is_empty() {
        return Err(EvalError::Empty);
    }
    let sse: T = predicted
        .iter()
        .zip(observed)
        .map(|(&p, &o)| (p - o) * (p - o))
        .sum();
    Ok(sse / T::from_count(predicted.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome<T> {
    pub avg_mse: T,
    pub fold_mse: Vec<T>,
    /// Training runs performed.
    pub n_fits: usize,
}

fn fold_average<T: Real>(fold_mse: &[T]) -> T {
    fold_mse.iter().copied().sum::<T>() / T::from_count(fold_mse.len())
}

fn gbrt_fold<T: Real>(
    train: &InstanceSet<T>,
    fold: std::ops::Range<usize>,
    config: &GbrtConfig<T>,
) -> Result<T, EvalError> {
    let model = fit_gbrt(&train.without(fold.clone()), config)?;
    let held = train.slice(fold);
    mse(&model.predict_batch(&held.features()), &held.responses())
}

/// Average validation MSE over `k` contiguous folds of `train`.
pub fn cross_validate<T: Real>(
    train: &InstanceSet<T>,
    config: &GbrtConfig<T>,
    k: usize,
) -> Result<CvOutcome<T>, EvalError> {
    config.validate()?;
    let plan = contiguous_folds(train.len(), k)?;
    let fold_mse = plan
        .fold_ranges
        .into_par_iter()
        .map(|r| gbrt_fold(train, r, config))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CvOutcome {
        avg_mse: fold_average(&fold_mse),
        n_fits: fold_mse.len(),
        fold_mse,
    })
}

fn ghr_fold<T: Real>(
    train: &InstanceSet<T>,
    fold: std::ops::Range<usize>,
    bounds: &GhrBounds<T>,
    opts: &NelderMeadOptions<T>,
) -> Result<T, EvalError> {
    let params = calibrate_ghr_with(&train.without(fold.clone()), bounds, opts)?;
    let held = train.slice(fold);
    let (pred, _) = predict_set(&params.coefficients(), &held);
    mse(&pred, &held.responses())
}

/// Cross-validated GHR: calibrate on `k − 1` folds, score the held-out one.
pub fn cross_validate_ghr<T: Real>(
    train: &InstanceSet<T>,
    bounds: &GhrBounds<T>,
    opts: &NelderMeadOptions<T>,
    k: usize,
) -> Result<CvOutcome<T>, EvalError> {
    let plan = contiguous_folds(train.len(), k)?;
    let fold_mse = plan
        .fold_ranges
        .into_par_iter()
        .map(|r| ghr_fold(train, r, bounds, opts))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CvOutcome {
        avg_mse: fold_average(&fold_mse),
        n_fits: fold_mse.len(),
        fold_mse,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridBest<T> {
    pub nu: T,
    #[serde(rename = "M")]
    pub m: usize,
    pub avg_mse: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport<T> {
    pub nu_values: Vec<T>,
    pub m_values: Vec<usize>,
    /// `avg_mse[i][j]` belongs to `nu_values[i]` and `m_values[j]`.
    pub avg_mse: Vec<Vec<T>>,
    pub best: GridBest<T>,
    pub n_fits: usize,
}

/// Validation MSE after each stage count in `m_values` from one fit with
/// `max(m_values)` stages.
fn staged_fold_mse<T: Real>(
    train: &InstanceSet<T>,
    fold: std::ops::Range<usize>,
    config: &GbrtConfig<T>,
    m_values: &[usize],
) -> Result<Vec<T>, EvalError> {
    let model = fit_gbrt(&train.without(fold.clone()), config)?;
    let held = train.slice(fold);
    let staged: Vec<Vec<T>> = held
        .instances
        .iter()
        .map(|i| model.staged_predict(&i.features))
        .collect();
    let observed = held.responses();
    m_values
        .iter()
        .map(|&m| {
            let column: Vec<T> = staged.iter().map(|s| s[m]).collect();
            mse(&column, &observed)
        })
        .collect()
}

/// Cross-validated MSE for every `(ν, M)` pair. Each `ν` is fitted once per
/// fold with `max(M)` stages; smaller `M` are read off the staged
/// predictions, which equal a refit with that many stages.
pub fn grid_search_nu_m<T: Real>(
    train: &InstanceSet<T>,
    nu_values: &[T],
    m_values: &[usize],
    max_splits: usize,
    min_leaf: usize,
    k: usize,
) -> Result<GridReport<T>, EvalError> {
    if nu_values.is_empty() {
        return Err(EvalError::EmptyAxis("nu"));
    }
    if m_values.is_empty() {
        return Err(EvalError::EmptyAxis("M"));
    }
    if m_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EvalError::UnsortedM);
    }
    let plan = contiguous_folds(train.len(), k)?;
    let m_max = *m_values.last().expect("non-empty");
    let configs: Vec<GbrtConfig<T>> = nu_values
        .iter()
        .map(|&nu| GbrtConfig {
            n_learners: m_max,
            learning_rate: nu,
            max_splits,
            min_leaf,
        })
        .collect();
    for c in &configs {
        c.validate()?;
    }

    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|i| (0..k).map(move |f| (i, f)))
        .collect();
    let per_job = jobs
        .par_iter()
        .map(|&(i, f)| staged_fold_mse(train, plan.fold_ranges[f].clone(), &configs[i], m_values))
        .collect::<Result<Vec<_>, _>>()?;

    let mut avg_mse = vec![vec![T::zero(); m_values.len()]; configs.len()];
    for (i, row) in avg_mse.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let folds: Vec<T> = (0..k).map(|f| per_job[i * k + f][j]).collect();
            *cell = fold_average(&folds);
        }
    }

    // row-major scan with strict improvement keeps the smaller ν, then M
    let mut best = GridBest {
        nu: nu_values[0],
        m: m_values[0],
        avg_mse: avg_mse[0][0],
    };
    for (i, row) in avg_mse.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v < best.avg_mse {
                best = GridBest {
                    nu: nu_values[i],
                    m: m_values[j],
                    avg_mse: v,
                };
            }
        }
    }
    Ok(GridReport {
        nu_values: nu_values.to_vec(),
        m_values: m_values.to_vec(),
        avg_mse,
        best,
        n_fits: jobs.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthRow<T> {
    pub depth: usize,
    pub avg_mse: T,
}

/// Cross-validated MSE for each split budget, other settings from `fixed`.
pub fn sweep_depth<T: Real>(
    train: &InstanceSet<T>,
    depths: &[usize],
    fixed: &GbrtConfig<T>,
    k: usize,
) -> Result<Vec<DepthRow<T>>, EvalError> {
    if depths.is_empty() {
        return Err(EvalError::EmptyAxis("depth"));
    }
    fixed.validate()?;
    let plan = contiguous_folds(train.len(), k)?;
    let jobs: Vec<(usize, usize)> = (0..depths.len())
        .flat_map(|d| (0..k).map(move |f| (d, f)))
        .collect();
    let per_job = jobs
        .par_iter()
        .map(|&(d, f)| {
            let config = GbrtConfig {
                max_splits: depths[d],
                ..*fixed
            };
            gbrt_fold(train, plan.fold_ranges[f].clone(), &config)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(depths
        .iter()
        .enumerate()
        .map(|(d, &depth)| DepthRow {
            depth,
            avg_mse: fold_average(&per_job[d * k..(d + 1) * k]),
        })
        .collect())
}

/// Lowest-MSE depth, the smaller one on ties.
pub fn best_depth<T: Real>(rows: &[DepthRow<T>]) -> Option<DepthRow<T>> {
    let mut best: Option<DepthRow<T>> = None;
    for r in rows {
        if best.is_none_or(|b| r.avg_mse < b.avg_mse) {
            best = Some(*r);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum TauModel<T> {
    Gbrt { config: GbrtConfig<T> },
    Ghr { bounds: GhrBounds<T> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauRow<T> {
    pub tau_s: f64,
    /// Instances built from the whole series at this reaction time.
    pub n_instances: usize,
    /// Size of the training portion the folds are cut from.
    pub n_train: usize,
    pub avg_mse: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauSweep<T> {
    pub rows: Vec<TauRow<T>>,
    pub best_tau_s: f64,
}

/// Training portions of the series for each reaction time.
fn training_sets<T: Real>(
    series: &FollowerLeaderSeries<T>,
    taus: &[ReactionTime],
    train_fraction: f64,
) -> Result<Vec<(usize, InstanceSet<T>)>, EvalError> {
    taus.iter()
        .map(|&tau| {
            let all = build_instances(series, tau)?;
            let (train, _) = split_train_test(&all, train_fraction)?;
            Ok((all.len(), train))
        })
        .collect()
}

/// Cross-validated error of one model across reaction times. Instances are
/// rebuilt per `τ`, so each row reports its own dataset size.
pub fn sweep_tau<T: Real>(
    series: &FollowerLeaderSeries<T>,
    taus_s: &[f64],
    model: &TauModel<T>,
    train_fraction: f64,
    k: usize,
) -> Result<TauSweep<T>, EvalError> {
    if taus_s.is_empty() {
        return Err(EvalError::EmptyAxis("tau"));
    }
    let taus = taus_s
        .iter()
        .map(|&t| ReactionTime::from_seconds(t))
        .collect::<Result<Vec<_>, _>>()?;
    let sets = training_sets(series, &taus, train_fraction)?;
    let plans = sets
        .iter()
        .map(|(_, train)| contiguous_folds(train.len(), k))
        .collect::<Result<Vec<_>, _>>()?;
    if let TauModel::Gbrt { config } = model {
        config.validate()?;
    }
    let opts = NelderMeadOptions::default();

    let jobs: Vec<(usize, usize)> = (0..taus.len())
        .flat_map(|t| (0..k).map(move |f| (t, f)))
        .collect();
    let per_job = jobs
        .par_iter()
        .map(|&(t, f)| {
            let train = &sets[t].1;
            let fold = plans[t].fold_ranges[f].clone();
            match model {
                TauModel::Gbrt { config } => gbrt_fold(train, fold, config),
                TauModel::Ghr { bounds } => ghr_fold(train, fold, bounds, &opts),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;

    let rows: Vec<TauRow<T>> = taus
        .iter()
        .enumerate()
        .map(|(t, tau)| TauRow {
            tau_s: tau.seconds(),
            n_instances: sets[t].0,
            n_train: sets[t].1.len(),
            avg_mse: fold_average(&per_job[t * k..(t + 1) * k]),
        })
        .collect();
    let mut best = rows[0];
    for r in &rows[1..] {
        if r.avg_mse < best.avg_mse || (r.avg_mse == best.avg_mse && r.tau_s < best.tau_s) {
            best = *r;
        }
    }
    Ok(TauSweep {
        best_tau_s: best.tau_s,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport<T> {
    pub series_name: String,
    pub tau_gbrt_s: f64,
    pub tau_ghr_s: f64,
    pub gbrt_config: GbrtConfig<T>,
    pub ghr_params: GhrParameters<T>,
    pub test_mse_gbrt: T,
    pub test_mse_ghr: T,
    /// Held-out instances scored for GBRT.
    pub n_test: usize,
    /// Held-out instances scored for GHR; differs from `n_test` when the two
    /// reaction times differ.
    pub n_test_ghr: usize,
}

/// Held-out predictions of both models, for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonDetail<T> {
    pub report: ComparisonReport<T>,
    pub gbrt_test: InstanceSet<T>,
    pub gbrt_predictions: Vec<T>,
    pub ghr_test: InstanceSet<T>,
    pub ghr_predictions: Vec<T>,
}

/// Fits GBRT and calibrates GHR on the first `train_fraction` of their own
/// instance sets and scores both on the remainder.
pub fn compare_models<T: Real>(
    series: &FollowerLeaderSeries<T>,
    gbrt_config: &GbrtConfig<T>,
    tau_gbrt_s: f64,
    tau_ghr_s: f64,
    bounds: &GhrBounds<T>,
    train_fraction: f64,
) -> Result<ComparisonDetail<T>, EvalError> {
    gbrt_config.validate()?;
    let gbrt_set = build_instances(series, ReactionTime::from_seconds(tau_gbrt_s)?)?;
    let (gbrt_train, gbrt_test) = split_train_test(&gbrt_set, train_fraction)?;
    let ghr_set = build_instances(series, ReactionTime::from_seconds(tau_ghr_s)?)?;
    let (ghr_train, ghr_test) = split_train_test(&ghr_set, train_fraction)?;

    let model = fit_gbrt(&gbrt_train, gbrt_config)?;
    let gbrt_predictions = model.predict_batch(&gbrt_test.features());
    let test_mse_gbrt = mse(&gbrt_predictions, &gbrt_test.responses())?;

    let ghr_params = calibrate_ghr_with(&ghr_train, bounds, &NelderMeadOptions::default())?;
    let (ghr_predictions, _) = predict_set(&ghr_params.coefficients(), &ghr_test);
    let test_mse_ghr = mse(&ghr_predictions, &ghr_test.responses())?;

    Ok(ComparisonDetail {
        report: ComparisonReport {
            series_name: series.name.clone(),
            tau_gbrt_s: gbrt_set.tau_s(),
            tau_ghr_s: ghr_set.tau_s(),
            gbrt_config: *gbrt_config,
            ghr_params,
            test_mse_gbrt,
            test_mse_ghr,
            n_test: gbrt_test.len(),
            n_test_ghr: ghr_test.len(),
        },
        gbrt_test,
        gbrt_predictions,
        ghr_test,
        ghr_predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::CarFollowingInstance;

    fn set(rows: Vec<([f64; 3], f64)>) -> InstanceSet<f64> {
        InstanceSet {
            instances: rows
                .into_iter()
                .enumerate()
                .map(|(i, (features, y))| CarFollowingInstance {
                    t_index: i as i64,
                    response_acc_mps2: y,
                    features,
                })
                .collect(),
            tau: ReactionTime::from_steps(1).unwrap(),
            source_name: "t".into(),
        }
    }

    fn wavy(n: usize) -> InstanceSet<f64> {
        set((0..n)
            .map(|i| {
                let x = i as f64;
                ([x, (x * 0.7).sin(), 10.0 + (x * 0.3).cos()], (x * 0.2).sin() + 0.1 * (x * 1.3).cos())
            })
            .collect())
    }

    #[test]
    fn mse_cases() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[3.0, 4.0, -1.0], &[1.0, 2.0, -3.0]).unwrap(), 4.0);
        assert!(matches!(mse::<f64>(&[], &[]), Err(EvalError::Empty)));
        assert!(matches!(mse(&[1.0], &[1.0, 2.0]), Err(EvalError::LengthMismatch(1, 2))));
    }

    #[test]
    fn default_axes() {
        assert_eq!(default_nu_values::<f64>(), vec![0.1, 0.3, 0.5, 0.8, 1.0]);
        let m = default_m_values();
        assert_eq!(m.len(), 28);
        assert_eq!((m[0], m[8], m[9], m[17], m[18], m[27]), (1, 9, 10, 90, 100, 1000));
        assert_eq!(default_taus().len(), 30);
        assert_eq!(default_depths(), (1..=10).collect::<Vec<_>>());
    }

    #[test]
    fn constant_response_cv_is_zero() {
        let s = set((0..50).map(|i| ([i as f64, 1.0, 2.0], 0.4)).collect());
        let cv = cross_validate(&s, &GbrtConfig::default(), 5).unwrap();
        assert_eq!(cv.avg_mse, 0.0);
        assert_eq!(cv.n_fits, 5);
    }

    #[test]
    fn two_fold_by_hand() {
        let s = wavy(10);
        let cfg = GbrtConfig {
            n_learners: 3,
            learning_rate: 0.5,
            max_splits: 1,
            min_leaf: 1,
        };
        let cv = cross_validate(&s, &cfg, 2).unwrap();
        let mut folds = Vec::new();
        for (train, held) in [(s.slice(5..10), s.slice(0..5)), (s.slice(0..5), s.slice(5..10))] {
            let model = fit_gbrt(&train, &cfg).unwrap();
            let errs: Vec<f64> = held
                .instances
                .iter()
                .map(|i| model.predict(&i.features) - i.response_acc_mps2)
                .collect();
            folds.push(errs.iter().map(|e| e * e).sum::<f64>() / 5.0);
        }
        assert_eq!(cv.fold_mse, folds);
        assert!((cv.avg_mse - (folds[0] + folds[1]) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn single_cell_grid_matches_cross_validation() {
        let s = wavy(60);
        let grid = grid_search_nu_m(&s, &[0.3], &[7], 3, 5, 5).unwrap();
        let cfg = GbrtConfig {
            n_learners: 7,
            learning_rate: 0.3,
            max_splits: 3,
            min_leaf: 5,
        };
        assert_eq!(grid.avg_mse[0][0], cross_validate(&s, &cfg, 5).unwrap().avg_mse);
        assert_eq!(grid.best.m, 7);
        assert_eq!(grid.n_fits, 5);
    }

    #[test]
    fn grid_shape_and_best() {
        let s = wavy(80);
        let nus = [0.1, 0.5, 1.0];
        let ms = [1, 2, 5, 20];
        let g = grid_search_nu_m(&s, &nus, &ms, 2, 3, 4).unwrap();
        assert_eq!(g.avg_mse.len(), 3);
        assert!(g.avg_mse.iter().all(|r| r.len() == 4));
        let min = g.avg_mse.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(g.best.avg_mse, min);
        assert!(matches!(
            grid_search_nu_m(&s, &nus, &[5, 2], 2, 3, 4),
            Err(EvalError::UnsortedM)
        ));
    }

    #[test]
    fn depth_zero_is_the_mean_model() {
        let s = wavy(50);
        let rows = sweep_depth(&s, &[0, 1, 3], &GbrtConfig::default(), 5).unwrap();
        assert_eq!(rows.len(), 3);
        let plan = contiguous_folds(50, 5).unwrap();
        let mut total = 0.0;
        for r in plan.fold_ranges {
            let train = s.without(r.clone()).responses();
            let mean = train.iter().sum::<f64>() / train.len() as f64;
            let held = s.slice(r).responses();
            total += held.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / held.len() as f64;
        }
        assert!((rows[0].avg_mse - total / 5.0).abs() < 1e-12);
    }

    #[test]
    fn one_split_data_drops_sharply() {
        let s = set((0..100)
            .map(|i| {
                let y = if i % 2 == 0 { -1.0 } else { 1.0 };
                ([y, i as f64, 1.0], y)
            })
            .collect());
        let cfg = GbrtConfig {
            learning_rate: 1.0,
            ..GbrtConfig::default()
        };
        let rows = sweep_depth(&s, &[0, 1], &cfg, 5).unwrap();
        assert!(rows[1].avg_mse < 1e-12);
        assert!(rows[0].avg_mse > 0.9);
        assert_eq!(best_depth(&rows).unwrap().depth, 1);
    }
}
