//! Lagged supervised instances, the time-ordered train/test split and
//! contiguous cross-validation folds.

use std::io::{Read, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::{Real, FRAME_SECONDS};
use crate::trajectory_io::FollowerLeaderSeries;

/// Longest reaction time considered, in frames (3.0 s).
pub const MAX_TAU_STEPS: u32 = 30;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("reaction time {0} s is not a multiple of 0.1 s")]
    TauNotGridAligned(f64),
    #[error("reaction time {0} s outside [0.1, 3.0] s")]
    TauOutOfRange(f64),
    #[error("reaction time of {steps} frames needs more than {len} frames")]
    TauTooLarge { steps: u32, len: usize },
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("split of {n} instances at fraction {fraction} leaves one side empty")]
    DegenerateSplit { n: usize, fraction: f64 },
    #[error("{n} instances cannot form {k} folds")]
    TooFewInstances { n: usize, k: usize },
    #[error("row {row}: {reason}")]
    Parse { row: usize, reason: String },
    #[error("non-positive gap at t_index {0}")]
    NonPositiveGap(i64),
    #[error("t_index must be strictly increasing (row {0})")]
    Unordered(usize),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Driver reaction time on the 0.1 s frame grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ReactionTime {
    steps: u32,
}

impl ReactionTime {
    pub fn from_steps(steps: u32) -> Result<Self, DatasetError> {
        if steps == 0 || steps > MAX_TAU_STEPS {
            return Err(DatasetError::TauOutOfRange(steps as f64 * FRAME_SECONDS));
        }
        Ok(Self { steps })
    }

    pub fn from_seconds(tau_s: f64) -> Result<Self, DatasetError> {
        let ratio = tau_s / FRAME_SECONDS;
        let steps = ratio.round();
        if !ratio.is_finite() || (ratio - steps).abs() > 1e-6 {
            return Err(DatasetError::TauNotGridAligned(tau_s));
        }
        if steps < 1.0 || steps > MAX_TAU_STEPS as f64 {
            return Err(DatasetError::TauOutOfRange(tau_s));
        }
        Ok(Self { steps: steps as u32 })
    }

    pub fn steps(self) -> u32 {
        self.steps
    }

    pub fn seconds(self) -> f64 {
        // integer tenths keep the value exactly as printed
        self.steps as f64 / 10.0
    }

    /// The default 0.1 s .. 3.0 s sweep grid.
    pub fn grid() -> Vec<ReactionTime> {
        (1..=MAX_TAU_STEPS).map(|steps| Self { steps }).collect()
    }
}

/// `{acc(t+τ); [v(t+τ), Δv(t), Δx(t)]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarFollowingInstance<T> {
    /// Frame index of the stimulus instant `t`.
    pub t_index: i64,
    pub response_acc_mps2: T,
    /// Follower speed at `t+τ`, relative speed at `t`, gap at `t`.
    pub features: [T; 3],
}

impl<T: Real> CarFollowingInstance<T> {
    pub fn follower_speed(&self) -> T {
        self.features[0]
    }

    pub fn delta_v(&self) -> T {
        self.features[1]
    }

    pub fn delta_x(&self) -> T {
        self.features[2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSet<T> {
    pub instances: Vec<CarFollowingInstance<T>>,
    pub tau: ReactionTime,
    pub source_name: String,
}

impl<T: Real> InstanceSet<T> {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn tau_s(&self) -> f64 {
        self.tau.seconds()
    }

    pub fn features(&self) -> Vec<[T; 3]> {
        self.instances.iter().map(|i| i.features).collect()
    }

    pub fn responses(&self) -> Vec<T> {
        self.instances.iter().map(|i| i.response_acc_mps2).collect()
    }

    pub fn slice(&self, range: Range<usize>) -> Self {
        Self {
            instances: self.instances[range].to_vec(),
            tau: self.tau,
            source_name: self.source_name.clone(),
        }
    }

    /// Everything outside `range`, order preserved.
    pub fn without(&self, range: Range<usize>) -> Self {
        let instances = self.instances[..range.start]
            .iter()
            .chain(&self.instances[range.end..])
            .copied()
            .collect();
        Self {
            instances,
            tau: self.tau,
            source_name: self.source_name.clone(),
        }
    }
}

/// One instance per frame `t` whose `t+τ` lies inside the series.
pub fn build_instances<T: Real>(
    series: &FollowerLeaderSeries<T>,
    tau: ReactionTime,
) -> Result<InstanceSet<T>, DatasetError> {
    let lag = tau.steps() as usize;
    if series.len() <= lag {
        return Err(DatasetError::TauTooLarge {
            steps: tau.steps(),
            len: series.len(),
        });
    }
    let frames = &series.frames;
    let instances = (0..frames.len() - lag)
        .map(|t| {
            let now = &frames[t];
            let later = &frames[t + lag];
            CarFollowingInstance {
                t_index: now.frame_index,
                response_acc_mps2: later.follower_acc_mps2,
                features: [later.follower_speed_mps, now.delta_v_mps, now.delta_x_m],
            }
        })
        .collect();
    Ok(InstanceSet {
        instances,
        tau,
        source_name: series.name.clone(),
    })
}

/// First `⌊n·fraction⌋` instances for training, the rest for testing.
pub fn split_train_test<T: Real>(
    set: &InstanceSet<T>,
    train_fraction: f64,
) -> Result<(InstanceSet<T>, InstanceSet<T>), DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::InvalidFraction(train_fraction));
    }
    let n = set.len();
    // the epsilon absorbs representation error such as 0.29 * 100 = 28.999...
    let n_train = ((n as f64) * train_fraction + 1e-9).floor() as usize;
    if n_train == 0 || n_train >= n {
        return Err(DatasetError::DegenerateSplit {
            n,
            fraction: train_fraction,
        });
    }
    Ok((set.slice(0..n_train), set.slice(n_train..n)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub fold_ranges: Vec<Range<usize>>,
}

/// `k` consecutive blocks; the first `n mod k` blocks take one extra item.
pub fn contiguous_folds(n: usize, k: usize) -> Result<FoldPlan, DatasetError> {
    if k < 2 || n < k {
        return Err(DatasetError::TooFewInstances { n, k });
    }
    let base = n / k;
    let extra = n % k;
    let mut fold_ranges = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        fold_ranges.push(start..start + size);
        start += size;
    }
    Ok(FoldPlan { k, fold_ranges })
}

pub const INSTANCE_HEADER: [&str; 5] = ["t_index", "response", "v_resp", "dv", "dx"];

pub fn write_instances_csv<T: Real, W: Write>(set: &InstanceSet<T>, sink: W) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(INSTANCE_HEADER)?;
    for inst in &set.instances {
        w.write_record([
            inst.t_index.to_string(),
            inst.response_acc_mps2.to_string(),
            inst.features[0].to_string(),
            inst.features[1].to_string(),
            inst.features[2].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the `t_index,response,v_resp,dv,dx` layout.
pub fn read_instances_csv<T: Real, R: Read>(
    source: R,
    tau: ReactionTime,
    source_name: &str,
) -> Result<InstanceSet<T>, DatasetError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = r.headers()?.clone();
    let mut cols = [0usize; 5];
    for (slot, name) in cols.iter_mut().zip(INSTANCE_HEADER) {
        *slot = headers.iter().position(|h| h == name).ok_or_else(|| DatasetError::Parse {
            row: 1,
            reason: format!("missing column `{name}`"),
        })?;
    }
    let mut instances: Vec<CarFollowingInstance<T>> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let cell = |c: usize| rec.get(cols[c]).unwrap_or("");
        let bad = |c: usize| DatasetError::Parse {
            row,
            reason: format!("cannot parse `{}` in `{}`", cell(c), INSTANCE_HEADER[c]),
        };
        let real = |c: usize| -> Result<T, DatasetError> {
            cell(c).parse::<T>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(c))
        };
        let t_index: i64 = cell(0).parse().map_err(|_| bad(0))?;
        let inst = CarFollowingInstance {
            t_index,
            response_acc_mps2: real(1)?,
            features: [real(2)?, real(3)?, real(4)?],
        };
        if inst.features[2] <= T::zero() {
            return Err(DatasetError::NonPositiveGap(t_index));
        }
        if instances.last().is_some_and(|p| p.t_index >= t_index) {
            return Err(DatasetError::Unordered(row));
        }
        instances.push(inst);
    }
    Ok(InstanceSet {
        instances,
        tau,
        source_name: source_name.to_string(),
    })
}
