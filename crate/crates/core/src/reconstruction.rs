//! Trajectory cleaning: acceleration outlier detection, spline repair of
//! outlier positions, finite-difference kinematics and moving-average
//! smoothing.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::{Real, FRAME_SECONDS};
use crate::spline::{NaturalCubicSpline, SplineError};
use crate::trajectory_io::VehicleTrack;

#[derive(Debug, Error, PartialEq)]
pub enum ReconstructionError {
    #[error("fewer than two usable anchor points ({0})")]
    TooFewAnchors(usize),
    #[error("at least 3 samples are required, got {0}")]
    TooShort(usize),
    #[error("filter window {window} exceeds signal length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("filter window must be odd and positive, got {0}")]
    InvalidWindow(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("positions and times differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("outlier index {0} out of range")]
    IndexOutOfRange(usize),
    #[error(transparent)]
    Spline(#[from] SplineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionConfig<T> {
    pub acc_threshold_mps2: T,
    /// Non-outlier points taken on each side of an outlier run.
    pub anchor_count: usize,
    /// Odd moving-average width in samples.
    pub filter_window: usize,
    pub dt_s: T,
}

impl<T: Real> Default for ReconstructionConfig<T> {
    fn default() -> Self {
        Self {
            acc_threshold_mps2: T::lit(3.0),
            anchor_count: 5,
            filter_window: 5,
            dt_s: T::lit(FRAME_SECONDS),
        }
    }
}

impl<T: Real> ReconstructionConfig<T> {
    pub fn validate(&self) -> Result<(), ReconstructionError> {
        if !(self.acc_threshold_mps2 > T::zero()) {
            return Err(ReconstructionError::InvalidConfig(
                "acceleration threshold must be positive".into(),
            ));
        }
        if self.anchor_count < 2 {
            return Err(ReconstructionError::InvalidConfig(
                "anchor count must be at least 2".into(),
            ));
        }
        if self.filter_window == 0 || self.filter_window.is_multiple_of(2) {
            return Err(ReconstructionError::InvalidWindow(self.filter_window));
        }
        if !(self.dt_s > T::zero()) {
            return Err(ReconstructionError::InvalidConfig("dt must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport<T> {
    pub n_outliers: usize,
    pub max_abs_acc_before: T,
    pub max_abs_acc_after: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructedTrack<T> {
    pub original: VehicleTrack<T>,
    pub positions_m: Vec<T>,
    pub speeds_mps: Vec<T>,
    pub accs_mps2: Vec<T>,
    pub outlier_frames: BTreeSet<i64>,
    pub report: ReconstructionReport<T>,
}

impl<T: Real> ReconstructedTrack<T> {
    /// The original track carrying the reconstructed kinematics.
    pub fn to_track(&self) -> VehicleTrack<T> {
        self.original
            .with_kinematics(&self.positions_m, &self.speeds_mps, &self.accs_mps2)
    }
}

/// Indices whose absolute acceleration exceeds `threshold`.
pub fn detect_outliers<T: Real>(accs: &[T], threshold: T) -> BTreeSet<usize> {
    accs.iter()
        .enumerate()
        .filter(|(_, a)| a.abs() > threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Maximal runs of consecutive indices, as inclusive `(first, last)` pairs.
fn outlier_runs(outliers: &BTreeSet<usize>) -> Vec<(usize, usize)> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for &i in outliers {
        match runs.last_mut() {
            Some((_, last)) if *last + 1 == i => *last = i,
            _ => runs.push((i, i)),
        }
    }
    runs
}

/// Replaces every outlier run by a natural cubic spline through up to
/// `anchor_count` non-outlier points on each side of the run.
pub fn spline_interpolate<T: Real>(
    positions: &[T],
    times: &[T],
    outliers: &BTreeSet<usize>,
    anchor_count: usize,
) -> Result<Vec<T>, ReconstructionError> {
    if positions.len() != times.len() {
        return Err(ReconstructionError::LengthMismatch(positions.len(), times.len()));
    }
    if let Some(&last) = outliers.iter().next_back() {
        if last >= positions.len() {
            return Err(ReconstructionError::IndexOutOfRange(last));
        }
    }
    let mut out = positions.to_vec();
    if outliers.is_empty() {
        return Ok(out);
    }
    let usable = positions.len() - outliers.len();
    if usable < 2 {
        return Err(ReconstructionError::TooFewAnchors(usable));
    }

    for (first, last) in outlier_runs(outliers) {
        let before = (0..first)
            .rev()
            .filter(|i| !outliers.contains(i))
            .take(anchor_count);
        let after = (last + 1..positions.len())
            .filter(|i| !outliers.contains(i))
            .take(anchor_count);
        let mut anchors: Vec<usize> = before.chain(after).collect();
        anchors.sort_unstable();
        if anchors.len() < 2 {
            return Err(ReconstructionError::TooFewAnchors(anchors.len()));
        }
        let knots: Vec<T> = anchors.iter().map(|&i| times[i]).collect();
        let values: Vec<T> = anchors.iter().map(|&i| positions[i]).collect();
        let spline = NaturalCubicSpline::new(&knots, &values)?;
        for i in first..=last {
            out[i] = spline.evaluate(times[i]);
        }
    }
    Ok(out)
}

fn central_difference<T: Real>(values: &[T], dt: T) -> Vec<T> {
    let n = values.len();
    let two_dt = dt + dt;
    let mut out = Vec::with_capacity(n);
    out.push((values[1] - values[0]) / dt);
    for i in 1..n - 1 {
        out.push((values[i + 1] - values[i - 1]) / two_dt);
    }
    out.push((values[n - 1] - values[n - 2]) / dt);
    out
}

/// Speeds and accelerations from positions by central differences
/// (first-order one-sided at both ends).
pub fn derive_kinematics<T: Real>(
    positions: &[T],
    dt: T,
) -> Result<(Vec<T>, Vec<T>), ReconstructionError> {
    if positions.len() < 3 {
        return Err(ReconstructionError::TooShort(positions.len()));
    }
    if !(dt > T::zero()) {
        return Err(ReconstructionError::InvalidConfig("dt must be positive".into()));
    }
    let speeds = central_difference(positions, dt);
    let accs = central_difference(&speeds, dt);
    Ok((speeds, accs))
}

/// Centred moving average; near the ends the window shrinks symmetrically.
pub fn low_pass_filter<T: Real>(signal: &[T], window: usize) -> Result<Vec<T>, ReconstructionError> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(ReconstructionError::InvalidWindow(window));
    }
    if window > signal.len() {
        return Err(ReconstructionError::WindowTooLarge {
            window,
            len: signal.len(),
        });
    }
    let n = signal.len();
    let half = (window - 1) / 2;
    Ok((0..n)
        .map(|i| {
            let r = half.min(i).min(n - 1 - i);
            let slice = &signal[i - r..=i + r];
            slice.iter().copied().sum::<T>() / T::from_count(slice.len())
        })
        .collect())
}

fn max_abs<T: Real>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

/// Full cleaning pipeline for one vehicle.
pub fn reconstruct<T: Real>(
    track: &VehicleTrack<T>,
    config: &ReconstructionConfig<T>,
) -> Result<ReconstructedTrack<T>, ReconstructionError> {
    config.validate()?;
    let raw_accs = track.accelerations();
    let outliers = detect_outliers(&raw_accs, config.acc_threshold_mps2);
    let positions = spline_interpolate(
        &track.positions(),
        &track.times(),
        &outliers,
        config.anchor_count,
    )?;
    let (speeds, accs) = derive_kinematics(&positions, config.dt_s)?;
    let speeds = low_pass_filter(&speeds, config.filter_window)?;
    let accs = low_pass_filter(&accs, config.filter_window)?;
    let report = ReconstructionReport {
        n_outliers: outliers.len(),
        max_abs_acc_before: max_abs(&raw_accs),
        max_abs_acc_after: max_abs(&accs),
    };
    Ok(ReconstructedTrack {
        original: track.clone(),
        positions_m: positions,
        speeds_mps: speeds,
        accs_mps2: accs,
        outlier_frames: outliers
            .iter()
            .map(|&i| track.samples[i].frame_index)
            .collect(),
        report,
    })
}
