//! NGSIM-style trajectory files: parsing, follower/leader pairing and
//! per-series summary statistics.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::{Real, FRAME_SECONDS};

/// Metres per international foot.
pub const FEET_TO_METERS: f64 = 0.3048;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("missing column `{0}` in header")]
    Schema(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: {reason}")]
    InvalidValue { row: usize, reason: String },
    #[error("input contains no data rows")]
    EmptyInput,
    #[error("vehicle {vehicle_id} has duplicate frame {frame}")]
    DuplicateFrame { vehicle_id: i64, frame: i64 },
    #[error("unknown vehicle {0}")]
    UnknownVehicle(i64),
    #[error("vehicle {0} never has a preceding vehicle")]
    NoLeader(i64),
    #[error("no leader track overlaps vehicle {follower_id} while it follows a leader")]
    LeaderMissing { follower_id: i64 },
    #[error("non-positive gap {gap} m at frame {frame}")]
    NonPositiveGap { frame: i64, gap: f64 },
    #[error("series is empty")]
    EmptySeries,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Length unit of the position/speed/acceleration columns of a file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LengthUnit {
    #[default]
    Meters,
    Feet,
}

impl LengthUnit {
    pub fn to_meters_factor(self) -> f64 {
        match self {
            LengthUnit::Meters => 1.0,
            LengthUnit::Feet => FEET_TO_METERS,
        }
    }
}

/// Vehicle class as coded in NGSIM (`1` motorcycle, `2` auto, `3` truck).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VehicleClass {
    Auto,
    Truck,
    Other,
}

impl VehicleClass {
    fn parse(cell: &str) -> Option<Self> {
        let cell = cell.trim();
        match cell.to_ascii_lowercase().as_str() {
            "auto" | "car" => return Some(VehicleClass::Auto),
            "truck" => return Some(VehicleClass::Truck),
            "other" | "motorcycle" => return Some(VehicleClass::Other),
            _ => {}
        }
        let code = parse_integer(cell)?;
        Some(match code {
            2 => VehicleClass::Auto,
            3 => VehicleClass::Truck,
            _ => VehicleClass::Other,
        })
    }

    pub fn ngsim_code(self) -> i64 {
        match self {
            VehicleClass::Other => 1,
            VehicleClass::Auto => 2,
            VehicleClass::Truck => 3,
        }
    }
}

/// Column names used to locate the required fields in the header row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub vehicle_id: String,
    pub frame: String,
    pub position: String,
    pub speed: String,
    pub acceleration: String,
    pub preceding: String,
    pub lane: String,
    pub class: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            vehicle_id: "Vehicle_ID".into(),
            frame: "Frame_ID".into(),
            position: "Local_Y".into(),
            speed: "v_Vel".into(),
            acceleration: "v_Acc".into(),
            preceding: "Preceding".into(),
            lane: "Lane_ID".into(),
            class: "v_Class".into(),
        }
    }
}

impl ColumnSchema {
    fn names(&self) -> [&str; 8] {
        [
            &self.vehicle_id,
            &self.frame,
            &self.position,
            &self.speed,
            &self.acceleration,
            &self.preceding,
            &self.lane,
            &self.class,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample<T> {
    pub frame_index: i64,
    pub time_s: T,
    pub position_m: T,
    pub speed_mps: T,
    pub acc_mps2: T,
    pub vehicle_id: i64,
    /// `0` when the vehicle has no leader.
    pub preceding_id: i64,
    pub lane_id: i64,
}

/// A single vehicle's gap-free, frame-ordered record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleTrack<T> {
    pub vehicle_id: i64,
    pub vehicle_class: VehicleClass,
    pub samples: Vec<TrajectorySample<T>>,
}

impl<T: Real> VehicleTrack<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first_frame(&self) -> Option<i64> {
        self.samples.first().map(|s| s.frame_index)
    }

    pub fn last_frame(&self) -> Option<i64> {
        self.samples.last().map(|s| s.frame_index)
    }

    /// Sample at `frame`, relying on the gap-free invariant.
    pub fn sample_at(&self, frame: i64) -> Option<&TrajectorySample<T>> {
        let first = self.first_frame()?;
        let offset = usize::try_from(frame - first).ok()?;
        self.samples.get(offset)
    }

    pub fn positions(&self) -> Vec<T> {
        self.samples.iter().map(|s| s.position_m).collect()
    }

    pub fn speeds(&self) -> Vec<T> {
        self.samples.iter().map(|s| s.speed_mps).collect()
    }

    pub fn accelerations(&self) -> Vec<T> {
        self.samples.iter().map(|s| s.acc_mps2).collect()
    }

    pub fn times(&self) -> Vec<T> {
        self.samples.iter().map(|s| s.time_s).collect()
    }

    /// Copy of the track with position, speed and acceleration replaced.
    ///
    /// Panics if any slice length differs from the track length.
    pub fn with_kinematics(&self, positions: &[T], speeds: &[T], accs: &[T]) -> Self {
        assert_eq!(positions.len(), self.len());
        assert_eq!(speeds.len(), self.len());
        assert_eq!(accs.len(), self.len());
        let samples = self
            .samples
            .iter()
            .zip(positions.iter().zip(speeds.iter().zip(accs)))
            .map(|(s, (&x, (&v, &a)))| TrajectorySample {
                position_m: x,
                speed_mps: v,
                acc_mps2: a,
                ..s.clone()
            })
            .collect();
        Self {
            vehicle_id: self.vehicle_id,
            vehicle_class: self.vehicle_class,
            samples,
        }
    }
}

/// Tracks parsed from one file plus the number of gap fragments dropped.
#[derive(Debug, Clone)]
pub struct ParsedTrajectories<T> {
    pub tracks: Vec<VehicleTrack<T>>,
    pub dropped_fragments: usize,
}

impl<T: Real> ParsedTrajectories<T> {
    pub fn track(&self, vehicle_id: i64) -> Option<&VehicleTrack<T>> {
        self.tracks.iter().find(|t| t.vehicle_id == vehicle_id)
    }
}

fn parse_integer(cell: &str) -> Option<i64> {
    let cell = cell.trim();
    if let Ok(v) = cell.parse::<i64>() {
        return Some(v);
    }
    let v: f64 = cell.parse().ok()?;
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        Some(v as i64)
    } else {
        None
    }
}

fn frame_time<T: Real>(frame: i64) -> T {
    T::lit(frame as f64 * FRAME_SECONDS)
}

/// Parses a comma-delimited trajectory file with a header row.
///
/// Samples are grouped per vehicle and sorted by frame. A vehicle whose
/// frames contain gaps keeps only its longest gap-free fragment (the earliest
/// one on ties); the number of discarded fragments is reported.
pub fn parse_trajectory_csv<T: Real, R: Read>(
    source: R,
    schema: &ColumnSchema,
    units: LengthUnit,
) -> Result<ParsedTrajectories<T>, TrajectoryError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let mut columns = [0usize; 8];
    for (slot, name) in columns.iter_mut().zip(schema.names()) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TrajectoryError::Schema(name.to_string()))?;
    }
    let [c_id, c_frame, c_pos, c_speed, c_acc, c_prec, c_lane, c_class] = columns;
    let names = schema.names();
    let scale = T::lit(units.to_meters_factor());

    let mut by_vehicle: BTreeMap<i64, (VehicleClass, Vec<TrajectorySample<T>>)> = BTreeMap::new();
    let mut n_rows = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        // header is row 1
        let row = i + 2;
        n_rows += 1;
        let cell = |c: usize| record.get(c).unwrap_or("");
        let parse_err = |c: usize, name: &str| TrajectoryError::Parse {
            row,
            column: name.to_string(),
            value: cell(c).to_string(),
        };
        let int = |c: usize, name: &str| parse_integer(cell(c)).ok_or_else(|| parse_err(c, name));
        let real = |c: usize, name: &str| -> Result<T, TrajectoryError> {
            let v: T = cell(c).trim().parse().map_err(|_| parse_err(c, name))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(c, name))
            }
        };

        let vehicle_id = int(c_id, names[0])?;
        let frame_index = int(c_frame, names[1])?;
        let position_m = real(c_pos, names[2])? * scale;
        let speed_mps = real(c_speed, names[3])? * scale;
        let acc_mps2 = real(c_acc, names[4])? * scale;
        let preceding_id = int(c_prec, names[5])?;
        let lane_id = int(c_lane, names[6])?;
        let class = VehicleClass::parse(cell(c_class)).ok_or_else(|| parse_err(c_class, names[7]))?;
        if speed_mps < T::zero() {
            return Err(TrajectoryError::InvalidValue {
                row,
                reason: format!("negative speed {speed_mps}"),
            });
        }

        let entry = by_vehicle
            .entry(vehicle_id)
            .or_insert_with(|| (class, Vec::new()));
        entry.1.push(TrajectorySample {
            frame_index,
            time_s: frame_time(frame_index),
            position_m,
            speed_mps,
            acc_mps2,
            vehicle_id,
            preceding_id,
            lane_id,
        });
    }
    if n_rows == 0 {
        return Err(TrajectoryError::EmptyInput);
    }

    let mut tracks = Vec::with_capacity(by_vehicle.len());
    let mut dropped_fragments = 0;
    for (vehicle_id, (vehicle_class, mut samples)) in by_vehicle {
        samples.sort_by_key(|s| s.frame_index);
        if let Some(w) = samples.windows(2).find(|w| w[0].frame_index == w[1].frame_index) {
            return Err(TrajectoryError::DuplicateFrame {
                vehicle_id,
                frame: w[0].frame_index,
            });
        }
        let fragments = gap_free_runs(&samples);
        dropped_fragments += fragments.len() - 1;
        let keep = longest_run(&fragments);
        let samples = samples[keep.clone()].to_vec();
        tracks.push(VehicleTrack {
            vehicle_id,
            vehicle_class,
            samples,
        });
    }
    Ok(ParsedTrajectories {
        tracks,
        dropped_fragments,
    })
}

fn gap_free_runs<T>(samples: &[TrajectorySample<T>]) -> Vec<std::ops::Range<usize>> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=samples.len() {
        if i == samples.len() || samples[i].frame_index != samples[i - 1].frame_index + 1 {
            runs.push(start..i);
            start = i;
        }
    }
    runs
}

/// Longest range, earliest on ties.
fn longest_run(runs: &[std::ops::Range<usize>]) -> std::ops::Range<usize> {
    let mut best = runs[0].clone();
    for r in &runs[1..] {
        if r.len() > best.len() {
            best = r.clone();
        }
    }
    best
}

/// Writes tracks in the column layout of `schema`, converting lengths back to
/// `units`.
pub fn write_trajectory_csv<T: Real, W: Write>(
    tracks: &[VehicleTrack<T>],
    sink: W,
    schema: &ColumnSchema,
    units: LengthUnit,
) -> Result<(), TrajectoryError> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(schema.names())?;
    let scale = T::lit(units.to_meters_factor());
    for track in tracks {
        for s in &track.samples {
            writer.write_record([
                s.vehicle_id.to_string(),
                s.frame_index.to_string(),
                (s.position_m / scale).to_string(),
                (s.speed_mps / scale).to_string(),
                (s.acc_mps2 / scale).to_string(),
                s.preceding_id.to_string(),
                s.lane_id.to_string(),
                track.vehicle_class.ngsim_code().to_string(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// One aligned follower/leader frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFrame<T> {
    pub frame_index: i64,
    pub time_s: T,
    pub follower_speed_mps: T,
    pub follower_acc_mps2: T,
    pub leader_speed_mps: T,
    /// Leader speed minus follower speed.
    pub delta_v_mps: T,
    /// Leader position minus follower position.
    pub delta_x_m: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowerLeaderSeries<T> {
    pub name: String,
    pub follower_id: i64,
    pub leader_id: i64,
    pub follower_class: VehicleClass,
    pub frames: Vec<PairFrame<T>>,
}

impl<T> FollowerLeaderSeries<T> {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Pairs the follower with its leader over the longest contiguous stretch
/// where the leader id stays constant and the leader track is present.
pub fn extract_pair<T: Real>(
    tracks: &[VehicleTrack<T>],
    follower_id: i64,
) -> Result<FollowerLeaderSeries<T>, TrajectoryError> {
    let follower = tracks
        .iter()
        .find(|t| t.vehicle_id == follower_id)
        .ok_or(TrajectoryError::UnknownVehicle(follower_id))?;

    // Constant-leader segments as (leader, first sample, end sample).
    let mut segments: Vec<(i64, usize, usize)> = Vec::new();
    let samples = &follower.samples;
    let mut start = 0;
    for i in 1..=samples.len() {
        if i == samples.len() || samples[i].preceding_id != samples[start].preceding_id {
            if samples[start].preceding_id != 0 {
                segments.push((samples[start].preceding_id, start, i));
            }
            start = i;
        }
    }
    if segments.is_empty() {
        return Err(TrajectoryError::NoLeader(follower_id));
    }

    let mut best: Option<(i64, usize, usize)> = None;
    for &(leader_id, seg_start, seg_end) in &segments {
        let Some(leader) = tracks.iter().find(|t| t.vehicle_id == leader_id) else {
            continue;
        };
        let (Some(lf), Some(ll)) = (leader.first_frame(), leader.last_frame()) else {
            continue;
        };
        let lo = samples[seg_start].frame_index.max(lf);
        let hi = samples[seg_end - 1].frame_index.min(ll);
        if hi < lo {
            continue;
        }
        let a = seg_start + (lo - samples[seg_start].frame_index) as usize;
        let b = seg_start + (hi - samples[seg_start].frame_index) as usize + 1;
        if best.is_none_or(|(_, s, e)| b - a > e - s) {
            best = Some((leader_id, a, b));
        }
    }
    let (leader_id, a, b) = best.ok_or(TrajectoryError::LeaderMissing { follower_id })?;
    let leader = tracks
        .iter()
        .find(|t| t.vehicle_id == leader_id)
        .expect("leader located above");

    let mut frames = Vec::with_capacity(b - a);
    for f in &samples[a..b] {
        let l = leader
            .sample_at(f.frame_index)
            .expect("leader overlaps the chosen range");
        let delta_x_m = l.position_m - f.position_m;
        if delta_x_m <= T::zero() {
            return Err(TrajectoryError::NonPositiveGap {
                frame: f.frame_index,
                gap: delta_x_m.as_f64(),
            });
        }
        frames.push(PairFrame {
            frame_index: f.frame_index,
            time_s: f.time_s,
            follower_speed_mps: f.speed_mps,
            follower_acc_mps2: f.acc_mps2,
            leader_speed_mps: l.speed_mps,
            delta_v_mps: l.speed_mps - f.speed_mps,
            delta_x_m,
        });
    }
    Ok(FollowerLeaderSeries {
        name: format!("{follower_id}-{leader_id}"),
        follower_id,
        leader_id,
        follower_class: follower.vehicle_class,
        frames,
    })
}

/// Pair with the most frames over all followers (smallest follower id on
/// ties). Followers that cannot be paired are skipped.
pub fn longest_pair<T: Real>(
    tracks: &[VehicleTrack<T>],
) -> Result<FollowerLeaderSeries<T>, TrajectoryError> {
    let mut best: Option<FollowerLeaderSeries<T>> = None;
    for t in tracks {
        if let Ok(series) = extract_pair(tracks, t.vehicle_id) {
            if best.as_ref().is_none_or(|b| series.len() > b.len()) {
                best = Some(series);
            }
        }
    }
    best.ok_or(TrajectoryError::EmptySeries)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent<T> {
    pub min: T,
    pub max: T,
    pub mean: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats<T> {
    pub n_samples: usize,
    pub acc: Extent<T>,
    pub speed: Extent<T>,
    pub delta_x: Extent<T>,
}

fn extent<T: Real>(values: impl Iterator<Item = T>) -> Extent<T> {
    let mut min = T::infinity();
    let mut max = T::neg_infinity();
    let mut sum = T::zero();
    let mut n = 0usize;
    for v in values {
        min = min.min(v);
        max = max.max(v);
        sum = sum + v;
        n += 1;
    }
    let mean = (sum / T::from_count(n)).max(min).min(max);
    Extent { min, max, mean }
}

/// Follower acceleration, follower speed and gap statistics.
pub fn summarize<T: Real>(series: &FollowerLeaderSeries<T>) -> Result<SeriesStats<T>, TrajectoryError> {
    if series.is_empty() {
        return Err(TrajectoryError::EmptySeries);
    }
    let f = &series.frames;
    Ok(SeriesStats {
        n_samples: f.len(),
        acc: extent(f.iter().map(|p| p.follower_acc_mps2)),
        speed: extent(f.iter().map(|p| p.follower_speed_mps)),
        delta_x: extent(f.iter().map(|p| p.delta_x_m)),
    })
}
