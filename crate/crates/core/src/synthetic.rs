//! Leader/follower trajectory files generated from known dynamics.
//!
//! The follower obeys the GHR law with a fixed delay of `τ`:
//!
//! ```text
//! a_F[j]   = α · v_F[j]^m · Δv[j−k] / Δx[j−k]^l + ε_j      (j ≥ k = τ/dt)
//! v_F[j+1] = max(0, v_F[j] + dt · a_F[j])
//! x[j+1]   = x[j] + dt · (v[j] + v[j+1]) / 2
//! ```
//!
//! Before the first full delay (`j < k`) the follower cruises with zero
//! acceleration. Noise `ε` is Gaussian: a `ChaCha8Rng` seeded with
//! `seed_from_u64(seed)` drives `rand_distr::StandardNormal` (ziggurat), one
//! draw per frame `j ≥ k`, and only when the standard deviation is positive.
//! Both algorithms are portable and pinned by `Cargo.lock`, so a given spec
//! produces the same bytes on every platform.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, ReactionTime};
use crate::ghr::GhrCoefficients;
use crate::real::{Real, FRAME_SECONDS};
use crate::trajectory_io::{
    write_trajectory_csv, ColumnSchema, LengthUnit, TrajectoryError, TrajectorySample, VehicleClass,
    VehicleTrack,
};

pub const LEADER_ID: i64 = 1;
pub const FOLLOWER_ID: i64 = 2;
/// The follower is never placed closer than this to its leader.
pub const MIN_GAP_M: f64 = 0.5;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Tau(#[from] DatasetError),
    #[error("frame {0} not present for the selected vehicle")]
    FrameOutOfRange(i64),
    #[error("row {row}: {reason}")]
    Malformed { row: usize, reason: String },
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GeneratorKind<T> {
    GhrDynamics {
        ghr: GhrCoefficients<T>,
    },
    /// `near` applies while the delayed gap is below `gap_threshold_m`.
    RegimeSwitch {
        near: GhrCoefficients<T>,
        far: GhrCoefficients<T>,
        gap_threshold_m: T,
    },
}

impl<T: Real> GeneratorKind<T> {
    fn coefficients(&self, delayed_gap: T) -> &GhrCoefficients<T> {
        match self {
            GeneratorKind::GhrDynamics { ghr } => ghr,
            GeneratorKind::RegimeSwitch {
                near,
                far,
                gap_threshold_m,
            } => {
                if delayed_gap < *gap_threshold_m {
                    near
                } else {
                    far
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum LeaderShape<T> {
    Constant,
    Sinusoidal { amplitude_mps: T, period_s: T },
    /// Linear ramp from `base − amplitude` to `base + amplitude`, then a drop.
    Sawtooth { amplitude_mps: T, period_s: T },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeaderProfile<T> {
    pub base_speed_mps: T,
    pub shape: LeaderShape<T>,
}

impl<T: Real> LeaderProfile<T> {
    /// Leader speed at time `t`, never negative.
    pub fn speed_at(&self, t: T) -> T {
        let v = match self.shape {
            LeaderShape::Constant => self.base_speed_mps,
            LeaderShape::Sinusoidal {
                amplitude_mps,
                period_s,
            } => self.base_speed_mps + amplitude_mps * (T::lit(2.0 * PI) * t / period_s).sin(),
            LeaderShape::Sawtooth {
                amplitude_mps,
                period_s,
            } => {
                let phase = t / period_s - (t / period_s).floor();
                self.base_speed_mps + amplitude_mps * (T::lit(2.0) * phase - T::one())
            }
        };
        v.max(T::zero())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec<T> {
    pub kind: GeneratorKind<T>,
    pub tau_s: f64,
    pub leader: LeaderProfile<T>,
    /// Defaults to the leader's speed at time zero when absent.
    pub follower_initial_speed_mps: Option<T>,
    pub duration_s: T,
    pub dt_s: T,
    pub initial_gap_m: T,
    pub noise_std_mps2: T,
    pub seed: u64,
}

impl<T: Real> GeneratorSpec<T> {
    /// Noise-free GHR follower behind a sinusoidal leader.
    pub fn ghr(alpha: T, m: T, l: T, tau_s: f64) -> Self {
        Self {
            kind: GeneratorKind::GhrDynamics {
                ghr: GhrCoefficients::new(alpha, m, l),
            },
            tau_s,
            leader: LeaderProfile {
                base_speed_mps: T::lit(15.0),
                shape: LeaderShape::Sinusoidal {
                    amplitude_mps: T::lit(2.0),
                    period_s: T::lit(30.0),
                },
            },
            follower_initial_speed_mps: None,
            duration_s: T::lit(120.0),
            dt_s: T::lit(FRAME_SECONDS),
            initial_gap_m: T::lit(20.0),
            noise_std_mps2: T::zero(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |msg: &str| Err(SyntheticError::InvalidSpec(msg.to_string()));
        if !(self.duration_s >= T::lit(10.0)) {
            return bad("duration must be at least 10 s");
        }
        if (self.dt_s.as_f64() - FRAME_SECONDS).abs() > 1e-12 {
            return bad("time step must be 0.1 s");
        }
        if !(self.initial_gap_m > T::zero()) {
            return bad("initial gap must be positive");
        }
        if !(self.noise_std_mps2 >= T::zero()) {
            return bad("noise standard deviation must be non-negative");
        }
        if !(self.leader.base_speed_mps >= T::zero()) {
            return bad("leader base speed must be non-negative");
        }
        if let LeaderShape::Sinusoidal { period_s, .. } | LeaderShape::Sawtooth { period_s, .. } =
            self.leader.shape
        {
            if !(period_s > T::zero()) {
                return bad("leader period must be positive");
            }
        }
        if let Some(v) = self.follower_initial_speed_mps {
            if !(v >= T::zero()) {
                return bad("follower initial speed must be non-negative");
            }
        }
        ReactionTime::from_seconds(self.tau_s)?;
        Ok(())
    }

    pub fn n_frames(&self) -> usize {
        (self.duration_s / self.dt_s).round().to_usize().unwrap_or(0) + 1
    }
}

/// What the generator knows about the file it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorTruth<T> {
    pub spec: GeneratorSpec<T>,
    /// Leader position minus follower position per frame.
    pub gaps_m: Vec<T>,
    /// Set when the follower had to be held at the minimum gap.
    pub contact_reached: bool,
    pub contact_frames: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated<T> {
    pub csv: Vec<u8>,
    pub tracks: Vec<VehicleTrack<T>>,
    pub truth: GeneratorTruth<T>,
}

fn sample<T: Real>(vehicle_id: i64, preceding_id: i64, j: usize, dt: T, x: T, v: T, a: T) -> TrajectorySample<T> {
    TrajectorySample {
        frame_index: j as i64,
        time_s: T::from_count(j) * dt,
        position_m: x,
        speed_mps: v,
        acc_mps2: a,
        vehicle_id,
        preceding_id,
        lane_id: 1,
    }
}

/// Simulates the leader and follower and renders them as an NGSIM-style
/// file (leader id 1, follower id 2, metres).
pub fn generate<T: Real>(spec: &GeneratorSpec<T>) -> Result<Generated<T>, SyntheticError> {
    spec.validate()?;
    let n = spec.n_frames();
    let lag = ReactionTime::from_seconds(spec.tau_s)?.steps() as usize;
    let dt = spec.dt_s;
    let half = T::lit(0.5);
    let min_gap = T::lit(MIN_GAP_M);

    let v_lead: Vec<T> = (0..n)
        .map(|j| spec.leader.speed_at(T::from_count(j) * dt))
        .collect();
    let mut x_lead = vec![spec.initial_gap_m; n];
    for j in 1..n {
        x_lead[j] = x_lead[j - 1] + dt * (v_lead[j - 1] + v_lead[j]) * half;
    }
    let mut a_lead: Vec<T> = v_lead.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    a_lead.push(a_lead.last().copied().unwrap_or_else(T::zero));

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noisy = spec.noise_std_mps2 > T::zero();
    let mut v_f = vec![T::zero(); n];
    let mut x_f = vec![T::zero(); n];
    let mut a_f = vec![T::zero(); n];
    let mut gaps = vec![T::zero(); n];
    let mut contact_frames = 0;
    v_f[0] = spec.follower_initial_speed_mps.unwrap_or(v_lead[0]);

    for j in 0..n {
        if j > 0 {
            v_f[j] = (v_f[j - 1] + dt * a_f[j - 1]).max(T::zero());
            x_f[j] = x_f[j - 1] + dt * (v_f[j - 1] + v_f[j]) * half;
        }
        if x_lead[j] - x_f[j] < min_gap {
            x_f[j] = x_lead[j] - min_gap;
            contact_frames += 1;
        }
        gaps[j] = x_lead[j] - x_f[j];
        if j >= lag {
            let s = j - lag;
            let dv = v_lead[s] - v_f[s];
            let coeffs = spec.kind.coefficients(gaps[s]);
            let mut a = coeffs.predict(v_f[j], dv, gaps[s]);
            if noisy {
                let z: f64 = StandardNormal.sample(&mut rng);
                a = a + spec.noise_std_mps2 * T::lit(z);
            }
            a_f[j] = a;
        }
    }

    let leader = VehicleTrack {
        vehicle_id: LEADER_ID,
        vehicle_class: VehicleClass::Auto,
        samples: (0..n)
            .map(|j| sample(LEADER_ID, 0, j, dt, x_lead[j], v_lead[j], a_lead[j]))
            .collect(),
    };
    let follower = VehicleTrack {
        vehicle_id: FOLLOWER_ID,
        vehicle_class: VehicleClass::Auto,
        samples: (0..n)
            .map(|j| sample(FOLLOWER_ID, LEADER_ID, j, dt, x_f[j], v_f[j], a_f[j]))
            .collect(),
    };
    let tracks = vec![leader, follower];
    let mut csv = Vec::new();
    write_trajectory_csv(&tracks, &mut csv, &ColumnSchema::default(), LengthUnit::Meters)?;
    Ok(Generated {
        csv,
        tracks,
        truth: GeneratorTruth {
            spec: *spec,
            gaps_m: gaps,
            contact_reached: contact_frames > 0,
            contact_frames,
        },
    })
}

/// Adds `magnitude` to the acceleration of `vehicle_id` at each listed frame
/// and shifts its position by `−magnitude·dt²/2`, the displacement such a
/// one-frame kick would leave in the second difference. Other cells are
/// copied verbatim.
pub fn inject_spikes(
    csv_bytes: &[u8],
    vehicle_id: i64,
    frames: &BTreeSet<i64>,
    magnitude: f64,
) -> Result<Vec<u8>, SyntheticError> {
    if frames.is_empty() {
        return Ok(csv_bytes.to_vec());
    }
    let schema = ColumnSchema::default();
    let mut reader = csv::ReaderBuilder::new().from_reader(csv_bytes);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| SyntheticError::Trajectory(TrajectoryError::Schema(name.to_string())))
    };
    let (c_id, c_frame) = (column(&schema.vehicle_id)?, column(&schema.frame)?);
    let (c_pos, c_acc) = (column(&schema.position)?, column(&schema.acceleration)?);
    let shift = magnitude * FRAME_SECONDS * FRAME_SECONDS / 2.0;

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(&headers)?;
    let mut seen = BTreeSet::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let num = |c: usize| -> Result<f64, SyntheticError> {
            let cell = record.get(c).unwrap_or("").trim();
            cell.parse().map_err(|_| SyntheticError::Malformed {
                row,
                reason: format!("cannot parse `{cell}`"),
            })
        };
        let id = num(c_id)? as i64;
        let frame = num(c_frame)? as i64;
        if id != vehicle_id || !frames.contains(&frame) {
            writer.write_record(&record)?;
            continue;
        }
        seen.insert(frame);
        let mut cells: Vec<String> = record.iter().map(str::to_string).collect();
        cells[c_acc] = (num(c_acc)? + magnitude).to_string();
        cells[c_pos] = (num(c_pos)? - shift).to_string();
        writer.write_record(&cells)?;
    }
    if let Some(&missing) = frames.iter().find(|f| !seen.contains(f)) {
        return Err(SyntheticError::FrameOutOfRange(missing));
    }
    writer.into_inner().map_err(|e| SyntheticError::Malformed {
        row: 0,
        reason: e.to_string(),
    })
}
