//! Car-following modelling toolkit.
//!
//! Reads leader/follower trajectories, cleans them, turns them into lagged
//! supervised instances and fits two competing models of follower
//! acceleration: gradient-boosted regression trees and the general GHR
//! stimulus-response model. Both are tuned and compared with time-ordered
//! cross-validation.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`.

// `!(x > 0)` rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod evaluation;
pub mod gbrt;
pub mod ghr;
pub mod nelder_mead;
pub mod real;
pub mod reconstruction;
pub mod spline;
pub mod synthetic;
pub mod trajectory_io;
pub mod tree;
mod vexp;

pub use real::Real;

pub type VehicleTrack64 = trajectory_io::VehicleTrack<f64>;
pub type Series64 = trajectory_io::FollowerLeaderSeries<f64>;
pub type InstanceSet64 = dataset::InstanceSet<f64>;
pub type RegressionTree64 = tree::RegressionTree<f64>;
pub type GbrtConfig64 = gbrt::GbrtConfig<f64>;
pub type GbrtModel64 = gbrt::GbrtModel<f64>;
pub type GhrParameters64 = ghr::GhrParameters<f64>;
pub type GridReport64 = evaluation::GridReport<f64>;
pub type ComparisonReport64 = evaluation::ComparisonReport<f64>;
