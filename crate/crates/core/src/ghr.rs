//! General GHR stimulus-response model and its box-constrained least-squares
//! calibration.
//!
//! ```text
//! acc(t+τ) = α · v(t+τ)^m · Δv(t) / Δx(t)^l
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{CarFollowingInstance, InstanceSet};
use crate::nelder_mead::{minimize_in_box, NelderMeadOptions};
use crate::real::Real;

/// Gaps below this are clamped before evaluating the model.
pub const MIN_GAP_M: f64 = 0.1;
/// Starts per parameter axis of the multi-start grid.
pub const GRID_POINTS_PER_AXIS: usize = 7;

#[derive(Debug, Error, PartialEq)]
pub enum GhrError {
    #[error("no training instances")]
    EmptyTraining,
    #[error("lower bound exceeds upper bound on axis {0}")]
    InvalidBounds(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GhrCoefficients<T> {
    pub alpha: T,
    #[serde(rename = "m")]
    pub m_exp: T,
    #[serde(rename = "l")]
    pub l_exp: T,
}

impl<T: Real> GhrCoefficients<T> {
    pub fn new(alpha: T, m_exp: T, l_exp: T) -> Self {
        Self { alpha, m_exp, l_exp }
    }

    fn from_slice(p: &[T]) -> Self {
        Self::new(p[0], p[1], p[2])
    }

    pub fn as_array(&self) -> [T; 3] {
        [self.alpha, self.m_exp, self.l_exp]
    }

    /// Model acceleration; gaps below 0.1 m are clamped and `0^0 = 1`.
    pub fn predict(&self, v_resp: T, delta_v: T, delta_x: T) -> T {
        self.predict_checked(v_resp, delta_v, delta_x).0
    }

    /// Prediction plus whether the gap had to be clamped.
    pub fn predict_checked(&self, v_resp: T, delta_v: T, delta_x: T) -> (T, bool) {
        let min_gap = T::lit(MIN_GAP_M);
        let clamped = delta_x < min_gap;
        let gap = if clamped { min_gap } else { delta_x };
        let speed_term = if v_resp == T::zero() && self.m_exp == T::zero() {
            T::one()
        } else {
            v_resp.powf(self.m_exp)
        };
        (self.alpha * speed_term * delta_v / gap.powf(self.l_exp), clamped)
    }

    pub fn predict_instance(&self, inst: &CarFollowingInstance<T>) -> T {
        self.predict(inst.features[0], inst.features[1], inst.features[2])
    }
}

/// Same as [`GhrCoefficients::predict`].
pub fn ghr_predict<T: Real>(coeffs: &GhrCoefficients<T>, v_resp: T, delta_v: T, delta_x: T) -> T {
    coeffs.predict(v_resp, delta_v, delta_x)
}

/// Predictions for a whole set and the number of clamped gaps.
pub fn predict_set<T: Real>(coeffs: &GhrCoefficients<T>, set: &InstanceSet<T>) -> (Vec<T>, usize) {
    let mut clamped = 0;
    let values = set
        .instances
        .iter()
        .map(|i| {
            let (v, c) = coeffs.predict_checked(i.features[0], i.features[1], i.features[2]);
            clamped += usize::from(c);
            v
        })
        .collect();
    (values, clamped)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimizerReport {
    pub n_starts: usize,
    pub n_evals: usize,
    pub converged: bool,
    /// Set when `Δv ≡ 0` makes the objective independent of the parameters.
    #[serde(default)]
    pub flat_landscape: bool,
}

/// Calibrated model: coefficients, the reaction time of the data they were
/// fitted on and optimiser diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GhrParameters<T> {
    pub alpha: T,
    #[serde(rename = "m")]
    pub m_exp: T,
    #[serde(rename = "l")]
    pub l_exp: T,
    pub tau_s: f64,
    /// Sum of squared errors on the calibration data.
    pub objective: T,
    pub optimizer_report: OptimizerReport,
}

impl<T: Real> GhrParameters<T> {
    pub fn coefficients(&self) -> GhrCoefficients<T> {
        GhrCoefficients::new(self.alpha, self.m_exp, self.l_exp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GhrBounds<T> {
    pub lower: [T; 3],
    pub upper: [T; 3],
}

impl<T: Real> Default for GhrBounds<T> {
    fn default() -> Self {
        Self {
            lower: [T::zero(); 3],
            upper: [T::lit(3.0); 3],
        }
    }
}

/// Per-instance terms precomputed in log space so one objective evaluation
/// costs a single `exp` per instance. Stored column-wise so the exponent and
/// `exp` passes vectorise.
struct Objective<T> {
    response: Vec<T>,
    delta_v: Vec<T>,
    /// `ln v`, or zero where the speed is zero.
    ln_speed: Vec<T>,
    ln_gap: Vec<T>,
    /// 1 where the speed is positive, 0 where it is zero.
    moving: Vec<T>,
    all_moving: bool,
}

/// Independent partial sums, combined in a fixed order.
const LANES: usize = 4;

impl<T: Real> Objective<T> {
    fn new(train: &InstanceSet<T>) -> Self {
        let min_gap = T::lit(MIN_GAP_M);
        let f = |k: usize| -> Vec<T> { train.instances.iter().map(|i| i.features[k]).collect() };
        let speeds = f(0);
        Self {
            response: train.responses(),
            delta_v: f(1),
            ln_speed: speeds
                .iter()
                .map(|&v| if v > T::zero() { v.ln() } else { T::zero() })
                .collect(),
            ln_gap: f(2).iter().map(|&g| g.max(min_gap).ln()).collect(),
            moving: speeds
                .iter()
                .map(|&v| if v > T::zero() { T::one() } else { T::zero() })
                .collect(),
            all_moving: speeds.iter().all(|&v| v > T::zero()),
        }
    }

    fn eval(&self, c: &GhrCoefficients<T>) -> T {
        self.eval_with(c, &mut Vec::new())
    }

    /// `scratch` is reused between calls to avoid reallocating. The body is
    /// compiled per instruction set and picked at runtime. It has no fused
    /// operations, so every variant returns the same bits.
    fn eval_with(&self, c: &GhrCoefficients<T>, scratch: &mut Vec<T>) -> T {
        #[cfg(target_arch = "x86_64")]
        {
            #[target_feature(enable = "avx512f")]
            fn avx512<T: Real>(o: &Objective<T>, c: &GhrCoefficients<T>, s: &mut Vec<T>) -> T {
                o.eval_body(c, s)
            }
            #[target_feature(enable = "avx2")]
            fn avx2<T: Real>(o: &Objective<T>, c: &GhrCoefficients<T>, s: &mut Vec<T>) -> T {
                o.eval_body(c, s)
            }
            if std::arch::is_x86_feature_detected!("avx512f") {
                // SAFETY: the required CPU feature was detected at runtime.
                return unsafe { avx512(self, c, scratch) };
            }
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: as above.
                return unsafe { avx2(self, c, scratch) };
            }
        }
        self.eval_body(c, scratch)
    }

    #[inline(always)]
    fn eval_body(&self, c: &GhrCoefficients<T>, scratch: &mut Vec<T>) -> T {
        scratch.clear();
        scratch.extend(
            self.ln_speed
                .iter()
                .zip(&self.ln_gap)
                .map(|(&ls, &lg)| c.m_exp * ls - c.l_exp * lg),
        );
        T::exp_in_place(scratch);
        // 0^0 = 1, 0^m = 0 for m > 0
        if !self.all_moving && c.m_exp != T::zero() {
            for (s, &w) in scratch.iter_mut().zip(&self.moving) {
                *s = *s * w;
            }
        }
        let err = |s: T, dv: T, y: T| c.alpha * s * dv - y;
        let chunks = scratch.chunks_exact(LANES);
        let dv_chunks = self.delta_v.chunks_exact(LANES);
        let y_chunks = self.response.chunks_exact(LANES);
        let tail = chunks.remainder().iter().zip(dv_chunks.remainder()).zip(y_chunks.remainder());
        let mut acc = [T::zero(); LANES];
        for ((s, dv), y) in chunks.zip(dv_chunks).zip(y_chunks) {
            for lane in 0..LANES {
                let e = err(s[lane], dv[lane], y[lane]);
                acc[lane] = acc[lane] + e * e;
            }
        }
        let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
        for ((&s, &dv), &y) in tail {
            let e = err(s, dv, y);
            sum = sum + e * e;
        }
        sum
    }
}

/// Sum of squared acceleration errors over the training instances.
pub fn ghr_objective<T: Real>(coeffs: &GhrCoefficients<T>, train: &InstanceSet<T>) -> Result<T, GhrError> {
    if train.is_empty() {
        return Err(GhrError::EmptyTraining);
    }
    Ok(Objective::new(train).eval(coeffs))
}

/// The 7×7×7 uniform start grid over the box.
pub fn start_grid<T: Real>(bounds: &GhrBounds<T>) -> Vec<GhrCoefficients<T>> {
    let steps = T::from_count(GRID_POINTS_PER_AXIS - 1);
    let axis = |d: usize| -> Vec<T> {
        (0..GRID_POINTS_PER_AXIS)
            .map(|i| {
                bounds.lower[d] + (bounds.upper[d] - bounds.lower[d]) * T::from_count(i) / steps
            })
            .collect()
    };
    let (a, m, l) = (axis(0), axis(1), axis(2));
    let mut out = Vec::with_capacity(a.len() * m.len() * l.len());
    for &alpha in &a {
        for &m_exp in &m {
            for &l_exp in &l {
                out.push(GhrCoefficients::new(alpha, m_exp, l_exp));
            }
        }
    }
    out
}

fn lexicographic_less<T: Real>(a: &[T; 3], b: &[T; 3]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// Multi-start simplex calibration of `(α, m, l)` inside `bounds`.
///
/// Every point of the start grid is refined by a box-projected simplex
/// search; the best refined point wins (lexicographically smallest
/// parameters on ties). Starts run on the current rayon pool.
pub fn calibrate_ghr<T: Real>(train: &InstanceSet<T>, bounds: &GhrBounds<T>) -> Result<GhrParameters<T>, GhrError> {
    calibrate_ghr_with(train, bounds, &NelderMeadOptions::default())
}

pub fn calibrate_ghr_with<T: Real>(
    train: &InstanceSet<T>,
    bounds: &GhrBounds<T>,
    opts: &NelderMeadOptions<T>,
) -> Result<GhrParameters<T>, GhrError> {
    if train.is_empty() {
        return Err(GhrError::EmptyTraining);
    }
    for d in 0..3 {
        if !(bounds.lower[d] <= bounds.upper[d]) {
            return Err(GhrError::InvalidBounds(d));
        }
    }
    let objective = Objective::new(train);
    if train.instances.iter().all(|i| i.features[1] == T::zero()) {
        let at = GhrCoefficients::from_slice(&bounds.lower);
        return Ok(GhrParameters {
            alpha: at.alpha,
            m_exp: at.m_exp,
            l_exp: at.l_exp,
            tau_s: train.tau_s(),
            objective: objective.eval(&at),
            optimizer_report: OptimizerReport {
                n_starts: 0,
                n_evals: 1,
                converged: false,
                flat_landscape: true,
            },
        });
    }

    let starts = start_grid(bounds);
    let results: Vec<_> = starts
        .par_iter()
        .map(|s| {
            let mut scratch = Vec::with_capacity(train.len());
            minimize_in_box(
                |p| objective.eval_with(&GhrCoefficients::from_slice(p), &mut scratch),
                &s.as_array(),
                &bounds.lower,
                &bounds.upper,
                opts,
            )
        })
        .collect();

    let n_evals = results.iter().map(|r| r.n_evals).sum();
    let mut best = &results[0];
    for r in &results[1..] {
        let (rx, bx) = ([r.x[0], r.x[1], r.x[2]], [best.x[0], best.x[1], best.x[2]]);
        if r.f < best.f || (r.f == best.f && lexicographic_less(&rx, &bx)) {
            best = r;
        }
    }
    Ok(GhrParameters {
        alpha: best.x[0],
        m_exp: best.x[1],
        l_exp: best.x[2],
        tau_s: train.tau_s(),
        objective: best.f,
        optimizer_report: OptimizerReport {
            n_starts: starts.len(),
            n_evals,
            converged: best.converged,
            flat_landscape: false,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ReactionTime;

    fn set_from(rows: &[(f64, f64, f64, f64)]) -> InstanceSet<f64> {
        InstanceSet {
            instances: rows
                .iter()
                .enumerate()
                .map(|(i, &(y, v, dv, dx))| CarFollowingInstance {
                    t_index: i as i64,
                    response_acc_mps2: y,
                    features: [v, dv, dx],
                })
                .collect(),
            tau: ReactionTime::from_steps(5).unwrap(),
            source_name: "t".into(),
        }
    }

    #[test]
    fn prediction_cases() {
        let c = GhrCoefficients::new(1.5f64, 1.0, 1.0);
        assert_eq!(c.predict(10.0, 0.0, 20.0), 0.0);
        assert!((c.predict(10.0, 2.0, 20.0) - 1.5).abs() < 1e-12);
        let unit = GhrCoefficients::new(1.0, 0.0, 0.0);
        assert_eq!(unit.predict(7.0, -0.7, 13.0), -0.7);
        // 0^0 = 1
        assert_eq!(unit.predict(0.0, 2.0, 5.0), 2.0);
        assert_eq!(GhrCoefficients::new(1.0, 1.0, 0.0).predict(0.0, 2.0, 5.0), 0.0);
        let (v, clamped) = GhrCoefficients::new(1.0f64, 0.0, 1.0).predict_checked(1.0, 1.0, 0.01);
        assert!(clamped);
        assert!((v - 10.0).abs() < 1e-12);
    }

    #[test]
    fn objective_zero_at_generating_parameters() {
        let c = GhrCoefficients::new(1.2, 0.8, 1.5);
        let rows: Vec<_> = (0..50)
            .map(|i| {
                let v = 5.0 + (i as f64 * 0.3).sin();
                let dv = (i as f64 * 0.17).cos();
                let dx = 15.0 + 3.0 * (i as f64 * 0.05).sin();
                (c.predict(v, dv, dx), v, dv, dx)
            })
            .collect();
        let set = set_from(&rows);
        assert!(ghr_objective(&c, &set).unwrap() < 1e-24);
    }

    #[test]
    fn flat_landscape_objective_is_zero() {
        let set = set_from(&[(0.0, 3.0, 0.0, 10.0), (0.0, 4.0, 0.0, 12.0)]);
        for c in start_grid(&GhrBounds::default()).iter().step_by(17) {
            assert_eq!(ghr_objective(c, &set).unwrap(), 0.0);
        }
        let p = calibrate_ghr(&set, &GhrBounds::default()).unwrap();
        assert!(p.optimizer_report.flat_landscape);
        assert!(!p.optimizer_report.converged);
        assert_eq!([p.alpha, p.m_exp, p.l_exp], [0.0; 3]);
    }

    #[test]
    fn empty_and_bad_bounds() {
        let empty = set_from(&[]);
        assert_eq!(calibrate_ghr(&empty, &GhrBounds::default()), Err(GhrError::EmptyTraining));
        assert_eq!(ghr_objective(&GhrCoefficients::new(1.0, 1.0, 1.0), &empty), Err(GhrError::EmptyTraining));
        let set = set_from(&[(0.1, 3.0, 1.0, 10.0)]);
        let bounds = GhrBounds {
            lower: [0.0, 2.0, 0.0],
            upper: [3.0, 1.0, 3.0],
        };
        assert_eq!(calibrate_ghr(&set, &bounds), Err(GhrError::InvalidBounds(1)));
    }

    #[test]
    fn start_grid_spans_the_box() {
        let g = start_grid(&GhrBounds::<f64>::default());
        assert_eq!(g.len(), 343);
        assert_eq!(g[0].as_array(), [0.0, 0.0, 0.0]);
        assert_eq!(g[342].as_array(), [3.0, 3.0, 3.0]);
        assert_eq!(g[1].as_array(), [0.0, 0.0, 0.5]);
    }

    #[test]
    fn parameters_json_field_names() {
        let p = GhrParameters {
            alpha: 1.0,
            m_exp: 0.5,
            l_exp: 2.0,
            tau_s: 0.5,
            objective: 0.25,
            optimizer_report: OptimizerReport {
                n_starts: 343,
                n_evals: 1000,
                converged: true,
                flat_landscape: false,
            },
        };
        let json = serde_json::to_value(p).unwrap();
        for key in ["alpha", "m", "l", "tau_s", "objective", "optimizer_report"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        let back: GhrParameters<f64> = serde_json::from_value(json).unwrap();
        assert_eq!(back, p);
    }
}
