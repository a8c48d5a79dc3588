//! Natural cubic spline through a set of knots.

use crate::real::Real;

/// Interpolating cubic spline with zero second derivative at both ends.
///
/// Outside the knot range the spline continues along its end tangent, which
/// is the extension that keeps the second derivative at zero.
#[derive(Debug, Clone)]
pub struct NaturalCubicSpline<T> {
    knots: Vec<T>,
    values: Vec<T>,
    second: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SplineError {
    #[error("a spline needs at least two knots, got {0}")]
    TooFewKnots(usize),
    #[error("knot and value counts differ ({knots} vs {values})")]
    LengthMismatch { knots: usize, values: usize },
    #[error("knots must be strictly increasing")]
    UnorderedKnots,
}

impl<T: Real> NaturalCubicSpline<T> {
    pub fn new(knots: &[T], values: &[T]) -> Result<Self, SplineError> {
        let n = knots.len();
        if n != values.len() {
            return Err(SplineError::LengthMismatch {
                knots: n,
                values: values.len(),
            });
        }
        if n < 2 {
            return Err(SplineError::TooFewKnots(n));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SplineError::UnorderedKnots);
        }

        let mut second = vec![T::zero(); n];
        if n > 2 {
            // Thomas algorithm on the interior second derivatives.
            let m = n - 2;
            let h: Vec<T> = knots.windows(2).map(|w| w[1] - w[0]).collect();
            let two = T::lit(2.0);
            let six = T::lit(6.0);
            let mut diag = vec![T::zero(); m];
            let mut rhs = vec![T::zero(); m];
            for i in 0..m {
                diag[i] = two * (h[i] + h[i + 1]);
                rhs[i] = six
                    * ((values[i + 2] - values[i + 1]) / h[i + 1]
                        - (values[i + 1] - values[i]) / h[i]);
            }
            for i in 1..m {
                let w = h[i] / diag[i - 1];
                diag[i] = diag[i] - w * h[i];
                rhs[i] = rhs[i] - w * rhs[i - 1];
            }
            second[m] = rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                second[i + 1] = (rhs[i] - h[i + 1] * second[i + 2]) / diag[i];
            }
        }
        Ok(Self {
            knots: knots.to_vec(),
            values: values.to_vec(),
            second,
        })
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    /// Second derivatives at the knots.
    pub fn second_derivatives(&self) -> &[T] {
        &self.second
    }

    pub fn evaluate(&self, t: T) -> T {
        let n = self.knots.len();
        let six = T::lit(6.0);
        if t < self.knots[0] {
            return self.values[0] + self.end_slope(false) * (t - self.knots[0]);
        }
        if t > self.knots[n - 1] {
            return self.values[n - 1] + self.end_slope(true) * (t - self.knots[n - 1]);
        }
        // interval i with knots[i] <= t <= knots[i + 1]
        let i = match self.knots.partition_point(|&k| k <= t) {
            0 => 0,
            p => (p - 1).min(n - 2),
        };
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        let h = x1 - x0;
        let a = x1 - t;
        let b = t - x0;
        m0 * a * a * a / (six * h)
            + m1 * b * b * b / (six * h)
            + (y0 / h - m0 * h / six) * a
            + (y1 / h - m1 * h / six) * b
    }

    fn end_slope(&self, right: bool) -> T {
        let n = self.knots.len();
        let six = T::lit(6.0);
        if right {
            let h = self.knots[n - 1] - self.knots[n - 2];
            (self.values[n - 1] - self.values[n - 2]) / h + h * self.second[n - 2] / six
        } else {
            let h = self.knots[1] - self.knots[0];
            (self.values[1] - self.values[0]) / h - h * self.second[1] / six
        }
    }
}
