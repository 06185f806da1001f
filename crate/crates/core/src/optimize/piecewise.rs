use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Continuous, non-decreasing piecewise-linear function through knots with
/// strictly increasing abscissae. Evaluation clamps outside the knot range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PiecewiseLinear {
    /// Knots must be non-decreasing in both coordinates. Repeated abscissae
    /// keep their smallest ordinate.
    pub fn monotone(points: &[(f64, f64)]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("piecewise-linear map needs a knot".into()));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::InvalidArgument("piecewise-linear knots must be finite".into()));
        }
        if points.windows(2).any(|w| w[1].0 < w[0].0 || w[1].1 < w[0].1) {
            return Err(Error::InvalidArgument("piecewise-linear knots must be non-decreasing".into()));
        }
        let mut xs: Vec<f64> = Vec::with_capacity(points.len());
        let mut ys: Vec<f64> = Vec::with_capacity(points.len());
        for &(x, y) in points {
            if xs.last() == Some(&x) {
                continue;
            }
            xs.push(x);
            ys.push(y);
        }
        Ok(PiecewiseLinear { xs, ys })
    }

    pub fn identity(lo: f64, hi: f64) -> Self {
        if lo == hi {
            PiecewiseLinear { xs: vec![lo], ys: vec![lo] }
        } else {
            PiecewiseLinear {
                xs: vec![lo, hi],
                ys: vec![lo, hi],
            }
        }
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().expect("non-empty"))
    }

    pub fn range(&self) -> (f64, f64) {
        (self.ys[0], *self.ys.last().expect("non-empty"))
    }

    /// Index of the segment `[xs[i], xs[i + 1]]` holding `x`.
    fn segment(&self, x: f64) -> Option<usize> {
        if self.xs.len() < 2 {
            return None;
        }
        let i = self.xs.partition_point(|&k| k <= x);
        Some(i.clamp(1, self.xs.len() - 1) - 1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (lo, hi) = self.domain();
        if x <= lo {
            return self.ys[0];
        }
        if x >= hi {
            return *self.ys.last().expect("non-empty");
        }
        let i = self.segment(x).expect("two knots when lo < x < hi");
        let (x0, x1, y0, y1) = (self.xs[i], self.xs[i + 1], self.ys[i], self.ys[i + 1]);
        let t = (x - x0) / (x1 - x0);
        y0 + t * (y1 - y0)
    }

    fn slope_of(&self, i: usize) -> f64 {
        (self.ys[i + 1] - self.ys[i]) / (self.xs[i + 1] - self.xs[i])
    }

    /// Slope just left of `x` (zero at or before the first knot).
    pub fn slope_left(&self, x: f64) -> f64 {
        if self.xs.len() < 2 || x <= self.xs[0] {
            return 0.0;
        }
        let i = self.xs.partition_point(|&k| k < x);
        self.slope_of(i.clamp(1, self.xs.len() - 1) - 1)
    }

    /// Slope just right of `x` (zero at or past the last knot).
    pub fn slope_right(&self, x: f64) -> f64 {
        if self.xs.len() < 2 || x >= *self.xs.last().expect("non-empty") {
            return 0.0;
        }
        let i = self.xs.partition_point(|&k| k <= x);
        self.slope_of(i.clamp(1, self.xs.len() - 1) - 1)
    }

    /// The same function restricted to `[lo, hi]` of its domain.
    pub fn restrict(&self, lo: f64, hi: f64) -> Self {
        let mut points = vec![(lo, self.eval(lo))];
        points.extend(self.knots().filter(|(x, _)| *x > lo && *x < hi));
        points.push((hi, self.eval(hi)));
        PiecewiseLinear::monotone(&points).expect("restriction of a monotone map is monotone")
    }

    /// Generalized inverse: maps `y` to the largest `x` with `f(x) = y`.
    /// The result may repeat an abscissa where `f` is flat.
    pub fn inverse_max(&self) -> Self {
        let mut xs: Vec<f64> = Vec::with_capacity(self.xs.len());
        let mut ys: Vec<f64> = Vec::with_capacity(self.xs.len());
        // A flat run becomes a vertical jump: keep its first and last knot.
        for (x, y) in self.knots() {
            let n = ys.len();
            if n >= 2 && ys[n - 1] == y && ys[n - 2] == y {
                xs[n - 1] = x;
            } else {
                ys.push(y);
                xs.push(x);
            }
        }
        PiecewiseLinear { xs: ys, ys: xs }
    }

    /// Generalized inverse: smallest `x` with `f(x) >= y`.
    pub fn inverse_min(&self, y: f64) -> f64 {
        if y <= self.ys[0] {
            return self.xs[0];
        }
        for i in 0..self.xs.len().saturating_sub(1) {
            let (y0, y1) = (self.ys[i], self.ys[i + 1]);
            if y <= y1 && y1 > y0 {
                let t = ((y - y0) / (y1 - y0)).clamp(0.0, 1.0);
                return self.xs[i] + t * (self.xs[i + 1] - self.xs[i]);
            }
        }
        let top = *self.ys.last().expect("non-empty");
        let first_top = self.ys.partition_point(|&v| v < top);
        self.xs[first_top]
    }
}
