//! Piecewise-linear interpolation on a strictly ascending, non-uniform grid.
//!
//! Lookups are O(1) on average: a uniform bucket index narrows the search to
//! the knots overlapping one bucket before a binary search.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct PiecewiseLinear {
    x: Vec<f64>,
    y: Vec<f64>,
    lo: f64,
    hi: f64,
    inv_width: f64,
    /// `bucket_start[k]` is the last knot index whose abscissa is `<=` the
    /// left edge of bucket `k`.
    bucket_start: Vec<usize>,
}

impl PiecewiseLinear {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "interpolant needs >= 2 matching samples, got {} and {}",
                x.len(),
                y.len()
            )));
        }
        if let Some(i) = x.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(format!(
                "abscissae not strictly ascending at index {}",
                i + 1
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite interpolant sample".into()));
        }
        let lo = x[0];
        let hi = x[x.len() - 1];
        let n_buckets = 2 * x.len();
        let inv_width = n_buckets as f64 / (hi - lo);
        let mut bucket_start = Vec::with_capacity(n_buckets + 1);
        let mut j = 0;
        for k in 0..=n_buckets {
            let edge = lo + k as f64 / inv_width;
            while j + 1 < x.len() - 1 && x[j + 1] <= edge {
                j += 1;
            }
            bucket_start.push(j);
        }
        Ok(PiecewiseLinear {
            x,
            y,
            lo,
            hi,
            inv_width,
            bucket_start,
        })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn xs(&self) -> &[f64] {
        &self.x
    }

    pub fn ys(&self) -> &[f64] {
        &self.y
    }

    /// Value at `v`, or `None` outside `[lo, hi]`.
    #[inline]
    pub fn eval(&self, v: f64) -> Option<f64> {
        if !(v >= self.lo && v <= self.hi) {
            return None;
        }
        let i = self.segment(v);
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        Some(y0 + (y1 - y0) * ((v - x0) / (x1 - x0)))
    }

    /// Index `i` of the segment `[x[i], x[i+1]]` containing `v`.
    #[inline]
    fn segment(&self, v: f64) -> usize {
        let k = (((v - self.lo) * self.inv_width) as usize).min(self.bucket_start.len() - 2);
        let start = self.bucket_start[k];
        let end = (self.bucket_start[k + 1] + 1).min(self.x.len() - 1);
        let window = &self.x[start + 1..=end];
        // first knot strictly greater than v, relative to start + 1
        let off = window.partition_point(|&xk| xk <= v);
        (start + off).min(self.x.len() - 2)
    }
}
