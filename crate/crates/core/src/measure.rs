//! Points and uniformly weighted empirical measures.

use crate::error::{Error, Result};

/// A point in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn zeros(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sum `f(0) + ... + f(n-1)` by recursive halving over the index range.
///
/// The association order depends only on `n`, so results are reproducible
/// no matter how the surrounding work is scheduled.
pub fn pairwise_sum<F: Fn(usize) -> f64>(n: usize, f: F) -> f64 {
    fn rec<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
        if hi - lo <= 8 {
            let mut s = 0.0;
            for i in lo..hi {
                s += f(i);
            }
            s
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    if n == 0 {
        0.0
    } else {
        rec(0, n, &f)
    }
}

/// Uniform probability measure on a finite multiset of points, stored as a
/// row-major `n x dim` buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    data: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::usage("measure dimension must be at least 1"));
        }
        if data.is_empty() {
            return Err(Error::usage("empirical measure needs at least one point"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::usage(format!(
                "buffer of length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        Ok(EmpiricalMeasure { dim, data })
    }

    pub fn from_points(points: &[Point]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::usage("empirical measure needs at least one point"))?;
        let dim = first.dim();
        let mut data = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.dim() != dim {
                return Err(Error::usage(format!(
                    "point of dimension {} in a measure of dimension {dim}",
                    p.dim()
                )));
            }
            data.extend_from_slice(p.coords());
        }
        Self::from_flat(dim, data)
    }

    /// Scalar samples as a 1-D measure.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::from_flat(1, values.to_vec())
    }

    /// Point mass at `p`.
    pub fn dirac(p: &Point) -> Result<Self> {
        Self::from_flat(p.dim(), p.coords().to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    /// Coordinate-wise mean, written into `out`.
    pub fn mean_into(&self, out: &mut [f64]) {
        let n = self.len();
        let d = self.dim;
        for (k, o) in out.iter_mut().enumerate().take(d) {
            *o = pairwise_sum(n, |i| self.data[i * d + k]) / n as f64;
        }
    }

    /// Projection onto coordinate `k`.
    pub fn coordinate(&self, k: usize) -> Vec<f64> {
        self.points().map(|p| p[k]).collect()
    }

    /// Second moment `(1/n) sum |x_i|^2`.
    pub fn second_moment(&self) -> f64 {
        let d = self.dim;
        pairwise_sum(self.len(), |i| {
            let p = &self.data[i * d..(i + 1) * d];
            p.iter().map(|c| c * c).sum()
        }) / self.len() as f64
    }
}

/// Arithmetic mean of the points of `m`.
pub fn empirical_mean(m: &EmpiricalMeasure) -> Result<Point> {
    if m.is_empty() {
        return Err(Error::usage("mean of an empty measure"));
    }
    let mut out = vec![0.0; m.dim()];
    m.mean_into(&mut out);
    Ok(Point(out))
}
