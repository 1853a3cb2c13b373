//! Wasserstein-2 distances between uniform empirical measures.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{dist_sq, EmpiricalMeasure};
use crate::rng::{stream, Purpose};

/// Largest problem size handed to the cubic assignment solver.
pub const ASSIGNMENT_MAX_N: usize = 512;
/// Projections used when the harness falls back to the sliced distance.
pub const DEFAULT_PROJECTIONS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum W2Method {
    #[serde(rename = "quantile-1d")]
    Quantile1d,
    Assignment,
    Sliced,
}

impl W2Method {
    pub fn as_str(self) -> &'static str {
        match self {
            W2Method::Quantile1d => "quantile-1d",
            W2Method::Assignment => "assignment",
            W2Method::Sliced => "sliced",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct W2Result {
    pub value: f64,
    pub method: W2Method,
    pub n_projections: Option<usize>,
    pub ci_halfwidth: Option<f64>,
}

impl W2Result {
    fn exact(value: f64, method: W2Method) -> Self {
        W2Result {
            value,
            method,
            n_projections: None,
            ci_halfwidth: None,
        }
    }
}

fn sorted(v: &[f64]) -> Result<Vec<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::usage("transport inputs must be finite"));
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

fn sorted_sq_cost(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Exact W2 between two equal-size samples on the line (monotone coupling).
pub fn w2_1d(a: &[f64], b: &[f64]) -> Result<W2Result> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::usage("W2 of an empty sample"));
    }
    if a.len() != b.len() {
        return Err(Error::usage(format!(
            "quantile coupling needs equal sample counts, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (a, b) = (sorted(a)?, sorted(b)?);
    Ok(W2Result::exact(
        sorted_sq_cost(&a, &b).sqrt(),
        W2Method::Quantile1d,
    ))
}

/// Minimum-cost perfect matching on a dense square cost matrix
/// (shortest augmenting paths with potentials). Returns `(total, assignment)`
/// where `assignment[i]` is the column matched to row `i`.
pub fn solve_assignment(n: usize, cost: &[f64]) -> (f64, Vec<usize>) {
    debug_assert_eq!(cost.len(), n * n);
    // 1-based rows/cols; index 0 is the virtual root.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|f| *f = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    let total = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * n + j])
        .sum();
    (total, assignment)
}

/// Exact W2 between equal-size empirical measures via optimal assignment.
pub fn w2_assignment(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<W2Result> {
    if a.dim() != b.dim() {
        return Err(Error::usage("measures of different dimension"));
    }
    if a.len() != b.len() {
        return Err(Error::usage(format!(
            "assignment needs equal sample counts, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n > ASSIGNMENT_MAX_N {
        return Err(Error::usage(format!(
            "{n} points exceeds the exact solver budget of {ASSIGNMENT_MAX_N}; use the sliced distance"
        )));
    }
    if a.as_flat()
        .iter()
        .chain(b.as_flat())
        .any(|x| !x.is_finite())
    {
        return Err(Error::usage("transport inputs must be finite"));
    }
    let mut cost = Vec::with_capacity(n * n);
    for p in a.points() {
        for q in b.points() {
            cost.push(dist_sq(p, q));
        }
    }
    let (total, _) = solve_assignment(n, &cost);
    Ok(W2Result::exact(
        (total / n as f64).max(0.0).sqrt(),
        W2Method::Assignment,
    ))
}

/// Step-function quantiles of a sorted sample at the `k` midpoint levels
/// `(j + 1/2) / k`.
fn resample_quantiles(sorted: &[f64], k: usize) -> Vec<f64> {
    let n = sorted.len();
    (0..k)
        .map(|j| {
            let q = (j as f64 + 0.5) / k as f64;
            let idx = ((q * n as f64).floor() as usize).min(n - 1);
            sorted[idx]
        })
        .collect()
}

/// Sliced W2: root-mean over random directions of the squared 1-D distance
/// between projections. Sample sizes may differ; the smaller projected
/// sample is resampled through its quantile function.
pub fn w2_sliced(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    n_proj: usize,
    seed: u64,
) -> Result<W2Result> {
    if n_proj == 0 {
        return Err(Error::usage("sliced W2 needs at least one projection"));
    }
    if a.dim() != b.dim() {
        return Err(Error::usage("measures of different dimension"));
    }
    let d = a.dim();
    let mut rng = stream(seed, Purpose::Projections, 0, 0);
    let dirs: Vec<Vec<f64>> = (0..n_proj)
        .map(|_| loop {
            let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let nrm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            if nrm > 1e-12 {
                break v.into_iter().map(|c| c / nrm).collect();
            }
        })
        .collect();
    let k = a.len().max(b.len());
    let project = |m: &EmpiricalMeasure, dir: &[f64]| -> Result<Vec<f64>> {
        let proj: Vec<f64> = m
            .points()
            .map(|p| p.iter().zip(dir).map(|(x, w)| x * w).sum())
            .collect();
        let s = sorted(&proj)?;
        Ok(if s.len() == k {
            s
        } else {
            resample_quantiles(&s, k)
        })
    };
    let squares: Vec<f64> = dirs
        .par_iter()
        .map(|dir| Ok(sorted_sq_cost(&project(a, dir)?, &project(b, dir)?)))
        .collect::<Result<Vec<f64>>>()?;
    let mean = squares.iter().sum::<f64>() / n_proj as f64;
    let value = mean.max(0.0).sqrt();
    let ci = if n_proj > 1 {
        let var =
            squares.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n_proj - 1) as f64;
        let se_sq = (var / n_proj as f64).sqrt();
        // delta method for the square root
        if value > 0.0 {
            1.96 * se_sq / (2.0 * value)
        } else {
            0.0
        }
    } else {
        0.0
    };
    Ok(W2Result {
        value,
        method: W2Method::Sliced,
        n_projections: Some(n_proj),
        ci_halfwidth: Some(ci),
    })
}

/// Method the harness uses for a given dimension and sample size.
pub fn select_method(dim: usize, n: usize) -> W2Method {
    if dim == 1 {
        W2Method::Quantile1d
    } else if n <= ASSIGNMENT_MAX_N {
        W2Method::Assignment
    } else {
        W2Method::Sliced
    }
}

/// W2 with the auto-selected method. Exact methods need equal sizes.
pub fn w2_auto(a: &EmpiricalMeasure, b: &EmpiricalMeasure, seed: u64) -> Result<W2Result> {
    if a.dim() != b.dim() {
        return Err(Error::usage("measures of different dimension"));
    }
    let method = if a.len() == b.len() {
        select_method(a.dim(), a.len())
    } else {
        W2Method::Sliced
    };
    match method {
        W2Method::Quantile1d => w2_1d(a.as_flat(), b.as_flat()),
        W2Method::Assignment => w2_assignment(a, b),
        W2Method::Sliced => w2_sliced(a, b, DEFAULT_PROJECTIONS, seed),
    }
}
