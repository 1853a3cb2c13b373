//! Moment tables, the u/v decomposition of the fast forcing, a Green-Kubo
//! estimator of the effective diffusion and Brownian-proxy statistics.

use serde::Serialize;

use crate::ensemble::RunConfig;
use crate::eps::{
    run_eps_replica, scheme_for, ForcingQuadrature, ForcingSource, LiveDriver, SchemeKind,
};
use crate::error::{Error, Result};
use crate::limit::clamp_psd;
use crate::measure::EmpiricalMeasure;
use crate::noise::{DriverState, NoiseModel};
use crate::par::map_indexed;
use crate::potential::PotentialSpec;
use crate::rng::{stream, Purpose};

/// Number of sampled times for moment tables (besides `t = 0`).
pub const MOMENT_GRID: usize = 50;
pub const MIN_BM_PATHS: usize = 100;
/// Dyadic lags `2^-k` kept by the increment check.
pub const MIN_LAG: f64 = 0.01;
pub const MAX_LAG: f64 = 1.0;

/// Supremum over the time grid of a replica-mean, with the 95% half-width at
/// the maximizing time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupEstimate {
    pub sup: f64,
    pub ci: f64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentTable {
    pub eps: f64,
    /// `E|sqrt(eps) X|^2`
    pub x2: SupEstimate,
    pub x4: SupEstimate,
    pub y2: SupEstimate,
    pub y4: SupEstimate,
    /// `alpha sqrt(eps) int_0^T E|Y|^2 dt` at the horizon.
    pub energy_integral: f64,
    pub replicas: usize,
    pub particles: usize,
    pub grid_points: usize,
}

fn mean_and_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, 1.96 * (var / n).sqrt())
}

fn sup_over_grid(times: &[f64], per_replica: &[Vec<f64>]) -> SupEstimate {
    let mut best = SupEstimate {
        sup: f64::NEG_INFINITY,
        ci: 0.0,
        time: 0.0,
    };
    let mut col = Vec::with_capacity(per_replica.len());
    for (j, &t) in times.iter().enumerate() {
        col.clear();
        col.extend(per_replica.iter().map(|r| r[j]));
        let (m, ci) = mean_and_ci(&col);
        if m > best.sup {
            best = SupEstimate {
                sup: m,
                ci,
                time: t,
            };
        }
    }
    best
}

/// Scaled position and velocity moments of the eps-system, replica-averaged
/// on a uniform time grid, reduced to their supremum over time.
pub fn moment_table(
    cfg: &RunConfig,
    model: &NoiseModel,
    pot: &PotentialSpec,
    kind: SchemeKind,
    quadrature: ForcingQuadrature,
) -> Result<MomentTable> {
    cfg.validate()?;
    let (scheme, n_steps) = scheme_for(cfg, kind, quadrature);
    let stride = (n_steps as usize).div_ceil(MOMENT_GRID).max(1) as u64;
    let eps = cfg.eps;
    let alpha = cfg.alpha;

    // per replica: rows of [x2, x4, y2, y4] at each grid time, plus energy
    let runs = map_indexed(cfg.replicas, |r| {
        let mut rows: Vec<[f64; 4]> = Vec::new();
        let mut times = Vec::new();
        let mut energy = 0.0;
        let mut record = |t: f64, pos: &[f64], vel: &[f64], d: usize| {
            let n = (pos.len() / d) as f64;
            let mut acc = [0.0; 4];
            for (p, v) in pos.chunks_exact(d).zip(vel.chunks_exact(d)) {
                let x2: f64 = eps * p.iter().map(|a| a * a).sum::<f64>();
                let y2: f64 = eps * v.iter().map(|a| a * a).sum::<f64>();
                acc[0] += x2;
                acc[1] += x2 * x2;
                acc[2] += y2;
                acc[3] += y2 * y2;
            }
            rows.push(acc.map(|a| a / n));
            times.push(t);
        };
        // same stream as the run, so this is its initial ensemble
        let mut rng = stream(cfg.seed, Purpose::EpsReplica, 0, r as u32);
        let init = crate::ensemble::ParticleEnsemble::initial_eps(cfg, &mut rng)?;
        let v0 = init.velocities.as_deref().unwrap_or(&[]);
        record(0.0, init.positions.as_flat(), v0, cfg.dim);
        let mut prev_y2 = v0.iter().map(|a| a * a).sum::<f64>() / init.len() as f64;
        run_eps_replica(cfg, model, pot, scheme, n_steps, 0, r as u32, |v| {
            let vel = v.ensemble.velocities.as_deref().unwrap_or(&[]);
            let y2 = vel.iter().map(|a| a * a).sum::<f64>() / v.ensemble.len() as f64;
            energy += 0.5 * v.h * (prev_y2 + y2);
            prev_y2 = y2;
            if (v.index + 1) % stride == 0 || v.index + 1 == n_steps {
                record(
                    v.ensemble.time,
                    v.ensemble.positions.as_flat(),
                    vel,
                    cfg.dim,
                );
            }
        })?;
        Ok((times, rows, alpha * eps.sqrt() * energy))
    })?;

    let times = runs[0].0.clone();
    let pick = |k: usize| -> Vec<Vec<f64>> {
        runs.iter()
            .map(|(_, rows, _)| rows.iter().map(|row| row[k]).collect())
            .collect()
    };
    let energies: Vec<f64> = runs.iter().map(|r| r.2).collect();
    Ok(MomentTable {
        eps,
        x2: sup_over_grid(&times, &pick(0)),
        x4: sup_over_grid(&times, &pick(1)),
        y2: sup_over_grid(&times, &pick(2)),
        y4: sup_over_grid(&times, &pick(3)),
        energy_integral: mean_and_ci(&energies).0,
        replicas: cfg.replicas,
        particles: cfg.n_particles,
        grid_points: times.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LagRatio {
    pub lag: f64,
    /// `E|u(t) - u(s)|^4 / |t - s|`
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BmStats {
    pub n_paths: usize,
    /// OLS slope of the across-path variance against time.
    pub variance_slope: f64,
    /// `None` when increments have zero variance.
    pub lag1_increment_corr: Option<f64>,
    pub corr_se: f64,
    pub excess_kurtosis: Option<f64>,
    pub kurtosis_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UvReport {
    pub eps: f64,
    pub v_msq: f64,
    pub v_msq_ci: f64,
    pub u_increment_ratios: Vec<LagRatio>,
    pub max_ratio: f64,
    pub median_ratio: f64,
    pub bm_stats: Option<BmStats>,
    pub paths: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UvOptions {
    pub kind: SchemeKind,
    pub quadrature: ForcingQuadrature,
    /// Sampling interval of `u` for the Brownian-proxy statistics.
    pub bm_interval: f64,
}

impl Default for UvOptions {
    fn default() -> Self {
        UvOptions {
            kind: SchemeKind::Exponential,
            quadrature: ForcingQuadrature::StepAverage,
            bm_interval: 0.5,
        }
    }
}

/// Dyadic lags `2^-k` within `[MIN_LAG, MAX_LAG]`.
pub fn dyadic_lags() -> Vec<f64> {
    (0..)
        .map(|k| MAX_LAG * 0.5f64.powi(k))
        .take_while(|&l| l >= MIN_LAG)
        .collect()
}

/// Median of a non-empty slice (mean of the middle pair for even length).
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Accumulate `u` and `v` along one replica. `u` is recorded at every step.
struct UvPath {
    u: Vec<f64>,
    v: Vec<f64>,
}

/// One quadrature step of `u` and `v` with forcing `f` held over the step.
struct UvStep {
    cu: f64,
    r: f64,
    cv: f64,
}

impl UvStep {
    fn new(eps: f64, alpha: f64, h: f64) -> Self {
        let z = alpha * h / eps;
        UvStep {
            cu: h / (alpha * eps.sqrt()),
            r: (-z).exp(),
            cv: (eps / alpha) * (-(-z).exp_m1()) / (alpha * eps.sqrt()),
        }
    }

    fn apply(&self, i: usize, f: &[f64], u: &mut [f64], v: &mut [f64]) {
        let d = v.len();
        for k in 0..d {
            u[(i + 1) * d + k] = u[i * d + k] + self.cu * f[k];
            v[k] = self.r * v[k] + self.cv * f[k];
        }
    }
}

/// `u` and `v` for a state-independent field driven by `source`.
fn integrate_uv<S: ForcingSource + ?Sized>(
    source: &mut S,
    model: &NoiseModel,
    eps: f64,
    alpha: f64,
    h: f64,
    n_steps: usize,
) -> Result<UvPath> {
    let d = model.dim();
    let stepper = UvStep::new(eps, alpha, h);
    let origin = EmpiricalMeasure::from_flat(d, vec![0.0; d])?;
    let mut xi = vec![0.0; model.driver_len()];
    let mut f = vec![0.0; d];
    let mut u = vec![0.0; (n_steps + 1) * d];
    let mut v = vec![0.0; d];
    for i in 0..n_steps {
        source.next_driver(h / eps, &mut xi)?;
        model.averaged_field(&xi, &origin, &mut f);
        stepper.apply(i, &f, &mut u, &mut v);
    }
    Ok(UvPath { u, v })
}

/// Integrated forcing `u(t) = (alpha sqrt eps)^-1 int_0^t eta_bar(s/eps) ds`
/// and its exponentially filtered part `v`, computed with the integrator's
/// step quadrature. State-independent fields run the driver alone; other
/// kinds run the full eps-system and use its law-averaged forcing.
pub fn uv_check(
    cfg: &RunConfig,
    model: &NoiseModel,
    pot: &PotentialSpec,
    opts: UvOptions,
) -> Result<UvReport> {
    cfg.validate()?;
    if model.dim() != cfg.dim {
        return Err(Error::usage(
            "noise model dimension differs from run dimension",
        ));
    }
    let (scheme, n_steps) = scheme_for(cfg, opts.kind, opts.quadrature);
    let h = scheme.h;
    let eps = cfg.eps;
    let alpha = cfg.alpha;
    let d = cfg.dim;
    let stepper = UvStep::new(eps, alpha, h);
    let standalone = model.is_state_independent();

    let paths = map_indexed(cfg.replicas, |rep| {
        if standalone {
            let mut rng = stream(cfg.seed, Purpose::Diagnostics, 1, rep as u32);
            let mut drv = DriverState::stationary(model, &mut rng);
            let mut src = LiveDriver {
                model,
                state: &mut drv,
                rng: &mut rng,
                quadrature: opts.quadrature,
            };
            return integrate_uv(&mut src, model, eps, alpha, h, n_steps as usize);
        }
        let mut u = vec![0.0; (n_steps as usize + 1) * d];
        let mut v = vec![0.0; d];
        run_eps_replica(cfg, model, pot, scheme, n_steps, 0, rep as u32, |view| {
            stepper.apply(view.index as usize, view.forcing, &mut u, &mut v);
        })?;
        Ok(UvPath { u, v })
    })?;

    let v_sq: Vec<f64> = paths
        .iter()
        .map(|p| p.v.iter().map(|a| a * a).sum())
        .collect();
    let (v_msq, v_msq_ci) = mean_and_ci(&v_sq);

    let n = n_steps as usize;
    let mut ratios = Vec::new();
    for lag in dyadic_lags() {
        let k = ((lag / h).round() as usize).max(1);
        if k > n {
            continue;
        }
        let actual = k as f64 * h;
        let mut acc = 0.0;
        let mut count = 0usize;
        for p in &paths {
            for s in 0..=(n - k) {
                let sq: f64 = (0..d)
                    .map(|c| {
                        let du = p.u[(s + k) * d + c] - p.u[s * d + c];
                        du * du
                    })
                    .sum();
                acc += sq * sq;
                count += 1;
            }
        }
        ratios.push(LagRatio {
            lag: actual,
            ratio: acc / count as f64 / actual,
        });
    }
    let values: Vec<f64> = ratios.iter().map(|l| l.ratio).collect();
    let (max_ratio, median_ratio) = if values.is_empty() {
        (0.0, 0.0)
    } else {
        (values.iter().copied().fold(0.0, f64::max), median(&values))
    };

    let every = ((opts.bm_interval / h).round() as usize).max(1);
    let coarse: Vec<Vec<f64>> = paths
        .iter()
        .flat_map(|p| (0..d).map(move |c| (0..=n).step_by(every).map(|i| p.u[i * d + c]).collect()))
        .collect();
    let bm_stats = if coarse.len() >= MIN_BM_PATHS && coarse[0].len() >= 3 {
        Some(bm_proxy(&coarse, every as f64 * h)?)
    } else {
        None
    };

    Ok(UvReport {
        eps,
        v_msq,
        v_msq_ci,
        u_increment_ratios: ratios,
        max_ratio,
        median_ratio,
        bm_stats,
        paths: paths.len(),
    })
}

/// Least-squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    ols_slope(&lx, &ly)
}

/// Brownian-proxy statistics of paths sampled on a uniform grid of spacing
/// `dt`: variance growth rate, lag-1 correlation of increments and excess
/// kurtosis of increments.
pub fn bm_proxy(paths: &[Vec<f64>], dt: f64) -> Result<BmStats> {
    if paths.len() < MIN_BM_PATHS {
        return Err(Error::usage(format!(
            "need at least {MIN_BM_PATHS} paths, got {}",
            paths.len()
        )));
    }
    let m = paths[0].len();
    if m < 3 || paths.iter().any(|p| p.len() != m) {
        return Err(Error::usage("paths must share a grid of at least 3 points"));
    }
    if !(dt > 0.0) {
        return Err(Error::usage("grid spacing must be positive"));
    }
    let np = paths.len() as f64;
    let mut ts = Vec::with_capacity(m);
    let mut vars = Vec::with_capacity(m);
    for j in 0..m {
        let mean = paths.iter().map(|p| p[j]).sum::<f64>() / np;
        let var = paths.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / (np - 1.0);
        ts.push(j as f64 * dt);
        vars.push(var);
    }
    let variance_slope = ols_slope(&ts, &vars);

    let incs: Vec<Vec<f64>> = paths
        .iter()
        .map(|p| p.windows(2).map(|w| w[1] - w[0]).collect())
        .collect();
    let count = (incs.len() * (m - 1)) as f64;
    let mu = incs.iter().flatten().sum::<f64>() / count;
    let m2 = incs.iter().flatten().map(|x| (x - mu).powi(2)).sum::<f64>() / count;
    let m4 = incs.iter().flatten().map(|x| (x - mu).powi(4)).sum::<f64>() / count;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    let mut pairs = 0usize;
    for row in &incs {
        for w in row.windows(2) {
            let (a, b) = (w[0] - mu, w[1] - mu);
            sab += a * b;
            saa += a * a;
            sbb += b * b;
            pairs += 1;
        }
    }
    let degenerate = m2 == 0.0;
    Ok(BmStats {
        n_paths: paths.len(),
        variance_slope,
        lag1_increment_corr: (!degenerate && pairs > 0 && saa > 0.0 && sbb > 0.0)
            .then(|| sab / (saa * sbb).sqrt()),
        corr_se: if pairs > 0 {
            1.0 / (pairs as f64).sqrt()
        } else {
            0.0
        },
        excess_kurtosis: (!degenerate).then(|| m4 / (m2 * m2) - 3.0),
        kurtosis_se: (24.0 / count).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GkEstimate {
    pub dim: usize,
    /// Row-major, symmetric, clamped to PSD.
    pub g: Vec<f64>,
    pub horizon_fast: f64,
    pub truncation_lag: f64,
    pub reps: usize,
    pub ci_fro: f64,
}

/// Fast-time sampling step of the estimator, in units of `1 / gamma`.
pub const GK_STEP: f64 = 0.05;
/// Shortest admissible horizon, in units of `1 / gamma`.
pub const GK_MIN_HORIZON: f64 = 20.0;

/// Green-Kubo estimate `G = 2 int_0^L C(tau) dtau` of the effective diffusion
/// of the law-averaged forcing over `reps` independent stationary paths of
/// length `horizon_fast`, frozen at `m` for law-dependent fields.
///
/// The autocovariance is taken about the grand mean over all paths. The
/// truncation `L` is the first lag at which the Frobenius norm of the pooled
/// autocovariance falls below the noise floor, the RMS of that norm over the
/// upper half of the computed lags.
pub fn green_kubo(
    model: &NoiseModel,
    m: Option<&EmpiricalMeasure>,
    horizon_fast: f64,
    reps: usize,
    seed: u64,
) -> Result<GkEstimate> {
    let gamma = model.gamma();
    if !(horizon_fast >= GK_MIN_HORIZON / gamma * (1.0 - 1e-12)) {
        return Err(Error::usage(format!(
            "green-kubo horizon {horizon_fast} is shorter than {GK_MIN_HORIZON}/gamma = {}",
            GK_MIN_HORIZON / gamma
        )));
    }
    if reps < 2 {
        return Err(Error::usage("green-kubo needs at least 2 repetitions"));
    }
    let d = model.dim();
    let frozen = match m {
        Some(m) if m.dim() == d => m.clone(),
        Some(_) => return Err(Error::usage("measure dimension does not match the field")),
        None if model.is_state_independent() => EmpiricalMeasure::from_flat(d, vec![0.0; d])?,
        None => {
            return Err(Error::usage(format!(
                "the {} field needs a frozen measure",
                model.kind_name()
            )))
        }
    };
    let dt = GK_STEP / gamma;
    let n = (horizon_fast / dt).round() as usize;
    let max_lag = n / 2;

    let series = map_indexed(reps, |r| {
        let mut rng = stream(seed, Purpose::GreenKubo, 0, r as u32);
        let mut drv = DriverState::stationary(model, &mut rng);
        let mut out = vec![0.0; (n + 1) * d];
        for t in 0..=n {
            if t > 0 {
                drv.advance(model, dt, &mut rng)?;
            }
            model.averaged_field(&drv.xi, &frozen, &mut out[t * d..(t + 1) * d]);
        }
        Ok(out)
    })?;

    let total = (reps * (n + 1)) as f64;
    let mut grand = vec![0.0; d];
    for s in &series {
        for row in s.chunks_exact(d) {
            for (g, v) in grand.iter_mut().zip(row) {
                *g += v;
            }
        }
    }
    grand.iter_mut().for_each(|g| *g /= total);

    // per-rep autocovariance C_r(k), row-major d x d per lag
    let covs = map_indexed(reps, |r| {
        let s: Vec<f64> = series[r]
            .chunks_exact(d)
            .flat_map(|row| row.iter().zip(&grand).map(|(v, g)| v - g))
            .collect();
        let mut c = vec![0.0; max_lag * d * d];
        for k in 0..max_lag {
            let cnt = (n + 1 - k) as f64;
            let block = &mut c[k * d * d..(k + 1) * d * d];
            for t in 0..=(n - k) {
                let a = &s[t * d..(t + 1) * d];
                let b = &s[(t + k) * d..(t + k + 1) * d];
                for i in 0..d {
                    for j in 0..d {
                        block[i * d + j] += a[i] * b[j];
                    }
                }
            }
            block.iter_mut().for_each(|v| *v /= cnt);
        }
        Ok(c)
    })?;

    let dd = d * d;
    let pooled_norm: Vec<f64> = (0..max_lag)
        .map(|k| {
            (0..dd)
                .map(|e| {
                    let v = covs.iter().map(|c| c[k * dd + e]).sum::<f64>() / reps as f64;
                    v * v
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let tail = &pooled_norm[max_lag / 2..];
    let floor = (tail.iter().map(|v| v * v).sum::<f64>() / tail.len().max(1) as f64).sqrt();
    let cut = if floor == 0.0 {
        0
    } else {
        pooled_norm
            .iter()
            .position(|&v| v < floor)
            .unwrap_or(max_lag - 1)
    };

    let per_rep: Vec<Vec<f64>> = covs
        .iter()
        .map(|c| {
            let mut g = vec![0.0; dd];
            for k in 0..=cut {
                let w = if k == 0 || k == cut { 0.5 } else { 1.0 };
                let w = if cut == 0 { 0.0 } else { w };
                for i in 0..d {
                    for j in 0..d {
                        g[i * d + j] += w * dt * (c[k * dd + i * d + j] + c[k * dd + j * d + i]);
                    }
                }
            }
            g
        })
        .collect();
    let mut g = vec![0.0; dd];
    for gr in &per_rep {
        for (a, b) in g.iter_mut().zip(gr) {
            *a += b / reps as f64;
        }
    }
    let spread: f64 = per_rep
        .iter()
        .map(|gr| gr.iter().zip(&g).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum();
    let ci_fro = 1.96 * (spread / (reps * (reps - 1)) as f64).sqrt();

    Ok(GkEstimate {
        dim: d,
        g: clamp_psd(d, &g),
        horizon_fast: n as f64 * dt,
        truncation_lag: cut as f64 * dt,
        reps,
        ci_fro,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::InitialLaw;
    use crate::eps::DriverPath;
    use crate::noise::{NoiseKind, Profile};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn bench(eps: f64, replicas: usize) -> RunConfig {
        RunConfig {
            dim: 1,
            n_particles: 16,
            eps,
            alpha: 1.0,
            horizon: 1.0,
            h0: 0.05,
            seed: 9,
            replicas,
            samples_per_replica: 1,
            init: InitialLaw::default(),
        }
    }

    #[test]
    fn null_dynamics_have_zero_moments() {
        let mut c = bench(0.1, 4);
        c.init = InitialLaw::Gaussian {
            mean: 0.0,
            std: 0.0,
            velocity: 0.0,
        };
        let model = NoiseModel::scalar_ou(1, 1.0, 0.0).unwrap();
        let pot = PotentialSpec::quadratic(0.0).unwrap();
        let t = moment_table(
            &c,
            &model,
            &pot,
            SchemeKind::Exponential,
            ForcingQuadrature::StepAverage,
        )
        .unwrap();
        for e in [t.x2, t.x4, t.y2, t.y4] {
            assert_eq!(e.sup, 0.0);
        }
        assert_eq!(t.grid_points, 51);
    }

    #[test]
    fn pure_decay_peaks_at_start() {
        let mut c = bench(0.1, 2);
        c.init = InitialLaw::Gaussian {
            mean: 0.0,
            std: 1.0,
            velocity: 2.0,
        };
        let model = NoiseModel::scalar_ou(1, 1.0, 0.0).unwrap();
        let pot = PotentialSpec::quadratic(1.0).unwrap();
        let t = moment_table(
            &c,
            &model,
            &pot,
            SchemeKind::Exponential,
            ForcingQuadrature::StepAverage,
        )
        .unwrap();
        assert!((t.y2.sup - 0.1 * 4.0).abs() < 1e-12);
        assert_eq!(t.y2.time, 0.0);
    }

    #[test]
    fn doubling_sigma_quadruples_free_second_moments() {
        // lambda = 0, zero initial state: everything is linear in sigma
        let mut c = bench(0.1, 8);
        c.init = InitialLaw::Gaussian {
            mean: 0.0,
            std: 0.0,
            velocity: 0.0,
        };
        let pot = PotentialSpec::quadratic(0.0).unwrap();
        let run = |s: f64| {
            let model = NoiseModel::scalar_ou(1, 1.0, s).unwrap();
            moment_table(
                &c,
                &model,
                &pot,
                SchemeKind::Exponential,
                ForcingQuadrature::StepAverage,
            )
            .unwrap()
        };
        let (a, b) = (run(1.0), run(2.0));
        assert!((b.x2.sup / a.x2.sup - 4.0).abs() < 1e-9);
        assert!((b.y2.sup / a.y2.sup - 4.0).abs() < 1e-9);
    }

    #[test]
    fn silent_forcing_gives_zero_uv() {
        let c = bench(0.1, 120);
        let model = NoiseModel::scalar_ou(1, 1.0, 0.0).unwrap();
        let pot = PotentialSpec::quadratic(1.0).unwrap();
        let r = uv_check(
            &c,
            &model,
            &pot,
            UvOptions {
                bm_interval: 0.1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.v_msq, 0.0);
        assert!(r.u_increment_ratios.iter().all(|l| l.ratio == 0.0));
        let bm = r.bm_stats.unwrap();
        assert_eq!(bm.variance_slope, 0.0);
        assert!(bm.lag1_increment_corr.is_none());
        assert!(bm.excess_kurtosis.is_none());
    }

    #[test]
    fn v_msq_converges_under_step_halving() {
        // both step sizes replay the same driver paths
        let model = NoiseModel::scalar_ou(1, 1.0, 1.0).unwrap();
        let (eps, horizon, h) = (0.05f64, 1.0f64, 0.05f64 * 0.05);
        let n = (horizon / h).round() as usize;
        let (mut coarse, mut fine) = (0.0, 0.0);
        for rep in 0..200 {
            let mut rng = stream(77, Purpose::SelfTest, 0, rep);
            let start = DriverState::stationary(&model, &mut rng);
            let path = DriverPath::record(&model, start, 0.5 * h / eps, 2 * n, &mut rng).unwrap();
            let q = ForcingQuadrature::StepAverage;
            let a = integrate_uv(&mut path.replay(q), &model, eps, 1.0, h, n).unwrap();
            let b = integrate_uv(&mut path.replay(q), &model, eps, 1.0, 0.5 * h, 2 * n).unwrap();
            coarse += a.v[0] * a.v[0];
            fine += b.v[0] * b.v[0];
        }
        assert!(((coarse - fine) / fine).abs() < 0.05, "{coarse} {fine}");
    }

    #[test]
    fn state_dependent_field_uses_the_ensemble() {
        let model = NoiseModel::new(NoiseKind::Separable(Profile::Cos), 1, 1.0, 1.0).unwrap();
        let pot = PotentialSpec::quadratic(1.0).unwrap();
        let c = bench(0.1, 4);
        let r = uv_check(&c, &model, &pot, UvOptions::default()).unwrap();
        assert!(r.v_msq > 0.0 && r.v_msq.is_finite());
        assert!(r.bm_stats.is_none());
    }

    #[test]
    fn dyadic_lag_set() {
        let l = dyadic_lags();
        assert_eq!(l.len(), 7);
        assert_eq!(l[0], 1.0);
        assert_eq!(l[6], 1.0 / 64.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn brownian_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let reps = 400;
        let (m, dt, rate) = (21, 0.1f64, 2.0f64);
        let paths: Vec<Vec<f64>> = (0..reps)
            .map(|_| {
                let mut p = vec![0.0];
                for _ in 1..m {
                    let z: f64 = rng.sample(StandardNormal);
                    p.push(p.last().unwrap() + (rate * dt).sqrt() * z);
                }
                p
            })
            .collect();
        let s = bm_proxy(&paths, dt).unwrap();
        assert!(
            (s.variance_slope - rate).abs() < 0.2 * rate,
            "{}",
            s.variance_slope
        );
        assert!(s.lag1_increment_corr.unwrap().abs() < 3.0 / (reps as f64).sqrt());
        assert!(s.excess_kurtosis.unwrap().abs() < 3.0 * s.kurtosis_se);
        assert!(bm_proxy(&paths[..99], dt).is_err());
    }

    #[test]
    fn loglog_slope_of_power_law() {
        let xs = [0.2, 0.1, 0.05];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        assert!((loglog_slope(&xs, &ys) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn green_kubo_examples() {
        let silent = NoiseModel::scalar_ou(1, 2.0, 0.0).unwrap();
        let g = green_kubo(&silent, None, 10.0, 4, 1).unwrap();
        assert_eq!(g.g, vec![0.0]);

        let short = NoiseModel::scalar_ou(1, 2.0, 1.0).unwrap();
        assert!(matches!(
            green_kubo(&short, None, 9.0, 4, 1),
            Err(Error::Usage(_))
        ));

        // cos profile over a symmetric measure at +-pi/2 averages to zero
        let sep = NoiseModel::new(NoiseKind::Separable(Profile::Cos), 1, 1.0, 1.0).unwrap();
        let h = std::f64::consts::FRAC_PI_2;
        let m = EmpiricalMeasure::from_scalars(&[-h, h]).unwrap();
        let g = green_kubo(&sep, Some(&m), 20.0, 8, 1).unwrap();
        assert!(g.g[0].abs() <= g.ci_fro + 1e-12);
        assert!(green_kubo(&sep, None, 20.0, 8, 1).is_err());
    }

    #[test]
    fn green_kubo_scalar_ou_is_unbiased() {
        // 2 sigma^2 / gamma = 1; 256 paths put the CI near 2%
        let model = NoiseModel::scalar_ou(1, 2.0, 1.0).unwrap();
        let g = green_kubo(&model, None, 50.0, 256, 3).unwrap();
        assert!(
            (g.g[0] - 1.0).abs() < g.ci_fro.max(0.02) * 2.0,
            "{} +- {}",
            g.g[0],
            g.ci_fro
        );
        assert!(g.truncation_lag > 0.5);
    }

    #[test]
    fn green_kubo_horizon_invariance() {
        let model = NoiseModel::scalar_ou(1, 1.0, 1.0).unwrap();
        let a = green_kubo(&model, None, 20.0, 128, 4).unwrap();
        let b = green_kubo(&model, None, 40.0, 128, 4).unwrap();
        let tol = (a.ci_fro.powi(2) + b.ci_fro.powi(2)).sqrt();
        assert!(
            (a.g[0] - b.g[0]).abs() < tol,
            "{} vs {} (tol {tol})",
            a.g[0],
            b.g[0]
        );
    }
}
