//! The eps-sweep: distance between the law of `X^eps(T)` and the limit law.

use rand::Rng;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::output::{Cell, Meta, Table};
use crate::diagnostics::{green_kubo, GkEstimate};
use crate::ensemble::{ParticleEnsemble, RunConfig};
use crate::eps::{run_eps_replica, scheme_for};
use crate::error::{Error, Result};
use crate::limit::{build_diffusion, run_limit_replica, DiffusionMode, DiffusionSpec, LimitScheme};
use crate::measure::EmpiricalMeasure;
use crate::noise::NoiseModel;
use crate::par::map_indexed;
use crate::potential::PotentialSpec;
use crate::rng::{stream, Purpose};
use crate::transport::{w2_auto, W2Method};

/// Bootstrap resamples for exact 1-D distances and for the costlier methods.
pub const BOOTSTRAP_1D: usize = 200;
pub const BOOTSTRAP_OTHER: usize = 32;

pub const SAMPLING_NOTE: &str = "particles of one replica share a driver path; \
samples_per_replica particles are pooled from each independent replica";

/// Terminal positions pooled from independent replicas, kept per replica so
/// the bootstrap can resample whole replicas.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledSample {
    pub dim: usize,
    pub per_replica: Vec<Vec<f64>>,
}

impl PooledSample {
    fn take(ens: &ParticleEnsemble, k: usize) -> Vec<f64> {
        ens.positions.as_flat()[..k * ens.dim()].to_vec()
    }

    pub fn len(&self) -> usize {
        self.per_replica.iter().map(|r| r.len()).sum::<usize>() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn measure(&self) -> Result<EmpiricalMeasure> {
        EmpiricalMeasure::from_flat(self.dim, self.per_replica.concat())
    }

    fn resample(&self, idx: &[usize]) -> Result<EmpiricalMeasure> {
        let data: Vec<f64> = idx
            .iter()
            .flat_map(|&i| self.per_replica[i].iter().copied())
            .collect();
        EmpiricalMeasure::from_flat(self.dim, data)
    }

    pub fn variance(&self) -> f64 {
        let flat = self.per_replica.concat();
        let n = flat.len() / self.dim;
        let mut total = 0.0;
        for k in 0..self.dim {
            let xs: Vec<f64> = flat.iter().skip(k).step_by(self.dim).copied().collect();
            let m = xs.iter().sum::<f64>() / n as f64;
            total += xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n as f64 - 1.0);
        }
        total
    }
}

/// Pooled terminal sample of the eps-system.
pub fn eps_sample(
    cfg: &RunConfig,
    exp: &ExperimentConfig,
    model: &NoiseModel,
    pot: &PotentialSpec,
    group: u32,
) -> Result<PooledSample> {
    let (scheme, n) = scheme_for(cfg, exp.scheme, exp.forcing);
    let per_replica = map_indexed(cfg.replicas, |r| {
        let ens = run_eps_replica(cfg, model, pot, scheme, n, group, r as u32, |_| {})?;
        Ok(PooledSample::take(&ens, cfg.samples_per_replica))
    })?;
    Ok(PooledSample {
        dim: cfg.dim,
        per_replica,
    })
}

/// Pooled terminal sample of the limit system.
pub fn limit_sample(
    cfg: &RunConfig,
    exp: &ExperimentConfig,
    pot: &PotentialSpec,
    diff: &DiffusionSpec,
    group: u32,
) -> Result<PooledSample> {
    let (scheme, n) = LimitScheme::covering(cfg.horizon, exp.limit_h, pot, cfg.alpha);
    let per_replica = map_indexed(cfg.replicas, |r| {
        let ens = run_limit_replica(cfg, pot, diff, scheme, n, group, r as u32, |_, _| {})?;
        Ok(PooledSample::take(&ens, cfg.samples_per_replica))
    })?;
    Ok(PooledSample {
        dim: cfg.dim,
        per_replica,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Distance {
    pub value: f64,
    /// 1.96 times the bootstrap standard deviation over replicas.
    pub ci_halfwidth: f64,
    pub method: W2Method,
}

/// W2 between two pooled samples with a replica-bootstrap half-width.
pub fn pooled_distance(
    a: &PooledSample,
    b: &PooledSample,
    seed: u64,
    group: u32,
) -> Result<Distance> {
    let base = w2_auto(&a.measure()?, &b.measure()?, seed)?;
    let draws = if base.method == W2Method::Quantile1d {
        BOOTSTRAP_1D
    } else {
        BOOTSTRAP_OTHER
    };
    let (ra, rb) = (a.per_replica.len(), b.per_replica.len());
    let values = map_indexed(draws, |k| {
        let mut rng = stream(seed, Purpose::Bootstrap, group, k as u32);
        let ia: Vec<usize> = (0..ra).map(|_| rng.random_range(0..ra)).collect();
        let ib: Vec<usize> = (0..rb).map(|_| rng.random_range(0..rb)).collect();
        Ok(w2_auto(&a.resample(&ia)?, &b.resample(&ib)?, seed)?.value)
    })?;
    let m = values.iter().sum::<f64>() / draws as f64;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (draws as f64 - 1.0);
    Ok(Distance {
        value: base.value,
        ci_halfwidth: 1.96 * var.sqrt(),
        method: base.method,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub paper: Option<Distance>,
    pub green_kubo: Option<Distance>,
    pub n_samples: usize,
}

impl ConvergenceRow {
    pub fn distance(&self, mode: DiffusionMode) -> Option<Distance> {
        match mode {
            DiffusionMode::Paper => self.paper,
            DiffusionMode::GreenKubo => self.green_kubo,
            DiffusionMode::Explicit => None,
        }
    }

    /// Larger of the per-mode half-widths.
    pub fn ci_halfwidth(&self) -> f64 {
        [self.paper, self.green_kubo]
            .iter()
            .flatten()
            .map(|d| d.ci_halfwidth)
            .fold(0.0, f64::max)
    }

    pub fn method(&self) -> Option<W2Method> {
        self.paper.or(self.green_kubo).map(|d| d.method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSummary {
    pub mode: DiffusionMode,
    pub d_eff: Vec<f64>,
    /// Position variance of the pooled limit sample.
    pub sample_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    /// Sorted by decreasing eps.
    pub rows: Vec<ConvergenceRow>,
    pub modes: Vec<ModeSummary>,
    pub gk: Option<GkEstimate>,
    /// Mode with the smaller distance at the smallest eps.
    pub preferred_mode: Option<DiffusionMode>,
    /// Distance between two independent limit samples of the first mode.
    pub floor: Distance,
    pub self_test: bool,
    /// Position variance of each pooled eps sample, by row.
    pub eps_variances: Vec<f64>,
    pub config_json: String,
}

/// Frozen measure for law-dependent fields: an initial-law draw.
pub fn reference_measure(cfg: &RunConfig) -> Result<EmpiricalMeasure> {
    let mut rng = stream(cfg.seed, Purpose::Diagnostics, 2, 0);
    Ok(ParticleEnsemble::initial_limit(cfg, &mut rng)?.positions)
}

/// Diffusion matrices for every configured mode, estimating `G` if needed.
pub fn diffusions(
    exp: &ExperimentConfig,
    model: &NoiseModel,
    base: &RunConfig,
    modes: &[DiffusionMode],
) -> Result<(Vec<DiffusionSpec>, Option<GkEstimate>)> {
    let m = reference_measure(base)?;
    let law = (!model.is_state_independent()).then_some(&m);
    let gk = if modes.contains(&DiffusionMode::GreenKubo) {
        Some(green_kubo(
            model,
            law,
            exp.gk_horizon_fast(),
            exp.gk_reps,
            exp.seed,
        )?)
    } else {
        None
    };
    let specs = modes
        .iter()
        .map(|&mode| {
            let est = match mode {
                DiffusionMode::GreenKubo => gk.as_ref().map(|g| g.g.as_slice()),
                DiffusionMode::Explicit => exp.explicit.as_deref(),
                DiffusionMode::Paper => None,
            };
            build_diffusion(mode, model, Some(&m), est, exp.alpha)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((specs, gk))
}

/// Stream group offset for the independent limit sample behind the floor.
const FLOOR_GROUP: u32 = 1 << 20;
/// Offset for self-test stand-ins of the eps sample.
const SELF_TEST_GROUP: u32 = 1 << 21;

pub fn run_convergence(exp: &ExperimentConfig) -> Result<ConvergenceReport> {
    exp.validate()?;
    let model = exp.noise_model()?;
    let pot = exp.potential()?;
    let modes: Vec<DiffusionMode> = exp
        .diffusion_modes
        .iter()
        .copied()
        .filter(|m| *m != DiffusionMode::Explicit)
        .collect();
    if modes.is_empty() {
        return Err(Error::usage(
            "converge compares against paper and/or green-kubo modes",
        ));
    }
    let base = exp.run_config(exp.eps_grid[0]);
    let (specs, gk) = diffusions(exp, &model, &base, &modes)?;

    let limits = specs
        .iter()
        .map(|d| limit_sample(&base, exp, &pot, d, 0))
        .collect::<Result<Vec<_>>>()?;
    let floor_sample = limit_sample(&base, exp, &pot, &specs[0], FLOOR_GROUP)?;
    let floor = pooled_distance(&limits[0], &floor_sample, exp.seed, FLOOR_GROUP)?;

    let mut rows = Vec::with_capacity(exp.eps_grid.len());
    let mut eps_variances = Vec::new();
    for (e, &eps) in exp.eps_grid.iter().enumerate() {
        let cfg = exp.run_config(eps);
        let mut row = ConvergenceRow {
            eps,
            paper: None,
            green_kubo: None,
            n_samples: 0,
        };
        let shared = if exp.self_test {
            None
        } else {
            let s = eps_sample(&cfg, exp, &model, &pot, e as u32)
                .map_err(|err| err.with_context(format!("eps={eps}")))?;
            eps_variances.push(s.variance());
            Some(s)
        };
        for (k, (mode, lim)) in modes.iter().zip(&limits).enumerate() {
            let sample = match &shared {
                Some(s) => s.clone(),
                None => limit_sample(&base, exp, &pot, &specs[k], SELF_TEST_GROUP + e as u32)?,
            };
            let group = (e * modes.len() + k) as u32;
            let dist = pooled_distance(&sample, lim, exp.seed, group)?;
            row.n_samples = sample.len();
            match mode {
                DiffusionMode::Paper => row.paper = Some(dist),
                DiffusionMode::GreenKubo => row.green_kubo = Some(dist),
                DiffusionMode::Explicit => {}
            }
        }
        rows.push(row);
    }

    let last = rows.last().expect("non-empty grid");
    let preferred_mode = modes
        .iter()
        .filter_map(|&m| last.distance(m).map(|d| (m, d.value)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(m, _)| m);

    Ok(ConvergenceReport {
        rows,
        modes: modes
            .iter()
            .zip(&specs)
            .zip(&limits)
            .map(|((&mode, d), l)| ModeSummary {
                mode,
                d_eff: d.matrix.clone(),
                sample_variance: l.variance(),
            })
            .collect(),
        gk,
        preferred_mode,
        floor,
        self_test: exp.self_test,
        eps_variances,
        config_json: exp.to_json_string(),
    })
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

impl ConvergenceReport {
    pub fn metadata(&self) -> Meta {
        let mut m: Meta = vec![
            ("config".into(), self.config_json.clone()),
            ("sampling".into(), SAMPLING_NOTE.into()),
            ("self_test".into(), self.self_test.to_string()),
        ];
        for s in &self.modes {
            m.push((format!("d_eff_{}", s.mode.as_str()), json(&s.d_eff)));
            m.push((
                format!("limit_variance_{}", s.mode.as_str()),
                json(&s.sample_variance),
            ));
        }
        if let Some(g) = &self.gk {
            m.push(("green_kubo".into(), json(g)));
        }
        for s in &self.modes {
            let cis: Vec<Option<f64>> = self
                .rows
                .iter()
                .map(|r| r.distance(s.mode).map(|d| d.ci_halfwidth))
                .collect();
            m.push((format!("ci_{}_mode", s.mode.as_str()), json(&cis)));
        }
        m.push(("eps_variance".into(), json(&self.eps_variances)));
        m.push(("finite_sample_floor".into(), json(&self.floor)));
        m.push((
            "preferred_mode".into(),
            self.preferred_mode.map_or("none", |p| p.as_str()).into(),
        ));
        m
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            "eps",
            "w2_paper_mode",
            "w2_gk_mode",
            "ci_halfwidth",
            "n_samples",
            "w2_method",
        ]);
        for r in &self.rows {
            t.push(vec![
                Cell::Num(r.eps),
                r.paper.map(|d| d.value).into(),
                r.green_kubo.map(|d| d.value).into(),
                Cell::Num(r.ci_halfwidth()),
                Cell::from(r.n_samples),
                r.method().map_or(Cell::Missing, |m| m.as_str().into()),
            ]);
        }
        t
    }
}
