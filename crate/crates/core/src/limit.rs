//! Overdamped limit `dx = -(1/alpha) grad V(x, mu) dt + S dB`, `S S^T = D_eff`,
//! as an N-particle Euler-Maruyama system.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::ensemble::{ParticleEnsemble, RunConfig};
use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;
use crate::noise::NoiseModel;
use crate::potential::PotentialSpec;
use crate::rng::{stream, Purpose};

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const EIGEN_CLAMP_TOL: f64 = 1e-12;
/// Largest step as a fraction of `alpha / lambda_max`.
pub const MAX_STEP_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffusionMode {
    Paper,
    GreenKubo,
    Explicit,
}

impl DiffusionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiffusionMode::Paper => "paper",
            DiffusionMode::GreenKubo => "green-kubo",
            DiffusionMode::Explicit => "explicit",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(DiffusionMode::Paper),
            "green-kubo" => Ok(DiffusionMode::GreenKubo),
            "explicit" => Ok(DiffusionMode::Explicit),
            other => Err(Error::usage(format!("unknown diffusion mode '{other}'"))),
        }
    }
}

/// Per-unit-time covariance of the limit noise and its symmetric square root.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffusionSpec {
    pub mode: DiffusionMode,
    pub dim: usize,
    /// Row-major `dim x dim`, symmetrized and clamped to PSD.
    pub matrix: Vec<f64>,
    pub sqrt: Vec<f64>,
}

impl DiffusionSpec {
    pub fn new(mode: DiffusionMode, dim: usize, matrix: Vec<f64>) -> Result<Self> {
        let (clamped, sqrt) = psd_sqrt(dim, &matrix)?;
        Ok(DiffusionSpec {
            mode,
            dim,
            matrix: clamped,
            sqrt,
        })
    }

    pub fn zero(dim: usize) -> Self {
        DiffusionSpec {
            mode: DiffusionMode::Explicit,
            dim,
            matrix: vec![0.0; dim * dim],
            sqrt: vec![0.0; dim * dim],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sqrt.iter().all(|&v| v == 0.0)
    }
}

/// Symmetric PSD square root. Returns the clamped matrix and `S` with
/// `S S^T = S^2 =` clamped matrix.
pub fn psd_sqrt(dim: usize, m: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if dim == 0 || m.len() != dim * dim {
        return Err(Error::usage(format!(
            "expected a {dim}x{dim} matrix, got {} entries",
            m.len()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::usage("diffusion matrix has non-finite entries"));
    }
    let scale = m.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    for i in 0..dim {
        for j in 0..i {
            if (m[i * dim + j] - m[j * dim + i]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::usage(format!(
                    "diffusion matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let a = DMatrix::from_fn(dim, dim, |i, j| 0.5 * (m[i * dim + j] + m[j * dim + i]));
    let eig = SymmetricEigen::new(a);
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < -EIGEN_CLAMP_TOL * scale {
            return Err(Error::usage(format!(
                "diffusion matrix is not positive semidefinite (eigenvalue {v:e})"
            )));
        }
        *v = v.max(0.0);
    }
    let q = &eig.eigenvectors;
    let rebuild = |f: &dyn Fn(f64) -> f64| {
        let diag = DMatrix::from_diagonal(&vals.map(f));
        let r = q * diag * q.transpose();
        let mut out = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                out[i * dim + j] = 0.5 * (r[(i, j)] + r[(j, i)]);
            }
        }
        out
    };
    let clamped = if eig.eigenvalues.iter().all(|&v| v >= 0.0) {
        symmetrized(dim, m)
    } else {
        rebuild(&|v| v)
    };
    Ok((clamped, rebuild(&f64::sqrt)))
}

fn symmetrized(dim: usize, m: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            out[i * dim + j] = 0.5 * (m[i * dim + j] + m[j * dim + i]);
        }
    }
    out
}

/// Symmetrize and set negative eigenvalues to zero.
pub fn clamp_psd(dim: usize, m: &[f64]) -> Vec<f64> {
    let a = DMatrix::from_fn(dim, dim, |i, j| 0.5 * (m[i * dim + j] + m[j * dim + i]));
    let eig = SymmetricEigen::new(a.clone());
    if eig.eigenvalues.iter().all(|&v| v >= 0.0) {
        return symmetrized(dim, m);
    }
    let q = &eig.eigenvectors;
    let r = q * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0))) * q.transpose();
    let mut out = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            out[i * dim + j] = 0.5 * (r[(i, j)] + r[(j, i)]);
        }
    }
    out
}

/// Build `D_eff` for the chosen mode.
///
/// * paper: `Sigma / (alpha^2 beta)` from the model's declared metadata,
///   evaluated at `m` for law-dependent fields.
/// * green-kubo: `G / alpha^2` from an estimate of the integrated
///   autocovariance.
/// * explicit: `matrix` as given.
pub fn build_diffusion(
    mode: DiffusionMode,
    model: &NoiseModel,
    m: Option<&EmpiricalMeasure>,
    estimate: Option<&[f64]>,
    alpha: f64,
) -> Result<DiffusionSpec> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::usage("alpha must be positive"));
    }
    let d = model.dim();
    let a2 = alpha * alpha;
    match mode {
        DiffusionMode::Paper => {
            let sigma = model.sigma_matrix(m)?;
            let beta = model.mixing_metadata().beta;
            let mat = sigma.matrix.iter().map(|v| v / (a2 * beta)).collect();
            DiffusionSpec::new(mode, d, mat)
        }
        DiffusionMode::GreenKubo => {
            let g =
                estimate.ok_or_else(|| Error::usage("green-kubo mode needs an estimate of G"))?;
            DiffusionSpec::new(mode, d, g.iter().map(|v| v / a2).collect())
        }
        DiffusionMode::Explicit => {
            let mat = estimate.ok_or_else(|| Error::usage("explicit mode needs a matrix"))?;
            DiffusionSpec::new(mode, d, mat.to_vec())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitScheme {
    pub h: f64,
}

impl LimitScheme {
    /// Largest admissible step for `pot` at friction `alpha`.
    pub fn max_step(pot: &PotentialSpec, alpha: f64) -> f64 {
        let stiff = pot.max_stiffness();
        if stiff > 0.0 {
            MAX_STEP_FRACTION * alpha / stiff
        } else {
            f64::INFINITY
        }
    }

    pub fn validate(&self, pot: &PotentialSpec, alpha: f64) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::usage(format!(
                "limit step must be positive, got {}",
                self.h
            )));
        }
        let cap = Self::max_step(pot, alpha);
        if self.h > cap * (1.0 + 1e-12) {
            return Err(Error::usage(format!(
                "limit step {} exceeds 0.01 alpha / lambda_max = {cap}",
                self.h
            )));
        }
        Ok(())
    }

    /// Equal steps covering `[0, horizon]`, each at most `min(cap, requested)`.
    pub fn covering(
        horizon: f64,
        requested: Option<f64>,
        pot: &PotentialSpec,
        alpha: f64,
    ) -> (Self, u64) {
        let cap = Self::max_step(pot, alpha).min(requested.unwrap_or(f64::INFINITY));
        let cap = if cap.is_finite() {
            cap
        } else {
            horizon / 100.0
        };
        let n = crate::eps::step_count(horizon, cap);
        (
            LimitScheme {
                h: horizon / n as f64,
            },
            n,
        )
    }
}

/// Reusable Euler-Maruyama stepper.
pub struct LimitIntegrator<'a> {
    pot: &'a PotentialSpec,
    diff: &'a DiffusionSpec,
    scheme: LimitScheme,
    alpha: f64,
    grad: Vec<f64>,
    z: Vec<f64>,
    steps_taken: u64,
}

impl<'a> LimitIntegrator<'a> {
    pub fn new(
        pot: &'a PotentialSpec,
        diff: &'a DiffusionSpec,
        scheme: LimitScheme,
        alpha: f64,
    ) -> Self {
        LimitIntegrator {
            pot,
            diff,
            scheme,
            alpha,
            grad: Vec::new(),
            z: vec![0.0; diff.dim],
            steps_taken: 0,
        }
    }

    pub fn step<R: Rng + ?Sized>(&mut self, ens: &mut ParticleEnsemble, rng: &mut R) -> Result<()> {
        if ens.velocities.is_some() {
            return Err(Error::usage("limit step on an eps-mode ensemble"));
        }
        let d = ens.dim();
        if d != self.diff.dim {
            return Err(Error::usage("ensemble and diffusion differ in dimension"));
        }
        self.scheme.validate(self.pot, self.alpha)?;
        let n = ens.len();
        let h = self.scheme.h;
        self.grad.resize(n * d, 0.0);
        self.pot.grad_all(&ens.positions, &mut self.grad);
        let drift = h / self.alpha;
        let sh = h.sqrt();
        let noisy = !self.diff.is_zero();
        let s = &self.diff.sqrt;
        let pos = ens.positions.as_flat_mut();
        let mut finite = true;
        for i in 0..n {
            if noisy {
                for zk in self.z.iter_mut() {
                    *zk = rng.sample(StandardNormal);
                }
            }
            for k in 0..d {
                let idx = i * d + k;
                let mut inc = -drift * self.grad[idx];
                if noisy {
                    let row = &s[k * d..(k + 1) * d];
                    inc += sh * row.iter().zip(&self.z).map(|(a, b)| a * b).sum::<f64>();
                }
                pos[idx] += inc;
                finite &= pos[idx].is_finite();
            }
        }
        let step = self.steps_taken;
        self.steps_taken += 1;
        if !finite {
            return Err(Error::numeric(step, "limit state became non-finite"));
        }
        ens.time += h;
        Ok(())
    }

    pub fn run<R, O>(
        &mut self,
        ens: &mut ParticleEnsemble,
        rng: &mut R,
        n_steps: u64,
        mut observe: O,
    ) -> Result<()>
    where
        R: Rng + ?Sized,
        O: FnMut(u64, &ParticleEnsemble),
    {
        for i in 0..n_steps {
            self.step(ens, rng)?;
            observe(i, ens);
        }
        Ok(())
    }
}

/// One Euler-Maruyama step.
pub fn step_em<R: Rng + ?Sized>(
    ens: &mut ParticleEnsemble,
    pot: &PotentialSpec,
    diff: &DiffusionSpec,
    scheme: &LimitScheme,
    alpha: f64,
    rng: &mut R,
) -> Result<()> {
    LimitIntegrator::new(pot, diff, *scheme, alpha).step(ens, rng)
}

/// Run one replica of the limit system. Random draws come from the stream
/// `(cfg.seed, LimitReplica, group, replica)`: initial positions first, then
/// the Gaussian increments.
#[allow(clippy::too_many_arguments)]
pub fn run_limit_replica<O>(
    cfg: &RunConfig,
    pot: &PotentialSpec,
    diff: &DiffusionSpec,
    scheme: LimitScheme,
    n_steps: u64,
    group: u32,
    replica: u32,
    observe: O,
) -> Result<ParticleEnsemble>
where
    O: FnMut(u64, &ParticleEnsemble),
{
    cfg.validate()?;
    let mut rng = stream(cfg.seed, Purpose::LimitReplica, group, replica);
    let mut ens = ParticleEnsemble::initial_limit(cfg, &mut rng)?;
    LimitIntegrator::new(pot, diff, scheme, cfg.alpha)
        .run(&mut ens, &mut rng, n_steps, observe)
        .map_err(|e| e.with_context(format!("limit, replica {replica}")))?;
    Ok(ens)
}

/// Simulate replica 0 of the limit system to the horizon with the largest
/// admissible step (or `h` if smaller).
pub fn simulate_limit(
    cfg: &RunConfig,
    pot: &PotentialSpec,
    diff: &DiffusionSpec,
    h: Option<f64>,
) -> Result<ParticleEnsemble> {
    let (scheme, n) = LimitScheme::covering(cfg.horizon, h, pot, cfg.alpha);
    run_limit_replica(cfg, pot, diff, scheme, n, 0, 0, |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::InitialLaw;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(n: usize, horizon: f64, init: InitialLaw) -> RunConfig {
        RunConfig {
            dim: 1,
            n_particles: n,
            eps: 1.0,
            alpha: 1.0,
            horizon,
            h0: 0.05,
            seed: 11,
            replicas: 1,
            samples_per_replica: 1,
            init,
        }
    }

    fn point_mass(x: f64) -> InitialLaw {
        InitialLaw::Gaussian {
            mean: x,
            std: 0.0,
            velocity: 0.0,
        }
    }

    #[test]
    fn paper_and_green_kubo_examples() {
        let model = NoiseModel::scalar_ou(1, 2.0, 1.0).unwrap();
        let p = build_diffusion(DiffusionMode::Paper, &model, None, None, 1.0).unwrap();
        assert!((p.matrix[0] - 0.5).abs() < 1e-15);
        // G = 2 sigma^2 / gamma for the exponential autocovariance
        let g = [2.0 * 1.0 / 2.0];
        let gk = build_diffusion(DiffusionMode::GreenKubo, &model, None, Some(&g), 1.0).unwrap();
        assert!((gk.matrix[0] - 1.0).abs() < 1e-15);
        assert!(build_diffusion(DiffusionMode::GreenKubo, &model, None, None, 1.0).is_err());
    }

    #[test]
    fn diagonal_square_root() {
        let d = DiffusionSpec::new(DiffusionMode::Explicit, 2, vec![4.0, 0.0, 0.0, 9.0]).unwrap();
        let expect = [2.0, 0.0, 0.0, 3.0];
        for (a, b) in d.sqrt.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        assert!(DiffusionSpec::new(DiffusionMode::Explicit, 2, vec![1.0, 0.5, 0.4, 1.0]).is_err());
        assert!(DiffusionSpec::new(DiffusionMode::Explicit, 2, vec![1.0, 0.0, 0.0, -0.1]).is_err());
        let tiny = DiffusionSpec::new(DiffusionMode::Explicit, 1, vec![-1e-14]).unwrap();
        assert_eq!(tiny.matrix, vec![0.0]);
    }

    #[test]
    fn step_cap_enforced() {
        let pot = PotentialSpec::curie_weiss(1.0, 3.0).unwrap();
        assert!((LimitScheme::max_step(&pot, 2.0) - 0.005).abs() < 1e-15);
        assert!(LimitScheme { h: 0.006 }.validate(&pot, 2.0).is_err());
        let (s, n) = LimitScheme::covering(1.0, None, &pot, 2.0);
        assert_eq!(n, 200);
        assert!(s.validate(&pot, 2.0).is_ok());
    }

    #[test]
    fn identity_step() {
        let pot = PotentialSpec::quadratic(0.0).unwrap();
        let m = EmpiricalMeasure::from_scalars(&[1.0, -2.0]).unwrap();
        let mut ens = ParticleEnsemble::limit_mode(m.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        step_em(
            &mut ens,
            &pot,
            &DiffusionSpec::zero(1),
            &LimitScheme { h: 0.1 },
            1.0,
            &mut rng,
        )
        .unwrap();
        assert_eq!(ens.positions, m);
        assert!((ens.time - 0.1).abs() < 1e-15);
    }

    #[test]
    fn deterministic_flow_decays_exponentially() {
        let c = cfg(2, 2.0, point_mass(1.0));
        let pot = PotentialSpec::quadratic(1.0).unwrap();
        let ens = simulate_limit(&c, &pot, &DiffusionSpec::zero(1), None).unwrap();
        let h = 0.01;
        for &x in ens.positions.as_flat() {
            assert!((x - (-2.0f64).exp()).abs() < h, "{x}");
        }
        let again = simulate_limit(&c, &pot, &DiffusionSpec::zero(1), None).unwrap();
        assert_eq!(ens, again);
    }

    #[test]
    fn stationary_variance_of_linear_benchmark() {
        // lambda = alpha = 1, D_eff = 2: stationary variance D alpha / (2 lambda) = 1
        let c = RunConfig {
            n_particles: 100,
            ..cfg(100, 6.0, point_mass(0.0))
        };
        let pot = PotentialSpec::quadratic(1.0).unwrap();
        let diff = DiffusionSpec::new(DiffusionMode::Explicit, 1, vec![2.0]).unwrap();
        let (scheme, n) = LimitScheme::covering(c.horizon, None, &pot, c.alpha);
        let mut xs = Vec::new();
        for r in 0..100 {
            let e = run_limit_replica(&c, &pot, &diff, scheme, n, 0, r, |_, _| {}).unwrap();
            xs.extend_from_slice(e.positions.as_flat());
        }
        let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        // transient factor 1 - e^{-12} is negligible
        assert!((var - 1.0).abs() < 0.1, "{var}");
    }

    #[test]
    fn curie_weiss_mean_decays_independent_of_kappa() {
        let init = InitialLaw::Gaussian {
            mean: 2.0,
            std: 1.0,
            velocity: 0.0,
        };
        let c = cfg(200, 1.0, init);
        let diff = DiffusionSpec::new(DiffusionMode::Explicit, 1, vec![0.5]).unwrap();
        let expect = 2.0 * (-1.0f64).exp();
        for kappa in [0.0, 4.0] {
            let pot = PotentialSpec::curie_weiss(1.0, kappa).unwrap();
            let (scheme, n) = LimitScheme::covering(c.horizon, None, &pot, c.alpha);
            let means: Vec<f64> = (0..40)
                .map(|r| {
                    let e = run_limit_replica(&c, &pot, &diff, scheme, n, 0, r, |_, _| {}).unwrap();
                    e.positions.as_flat().iter().sum::<f64>() / 200.0
                })
                .collect();
            let m = means.iter().sum::<f64>() / 40.0;
            let sd = (means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 39.0).sqrt();
            let ci = 1.96 * sd / 40f64.sqrt() + 2.0 * scheme.h;
            assert!(
                (m - expect).abs() < ci + 0.02,
                "kappa {kappa}: {m} vs {expect}"
            );
        }
    }

    #[test]
    fn clusters_attract() {
        let init = InitialLaw::TwoCluster {
            separation: 4.0,
            std: 0.1,
            velocity: 0.0,
        };
        let c = cfg(64, 1.0, init);
        let pot = PotentialSpec::curie_weiss(0.0, 5.0).unwrap();
        let (scheme, n) = LimitScheme::covering(c.horizon, None, &pot, c.alpha);
        let mut spread = Vec::new();
        run_limit_replica(
            &c,
            &pot,
            &DiffusionSpec::zero(1),
            scheme,
            n,
            0,
            0,
            |i, e| {
                if i % 20 == 0 {
                    let xs = e.positions.as_flat();
                    let m = xs.iter().sum::<f64>() / xs.len() as f64;
                    spread.push(xs.iter().map(|x| (x - m).abs()).sum::<f64>() / xs.len() as f64);
                }
            },
        )
        .unwrap();
        assert!(spread.windows(2).all(|w| w[1] < w[0]));
        assert!(spread.last().unwrap() < &(0.1 * spread[0]));
    }

    proptest! {
        #[test]
        fn square_root_reconstructs(d in 1usize..=8, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b: Vec<f64> = (0..d * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            // B B^T, with a rank drop when d > 2
            let rank = if d > 2 { d - 1 } else { d };
            let mut a = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    a[i * d + j] = (0..rank).map(|k| b[i * d + k] * b[j * d + k]).sum();
                }
            }
            let spec = DiffusionSpec::new(DiffusionMode::Explicit, d, a.clone()).unwrap();
            let s = &spec.sqrt;
            for i in 0..d {
                for j in 0..d {
                    let r: f64 = (0..d).map(|k| s[i * d + k] * s[j * d + k]).sum();
                    prop_assert!((r - a[i * d + j]).abs() <= 1e-10, "{} vs {}", r, a[i * d + j]);
                }
            }
        }
    }
}
