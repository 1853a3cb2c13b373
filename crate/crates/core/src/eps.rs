//! Integrator for the N-particle inertial system
//!
//! ```text
//! dX = Y dt
//! eps dY = (-alpha Y - grad V(X, mu) + eps^{-1/2} eta_bar(t/eps)) dt
//! ```
//!
//! where `eta_bar` is the field averaged over the current empirical measure
//! and is shared by every particle.

use rand::Rng;
use serde::Serialize;

use crate::ensemble::{ParticleEnsemble, RunConfig, MAX_H0};
use crate::error::{Error, Result};
use crate::noise::{DriverState, NoiseModel};
use crate::potential::PotentialSpec;
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    Exponential,
    Euler,
}

impl SchemeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemeKind::Exponential => "exponential",
            SchemeKind::Euler => "euler",
        }
    }
}

/// How the forcing is held constant across a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForcingQuadrature {
    /// Exact time average of the driver over the step (drawn jointly with the
    /// endpoint); the measure is frozen at the left endpoint.
    StepAverage,
    /// Driver value at the left endpoint.
    LeftEndpoint,
}

impl ForcingQuadrature {
    pub fn as_str(self) -> &'static str {
        match self {
            ForcingQuadrature::StepAverage => "step-average",
            ForcingQuadrature::LeftEndpoint => "left-endpoint",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsScheme {
    pub kind: SchemeKind,
    /// Slow-time step.
    pub h: f64,
    pub quadrature: ForcingQuadrature,
}

impl EpsScheme {
    pub fn new(kind: SchemeKind, h: f64) -> Self {
        EpsScheme {
            kind,
            h,
            quadrature: ForcingQuadrature::StepAverage,
        }
    }

    pub fn with_quadrature(mut self, q: ForcingQuadrature) -> Self {
        self.quadrature = q;
        self
    }

    /// Check the step against the accuracy cap `h <= 0.2 eps` and, for Euler,
    /// the stability bound `h < 2 eps / alpha`.
    pub fn validate(&self, eps: f64, alpha: f64) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::usage(format!(
                "step must be positive, got {}",
                self.h
            )));
        }
        if self.h > MAX_H0 * eps * (1.0 + 1e-12) {
            return Err(Error::usage(format!(
                "step {} exceeds {MAX_H0} * eps = {}",
                self.h,
                MAX_H0 * eps
            )));
        }
        if self.kind == SchemeKind::Euler && self.h >= 2.0 * eps / alpha {
            return Err(Error::usage(format!(
                "euler step {} violates the stability bound 2 eps / alpha = {}",
                self.h,
                2.0 * eps / alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepReport {
    pub time: f64,
    /// `|eps^{-1/2} eta_bar|` applied during the step.
    pub forcing_norm: f64,
    pub max_speed: f64,
    /// Mean over particles of `|sqrt(eps) Y|^2` after the step.
    pub energy_proxy: f64,
}

/// What an observer sees after each step.
pub struct StepView<'a> {
    pub index: u64,
    pub h: f64,
    pub eps: f64,
    /// Law-averaged field value used for the step, before the `eps^{-1/2}` scale.
    pub forcing: &'a [f64],
    pub report: &'a StepReport,
    pub ensemble: &'a ParticleEnsemble,
}

/// Supplies driver values for each step.
pub trait ForcingSource {
    /// Driver vector to hold fixed over the next `delta_s` fast-time units.
    fn next_driver(&mut self, delta_s: f64, out: &mut [f64]) -> Result<()>;
}

/// Live OU driver advanced exactly with its own random stream.
pub struct LiveDriver<'a, R: Rng> {
    pub model: &'a NoiseModel,
    pub state: &'a mut DriverState,
    pub rng: &'a mut R,
    pub quadrature: ForcingQuadrature,
}

impl<R: Rng> ForcingSource for LiveDriver<'_, R> {
    fn next_driver(&mut self, delta_s: f64, out: &mut [f64]) -> Result<()> {
        match self.quadrature {
            ForcingQuadrature::StepAverage => self
                .state
                .advance_with_mean(self.model, delta_s, self.rng, out),
            ForcingQuadrature::LeftEndpoint => {
                out.copy_from_slice(&self.state.xi);
                self.state.advance(self.model, delta_s, self.rng)
            }
        }
    }
}

/// A driver path recorded on a fine fast-time grid: node values and exact
/// integrals over each fine interval. Replaying it at any multiple of the
/// fine step lets schemes with different steps see the same noise.
#[derive(Debug, Clone)]
pub struct DriverPath {
    pub fine_step: f64,
    pub width: usize,
    nodes: Vec<f64>,
    integrals: Vec<f64>,
}

impl DriverPath {
    pub fn record<R: Rng + ?Sized>(
        model: &NoiseModel,
        start: DriverState,
        fine_step: f64,
        n_fine: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let width = model.driver_len();
        let mut nodes = Vec::with_capacity((n_fine + 1) * width);
        let mut integrals = Vec::with_capacity(n_fine * width);
        let mut st = start;
        let mut mean = vec![0.0; width];
        nodes.extend_from_slice(&st.xi);
        for _ in 0..n_fine {
            st.advance_with_mean(model, fine_step, rng, &mut mean)?;
            integrals.extend(mean.iter().map(|m| m * fine_step));
            nodes.extend_from_slice(&st.xi);
        }
        Ok(DriverPath {
            fine_step,
            width,
            nodes,
            integrals,
        })
    }

    pub fn len(&self) -> usize {
        self.integrals.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.integrals.is_empty()
    }

    pub fn replay(&self, quadrature: ForcingQuadrature) -> PathReplay<'_> {
        PathReplay {
            path: self,
            cursor: 0,
            quadrature,
        }
    }
}

pub struct PathReplay<'a> {
    path: &'a DriverPath,
    cursor: usize,
    quadrature: ForcingQuadrature,
}

impl ForcingSource for PathReplay<'_> {
    fn next_driver(&mut self, delta_s: f64, out: &mut [f64]) -> Result<()> {
        let p = self.path;
        let ratio = delta_s / p.fine_step;
        let k = ratio.round() as usize;
        if k == 0 || (ratio - k as f64).abs() > 1e-6 {
            return Err(Error::usage(format!(
                "step {delta_s} is not a multiple of the recorded step {}",
                p.fine_step
            )));
        }
        if self.cursor + k > p.len() {
            return Err(Error::usage("recorded driver path is too short"));
        }
        let w = p.width;
        match self.quadrature {
            ForcingQuadrature::LeftEndpoint => {
                out.copy_from_slice(&p.nodes[self.cursor * w..(self.cursor + 1) * w]);
            }
            ForcingQuadrature::StepAverage => {
                for (j, o) in out.iter_mut().enumerate() {
                    let s: f64 = (self.cursor..self.cursor + k)
                        .map(|i| p.integrals[i * w + j])
                        .sum();
                    *o = s / (k as f64 * p.fine_step);
                }
            }
        }
        self.cursor += k;
        Ok(())
    }
}

/// `z - 1 + e^{-z}` without cancellation for small `z`.
fn phi2(z: f64) -> f64 {
    if z < 0.1 {
        let mut term = z * z / 2.0;
        let mut sum = term;
        for n in 3..=16 {
            term *= -z / n as f64;
            sum += term;
        }
        sum
    } else {
        z + (-z).exp_m1()
    }
}

/// Reusable integrator with scratch buffers.
pub struct EpsIntegrator<'a> {
    model: &'a NoiseModel,
    pot: &'a PotentialSpec,
    scheme: EpsScheme,
    alpha: f64,
    grad: Vec<f64>,
    driver: Vec<f64>,
    forcing: Vec<f64>,
    steps_taken: u64,
}

impl<'a> EpsIntegrator<'a> {
    pub fn new(
        model: &'a NoiseModel,
        pot: &'a PotentialSpec,
        scheme: EpsScheme,
        alpha: f64,
    ) -> Self {
        EpsIntegrator {
            model,
            pot,
            scheme,
            alpha,
            grad: Vec::new(),
            driver: vec![0.0; model.driver_len()],
            forcing: vec![0.0; model.dim()],
            steps_taken: 0,
        }
    }

    pub fn scheme(&self) -> &EpsScheme {
        &self.scheme
    }

    /// Advance `ens` by one step, drawing the driver from `source`.
    pub fn step<S: ForcingSource + ?Sized>(
        &mut self,
        ens: &mut ParticleEnsemble,
        source: &mut S,
    ) -> Result<StepReport> {
        let eps = ens
            .eps
            .ok_or_else(|| Error::usage("eps-system step on a limit-mode ensemble"))?;
        if ens.dim() != self.model.dim() {
            return Err(Error::usage("ensemble and noise model differ in dimension"));
        }
        self.scheme.validate(eps, self.alpha)?;
        let h = self.scheme.h;
        let alpha = self.alpha;
        let d = ens.dim();
        let n = ens.len();

        source.next_driver(h / eps, &mut self.driver)?;
        self.model
            .averaged_field(&self.driver, &ens.positions, &mut self.forcing);
        let inv_sqrt_eps = 1.0 / eps.sqrt();
        self.grad.resize(n * d, 0.0);
        self.pot.grad_all(&ens.positions, &mut self.grad);

        let vel = ens.velocities.as_mut().expect("eps mode has velocities");
        let pos = ens.positions.as_flat_mut();
        let mut energy = 0.0;
        let mut max_speed_sq: f64 = 0.0;
        let mut finite = true;
        match self.scheme.kind {
            SchemeKind::Exponential => {
                let z = alpha * h / eps;
                let r = (-z).exp();
                let om = -(-z).exp_m1();
                let c_xy = eps / alpha * om;
                let c_xf = eps / (alpha * alpha) * phi2(z);
                let c_yf = om / alpha;
                for i in 0..n {
                    let mut speed = 0.0;
                    for k in 0..d {
                        let idx = i * d + k;
                        let f = -self.grad[idx] + inv_sqrt_eps * self.forcing[k];
                        let y_old = vel[idx];
                        let y_new = y_old * r + c_yf * f;
                        pos[idx] += c_xy * y_old + c_xf * f;
                        vel[idx] = y_new;
                        speed += y_new * y_new;
                        finite &= y_new.is_finite() && pos[idx].is_finite();
                    }
                    energy += speed;
                    max_speed_sq = max_speed_sq.max(speed);
                }
            }
            SchemeKind::Euler => {
                let c = h / eps;
                for i in 0..n {
                    let mut speed = 0.0;
                    for k in 0..d {
                        let idx = i * d + k;
                        let f = -self.grad[idx] + inv_sqrt_eps * self.forcing[k];
                        let y_old = vel[idx];
                        let y_new = y_old + c * (-alpha * y_old + f);
                        pos[idx] += h * y_old;
                        vel[idx] = y_new;
                        speed += y_new * y_new;
                        finite &= y_new.is_finite() && pos[idx].is_finite();
                    }
                    energy += speed;
                    max_speed_sq = max_speed_sq.max(speed);
                }
            }
        }
        let step = self.steps_taken;
        self.steps_taken += 1;
        if !finite {
            return Err(Error::numeric(step, "eps-system state became non-finite"));
        }
        ens.time += h;
        let forcing_norm = inv_sqrt_eps * crate::measure::norm(&self.forcing);
        Ok(StepReport {
            time: ens.time,
            forcing_norm,
            max_speed: max_speed_sq.sqrt(),
            energy_proxy: eps * energy / n as f64,
        })
    }

    /// Law-averaged field used in the most recent step.
    pub fn last_forcing(&self) -> &[f64] {
        &self.forcing
    }

    /// Run `n_steps` steps, calling `observe` after each.
    pub fn run<S, O>(
        &mut self,
        ens: &mut ParticleEnsemble,
        source: &mut S,
        n_steps: u64,
        mut observe: O,
    ) -> Result<()>
    where
        S: ForcingSource + ?Sized,
        O: FnMut(&StepView<'_>),
    {
        let eps = ens
            .eps
            .ok_or_else(|| Error::usage("eps-system run on a limit-mode ensemble"))?;
        for index in 0..n_steps {
            let report = self.step(ens, source)?;
            observe(&StepView {
                index,
                h: self.scheme.h,
                eps,
                forcing: &self.forcing,
                report: &report,
                ensemble: ens,
            });
        }
        Ok(())
    }
}

/// One step of the eps-system with a live driver. `drv.fast_time` must equal
/// `ens.time / eps`.
pub fn step<R: Rng>(
    ens: &mut ParticleEnsemble,
    model: &NoiseModel,
    drv: &mut DriverState,
    pot: &PotentialSpec,
    scheme: &EpsScheme,
    alpha: f64,
    rng: &mut R,
) -> Result<StepReport> {
    let eps = ens
        .eps
        .ok_or_else(|| Error::usage("eps-system step on a limit-mode ensemble"))?;
    let expected = ens.time / eps;
    if (drv.fast_time - expected).abs() > 1e-9 * expected.max(1.0) {
        return Err(Error::usage(format!(
            "driver clock {} out of sync with slow time {} / eps {eps}",
            drv.fast_time, ens.time
        )));
    }
    let mut integ = EpsIntegrator::new(model, pot, *scheme, alpha);
    let mut src = LiveDriver {
        model,
        state: drv,
        rng,
        quadrature: scheme.quadrature,
    };
    integ.step(ens, &mut src)
}

/// Number of equal steps of size at most `h` covering `[0, horizon]`.
pub fn step_count(horizon: f64, h: f64) -> u64 {
    ((horizon / h) - 1e-9).ceil().max(1.0) as u64
}

/// Scheme for `cfg`: the configured step fraction for the exponential kind,
/// and the horizon split into equal steps no longer than that.
pub fn scheme_for(
    cfg: &RunConfig,
    kind: SchemeKind,
    quadrature: ForcingQuadrature,
) -> (EpsScheme, u64) {
    let n = step_count(cfg.horizon, cfg.eps_step());
    let h = cfg.horizon / n as f64;
    (EpsScheme::new(kind, h).with_quadrature(quadrature), n)
}

/// Run one replica of the eps-system from the configured initial law.
///
/// Random draws come from the stream `(cfg.seed, EpsReplica, group, replica)`:
/// initial positions first, then the stationary driver, then the driver
/// transitions.
#[allow(clippy::too_many_arguments)]
pub fn run_eps_replica<O>(
    cfg: &RunConfig,
    model: &NoiseModel,
    pot: &PotentialSpec,
    scheme: EpsScheme,
    n_steps: u64,
    group: u32,
    replica: u32,
    observe: O,
) -> Result<ParticleEnsemble>
where
    O: FnMut(&StepView<'_>),
{
    cfg.validate()?;
    if model.dim() != cfg.dim {
        return Err(Error::usage(
            "noise model dimension differs from run dimension",
        ));
    }
    let mut rng = stream(cfg.seed, Purpose::EpsReplica, group, replica);
    let mut ens = ParticleEnsemble::initial_eps(cfg, &mut rng)?;
    let mut drv = DriverState::stationary(model, &mut rng);
    let mut integ = EpsIntegrator::new(model, pot, scheme, cfg.alpha);
    let mut src = LiveDriver {
        model,
        state: &mut drv,
        rng: &mut rng,
        quadrature: scheme.quadrature,
    };
    integ
        .run(&mut ens, &mut src, n_steps, observe)
        .map_err(|e| e.with_context(format!("eps={}, replica {replica}", cfg.eps)))?;
    Ok(ens)
}

/// Simulate replica 0 of the eps-system to the horizon, returning the
/// terminal ensemble and the per-step diagnostics.
pub fn simulate_eps(
    cfg: &RunConfig,
    model: &NoiseModel,
    pot: &PotentialSpec,
    kind: SchemeKind,
) -> Result<(ParticleEnsemble, Vec<StepReport>)> {
    let (scheme, n) = scheme_for(cfg, kind, ForcingQuadrature::StepAverage);
    let mut reports = Vec::with_capacity(n as usize);
    let ens = run_eps_replica(cfg, model, pot, scheme, n, 0, 0, |v| {
        reports.push(*v.report)
    })?;
    Ok((ens, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::InitialLaw;
    use crate::measure::EmpiricalMeasure;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn silent() -> NoiseModel {
        NoiseModel::scalar_ou(1, 1.0, 0.0).unwrap()
    }

    fn single(x0: f64, y0: f64, eps: f64) -> ParticleEnsemble {
        ParticleEnsemble::eps_mode(
            EmpiricalMeasure::from_scalars(&[x0]).unwrap(),
            vec![y0],
            eps,
        )
        .unwrap()
    }

    struct Zero;
    impl ForcingSource for Zero {
        fn next_driver(&mut self, _: f64, out: &mut [f64]) -> Result<()> {
            out.iter_mut().for_each(|o| *o = 0.0);
            Ok(())
        }
    }

    #[test]
    fn homogeneous_dynamics_are_exact() {
        let pot = PotentialSpec::quadratic(0.0).unwrap();
        let model = silent();
        for (eps, alpha) in [(1.0, 1.0), (0.01, 2.5)] {
            for h0 in [0.2, 0.07, 0.01] {
                let (x0, y0) = (0.3, -1.7);
                let mut ens = single(x0, y0, eps);
                let sch = EpsScheme::new(SchemeKind::Exponential, h0 * eps);
                let mut integ = EpsIntegrator::new(&model, &pot, sch, alpha);
                let n = 300;
                integ.run(&mut ens, &mut Zero, n, |_| {}).unwrap();
                let t = n as f64 * h0 * eps;
                let y = y0 * (-alpha * t / eps).exp();
                let x = x0 + eps / alpha * y0 * (-(-alpha * t / eps).exp_m1());
                let ys = ens.velocities.as_ref().unwrap()[0];
                let xs = ens.positions.as_flat()[0];
                assert!((ys - y).abs() <= 1e-12 * y.abs(), "{ys} vs {y}");
                assert!((xs - x).abs() <= 1e-12 * x.abs(), "{xs} vs {x}");
            }
        }
    }

    #[test]
    fn constant_force_equilibrium() {
        // quadratic with lambda = 0 and a constant custom push c
        let c = 0.8;
        let pot = PotentialSpec::custom(
            std::sync::Arc::new(move |_x: &[f64], _m: &EmpiricalMeasure, out: &mut [f64]| {
                out[0] = -c
            }),
            1.0,
        )
        .unwrap();
        let alpha = 2.0;
        let model = silent();
        for kind in [SchemeKind::Exponential, SchemeKind::Euler] {
            let mut ens = single(0.0, c / alpha, 0.1);
            let mut integ = EpsIntegrator::new(&model, &pot, EpsScheme::new(kind, 0.01), alpha);
            integ.run(&mut ens, &mut Zero, 50, |_| {}).unwrap();
            let y = ens.velocities.unwrap()[0];
            assert!((y - c / alpha).abs() < 1e-14);
        }
    }

    #[test]
    fn scheme_validation() {
        assert!(EpsScheme::new(SchemeKind::Exponential, 0.02)
            .validate(0.1, 1.0)
            .is_ok());
        assert!(EpsScheme::new(SchemeKind::Exponential, 0.03)
            .validate(0.1, 1.0)
            .is_err());
        // euler: 0.02 < 2 * 0.1 / 5 = 0.04, but 0.02 >= 2 * 0.1 / 12
        assert!(EpsScheme::new(SchemeKind::Euler, 0.02)
            .validate(0.1, 5.0)
            .is_ok());
        assert!(EpsScheme::new(SchemeKind::Euler, 0.02)
            .validate(0.1, 12.0)
            .is_err());
    }

    #[test]
    fn forcing_is_common_to_all_particles() {
        // zero potential and zero initial velocity: after one step every
        // particle carries the same velocity, set by the shared forcing alone
        let model = NoiseModel::scalar_ou(1, 1.0, 1.0).unwrap();
        let pot = PotentialSpec::quadratic(0.0).unwrap();
        let m = EmpiricalMeasure::from_scalars(&[-2.0, 0.0, 0.5, 3.0]).unwrap();
        let mut ens = ParticleEnsemble::eps_mode(m, vec![0.0; 4], 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut drv = DriverState::stationary(&model, &mut rng);
        let sch = EpsScheme::new(SchemeKind::Exponential, 0.005);
        step(&mut ens, &model, &mut drv, &pot, &sch, 1.0, &mut rng).unwrap();
        let v = ens.velocities.unwrap();
        assert!(v.iter().all(|&y| y == v[0]));
        assert!(v[0] != 0.0);
        assert!((drv.fast_time - 0.05).abs() < 1e-15);
    }

    #[test]
    fn driver_clock_must_match() {
        let model = NoiseModel::scalar_ou(1, 1.0, 1.0).unwrap();
        let pot = PotentialSpec::quadratic(1.0).unwrap();
        let mut ens = single(0.0, 0.0, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut drv = DriverState::stationary(&model, &mut rng);
        drv.fast_time = 3.0;
        let sch = EpsScheme::new(SchemeKind::Exponential, 0.01);
        assert!(matches!(
            step(&mut ens, &model, &mut drv, &pot, &sch, 1.0, &mut rng),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn blow_up_is_a_numeric_error() {
        let model = NoiseModel::scalar_ou(1, 1.0, 0.0).unwrap();
        let pot = PotentialSpec::custom(
            std::sync::Arc::new(|x: &[f64], _m: &EmpiricalMeasure, out: &mut [f64]| {
                out[0] = -1e300 * x[0].abs().max(1.0)
            }),
            1.0,
        )
        .unwrap();
        let mut ens = single(1.0, 0.0, 0.01);
        let mut integ =
            EpsIntegrator::new(&model, &pot, EpsScheme::new(SchemeKind::Euler, 0.001), 1.0);
        let err = integ.run(&mut ens, &mut Zero, 100, |_| {}).unwrap_err();
        assert!(matches!(err, Error::Numeric { .. }));
        assert_eq!(err.exit_code(), 2);
    }

    fn cfg(eps: f64, n: usize, init: InitialLaw) -> RunConfig {
        RunConfig {
            dim: 1,
            n_particles: n,
            eps,
            alpha: 1.0,
            horizon: 2.0,
            h0: 0.05,
            seed: 42,
            replicas: 1,
            samples_per_replica: 1,
            init,
        }
    }

    /// Dense RK4 reference for `x'' = -x' - x`.
    fn oscillator_reference(x0: f64, v0: f64, t: f64) -> f64 {
        let n = 200_000;
        let h = t / n as f64;
        let f = |x: f64, v: f64| (v, -v - x);
        let (mut x, mut v) = (x0, v0);
        for _ in 0..n {
            let (a1, b1) = f(x, v);
            let (a2, b2) = f(x + 0.5 * h * a1, v + 0.5 * h * b1);
            let (a3, b3) = f(x + 0.5 * h * a2, v + 0.5 * h * b2);
            let (a4, b4) = f(x + h * a3, v + h * b3);
            x += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
            v += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        }
        x
    }

    #[test]
    fn deterministic_oscillator() {
        let init = InitialLaw::Gaussian {
            mean: 1.0,
            std: 0.0,
            velocity: 0.0,
        };
        let c = cfg(1.0, 3, init);
        let pot = PotentialSpec::quadratic(1.0).unwrap();
        let (ens, reports) = simulate_eps(&c, &silent(), &pot, SchemeKind::Exponential).unwrap();
        let reference = oscillator_reference(1.0, 0.0, 2.0);
        let h = c.eps_step();
        for &x in ens.positions.as_flat() {
            assert!((x - reference).abs() < 2.0 * h, "{x} vs {reference}");
        }
        assert_eq!(reports.len(), 40);
        assert!((ens.time - 2.0).abs() < 1e-12);

        let (again, _) = simulate_eps(&c, &silent(), &pot, SchemeKind::Exponential).unwrap();
        assert_eq!(ens, again);
    }

    #[test]
    fn recorded_path_replays_consistently() {
        let model = NoiseModel::scalar_ou(1, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let st = DriverState::stationary(&model, &mut rng);
        let path = DriverPath::record(&model, st, 0.01, 20, &mut rng).unwrap();
        let mut coarse = path.replay(ForcingQuadrature::StepAverage);
        let mut fine = path.replay(ForcingQuadrature::StepAverage);
        let mut a = [0.0];
        coarse.next_driver(0.05, &mut a).unwrap();
        let mut acc = 0.0;
        for _ in 0..5 {
            let mut b = [0.0];
            fine.next_driver(0.01, &mut b).unwrap();
            acc += b[0] / 5.0;
        }
        assert!((a[0] - acc).abs() < 1e-14);
        assert!(coarse.next_driver(0.033, &mut a).is_err());
    }
}
