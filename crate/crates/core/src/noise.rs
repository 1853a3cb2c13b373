//! Stationary mixing random fields `eta(s, x)` built from Ornstein-Uhlenbeck
//! drivers, their fast-time evolution and the law-averaged forcing.
//!
//! Every built-in field is linear in the driver vector `xi`, so averaging the
//! field over a step is the same as evaluating it at the step-averaged driver.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{pairwise_sum, EmpiricalMeasure, Point};
use crate::rng::{stream, Purpose};

/// Driver values are truncated at this many standard deviations in the
/// clipped variant.
pub const CLIP_SIGMAS: f64 = 6.0;

/// Scalar profile `g` of a separable field, applied to the coordinate sum
/// `s = x_1 + ... + x_d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// `g = 1`
    One,
    /// `g = cos(s)`
    Cos,
    /// `g = clamp(s, -1, 1)`; Lipschitz but not twice differentiable at `|s| = 1`.
    Clip,
    /// `g = tanh(s)`
    Tanh,
}

impl Profile {
    pub fn eval(self, s: f64) -> f64 {
        match self {
            Profile::One => 1.0,
            Profile::Cos => s.cos(),
            Profile::Clip => s.clamp(-1.0, 1.0),
            Profile::Tanh => s.tanh(),
        }
    }

    /// `(sup|g|, sup|g'|, sup|g''|)` as functions of the scalar argument.
    pub fn bounds(self) -> (f64, f64, f64) {
        match self {
            Profile::One => (1.0, 0.0, 0.0),
            Profile::Cos => (1.0, 1.0, 1.0),
            Profile::Clip => (1.0, 1.0, 0.0),
            Profile::Tanh => (1.0, 1.0, 4.0 / (3.0 * 3f64.sqrt())),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::One => "one",
            Profile::Cos => "cos",
            Profile::Clip => "clip",
            Profile::Tanh => "tanh",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierMode {
    pub omega: Vec<f64>,
    pub a: f64,
    pub b: f64,
}

impl FourierMode {
    fn phase(&self, x: &[f64]) -> f64 {
        self.omega.iter().zip(x).map(|(w, c)| w * c).sum()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let p = self.phase(x);
        self.a * p.cos() + self.b * p.sin()
    }

    fn amplitude(&self) -> f64 {
        self.a.abs() + self.b.abs()
    }

    fn frequency(&self) -> f64 {
        self.omega.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    /// `eta = xi`, one driver per space dimension, no `x` dependence.
    ScalarOu,
    /// `eta = xi * g(x)`.
    Separable(Profile),
    /// `eta_j = sum_k xi_{k,j} (a_k cos(w_k.x) + b_k sin(w_k.x))`.
    FourierField(Vec<FourierMode>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    kind: NoiseKind,
    dim: usize,
    gamma: f64,
    sigma: f64,
    clip: bool,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, dim: usize, gamma: f64, sigma: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::usage("noise dimension must be at least 1"));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::usage(format!(
                "mixing rate gamma must be positive and finite, got {gamma}"
            )));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::usage(format!(
                "driver amplitude sigma must be finite and >= 0, got {sigma}"
            )));
        }
        if let NoiseKind::FourierField(modes) = &kind {
            if modes.is_empty() {
                return Err(Error::usage("fourier field needs at least one mode"));
            }
            for m in modes {
                if m.omega.len() != dim {
                    return Err(Error::usage(format!(
                        "mode frequency of dimension {} in a {dim}-dimensional field",
                        m.omega.len()
                    )));
                }
                if !(m.a.is_finite() && m.b.is_finite() && m.omega.iter().all(|w| w.is_finite())) {
                    return Err(Error::usage("fourier mode parameters must be finite"));
                }
            }
        }
        Ok(NoiseModel {
            kind,
            dim,
            gamma,
            sigma,
            clip: false,
        })
    }

    pub fn scalar_ou(dim: usize, gamma: f64, sigma: f64) -> Result<Self> {
        Self::new(NoiseKind::ScalarOu, dim, gamma, sigma)
    }

    /// Truncate driver values at `CLIP_SIGMAS * sigma` when evaluating the field.
    pub fn clipped(mut self, clip: bool) -> Self {
        self.clip = clip;
        self
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            NoiseKind::ScalarOu => "scalar-ou",
            NoiseKind::Separable(_) => "separable",
            NoiseKind::FourierField(_) => "fourier-field",
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn is_clipped(&self) -> bool {
        self.clip
    }

    /// True when the field does not depend on the state.
    pub fn is_state_independent(&self) -> bool {
        matches!(
            self.kind,
            NoiseKind::ScalarOu | NoiseKind::Separable(Profile::One)
        )
    }

    /// Number of scalar OU drivers.
    pub fn driver_len(&self) -> usize {
        match &self.kind {
            NoiseKind::ScalarOu | NoiseKind::Separable(_) => self.dim,
            NoiseKind::FourierField(modes) => modes.len() * self.dim,
        }
    }

    #[inline]
    fn effective(&self, xi: f64) -> f64 {
        if self.clip {
            let c = CLIP_SIGMAS * self.sigma;
            xi.clamp(-c, c)
        } else {
            xi
        }
    }

    /// Field value for driver values `xi` at `x`, written into `out`.
    pub fn field(&self, xi: &[f64], x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        match &self.kind {
            NoiseKind::ScalarOu => {
                for (o, &z) in out.iter_mut().zip(xi) {
                    *o = self.effective(z);
                }
            }
            NoiseKind::Separable(g) => {
                let gx = g.eval(x.iter().sum());
                for (o, &z) in out.iter_mut().zip(xi) {
                    *o = self.effective(z) * gx;
                }
            }
            NoiseKind::FourierField(modes) => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for (k, m) in modes.iter().enumerate() {
                    let phi = m.eval(x);
                    for (j, o) in out.iter_mut().enumerate() {
                        *o += self.effective(xi[k * d + j]) * phi;
                    }
                }
            }
        }
    }

    /// Per-driver coefficient of the law-averaged field: `eta_bar_j = sum_k
    /// xi_{k,j} c_k(m)`. Scalar-ou and separable fields have a single
    /// coefficient.
    pub fn law_coefficients(&self, m: &EmpiricalMeasure) -> Vec<f64> {
        let n = m.len();
        match &self.kind {
            NoiseKind::ScalarOu => vec![1.0],
            NoiseKind::Separable(g) => {
                vec![pairwise_sum(n, |i| g.eval(m.point(i).iter().sum())) / n as f64]
            }
            NoiseKind::FourierField(modes) => modes
                .iter()
                .map(|md| pairwise_sum(n, |i| md.eval(m.point(i))) / n as f64)
                .collect(),
        }
    }

    /// `(1/n) sum_i eta(xi, X_i)` for driver values `xi`, written into `out`.
    pub fn averaged_field(&self, xi: &[f64], m: &EmpiricalMeasure, out: &mut [f64]) {
        let d = self.dim;
        match &self.kind {
            NoiseKind::ScalarOu => self.field(xi, &[], out),
            _ => {
                let coeffs = self.law_coefficients(m);
                out.iter_mut().for_each(|o| *o = 0.0);
                for (k, c) in coeffs.iter().enumerate() {
                    for (j, o) in out.iter_mut().enumerate() {
                        *o += self.effective(xi[k * d + j]) * c;
                    }
                }
            }
        }
    }

    pub fn eval_field(&self, state: &DriverState, x: &Point) -> Result<Point> {
        self.check_state(state)?;
        if x.dim() != self.dim {
            return Err(Error::usage(format!(
                "point of dimension {} for a {}-dimensional field",
                x.dim(),
                self.dim
            )));
        }
        let mut out = vec![0.0; self.dim];
        self.field(&state.xi, x.coords(), &mut out);
        Ok(Point(out))
    }

    pub fn averaged_forcing(&self, state: &DriverState, m: &EmpiricalMeasure) -> Result<Point> {
        self.check_state(state)?;
        if m.is_empty() {
            return Err(Error::usage("averaged forcing over an empty measure"));
        }
        if m.dim() != self.dim {
            return Err(Error::usage("measure dimension does not match the field"));
        }
        let mut out = vec![0.0; self.dim];
        self.averaged_field(&state.xi, m, &mut out);
        Ok(Point(out))
    }

    fn check_state(&self, state: &DriverState) -> Result<()> {
        if state.xi.len() != self.driver_len() {
            return Err(Error::usage(format!(
                "driver state of length {} for a model with {} drivers",
                state.xi.len(),
                self.driver_len()
            )));
        }
        Ok(())
    }

    pub fn mixing_metadata(&self) -> MixingMetadata {
        MixingMetadata {
            gamma: self.gamma,
            k: 1.0 / self.gamma,
            beta: self.gamma,
            sigma_sq: self.sigma * self.sigma,
        }
    }

    /// Stationary second-moment matrix of the law-averaged forcing for a
    /// frozen measure. The result is `c * I` for every built-in kind.
    pub fn sigma_matrix(&self, m: Option<&EmpiricalMeasure>) -> Result<SigmaMatrix> {
        let s2 = self.sigma * self.sigma;
        let (scale, law_dependent) = match &self.kind {
            NoiseKind::ScalarOu => (s2, false),
            _ => {
                let m = m.ok_or_else(|| {
                    Error::usage(format!(
                        "a measure is required for the {} field",
                        self.kind_name()
                    ))
                })?;
                if m.dim() != self.dim {
                    return Err(Error::usage("measure dimension does not match the field"));
                }
                let c = self.law_coefficients(m);
                let dep = !self.is_state_independent();
                (s2 * c.iter().map(|v| v * v).sum::<f64>(), dep)
            }
        };
        let d = self.dim;
        let mut matrix = vec![0.0; d * d];
        for i in 0..d {
            matrix[i * d + i] = scale;
        }
        Ok(SigmaMatrix {
            dim: d,
            matrix,
            law_dependent,
        })
    }

    /// Analytic upper bounds on the mean norms of the field and its
    /// derivatives. The OU driver is not differentiable in time, so the time
    /// derivative is the finite difference over `fd_step` fast-time units.
    pub fn h3_bound(&self, fd_step: f64) -> H3Bound {
        let d = self.dim as f64;
        let s = self.sigma;
        let dt_factor = (2.0 * (-(-self.gamma * fd_step).exp_m1())).sqrt() / fd_step;
        match &self.kind {
            NoiseKind::ScalarOu => H3Bound {
                field: s * d.sqrt(),
                d_time: s * d.sqrt() * dt_factor,
                d_space: 0.0,
                d_space2: 0.0,
            },
            NoiseKind::Separable(g) => {
                let (m0, m1, m2) = g.bounds();
                H3Bound {
                    field: s * d.sqrt() * m0,
                    d_time: s * d.sqrt() * dt_factor * m0,
                    d_space: s * d.sqrt() * m1 * d.sqrt(),
                    d_space2: s * d.sqrt() * m2 * d,
                }
            }
            NoiseKind::FourierField(modes) => {
                let l2 = |f: &dyn Fn(&FourierMode) -> f64| {
                    modes.iter().map(|m| f(m).powi(2)).sum::<f64>().sqrt()
                };
                let a0 = l2(&|m| m.amplitude());
                let a1 = l2(&|m| m.amplitude() * m.frequency());
                let a2 = l2(&|m| m.amplitude() * m.frequency().powi(2));
                H3Bound {
                    field: s * d.sqrt() * a0,
                    d_time: s * d.sqrt() * dt_factor * a0,
                    d_space: s * d.sqrt() * a1,
                    d_space2: s * d.sqrt() * a2,
                }
            }
        }
    }

    /// Monte Carlo estimates of the quantities bounded by [`h3_bound`]:
    /// for each probe point, mean norms over `draws` stationary driver
    /// states, then the maximum over points.
    ///
    /// [`h3_bound`]: NoiseModel::h3_bound
    pub fn h3_probe(&self, xs: &[Point], draws: usize, fd_step: f64, seed: u64) -> Result<H3Bound> {
        let mut rng = stream(seed, Purpose::Diagnostics, 0x3, 0);
        let d = self.dim;
        let hx = 1e-4;
        let mut best = H3Bound::default();
        for x in xs {
            if x.dim() != d {
                return Err(Error::usage(
                    "probe point dimension does not match the field",
                ));
            }
            let mut acc = H3Bound::default();
            let mut base = vec![0.0; d];
            let mut buf = vec![0.0; d];
            for _ in 0..draws {
                let mut st = DriverState::stationary(self, &mut rng);
                let xi0 = st.xi.clone();
                self.field(&xi0, x.coords(), &mut base);
                acc.field += crate::measure::norm(&base);

                st.advance(self, fd_step, &mut rng)?;
                self.field(&st.xi, x.coords(), &mut buf);
                let dt: f64 = base
                    .iter()
                    .zip(&buf)
                    .map(|(a, b)| ((b - a) / fd_step).powi(2))
                    .sum();
                acc.d_time += dt.sqrt();

                // central differences in every coordinate direction
                let mut jac = 0.0;
                let mut hess = 0.0;
                for k in 0..d {
                    for l in 0..d {
                        let shifted = |dk: f64, dl: f64, out: &mut [f64]| {
                            let mut y = x.0.clone();
                            y[k] += dk;
                            y[l] += dl;
                            self.field(&xi0, &y, out);
                        };
                        let h2 = 1e-3;
                        let mut pp = vec![0.0; d];
                        let mut pm = vec![0.0; d];
                        let mut mp = vec![0.0; d];
                        let mut mm = vec![0.0; d];
                        shifted(h2, h2, &mut pp);
                        shifted(h2, -h2, &mut pm);
                        shifted(-h2, h2, &mut mp);
                        shifted(-h2, -h2, &mut mm);
                        for j in 0..d {
                            let v = (pp[j] - pm[j] - mp[j] + mm[j]) / (4.0 * h2 * h2);
                            hess += v * v;
                        }
                    }
                    let mut plus = vec![0.0; d];
                    let mut minus = vec![0.0; d];
                    let mut y = x.0.clone();
                    y[k] += hx;
                    self.field(&xi0, &y, &mut plus);
                    y[k] -= 2.0 * hx;
                    self.field(&xi0, &y, &mut minus);
                    for j in 0..d {
                        let v = (plus[j] - minus[j]) / (2.0 * hx);
                        jac += v * v;
                    }
                }
                acc.d_space += jac.sqrt();
                acc.d_space2 += hess.sqrt();
            }
            let n = draws as f64;
            best.field = best.field.max(acc.field / n);
            best.d_time = best.d_time.max(acc.d_time / n);
            best.d_space = best.d_space.max(acc.d_space / n);
            best.d_space2 = best.d_space2.max(acc.d_space2 / n);
        }
        Ok(best)
    }
}

/// Declared mixing envelope `m(s) = exp(-gamma s)` and derived constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixingMetadata {
    pub gamma: f64,
    /// Integral of the envelope.
    pub k: f64,
    /// Minus the envelope slope at zero.
    pub beta: f64,
    /// Stationary variance of each driver component.
    pub sigma_sq: f64,
}

impl MixingMetadata {
    pub fn envelope(&self, s: f64) -> f64 {
        (-self.gamma * s).exp()
    }

    /// Integral of the fourth root of the envelope over `[0, inf)`.
    pub fn fourth_root_integral(&self) -> f64 {
        4.0 / self.gamma
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaMatrix {
    pub dim: usize,
    /// Row-major `dim x dim`.
    pub matrix: Vec<f64>,
    /// Value holds for the supplied measure only; it moves with the law.
    pub law_dependent: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct H3Bound {
    pub field: f64,
    pub d_time: f64,
    pub d_space: f64,
    pub d_space2: f64,
}

/// Current values of the OU drivers and the fast clock.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverState {
    pub xi: Vec<f64>,
    pub fast_time: f64,
}

/// `x - 2(1 - e^-x) + (1 - e^-2x)/2`, accurate for small `x`.
fn integral_variance_shape(x: f64) -> f64 {
    if x < 0.1 {
        // sum_{n>=3} (-1)^{n+1} (2^{n-1} - 2) x^n / n!
        let mut term = x * x / 2.0; // x^2 / 2!
        let mut sum = 0.0;
        for n in 3..=14 {
            term *= x / n as f64;
            let c = (2f64.powi(n - 1) - 2.0) * if n % 2 == 1 { 1.0 } else { -1.0 };
            sum += c * term;
        }
        sum
    } else {
        x + 2.0 * (-x).exp_m1() - 0.5 * (-2.0 * x).exp_m1()
    }
}

impl DriverState {
    /// Driver drawn from the stationary law `N(0, sigma^2)` per component.
    pub fn stationary<R: Rng + ?Sized>(model: &NoiseModel, rng: &mut R) -> Self {
        let xi = (0..model.driver_len())
            .map(|_| model.sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        DriverState { xi, fast_time: 0.0 }
    }

    /// Exact OU transition over `delta_s` fast-time units.
    pub fn advance<R: Rng + ?Sized>(
        &mut self,
        model: &NoiseModel,
        delta_s: f64,
        rng: &mut R,
    ) -> Result<()> {
        if !(delta_s >= 0.0) {
            return Err(Error::usage(format!(
                "driver step must be >= 0, got {delta_s}"
            )));
        }
        if delta_s == 0.0 {
            return Ok(());
        }
        let a = (-model.gamma * delta_s).exp();
        let sd = model.sigma * (-(-2.0 * model.gamma * delta_s).exp_m1()).sqrt();
        for x in self.xi.iter_mut() {
            *x = *x * a + sd * rng.sample::<f64, _>(StandardNormal);
        }
        self.fast_time += delta_s;
        Ok(())
    }

    /// Exact joint transition of the driver and its time average over the
    /// step. `mean` receives `(1/delta_s) * integral of xi` over the step
    /// (the left value when `delta_s == 0`).
    pub fn advance_with_mean<R: Rng + ?Sized>(
        &mut self,
        model: &NoiseModel,
        delta_s: f64,
        rng: &mut R,
        mean: &mut [f64],
    ) -> Result<()> {
        if !(delta_s >= 0.0) {
            return Err(Error::usage(format!(
                "driver step must be >= 0, got {delta_s}"
            )));
        }
        if delta_s == 0.0 {
            mean.copy_from_slice(&self.xi);
            return Ok(());
        }
        let g = model.gamma;
        let s2 = model.sigma * model.sigma;
        let x = g * delta_s;
        let a = (-x).exp();
        let one_minus_a = -(-x).exp_m1();
        let v11 = s2 * -(-2.0 * x).exp_m1();
        let v12 = s2 / g * one_minus_a * one_minus_a;
        let v22 = 2.0 * s2 / (g * g) * integral_variance_shape(x);
        let l11 = v11.sqrt();
        let l21 = if l11 > 0.0 { v12 / l11 } else { 0.0 };
        let l22 = (v22 - l21 * l21).max(0.0).sqrt();
        for (xi, m) in self.xi.iter_mut().zip(mean.iter_mut()) {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let integral = *xi * one_minus_a / g + l21 * z1 + l22 * z2;
            *xi = *xi * a + l11 * z1;
            *m = integral / delta_s;
        }
        self.fast_time += delta_s;
        Ok(())
    }
}

/// Stationary driver state for `model` from the stream keyed by `seed`.
pub fn init_stationary(model: &NoiseModel, seed: u64) -> DriverState {
    let mut rng = stream(seed, Purpose::Diagnostics, 0, 0);
    DriverState::stationary(model, &mut rng)
}
