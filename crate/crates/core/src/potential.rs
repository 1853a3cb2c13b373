//! Distribution-dependent potentials `grad V(x, mu)`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::measure::{norm, EmpiricalMeasure, Point};
use crate::rng::{stream, Purpose};
use crate::transport::w2_assignment;

/// User-supplied gradient: writes `grad V(x, mu)` into the output slice.
pub type GradFn = Arc<dyn Fn(&[f64], &EmpiricalMeasure, &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub enum PotentialKind {
    /// `V = lambda |x|^2 / 2`.
    Quadratic,
    /// `grad V = lambda x + kappa (x - mean(mu))`.
    CurieWeiss,
    Custom(GradFn),
}

impl fmt::Debug for PotentialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialKind::Quadratic => write!(f, "Quadratic"),
            PotentialKind::CurieWeiss => write!(f, "CurieWeiss"),
            PotentialKind::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PotentialSpec {
    kind: PotentialKind,
    lambda: f64,
    kappa: f64,
    lipschitz_bound: f64,
}

impl PotentialSpec {
    pub fn quadratic(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(PotentialSpec {
            kind: PotentialKind::Quadratic,
            lambda,
            kappa: 0.0,
            lipschitz_bound: lambda.max(f64::MIN_POSITIVE),
        })
    }

    pub fn curie_weiss(lambda: f64, kappa: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if !kappa.is_finite() {
            return Err(Error::usage("kappa must be finite"));
        }
        Ok(PotentialSpec {
            kind: PotentialKind::CurieWeiss,
            lambda,
            kappa,
            lipschitz_bound: (lambda + 2.0 * kappa.abs()).max(f64::MIN_POSITIVE),
        })
    }

    /// A custom gradient with a declared Lipschitz constant. The constant also
    /// serves as the stiffness bound for the limit-SDE step.
    pub fn custom(grad: GradFn, lipschitz_bound: f64) -> Result<Self> {
        if !(lipschitz_bound > 0.0 && lipschitz_bound.is_finite()) {
            return Err(Error::usage("declared Lipschitz bound must be positive"));
        }
        Ok(PotentialSpec {
            kind: PotentialKind::Custom(grad),
            lambda: 0.0,
            kappa: 0.0,
            lipschitz_bound,
        })
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            PotentialKind::Quadratic => "quadratic",
            PotentialKind::CurieWeiss => "curie-weiss",
            PotentialKind::Custom(_) => "custom",
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    /// Largest eigenvalue of the linearised drift `grad V`.
    pub fn max_stiffness(&self) -> f64 {
        match self.kind {
            PotentialKind::Quadratic => self.lambda,
            PotentialKind::CurieWeiss => self.lambda.max(self.lambda + self.kappa),
            PotentialKind::Custom(_) => self.lipschitz_bound,
        }
    }

    /// `grad V(x, m)`.
    pub fn grad_v(&self, x: &Point, m: &EmpiricalMeasure) -> Result<Point> {
        if x.dim() != m.dim() {
            return Err(Error::usage(format!(
                "point of dimension {} against measure of dimension {}",
                x.dim(),
                m.dim()
            )));
        }
        let mut mean = vec![0.0; m.dim()];
        if matches!(self.kind, PotentialKind::CurieWeiss) {
            m.mean_into(&mut mean);
        }
        let mut out = vec![0.0; x.dim()];
        self.grad_with_mean(x.coords(), m, &mean, &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(0, "gradient is not finite"));
        }
        Ok(Point(out))
    }

    /// Gradient at every point of `m` with respect to `m` itself, written into
    /// the row-major `out` buffer. The mean-field reduction is done once.
    pub fn grad_all(&self, m: &EmpiricalMeasure, out: &mut [f64]) {
        let d = m.dim();
        let mut mean = vec![0.0; d];
        if matches!(self.kind, PotentialKind::CurieWeiss) {
            m.mean_into(&mut mean);
        }
        for (x, g) in m.points().zip(out.chunks_exact_mut(d)) {
            self.grad_with_mean(x, m, &mean, g);
        }
    }

    fn grad_with_mean(&self, x: &[f64], m: &EmpiricalMeasure, mean: &[f64], out: &mut [f64]) {
        match &self.kind {
            PotentialKind::Quadratic => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = self.lambda * xi;
                }
            }
            PotentialKind::CurieWeiss => {
                for ((o, xi), mi) in out.iter_mut().zip(x).zip(mean) {
                    *o = self.lambda * xi + self.kappa * (xi - mi);
                }
            }
            PotentialKind::Custom(f) => f(x, m, out),
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::usage(format!(
            "confinement lambda must be finite and >= 0, got {lambda}"
        )));
    }
    Ok(())
}

/// A pair of states `(x, mu), (y, nu)` for the Lipschitz probe.
pub type ProbePair = (Point, EmpiricalMeasure, Point, EmpiricalMeasure);

/// Largest observed ratio `|grad V(x,mu) - grad V(y,nu)| / (|x-y| + W2(mu,nu))`
/// over `trials` pairs drawn from `sampler`. Degenerate pairs (zero
/// denominator) are skipped.
pub fn probe_lipschitz<S>(pot: &PotentialSpec, mut sampler: S, trials: usize) -> Result<f64>
where
    S: FnMut(usize) -> ProbePair,
{
    if trials == 0 {
        return Err(Error::usage("probe needs at least one trial"));
    }
    let mut best: Option<f64> = None;
    for t in 0..trials {
        let (x, mu, y, nu) = sampler(t);
        if mu.len() > 64 || nu.len() > 64 {
            return Err(Error::usage("probe measures are limited to 64 points"));
        }
        let gx = pot.grad_v(&x, &mu)?;
        let gy = pot.grad_v(&y, &nu)?;
        let diff: Vec<f64> = gx.0.iter().zip(&gy.0).map(|(a, b)| a - b).collect();
        let dx: Vec<f64> = x.0.iter().zip(&y.0).map(|(a, b)| a - b).collect();
        let denom = norm(&dx) + w2_assignment(&mu, &nu)?.value;
        if denom == 0.0 {
            continue;
        }
        let ratio = norm(&diff) / denom;
        best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
    }
    best.ok_or_else(|| Error::usage("every probe pair was degenerate"))
}

/// Sampler of random Gaussian pairs with `n`-point measures in dimension `dim`.
/// Half the pairs share the point or the measure to probe each term alone.
pub fn gaussian_pair_sampler(dim: usize, n: usize, seed: u64) -> impl FnMut(usize) -> ProbePair {
    let mut rng = stream(seed, Purpose::Probe, 0, 0);
    move |t| {
        let mut draw = |scale: f64, shift: f64, len: usize| -> Vec<f64> {
            (0..len)
                .map(|_| shift + scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let scale = 0.5 + (t % 5) as f64;
        let x = Point(draw(scale, 0.0, dim));
        let mu = EmpiricalMeasure::from_flat(dim, draw(scale, 0.0, n * dim)).unwrap();
        let y = if t % 4 == 1 {
            x.clone()
        } else {
            Point(draw(scale, 0.3, dim))
        };
        let nu = if t % 4 == 2 {
            mu.clone()
        } else {
            EmpiricalMeasure::from_flat(dim, draw(scale, (t % 3) as f64, n * dim)).unwrap()
        };
        (x, mu, y, nu)
    }
}
