//! Particle ensembles, run parameters and initial laws.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;

/// Largest accepted step fraction `h / eps` for the exponential scheme.
pub const MAX_H0: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialLaw {
    /// Positions i.i.d. `N(mean, std^2)` per coordinate, velocities constant.
    Gaussian { mean: f64, std: f64, velocity: f64 },
    /// Half the particles at `-separation/2`, half at `+separation/2`
    /// (every coordinate), plus Gaussian jitter of size `std`.
    TwoCluster {
        separation: f64,
        std: f64,
        velocity: f64,
    },
}

impl Default for InitialLaw {
    fn default() -> Self {
        InitialLaw::Gaussian {
            mean: 0.0,
            std: 1.0,
            velocity: 0.0,
        }
    }
}

impl InitialLaw {
    pub fn velocity(&self) -> f64 {
        match *self {
            InitialLaw::Gaussian { velocity, .. } | InitialLaw::TwoCluster { velocity, .. } => {
                velocity
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, s, v) = match *self {
            InitialLaw::Gaussian {
                mean,
                std,
                velocity,
            } => (mean, std, velocity),
            InitialLaw::TwoCluster {
                separation,
                std,
                velocity,
            } => (separation, std, velocity),
        };
        if !(a.is_finite() && v.is_finite() && s.is_finite() && s >= 0.0) {
            return Err(Error::usage(
                "initial law parameters must be finite, std >= 0",
            ));
        }
        Ok(())
    }

    /// Draw `n` positions in dimension `dim` (row-major).
    pub fn sample_positions<R: Rng + ?Sized>(&self, n: usize, dim: usize, rng: &mut R) -> Vec<f64> {
        let mut out = Vec::with_capacity(n * dim);
        for i in 0..n {
            for _ in 0..dim {
                let z: f64 = rng.sample(StandardNormal);
                out.push(match *self {
                    InitialLaw::Gaussian { mean, std, .. } => mean + std * z,
                    InitialLaw::TwoCluster {
                        separation, std, ..
                    } => {
                        let c = if i < n / 2 { -0.5 } else { 0.5 };
                        c * separation + std * z
                    }
                });
            }
        }
        out
    }
}

/// Parameters of one ensemble run at a fixed `eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub n_particles: usize,
    pub eps: f64,
    pub alpha: f64,
    pub horizon: f64,
    /// Step as a fraction of `eps`.
    pub h0: f64,
    pub seed: u64,
    pub replicas: usize,
    pub samples_per_replica: usize,
    pub init: InitialLaw,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.n_particles == 0 {
            return Err(Error::usage("dimension and particle count must be >= 1"));
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::usage(format!(
                "eps must lie in (0, 1], got {}",
                self.eps
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::usage(format!(
                "friction alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::usage("horizon T must be positive"));
        }
        if !(self.h0 > 0.0 && self.h0 <= MAX_H0) {
            return Err(Error::usage(format!(
                "step fraction h0 must lie in (0, {MAX_H0}], got {}",
                self.h0
            )));
        }
        if self.replicas == 0 || self.samples_per_replica == 0 {
            return Err(Error::usage("replica and sample counts must be >= 1"));
        }
        self.init.validate()
    }

    /// Step of the eps-system, `h0 * eps`.
    pub fn eps_step(&self) -> f64 {
        self.h0 * self.eps
    }
}

/// State of `N` particles: positions always, velocities for the eps-system.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub positions: EmpiricalMeasure,
    /// Row-major like the positions; `None` in limit mode.
    pub velocities: Option<Vec<f64>>,
    pub time: f64,
    /// Mass parameter; `None` in limit mode.
    pub eps: Option<f64>,
}

impl ParticleEnsemble {
    pub fn eps_mode(positions: EmpiricalMeasure, velocities: Vec<f64>, eps: f64) -> Result<Self> {
        if velocities.len() != positions.as_flat().len() {
            return Err(Error::usage("positions and velocities differ in shape"));
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::usage(format!("eps must lie in (0, 1], got {eps}")));
        }
        Ok(ParticleEnsemble {
            positions,
            velocities: Some(velocities),
            time: 0.0,
            eps: Some(eps),
        })
    }

    pub fn limit_mode(positions: EmpiricalMeasure) -> Self {
        ParticleEnsemble {
            positions,
            velocities: None,
            time: 0.0,
            eps: None,
        }
    }

    /// Initial eps-system ensemble drawn from `cfg.init`.
    pub fn initial_eps<R: Rng + ?Sized>(cfg: &RunConfig, rng: &mut R) -> Result<Self> {
        let pos = cfg.init.sample_positions(cfg.n_particles, cfg.dim, rng);
        let vel = vec![cfg.init.velocity(); pos.len()];
        Self::eps_mode(EmpiricalMeasure::from_flat(cfg.dim, pos)?, vel, cfg.eps)
    }

    /// Initial limit-mode ensemble drawn from `cfg.init`.
    pub fn initial_limit<R: Rng + ?Sized>(cfg: &RunConfig, rng: &mut R) -> Result<Self> {
        let pos = cfg.init.sample_positions(cfg.n_particles, cfg.dim, rng);
        Ok(Self::limit_mode(EmpiricalMeasure::from_flat(cfg.dim, pos)?))
    }

    pub fn dim(&self) -> usize {
        self.positions.dim()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.positions.as_flat().iter().all(|v| v.is_finite())
            && self
                .velocities
                .as_ref()
                .is_none_or(|v| v.iter().all(|x| x.is_finite()))
    }
}
