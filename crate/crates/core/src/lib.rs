//! Small-mass limit toolkit for interacting particles driven by a fast,
//! law-averaged mixing force.
//!
//! The crate simulates the inertial `eps`-system, its overdamped limit, and
//! measures how far apart the two laws are in 2-Wasserstein distance.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod ensemble;
pub mod eps;
pub mod error;
pub mod harness;
pub mod limit;
pub mod measure;
pub mod noise;
pub mod par;
pub mod potential;
pub mod rng;
pub mod transport;

pub use ensemble::{InitialLaw, ParticleEnsemble, RunConfig};
pub use eps::{simulate_eps, EpsScheme, ForcingQuadrature, SchemeKind, StepReport};
pub use error::{Error, Result};
pub use harness::{run_convergence, ConvergenceReport, ExperimentConfig};
pub use limit::{build_diffusion, simulate_limit, DiffusionMode, DiffusionSpec, LimitScheme};
pub use measure::{empirical_mean, EmpiricalMeasure, Point};
pub use noise::{DriverState, MixingMetadata, NoiseKind, NoiseModel, Profile, SigmaMatrix};
pub use potential::{PotentialKind, PotentialSpec};
pub use transport::{w2_1d, w2_assignment, w2_auto, w2_sliced, W2Method, W2Result};
