//! Geodesic random walks, intrinsic Brownian motion, and large-deviation
//! rate machinery on three model geometries: flat space, the round sphere,
//! and the hyperbolic upper half-plane.
//!
//! The crate is organized bottom-up:
//!
//! * [`geometry`]: points, tangent/cotangent vectors, exponential and
//!   logarithm maps, parallel transport, geodesic boundary-value solving,
//!   and a containment function with compact sublevel sets;
//! * [`measures`]: isotropic increment families (Gaussian, uniform ball,
//!   radial discrete) with samplers, log-moment-generating functions, and
//!   Legendre transforms;
//! * [`walks`]: rescaled geodesic random walks and their cadlag path
//!   process;
//! * [`brownian`]: frame-bundle Brownian motion via horizontal geodesic
//!   steps, radial exit statistics, and flat-space SDE schemes;
//! * [`rates`]: Hamiltonians, Lagrangians, path action, endpoint rate
//!   functions, a variational semigroup optimizer, and characteristic flow;
//! * [`estimator`]: Monte Carlo experiments that measure rate functions
//!   and semigroup decay against their closed forms, with persistent
//!   reports.
//!
//! All randomness flows through [`rng`], which derives counter-based
//! streams from `(master seed, replica, step)` so that replicated
//! experiments are reproducible bit-for-bit regardless of thread count.

pub mod brownian;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod measures;
pub mod rates;
pub mod rng;
pub mod walks;

pub use error::{Error, Result};
pub use geometry::{
    Curve, CotangentVector, ManifoldKind, ManifoldModel, Point, TangentVector,
};
pub use brownian::{BrownianPath, FrameState, SdeScheme};
pub use estimator::{EndpointExperiment, ExperimentReport, RateEstimate};
pub use measures::{ConjugateResult, MeasureFamily, MeasureKind, RadialLaw};
pub use rates::{ActionReport, CramerReport, RateModel, RateModelKind, ScalarField};
pub use walks::{WalkConfig, WalkPath};
