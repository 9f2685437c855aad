//! Numerical laboratory for Gaussian concentration of ℓ_p norms and random
//! almost-Euclidean sections of the ℓ_p ball.
//!
//! The crate is organised bottom-up:
//!
//! * [`specfun`]: log-Gamma, the normal CDF and its inverse, Gaussian absolute
//!   moments, Mill's-ratio brackets and quantiles of `|g|`.
//! * [`gauss`]: counter-based random streams, Gaussian sampling, stable ℓ_p
//!   norms and mergeable moment accumulators.
//! * [`theory`]: closed-form predictions (critical dimensions, concentration
//!   exponents, variance regimes, quantile vectors, chaining schedules).
//! * [`mc`]: Monte Carlo estimators and quadrature oracles.
//! * [`sections`]: random Gaussian sections, distortion solvers and
//!   success-probability curves.
//! * [`fit`]: ordinary least squares used to read exponents off experiment
//!   tables.
//!
//! Every Monte Carlo estimator splits its samples into fixed-size chunks, each
//! driven by its own random stream, and merges chunk results in chunk order.
//! Results are therefore identical for any size of the rayon thread pool the
//! call runs on.

pub mod error;
pub mod fit;
pub mod gauss;
pub mod mc;
pub mod par;
pub mod sections;
pub mod specfun;
pub mod theory;

pub use error::{Error, Result};
pub use fit::FitResult;
pub use gauss::{lp_norm, MomentAccumulator, PExponent, RngStream};
pub use mc::{EstimateWithCI, TailCurve};
pub use sections::{DistortionReport, GaussianMatrix, SuccessCurve};
pub use theory::{Regime, TheoryConstants, TheoryPrediction};
