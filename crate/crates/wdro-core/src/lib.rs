//! Distributionally robust estimation over Wasserstein balls, with the
//! asymptotic confidence regions that make those estimators testable.
//!
//! The crate is organized bottom up:
//!
//! * [`rng`], [`special`], [`linalg`], [`norms`]: deterministic counter
//!   RNG, distribution functions, small dense linear algebra, l_p
//!   geometry.
//! * [`model`]: loss models with masked response derivatives, synthetic
//!   gaussian regression designs.
//! * [`estimators`]: empirical risk minimizers and robust minimizers of
//!   the square-root regularized objective.
//! * [`profile`]: the quadratic form phi, its convex conjugate, and the
//!   profile function that prices how far a candidate parameter sits
//!   from explaining the sample.
//! * [`calibration`]: Monte Carlo quantiles of the limiting conjugate
//!   law, turning a confidence level into a transport budget.
//! * [`regions`]: confidence regions as support-function envelopes,
//!   both the robust shape and the classical ellipse.
//! * [`limit_sim`]: finite-sample drift experiments along radius
//!   scalings.

pub mod calibration;
pub mod estimators;
pub mod limit_sim;
pub mod linalg;
pub mod model;
pub mod norms;
pub mod profile;
pub mod regions;
pub mod rng;
pub mod special;
