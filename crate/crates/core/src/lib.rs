//! Exact asymptotic risk and perfect-recovery thresholds of convex
//! M-estimators `argmin_x sum loss(y_i - a_i'x) + sum reg(x_j)` with Gaussian
//! designs in the proportional regime `n/p -> delta`.
//!
//! * [`scalar_convex`]: losses and regularizers with closed-form proximal maps.
//! * [`marginals`]: noise and signal laws, the expectation engine.
//! * [`threshold`]: `delta_perfect` and explicit upper bounds on the limiting error.
//! * [`system_solver`]: the low-dimensional systems whose solution is the limiting error.
//! * [`finite_sample`]: simulated instances, an ADMM estimator and KKT certificates.
//! * [`conic_geometry`]: distances to subdifferential cones and statistical dimension.

pub mod conic_geometry;
pub mod defaults;
pub mod descriptor;
pub mod error;
pub mod extended;
pub mod finite_sample;
pub mod marginals;
pub mod optim;
pub mod scalar_convex;
pub mod special;
pub mod system_solver;
pub mod threshold;

pub use error::{Error, Result};
pub use marginals::{EngineSettings, ExpectationEngine, MarginalLaw};
pub use scalar_convex::{ConvexKind, Role, ScalarConvexFunction, SubdiffInterval};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/prox.md")]
    mod prox {}
    #[doc = include_str!("../../../book/src/laws.md")]
    mod laws {}
    #[doc = include_str!("../../../book/src/threshold.md")]
    mod threshold {}
    #[doc = include_str!("../../../book/src/systems.md")]
    mod systems {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/statdim.md")]
    mod statdim {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
