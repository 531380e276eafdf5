//! Solvers for the low-dimensional systems characterizing the limiting error
//! `alpha* = lim ||x_hat - x0|| / sqrt(p)`.
//!
//! Unregularized, unknowns `(alpha, kappa)`, with `r = x - prox(x; kappa loss)`
//! and `x = alpha G + Z`:
//!
//! ```text
//! alpha^2 = delta E[r^2]
//! alpha   = delta E[r G]
//! ```
//!
//! Regularized, unknowns `(alpha, beta, kappa, nu)`, with
//! `w = prox(beta H / nu + X; reg / nu) - X`:
//!
//! ```text
//! alpha^2             = E[w^2]
//! beta^2 kappa^2 / delta = E[r^2]
//! nu alpha kappa / delta = E[r G]
//! kappa beta          = E[H w]
//! ```

mod reg;
mod unreg;

pub use reg::{random_starts, reg_residuals, risk_curve, solve_reg, solve_reg_from, RiskPoint};
pub use unreg::{potential_unreg, solve_unreg, unreg_residuals};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::marginals::{ExpectationEngine, Growth, KinkLines, MarginalLaw};
use crate::scalar_convex::ScalarConvexFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Converged,
    AtZero,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSolution {
    pub alpha: f64,
    /// Zero when `alpha = 0`, where `kappa` is not identified.
    #[serde(with = "crate::extended")]
    pub kappa: f64,
    #[serde(default, with = "crate::extended::option", skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, with = "crate::extended::option", skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    /// Relative residuals of the equations, in the order listed in the module docs.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub status: Status,
    pub delta: f64,
    /// Tolerance the residuals were certified against. It exceeds the requested
    /// one only when Monte Carlo error of heavy-tailed laws dominates.
    pub tolerance: f64,
    #[serde(default, with = "crate::extended::option", skip_serializing_if = "Option::is_none")]
    pub potential: Option<f64>,
    /// Numerical right derivative of the potential at 0, recorded with `AtZero`.
    #[serde(default, with = "crate::extended::option", skip_serializing_if = "Option::is_none")]
    pub right_derivative_at_zero: Option<f64>,
}

impl SystemSolution {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

fn growth_of(f: &ScalarConvexFunction) -> Growth {
    if f.lipschitz().is_finite() {
        Growth::WBounded
    } else {
        Growth::Unbounded
    }
}

/// `[E r^2, E r G]` for `r = x - prox(x; kappa loss)`, `x = alpha G + Z`.
pub fn loss_moments(
    engine: &ExpectationEngine,
    loss: &ScalarConvexFunction,
    noise: &MarginalLaw,
    alpha: f64,
    kappa: f64,
) -> Result<[f64; 2]> {
    let kinks = KinkLines::new(alpha, loss.prox_kinks(kappa));
    engine.mean_gw(noise, growth_of(loss), &kinks, |g, z| {
        let r = loss.prox_residual(alpha * g + z, kappa);
        [r * r, r * g]
    })
}

/// Same as [`loss_moments`] with an error estimate per coordinate.
pub fn loss_moments_with_error(
    engine: &ExpectationEngine,
    loss: &ScalarConvexFunction,
    noise: &MarginalLaw,
    alpha: f64,
    kappa: f64,
) -> Result<([f64; 2], [f64; 2])> {
    let kinks = KinkLines::new(alpha, loss.prox_kinks(kappa));
    let e = engine.expect_gw_vec(noise, growth_of(loss), &kinks, |g, z| {
        let r = loss.prox_residual(alpha * g + z, kappa);
        [r * r, r * g]
    })?;
    Ok((e.value, e.error))
}

/// `[E w^2, E w H]` for `w = prox(beta H / nu + X; reg / nu) - X`.
pub fn reg_moments(
    engine: &ExpectationEngine,
    reg: &ScalarConvexFunction,
    signal: &MarginalLaw,
    beta: f64,
    nu: f64,
) -> Result<[f64; 2]> {
    reg_moments_with_error(engine, reg, signal, beta, nu, false).map(|(v, _)| v)
}

fn reg_moments_with_error(
    engine: &ExpectationEngine,
    reg: &ScalarConvexFunction,
    signal: &MarginalLaw,
    beta: f64,
    nu: f64,
    with_error: bool,
) -> Result<([f64; 2], [f64; 2])> {
    let s = beta / nu;
    let tau = 1.0 / nu;
    let kinks = KinkLines::new(s, reg.prox_kinks(tau));
    let phi = |h: f64, x: f64| {
        let w = s * h - reg.prox_residual(s * h + x, tau);
        [w * w, w * h]
    };
    if with_error {
        let e = engine.expect_gw_vec(signal, growth_of(reg), &kinks, phi)?;
        Ok((e.value, e.error))
    } else {
        Ok((engine.mean_gw(signal, growth_of(reg), &kinks, phi)?, [0.0; 2]))
    }
}

/// Solves the 2x2 system `j * d = -f`.
fn newton_step(j: [[f64; 2]; 2], f: [f64; 2]) -> Option<[f64; 2]> {
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let d0 = (-f[0] * j[1][1] + f[1] * j[0][1]) / det;
    let d1 = (-j[0][0] * f[1] + j[1][0] * f[0]) / det;
    if d0.is_finite() && d1.is_finite() {
        Some([d0, d1])
    } else {
        None
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
