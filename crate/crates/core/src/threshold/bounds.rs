//! Explicit, deliberately loose upper bounds on the limiting error `alpha*`.
//!
//! Both bounds have the shape
//! `lip / (a c) * q(c a^2 / lip^2) + b / (a c)` where `(a, b)` are coercivity
//! constants, `lip` a Lipschitz constant, `q(x) = inf{q : P(|Z| > q) <= x}` and
//! `c` a constant depending on `delta` only.

use crate::error::{Error, Result};
use crate::marginals::MarginalLaw;
use crate::optim::bisect;
use crate::scalar_convex::ScalarConvexFunction;
use crate::special::gauss_tail_second_moment;

/// Smallest `C >= 0` with `E[G^2 1{|G| > C}] <= target`.
pub fn tail_cutoff(target: f64) -> f64 {
    if target >= 1.0 {
        return 0.0;
    }
    assert!(target > 0.0, "target must be positive");
    let mut hi = 1.0;
    while gauss_tail_second_moment(hi) > target {
        hi *= 2.0;
    }
    bisect(|c| target - gauss_tail_second_moment(c), 0.0, hi, 1e-13)
}

/// Constant `c_delta` of the unregularized bound, `delta > 1`.
pub fn unreg_bound_constant(delta: f64) -> f64 {
    assert!(delta > 1.0, "delta must exceed 1");
    let s = (1.0 - 1.0 / delta).sqrt();
    // ||v|| <= K E|v| on the constraint set
    let c = tail_cutoff(s * s / 4.0);
    let k = 2.0 * c / s;
    // Paley–Zygmund: P(|v| > ||v|| / (2K)) >= 1 / (4K^2)
    let cd = 1.0f64.min(1.0 / (2.0 * k)).min(1.0 / (4.0 * k * k));
    (cd.powi(4) / 16.0).min(cd * cd * s / 4.0)
}

/// Constant `c_delta` of the regularized bound, `delta > 0`.
pub fn reg_bound_constant(delta: f64) -> f64 {
    assert!(delta > 0.0, "delta must be positive");
    let inv = 1.0 / delta;
    let m1 = tail_cutoff(1.0 / (4.0 * (1.0 + inv)));
    let k1 = 4.0 * (1.0 + inv).sqrt() * m1;
    let m = tail_cutoff(1.0 / 16.0);
    let m_delta = tail_cutoff(delta / 16.0) / delta.sqrt();
    let k2 = 16.0 * m.max(m_delta * m_delta);
    let k = k1.max(k2);
    let ct = 1.0f64.min(1.0 / (2.0 * k)).min(1.0 / (4.0 * k * k));
    let r = delta.min(1.0) / delta.max(1.0);
    (ct.powi(4) * r * r / 72.0).min(ct * ct * r / 4.0)
}

/// Upper bound on `alpha*` for the unregularized estimator. Infinite for a
/// non-Lipschitz loss.
pub fn alpha_upper_bound_unreg(loss: &ScalarConvexFunction, noise: &MarginalLaw, delta: f64) -> Result<f64> {
    if delta <= 1.0 {
        return Err(Error::InvalidAssumption(format!(
            "the unregularized estimator needs delta > 1, got {delta}"
        )));
    }
    let lip = loss.lipschitz();
    if !lip.is_finite() {
        return Ok(f64::INFINITY);
    }
    let (a, b) = loss.coercivity();
    let c = unreg_bound_constant(delta);
    let q = noise.abs_quantile(c * a * a / (lip * lip));
    Ok(lip / (a * c) * q + b / (a * c))
}

/// Upper bound on `alpha*` for the regularized estimator; `q` adds the
/// noise and signal quantile functions.
pub fn alpha_upper_bound_reg(
    loss: &ScalarConvexFunction,
    reg: &ScalarConvexFunction,
    noise: &MarginalLaw,
    signal: &MarginalLaw,
    delta: f64,
) -> Result<f64> {
    if delta <= 0.0 {
        return Err(Error::InvalidInput(format!("delta must be positive, got {delta}")));
    }
    let (ll, lr) = (loss.lipschitz(), reg.lipschitz());
    if !ll.is_finite() || !lr.is_finite() {
        return Ok(f64::INFINITY);
    }
    let (al, bl) = loss.coercivity();
    let (ar, br) = reg.coercivity();
    let a = al.min(ar);
    let c = reg_bound_constant(delta);
    let x = c * a * a / (ll * ll + lr * lr);
    let q = noise.abs_quantile(x) + signal.abs_quantile(x);
    Ok((ll + lr) / (c * a) * q + (bl + br) / (c * a))
}
