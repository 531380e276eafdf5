use super::{growth_of, loss_moments, loss_moments_with_error, newton_step, norm2, Status, SystemSolution};
use crate::error::{Error, Result};
use crate::marginals::{Continuous, ExpectationEngine, Growth, KinkLines, MarginalLaw};
use crate::optim::golden_section;
use crate::scalar_convex::{Role, ScalarConvexFunction};
use crate::threshold::{alpha_upper_bound_unreg, delta_perfect_unreg};

/// Seed offset of the engine used to re-check a solution.
pub(super) const CERTIFY_SEED_OFFSET: u64 = 0x00c0_ffee;

fn check_inputs(loss: &ScalarConvexFunction, noise: &MarginalLaw, delta: f64) -> Result<()> {
    if !(delta > 1.0) || !delta.is_finite() {
        return Err(Error::InvalidAssumption(format!(
            "the unregularized estimator needs a finite oversampling ratio delta > 1, got {delta}"
        )));
    }
    loss.validate_assumptions(Role::Loss)?;
    noise.validate()?;
    if noise.prob_nonzero() <= 0.0 {
        return Err(Error::DegenerateNoise);
    }
    if noise.has_heavy_tail() && growth_of(loss) == Growth::Unbounded {
        return Err(Error::UnboundedFunctional);
    }
    Ok(())
}

/// `L(c, tau) = E[env(cG + Z; tau) - loss(Z)]`.
///
/// The quadrature rule is aligned with the kinks of the envelope term, not with
/// the kink of `loss(Z)` at `Z = 0`, so the error it makes on `loss(Z)` is
/// swapped for an exact value. This keeps `L` smooth in `(c, tau)`.
fn l_value(engine: &ExpectationEngine, loss: &ScalarConvexFunction, noise: &MarginalLaw, c: f64, tau: f64) -> f64 {
    let kinks = KinkLines::new(c, loss.prox_kinks(tau));
    let light = light_part(noise);
    let joint = engine.mean_gw(noise, growth_of(loss), &kinks, |g, z| [loss.moreau_env(c * g + z, tau) - loss.eval(z)]);
    let rotated = engine.mean_gw(&light, Growth::Unbounded, &kinks, |_, z| [loss.eval(z)]);
    let exact: f64 = engine.weighted_points(&light, &loss.kinks()).nodes.iter().map(|&(z, w)| w * loss.eval(z)).sum();
    match (joint, rotated) {
        (Ok([j]), Ok([r])) => j + r - exact,
        _ => f64::NAN,
    }
}

/// `noise` with its heavy-tailed components given weight zero.
fn light_part(noise: &MarginalLaw) -> MarginalLaw {
    let mut light = noise.clone();
    for comp in &mut light.continuous {
        if matches!(comp.dist, Continuous::Cauchy { .. }) {
            comp.w = 0.0;
        }
    }
    light
}

/// `(sup_b L(alpha, alpha/b) - alpha b / (2 delta), argmax b)` for `alpha > 0`.
fn inner_sup(
    engine: &ExpectationEngine,
    loss: &ScalarConvexFunction,
    noise: &MarginalLaw,
    alpha: f64,
    delta: f64,
) -> (f64, f64) {
    let d = |b: f64| l_value(engine, loss, noise, alpha, alpha / b) - alpha * b / (2.0 * delta);
    let lo = 1e-8 * alpha.min(1.0);
    let mut hi = alpha.max(1e-300);
    let mut d_hi = d(hi);
    while hi < 1e30 {
        let d_next = d(2.0 * hi);
        if d_next <= d_hi {
            break;
        }
        hi *= 2.0;
        d_hi = d_next;
    }
    let m = golden_section(|u| -d(u.exp()), lo.ln(), (2.0 * hi).ln(), 1e-7);
    (-m.fx, m.x.exp())
}

/// The convex potential `M(alpha)` whose minimizer is `alpha*`; `M(0) = 0`.
pub fn potential_unreg(
    engine: &ExpectationEngine,
    loss: &ScalarConvexFunction,
    noise: &MarginalLaw,
    alpha: f64,
    delta: f64,
) -> Result<f64> {
    check_inputs(loss, noise, delta)?;
    if alpha < 0.0 {
        return Err(Error::InvalidInput(format!("alpha must be nonnegative, got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(0.0);
    }
    Ok(inner_sup(engine, loss, noise, alpha, delta).0)
}

/// Relative residuals `(delta E[r^2] - alpha^2)/alpha^2` and `(delta E[rG] - alpha)/alpha`,
/// with their error estimates.
pub fn unreg_residuals(
    engine: &ExpectationEngine,
    loss: &ScalarConvexFunction,
    noise: &MarginalLaw,
    delta: f64,
    alpha: f64,
    kappa: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (m, e) = loss_moments_with_error(engine, loss, noise, alpha, kappa)?;
    let a2 = alpha * alpha;
    Ok((
        vec![(delta * m[0] - a2) / a2, (delta * m[1] - alpha) / alpha],
        vec![delta * e[0] / a2, delta * e[1] / alpha],
    ))
}

fn residual_vec(
    engine: &ExpectationEngine,
    loss: &ScalarConvexFunction,
    noise: &MarginalLaw,
    delta: f64,
    x: [f64; 2],
) -> [f64; 2] {
    match loss_moments(engine, loss, noise, x[0], x[1]) {
        Ok(m) => [delta * m[0] / (x[0] * x[0]) - 1.0, delta * m[1] / x[0] - 1.0],
        Err(_) => [f64::NAN; 2],
    }
}

/// Newton on the two equations with a finite-difference Jacobian; only
/// steps that lower the residual norm are taken.
pub(super) fn polish_unreg(
    engine: &ExpectationEngine,
    loss: &ScalarConvexFunction,
    noise: &MarginalLaw,
    delta: f64,
    mut x: [f64; 2],
) -> ([f64; 2], usize) {
    let mut f = residual_vec(engine, loss, noise, delta, x);
    let mut iters = 0;
    for _ in 0..30 {
        let nf = norm2(&f);
        if !(nf > 1e-14) {
            break;
        }
        iters += 1;
        let mut jac = [[0.0; 2]; 2];
        for k in 0..2 {
            let h = 1e-6 * x[k];
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fp = residual_vec(engine, loss, noise, delta, xp);
            let fm = residual_vec(engine, loss, noise, delta, xm);
            for i in 0..2 {
                jac[i][k] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let Some(step) = newton_step(jac, f) else { break };
        let mut accepted = false;
        let mut scale = 1.0;
        for _ in 0..8 {
            let cand = [x[0] + scale * step[0], x[1] + scale * step[1]];
            if cand[0] > 0.0 && cand[1] > 0.0 {
                let fc = residual_vec(engine, loss, noise, delta, cand);
                if norm2(&fc) < nf {
                    x = cand;
                    f = fc;
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (x, iters)
}

/// Solves the unregularized system. Above the perfect-recovery threshold the
/// solution is `alpha* = 0`.
pub fn solve_unreg(
    engine: &ExpectationEngine,
    loss: &ScalarConvexFunction,
    noise: &MarginalLaw,
    delta: f64,
    tol: f64,
) -> Result<SystemSolution> {
    check_inputs(loss, noise, delta)?;
    let report = delta_perfect_unreg(engine, loss, noise)?;
    if delta >= report.delta_perfect {
        let eps = 1e-6;
        let slope = inner_sup(engine, loss, noise, eps, delta).0 / eps;
        return Ok(SystemSolution {
            alpha: 0.0,
            kappa: 0.0,
            beta: None,
            nu: None,
            residuals: vec![0.0, 0.0],
            iterations: 0,
            status: Status::AtZero,
            delta,
            tolerance: tol,
            potential: Some(0.0),
            right_derivative_at_zero: Some(slope),
        });
    }

    let m = |a: f64| if a > 0.0 { inner_sup(engine, loss, noise, a, delta).0 } else { 0.0 };
    let bound = alpha_upper_bound_unreg(loss, noise, delta)?;
    let cap = if bound.is_finite() { 2.0 * bound } else { 1e12 };
    let mut evals = 0;
    let a0 = 1.0;
    let m0 = m(a0);
    evals += 1;
    let (lo, hi) = if m0 >= 0.0 {
        (0.0, a0)
    } else {
        let mut prev = 0.0;
        let mut cur = a0;
        let mut m_cur = m0;
        loop {
            let next = 2.0 * cur;
            if next > cap {
                return Err(Error::NoConvergence {
                    iterations: evals,
                    max_residual: f64::INFINITY,
                    residuals: vec![],
                });
            }
            let m_next = m(next);
            evals += 1;
            if m_next >= m_cur {
                break (prev, next);
            }
            prev = cur;
            cur = next;
            m_cur = m_next;
        }
    };
    let best = golden_section(m, lo, hi, 1e-3 * hi);
    evals += best.evals;
    let alpha0 = best.x;
    if alpha0 <= 0.0 {
        return Err(Error::NoConvergence { iterations: evals, max_residual: f64::INFINITY, residuals: vec![] });
    }
    let (_, b_star) = inner_sup(engine, loss, noise, alpha0, delta);
    let kappa0 = alpha0 / b_star;
    let (x, polish_iters) = polish_unreg(engine, loss, noise, delta, [alpha0, kappa0]);

    let fresh = engine.with_seed(engine.master_seed().wrapping_add(CERTIFY_SEED_OFFSET));
    let (residuals, errors) = unreg_residuals(&fresh, loss, noise, delta, x[0], x[1])?;
    let tolerance = if noise.has_heavy_tail() {
        tol.max(2.0 * errors.iter().cloned().fold(0.0, f64::max))
    } else {
        tol
    };
    let max_res = residuals.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    let iterations = evals + polish_iters;
    if !(max_res <= tolerance) {
        return Err(Error::NoConvergence { iterations, max_residual: max_res, residuals });
    }
    Ok(SystemSolution {
        alpha: x[0],
        kappa: x[1],
        beta: None,
        nu: None,
        residuals,
        iterations,
        status: Status::Converged,
        delta,
        tolerance,
        potential: Some(best.fx),
        right_derivative_at_zero: None,
    })
}
