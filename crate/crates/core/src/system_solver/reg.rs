use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::unreg::CERTIFY_SEED_OFFSET;
use super::{
    growth_of, loss_moments, loss_moments_with_error, newton_step, norm2, reg_moments, reg_moments_with_error,
    Status, SystemSolution,
};
use crate::error::{Error, Result};
use crate::marginals::rng::{block_rng, streams};
use crate::marginals::{ExpectationEngine, Growth, MarginalLaw};
use crate::scalar_convex::{Role, ScalarConvexFunction};
use crate::threshold::delta_perfect_reg;

const MAX_ITER: usize = 3000;
const MIN_THETA: f64 = 1.0 / 64.0;
const MAX_STALLS: usize = 200;
/// Steps are judged against the worst gap of this many recent iterates.
const WINDOW: usize = 10;
/// Relative size below which `kappa` is treated as zero.
const KAPPA_FLOOR: f64 = 1e-10;
/// `alpha` below this fraction of its starting value counts as collapsed.
const COLLAPSE: f64 = 1e-9;

fn check_inputs(
    loss: &ScalarConvexFunction,
    reg: &ScalarConvexFunction,
    noise: &MarginalLaw,
    signal: &MarginalLaw,
    delta: f64,
) -> Result<()> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidInput(format!("delta must be positive and finite, got {delta}")));
    }
    loss.validate_assumptions(Role::Loss)?;
    reg.validate_assumptions(Role::Reg)?;
    noise.validate()?;
    signal.validate()?;
    if noise.prob_nonzero() <= 0.0 {
        return Err(Error::DegenerateNoise);
    }
    if !reg.is_differentiable() && signal.continuous.iter().all(|c| c.w == 0.0) {
        return Err(Error::InvalidAssumption(
            "a regularizer with kinks needs a signal law with a continuous part".into(),
        ));
    }
    if noise.has_heavy_tail() && growth_of(loss) == Growth::Unbounded {
        return Err(Error::UnboundedFunctional);
    }
    if signal.has_heavy_tail() && growth_of(reg) == Growth::Unbounded {
        return Err(Error::UnboundedFunctional);
    }
    Ok(())
}

struct Problem<'a> {
    engine: &'a ExpectationEngine,
    loss: &'a ScalarConvexFunction,
    reg: &'a ScalarConvexFunction,
    noise: &'a MarginalLaw,
    signal: &'a MarginalLaw,
    delta: f64,
}

/// Image of the reduced map with the intermediate `(beta, nu)`.
struct MapValue {
    next: [f64; 2],
    beta: f64,
    nu: f64,
}

impl Problem<'_> {
    fn map(&self, x: [f64; 2]) -> Option<MapValue> {
        let [alpha, kappa] = x;
        if !(alpha > 0.0 && kappa > 0.0) {
            return None;
        }
        let m = loss_moments(self.engine, self.loss, self.noise, alpha, kappa).ok()?;
        let p = (self.delta * m[0]).sqrt();
        let nu = self.delta * m[1] / (alpha * kappa);
        let beta = p / kappa;
        if !(nu > 0.0 && beta > 0.0) || !nu.is_finite() || !beta.is_finite() {
            return None;
        }
        let w = reg_moments(self.engine, self.reg, self.signal, beta, nu).ok()?;
        let next = [w[0].sqrt(), w[1] / beta];
        if next.iter().all(|v| v.is_finite()) {
            Some(MapValue { next, beta, nu })
        } else {
            None
        }
    }

    /// Relative fixed-point gap of the reduced map.
    fn gap(&self, x: [f64; 2]) -> Option<([f64; 2], MapValue)> {
        let v = self.map(x)?;
        Some(([(v.next[0] - x[0]) / x[0], (v.next[1] - x[1]) / x[1]], v))
    }
}

/// Relative residuals of the four regularized equations at `(alpha, beta, kappa, nu)`,
/// with error estimates.
pub fn reg_residuals(
    engine: &ExpectationEngine,
    loss: &ScalarConvexFunction,
    reg: &ScalarConvexFunction,
    noise: &MarginalLaw,
    signal: &MarginalLaw,
    delta: f64,
    [alpha, beta, kappa, nu]: [f64; 4],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (r, re) = loss_moments_with_error(engine, loss, noise, alpha, kappa)?;
    let (w, we) = reg_moments_with_error(engine, reg, signal, beta, nu, true)?;
    let a2 = alpha * alpha;
    let bk2 = beta * beta * kappa * kappa;
    let nak = nu * alpha * kappa;
    let kb = kappa * beta;
    Ok((
        vec![
            (w[0] - a2) / a2,
            (delta * r[0] - bk2) / bk2,
            (delta * r[1] - nak) / nak,
            (w[1] - kb) / kb,
        ],
        vec![we[0] / a2, delta * re[0] / bk2, delta * re[1] / nak, we[1] / kb],
    ))
}

/// Solves the regularized system from `alpha = E[X^2]^{1/2}` and a few
/// values of `kappa`, returning the first certified solution.
pub fn solve_reg(
    engine: &ExpectationEngine,
    loss: &ScalarConvexFunction,
    reg: &ScalarConvexFunction,
    noise: &MarginalLaw,
    signal: &MarginalLaw,
    delta: f64,
    tol: f64,
) -> Result<SystemSolution> {
    let [alpha0, _] = default_start(signal);
    let mut last = None;
    for kappa0 in [1.0, 1e2, 1e-2, 1e4] {
        match solve_reg_from(engine, loss, reg, noise, signal, delta, tol, Some([alpha0, kappa0])) {
            Err(e @ Error::NoConvergence { .. }) => last = Some(e),
            other => return other,
        }
    }
    Err(last.expect("at least one start"))
}

fn default_start(signal: &MarginalLaw) -> [f64; 2] {
    let m2 = signal.second_moment();
    let alpha = if m2.is_finite() && m2 > 0.0 { m2.sqrt() } else { 1.0 };
    [alpha, 1.0]
}

/// [`solve_reg`] from a given `(alpha, kappa)` start.
#[allow(clippy::too_many_arguments)]
pub fn solve_reg_from(
    engine: &ExpectationEngine,
    loss: &ScalarConvexFunction,
    reg: &ScalarConvexFunction,
    noise: &MarginalLaw,
    signal: &MarginalLaw,
    delta: f64,
    tol: f64,
    start: Option<[f64; 2]>,
) -> Result<SystemSolution> {
    check_inputs(loss, reg, noise, signal, delta)?;
    let threshold = delta_perfect_reg(engine, loss, reg, noise, signal)?;
    let above = delta >= threshold.delta_perfect;
    let pb = Problem { engine, loss, reg, noise, signal, delta };
    let mut x = start.unwrap_or_else(|| default_start(signal));
    if !(x[0] > 0.0 && x[1] > 0.0) {
        return Err(Error::InvalidInput(format!("start must be positive, got {x:?}")));
    }
    let alpha_ref = x[0];
    let kappa_floor = KAPPA_FLOOR * x[0].max(x[1]);
    let fail = |iterations: usize, gap: f64| Error::NoConvergence {
        iterations,
        max_residual: gap,
        residuals: vec![],
    };
    let Some((mut g, mut mv)) = pb.gap(x) else { return Err(fail(0, f64::INFINITY)) };
    let mut gn = norm2(&g);
    let mut recent: VecDeque<f64> = VecDeque::from([gn]);
    let mut theta: f64 = 1.0;
    let mut stalls = 0;
    let mut iterations = 0;
    let mut null = false;
    let target = 1e-3 * tol;
    while gn > target {
        iterations += 1;
        if iterations > MAX_ITER {
            return Err(fail(iterations, gn));
        }
        if above && x[0] < COLLAPSE * alpha_ref && mv.next[0] < x[0] {
            return Ok(SystemSolution {
                alpha: 0.0,
                kappa: 0.0,
                beta: None,
                nu: None,
                residuals: vec![0.0; 4],
                iterations,
                status: Status::AtZero,
                delta,
                tolerance: tol,
                potential: None,
                right_derivative_at_zero: None,
            });
        }
        if mv.next[1] <= kappa_floor && x[1] <= 1e3 * kappa_floor {
            null = true;
            break;
        }
        // Newton on the gap close to the fixed point
        if gn < 1e-2 {
            if let Some((xn, gnew, mvn)) = newton_gap(&pb, x, g) {
                let n = norm2(&gnew);
                if n < 0.5 * gn {
                    x = xn;
                    g = gnew;
                    mv = mvn;
                    gn = n;
                    push_recent(&mut recent, gn);
                    continue;
                }
            }
        }
        let reference = recent.iter().cloned().fold(0.0, f64::max);
        let mut moved = false;
        loop {
            let mut cand = [x[0] + theta * (mv.next[0] - x[0]), x[1] + theta * (mv.next[1] - x[1])];
            cand[1] = cand[1].max(kappa_floor);
            if cand[0] > 0.0 {
                if let Some((gc, mvc)) = pb.gap(cand) {
                    let n = norm2(&gc);
                    let floor = theta <= MIN_THETA;
                    if n < reference || floor {
                        if n >= reference {
                            stalls += 1;
                        }
                        if n < gn {
                            theta = (2.0 * theta).min(1.0);
                        }
                        x = cand;
                        g = gc;
                        mv = mvc;
                        gn = n;
                        moved = true;
                        break;
                    }
                }
            }
            if theta <= MIN_THETA {
                break;
            }
            theta *= 0.5;
        }
        if !moved || stalls > MAX_STALLS {
            return Err(fail(iterations, gn));
        }
        push_recent(&mut recent, gn);
    }

    if null {
        return solve_null(&pb, x[0], kappa_floor, tol, iterations);
    }
    let sol = [x[0], mv.beta, x[1], mv.nu];
    let fresh = engine.with_seed(engine.master_seed().wrapping_add(CERTIFY_SEED_OFFSET));
    let (residuals, errors) = reg_residuals(&fresh, loss, reg, noise, signal, delta, sol)?;
    let tolerance = certify_tolerance(&pb, tol, &errors);
    let max_res = residuals.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    if !(max_res <= tolerance) {
        return Err(Error::NoConvergence { iterations, max_residual: max_res, residuals });
    }
    Ok(SystemSolution {
        alpha: x[0],
        kappa: x[1],
        beta: Some(mv.beta),
        nu: Some(mv.nu),
        residuals,
        iterations,
        status: Status::Converged,
        delta,
        tolerance,
        potential: None,
        right_derivative_at_zero: None,
    })
}

fn push_recent(recent: &mut VecDeque<f64>, v: f64) {
    if recent.len() == WINDOW {
        recent.pop_front();
    }
    recent.push_back(v);
}

fn certify_tolerance(pb: &Problem, tol: f64, errors: &[f64]) -> f64 {
    if pb.noise.has_heavy_tail() || pb.signal.has_heavy_tail() {
        tol.max(2.0 * errors.iter().cloned().fold(0.0, f64::max))
    } else {
        tol
    }
}

/// The regime where the estimator is identically zero: `kappa` vanishes and
/// `alpha^2 = E[X^2]`. `kappa` is held at `kappa_floor` while `alpha` is
/// iterated, and the fourth equation is certified relative to `alpha beta`.
fn solve_null(pb: &Problem, mut alpha: f64, kappa_floor: f64, tol: f64, mut iterations: usize) -> Result<SystemSolution> {
    let fail = |iterations: usize| Error::NoConvergence { iterations, max_residual: f64::INFINITY, residuals: vec![] };
    let mut mv = pb.map([alpha, kappa_floor]).ok_or_else(|| fail(iterations))?;
    for _ in 0..200 {
        iterations += 1;
        let next = mv.next[0];
        let done = (next - alpha).abs() <= 1e-3 * tol * alpha;
        alpha = next;
        mv = pb.map([alpha, kappa_floor]).ok_or_else(|| fail(iterations))?;
        if done {
            break;
        }
    }
    let fresh = pb.engine.with_seed(pb.engine.master_seed().wrapping_add(CERTIFY_SEED_OFFSET));
    let sol = [alpha, mv.beta, kappa_floor, mv.nu];
    let (mut residuals, mut errors) =
        reg_residuals(&fresh, pb.loss, pb.reg, pb.noise, pb.signal, pb.delta, sol)?;
    // rescale the fourth residual from kappa beta to alpha beta
    residuals[3] *= kappa_floor / alpha;
    errors[3] *= kappa_floor / alpha;
    let tolerance = certify_tolerance(pb, tol, &errors);
    let max_res = residuals.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    if !(max_res <= tolerance) {
        return Err(Error::NoConvergence { iterations, max_residual: max_res, residuals });
    }
    Ok(SystemSolution {
        alpha,
        kappa: 0.0,
        beta: Some(mv.beta),
        nu: Some(mv.nu),
        residuals,
        iterations,
        status: Status::Converged,
        delta: pb.delta,
        tolerance,
        potential: None,
        right_derivative_at_zero: None,
    })
}

fn newton_gap(pb: &Problem, x: [f64; 2], g: [f64; 2]) -> Option<([f64; 2], [f64; 2], MapValue)> {
    let mut jac = [[0.0; 2]; 2];
    for k in 0..2 {
        let h = 1e-7 * x[k];
        let mut xp = x;
        xp[k] += h;
        let (gp, _) = pb.gap(xp)?;
        for i in 0..2 {
            jac[i][k] = (gp[i] - g[i]) / h;
        }
    }
    let step = newton_step(jac, g)?;
    let xn = [x[0] + step[0], x[1] + step[1]];
    if !(xn[0] > 0.0 && xn[1] > 0.0) {
        return None;
    }
    let (gn, mv) = pb.gap(xn)?;
    Some((xn, gn, mv))
}

/// One row of a risk curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskPoint {
    pub lambda: f64,
    pub alpha: f64,
    pub status: Option<Status>,
    pub residual_max: f64,
    pub error: Option<String>,
}

/// `lambda -> alpha*(lambda)` for the regularizer `lambda * reg`, warm-starting
/// each solve from the previous one. Failures are recorded per row.
#[allow(clippy::too_many_arguments)]
pub fn risk_curve(
    engine: &ExpectationEngine,
    loss: &ScalarConvexFunction,
    reg: &ScalarConvexFunction,
    noise: &MarginalLaw,
    signal: &MarginalLaw,
    delta: f64,
    lambdas: &[f64],
    tol: f64,
) -> Result<Vec<RiskPoint>> {
    if lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::InvalidInput("lambda grid must be positive".into()));
    }
    if lambdas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("lambda grid must be sorted".into()));
    }
    let mut out = Vec::with_capacity(lambdas.len());
    let mut warm: Option<[f64; 2]> = None;
    for &lambda in lambdas {
        let r = reg.scaled(lambda);
        let res = match warm {
            Some(w) => solve_reg_from(engine, loss, &r, noise, signal, delta, tol, Some(w)).or_else(|e| match e {
                Error::NoConvergence { .. } => solve_reg(engine, loss, &r, noise, signal, delta, tol),
                _ => Err(e),
            }),
            None => solve_reg(engine, loss, &r, noise, signal, delta, tol),
        };
        match res {
            Ok(sol) => {
                warm = if sol.status == Status::Converged && sol.kappa > 0.0 { Some([sol.alpha, sol.kappa]) } else { None };
                out.push(RiskPoint {
                    lambda,
                    alpha: sol.alpha,
                    status: Some(sol.status),
                    residual_max: sol.max_residual(),
                    error: None,
                });
            }
            Err(e) if e.is_validation() => return Err(e),
            Err(e) => {
                warm = None;
                out.push(RiskPoint {
                    lambda,
                    alpha: f64::NAN,
                    status: None,
                    residual_max: f64::NAN,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    Ok(out)
}

/// Random positive starts for uniqueness probes.
pub fn random_starts(seed: u64, count: usize, scale: [f64; 2]) -> Vec<[f64; 2]> {
    let mut rng = block_rng(seed, streams::SOLVER_INIT, 0);
    (0..count)
        .map(|_| {
            let a: f64 = rng.random_range(-2.0..2.0);
            let k: f64 = rng.random_range(-2.0..2.0);
            [scale[0] * a.exp(), scale[1] * k.exp()]
        })
        .collect()
}
