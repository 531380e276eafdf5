use mrisk::finite_sample::{empirical_risk, generate, n_for};
use mrisk::system_solver::*;
use mrisk::threshold::delta_perfect_unreg;
use mrisk::{ExpectationEngine, MarginalLaw, ScalarConvexFunction};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const TOL: f64 = 1e-6;

fn engine() -> ExpectationEngine {
    ExpectationEngine::default()
}

#[test]
fn square_loss_closed_form() {
    let e = engine();
    let sq = ScalarConvexFunction::square();
    for sigma in [0.5, 1.0, 2.0] {
        for delta in [1.5, 2.0, 4.0] {
            let sol = solve_unreg(&e, &sq, &MarginalLaw::gaussian(0.0, sigma), delta, TOL).unwrap();
            let alpha = sigma / (delta - 1.0f64).sqrt();
            let kappa = 1.0 / (delta - 1.0);
            assert_eq!(sol.status, Status::Converged);
            assert!((sol.alpha - alpha).abs() < 1e-5 * alpha, "{} vs {alpha}", sol.alpha);
            assert!((sol.kappa - kappa).abs() < 1e-5 * kappa, "{} vs {kappa}", sol.kappa);
        }
    }
}

#[test]
fn l1_above_the_threshold_is_at_zero() {
    let e = engine();
    let law = MarginalLaw::sparse_gaussian(0.1);
    for delta in [1.5, 2.0, 3.0] {
        let sol = solve_unreg(&e, &ScalarConvexFunction::abs(), &law, delta, TOL).unwrap();
        assert_eq!(sol.status, Status::AtZero);
        assert_eq!(sol.alpha, 0.0);
        assert!(sol.right_derivative_at_zero.unwrap() >= 0.0);
    }
}

#[test]
fn residuals_hold_under_a_fresh_seed() {
    let e = engine();
    let fresh = e.with_seed(0xfeed);
    for (loss, noise, delta) in [
        (ScalarConvexFunction::abs(), MarginalLaw::sparse_gaussian(0.3), 1.3),
        (ScalarConvexFunction::huber(1.0), MarginalLaw::sparse_gaussian(0.1), 2.0),
        (ScalarConvexFunction::quantile(0.3), MarginalLaw::gaussian(0.0, 1.0), 1.5),
        (ScalarConvexFunction::abs(), MarginalLaw::sparse_cauchy(0.5), 1.5),
    ] {
        let sol = solve_unreg(&e, &loss, &noise, delta, TOL).unwrap();
        assert_eq!(sol.status, Status::Converged);
        let (res, _) = unreg_residuals(&fresh, &loss, &noise, delta, sol.alpha, sol.kappa).unwrap();
        for r in res {
            assert!(r.abs() <= sol.tolerance, "{loss:?}: {r} > {}", sol.tolerance);
        }
    }
}

#[test]
fn potential_is_zero_at_zero_and_minimized_at_the_solution() {
    let e = engine();
    let sq = ScalarConvexFunction::square();
    let noise = MarginalLaw::gaussian(0.0, 1.0);
    assert_eq!(potential_unreg(&e, &sq, &noise, 0.0, 2.0).unwrap(), 0.0);
    let at = |a: f64| potential_unreg(&e, &sq, &noise, a, 2.0).unwrap();
    let m1 = at(1.0);
    for a in [0.5, 0.9, 0.99, 1.01, 1.1, 2.0] {
        assert!(at(a) > m1, "M({a}) <= M(1)");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn potential_is_midpoint_convex(a in 0.0f64..3.0, b in 0.0f64..3.0, which in 0usize..3) {
        let e = engine();
        let (loss, noise, delta) = [
            (ScalarConvexFunction::abs(), MarginalLaw::sparse_gaussian(0.3), 1.3),
            (ScalarConvexFunction::huber(1.0), MarginalLaw::sparse_gaussian(0.1), 2.0),
            (ScalarConvexFunction::square(), MarginalLaw::gaussian(0.0, 1.0), 2.0),
        ][which].clone();
        let m = |x: f64| potential_unreg(&e, &loss, &noise, x, delta).unwrap();
        let mid = m(0.5 * (a + b));
        let avg = 0.5 * (m(a) + m(b));
        prop_assert!(mid <= avg + 1e-9, "{mid} > {avg}");
    }
}

#[test]
fn transition_is_bracketed_at_the_threshold() {
    let e = engine();
    let abs = ScalarConvexFunction::abs();
    let law = MarginalLaw::sparse_gaussian(0.1);
    let dp = delta_perfect_unreg(&e, &abs, &law).unwrap().delta_perfect;
    let below = solve_unreg(&e, &abs, &law, dp - 1e-3, TOL).unwrap();
    let above = solve_unreg(&e, &abs, &law, dp + 1e-3, TOL).unwrap();
    assert_eq!(below.status, Status::Converged);
    assert!(below.alpha > 0.0);
    assert_eq!(above.status, Status::AtZero);
}

#[test]
fn abs_loss_is_equivariant_under_noise_scaling() {
    let e = engine();
    let abs = ScalarConvexFunction::abs();
    let law = MarginalLaw::sparse_gaussian(0.3);
    let base = solve_unreg(&e, &abs, &law, 1.3, TOL).unwrap();
    for c in [0.5, 2.0] {
        let sol = solve_unreg(&e, &abs, &law.scaled(c), 1.3, TOL).unwrap();
        assert!((sol.alpha - c * base.alpha).abs() < 1e-5 * c * base.alpha, "c={c}");
        assert!((sol.kappa - c * base.kappa).abs() < 1e-5 * c * base.kappa, "c={c}");
    }
}

/// Mean of `||x_hat - x0||^2 / p` for ridge at `(n, p)` over `reps` instances.
fn ridge_risk(p: usize, delta: f64, lambda: f64, reps: u64) -> (f64, f64) {
    let n = n_for(p, delta);
    let law = MarginalLaw::gaussian(0.0, 1.0);
    let risks: Vec<f64> = (0..reps)
        .map(|seed| {
            let inst = generate(n, p, &law, &law, 1000 + seed).unwrap();
            let at = inst.a.transpose();
            let gram: DMatrix<f64> = &at * &inst.a + DMatrix::identity(p, p) * lambda;
            let rhs: DVector<f64> = &at * &inst.y;
            let x = gram.cholesky().unwrap().solve(&rhs);
            empirical_risk(&inst, &x)
        })
        .collect();
    let m = risks.iter().sum::<f64>() / reps as f64;
    let sd = (risks.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (reps as f64 - 1.0)).sqrt();
    (m, sd / (reps as f64).sqrt())
}

#[test]
fn ridge_matches_large_instances() {
    let e = engine();
    let sq = ScalarConvexFunction::square();
    let law = MarginalLaw::gaussian(0.0, 1.0);
    for lambda in [0.5, 1.0] {
        let sol = solve_reg(&e, &sq, &sq.scaled(lambda), &law, &law, 2.0, TOL).unwrap();
        let (mean, se) = ridge_risk(500, 2.0, lambda, 50);
        let alpha = mean.sqrt();
        assert!((sol.alpha - alpha).abs() < 0.02 * sol.alpha, "lambda={lambda}: {} vs {alpha} (se {se})", sol.alpha);
    }
}

#[test]
fn vanishing_penalty_recovers_the_unregularized_solution() {
    let e = engine();
    let huber = ScalarConvexFunction::huber(1.0);
    let noise = MarginalLaw::sparse_gaussian(0.3);
    let signal = MarginalLaw::gaussian(0.0, 1.0);
    let unreg = solve_unreg(&e, &huber, &noise, 2.0, TOL).unwrap();
    let reg = solve_reg(&e, &huber, &ScalarConvexFunction::square().scaled(1e-7), &noise, &signal, 2.0, TOL).unwrap();
    assert_eq!(reg.status, Status::Converged);
    assert!((reg.alpha - unreg.alpha).abs() < 10.0 * TOL * unreg.alpha, "{} vs {}", reg.alpha, unreg.alpha);
    assert!((reg.kappa - unreg.kappa).abs() < 10.0 * TOL * unreg.kappa, "{} vs {}", reg.kappa, unreg.kappa);
}

#[test]
fn regularized_residuals_hold_under_a_fresh_seed() {
    let e = engine();
    let abs = ScalarConvexFunction::abs();
    let noise = MarginalLaw::sparse_gaussian(0.3);
    let signal = MarginalLaw::sparse_gaussian(0.1);
    let sol = solve_reg(&e, &abs, &abs, &noise, &signal, 0.7, TOL).unwrap();
    assert_eq!(sol.status, Status::Converged);
    let x = [sol.alpha, sol.beta.unwrap(), sol.kappa, sol.nu.unwrap()];
    let (res, _) = reg_residuals(&e.with_seed(31), &abs, &abs, &noise, &signal, 0.7, x).unwrap();
    assert_eq!(res.len(), 4);
    assert!(res.iter().all(|r| r.abs() <= TOL), "{res:?}");
}

#[test]
fn random_starts_reach_the_same_solution() {
    let e = engine();
    let abs = ScalarConvexFunction::abs();
    let noise = MarginalLaw::sparse_gaussian(0.3);
    let signal = MarginalLaw::sparse_gaussian(0.1);
    let reg = abs.scaled(0.5);
    let base = solve_reg(&e, &abs, &reg, &noise, &signal, 0.7, TOL).unwrap();
    let b = [base.alpha, base.beta.unwrap(), base.kappa, base.nu.unwrap()];
    for start in random_starts(3, 10, [base.alpha, base.kappa]) {
        let sol = solve_reg_from(&e, &abs, &reg, &noise, &signal, 0.7, TOL, Some(start)).unwrap();
        let s = [sol.alpha, sol.beta.unwrap(), sol.kappa, sol.nu.unwrap()];
        for (u, v) in s.iter().zip(&b) {
            assert!((u - v).abs() <= 100.0 * TOL * v.abs(), "start {start:?}: {s:?} vs {b:?}");
        }
    }
}

#[test]
fn huge_penalty_shrinks_to_zero() {
    let e = engine();
    let abs = ScalarConvexFunction::abs();
    let noise = MarginalLaw::sparse_gaussian(0.3);
    let signal = MarginalLaw::sparse_gaussian(0.1);
    let curve = risk_curve(&e, &abs, &abs, &noise, &signal, 0.7, &[10.0, 100.0, 1e4], TOL).unwrap();
    let last = curve.last().unwrap();
    assert!((last.alpha.powi(2) - signal.second_moment()).abs() < 1e-3, "{}", last.alpha);
}
