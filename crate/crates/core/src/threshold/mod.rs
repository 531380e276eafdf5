//! The functional `J_f(t) = E[dist(G, t ∂f(W))^2]`, its infimum over `t > 0`
//! and the perfect-recovery thresholds built from it.

mod bounds;

pub use bounds::{
    alpha_upper_bound_reg, alpha_upper_bound_unreg, reg_bound_constant, tail_cutoff, unreg_bound_constant,
};

use serde::{Deserialize, Serialize};

use crate::defaults;
use crate::error::{Error, Result};
use crate::marginals::{ExpectationEngine, MarginalLaw};
use crate::optim::golden_section;
use crate::scalar_convex::{Role, ScalarConvexFunction};
use crate::special::interval_dist_sq;

/// Output of the threshold computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    #[serde(with = "crate::extended")]
    pub delta_perfect: f64,
    #[serde(with = "crate::extended")]
    pub t_star: f64,
    pub j_loss_min: f64,
    #[serde(default, with = "crate::extended::option", skip_serializing_if = "Option::is_none")]
    pub j_reg_min: Option<f64>,
    #[serde(default, with = "crate::extended::option", skip_serializing_if = "Option::is_none")]
    pub t_star_reg: Option<f64>,
    /// `1 - j_loss_min` was positive but below the cutoff and `delta_perfect` was rounded to infinity.
    pub borderline: bool,
}

/// `J_f(t)` for a fixed `(f, law)`, with the law flattened once.
///
/// Points where `∂f` is a singleton `{a}` contribute `1 + t^2 a^2` and are
/// aggregated; genuine intervals are kept and evaluated in closed form.
#[derive(Debug, Clone)]
pub struct DistFunctional {
    singleton_mass: f64,
    singleton_m2: f64,
    intervals: Vec<(f64, f64, f64)>,
    mc_var_m2: f64,
}

impl DistFunctional {
    pub fn new(engine: &ExpectationEngine, f: &ScalarConvexFunction, law: &MarginalLaw) -> Self {
        let pts = engine.weighted_points(law, &f.kinks());
        let mut singleton_mass = 0.0;
        let mut singleton_m2 = 0.0;
        let mut intervals: Vec<(f64, f64, f64)> = Vec::new();
        let mut push = |w: f64, weight: f64, mass: &mut f64, m2: &mut f64| {
            let s = f.subdiff(w);
            if s.is_singleton() {
                *mass += weight;
                *m2 += weight * s.lo * s.lo;
            } else {
                intervals.push((s.lo, s.hi, weight));
            }
        };
        for &(w, weight) in &pts.nodes {
            push(w, weight, &mut singleton_mass, &mut singleton_m2);
        }
        let mut mc_var_m2 = 0.0;
        for (cw, draws) in &pts.samples {
            let n = draws.len() as f64;
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for &w in draws {
                let s = f.subdiff(w);
                let a2 = s.lo * s.lo;
                s1 += a2;
                s2 += a2 * a2;
                push(w, cw / n, &mut singleton_mass, &mut singleton_m2);
            }
            let mean = s1 / n;
            let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
            mc_var_m2 += cw * cw * var / n;
        }
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut merged: Vec<(f64, f64, f64)> = Vec::with_capacity(intervals.len());
        for it in intervals {
            match merged.last_mut() {
                Some(last) if last.0 == it.0 && last.1 == it.1 => last.2 += it.2,
                _ => merged.push(it),
            }
        }
        DistFunctional { singleton_mass, singleton_m2, intervals: merged, mc_var_m2 }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let mut j = self.singleton_mass + t * t * self.singleton_m2;
        for &(lo, hi, w) in &self.intervals {
            j += w * interval_dist_sq(t * lo, t * hi);
        }
        j
    }

    /// Monte Carlo standard error of `eval(t)`; zero without Cauchy components.
    pub fn std_error(&self, t: f64) -> f64 {
        t * t * self.mc_var_m2.sqrt()
    }

    /// `(t_star, inf_t J(t))`. A minimum at the lower end of the probe range
    /// is reported as `(0, 1)`; one at the upper end as `(inf, J(1e8))`.
    pub fn minimize(&self) -> (f64, f64) {
        let per_decade = 16;
        let decades = (defaults::T_PROBE_MAX / defaults::T_PROBE_MIN).log10().round() as usize;
        let grid = defaults::log_grid(defaults::T_PROBE_MIN, defaults::T_PROBE_MAX, decades * per_decade + 1);
        let values: Vec<f64> = grid.iter().map(|&t| self.eval(t)).collect();
        let mut k = 0;
        for (i, v) in values.iter().enumerate() {
            if *v < values[k] {
                k = i;
            }
        }
        if k + 1 == grid.len() {
            return (f64::INFINITY, values[k]);
        }
        let (lo, hi) = if k == 0 { (0.0, grid[1]) } else { (grid[k - 1], grid[k + 1]) };
        let m = golden_section(|t| self.eval(t), lo, hi, 1e-9 * hi);
        if m.fx >= 1.0 || m.x == 0.0 {
            return (0.0, 1.0);
        }
        (m.x, m.fx)
    }
}

/// `E[dist(G, t ∂f(W))^2]` with `G ~ N(0,1)` independent of `W`.
pub fn expected_dist_sq(engine: &ExpectationEngine, t: f64, f: &ScalarConvexFunction, law: &MarginalLaw) -> f64 {
    DistFunctional::new(engine, f, law).eval(t)
}

/// `(t_star, inf_{t>0} E[dist(G, t ∂f(W))^2])`.
pub fn minimize_j(engine: &ExpectationEngine, f: &ScalarConvexFunction, law: &MarginalLaw) -> (f64, f64) {
    DistFunctional::new(engine, f, law).minimize()
}

/// `numerator / (1 - j)_+`, infinite when `1 - j <= 1e-12`. The flag marks a
/// positive gap that was rounded to infinity.
pub fn threshold_ratio(numerator: f64, j_loss: f64) -> (f64, bool) {
    let gap = 1.0 - j_loss;
    if gap <= 1e-12 {
        (f64::INFINITY, gap > 0.0)
    } else {
        (numerator / gap, false)
    }
}

fn check_noise(loss: &ScalarConvexFunction, noise: &MarginalLaw) -> Result<()> {
    loss.validate_assumptions(Role::Loss)?;
    noise.validate()?;
    if noise.prob_nonzero() <= 0.0 {
        return Err(Error::DegenerateNoise);
    }
    Ok(())
}

/// Threshold for the unregularized estimator: `1 / (1 - inf_t J_loss(t))_+`.
pub fn delta_perfect_unreg(
    engine: &ExpectationEngine,
    loss: &ScalarConvexFunction,
    noise: &MarginalLaw,
) -> Result<ThresholdReport> {
    check_noise(loss, noise)?;
    let (t_star, j) = minimize_j(engine, loss, noise);
    let (delta_perfect, borderline) = threshold_ratio(1.0, j);
    Ok(ThresholdReport {
        delta_perfect,
        t_star,
        j_loss_min: j,
        j_reg_min: None,
        t_star_reg: None,
        borderline,
    })
}

/// Threshold for the regularized estimator: `inf_t J_reg(t) / (1 - inf_t J_loss(t))_+`.
pub fn delta_perfect_reg(
    engine: &ExpectationEngine,
    loss: &ScalarConvexFunction,
    reg: &ScalarConvexFunction,
    noise: &MarginalLaw,
    signal: &MarginalLaw,
) -> Result<ThresholdReport> {
    check_noise(loss, noise)?;
    reg.validate_assumptions(Role::Reg)?;
    signal.validate()?;
    let (t_star, j_loss) = minimize_j(engine, loss, noise);
    let (t_reg, j_reg) = minimize_j(engine, reg, signal);
    let (delta_perfect, borderline) = threshold_ratio(j_reg, j_loss);
    Ok(ThresholdReport {
        delta_perfect,
        t_star,
        j_loss_min: j_loss,
        j_reg_min: Some(j_reg),
        t_star_reg: Some(t_reg),
        borderline,
    })
}
