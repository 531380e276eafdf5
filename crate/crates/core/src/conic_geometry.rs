//! Distances to the cone generated by `∂h(w_1) x ... x ∂h(w_m)` and Monte
//! Carlo estimates of its statistical dimension.
//!
//! `dist(g, cone)^2 = inf_{t >= 0} sum_i dist(g_i, t ∂h(w_i))^2`, and as
//! `m -> ∞` the normalized distance converges to the threshold functional
//! `inf_t E[dist(G, t ∂h(W))^2]`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marginals::rng::{block_rng, streams};
use crate::marginals::MarginalLaw;
use crate::optim::golden_section;
use crate::scalar_convex::{ScalarConvexFunction, SubdiffInterval};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatDimEstimate {
    pub m: usize,
    pub samples: usize,
    /// Mean of `dist(g, cone)^2`.
    pub mean_dist_sq: f64,
    /// `1 - mean_dist_sq / m`.
    pub statdim_fraction: f64,
    /// Standard error of `mean_dist_sq`; the fraction's is `std_error / m`.
    pub std_error: f64,
}

fn objective(g: &[f64], boxes: &[SubdiffInterval], t: f64) -> f64 {
    g.iter().zip(boxes).map(|(&gi, b)| b.scaled(t).dist_sq(gi)).sum()
}

/// Squared distance from `g` to the cone generated by `∂h(w_1) x ... x ∂h(w_m)`.
pub fn dist_to_cone_sq(g: &[f64], w: &[f64], h: &ScalarConvexFunction) -> f64 {
    assert_eq!(g.len(), w.len(), "g and w must have the same length");
    let boxes: Vec<SubdiffInterval> = w.iter().map(|&wi| h.subdiff(wi)).collect();
    dist_to_cone_sq_boxes(g, &boxes)
}

/// [`dist_to_cone_sq`] with the subdifferentials given.
pub fn dist_to_cone_sq_boxes(g: &[f64], boxes: &[SubdiffInterval]) -> f64 {
    let f = |t: f64| objective(g, boxes, t);
    let g_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = boxes
        .iter()
        .flat_map(|b| [b.lo.abs(), b.hi.abs()])
        .filter(|v| *v > 0.0 && v.is_finite())
        .fold(f64::INFINITY, f64::min);
    if g_norm == 0.0 || !scale.is_finite() {
        return f(0.0);
    }
    let mut hi = 10.0 * g_norm / scale;
    let mut f_hi = f(hi);
    for _ in 0..200 {
        let f_next = f(2.0 * hi);
        if f_next >= f_hi {
            break;
        }
        hi *= 2.0;
        f_hi = f_next;
    }
    let m = golden_section(f, 0.0, 2.0 * hi, 1e-12 * hi);
    m.fx.min(f(0.0))
}

/// Monte Carlo estimate of `1 - E[dist(g, cone(∂h(w)))^2] / m` with
/// `g ~ N(0, I_m)` and `w_i ~ law` iid, from `samples` draws.
pub fn statdim_fraction(
    h: &ScalarConvexFunction,
    law: &MarginalLaw,
    m: usize,
    samples: usize,
    seed: u64,
) -> Result<StatDimEstimate> {
    if m == 0 || samples == 0 {
        return Err(Error::InvalidInput(format!("m and samples must be positive, got m={m}, samples={samples}")));
    }
    law.validate()?;
    let dists: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = block_rng(seed, streams::STATDIM, k as u64);
            let g: Vec<f64> = (0..m).map(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
            let w = law.sample_stream(m, crate::marginals::rng::derive_seed(seed, k as u64), streams::STATDIM);
            dist_to_cone_sq(&g, &w, h)
        })
        .collect();
    let nf = samples as f64;
    let mean = dists.iter().sum::<f64>() / nf;
    let var = if samples > 1 { dists.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0) } else { 0.0 };
    Ok(StatDimEstimate {
        m,
        samples,
        mean_dist_sq: mean,
        statdim_fraction: 1.0 - mean / m as f64,
        std_error: (var / nf).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_subgradients_swallow_g() {
        let g = [0.3, -2.0, 1.5];
        let d = dist_to_cone_sq(&g, &[0.0; 3], &ScalarConvexFunction::abs());
        assert!(d < 1e-18, "{d}");
    }

    #[test]
    fn ray_projection() {
        let g = [0.3, -2.0, 1.5, 0.7];
        let w = [1.0, -3.0, 2.0, -0.5];
        let u: Vec<f64> = w.iter().map(|v: &f64| v.signum() / 2.0).collect();
        let gu: f64 = g.iter().zip(&u).map(|(a, b)| a * b).sum();
        let want = g.iter().map(|v| v * v).sum::<f64>() - gu.max(0.0).powi(2);
        let d = dist_to_cone_sq(&g, &w, &ScalarConvexFunction::abs());
        assert!((d - want).abs() < 1e-12, "{d} {want}");
        // g pointing away from the ray: distance is ||g||^2
        let neg: Vec<f64> = g.iter().zip(&u).map(|(_, b)| -b).collect();
        let d = dist_to_cone_sq(&neg, &w, &ScalarConvexFunction::abs());
        assert!((d - 1.0).abs() < 1e-12);
    }
}
