//! Scalar laws for the noise `Z` and the signal `X`, and expectations of
//! functionals of `(G, W)` with `G ~ N(0,1)` independent of `W`.

mod engine;
pub mod quadrature;
pub mod rng;

pub use engine::{EngineSettings, Estimate, ExpectationEngine, Growth, KinkLines, WeightedPoints};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::special::norm_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub at: f64,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Continuous {
    Gaussian { mean: f64, sd: f64 },
    Cauchy { location: f64, scale: f64 },
}

impl Continuous {
    /// `P(|W| > q)` for this component.
    fn tail_abs(&self, q: f64) -> f64 {
        match *self {
            Continuous::Gaussian { mean, sd } => norm_cdf((-q - mean) / sd) + norm_cdf((mean - q) / sd),
            Continuous::Cauchy { location, scale } => {
                let inside = ((q - location) / scale).atan() - ((-q - location) / scale).atan();
                (1.0 - inside / PI).max(0.0)
            }
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Continuous::Gaussian { mean, sd } => {
                let g: f64 = rng.sample(StandardNormal);
                mean + sd * g
            }
            Continuous::Cauchy { location, scale } => {
                let u: f64 = rng.random();
                location + scale * (PI * (u - 0.5)).tan()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    #[serde(flatten)]
    pub dist: Continuous,
    pub w: f64,
}

/// A finite mixture of point masses, Gaussians and Cauchy laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MarginalLaw {
    #[serde(default)]
    pub atoms: Vec<Atom>,
    #[serde(default)]
    pub continuous: Vec<Component>,
}

impl MarginalLaw {
    pub fn point(at: f64) -> Self {
        MarginalLaw { atoms: vec![Atom { at, w: 1.0 }], continuous: Vec::new() }
    }

    pub fn gaussian(mean: f64, sd: f64) -> Self {
        MarginalLaw {
            atoms: Vec::new(),
            continuous: vec![Component { dist: Continuous::Gaussian { mean, sd }, w: 1.0 }],
        }
    }

    pub fn cauchy(location: f64, scale: f64) -> Self {
        MarginalLaw {
            atoms: Vec::new(),
            continuous: vec![Component { dist: Continuous::Cauchy { location, scale }, w: 1.0 }],
        }
    }

    /// `(1 - s) delta_0 + s N(0, 1)`.
    pub fn sparse_gaussian(s: f64) -> Self {
        Self::point(0.0).mix(&Self::gaussian(0.0, 1.0), s)
    }

    /// `(1 - s) delta_0 + s Cauchy(0, 1)`.
    pub fn sparse_cauchy(s: f64) -> Self {
        Self::point(0.0).mix(&Self::cauchy(0.0, 1.0), s)
    }

    /// `(1 - s) self + s other`; zero-weight parts are dropped.
    pub fn mix(&self, other: &MarginalLaw, s: f64) -> Self {
        let mut out = MarginalLaw::default();
        for (law, k) in [(self, 1.0 - s), (other, s)] {
            if k == 0.0 {
                continue;
            }
            out.atoms.extend(law.atoms.iter().map(|a| Atom { at: a.at, w: k * a.w }));
            out.continuous.extend(law.continuous.iter().map(|c| Component { dist: c.dist, w: k * c.w }));
        }
        out
    }

    /// Law of `c W`.
    pub fn scaled(&self, c: f64) -> Self {
        assert!(c > 0.0, "scale must be positive");
        MarginalLaw {
            atoms: self.atoms.iter().map(|a| Atom { at: c * a.at, w: a.w }).collect(),
            continuous: self
                .continuous
                .iter()
                .map(|comp| Component {
                    dist: match comp.dist {
                        Continuous::Gaussian { mean, sd } => Continuous::Gaussian { mean: c * mean, sd: c * sd },
                        Continuous::Cauchy { location, scale } => {
                            Continuous::Cauchy { location: c * location, scale: c * scale }
                        }
                    },
                    w: comp.w,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut total = 0.0;
        for a in &self.atoms {
            if !a.at.is_finite() || !a.w.is_finite() || a.w < 0.0 {
                return Err(Error::InvalidInput(format!("bad atom {a:?}")));
            }
            total += a.w;
        }
        for c in &self.continuous {
            if !c.w.is_finite() || c.w < 0.0 {
                return Err(Error::InvalidInput(format!("bad component weight {}", c.w)));
            }
            let ok = match c.dist {
                Continuous::Gaussian { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
                Continuous::Cauchy { location, scale } => location.is_finite() && scale.is_finite() && scale > 0.0,
            };
            if !ok {
                return Err(Error::InvalidInput(format!("bad component {:?}", c.dist)));
            }
            total += c.w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("weights sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn prob_nonzero(&self) -> f64 {
        let atoms: f64 = self.atoms.iter().filter(|a| a.at != 0.0).map(|a| a.w).sum();
        let cont: f64 = self.continuous.iter().map(|c| c.w).sum();
        atoms + cont
    }

    pub fn has_heavy_tail(&self) -> bool {
        self.continuous
            .iter()
            .any(|c| c.w > 0.0 && matches!(c.dist, Continuous::Cauchy { .. }))
    }

    /// `E[W^2]`, infinite when a Cauchy component has positive weight.
    pub fn second_moment(&self) -> f64 {
        if self.has_heavy_tail() {
            return f64::INFINITY;
        }
        let atoms: f64 = self.atoms.iter().map(|a| a.w * a.at * a.at).sum();
        let cont: f64 = self
            .continuous
            .iter()
            .map(|c| match c.dist {
                Continuous::Gaussian { mean, sd } => c.w * (mean * mean + sd * sd),
                Continuous::Cauchy { .. } => 0.0,
            })
            .sum();
        atoms + cont
    }

    /// `P(|W| > q)`.
    pub fn tail_prob(&self, q: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().filter(|a| a.at.abs() > q).map(|a| a.w).sum();
        let cont: f64 = self.continuous.iter().map(|c| c.w * c.dist.tail_abs(q)).sum();
        (atoms + cont).min(1.0)
    }

    /// `inf { q >= 0 : P(|W| > q) <= x }`, by bisection on the exact distribution function.
    pub fn abs_quantile(&self, x: f64) -> f64 {
        if self.tail_prob(0.0) <= x {
            return 0.0;
        }
        let mut hi = 1.0;
        while self.tail_prob(hi) > x {
            hi *= 2.0;
            if hi > 1e300 {
                return f64::INFINITY;
            }
        }
        let mut lo = 0.0;
        while hi - lo > 1e-10 * hi.max(1e-300) && hi - lo > 1e-300 {
            let mid = 0.5 * (lo + hi);
            if self.tail_prob(mid) > x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// `n` iid draws, reproducible from `seed` and independent of the thread count.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        self.sample_stream(n, seed, rng::streams::SAMPLE)
    }

    pub fn sample_stream(&self, n: usize, seed: u64, stream: u64) -> Vec<f64> {
        let blocks: Vec<(u64, std::ops::Range<usize>)> = rng::blocks(n).collect();
        let chunks: Vec<Vec<f64>> = blocks
            .into_par_iter()
            .map(|(b, range)| {
                let mut r = rng::block_rng(seed, stream, b);
                range.map(|_| self.draw(&mut r)).collect()
            })
            .collect();
        chunks.concat()
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for a in &self.atoms {
            acc += a.w;
            if u < acc {
                return a.at;
            }
        }
        for c in &self.continuous {
            acc += c.w;
            if u < acc {
                return c.dist.draw(rng);
            }
        }
        // rounding in the weight sum: fall back to the last part with mass
        if let Some(c) = self.continuous.iter().rev().find(|c| c.w > 0.0) {
            return c.dist.draw(rng);
        }
        self.atoms.iter().rev().find(|a| a.w > 0.0).map(|a| a.at).unwrap_or(0.0)
    }

    /// Compact description such as `0.9*delta(0)+0.1*normal(0,1)`.
    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        for a in &self.atoms {
            parts.push(format!("{}*delta({})", a.w, a.at));
        }
        for c in &self.continuous {
            match c.dist {
                Continuous::Gaussian { mean, sd } => parts.push(format!("{}*normal({mean},{sd})", c.w)),
                Continuous::Cauchy { location, scale } => parts.push(format!("{}*cauchy({location},{scale})", c.w)),
            }
        }
        parts.join("+")
    }
}
