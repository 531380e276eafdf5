use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::{Arc, Mutex};

use super::quadrature::{gauss_hermite, gauss_legendre, Rule};
use super::rng::{block_rng, blocks, streams, BLOCK_LEN};
use super::{Continuous, MarginalLaw};
use crate::defaults;
use crate::error::{Error, Result};
use crate::special::norm_pdf;

/// Gaussian integrals are truncated to `[-CUTOFF, CUTOFF]` when split at kinks.
const CUTOFF: f64 = 9.0;
const PANEL: f64 = 2.0;
const GL_FINE: usize = 16;
const GL_COARSE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineSettings {
    pub gh_nodes: usize,
    pub mc_samples: usize,
    pub master_seed: u64,
}

impl Default for EngineSettings {
    fn default() -> Self {
        EngineSettings {
            gh_nodes: defaults::GH_NODES,
            mc_samples: defaults::MC_SAMPLES,
            master_seed: defaults::MASTER_SEED,
        }
    }
}

/// How an integrand behaves as `|w| -> infinity`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Growth {
    /// Bounded in `w` for fixed `g`, or growing at most like a Lipschitz bound;
    /// safe against Cauchy components.
    WBounded,
    Unbounded,
}

/// The integrand is smooth off the lines `slope * g + w = offset`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KinkLines {
    pub slope: f64,
    pub offsets: Vec<f64>,
}

impl KinkLines {
    pub fn none() -> Self {
        KinkLines::default()
    }

    pub fn new(slope: f64, offsets: Vec<f64>) -> Self {
        KinkLines { slope, offsets }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<const N: usize> {
    pub value: [f64; N],
    pub error: [f64; N],
}

/// A law flattened into weighted points: quadrature nodes for atoms and
/// Gaussian components, and per-component Monte Carlo draws for Cauchy parts.
#[derive(Debug, Clone, Default)]
pub struct WeightedPoints {
    pub nodes: Vec<(f64, f64)>,
    /// `(component weight, draws)`; each draw carries weight `component weight / draws.len()`.
    pub samples: Vec<(f64, Vec<f64>)>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Level {
    Fine,
    Coarse,
}

/// Deterministic expectations over `(G, W)`.
#[derive(Debug, Clone)]
pub struct ExpectationEngine {
    settings: EngineSettings,
    gh: Arc<Rule>,
    gh_coarse: Arc<Rule>,
    gl: Arc<Rule>,
    gl_coarse: Arc<Rule>,
    draws: Arc<Mutex<Vec<CachedDraws>>>,
}

/// Joint `(G, W)` draws of one heavy-tailed component.
#[derive(Debug)]
struct CachedDraws {
    seed: u64,
    component: usize,
    dist: Continuous,
    n: usize,
    points: Arc<Vec<[f64; 2]>>,
}

impl Default for ExpectationEngine {
    fn default() -> Self {
        Self::from_settings(EngineSettings::default())
    }
}

impl ExpectationEngine {
    pub fn new(gh_nodes: usize, mc_samples: usize, master_seed: u64) -> Self {
        Self::from_settings(EngineSettings { gh_nodes, mc_samples, master_seed })
    }

    pub fn from_settings(settings: EngineSettings) -> Self {
        assert!(settings.gh_nodes >= 2, "need at least two Gauss-Hermite nodes");
        assert!(settings.mc_samples >= 2, "need at least two Monte Carlo samples");
        ExpectationEngine {
            settings,
            gh: Arc::new(gauss_hermite(settings.gh_nodes)),
            gh_coarse: Arc::new(gauss_hermite(settings.gh_nodes.div_ceil(2).max(2))),
            gl: Arc::new(gauss_legendre(GL_FINE)),
            gl_coarse: Arc::new(gauss_legendre(GL_COARSE)),
            draws: Arc::new(Mutex::new(Vec::new())),
        }
    }

    pub fn settings(&self) -> EngineSettings {
        self.settings
    }

    pub fn gh_nodes(&self) -> usize {
        self.settings.gh_nodes
    }

    pub fn mc_samples(&self) -> usize {
        self.settings.mc_samples
    }

    pub fn master_seed(&self) -> u64 {
        self.settings.master_seed
    }

    /// Same quadrature, different Monte Carlo seed.
    pub fn with_seed(&self, master_seed: u64) -> Self {
        let mut e = self.clone();
        e.settings.master_seed = master_seed;
        e
    }

    /// `E[phi(G, W)]` with an error estimate.
    pub fn expect_gw<F>(&self, law: &MarginalLaw, growth: Growth, phi: F) -> Result<(f64, f64)>
    where
        F: Fn(f64, f64) -> f64 + Sync,
    {
        let e = self.expect_gw_vec(law, growth, &KinkLines::none(), |g, w| [phi(g, w)])?;
        Ok((e.value[0], e.error[0]))
    }

    /// Vector-valued `E[phi(G, W)]` with an error estimate per coordinate. The
    /// estimate compares fine and coarse quadrature and adds three Monte Carlo
    /// standard errors.
    pub fn expect_gw_vec<const N: usize, F>(
        &self,
        law: &MarginalLaw,
        growth: Growth,
        kinks: &KinkLines,
        phi: F,
    ) -> Result<Estimate<N>>
    where
        F: Fn(f64, f64) -> [f64; N] + Sync,
    {
        let (fine, abs_sum) = self.quadrature_part(law, kinks, &phi, Level::Fine);
        let (coarse, _) = self.quadrature_part(law, kinks, &phi, Level::Coarse);
        let (mc, se) = self.monte_carlo_part(law, growth, &phi)?;
        let mut value = [0.0; N];
        let mut error = [0.0; N];
        for i in 0..N {
            value[i] = fine[i] + mc[i];
            error[i] = (fine[i] - coarse[i]).abs() + 1e-13 * abs_sum[i] + 3.0 * se[i];
        }
        Ok(Estimate { value, error })
    }

    /// Vector-valued `E[phi(G, W)]` on the fine rule only.
    pub fn mean_gw<const N: usize, F>(
        &self,
        law: &MarginalLaw,
        growth: Growth,
        kinks: &KinkLines,
        phi: F,
    ) -> Result<[f64; N]>
    where
        F: Fn(f64, f64) -> [f64; N] + Sync,
    {
        let (mut value, _) = self.quadrature_part(law, kinks, &phi, Level::Fine);
        let (mc, _) = self.monte_carlo_part(law, growth, &phi)?;
        for i in 0..N {
            value[i] += mc[i];
        }
        Ok(value)
    }

    fn quadrature_part<const N: usize, F>(
        &self,
        law: &MarginalLaw,
        kinks: &KinkLines,
        phi: &F,
        level: Level,
    ) -> ([f64; N], [f64; N])
    where
        F: Fn(f64, f64) -> [f64; N],
    {
        let (gh, gl) = match level {
            Level::Fine => (&*self.gh, &*self.gl),
            Level::Coarse => (&*self.gh_coarse, &*self.gl_coarse),
        };
        let mut acc = [0.0; N];
        let mut abs = [0.0; N];
        let mut add = |weight: f64, v: [f64; N]| {
            for i in 0..N {
                acc[i] += weight * v[i];
                abs[i] += (weight * v[i]).abs();
            }
        };
        let mut breaks = Vec::with_capacity(kinks.offsets.len());
        for atom in &law.atoms {
            if atom.w == 0.0 {
                continue;
            }
            breaks.clear();
            if kinks.slope != 0.0 {
                breaks.extend(kinks.offsets.iter().map(|u| (u - atom.at) / kinks.slope));
            }
            let w = atom.at;
            gauss_integral(gh, gl, &mut breaks, |g, wt| add(atom.w * wt, phi(g, w)));
        }
        for comp in &law.continuous {
            let (mean, sd) = match comp.dist {
                Continuous::Gaussian { mean, sd } => (mean, sd),
                Continuous::Cauchy { .. } => continue,
            };
            if comp.w == 0.0 {
                continue;
            }
            if kinks.offsets.is_empty() {
                for (y, wy) in gh.nodes.iter().zip(&gh.weights) {
                    let w = mean + sd * y;
                    for (g, wg) in gh.nodes.iter().zip(&gh.weights) {
                        add(comp.w * wy * wg, phi(*g, w));
                    }
                }
            } else {
                // rotate (G, (W-mean)/sd) so that the kink lines become s = const
                let a = kinks.slope;
                let rho = (a * a + sd * sd).sqrt();
                for (t, wt) in gh.nodes.iter().zip(&gh.weights) {
                    breaks.clear();
                    breaks.extend(kinks.offsets.iter().map(|u| (u - mean) / rho));
                    gauss_integral(gh, gl, &mut breaks, |s, ws| {
                        let g = (a * s + sd * t) / rho;
                        let w = mean + sd * (sd * s - a * t) / rho;
                        add(comp.w * wt * ws, phi(g, w));
                    });
                }
            }
        }
        (acc, abs)
    }

    fn monte_carlo_part<const N: usize, F>(
        &self,
        law: &MarginalLaw,
        growth: Growth,
        phi: &F,
    ) -> Result<([f64; N], [f64; N])>
    where
        F: Fn(f64, f64) -> [f64; N] + Sync,
    {
        let mut value = [0.0; N];
        let mut se = [0.0; N];
        for (ci, comp) in law.continuous.iter().enumerate() {
            if comp.w == 0.0 || !matches!(comp.dist, Continuous::Cauchy { .. }) {
                continue;
            }
            if growth == Growth::Unbounded {
                return Err(Error::UnboundedFunctional);
            }
            let points = self.joint_draws(ci, comp.dist);
            let n = points.len();
            let partial: Vec<([f64; N], [f64; N])> = points
                .par_chunks(BLOCK_LEN)
                .map(|chunk| {
                    let mut s = [0.0; N];
                    let mut s2 = [0.0; N];
                    for &[g, w] in chunk {
                        let v = phi(g, w);
                        for i in 0..N {
                            s[i] += v[i];
                            s2[i] += v[i] * v[i];
                        }
                    }
                    (s, s2)
                })
                .collect();
            let mut s = [0.0; N];
            let mut s2 = [0.0; N];
            for (a, b) in &partial {
                for i in 0..N {
                    s[i] += a[i];
                    s2[i] += b[i];
                }
            }
            let nf = n as f64;
            for i in 0..N {
                let mean = s[i] / nf;
                let var = ((s2[i] / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
                value[i] += comp.w * mean;
                se[i] += comp.w * (var / nf).sqrt();
            }
        }
        Ok((value, se))
    }

    fn joint_draws(&self, component: usize, dist: Continuous) -> Arc<Vec<[f64; 2]>> {
        let seed = self.settings.master_seed;
        let n = self.settings.mc_samples;
        let mut cache = self.draws.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(c) = cache
            .iter()
            .find(|c| c.seed == seed && c.component == component && c.dist == dist && c.n == n)
        {
            return c.points.clone();
        }
        let stream = streams::ENGINE + component as u64;
        let chunks: Vec<Vec<[f64; 2]>> = blocks(n)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(b, range)| {
                let mut rng = block_rng(seed, stream, b);
                range
                    .map(|_| {
                        let g: f64 = rng.sample(StandardNormal);
                        [g, dist.draw(&mut rng)]
                    })
                    .collect()
            })
            .collect();
        let points = Arc::new(chunks.concat());
        if cache.len() >= 8 {
            cache.remove(0);
        }
        cache.push(CachedDraws { seed, component, dist, n, points: points.clone() });
        points
    }

    /// Flattens `law` into weighted points for integrands of `w` alone that are
    /// smooth off `w_kinks`.
    pub fn weighted_points(&self, law: &MarginalLaw, w_kinks: &[f64]) -> WeightedPoints {
        let mut out = WeightedPoints::default();
        for atom in &law.atoms {
            if atom.w > 0.0 {
                out.nodes.push((atom.at, atom.w));
            }
        }
        let mut breaks = Vec::new();
        for (ci, comp) in law.continuous.iter().enumerate() {
            if comp.w == 0.0 {
                continue;
            }
            match comp.dist {
                Continuous::Gaussian { mean, sd } => {
                    breaks.clear();
                    breaks.extend(w_kinks.iter().map(|k| (k - mean) / sd));
                    gauss_integral(&self.gh, &self.gl, &mut breaks, |y, wy| {
                        out.nodes.push((mean + sd * y, comp.w * wy));
                    });
                }
                Continuous::Cauchy { .. } => {
                    let n = self.settings.mc_samples;
                    let stream = streams::ENGINE + ci as u64;
                    let seed = self.settings.master_seed;
                    let dist = comp.dist;
                    let chunks: Vec<Vec<f64>> = blocks(n)
                        .collect::<Vec<_>>()
                        .into_par_iter()
                        .map(|(b, range)| {
                            let mut rng = block_rng(seed, stream, b);
                            range.map(|_| dist.draw(&mut rng)).collect()
                        })
                        .collect();
                    out.samples.push((comp.w, chunks.concat()));
                }
            }
        }
        out
    }
}

/// Visits the nodes of a rule for `E[f(G)]`. Without breakpoints inside the
/// truncation range this is Gauss–Hermite; otherwise Gauss–Legendre panels
/// split at the breakpoints, weighted by the normal density.
fn gauss_integral(gh: &Rule, gl: &Rule, breaks: &mut Vec<f64>, mut visit: impl FnMut(f64, f64)) {
    breaks.retain(|b| b.abs() < CUTOFF);
    if breaks.is_empty() {
        for (x, w) in gh.nodes.iter().zip(&gh.weights) {
            visit(*x, *w);
        }
        return;
    }
    breaks.sort_by(|a, b| a.total_cmp(b));
    breaks.dedup();
    let mut left = -CUTOFF;
    let n_breaks = breaks.len();
    for i in 0..=n_breaks {
        let right = if i < n_breaks { breaks[i] } else { CUTOFF };
        let len = right - left;
        if len > 0.0 {
            let panels = (len / PANEL).ceil().max(1.0) as usize;
            let h = len / panels as f64;
            for p in 0..panels {
                let a = left + p as f64 * h;
                let mid = a + 0.5 * h;
                for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                    let g = mid + 0.5 * h * x;
                    visit(g, 0.5 * h * w * norm_pdf(g));
                }
            }
        }
        left = right;
    }
}
