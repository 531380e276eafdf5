//! Finite-sample experiments: random instances `y = A x0 + z`, the convex
//! M-estimator, empirical risk and certificates of perfect recovery.

mod admm;
mod kkt;

pub use admm::{power_norm, Admm, AdmmOptions, AdmmSolution, AdmmState};
pub use kkt::{box_qp_decide, box_qp_min_norm, BoxQpResult};

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::defaults;
use crate::error::{Error, Result};
use crate::marginals::rng::{block_rng, blocks, derive_seed, streams};
use crate::marginals::MarginalLaw;
use crate::scalar_convex::{ConvexKind, ScalarConvexFunction, SubdiffInterval};

/// One draw of the linear model.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub n: usize,
    pub p: usize,
    /// `n x p`, iid `N(0, 1/p)` entries.
    pub a: DMatrix<f64>,
    pub x0: DVector<f64>,
    pub z: DVector<f64>,
    pub y: DVector<f64>,
    pub seed: u64,
    /// Some noise entry hit the cap `|z| <= 1e12`.
    pub capped: bool,
}

impl ProblemInstance {
    pub fn delta(&self) -> f64 {
        self.n as f64 / self.p as f64
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.a.norm()
    }
}

/// Draws `A`, `x0 ~ signal`, `z ~ noise` from independent streams of `seed`.
pub fn generate(n: usize, p: usize, noise: &MarginalLaw, signal: &MarginalLaw, seed: u64) -> Result<ProblemInstance> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidInput(format!("n and p must be positive, got n={n}, p={p}")));
    }
    noise.validate()?;
    signal.validate()?;
    let sd = 1.0 / (p as f64).sqrt();
    let chunks: Vec<Vec<f64>> = blocks(n * p)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(b, range)| {
            let mut rng = block_rng(seed, streams::DESIGN, b);
            range.map(|_| sd * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect::<Vec<f64>>()
        })
        .collect();
    // entries are drawn in row-major order
    let a = DMatrix::from_row_iterator(n, p, chunks.into_iter().flatten());
    let x0 = DVector::from_vec(signal.sample_stream(p, seed, streams::SIGNAL));
    let mut capped = false;
    let z = DVector::from_iterator(
        n,
        noise.sample_stream(n, seed, streams::NOISE).into_iter().map(|v| {
            if v.abs() > defaults::NOISE_CAP {
                capped = true;
                v.signum() * defaults::NOISE_CAP
            } else {
                v
            }
        }),
    );
    let y = &a * &x0 + &z;
    Ok(ProblemInstance { n, p, a, x0, z, y, seed, capped })
}

/// `||x_hat - x0||^2 / p`.
pub fn empirical_risk(inst: &ProblemInstance, x_hat: &DVector<f64>) -> f64 {
    (x_hat - &inst.x0).norm_squared() / inst.p as f64
}

/// Solves `min_x sum loss(y_i - a_i x) + sum reg(x_j)` to tolerance `tol`.
pub fn solve_mestimator(
    inst: &ProblemInstance,
    loss: &ScalarConvexFunction,
    reg: Option<&ScalarConvexFunction>,
    tol: f64,
) -> Result<AdmmSolution> {
    let mut sol = Admm::new(inst, loss, reg)?.solve(&AdmmOptions { tol, ..AdmmOptions::default() }, None)?;
    if reg.is_none() {
        if let Some(x) = snap_to_vertex(inst, loss, &sol.x) {
            sol.x = x;
        }
    }
    Ok(sol)
}

fn objective(inst: &ProblemInstance, loss: &ScalarConvexFunction, x: &DVector<f64>) -> f64 {
    (&inst.y - &inst.a * x).iter().map(|&r| loss.eval(r)).sum()
}

/// For piecewise-linear losses some minimizer interpolates `p` observations.
/// Solves for the point interpolating the `p` smallest residuals of `x` and
/// returns it when its objective is no larger.
fn snap_to_vertex(inst: &ProblemInstance, loss: &ScalarConvexFunction, x: &DVector<f64>) -> Option<DVector<f64>> {
    if !matches!(loss.kind(), ConvexKind::Abs | ConvexKind::Quantile { .. }) || inst.n < inst.p {
        return None;
    }
    let res = &inst.y - &inst.a * x;
    let mut idx: Vec<usize> = (0..inst.n).collect();
    idx.sort_by(|&i, &j| res[i].abs().total_cmp(&res[j].abs()));
    idx.truncate(inst.p);
    let sub = inst.a.select_rows(&idx);
    let rhs = DVector::from_iterator(inst.p, idx.iter().map(|&i| inst.y[i]));
    let cand = sub.lu().solve(&rhs)?;
    let (f_old, f_new) = (objective(inst, loss, x), objective(inst, loss, &cand));
    (f_new.is_finite() && f_new <= f_old).then_some(cand)
}

/// Perfect recovery of the unregularized estimator holds iff
/// `0 in A^T d loss(z)`. Returns the decision and `min ||A^T s||` over
/// `s_i in d loss(z_i)`.
pub fn certify_perfect_recovery_unreg(inst: &ProblemInstance, loss: &ScalarConvexFunction, tol: f64) -> (bool, f64) {
    let boxes: Vec<SubdiffInterval> = inst.z.iter().map(|&z| loss.subdiff(z)).collect();
    let cut = tol * inst.frobenius_norm();
    let res = box_qp_decide(&inst.a, &boxes, None, cut);
    (res.norm <= cut, res.norm)
}

/// Outcome of the regularized recovery test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegRecovery {
    pub recovered: bool,
    /// Smallest grid value with `||x_hat - x0||_inf <= tol`.
    pub lambda_witness: Option<f64>,
    /// Smallest grid value passing the conic KKT test, when requested.
    pub kkt_witness: Option<f64>,
    /// Smallest `min ||A^T s - lambda q||` over the grid, when requested.
    pub kkt_norm: Option<f64>,
    pub solver_iters: usize,
}

/// Searches `lambdas` for some `lambda` with `x_hat_lambda = x0`, solving the
/// estimator with warm starts and stopping at the first witness. With
/// `conic_check` it also tests `A^T d loss(z) ∩ lambda d reg(x0) != {}` on the
/// whole grid.
pub fn certify_perfect_recovery_reg(
    inst: &ProblemInstance,
    loss: &ScalarConvexFunction,
    reg: &ScalarConvexFunction,
    lambdas: &[f64],
    tol: f64,
    conic_check: bool,
) -> Result<RegRecovery> {
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::InvalidInput("lambda grid must be nonempty and positive".into()));
    }
    let threshold = tol * (1.0 + inst.x0.amax());
    let mut admm = Admm::new(inst, loss, Some(reg))?;
    let opts = AdmmOptions { tol: 1e-10, ..AdmmOptions::default() };
    let mut warm: Option<AdmmState> = None;
    let mut out = RegRecovery { recovered: false, lambda_witness: None, kkt_witness: None, kkt_norm: None, solver_iters: 0 };
    for &lambda in lambdas {
        admm.set_reg(Some(&reg.scaled(lambda)));
        let sol = match admm.solve(&opts, warm.as_ref()) {
            Ok(s) => s,
            Err(Error::NoConvergence { .. }) => {
                warm = None;
                continue;
            }
            Err(e) => return Err(e),
        };
        out.solver_iters += sol.iterations;
        if (&sol.x - &inst.x0).amax() <= threshold {
            out.recovered = true;
            out.lambda_witness = Some(lambda);
            break;
        }
        warm = Some(sol.state);
    }
    if conic_check {
        let s_boxes: Vec<SubdiffInterval> = inst.z.iter().map(|&z| loss.subdiff(z)).collect();
        let q_boxes: Vec<SubdiffInterval> = inst.x0.iter().map(|&x| reg.subdiff(x)).collect();
        let cut = defaults::KKT_TOL * inst.frobenius_norm();
        let mut best = f64::INFINITY;
        for &lambda in lambdas {
            let res = box_qp_decide(&inst.a, &s_boxes, Some((lambda, &q_boxes)), cut);
            best = best.min(res.norm);
            if res.norm <= cut {
                out.kkt_witness = Some(lambda);
                break;
            }
        }
        out.kkt_norm = Some(best);
    }
    Ok(out)
}

/// One replicate of a finite-sample experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub replicate: usize,
    pub n: usize,
    pub p: usize,
    pub delta: f64,
    pub lambda: Option<f64>,
    pub seed: u64,
    pub empirical_risk: f64,
    pub recovered: bool,
    pub solver_iters: usize,
    pub kkt_certificate_norm: f64,
    pub capped: bool,
}

/// What a replicate computes.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    /// No penalty; recovery from the KKT certificate. A solve that does not
    /// converge gives a NaN risk.
    Unregularized,
    /// `lambda * reg` for each `lambda`; one record per grid value. Recovery
    /// comes from the KKT certificate at that `lambda`, or from the direct
    /// test `||x_hat - x0||_inf` small when only the estimate is computed.
    /// Rows whose solve does not converge carry a NaN risk.
    Regularized { reg: ScalarConvexFunction, lambdas: Vec<f64> },
}

/// A batch of replicates at one `(n, p)`.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub n: usize,
    pub p: usize,
    pub loss: ScalarConvexFunction,
    pub estimator: Estimator,
    pub noise: MarginalLaw,
    pub signal: MarginalLaw,
    pub replicates: usize,
    pub master_seed: u64,
    pub tol: f64,
    pub outputs: Outputs,
}

/// Which of the two recovery tests a replicate runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outputs {
    /// Estimator and KKT certificate.
    #[default]
    Both,
    /// KKT certificate only; risk is NaN.
    CertificateOnly,
    /// Estimator only; the certificate norm is NaN.
    EstimateOnly,
}

impl Experiment {
    /// Runs replicates in parallel; records come back sorted by replicate and `lambda`.
    pub fn run(&self) -> Result<Vec<ExperimentRecord>> {
        let rows: Vec<Result<Vec<ExperimentRecord>>> =
            (0..self.replicates).into_par_iter().map(|i| self.replicate(i)).collect();
        let mut out = Vec::new();
        for r in rows {
            out.extend(r?);
        }
        Ok(out)
    }

    pub fn replicate(&self, index: usize) -> Result<Vec<ExperimentRecord>> {
        let seed = derive_seed(self.master_seed, index as u64);
        let inst = generate(self.n, self.p, &self.noise, &self.signal, seed)?;
        let record = |lambda, risk, recovered, iters, cert| ExperimentRecord {
            replicate: index,
            n: self.n,
            p: self.p,
            delta: inst.delta(),
            lambda,
            seed,
            empirical_risk: risk,
            recovered,
            solver_iters: iters,
            kkt_certificate_norm: cert,
            capped: inst.capped,
        };
        match &self.estimator {
            Estimator::Unregularized => {
                let (recovered, cert) = match self.outputs {
                    Outputs::EstimateOnly => (false, f64::NAN),
                    _ => certify_perfect_recovery_unreg(&inst, &self.loss, defaults::KKT_TOL),
                };
                if self.outputs == Outputs::CertificateOnly {
                    return Ok(vec![record(None, f64::NAN, recovered, 0, cert)]);
                }
                let sol = match solve_mestimator(&inst, &self.loss, None, self.tol) {
                    Ok(sol) => sol,
                    Err(Error::NoConvergence { iterations, .. }) => {
                        let recovered = self.outputs != Outputs::EstimateOnly && recovered;
                        return Ok(vec![record(None, f64::NAN, recovered, iterations, cert)]);
                    }
                    Err(e) => return Err(e),
                };
                let risk = empirical_risk(&inst, &sol.x);
                let recovered = match self.outputs {
                    Outputs::EstimateOnly => (&sol.x - &inst.x0).amax() <= defaults::RECOVERY_TOL * (1.0 + inst.x0.amax()),
                    _ => recovered,
                };
                Ok(vec![record(None, risk, recovered, sol.iterations, cert)])
            }
            Estimator::Regularized { reg, lambdas } => {
                let mut admm = Admm::new(&inst, &self.loss, Some(reg))?;
                let opts = AdmmOptions { tol: self.tol, ..AdmmOptions::default() };
                let threshold = defaults::RECOVERY_TOL * (1.0 + inst.x0.amax());
                let kkt_cut = defaults::KKT_TOL * inst.frobenius_norm();
                let s_boxes: Vec<SubdiffInterval> = inst.z.iter().map(|&z| self.loss.subdiff(z)).collect();
                let q_boxes: Vec<SubdiffInterval> = inst.x0.iter().map(|&x| reg.subdiff(x)).collect();
                let mut warm: Option<AdmmState> = None;
                let mut rows = Vec::with_capacity(lambdas.len());
                for &lambda in lambdas {
                    let cert = match self.outputs {
                        Outputs::EstimateOnly => f64::NAN,
                        _ => box_qp_decide(&inst.a, &s_boxes, Some((lambda, &q_boxes)), kkt_cut).norm,
                    };
                    if self.outputs == Outputs::CertificateOnly {
                        let recovered = cert <= kkt_cut;
                        rows.push(record(Some(lambda), f64::NAN, recovered, 0, cert));
                        continue;
                    }
                    admm.set_reg(Some(&reg.scaled(lambda)));
                    let sol = match admm.solve(&opts, warm.as_ref()) {
                        Ok(sol) => sol,
                        Err(Error::NoConvergence { iterations, .. }) => {
                            rows.push(record(Some(lambda), f64::NAN, cert <= kkt_cut, iterations, cert));
                            warm = None;
                            continue;
                        }
                        Err(e) => return Err(e),
                    };
                    let recovered = match self.outputs {
                        Outputs::EstimateOnly => (&sol.x - &inst.x0).amax() <= threshold,
                        _ => cert <= kkt_cut,
                    };
                    rows.push(record(Some(lambda), empirical_risk(&inst, &sol.x), recovered, sol.iterations, cert));
                    warm = Some(sol.state);
                }
                Ok(rows)
            }
        }
    }
}

/// `p = round(n / delta)`, at least 1.
pub fn p_for(n: usize, delta: f64) -> usize {
    ((n as f64 / delta).round() as usize).max(1)
}

/// `n = round(delta p)`, at least 1.
pub fn n_for(p: usize, delta: f64) -> usize {
    ((delta * p as f64).round() as usize).max(1)
}
