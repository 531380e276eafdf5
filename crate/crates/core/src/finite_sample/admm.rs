//! Two-block ADMM for `min f(r) + g(v)` subject to `A x + r = y`,
//! `sigma (x - v) = 0`, with `sigma = ||A||` balancing the two constraint blocks.
//! The `x`-update is a cached Cholesky solve, the `(r, v)`-update is
//! componentwise prox.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::ProblemInstance;
use crate::error::{Error, Result};
use crate::scalar_convex::ScalarConvexFunction;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmOptions {
    /// Relative and absolute tolerance on primal and dual residuals.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial penalty parameter; `None` picks `1 / ||A||`, or the penalty
    /// of the warm start.
    pub rho: Option<f64>,
    /// Rebalance the penalty when primal and dual residuals drift apart.
    pub adaptive: bool,
    /// Over-relaxation factor in `(0, 2)`; 1 is plain ADMM.
    pub relaxation: f64,
    /// Record the fixed-point residual of every iteration.
    pub trace: bool,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        AdmmOptions { tol: crate::defaults::TOL, max_iter: 50_000, rho: None, adaptive: true, relaxation: 1.0, trace: false }
    }
}

/// Iterate of the splitting, reusable as a warm start. The duals `u1`, `u2`
/// are scaled by `1 / rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub x: DVector<f64>,
    pub r: DVector<f64>,
    pub v: DVector<f64>,
    pub u1: DVector<f64>,
    pub u2: DVector<f64>,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub state: AdmmState,
    /// `rho ||r_k - r_k+1||^2 + rho sigma^2 ||v_k - v_k+1||^2 + rho ||u_k - u_k+1||^2`
    /// per iteration, which ADMM with a fixed penalty never increases. Empty
    /// unless traced.
    pub trace: Vec<f64>,
}

/// Spectral norm of `a` by 50 steps of power iteration from a fixed start.
pub fn power_norm(a: &DMatrix<f64>) -> f64 {
    let p = a.ncols();
    let mut v = DVector::from_element(p, 1.0 / (p as f64).sqrt());
    let mut est = 0.0;
    for _ in 0..50 {
        let w = a.tr_mul(&(a * &v));
        let n = w.norm();
        if n == 0.0 {
            return 0.0;
        }
        est = n;
        v = w / n;
    }
    est.sqrt()
}

const CHECK_EVERY: usize = 5;
const REBALANCE_EVERY: usize = 20;
const REBALANCE_GAP: f64 = 10.0;

pub struct Admm<'a> {
    inst: &'a ProblemInstance,
    loss: ScalarConvexFunction,
    reg: Option<ScalarConvexFunction>,
    sigma: f64,
    gram: DMatrix<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
    chol_has_reg: bool,
}

impl<'a> Admm<'a> {
    pub fn new(inst: &'a ProblemInstance, loss: &ScalarConvexFunction, reg: Option<&ScalarConvexFunction>) -> Result<Self> {
        let gram = inst.a.tr_mul(&inst.a);
        let sigma = power_norm(&inst.a);
        let mut admm = Admm { inst, loss: *loss, reg: None, sigma, gram, chol: None, chol_has_reg: false };
        admm.set_reg(reg);
        admm.factor()?;
        Ok(admm)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Replaces the penalty; the factorization is reused unless the penalty
    /// appears or disappears.
    pub fn set_reg(&mut self, reg: Option<&ScalarConvexFunction>) {
        self.reg = reg.copied();
    }

    fn factor(&mut self) -> Result<()> {
        let has_reg = self.reg.is_some();
        if self.chol.is_some() && self.chol_has_reg == has_reg {
            return Ok(());
        }
        if !has_reg && self.inst.n < self.inst.p {
            return Err(Error::Unbounded(format!(
                "unpenalized problem with n = {} < p = {} has no unique minimizer",
                self.inst.n, self.inst.p
            )));
        }
        let mut m = self.gram.clone();
        if has_reg {
            for i in 0..m.nrows() {
                m[(i, i)] += self.sigma * self.sigma;
            }
        }
        self.chol = Some(Cholesky::new(m).ok_or_else(|| Error::Unbounded("design is rank deficient".into()))?);
        self.chol_has_reg = has_reg;
        Ok(())
    }

    fn cold_state(&self, rho: f64) -> AdmmState {
        let (n, p) = (self.inst.n, self.inst.p);
        AdmmState {
            x: DVector::zeros(p),
            r: self.inst.y.clone(),
            v: DVector::zeros(p),
            u1: DVector::zeros(n),
            u2: DVector::zeros(p),
            rho,
        }
    }

    pub fn solve(&mut self, opts: &AdmmOptions, warm: Option<&AdmmState>) -> Result<AdmmSolution> {
        self.factor()?;
        let inst = self.inst;
        let (n, p) = (inst.n, inst.p);
        let a = &inst.a;
        let y = &inst.y;
        let chol = self.chol.as_ref().expect("factored above");
        let sigma = self.sigma;
        let s2 = sigma * sigma;
        let mut st = match warm {
            Some(w) => {
                let mut st = w.clone();
                if let Some(r) = opts.rho {
                    st.u1 *= st.rho / r;
                    st.u2 *= st.rho / r;
                    st.rho = r;
                }
                st
            }
            None => self.cold_state(opts.rho.unwrap_or(1.0 / sigma)),
        };
        let mut rho = st.rho;
        if st.x.len() != p || st.r.len() != n {
            return Err(Error::InvalidInput("warm start has the wrong shape".into()));
        }
        let y_norm = y.norm();
        let has_reg = self.reg.is_some();
        let relax = opts.relaxation;
        let mut trace = Vec::new();
        let mut rhs = DVector::zeros(n);
        let mut r_old = DVector::zeros(n);
        let mut v_old = DVector::zeros(p);
        let mut primal = f64::INFINITY;
        let mut dual = f64::INFINITY;
        for it in 1..=opts.max_iter {
            let check = opts.trace || it % CHECK_EVERY == 0 || it == opts.max_iter;
            // x-update
            rhs.copy_from(y);
            rhs -= &st.r;
            rhs -= &st.u1;
            let mut b = a.tr_mul(&rhs);
            if has_reg {
                b.axpy(s2, &st.v, 1.0);
                b.axpy(-sigma, &st.u2, 1.0);
            }
            chol.solve_mut(&mut b);
            st.x = b;
            let ax = a * &st.x;

            // relaxed (r, v)-update
            r_old.copy_from(&st.r);
            v_old.copy_from(&st.v);
            let mut du_sq = 0.0;
            for i in 0..n {
                let axh = relax * ax[i] + (1.0 - relax) * (y[i] - r_old[i]);
                let r = self.loss.prox(y[i] - axh - st.u1[i], 1.0 / rho);
                st.r[i] = r;
                let c = axh + r - y[i];
                du_sq += c * c;
                st.u1[i] += c;
            }
            if let Some(reg) = self.reg {
                let tau = 1.0 / (rho * s2);
                for j in 0..p {
                    let xh = relax * st.x[j] + (1.0 - relax) * v_old[j];
                    let v = reg.prox(xh + st.u2[j] / sigma, tau);
                    st.v[j] = v;
                    let c = sigma * (xh - v);
                    du_sq += c * c;
                    st.u2[j] += c;
                }
            }
            if !check {
                continue;
            }
            let dr = &st.r - &r_old;
            let dv = &st.v - &v_old;
            if opts.trace {
                trace.push(rho * (dr.norm_squared() + s2 * dv.norm_squared() + du_sq));
            }
            let mut prim_sq = (&ax + &st.r - y).norm_squared();
            if has_reg {
                prim_sq += s2 * (&st.x - &st.v).norm_squared();
            }
            primal = prim_sq.sqrt();
            let mut dual_vec = a.tr_mul(&dr);
            if has_reg {
                dual_vec.axpy(-s2, &dv, 1.0);
            }
            dual = rho * dual_vec.norm();

            let mut atu = a.tr_mul(&st.u1);
            let (x_part, z_part) = if has_reg {
                atu.axpy(sigma, &st.u2, 1.0);
                (
                    (ax.norm_squared() + s2 * st.x.norm_squared()).sqrt(),
                    (st.r.norm_squared() + s2 * st.v.norm_squared()).sqrt(),
                )
            } else {
                (ax.norm(), st.r.norm())
            };
            let u_part = rho * atu.norm();
            let m = if has_reg { n + p } else { n };
            let eps_pri = (m as f64).sqrt() * opts.tol + opts.tol * x_part.max(z_part).max(y_norm);
            let eps_dual = (p as f64).sqrt() * opts.tol + opts.tol * u_part;
            if primal <= eps_pri && dual <= eps_dual {
                st.rho = rho;
                let x = if has_reg { st.v.clone() } else { st.x.clone() };
                return Ok(AdmmSolution { x, iterations: it, primal_residual: primal, dual_residual: dual, state: st, trace });
            }
            if opts.adaptive && it % REBALANCE_EVERY == 0 {
                let ratio = (primal / eps_pri) / (dual / eps_dual);
                let factor = if ratio > REBALANCE_GAP {
                    2.0
                } else if ratio < 1.0 / REBALANCE_GAP {
                    0.5
                } else {
                    1.0
                };
                if factor != 1.0 {
                    rho *= factor;
                    st.rho = rho;
                    st.u1 /= factor;
                    st.u2 /= factor;
                }
            }
        }
        Err(Error::NoConvergence { iterations: opts.max_iter, max_residual: primal.max(dual), residuals: vec![primal, dual] })
    }
}
