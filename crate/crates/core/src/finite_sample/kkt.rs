//! `min ||A^T s - lambda q||` over boxes `s in S`, `q in Q`, the certificate of
//! perfect recovery. Accelerated projected gradient with restarts, then an
//! active-set polish that solves the free coordinates exactly.

use nalgebra::{DMatrix, DVector};

use super::admm::power_norm;
use crate::scalar_convex::SubdiffInterval;

#[derive(Debug, Clone, PartialEq)]
pub struct BoxQpResult {
    /// Minimizing `s`.
    pub s: DVector<f64>,
    /// Minimizing `q`; empty without a second block.
    pub q: DVector<f64>,
    /// `||A^T s - lambda q||` at the minimizer.
    pub norm: f64,
    /// Certified lower bound on the minimum norm, from the Frank-Wolfe gap.
    pub lower_bound: f64,
    pub iterations: usize,
}

const MAX_ITER: usize = 20_000;
const POLISH_ROUNDS: usize = 30;

struct Problem<'a> {
    a: &'a DMatrix<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    lambda: f64,
    n: usize,
}

impl Problem<'_> {
    /// `A^T s - lambda q` for `u = (s, q)`.
    fn forward(&self, u: &DVector<f64>) -> DVector<f64> {
        let s = u.rows(0, self.n);
        let mut e = self.a.tr_mul(&s);
        if u.len() > self.n {
            e.axpy(-self.lambda, &u.rows(self.n, u.len() - self.n).into_owned(), 1.0);
        }
        e
    }

    /// Gradient `(A e, -lambda e)`.
    fn backward(&self, e: &DVector<f64>, len: usize) -> DVector<f64> {
        let mut g = DVector::zeros(len);
        g.rows_mut(0, self.n).copy_from(&(self.a * e));
        if len > self.n {
            g.rows_mut(self.n, len - self.n).copy_from(&(-self.lambda * e));
        }
        g
    }

    fn project(&self, u: &mut DVector<f64>) {
        for i in 0..u.len() {
            u[i] = u[i].clamp(self.lo[i], self.hi[i]);
        }
    }
}

/// Minimizes `||A^T s - lambda q||` over `s_i in s_boxes[i]` and, when `q`
/// is given as `(lambda, q_boxes)`, `q_j in q_boxes[j]`.
pub fn box_qp_min_norm(
    a: &DMatrix<f64>,
    s_boxes: &[SubdiffInterval],
    q: Option<(f64, &[SubdiffInterval])>,
) -> BoxQpResult {
    solve(a, s_boxes, q, None)
}

/// [`box_qp_min_norm`] that stops once it is settled whether the minimum
/// norm is at most `cut`: either the iterate gets there, or the lower bound
/// rises above it.
pub fn box_qp_decide(
    a: &DMatrix<f64>,
    s_boxes: &[SubdiffInterval],
    q: Option<(f64, &[SubdiffInterval])>,
    cut: f64,
) -> BoxQpResult {
    solve(a, s_boxes, q, Some(cut))
}

const GAP_EVERY: usize = 10;

/// `f(u) - max_{u' in box} grad f(u)^T (u - u')`, a lower bound on `min f` by convexity.
fn frank_wolfe_bound(pb: &Problem, u: &DVector<f64>, e: &DVector<f64>, f: f64) -> f64 {
    let g = pb.backward(e, u.len());
    let mut gap = 0.0;
    for i in 0..u.len() {
        let best = (g[i] * pb.lo[i]).min(g[i] * pb.hi[i]);
        gap += g[i] * u[i] - if best.is_nan() { 0.0 } else { best };
    }
    f - gap
}

fn solve(
    a: &DMatrix<f64>,
    s_boxes: &[SubdiffInterval],
    q: Option<(f64, &[SubdiffInterval])>,
    cut: Option<f64>,
) -> BoxQpResult {
    let n = a.nrows();
    assert_eq!(s_boxes.len(), n, "one interval per row");
    let (lambda, q_boxes) = q.unwrap_or((0.0, &[]));
    let mut lo: Vec<f64> = s_boxes.iter().map(|b| b.lo).collect();
    let mut hi: Vec<f64> = s_boxes.iter().map(|b| b.hi).collect();
    lo.extend(q_boxes.iter().map(|b| b.lo));
    hi.extend(q_boxes.iter().map(|b| b.hi));
    let len = lo.len();
    let pb = Problem { a, lo, hi, lambda, n };
    let norm_a = power_norm(a);
    let lip = norm_a * norm_a + lambda * lambda;

    // start at the box point closest to 0
    let mut u = DVector::from_iterator(len, (0..len).map(|i| 0.0f64.clamp(pb.lo[i], pb.hi[i])));
    let mut e = pb.forward(&u);
    let mut f = 0.5 * e.norm_squared();
    let mut iterations = 0;
    let mut lower = 0.0f64;
    let half_cut = cut.map(|c| 0.5 * c * c);
    if lip > 0.0 && (0..len).any(|i| pb.lo[i] < pb.hi[i]) {
        let mut yv = u.clone();
        let mut t = 1.0f64;
        let stop = 1e-30 * (1.0 + norm_a).powi(2);
        for _ in 0..MAX_ITER {
            iterations += 1;
            let ey = pb.forward(&yv);
            let g = pb.backward(&ey, len);
            let mut next = &yv - g / lip;
            pb.project(&mut next);
            let en = pb.forward(&next);
            let fn_ = 0.5 * en.norm_squared();
            let step = &next - &u;
            if fn_ > f {
                // restart
                yv = u.clone();
                t = 1.0;
                continue;
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            yv = &next + step.clone() * ((t - 1.0) / t_next);
            t = t_next;
            let progress = f - fn_;
            u = next;
            e = en;
            f = fn_;
            if f <= stop || (progress <= 1e-15 * f && step.norm() <= 1e-14 * (1.0 + u.norm())) {
                break;
            }
            if let Some(hc) = half_cut {
                if f <= hc {
                    break;
                }
                if iterations % GAP_EVERY == 0 {
                    lower = lower.max(frank_wolfe_bound(&pb, &u, &e, f));
                    if lower > hc {
                        break;
                    }
                }
            }
            if iterations % 200 == 0 {
                polish(&pb, &mut u, &mut e, &mut f);
                yv = u.clone();
                t = 1.0;
                if f <= stop {
                    break;
                }
            }
        }
        if half_cut.map_or(true, |hc| lower <= hc) {
            polish(&pb, &mut u, &mut e, &mut f);
        }
        lower = lower.max(frank_wolfe_bound(&pb, &u, &e, f));
    } else {
        lower = f;
    }
    let q = u.rows(n, len - n).into_owned();
    let s = u.rows(0, n).into_owned();
    BoxQpResult { s, q, norm: e.norm(), lower_bound: (2.0 * lower.max(0.0)).sqrt().min(e.norm()), iterations }
}

/// Moves the free coordinates along the minimum-norm correction that zeroes
/// the residual, stopping at the box boundary and pinning what it hits.
fn polish(pb: &Problem, u: &mut DVector<f64>, e: &mut DVector<f64>, f: &mut f64) {
    let len = u.len();
    let p = pb.a.ncols();
    let width = |i: usize| pb.hi[i] - pb.lo[i];
    let mut free: Vec<usize> = (0..len)
        .filter(|&i| width(i) > 0.0 && u[i] > pb.lo[i] + 1e-12 * width(i) && u[i] < pb.hi[i] - 1e-12 * width(i))
        .collect();
    for _ in 0..POLISH_ROUNDS {
        if free.is_empty() || *f == 0.0 {
            return;
        }
        // columns of B^T for free coordinates: rows of A, or -lambda e_j
        let col = |i: usize| -> DVector<f64> {
            if i < pb.n {
                pb.a.row(i).transpose()
            } else {
                let mut c = DVector::zeros(p);
                c[i - pb.n] = -pb.lambda;
                c
            }
        };
        let cols: Vec<DVector<f64>> = free.iter().map(|&i| col(i)).collect();
        let mut m = DMatrix::<f64>::zeros(p, p);
        for c in &cols {
            m.ger(1.0, c, c, 1.0);
        }
        let ridge = 1e-13 * (m.trace() / p as f64).max(1e-300);
        for k in 0..p {
            m[(k, k)] += ridge;
        }
        let Some(chol) = m.cholesky() else { return };
        // direction d on free coordinates with B_F^T d = -e, minimum norm
        let w = chol.solve(&(-&*e));
        let d: Vec<f64> = cols.iter().map(|c| c.dot(&w)).collect();
        let mut step = 1.0f64;
        let mut blocking = None;
        for (k, &i) in free.iter().enumerate() {
            let limit = if d[k] > 0.0 {
                (pb.hi[i] - u[i]) / d[k]
            } else if d[k] < 0.0 {
                (pb.lo[i] - u[i]) / d[k]
            } else {
                f64::INFINITY
            };
            if limit < step {
                step = limit;
                blocking = Some(k);
            }
        }
        let mut cand = u.clone();
        for (k, &i) in free.iter().enumerate() {
            cand[i] += step * d[k];
        }
        pb.project(&mut cand);
        let ec = pb.forward(&cand);
        let fc = 0.5 * ec.norm_squared();
        if fc >= *f {
            return;
        }
        *u = cand;
        *e = ec;
        *f = fc;
        match blocking {
            Some(k) => {
                free.remove(k);
            }
            None => return,
        }
    }
}
