use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function, accurate in both tails.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// `E[(G - c)_+^2] = (1 + c^2) Phi(-c) - c phi(c)` for `G ~ N(0,1)`.
pub fn gauss_tail_sq(c: f64) -> f64 {
    if c == f64::INFINITY {
        return 0.0;
    }
    if c == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    if c < 0.0 {
        // E[(G-c)_+^2] = 1 + c^2 - E[(c-G)_+^2]
        return 1.0 + c * c - gauss_tail_sq(-c);
    }
    if c > 3.0 {
        // Mills ratio Phi(-c)/phi(c) by backward evaluation of its continued fraction
        let mut t = c;
        for k in (1..=200).rev() {
            t = c + k as f64 / t;
        }
        let mills = 1.0 / t;
        return norm_pdf(c) * ((1.0 + c * c) * mills - c);
    }
    (1.0 + c * c) * norm_cdf(-c) - c * norm_pdf(c)
}

/// `E[G^2 1{|G| > c}] = 2 (c phi(c) + Phi(-c))` for `c >= 0`.
pub fn gauss_tail_second_moment(c: f64) -> f64 {
    let c = c.max(0.0);
    2.0 * (c * norm_pdf(c) + norm_cdf(-c))
}

/// `E[dist(G, [lo, hi])^2]`.
pub fn interval_dist_sq(lo: f64, hi: f64) -> f64 {
    gauss_tail_sq(hi) + gauss_tail_sq(-lo)
}
