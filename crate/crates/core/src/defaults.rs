//! Every numerical default in one place.
//!
//! | name | value |
//! |---|---|
//! | Gauss–Hermite nodes per Gaussian coordinate | 61 |
//! | Monte Carlo samples per Cauchy component | 2·10⁶ |
//! | master seed | 0 |
//! | solver tolerance (relative residual) | 1e-6 |
//! | finite-sample estimator tolerance (ADMM residuals) | 1e-4 |
//! | λ-grid | 60 log-spaced points on [1e-3, 1e3] |
//! | threshold probe range for t | [1e-8, 1e8] |
//! | direct perfect-recovery tolerance | 1e-6·(1+‖x₀‖∞) |
//! | KKT certification tolerance | 1e-8·‖A‖_F |
//! | Cauchy noise cap in finite samples | 1e12 |

pub const GH_NODES: usize = 61;
pub const MC_SAMPLES: usize = 2_000_000;
pub const MASTER_SEED: u64 = 0;
pub const TOL: f64 = 1e-6;
pub const ADMM_TOL: f64 = 1e-4;
pub const LAMBDA_MIN: f64 = 1e-3;
pub const LAMBDA_MAX: f64 = 1e3;
pub const LAMBDA_POINTS: usize = 60;
pub const T_PROBE_MIN: f64 = 1e-8;
pub const T_PROBE_MAX: f64 = 1e8;
pub const RECOVERY_TOL: f64 = 1e-6;
pub const KKT_TOL: f64 = 1e-8;
pub const NOISE_CAP: f64 = 1e12;

/// `points` log-spaced values on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && points >= 1);
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

pub fn lambda_grid() -> Vec<f64> {
    log_grid(LAMBDA_MIN, LAMBDA_MAX, LAMBDA_POINTS)
}
