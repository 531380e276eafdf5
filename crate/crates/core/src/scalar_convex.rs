//! Scalar convex functions with closed-form proximal maps.
//!
//! Every builtin is normalized so that `f(0) = 0` is the unique minimum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]` holding the subdifferential of a scalar convex function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubdiffInterval {
    pub lo: f64,
    pub hi: f64,
}

impl SubdiffInterval {
    pub fn point(x: f64) -> Self {
        SubdiffInterval { lo: x, hi: x }
    }

    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi);
        SubdiffInterval { lo, hi }
    }

    pub fn is_singleton(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lo - tol && x <= self.hi + tol
    }

    /// `t * [lo, hi]` for `t >= 0`.
    pub fn scaled(&self, t: f64) -> Self {
        SubdiffInterval { lo: t * self.lo, hi: t * self.hi }
    }

    /// Squared distance from `g` to the interval.
    pub fn dist_sq(&self, g: f64) -> f64 {
        let above = (g - self.hi).max(0.0);
        let below = (self.lo - g).max(0.0);
        above * above + below * below
    }

    pub fn project(&self, g: f64) -> f64 {
        g.clamp(self.lo, self.hi)
    }
}

/// The builtin families. `Scaled` is represented by the `scale` field of
/// [`ScalarConvexFunction`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexKind {
    /// `|x|`
    Abs,
    /// `x^2/2` for `|x| <= bend`, `bend*|x| - bend^2/2` beyond.
    Huber { bend: f64 },
    /// `sqrt(1 + x^2) - 1`
    PseudoHuber,
    /// `q*max(x,0) + (1-q)*max(-x,0)`
    Quantile { q: f64 },
    /// `x^2/2`
    Square,
}

/// Which side of the estimator a function is used on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Loss,
    Reg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    #[serde(with = "crate::extended")]
    pub lipschitz: f64,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty()
    }
}

fn default_scale() -> f64 {
    1.0
}

/// A convex scalar function `scale * base(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarConvexFunction {
    #[serde(flatten)]
    kind: ConvexKind,
    #[serde(default = "default_scale")]
    scale: f64,
}

impl ScalarConvexFunction {
    pub fn new(kind: ConvexKind) -> Self {
        ScalarConvexFunction { kind, scale: 1.0 }
    }

    pub fn abs() -> Self {
        Self::new(ConvexKind::Abs)
    }

    pub fn huber(bend: f64) -> Self {
        Self::new(ConvexKind::Huber { bend })
    }

    pub fn pseudo_huber() -> Self {
        Self::new(ConvexKind::PseudoHuber)
    }

    pub fn quantile(q: f64) -> Self {
        Self::new(ConvexKind::Quantile { q })
    }

    pub fn square() -> Self {
        Self::new(ConvexKind::Square)
    }

    /// `lambda * f`. Scaling an already scaled function multiplies the factors.
    pub fn scaled(self, lambda: f64) -> Self {
        ScalarConvexFunction { kind: self.kind, scale: self.scale * lambda }
    }

    pub fn kind(&self) -> ConvexKind {
        self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.scale * self.base_eval(x)
    }

    fn base_eval(&self, x: f64) -> f64 {
        match self.kind {
            ConvexKind::Abs => x.abs(),
            ConvexKind::Huber { bend } => {
                if x.abs() <= bend {
                    0.5 * x * x
                } else {
                    bend * x.abs() - 0.5 * bend * bend
                }
            }
            ConvexKind::PseudoHuber => x * x / ((1.0 + x * x).sqrt() + 1.0),
            ConvexKind::Quantile { q } => {
                if x >= 0.0 {
                    q * x
                } else {
                    -(1.0 - q) * x
                }
            }
            ConvexKind::Square => 0.5 * x * x,
        }
    }

    /// `argmin_v tau*f(v) + (x - v)^2 / 2`.
    pub fn prox(&self, x: f64, tau: f64) -> f64 {
        let t = self.scale * tau;
        match self.kind {
            ConvexKind::Abs => soft_threshold(x, t, t),
            ConvexKind::Huber { bend } => {
                if x.abs() <= bend * (1.0 + t) {
                    x / (1.0 + t)
                } else {
                    x - t * bend * x.signum()
                }
            }
            ConvexKind::PseudoHuber => pseudo_huber_prox(x, t),
            ConvexKind::Quantile { q } => soft_threshold(x, t * (1.0 - q), t * q),
            ConvexKind::Square => x / (1.0 + t),
        }
    }

    /// `x - prox(x, tau)`, computed without cancellation where a closed form exists.
    pub fn prox_residual(&self, x: f64, tau: f64) -> f64 {
        let t = self.scale * tau;
        match self.kind {
            ConvexKind::Abs => x.clamp(-t, t),
            ConvexKind::Quantile { q } => x.clamp(-t * (1.0 - q), t * q),
            ConvexKind::Square => x * t / (1.0 + t),
            ConvexKind::Huber { bend } => {
                if x.abs() <= bend * (1.0 + t) {
                    x * t / (1.0 + t)
                } else {
                    t * bend * x.signum()
                }
            }
            ConvexKind::PseudoHuber => {
                let v = pseudo_huber_prox(x, t);
                t * v / (1.0 + v * v).sqrt()
            }
        }
    }

    pub fn moreau_env(&self, x: f64, tau: f64) -> f64 {
        let p = self.prox(x, tau);
        let r = self.prox_residual(x, tau);
        r * r / (2.0 * tau) + self.eval(p)
    }

    pub fn env_deriv(&self, x: f64, tau: f64) -> f64 {
        self.prox_residual(x, tau) / tau
    }

    pub fn subdiff(&self, x: f64) -> SubdiffInterval {
        let s = self.scale;
        let base = match self.kind {
            ConvexKind::Abs => {
                if x > 0.0 {
                    SubdiffInterval::point(1.0)
                } else if x < 0.0 {
                    SubdiffInterval::point(-1.0)
                } else {
                    SubdiffInterval::new(-1.0, 1.0)
                }
            }
            ConvexKind::Huber { bend } => SubdiffInterval::point(x.clamp(-bend, bend)),
            ConvexKind::PseudoHuber => SubdiffInterval::point(x / (1.0 + x * x).sqrt()),
            ConvexKind::Quantile { q } => {
                if x > 0.0 {
                    SubdiffInterval::point(q)
                } else if x < 0.0 {
                    SubdiffInterval::point(-(1.0 - q))
                } else {
                    SubdiffInterval::new(-(1.0 - q), q)
                }
            }
            ConvexKind::Square => SubdiffInterval::point(x),
        };
        base.scaled(s)
    }

    pub fn lipschitz(&self) -> f64 {
        let base = match self.kind {
            ConvexKind::Abs | ConvexKind::PseudoHuber => 1.0,
            ConvexKind::Huber { bend } => bend,
            ConvexKind::Quantile { q } => q.max(1.0 - q),
            ConvexKind::Square => f64::INFINITY,
        };
        self.scale * base
    }

    /// `(a, b)` with `f(x) - f(0) >= a|x| - b`, from supporting lines at `x = 1` and `x = -1`.
    pub fn coercivity(&self) -> (f64, f64) {
        let f0 = self.eval(0.0);
        let d_plus = self.subdiff(1.0).lo;
        let d_minus = self.subdiff(-1.0).hi;
        let a = d_plus.min(-d_minus);
        let b = (d_plus - (self.eval(1.0) - f0))
            .max(-d_minus - (self.eval(-1.0) - f0))
            .max(0.0);
        (a, b)
    }

    /// Points where `f` is not differentiable.
    pub fn nondifferentiable_points(&self) -> Vec<f64> {
        match self.kind {
            ConvexKind::Abs | ConvexKind::Quantile { .. } => vec![0.0],
            _ => Vec::new(),
        }
    }

    pub fn is_differentiable(&self) -> bool {
        self.nondifferentiable_points().is_empty()
    }

    /// Points where `x -> subdiff(x)` fails to be smooth: the nondifferentiable
    /// points plus the breaks of the second derivative.
    pub fn kinks(&self) -> Vec<f64> {
        match self.kind {
            ConvexKind::Abs | ConvexKind::Quantile { .. } => vec![0.0],
            ConvexKind::Huber { bend } => vec![-bend, bend],
            ConvexKind::PseudoHuber | ConvexKind::Square => Vec::new(),
        }
    }

    /// Points where `u -> prox(u, tau)` is not smooth, in increasing order.
    pub fn prox_kinks(&self, tau: f64) -> Vec<f64> {
        let t = self.scale * tau;
        match self.kind {
            ConvexKind::Abs => vec![-t, t],
            ConvexKind::Quantile { q } => vec![-t * (1.0 - q), t * q],
            ConvexKind::Huber { bend } => vec![-bend * (1.0 + t), bend * (1.0 + t)],
            ConvexKind::PseudoHuber | ConvexKind::Square => Vec::new(),
        }
    }

    fn check_parameters(&self) -> Result<()> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{what} must be finite, got {v}")))
            }
        };
        finite(self.scale, "scale")?;
        if self.scale <= 0.0 {
            return Err(Error::NotMinimizedAtZero(format!(
                "scale {} makes the function constant or concave",
                self.scale
            )));
        }
        match self.kind {
            ConvexKind::Huber { bend } => {
                finite(bend, "huber bend")?;
                if bend <= 0.0 {
                    return Err(Error::NotMinimizedAtZero(format!(
                        "huber bend {bend} must be positive"
                    )));
                }
            }
            ConvexKind::Quantile { q } => {
                finite(q, "quantile level")?;
                if q <= 0.0 || q >= 1.0 {
                    return Err(Error::NotMinimizedAtZero(format!(
                        "quantile level {q} must lie in (0, 1)"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Checks that `f` is minimized only at 0 and warns when it is not Lipschitz.
    pub fn validate_assumptions(&self, role: Role) -> Result<ValidationReport> {
        self.check_parameters()?;
        let mut warnings = Vec::new();
        let lipschitz = self.lipschitz();
        if !lipschitz.is_finite() {
            let what = match role {
                Role::Loss => "loss",
                Role::Reg => "regularizer",
            };
            warnings.push(format!(
                "{what} is not Lipschitz; for a non-Lipschitz loss some noise laws give an infinite limiting risk"
            ));
        }
        Ok(ValidationReport { lipschitz, warnings })
    }

    /// Short human-readable description, e.g. `huber(1)*2.5`.
    pub fn describe(&self) -> String {
        let base = match self.kind {
            ConvexKind::Abs => "abs".to_string(),
            ConvexKind::Huber { bend } => format!("huber({bend})"),
            ConvexKind::PseudoHuber => "pseudo_huber".to_string(),
            ConvexKind::Quantile { q } => format!("quantile({q})"),
            ConvexKind::Square => "square".to_string(),
        };
        if self.scale == 1.0 {
            base
        } else {
            format!("{base}*{}", self.scale)
        }
    }
}

/// Asymmetric soft threshold: zero on `[-left, right]`, shifted linear outside.
fn soft_threshold(x: f64, left: f64, right: f64) -> f64 {
    if x > right {
        x - right
    } else if x < -left {
        x + left
    } else {
        0.0
    }
}

/// Solves `v + t*v/sqrt(1+v^2) = x` by Newton's method kept inside a bracket.
fn pseudo_huber_prox(x: f64, t: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let sign = x.signum();
    let ax = x.abs();
    let mut lo = (ax - t).max(0.0);
    let mut hi = ax;
    let mut v = (ax / (1.0 + t)).clamp(lo, hi);
    for _ in 0..200 {
        let s = (1.0 + v * v).sqrt();
        let h = v + t * v / s - ax;
        if h > 0.0 {
            hi = v;
        } else {
            lo = v;
        }
        let dh = 1.0 + t / (s * s * s);
        let mut next = v - h / dh;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - v).abs();
        v = next;
        if step <= 1e-12 * v.max(1.0) || hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    sign * v
}
