//! Text descriptors for functions and laws, the inverse of `describe()`.
//!
//! ```text
//! function := name [ "(" number ")" ] [ "*" number ]
//! name     := abs | huber | pseudo_huber | quantile | square
//! law      := term ( "+" term )*
//! term     := [ number "*" ] ( delta(a) | normal(mean,sd) | cauchy(location,scale) )
//! ```
//!
//! ```
//! use mrisk::{MarginalLaw, ScalarConvexFunction};
//!
//! let f: ScalarConvexFunction = "huber(1.5)*2".parse().unwrap();
//! assert_eq!(f, ScalarConvexFunction::huber(1.5).scaled(2.0));
//! let law: MarginalLaw = "0.9*delta(0) + 0.1*normal(0,1)".parse().unwrap();
//! assert_eq!(law, MarginalLaw::sparse_gaussian(0.1));
//! ```

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::marginals::{Atom, Component, Continuous, MarginalLaw};
use crate::scalar_convex::ScalarConvexFunction;

fn bad(what: &str, s: &str) -> Error {
    Error::InvalidInput(format!("cannot parse {what} descriptor {s:?}"))
}

fn number(s: &str, what: &str, whole: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| bad(what, whole))
}

/// Splits `name(args)` into the name and the argument list.
fn call(s: &str) -> Option<(&str, Vec<&str>)> {
    let s = s.trim();
    match s.find('(') {
        None => Some((s, vec![])),
        Some(open) => {
            let inner = s[open + 1..].strip_suffix(')')?;
            let args = if inner.trim().is_empty() { vec![] } else { inner.split(',').collect() };
            Some((s[..open].trim(), args))
        }
    }
}

pub fn parse_function(s: &str) -> Result<ScalarConvexFunction> {
    let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let (head, scale) = match compact.rfind('*') {
        Some(i) if compact[..i].ends_with(')') || !compact[..i].contains('(') => {
            (&compact[..i], number(&compact[i + 1..], "function", s)?)
        }
        _ => (compact.as_str(), 1.0),
    };
    let (name, args) = call(head).ok_or_else(|| bad("function", s))?;
    let arg = |i: usize| -> Result<f64> { number(args.get(i).ok_or_else(|| bad("function", s))?, "function", s) };
    let f = match (name.to_ascii_lowercase().as_str(), args.len()) {
        ("abs" | "l1", 0) => ScalarConvexFunction::abs(),
        ("huber", 0) => ScalarConvexFunction::huber(1.0),
        ("huber", 1) => ScalarConvexFunction::huber(arg(0)?),
        ("pseudo_huber", 0) => ScalarConvexFunction::pseudo_huber(),
        ("quantile", 1) => ScalarConvexFunction::quantile(arg(0)?),
        ("square" | "l2", 0) => ScalarConvexFunction::square(),
        _ => return Err(bad("function", s)),
    };
    Ok(f.scaled(scale))
}

pub fn parse_law(s: &str) -> Result<MarginalLaw> {
    let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.is_empty() {
        return Err(bad("law", s));
    }
    let mut law = MarginalLaw { atoms: vec![], continuous: vec![] };
    for term in split_terms(&compact) {
        let (w, body) = match term.find('*') {
            Some(i) if !term[..i].contains('(') => (number(&term[..i], "law", s)?, &term[i + 1..]),
            _ => (1.0, term),
        };
        let (name, args) = call(body).ok_or_else(|| bad("law", s))?;
        let nums: Vec<f64> = args.iter().map(|a| number(a, "law", s)).collect::<Result<_>>()?;
        match (name.to_ascii_lowercase().as_str(), nums.as_slice()) {
            ("delta" | "point", [a]) => law.atoms.push(Atom { at: *a, w }),
            ("normal" | "gaussian", [mean, sd]) => {
                law.continuous.push(Component { dist: Continuous::Gaussian { mean: *mean, sd: *sd }, w })
            }
            ("cauchy", [location, scale]) => {
                law.continuous.push(Component { dist: Continuous::Cauchy { location: *location, scale: *scale }, w })
            }
            _ => return Err(bad("law", s)),
        }
    }
    Ok(law)
}

/// Splits on `+` outside parentheses, keeping signs inside numbers such as `1e+3`.
fn split_terms(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0;
    let mut start = 0;
    let bytes = s.as_bytes();
    for (i, &c) in bytes.iter().enumerate() {
        match c {
            b'(' => depth += 1,
            b')' => depth -= 1,
            b'+' if depth == 0 && i > 0 && !matches!(bytes[i - 1], b'e' | b'E' | b'*') => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

impl FromStr for ScalarConvexFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_function(s)
    }
}

impl FromStr for MarginalLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_law(s)
    }
}

impl fmt::Display for ScalarConvexFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

impl fmt::Display for MarginalLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn functions() {
        assert_eq!(parse_function("abs").unwrap(), ScalarConvexFunction::abs());
        assert_eq!(parse_function(" quantile(0.3) ").unwrap(), ScalarConvexFunction::quantile(0.3));
        assert_eq!(parse_function("abs*2.5").unwrap(), ScalarConvexFunction::abs().scaled(2.5));
        assert_eq!(parse_function("huber").unwrap(), ScalarConvexFunction::huber(1.0));
        assert!(parse_function("cosh").is_err());
        assert!(parse_function("quantile").is_err());
        assert!(parse_function("abs*x").is_err());
    }

    #[test]
    fn laws() {
        assert_eq!(parse_law("normal(0,1)").unwrap(), MarginalLaw::gaussian(0.0, 1.0));
        assert_eq!(parse_law("0.7*delta(0)+0.3*cauchy(0,1)").unwrap(), MarginalLaw::sparse_cauchy(0.3));
        assert_eq!(parse_law("1e+0*delta(1e-1)").unwrap().atoms[0].at, 0.1);
        assert!(parse_law("").is_err());
        assert!(parse_law("0.5*uniform(0,1)").is_err());
        assert!(parse_law("normal(0)").is_err());
    }

    #[test]
    fn describe_round_trips() {
        for f in [
            ScalarConvexFunction::huber(0.75).scaled(3.0),
            ScalarConvexFunction::quantile(0.3),
            ScalarConvexFunction::pseudo_huber(),
        ] {
            assert_eq!(f.describe().parse::<ScalarConvexFunction>().unwrap(), f);
        }
        for law in [MarginalLaw::sparse_gaussian(0.1), MarginalLaw::sparse_cauchy(0.2), MarginalLaw::gaussian(1.5, 0.25)] {
            assert_eq!(law.describe().parse::<MarginalLaw>().unwrap(), law);
        }
    }
}
