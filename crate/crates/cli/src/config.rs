//! Run configuration: a TOML or JSON file, overridden by `--set key=value`.

use std::path::{Path, PathBuf};

use mrisk::defaults;
use mrisk::{EngineSettings, Error, MarginalLaw, Role, ScalarConvexFunction};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

/// A function given either as a descriptor string or as a structured table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Func(pub ScalarConvexFunction);

/// A law given either as a descriptor string or as a structured table.
#[derive(Debug, Clone, PartialEq)]
pub struct Law(pub MarginalLaw);

#[derive(Deserialize)]
#[serde(untagged)]
enum FuncRepr {
    Text(String),
    Table(ScalarConvexFunction),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LawRepr {
    Text(String),
    Table(MarginalLaw),
}

impl<'de> Deserialize<'de> for Func {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match FuncRepr::deserialize(d)? {
            FuncRepr::Text(s) => s.parse().map(Func).map_err(serde::de::Error::custom),
            FuncRepr::Table(f) => Ok(Func(f)),
        }
    }
}

impl Serialize for Func {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Law {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match LawRepr::deserialize(d)? {
            LawRepr::Text(s) => s.parse().map(Law).map_err(serde::de::Error::custom),
            LawRepr::Table(l) => Ok(Law(l)),
        }
    }
}

impl Serialize for Law {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Rows of the design. Commands that sweep `delta` keep whichever of
    /// `n`, `p` is given fixed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Tolerance of the finite-sample estimator.
    #[serde(default = "default_admm_tol")]
    pub tol: f64,
    #[serde(default)]
    pub outputs: mrisk::finite_sample::Outputs,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig { n: None, p: None, replicates: default_replicates(), tol: default_admm_tol(), outputs: Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatdimConfig {
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

impl Default for StatdimConfig {
    fn default() -> Self {
        StatdimConfig { m: default_m(), samples: default_samples() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiguresConfig {
    /// `delta` grid of the L1 versus Huber risk comparison.
    #[serde(default = "default_risk_deltas")]
    pub risk_deltas: Vec<f64>,
    /// Multiples of the threshold at which the lambda sweep is drawn.
    #[serde(default = "default_reg_ratios")]
    pub reg_ratios: Vec<f64>,
    /// Signal sparsities of the threshold curves.
    #[serde(default = "default_threshold_s")]
    pub threshold_s: Vec<f64>,
    /// Noise sparsities of the threshold curves.
    #[serde(default = "default_threshold_t")]
    pub threshold_t: Vec<f64>,
    /// Draw the finite-sample overlays.
    #[serde(default = "yes")]
    pub empirical: bool,
    #[serde(default)]
    pub svg: bool,
}

impl Default for FiguresConfig {
    fn default() -> Self {
        FiguresConfig {
            risk_deltas: default_risk_deltas(),
            reg_ratios: default_reg_ratios(),
            threshold_s: default_threshold_s(),
            threshold_t: default_threshold_t(),
            empirical: true,
            svg: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<Func>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reg: Option<Func>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<Law>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<Law>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    /// Multiplier of `reg` in `solve`.
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "defaults::lambda_grid")]
    pub lambdas: Vec<f64>,
    /// Noise sparsities of the phase diagram: `(1 - s) delta(0) + s component`.
    #[serde(default = "default_s_grid")]
    pub s_grid: Vec<f64>,
    #[serde(default = "default_component")]
    pub component: Law,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub engine: EngineSettings,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub statdim: StatdimConfig,
    #[serde(default)]
    pub figures: FiguresConfig,
    /// Output file, or directory for `figures`. Standard output when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// CSV of `J(t)` samples written by `threshold`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_samples: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_tol() -> f64 {
    defaults::TOL
}
fn default_admm_tol() -> f64 {
    defaults::ADMM_TOL
}
fn default_replicates() -> usize {
    20
}
fn default_m() -> usize {
    400
}
fn default_samples() -> usize {
    200
}
fn default_s_grid() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}
fn default_component() -> Law {
    Law(MarginalLaw::cauchy(0.0, 1.0))
}
fn default_risk_deltas() -> Vec<f64> {
    (0..16).map(|k| 1.25 + 0.25 * k as f64).collect()
}
fn default_reg_ratios() -> Vec<f64> {
    vec![0.7, 1.0, 1.3]
}
fn default_threshold_s() -> Vec<f64> {
    (1..=19).map(|k| k as f64 / 20.0).collect()
}
fn default_threshold_t() -> Vec<f64> {
    vec![0.2, 0.3, 0.5, 0.7, 1.0]
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_value(Value::Object(Default::default())).expect("every field has a default")
    }
}

/// Reads a config file as a JSON value; `.json` files are JSON, anything else TOML.
pub fn read_file(path: &Path) -> Result<Value, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read config {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("config {}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| Error::InvalidInput(format!("config {}: {e}", path.display())))
    }
}

/// Parses the right-hand side of `--set`: a TOML value when it is one, otherwise a string.
fn parse_value(raw: &str) -> Value {
    #[derive(Deserialize)]
    struct Wrap {
        v: Value,
    }
    toml::from_str::<Wrap>(&format!("v = {raw}")).map(|w| w.v).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Applies `key.sub=value` to a JSON object, creating tables on the way.
pub fn apply_set(root: &mut Value, assignment: &str) -> Result<(), Error> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::InvalidInput(format!("--set expects key=value, got {assignment:?}")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|k| k.is_empty()) {
        return Err(Error::InvalidInput(format!("bad key in --set {assignment:?}")));
    }
    let mut node = root;
    for k in &path[..path.len() - 1] {
        if !node.is_object() {
            return Err(Error::InvalidInput(format!("{key} does not name a table")));
        }
        node = node.as_object_mut().expect("checked").entry(k.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node.as_object_mut().ok_or_else(|| Error::InvalidInput(format!("{key} does not name a table")))?;
    obj.insert(path[path.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    pub fn from_value(v: Value) -> Result<Self, Error> {
        serde_json::from_value(v).map_err(|e| Error::InvalidInput(format!("config: {e}")))
    }

    pub fn loss(&self) -> Result<ScalarConvexFunction, Error> {
        let f = self.loss.ok_or_else(|| Error::InvalidInput("no loss given (set `loss`)".into()))?.0;
        let report = f.validate_assumptions(Role::Loss).map_err(|e| context("loss", e))?;
        for w in report.warnings {
            eprintln!("warning: {w}");
        }
        Ok(f)
    }

    pub fn reg(&self) -> Result<Option<ScalarConvexFunction>, Error> {
        match self.reg {
            None => Ok(None),
            Some(Func(f)) => {
                f.validate_assumptions(Role::Reg).map_err(|e| context("regularizer", e))?;
                Ok(Some(f))
            }
        }
    }

    pub fn noise(&self) -> Result<MarginalLaw, Error> {
        let law = self.noise.as_ref().ok_or_else(|| Error::InvalidInput("no noise law given (set `noise`)".into()))?;
        law.0.validate().map_err(|e| context("noise law", e))?;
        if law.0.prob_nonzero() <= 0.0 {
            return Err(Error::DegenerateNoise);
        }
        Ok(law.0.clone())
    }

    pub fn signal(&self) -> Result<MarginalLaw, Error> {
        let law = self.signal.as_ref().ok_or_else(|| Error::InvalidInput("no signal law given (set `signal`)".into()))?;
        law.0.validate().map_err(|e| context("signal law", e))?;
        Ok(law.0.clone())
    }

    /// Signal law, defaulting to `N(0, 1)` where only the error matters.
    pub fn signal_or_gaussian(&self) -> Result<MarginalLaw, Error> {
        if self.signal.is_some() {
            self.signal()
        } else {
            Ok(MarginalLaw::gaussian(0.0, 1.0))
        }
    }

    pub fn delta(&self) -> Result<f64, Error> {
        let d = self.delta.ok_or_else(|| Error::InvalidInput("no oversampling ratio given (set `delta`)".into()))?;
        positive("delta", d)?;
        Ok(d)
    }

    /// `deltas` if given, else the single `delta`.
    pub fn delta_grid(&self) -> Result<Vec<f64>, Error> {
        let grid = match &self.deltas {
            Some(g) => g.clone(),
            None => vec![self.delta()?],
        };
        nonempty("deltas", &grid)?;
        for &d in &grid {
            positive("delta", d)?;
        }
        Ok(grid)
    }

    pub fn lambdas(&self) -> Result<Vec<f64>, Error> {
        nonempty("lambdas", &self.lambdas)?;
        for &l in &self.lambdas {
            positive("lambda", l)?;
        }
        if self.lambdas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("lambdas must be strictly increasing".into()));
        }
        Ok(self.lambdas.clone())
    }

    pub fn s_grid(&self) -> Result<Vec<f64>, Error> {
        nonempty("s_grid", &self.s_grid)?;
        for &s in &self.s_grid {
            fraction("s_grid", s)?;
        }
        Ok(self.s_grid.clone())
    }

    pub fn tol(&self) -> Result<f64, Error> {
        positive("tol", self.tol)?;
        Ok(self.tol)
    }

    pub fn check_engine(&self) -> Result<(), Error> {
        if self.engine.gh_nodes < 2 || self.engine.mc_samples == 0 {
            return Err(Error::InvalidInput("engine needs gh_nodes >= 2 and mc_samples >= 1".into()));
        }
        Ok(())
    }

    pub fn check_experiment(&self) -> Result<(), Error> {
        let e = &self.experiment;
        if e.replicates == 0 {
            return Err(Error::InvalidInput("experiment.replicates must be positive".into()));
        }
        if e.n == Some(0) || e.p == Some(0) {
            return Err(Error::InvalidInput("experiment.n and experiment.p must be positive".into()));
        }
        positive("experiment.tol", e.tol)
    }
}

fn context(what: &str, e: Error) -> Error {
    match e {
        Error::InvalidInput(m) => Error::InvalidInput(format!("{what}: {m}")),
        Error::InvalidAssumption(m) => Error::InvalidAssumption(format!("{what}: {m}")),
        Error::NotMinimizedAtZero(m) => Error::NotMinimizedAtZero(format!("{what}: {m}")),
        other => other,
    }
}

fn positive(what: &str, x: f64) -> Result<(), Error> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} must be positive and finite, got {x}")))
    }
}

fn fraction(what: &str, x: f64) -> Result<(), Error> {
    if x > 0.0 && x <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} entries must lie in (0, 1], got {x}")))
    }
}

fn nonempty(what: &str, v: &[f64]) -> Result<(), Error> {
    if v.is_empty() {
        Err(Error::InvalidInput(format!("{what} must not be empty")))
    } else {
        Ok(())
    }
}
