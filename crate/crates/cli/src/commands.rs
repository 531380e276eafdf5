//! Subcommand bodies. Each returns the bytes it wants written so that output
//! is assembled in grid order and is identical across runs.

use std::path::Path;

use mrisk::conic_geometry::statdim_fraction;
use mrisk::finite_sample::{n_for, p_for, Estimator, Experiment, ExperimentRecord, Outputs};
use mrisk::marginals::rng::derive_seed;
use mrisk::system_solver::{risk_curve, solve_reg, solve_unreg, RiskPoint, Status};
use mrisk::threshold::{delta_perfect_reg, delta_perfect_unreg, expected_dist_sq};
use mrisk::{defaults, Error, ExpectationEngine, MarginalLaw, Result, ScalarConvexFunction};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::svg::{Chart, Heatmap};

/// Shortest round-trip decimal; `inf`, `-inf` and `nan` spelled out.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else if x == 0.0 || (1e-4..1e15).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::InvalidInput(format!("csv: {e}")))
}

fn json_bytes<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("reports serialize");
    out.push(b'\n');
    out
}

fn engine(cfg: &RunConfig) -> Result<ExpectationEngine> {
    cfg.check_engine()?;
    Ok(ExpectationEngine::from_settings(cfg.engine))
}

fn status_name(s: Option<Status>) -> &'static str {
    match s {
        Some(Status::Converged) => "converged",
        Some(Status::AtZero) => "at_zero",
        Some(Status::MaxIter) => "max_iter",
        None => "failed",
    }
}

/// Noise sparsity path `(1 - s) delta(0) + s component`.
fn mixture(component: &MarginalLaw, s: f64) -> MarginalLaw {
    MarginalLaw::point(0.0).mix(component, s)
}

/// A file written as a side effect.
pub struct Extra {
    pub path: std::path::PathBuf,
    pub bytes: Vec<u8>,
}

pub struct Output {
    pub main: Vec<u8>,
    pub extras: Vec<Extra>,
}

impl From<Vec<u8>> for Output {
    fn from(main: Vec<u8>) -> Self {
        Output { main, extras: Vec::new() }
    }
}

pub fn threshold(cfg: &RunConfig) -> Result<Output> {
    let loss = cfg.loss()?;
    let noise = cfg.noise()?;
    let reg = cfg.reg()?;
    let signal = if reg.is_some() { Some(cfg.signal()?) } else { None };
    let engine = engine(cfg)?;
    let report = match (&reg, &signal) {
        (Some(reg), Some(signal)) => delta_perfect_reg(&engine, &loss, reg, &noise, signal)?,
        _ => delta_perfect_unreg(&engine, &loss, &noise)?,
    };
    let mut out = Output::from(json_bytes(&report));
    if let Some(path) = &cfg.j_samples {
        let ts = defaults::log_grid(1e-3, 1e3, 61);
        let mut header = vec!["t", "j_loss"];
        if reg.is_some() {
            header.push("j_reg");
        }
        let rows: Vec<Vec<String>> = ts
            .par_iter()
            .map(|&t| {
                let mut row = vec![num(t), num(expected_dist_sq(&engine, t, &loss, &noise))];
                if let (Some(reg), Some(signal)) = (&reg, &signal) {
                    row.push(num(expected_dist_sq(&engine, t, reg, signal)));
                }
                row
            })
            .collect();
        out.extras.push(Extra { path: path.clone(), bytes: csv_bytes(&header, &rows)? });
    }
    Ok(out)
}

pub fn solve(cfg: &RunConfig) -> Result<Output> {
    let loss = cfg.loss()?;
    let noise = cfg.noise()?;
    let delta = cfg.delta()?;
    let tol = cfg.tol()?;
    let engine = engine(cfg)?;
    let sol = match cfg.reg()? {
        Some(reg) => {
            let signal = cfg.signal()?;
            solve_reg(&engine, &loss, &reg.scaled(cfg.lambda), &noise, &signal, delta, tol)?
        }
        None => solve_unreg(&engine, &loss, &noise, delta, tol)?,
    };
    Ok(json_bytes(&sol).into())
}

fn risk_rows(points: &[RiskPoint]) -> Vec<Vec<String>> {
    points
        .iter()
        .map(|pt| vec![num(pt.lambda), num(pt.alpha), status_name(pt.status).into(), num(pt.residual_max)])
        .collect()
}

pub fn risk_curve_cmd(cfg: &RunConfig) -> Result<Output> {
    let loss = cfg.loss()?;
    let reg = cfg.reg()?.ok_or_else(|| Error::InvalidInput("risk-curve needs a regularizer (set `reg`)".into()))?;
    let noise = cfg.noise()?;
    let signal = cfg.signal()?;
    let delta = cfg.delta()?;
    let lambdas = cfg.lambdas()?;
    let tol = cfg.tol()?;
    let engine = engine(cfg)?;
    let points = risk_curve(&engine, &loss, &reg, &noise, &signal, delta, &lambdas, tol)?;
    for pt in &points {
        if let Some(e) = &pt.error {
            eprintln!("lambda = {}: {e}", pt.lambda);
        }
    }
    Ok(csv_bytes(&["lambda", "alpha", "status", "residual_max"], &risk_rows(&points))?.into())
}

/// Mean and standard error of the finite values.
fn mean_se(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = xs.filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let se = if v.len() > 1 { (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt() } else { f64::NAN };
    (m, se)
}

struct PhaseCell {
    s: f64,
    delta: f64,
    boundary: f64,
    freq: f64,
}

fn phase_cells(cfg: &RunConfig, deltas: &[f64], empirical: bool) -> Result<Vec<PhaseCell>> {
    let loss = cfg.loss()?;
    let component = &cfg.component.0;
    component.validate()?;
    let s_grid = cfg.s_grid()?;
    let engine = engine(cfg)?;
    if empirical {
        cfg.check_experiment()?;
    }
    let n = cfg.experiment.n.unwrap_or(100);
    let mut cells = Vec::new();
    for (i, &s) in s_grid.iter().enumerate() {
        let noise = mixture(component, s);
        let boundary = match delta_perfect_unreg(&engine, &loss, &noise) {
            Ok(r) => r.delta_perfect,
            Err(e) if e.is_validation() => return Err(e),
            Err(e) => {
                eprintln!("s = {s}: {e}");
                f64::NAN
            }
        };
        for (j, &delta) in deltas.iter().enumerate() {
            let freq = if empirical {
                let exp = Experiment {
                    n,
                    p: p_for(n, delta),
                    loss,
                    estimator: Estimator::Unregularized,
                    noise: noise.clone(),
                    signal: cfg.signal_or_gaussian()?,
                    replicates: cfg.experiment.replicates,
                    master_seed: derive_seed(cfg.engine.master_seed, (i * deltas.len() + j) as u64),
                    tol: cfg.experiment.tol,
                    outputs: Outputs::CertificateOnly,
                };
                match exp.run() {
                    Ok(recs) => recs.iter().filter(|r| r.recovered).count() as f64 / recs.len() as f64,
                    Err(e) => {
                        eprintln!("s = {s}, delta = {delta}: {e}");
                        f64::NAN
                    }
                }
            } else {
                f64::NAN
            };
            cells.push(PhaseCell { s, delta, boundary, freq });
        }
    }
    Ok(cells)
}

const PHASE_HEADER: [&str; 4] = ["s", "delta", "predicted_boundary", "empirical_recovery_freq"];

fn phase_rows(cells: &[PhaseCell]) -> Vec<Vec<String>> {
    cells.iter().map(|c| vec![num(c.s), num(c.delta), num(c.boundary), num(c.freq)]).collect()
}

pub fn phase_diagram(cfg: &RunConfig) -> Result<Output> {
    let deltas = cfg.delta_grid()?;
    let cells = phase_cells(cfg, &deltas, true)?;
    Ok(csv_bytes(&PHASE_HEADER, &phase_rows(&cells))?.into())
}

/// `(n, p)` at `delta`, holding whichever of the configured sizes is set.
fn sizes(cfg: &RunConfig, delta: f64, default_p: usize) -> (usize, usize) {
    match (cfg.experiment.n, cfg.experiment.p) {
        (_, Some(p)) => (n_for(p, delta), p),
        (Some(n), None) => (n, p_for(n, delta)),
        (None, None) => (n_for(default_p, delta), default_p),
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<Output> {
    let loss = cfg.loss()?;
    let reg = cfg.reg()?;
    let noise = cfg.noise()?;
    let signal = cfg.signal_or_gaussian()?;
    let deltas = cfg.delta_grid()?;
    cfg.check_experiment()?;
    let estimator = match reg {
        Some(reg) => Estimator::Regularized { reg, lambdas: cfg.lambdas()? },
        None => {
            if let Some(d) = deltas.iter().find(|d| **d <= 1.0) {
                return Err(Error::InvalidAssumption(format!(
                    "the unregularized estimator needs delta > 1, got {d}"
                )));
            }
            Estimator::Unregularized
        }
    };
    let mut rows = Vec::new();
    for (i, &delta) in deltas.iter().enumerate() {
        let (n, p) = sizes(cfg, delta, 500);
        let exp = Experiment {
            n,
            p,
            loss,
            estimator: estimator.clone(),
            noise: noise.clone(),
            signal: signal.clone(),
            replicates: cfg.experiment.replicates,
            master_seed: derive_seed(cfg.engine.master_seed, i as u64),
            tol: cfg.experiment.tol,
            outputs: cfg.experiment.outputs,
        };
        rows.extend(exp.run()?.iter().map(record_row));
    }
    Ok(csv_bytes(&SIM_HEADER, &rows)?.into())
}

const SIM_HEADER: [&str; 9] =
    ["replicate", "n", "p", "delta", "lambda", "empirical_risk", "recovered", "kkt_certificate_norm", "iters"];

fn record_row(r: &ExperimentRecord) -> Vec<String> {
    vec![
        r.replicate.to_string(),
        r.n.to_string(),
        r.p.to_string(),
        num(r.delta),
        r.lambda.map(num).unwrap_or_default(),
        num(r.empirical_risk),
        r.recovered.to_string(),
        num(r.kkt_certificate_norm),
        r.solver_iters.to_string(),
    ]
}

pub fn statdim(cfg: &RunConfig) -> Result<Output> {
    let h = cfg.loss()?;
    let law = cfg.noise()?;
    let est = statdim_fraction(&h, &law, cfg.statdim.m, cfg.statdim.samples, cfg.engine.master_seed)?;
    Ok(json_bytes(&est).into())
}

pub fn figures(cfg: &RunConfig) -> Result<Output> {
    let fig = &cfg.figures;
    let dir = cfg.out.clone().unwrap_or_else(|| "figures".into());
    let engine = engine(cfg)?;
    if fig.empirical {
        cfg.check_experiment()?;
    }
    let mut extras = Vec::new();
    let mut push = |name: &str, bytes: Vec<u8>| extras.push(Extra { path: dir.join(name), bytes });
    let mut summary = String::new();

    // risk of L1 and Huber against delta
    let noise = cfg.noise.as_ref().map(|l| l.0.clone()).unwrap_or_else(|| MarginalLaw::sparse_gaussian(0.1));
    noise.validate()?;
    for &d in &fig.risk_deltas {
        if !(d > 1.0 && d.is_finite()) {
            return Err(Error::InvalidAssumption(format!(
                "the unregularized estimator needs delta > 1, got {d} in figures.risk_deltas"
            )));
        }
    }
    let losses = [("l1", ScalarConvexFunction::abs()), ("huber", ScalarConvexFunction::huber(1.0))];
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for (li, (name, loss)) in losses.iter().enumerate() {
        let theory: Vec<Result<f64>> = fig
            .risk_deltas
            .par_iter()
            .map(|&d| solve_unreg(&engine, loss, &noise, d, cfg.tol).map(|s| s.alpha * s.alpha))
            .collect();
        let mut pts = Vec::new();
        for (k, (&d, a2)) in fig.risk_deltas.iter().zip(theory).enumerate() {
            let a2 = a2?;
            let (m, se) = if fig.empirical {
                let (n, p) = sizes(cfg, d, 500);
                let exp = Experiment {
                    n,
                    p,
                    loss: *loss,
                    estimator: Estimator::Unregularized,
                    noise: noise.clone(),
                    signal: MarginalLaw::gaussian(0.0, 1.0),
                    replicates: cfg.experiment.replicates,
                    master_seed: derive_seed(cfg.engine.master_seed, (li * fig.risk_deltas.len() + k) as u64),
                    tol: cfg.experiment.tol,
                    outputs: Outputs::EstimateOnly,
                };
                let recs = exp.run()?;
                mean_se(recs.iter().map(|r| r.empirical_risk))
            } else {
                (f64::NAN, f64::NAN)
            };
            pts.push((d, a2, m));
            rows.push(vec![name.to_string(), num(d), num(a2), num(m), num(se)]);
        }
        series.push((name.to_string(), pts));
    }
    let risk_threshold = delta_perfect_unreg(&engine, &losses[0].1, &noise)?.delta_perfect;
    push("risk_compare.csv", csv_bytes(&["loss", "delta", "alpha_sq", "empirical_risk_mean", "empirical_risk_se"], &rows)?);
    summary.push_str(&format!("risk_compare.csv: {} rows, l1 threshold {}\n", rows.len(), num(risk_threshold)));
    if fig.svg {
        let mut chart = Chart::new("risk against delta", "delta", "risk");
        for (name, pts) in &series {
            chart.line(&format!("{name} theory"), pts.iter().map(|p| (p.0, p.1)).collect());
            if fig.empirical {
                chart.points(&format!("{name} empirical"), pts.iter().map(|p| (p.0, p.2)).collect());
            }
        }
        chart.vline(risk_threshold);
        push("risk_compare.svg", chart.render().into_bytes());
    }

    // lambda sweep of L1/L1 around the threshold
    let loss = ScalarConvexFunction::abs();
    let reg = ScalarConvexFunction::abs();
    let reg_noise = cfg.noise.as_ref().map(|l| l.0.clone()).unwrap_or_else(|| MarginalLaw::sparse_gaussian(0.3));
    let signal = cfg.signal.as_ref().map(|l| l.0.clone()).unwrap_or_else(|| MarginalLaw::sparse_gaussian(0.1));
    signal.validate()?;
    let lambdas = cfg.lambdas()?;
    let dp = delta_perfect_reg(&engine, &loss, &reg, &reg_noise, &signal)?.delta_perfect;
    let mut rows = Vec::new();
    let mut chart = Chart::new("risk against lambda", "lambda", "risk").log_x();
    for (ri, &ratio) in fig.reg_ratios.iter().enumerate() {
        if !(ratio > 0.0) || !dp.is_finite() {
            return Err(Error::InvalidInput(format!("cannot place delta at {ratio} times the threshold {}", num(dp))));
        }
        let delta = ratio * dp;
        let curve = risk_curve(&engine, &loss, &reg, &reg_noise, &signal, delta, &lambdas, cfg.tol)?;
        let emp: Vec<(f64, f64)> = if fig.empirical {
            let (n, p) = sizes(cfg, delta, 400);
            let exp = Experiment {
                n,
                p,
                loss,
                estimator: Estimator::Regularized { reg, lambdas: lambdas.clone() },
                noise: reg_noise.clone(),
                signal: signal.clone(),
                replicates: cfg.experiment.replicates,
                master_seed: derive_seed(cfg.engine.master_seed, (1 << 20) + ri as u64),
                tol: cfg.experiment.tol,
                outputs: Outputs::EstimateOnly,
            };
            let recs = exp.run()?;
            (0..lambdas.len())
                .map(|k| mean_se(recs.iter().skip(k).step_by(lambdas.len()).map(|r| r.empirical_risk)))
                .collect()
        } else {
            vec![(f64::NAN, f64::NAN); lambdas.len()]
        };
        for (pt, (m, se)) in curve.iter().zip(&emp) {
            rows.push(vec![
                num(ratio),
                num(delta),
                num(pt.lambda),
                num(pt.alpha * pt.alpha),
                status_name(pt.status).into(),
                num(*m),
                num(*se),
            ]);
        }
        chart.line(&format!("{ratio} x threshold"), curve.iter().map(|pt| (pt.lambda, pt.alpha * pt.alpha)).collect());
        if fig.empirical {
            chart.points(&format!("{ratio} x threshold, empirical"), lambdas.iter().zip(&emp).map(|(l, e)| (*l, e.0)).collect());
        }
    }
    push(
        "reg_phase_transition.csv",
        csv_bytes(
            &["delta_ratio", "delta", "lambda", "alpha_sq", "status", "empirical_risk_mean", "empirical_risk_se"],
            &rows,
        )?,
    );
    summary.push_str(&format!("reg_phase_transition.csv: {} rows, threshold {}\n", rows.len(), num(dp)));
    if fig.svg {
        push("reg_phase_transition.svg", chart.render().into_bytes());
    }

    // 1 / delta_perfect against signal sparsity, one curve per noise sparsity
    let mut rows = Vec::new();
    let mut chart = Chart::new("inverse threshold", "s", "1 / delta_perfect");
    for &t in &fig.threshold_t {
        let noise = MarginalLaw::sparse_gaussian(t);
        let inv: Vec<Result<f64>> = fig
            .threshold_s
            .par_iter()
            .map(|&s| {
                delta_perfect_reg(&engine, &loss, &reg, &noise, &MarginalLaw::sparse_gaussian(s))
                    .map(|r| 1.0 / r.delta_perfect)
            })
            .collect();
        let mut pts = Vec::new();
        for (&s, v) in fig.threshold_s.iter().zip(inv) {
            let v = v?;
            rows.push(vec![num(t), num(s), num(1.0 / v), num(v)]);
            pts.push((s, v));
        }
        chart.line(&format!("t = {t}"), pts);
    }
    push("reg_threshold.csv", csv_bytes(&["t", "s", "delta_perfect", "inv_delta_perfect"], &rows)?);
    summary.push_str(&format!("reg_threshold.csv: {} rows\n", rows.len()));
    if fig.svg {
        push("reg_threshold.svg", chart.render().into_bytes());
    }

    // phase diagram of L1 with sparse Cauchy noise
    let mut phase_cfg = cfg.clone();
    if phase_cfg.loss.is_none() {
        phase_cfg.loss = Some(crate::config::Func(ScalarConvexFunction::abs()));
    }
    let deltas = match &cfg.deltas {
        Some(d) => d.clone(),
        None => (0..17).map(|k| 1.0 + 0.25 * k as f64).collect(),
    };
    let cells = phase_cells(&phase_cfg, &deltas, fig.empirical)?;
    push("phase_diagram.csv", csv_bytes(&PHASE_HEADER, &phase_rows(&cells))?);
    summary.push_str(&format!("phase_diagram.csv: {} rows\n", cells.len()));
    if fig.svg {
        let mut map = Heatmap::new("perfect recovery", "s", "delta");
        for c in &cells {
            map.cell(c.s, c.delta, c.freq);
        }
        let mut boundary: Vec<(f64, f64)> = cells.iter().map(|c| (c.s, c.boundary)).collect();
        boundary.dedup();
        map.curve(boundary);
        push("phase_diagram.svg", map.render().into_bytes());
    }

    Ok(Output { main: summary.into_bytes(), extras })
}

pub fn write_output(out: &Output, main_path: Option<&Path>) -> std::io::Result<()> {
    for e in &out.extras {
        if let Some(parent) = e.path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(&e.path, &e.bytes)?;
    }
    match main_path {
        Some(p) => {
            if let Some(parent) = p.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(p, &out.main)
        }
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&out.main)
        }
    }
}
