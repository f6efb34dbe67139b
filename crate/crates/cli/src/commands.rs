use std::fmt;

use qspec_core::bounds::{self, BaseDomain, BoundReport};
use qspec_core::config::{parse_domain, parse_map, parse_point};
use qspec_core::constants::{self, exponent_window};
use qspec_core::domains::Domain;
use qspec_core::plap_solver::{self, SolverOptions};
use qspec_core::qc_maps::QcMap;
use qspec_core::quadrature::{self, QuadratureSpec};
use qspec_core::quasihyperbolic::{self, FitOptions, QhGraph};
use qspec_core::Exponent;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::*;
use crate::manifest;

#[derive(Debug)]
pub enum CliError {
    Core(qspec_core::Error),
    Input(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Input(s) => f.write_str(s),
        }
    }
}

impl From<qspec_core::Error> for CliError {
    fn from(e: qspec_core::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn input<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Input(msg.into()))
}

/// What a command produced.
pub struct Output {
    pub json: Value,
    /// Replaces the JSON on standard output when set.
    pub csv: Option<String>,
    /// Some check did not hold.
    pub failed: bool,
    pub seeds: Vec<u64>,
}

impl Output {
    fn ok(json: Value) -> Self {
        Self { json, csv: None, failed: false, seeds: Vec::new() }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

pub fn run(cmd: &Command) -> CliResult<Output> {
    match cmd {
        Command::Constants(a) => cmd_constants(a),
        Command::Bound(a) => cmd_bound(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Eigen(a) => cmd_eigen(a),
        Command::Qh(a) => cmd_qh(a),
        Command::QhFit(a) => cmd_qh_fit(a),
        Command::Example(a) => cmd_example(a),
        Command::Replay(a) => manifest::replay(&a.file),
    }
}

/// `mid`, `window:F` (fraction of the β-window) or a plain exponent.
pub fn parse_beta(s: &str, n: usize, k: f64) -> CliResult<Exponent> {
    let s = s.trim();
    if s == "mid" || s.starts_with("window:") {
        let window = exponent_window(n, k)?.beta;
        let frac = match s.strip_prefix("window:") {
            Some(f) => f.parse::<f64>().map_err(|_| CliError::Input(format!("bad window fraction '{f}'")))?,
            None => 0.5,
        };
        if !(frac > 0.0 && frac < 1.0) {
            return input(format!("window fraction must lie in (0, 1), got {frac}"));
        }
        return Ok(window.at(frac));
    }
    s.parse::<Exponent>().map_err(CliError::Core)
}

fn cmd_constants(a: &ConstantsArgs) -> CliResult<Output> {
    let p = a.p.as_deref().map(|s| s.parse::<Exponent>()).transpose()?;
    let beta = a.beta.as_deref().map(|s| parse_beta(s, a.n, a.k)).transpose()?;
    let rows: Vec<Value> = constants::summary(a.n, a.k, p, beta)?
        .into_iter()
        .map(|(name, value, ln)| json!({ "name": name, "value": value, "ln": ln }))
        .collect();
    let mut out = json!({ "n": a.n, "K": a.k, "constants": rows });
    if a.n >= 3 {
        let w = exponent_window(a.n, a.k)?;
        out["windows"] = json!({
            "alpha": { "lower": w.alpha.lower().to_string(), "upper": w.alpha.upper().to_string(), "ln_width": w.alpha.ln_width },
            "beta": { "lower": w.beta.lower().to_string(), "upper": w.beta.upper().to_string(), "ln_width": w.beta.ln_width },
        });
    }
    Ok(Output::ok(out))
}

fn need<T: Copy>(v: Option<T>, flag: &str, theorem: &str) -> CliResult<T> {
    match v {
        Some(x) => Ok(x),
        None => input(format!("--{flag} is required for --theorem {theorem}")),
    }
}

fn bound_report(a: &BoundArgs) -> CliResult<BoundReport> {
    let name = match a.theorem {
        Theorem::Convex => "convex",
        Theorem::Beta => "beta",
        Theorem::Infty => "infty",
        Theorem::UnitBall => "unit-ball",
        Theorem::Quasiball => "quasiball",
        Theorem::Qhbc => "qhbc",
        Theorem::Example => "example",
    };
    let context = |e: qspec_core::Error| CliError::Input(format!("{e} (required by the {name} bound)"));
    let k = || need(a.k, "K", name);
    let beta = || -> CliResult<Exponent> {
        let s = a.beta.as_deref().ok_or_else(|| CliError::Input(format!("--beta is required for --theorem {name}")))?;
        parse_beta(s, a.n, a.k.unwrap_or(1.0))
    };
    let base = || -> CliResult<BaseDomain> {
        match &a.base {
            Some(desc) => Ok(BaseDomain::of(&parse_domain(desc, Some(a.n))?)?),
            None => Ok(BaseDomain::unit_ball(a.n)?),
        }
    };
    let (n, p) = (a.n, a.p);
    let r = match a.theorem {
        Theorem::Convex => bounds::bound_convex(n, p, need(a.diameter, "diameter", name)?),
        Theorem::Beta => bounds::bound_beta_regular(
            n,
            p,
            k()?,
            beta()?,
            base()?,
            need(a.volume, "volume", name)?,
            need(a.jac_norm, "jac-norm", name)?,
        ),
        Theorem::Infty => bounds::bound_infty_regular(
            n,
            p,
            k()?,
            base()?,
            need(a.volume, "volume", name)?,
            need(a.jac_norm, "jac-norm", name)?,
        ),
        Theorem::UnitBall => bounds::bound_unit_ball_beta(
            n,
            p,
            k()?,
            beta()?,
            need(a.volume, "volume", name)?,
            need(a.jac_norm, "jac-norm", name)?,
        ),
        Theorem::Quasiball => bounds::bound_quasiball(n, p, k()?, beta()?, need(a.volume, "volume", name)?),
        Theorem::Qhbc => bounds::bound_qhbc(n, p, k()?, need(a.gamma, "gamma", name)?, beta()?, need(a.r_star, "r-star", name)?),
        Theorem::Example => bounds::bound_example(n, p, need(a.a, "a", name)?),
    };
    r.map_err(context)
}

fn csv_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn cmd_bound(a: &BoundArgs) -> CliResult<Output> {
    let report = bound_report(a)?;
    let mut out = Output::ok(to_value(&report));
    if a.csv {
        let row = report.csv_row();
        let header: Vec<String> = row.iter().map(|c| c.0.clone()).collect();
        out.csv = Some(csv_table(&header, &[row.into_iter().map(|c| c.1).collect()]));
    }
    Ok(out)
}

#[derive(Serialize)]
struct CheckRow {
    check: String,
    lhs: f64,
    rhs: f64,
    margin: f64,
    sigma: f64,
    holds: bool,
}

impl CheckRow {
    /// `lhs ≤ rhs` up to three standard errors and rounding.
    fn new(check: String, lhs: f64, rhs: f64, sigma: f64) -> Self {
        let margin = rhs - lhs;
        let holds = margin + 3.0 * sigma + 1e-12 * rhs.abs().max(lhs.abs()) >= 0.0;
        Self { check, lhs, rhs, margin, sigma, holds }
    }
}

fn map_k(m: &QcMap, d: &Domain, spec: &QuadratureSpec) -> CliResult<f64> {
    Ok(match m.declared_k() {
        Some(k) => k,
        None => m.estimate_k(d, spec)?.analytic,
    }
    .max(1.0))
}

fn pq_pairs(a: &VerifyArgs) -> CliResult<Vec<(f64, f64)>> {
    match (a.p, a.q) {
        (Some(p), Some(q)) => Ok(vec![(p, q)]),
        (None, None) => Ok(vec![(4.0, 2.0), (6.0, 1.0), (6.0, 3.0)]),
        _ => input("--p and --q must be given together"),
    }
}

fn verify_doubling(m: &QcMap, n: usize, spec: &QuadratureSpec) -> CliResult<Vec<CheckRow>> {
    let k = map_k(m, &Domain::ball(vec![0.0; n], 4.0)?, spec)?;
    let c = constants::doubling_constant(n, k)?.value();
    let mut e1 = vec![0.0; n];
    e1[0] = 1.0;
    let cases = [
        (vec![0.0; n], 1.0),
        (e1.iter().map(|v| 0.5 * v).collect::<Vec<_>>(), 0.25),
        (vec![0.3; n], 0.5),
        (e1.iter().map(|v| 0.9 * v).collect::<Vec<_>>(), 0.1),
    ];
    cases
        .iter()
        .map(|(center, r)| {
            let ratio = quadrature::doubling_ratio(m, center, *r, spec)?;
            Ok(CheckRow::new(format!("doubling c={center:?} r={r} K={k}"), ratio.value, c, ratio.sigma()))
        })
        .collect()
}

fn verify_norm(m: &QcMap, d: &Domain, pairs: &[(f64, f64)], spec: &QuadratureSpec) -> CliResult<Vec<CheckRow>> {
    let n = m.dim();
    let k = map_k(m, d, spec)?;
    let vol = d.measure(Some(spec))?.value;
    let image = quadrature::image_measure(m, d, spec)?;
    pairs
        .iter()
        .map(|&(p, q)| {
            let lhs = quadrature::composition_norm(m, d, p, q, spec)?;
            let rhs = quadrature::composition_norm_bound(n, p, q, k, image.value, vol)?;
            let e = (p - n as f64) / (n as f64 * p);
            let sigma_rhs = rhs * e * image.sigma() / image.value;
            let sigma = (lhs.sigma().powi(2) + sigma_rhs.powi(2)).sqrt();
            Ok(CheckRow::new(format!("composition norm p={p} q={q} K={k}"), lhs.value, rhs, sigma))
        })
        .collect()
}

fn verify_rhi(m: &QcMap, spec: &QuadratureSpec) -> CliResult<Vec<CheckRow>> {
    let n = m.dim();
    let k = m.estimate_k(&Domain::ball(vec![0.0; n], 2.0)?, spec)?.analytic.max(1.0);
    let window = exponent_window(n, k)?.alpha;
    [0.25, 0.5, 0.75]
        .iter()
        .map(|&f| {
            let c = quadrature::weak_rhi_check(m, window.at(f), spec)?;
            let sigma = (c.lhs_std_error.powi(2) + c.rhs_std_error.powi(2)).sqrt();
            Ok(CheckRow::new(format!("weak reverse Holder p={} K={}", c.p, c.k), c.lhs, c.rhs, sigma))
        })
        .collect()
}

fn verify_exponents(m: &QcMap, d: &Domain, pairs: &[(f64, f64)], spec: &QuadratureSpec) -> CliResult<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for &(p, q) in pairs {
        let c = quadrature::exponent_relation_check(m, d, p, q, spec)?;
        let tag = format!("p={p} q={q} beta={}", c.beta);
        let diff = (c.q_round_trip - q).abs();
        rows.push(CheckRow {
            check: format!("exponent round trip {tag}"),
            lhs: c.q_round_trip,
            rhs: q,
            margin: -diff,
            sigma: 0.0,
            holds: diff <= 1e-12 * q,
        });
        // both sides hold pointwise, so shared samples need no error allowance
        let e = q / (p - q);
        rows.push(CheckRow::new(
            format!("derivative integral vs composition norm {tag}"),
            c.derivative_integral.value,
            c.composition_integral.value,
            0.0,
        ));
        rows.push(CheckRow::new(
            format!("composition norm vs distorted derivative integral {tag}"),
            c.composition_integral.value,
            c.k.powf(e) * c.derivative_integral.value,
            0.0,
        ));
    }
    Ok(rows)
}

fn cmd_verify(a: &VerifyArgs) -> CliResult<Output> {
    let m = parse_map(&a.map, a.n)?;
    let spec = QuadratureSpec::monte_carlo(a.samples, a.seed);
    let d = match &a.domain {
        Some(desc) => parse_domain(desc, Some(a.n))?,
        None => Domain::unit_ball(a.n),
    };
    let pairs = pq_pairs(a)?;
    let mut rows = Vec::new();
    let all = a.suite == Suite::All;
    if all || a.suite == Suite::Doubling {
        rows.extend(verify_doubling(&m, a.n, &spec)?);
    }
    if all || a.suite == Suite::Norm {
        rows.extend(verify_norm(&m, &d, &pairs, &spec)?);
    }
    if all || a.suite == Suite::Rhi {
        rows.extend(verify_rhi(&m, &spec)?);
    }
    if all || a.suite == Suite::Exponents {
        rows.extend(verify_exponents(&m, &d, &pairs, &spec)?);
    }
    let failed = rows.iter().any(|r| !r.holds);
    let json = json!({
        "suite": a.suite,
        "map": a.map,
        "n": a.n,
        "samples": a.samples,
        "seed": a.seed,
        "rows": to_value(&rows),
        "all_hold": !failed,
    });
    let csv = a.csv.then(|| {
        let header = ["check", "lhs", "rhs", "margin", "sigma", "holds"].map(String::from);
        let body: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    format!("\"{}\"", r.check.replace('"', "'")),
                    format!("{:.16e}", r.lhs),
                    format!("{:.16e}", r.rhs),
                    format!("{:.16e}", r.margin),
                    format!("{:.16e}", r.sigma),
                    r.holds.to_string(),
                ]
            })
            .collect();
        csv_table(&header, &body)
    });
    Ok(Output { json, csv, failed, seeds: vec![a.seed] })
}

fn cmd_eigen(a: &EigenArgs) -> CliResult<Output> {
    let d = parse_domain(&a.domain, None)?;
    let opts = SolverOptions { max_iterations: a.max_iterations, ..SolverOptions::new(a.p, a.h).restarts(a.restarts).seed(a.seed) };
    let est = plap_solver::minimize(&d, &opts)?;
    if let Some(path) = &a.dump_field {
        std::fs::write(path, est.minimizer.to_csv()).map_err(|e| CliError::Input(format!("cannot write {path}: {e}")))?;
    }
    if !est.converged {
        eprintln!("warning: descent did not meet the stopping criterion; reporting the best quotient found");
    }
    let json = json!({
        "domain": a.domain,
        "p": a.p,
        "h": a.h,
        "cells": est.minimizer.values.len(),
        "mu": est.mu,
        "converged": est.converged,
        "iterations": est.iterations,
        "restarts_used": est.restarts_used,
        "best_restart": est.best_restart,
        "restart_mu": est.restart_mu,
        "constraint_residual": est.constraint_residual,
        "seed": a.seed,
    });
    Ok(Output { seeds: vec![a.seed], ..Output::ok(json) })
}

fn cmd_qh(a: &QhArgs) -> CliResult<Output> {
    let x0 = parse_point(&a.x0)?;
    let x = parse_point(&a.x)?;
    let d = parse_domain(&a.domain, Some(x0.len()))?;
    let g = QhGraph::build(&d, a.h)?;
    let k = g.distance(&x0, &x)?;
    Ok(Output::ok(json!({
        "domain": a.domain,
        "x0": x0,
        "x": x,
        "h": a.h,
        "k": k,
        "dist_x0": g.point_distance(&x0)?,
        "dist_x": g.point_distance(&x)?,
    })))
}

fn cmd_qh_fit(a: &QhFitArgs) -> CliResult<Output> {
    let x0 = a.x0.as_deref().map(parse_point).transpose()?;
    let d = parse_domain(&a.domain, x0.as_ref().map(Vec::len))?;
    let opts = FitOptions {
        x0,
        c0_cap: a.c0_cap,
        min_boundary_distance: a.min_distance,
        ..FitOptions::new(a.h, a.samples, a.seed)
    };
    let fit = quasihyperbolic::fit_gamma(&d, &opts)?;
    if fit.degenerate {
        eprintln!("warning: samples reach log-distance ratio {:.3} < 1; the fit is degenerate", fit.l_max);
    }
    let mut json = to_value(&fit);
    json["domain"] = json!(a.domain);
    json["h"] = json!(a.h);
    json["seed"] = json!(a.seed);
    Ok(Output { seeds: vec![a.seed], ..Output::ok(json) })
}

fn cmd_example(a: &ExampleArgs) -> CliResult<Output> {
    let m = QcMap::stretch(a.n, a.a)?;
    let q = Domain::cube_q(a.n);
    let spec = QuadratureSpec::monte_carlo(a.samples, a.seed);
    let (sup, used) = quadrature::jacobian_sup(&m, &q, &spec)?;
    let nf = a.n as f64;
    let analytic = (a.a + 1.0) * (nf / 2.0).powf(nf * a.a / 2.0);
    let holds = sup <= a.a + 1.0;
    if !holds {
        eprintln!(
            "check failed: measured ess sup of J over Q is {sup:.6} > a+1 = {}; the sup is attained at the corners, (a+1)(n/2)^(na/2) = {analytic:.6}",
            a.a + 1.0
        );
    }
    let report = bounds::bound_example(a.n, a.p, a.a)?;
    let json = json!({
        "n": a.n,
        "p": a.p,
        "a": a.a,
        "samples": used,
        "seed": a.seed,
        "cube_volume": q.measure(None)?.value,
        "jacobian_sup_measured": sup,
        "jacobian_sup_analytic": analytic,
        "a_plus_1": a.a + 1.0,
        "jacobian_sup_le_a_plus_1": holds,
        "report": to_value(&report),
    });
    Ok(Output { json, csv: None, failed: !holds, seeds: vec![a.seed] })
}
