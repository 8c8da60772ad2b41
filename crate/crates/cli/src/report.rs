//! Running a scenario and rendering the result.

use std::fmt::Write as _;
use std::time::Instant;

use gqfim::linalg::RMat;
use gqfim::qfim::{qfim, select_auto, Method, QfimOptions, QfimResult};
use gqfim::sld::{saturability, SaturabilityReport};
use gqfim::{evaluate_bundle, BundleOptions, DerivativeBundle, StateFamily};
use serde::Serialize;

use crate::scenario::Scenario;

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub scenario: String,
    pub schema: u32,
    pub parameters: Vec<ParameterValue>,
    pub spectrum: Vec<f64>,
    pub pure_modes: Vec<bool>,
    pub methods: Vec<MethodReport>,
    pub cross_check: Option<CrossCheck>,
    /// Excluded from determinism comparisons.
    pub timing: Timing,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParameterValue {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodReport {
    pub method: String,
    /// The route that produced `h` (differs from `method` only for `auto`).
    pub route: String,
    pub h: Vec<Vec<f64>>,
    pub min_eigenvalue: f64,
    pub asymmetry: f64,
    pub series_terms: Option<usize>,
    pub error_bound: Option<Vec<Vec<f64>>>,
    pub saturability: Option<Saturability>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Saturability {
    pub route: String,
    /// `tr[rho [L_i, L_j]]` as `[re, im]` pairs.
    pub c: Vec<Vec<[f64; 2]>>,
    pub max_abs: f64,
    pub saturable: bool,
    pub tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossCheck {
    pub max_discrepancy: f64,
    pub pair: [String; 2],
    pub compared_pairs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub derivatives_ms: f64,
    pub methods_ms: Vec<(String, f64)>,
    pub total_ms: f64,
}

#[derive(Debug, thiserror::Error)]
#[error("method `{method}`: {source}")]
pub struct MethodError {
    pub method: Method,
    pub source: gqfim::Error,
}

pub enum RunError {
    Setup(gqfim::Error),
    Method(MethodError),
}

impl RunError {
    pub fn core(&self) -> &gqfim::Error {
        match self {
            RunError::Setup(e) => e,
            RunError::Method(m) => &m.source,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Setup(e) => write!(f, "{e}"),
            RunError::Method(e) => write!(f, "{e}"),
        }
    }
}

fn rows(m: &RMat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

/// Route used for the commutator traces of each estimator.
fn saturability_route(method: Method, b: &DerivativeBundle, opts: &QfimOptions) -> gqfim::Result<Method> {
    match method {
        Method::Compact | Method::Limit => Ok(Method::Mixed),
        Method::Cqfim | Method::Auto => select_auto(b, opts),
        m => Ok(m),
    }
}

fn saturability_entry(rep: &SaturabilityReport) -> Saturability {
    let p = rep.c.nrows();
    Saturability {
        route: rep.method.name().to_string(),
        c: (0..p).map(|i| (0..p).map(|j| [rep.c[(i, j)].re, rep.c[(i, j)].im]).collect()).collect(),
        max_abs: rep.max_abs(),
        saturable: rep.saturable,
        tol: rep.tol,
    }
}

pub fn run(sc: &Scenario, methods: &[Method], opts: &QfimOptions, bundle_opts: &BundleOptions) -> Result<Report, RunError> {
    let start = Instant::now();
    let family = sc.family().map_err(RunError::Setup)?;
    let point = sc.point();
    let b = evaluate_bundle(&family, &point, bundle_opts).map_err(RunError::Setup)?;
    let derivatives_ms = start.elapsed().as_secs_f64() * 1e3;

    let mut results: Vec<(Method, QfimResult)> = Vec::new();
    let mut entries = Vec::new();
    let mut methods_ms = Vec::new();
    for &m in methods {
        let t0 = Instant::now();
        let wrap = |e| RunError::Method(MethodError { method: m, source: e });
        let r = qfim(&b, m, opts).map_err(wrap)?;
        let sat = saturability_route(m, &b, opts).and_then(|route| saturability(&b, route, opts)).map_err(wrap)?;
        methods_ms.push((m.name().to_string(), t0.elapsed().as_secs_f64() * 1e3));
        entries.push(MethodReport {
            method: m.name().to_string(),
            route: r.method.name().to_string(),
            h: rows(&r.h),
            min_eigenvalue: r.min_eigenvalue(),
            asymmetry: r.asymmetry,
            series_terms: r.series_terms,
            error_bound: r.error_bound.as_ref().map(rows),
            saturability: Some(saturability_entry(&sat)),
        });
        results.push((m, r));
    }

    let pure = b.pure_flags(opts.pure_tol);
    let any_pure = pure.iter().any(|&f| f);
    let mut cross: Option<CrossCheck> = None;
    let mut compared = 0;
    for (i, (ma, ra)) in results.iter().enumerate() {
        for (mb, rb) in &results[i + 1..] {
            // away from pure points the continuous QFIM coincides with the QFIM
            if any_pure && (*ma == Method::Cqfim || *mb == Method::Cqfim) {
                continue;
            }
            compared += 1;
            let d = (&ra.h - &rb.h).amax();
            if cross.as_ref().is_none_or(|c| d > c.max_discrepancy) {
                cross = Some(CrossCheck {
                    max_discrepancy: d,
                    pair: [ma.name().to_string(), mb.name().to_string()],
                    compared_pairs: 0,
                });
            }
        }
    }
    if let Some(c) = cross.as_mut() {
        c.compared_pairs = compared;
    }

    Ok(Report {
        scenario: sc.name.clone(),
        schema: sc.schema,
        parameters: family
            .param_names()
            .into_iter()
            .zip(point)
            .map(|(name, value)| ParameterValue { name, value })
            .collect(),
        spectrum: b.spectrum.iter().cloned().collect(),
        pure_modes: pure,
        methods: entries,
        cross_check: cross,
        timing: Timing { derivatives_ms, methods_ms, total_ms: start.elapsed().as_secs_f64() * 1e3 },
    })
}

pub fn to_json(r: &Report) -> String {
    serde_json::to_string_pretty(r).expect("report is always serializable") + "\n"
}

fn matrix_block(out: &mut String, rows: &[Vec<f64>]) {
    for row in rows {
        // below the printed precision; avoids "-0.000000000"
        let cells: Vec<String> =
            row.iter().map(|&x| if x.abs() < 5e-10 { 0.0 } else { x }).map(|x| format!("{x:>16.9}")).collect();
        let _ = writeln!(out, "    [{} ]", cells.join(""));
    }
}

pub fn to_table(r: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario   {}", r.scenario);
    let params: Vec<String> = r.parameters.iter().map(|p| format!("{} = {}", p.name, p.value)).collect();
    let _ = writeln!(out, "point      {}", params.join(", "));
    let spec: Vec<String> = r.spectrum.iter().map(|l| format!("{l:.12}")).collect();
    let _ = writeln!(out, "spectrum   {}", spec.join("  "));
    let flags: Vec<&str> = r.pure_modes.iter().map(|&f| if f { "pure" } else { "mixed" }).collect();
    let _ = writeln!(out, "modes      {}", flags.join("  "));
    for m in &r.methods {
        let _ = writeln!(out);
        if m.route != m.method {
            let _ = writeln!(out, "[{}] via {}", m.method, m.route);
        } else {
            let _ = writeln!(out, "[{}]", m.method);
        }
        let _ = writeln!(out, "  H");
        matrix_block(&mut out, &m.h);
        if let Some(t) = m.series_terms {
            let _ = writeln!(out, "  series terms M = {t}");
        }
        if let Some(b) = &m.error_bound {
            let _ = writeln!(out, "  remainder bound");
            matrix_block(&mut out, b);
        }
        let _ = writeln!(out, "  min eigenvalue {:.3e}, asymmetry {:.3e}", m.min_eigenvalue, m.asymmetry);
        if let Some(s) = &m.saturability {
            let _ = writeln!(out, "  Im tr[rho [L_i, L_j]] ({} route)", s.route);
            let im: Vec<Vec<f64>> = s.c.iter().map(|row| row.iter().map(|z| z[1]).collect()).collect();
            matrix_block(&mut out, &im);
            let verdict = if s.saturable { "saturable" } else { "not saturable" };
            let _ = writeln!(out, "  max |C| = {:.3e} -> {verdict} (tol {:.0e})", s.max_abs, s.tol);
        }
    }
    let _ = writeln!(out);
    match &r.cross_check {
        Some(c) => {
            let _ = writeln!(
                out,
                "cross-check  max |H_a - H_b| = {:.3e} ({} vs {}, {} pairs)",
                c.max_discrepancy, c.pair[0], c.pair[1], c.compared_pairs
            );
        }
        None => {
            let _ = writeln!(out, "cross-check  (single method)");
        }
    }
    out
}
