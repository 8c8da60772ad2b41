//! Scenario files: a TOML description of a Gaussian state family, the
//! parameter point to evaluate it at, and the estimators to run.
//!
//! ```toml
//! schema = 1
//! name = "squeezed_thermal"
//! modes = 1
//! methods = ["mixed", "limit"]
//!
//! [initial_state]
//! kind = "thermal"
//! beta = ["beta"]
//!
//! [[steps]]
//! gate = "squeeze"
//! modes = [0]
//! params = ["r"]
//!
//! [[parameters]]
//! name = "beta"
//! value = 1.0986122886681098
//!
//! [[parameters]]
//! name = "r"
//! value = 1.0
//!
//! [options]
//! target_abs_error = 0.01
//! ```

use std::collections::HashSet;
use std::path::Path;

use gqfim::family::{BundleOptions, DerivativeSource, Param, Temperature};
use gqfim::gaussian_catalog::GateKind;
use gqfim::qfim::{Method, QfimOptions};
use gqfim::{ChannelFamily, StateFamily};
use serde::Deserialize;

pub const SCHEMA_VERSION: u32 = 1;

/// Scenarios shipped inside the binary.
pub const BUNDLED: &[(&str, &str)] = &[
    ("squeezed_thermal", include_str!("../scenarios/squeezed_thermal.scn")),
    ("coherent_squeeze_phase", include_str!("../scenarios/coherent_squeeze_phase.scn")),
    ("tmsv_full", include_str!("../scenarios/tmsv_full.scn")),
    ("tmsv_reduced", include_str!("../scenarios/tmsv_reduced.scn")),
    ("two_mode_mixed", include_str!("../scenarios/two_mode_mixed.scn")),
];

/// A number or the name of an estimation parameter.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Symbol(String),
}

impl Value {
    fn to_param(&self) -> Param {
        match self {
            Value::Number(x) => Param::Literal(*x),
            Value::Symbol(s) => Param::Symbol(s.clone()),
        }
    }

    fn symbol(&self) -> Option<&str> {
        match self {
            Value::Symbol(s) => Some(s),
            Value::Number(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    Vacuum,
    /// One entry per mode, either `lambda` (symplectic eigenvalues) or `beta`.
    Thermal {
        lambda: Option<Vec<Value>>,
        beta: Option<Vec<Value>>,
    },
    /// Vacuum displaced by `[re, im]` per mode.
    Coherent { alpha: Vec<[Value; 2]> },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub gate: String,
    pub modes: Vec<usize>,
    pub params: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameter {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    pub target_abs_error: Option<f64>,
    pub pure_tol: Option<f64>,
    pub sat_tol: Option<f64>,
    pub extrap_tol: Option<f64>,
    pub nu_schedule: Option<Vec<f64>>,
    pub fd_steps: Option<Vec<f64>>,
    /// "auto" or "finite_difference".
    pub derivatives: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub name: String,
    pub description: Option<String>,
    pub modes: usize,
    pub initial_state: InitialState,
    #[serde(default)]
    pub steps: Vec<Step>,
    /// Modes kept after the channel; the rest are traced out.
    pub keep: Option<Vec<usize>>,
    pub parameters: Vec<Parameter>,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default)]
    pub options: Options,
}

fn default_methods() -> Vec<String> {
    vec!["auto".to_string()]
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

/// Reads a scenario from a path, or from the bundled set when `source` names one.
pub fn load(source: &str) -> Result<(String, Scenario), ScenarioError> {
    let text = if Path::new(source).exists() {
        std::fs::read_to_string(source).map_err(|e| ScenarioError::Io { path: source.to_string(), source: e })?
    } else if let Some((_, text)) = BUNDLED.iter().find(|(name, _)| *name == source || format!("{name}.scn") == source) {
        text.to_string()
    } else {
        return Err(ScenarioError::Io {
            path: source.to_string(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or bundled scenario"),
        });
    };
    let sc = parse(&text)?;
    Ok((text, sc))
}

pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
    toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string().trim_end().to_string()))
}

impl Scenario {
    pub fn param_names(&self) -> Vec<&str> {
        self.parameters.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn point(&self) -> Vec<f64> {
        self.parameters.iter().map(|p| p.value).collect()
    }

    /// Requested methods in order, duplicates removed.
    pub fn methods(&self) -> Result<Vec<Method>, ScenarioError> {
        parse_methods(self.methods.iter().map(String::as_str))
    }

    /// Every schema violation, without building anything.
    pub fn schema_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.schema != SCHEMA_VERSION {
            out.push(format!("schema: unsupported version {} (expected {SCHEMA_VERSION})", self.schema));
        }
        if self.modes == 0 {
            out.push("modes: must be at least 1".into());
        }
        let mut names = HashSet::new();
        for p in &self.parameters {
            if !names.insert(p.name.as_str()) {
                out.push(format!("parameters: `{}` declared twice", p.name));
            }
            if !p.value.is_finite() {
                out.push(format!("parameters: `{}` has a non-finite value", p.name));
            }
        }
        if self.parameters.is_empty() {
            out.push("parameters: at least one parameter is required".into());
        }
        let check_value = |v: &Value, at: &str, out: &mut Vec<String>| {
            if let Some(s) = v.symbol() {
                if !names.contains(s) {
                    out.push(format!("{at}: undefined parameter symbol `{s}`"));
                }
            }
        };
        match &self.initial_state {
            InitialState::Vacuum => {}
            InitialState::Thermal { lambda, beta } => match (lambda, beta) {
                (Some(v), None) | (None, Some(v)) => {
                    if v.len() != self.modes {
                        out.push(format!("initial_state: {} entries for {} modes", v.len(), self.modes));
                    }
                    for x in v {
                        check_value(x, "initial_state", &mut out);
                    }
                }
                _ => out.push("initial_state: thermal needs exactly one of `lambda` or `beta`".into()),
            },
            InitialState::Coherent { alpha } => {
                if alpha.len() != self.modes {
                    out.push(format!("initial_state: {} entries for {} modes", alpha.len(), self.modes));
                }
                for x in alpha.iter().flatten() {
                    check_value(x, "initial_state", &mut out);
                }
            }
        }
        for (k, step) in self.steps.iter().enumerate() {
            let at = format!("steps[{k}]");
            match GateKind::from_name(&step.gate) {
                None => {
                    let known: Vec<_> = GateKind::ALL.iter().map(|g| g.name()).collect();
                    out.push(format!("{at}: unknown gate `{}` (known: {})", step.gate, known.join(", ")));
                }
                Some(kind) => {
                    if step.modes.len() != kind.arity() {
                        out.push(format!("{at}: {} acts on {} mode(s), got {}", kind.name(), kind.arity(), step.modes.len()));
                    }
                    if step.params.is_empty() || step.params.len() > kind.param_names().len() {
                        out.push(format!(
                            "{at}: {} takes 1..={} parameters ({})",
                            kind.name(),
                            kind.param_names().len(),
                            kind.param_names().join(", ")
                        ));
                    }
                }
            }
            for &m in &step.modes {
                if m >= self.modes {
                    out.push(format!("{at}: mode {m} out of range for {} modes", self.modes));
                }
            }
            let distinct: HashSet<_> = step.modes.iter().collect();
            if distinct.len() != step.modes.len() {
                out.push(format!("{at}: repeated mode indices {:?}", step.modes));
            }
            for v in &step.params {
                check_value(v, &at, &mut out);
            }
        }
        if let Some(keep) = &self.keep {
            if keep.is_empty() {
                out.push("keep: at least one mode must be kept".into());
            }
            for &m in keep {
                if m >= self.modes {
                    out.push(format!("keep: mode {m} out of range for {} modes", self.modes));
                }
            }
        }
        if let Err(ScenarioError::Invalid(v)) = self.methods() {
            out.extend(v);
        }
        let o = &self.options;
        for (name, v) in [("target_abs_error", o.target_abs_error), ("pure_tol", o.pure_tol), ("sat_tol", o.sat_tol), ("extrap_tol", o.extrap_tol)] {
            if let Some(x) = v {
                if !(x > 0.0 && x.is_finite()) {
                    out.push(format!("options.{name}: must be positive"));
                }
            }
        }
        if let Some(nu) = &o.nu_schedule {
            if nu.len() < 2 || nu.iter().any(|&h| !(h > 0.0)) {
                out.push("options.nu_schedule: needs at least two positive offsets".into());
            }
        }
        if let Some(steps) = &o.fd_steps {
            if steps.len() != self.parameters.len() || steps.iter().any(|&h| !(h > 0.0)) {
                out.push("options.fd_steps: one positive step per parameter".into());
            }
        }
        if let Some(d) = &o.derivatives {
            if d != "auto" && d != "finite_difference" {
                out.push(format!("options.derivatives: `{d}` is not `auto` or `finite_difference`"));
            }
        }
        out
    }

    /// Builds the family; call after `schema_violations` came back empty.
    pub fn family(&self) -> gqfim::Result<ChannelFamily> {
        let names = self.param_names();
        let mut fam = match &self.initial_state {
            InitialState::Vacuum => ChannelFamily::vacuum(&names, self.modes)?,
            InitialState::Thermal { lambda: Some(v), .. } => {
                ChannelFamily::new(&names, v.iter().map(|x| Temperature::Lambda(x.to_param())).collect())?
            }
            InitialState::Thermal { beta: Some(v), .. } => {
                ChannelFamily::new(&names, v.iter().map(|x| Temperature::Beta(x.to_param())).collect())?
            }
            InitialState::Thermal { .. } => {
                return Err(gqfim::Error::InvalidArgument("thermal needs `lambda` or `beta`".into()))
            }
            InitialState::Coherent { alpha } => {
                let mut f = ChannelFamily::vacuum(&names, self.modes)?;
                for (m, [re, im]) in alpha.iter().enumerate() {
                    f = f.gate(GateKind::Displacement, &[m], vec![re.to_param(), im.to_param()])?;
                }
                f
            }
        };
        for step in &self.steps {
            let kind = GateKind::from_name(&step.gate)
                .ok_or_else(|| gqfim::Error::InvalidArgument(format!("unknown gate `{}`", step.gate)))?;
            fam = fam.gate(kind, &step.modes, step.params.iter().map(Value::to_param).collect())?;
        }
        if let Some(keep) = &self.keep {
            fam = fam.keep(keep)?;
        }
        Ok(fam)
    }

    /// Schema violations, then construction and physicality problems at the evaluation point.
    pub fn violations(&self) -> Vec<String> {
        let mut out = self.schema_violations();
        if !out.is_empty() {
            return out;
        }
        match self.family() {
            Err(e) => out.push(format!("family: {e}")),
            Ok(f) => match f.state(&self.point()) {
                Ok(st) => out.extend(
                    st.validate(Default::default()).iter().map(|v| format!("state: {} violation: {v}", v.kind())),
                ),
                Err(e @ gqfim::Error::Unphysical(_)) => out.push(format!("state: physicality violation: {e}")),
                Err(e) => out.push(format!("state: {e}")),
            },
        }
        out
    }

    pub fn qfim_options(&self, target: Option<f64>, pure_tol: Option<f64>) -> QfimOptions {
        let o = &self.options;
        let mut q = QfimOptions::default();
        if let Some(x) = target.or(o.target_abs_error) {
            q.target = x;
        }
        if let Some(x) = pure_tol.or(o.pure_tol) {
            q.pure_tol = x;
        }
        if let Some(x) = o.sat_tol {
            q.sat_tol = x;
        }
        if let Some(x) = o.extrap_tol {
            q.extrap_tol = x;
        }
        if let Some(x) = &o.nu_schedule {
            q.nu_offsets = x.clone();
        }
        q
    }

    pub fn bundle_options(&self, methods: &[Method]) -> BundleOptions {
        let mut b = BundleOptions::default();
        b.hessians = methods.contains(&Method::Cqfim);
        b.fd_steps = self.options.fd_steps.clone();
        if self.options.derivatives.as_deref() == Some("finite_difference") {
            b.derivatives = DerivativeSource::FiniteDifference;
        }
        b
    }
}

pub fn parse_methods<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<Vec<Method>, ScenarioError> {
    let mut out = Vec::new();
    let mut bad = Vec::new();
    for n in names {
        match n.trim().parse::<Method>() {
            Ok(m) if !out.contains(&m) => out.push(m),
            Ok(_) => {}
            Err(_) => {
                let known: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
                bad.push(format!("methods: unknown method `{}` (known: {})", n.trim(), known.join(", ")));
            }
        }
    }
    if !bad.is_empty() {
        return Err(ScenarioError::Invalid(bad));
    }
    if out.is_empty() {
        return Err(ScenarioError::Invalid(vec!["methods: at least one method is required".into()]));
    }
    Ok(out)
}
