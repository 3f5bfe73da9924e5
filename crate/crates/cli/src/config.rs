//! TOML run configuration and its validation.
//!
//! ```toml
//! [model]
//! alpha = 0.015                       # or { times = [0, 0.5], values = [0.01, 0.02] }
//! beta = 0.4
//! sigma = 0.5
//! ell = 1.5
//! sigma_j = 0.5
//! r = 0.04
//! s0 = 50.0
//! maturity = 1.0
//!
//! [payoff]
//! kind = "call"                       # call | put | table
//! strike = 45.0                       # call and put
//! # points = [[0.0, 0.0], [100.0, 55.0]]   # table
//!
//! [grid]
//! x_left = -2.5
//! x_right = 2.5
//! n_space = 1000
//! n_time = 500
//! # b_left = -3.125                   # jump truncation, default ±6σ_J
//! # b_right = 3.0
//! # drift_form = "derived"            # derived | paper_fds | paper_ca
//! # boundary = "dirichlet_zero"       # dirichlet_zero | dirichlet_payoff
//! ```

use serde::{Deserialize, Serialize};

use pricecap_core::discretization::{DriftForm, Grid, GridSpec};
use pricecap_core::model::{validate_params, ModelParams, Payoff, TimeFunction, DEFAULT_SIGMA_MIN};
use pricecap_core::solver::{BoundaryMode, SchemeOptions};

/// One problem with the configuration, named by its dotted key.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        FieldError {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: Option<RawModel>,
    payoff: Option<RawPayoff>,
    grid: Option<RawGrid>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawTimeFunction {
    Scalar(f64),
    Table(RawTable),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    times: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    alpha: Option<RawTimeFunction>,
    beta: Option<RawTimeFunction>,
    sigma: Option<RawTimeFunction>,
    ell: Option<f64>,
    sigma_j: Option<f64>,
    r: Option<f64>,
    s0: Option<f64>,
    maturity: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPayoff {
    kind: Option<String>,
    strike: Option<f64>,
    points: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    x_left: Option<f64>,
    x_right: Option<f64>,
    n_space: Option<usize>,
    n_time: Option<usize>,
    b_left: Option<f64>,
    b_right: Option<f64>,
    drift_form: Option<String>,
    boundary: Option<String>,
}

/// A fully validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelParams,
    pub payoff: Payoff,
    pub grid: GridSpec,
    pub options: SchemeOptions,
}

impl RunConfig {
    /// Table 2 parameters, a call struck at 45 and the Table 1 grid.
    pub fn table12() -> Self {
        RunConfig {
            model: ModelParams::reference(),
            payoff: Payoff::call(45.0).expect("positive strike"),
            grid: GridSpec::reference(),
            options: SchemeOptions::default(),
        }
    }
}

/// Collects missing-key errors while reading optional fields.
struct Reader<'a> {
    section: &'static str,
    errors: &'a mut Vec<FieldError>,
}

impl Reader<'_> {
    fn require<T>(&mut self, key: &str, value: Option<T>) -> Option<T> {
        if value.is_none() {
            self.errors.push(FieldError::new(
                format!("{}.{key}", self.section),
                "required key is missing",
            ));
        }
        value
    }
}

fn time_function(
    field: &str,
    raw: RawTimeFunction,
    errors: &mut Vec<FieldError>,
) -> Option<TimeFunction> {
    match raw {
        RawTimeFunction::Scalar(v) => Some(TimeFunction::constant(v)),
        RawTimeFunction::Table(t) => match TimeFunction::piecewise(t.times, t.values) {
            Ok(tf) => Some(tf),
            Err(e) => {
                errors.push(FieldError::new(format!("model.{field}"), e.to_string()));
                None
            }
        },
    }
}

fn read_model(raw: Option<RawModel>, errors: &mut Vec<FieldError>) -> Option<ModelParams> {
    let Some(raw) = raw else {
        errors.push(FieldError::new("model", "required section is missing"));
        return None;
    };
    let mut rd = Reader {
        section: "model",
        errors,
    };
    let alpha = rd.require("alpha", raw.alpha);
    let beta = rd.require("beta", raw.beta);
    let sigma = rd.require("sigma", raw.sigma);
    let ell = rd.require("ell", raw.ell);
    let sigma_j = rd.require("sigma_j", raw.sigma_j);
    let r = rd.require("r", raw.r);
    let s0 = rd.require("s0", raw.s0);
    let maturity = rd.require("maturity", raw.maturity);

    let alpha = alpha.and_then(|v| time_function("alpha", v, errors));
    let beta = beta.and_then(|v| time_function("beta", v, errors));
    let sigma = sigma.and_then(|v| time_function("sigma", v, errors));
    let m = ModelParams {
        alpha: alpha?,
        beta: beta?,
        sigma: sigma?,
        ell: ell?,
        sigma_j: sigma_j?,
        r: r?,
        s0: s0?,
        maturity: maturity?,
        sigma_min: DEFAULT_SIGMA_MIN,
    };
    let report = validate_params(&m);
    if !report.is_ok() {
        errors.extend(
            report
                .violations
                .into_iter()
                .map(|v| FieldError::new(format!("model.{}", v.field), v.rule)),
        );
        return None;
    }
    Some(m)
}

fn read_payoff(raw: Option<RawPayoff>, errors: &mut Vec<FieldError>) -> Option<Payoff> {
    let Some(raw) = raw else {
        errors.push(FieldError::new("payoff", "required section is missing"));
        return None;
    };
    let kind = Reader {
        section: "payoff",
        errors,
    }
    .require("kind", raw.kind)?;
    let built = match kind.as_str() {
        "call" | "put" => {
            let Some(strike) = raw.strike else {
                errors.push(FieldError::new(
                    "payoff.strike",
                    format!("required for kind = \"{kind}\""),
                ));
                return None;
            };
            if raw.points.is_some() {
                errors.push(FieldError::new(
                    "payoff.points",
                    "only allowed for kind = \"table\"",
                ));
                return None;
            }
            if kind == "call" {
                Payoff::call(strike)
            } else {
                Payoff::put(strike)
            }
            .map_err(|e| FieldError::new("payoff.strike", e.to_string()))
        }
        "table" => {
            let Some(points) = raw.points else {
                errors.push(FieldError::new(
                    "payoff.points",
                    "required for kind = \"table\"",
                ));
                return None;
            };
            if raw.strike.is_some() {
                errors.push(FieldError::new(
                    "payoff.strike",
                    "not allowed for kind = \"table\"",
                ));
                return None;
            }
            Payoff::table(points.into_iter().map(|[s, h]| (s, h)).collect())
                .map_err(|e| FieldError::new("payoff.points", e.to_string()))
        }
        other => Err(FieldError::new(
            "payoff.kind",
            format!("unknown payoff kind `{other}` (expected call, put or table)"),
        )),
    };
    built.map_err(|e| errors.push(e)).ok()
}

fn read_grid(
    raw: Option<RawGrid>,
    errors: &mut Vec<FieldError>,
) -> Option<(GridSpec, DriftForm, BoundaryMode)> {
    let Some(raw) = raw else {
        errors.push(FieldError::new("grid", "required section is missing"));
        return None;
    };
    let mut rd = Reader {
        section: "grid",
        errors,
    };
    let x_left = rd.require("x_left", raw.x_left);
    let x_right = rd.require("x_right", raw.x_right);
    let n_space = rd.require("n_space", raw.n_space);
    let n_time = rd.require("n_time", raw.n_time);
    let drift_form = match raw.drift_form.as_deref().map(str::parse::<DriftForm>) {
        None => Some(DriftForm::default()),
        Some(Ok(d)) => Some(d),
        Some(Err(e)) => {
            errors.push(FieldError::new("grid.drift_form", e.to_string()));
            None
        }
    };
    let boundary = match raw.boundary.as_deref().map(str::parse::<BoundaryMode>) {
        None => Some(BoundaryMode::default()),
        Some(Ok(b)) => Some(b),
        Some(Err(e)) => {
            errors.push(FieldError::new("grid.boundary", e));
            None
        }
    };
    let mut spec = GridSpec::new(x_left?, x_right?, n_space?, n_time?);
    match (raw.b_left, raw.b_right) {
        (Some(bl), Some(br)) => spec = spec.with_truncation(bl, br),
        (None, None) => {}
        (Some(_), None) => {
            errors.push(FieldError::new(
                "grid.b_right",
                "required when grid.b_left is given",
            ));
            return None;
        }
        (None, Some(_)) => {
            errors.push(FieldError::new(
                "grid.b_left",
                "required when grid.b_right is given",
            ));
            return None;
        }
    }
    Some((spec, drift_form?, boundary?))
}

/// Parses and validates a configuration, reporting every problem found.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<FieldError>> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        vec![FieldError::new(
            "config",
            e.message().to_string() + &span_suffix(text, e.span()),
        )]
    })?;
    let mut errors = Vec::new();
    let model = read_model(raw.model, &mut errors);
    let payoff = read_payoff(raw.payoff, &mut errors);
    let grid = read_grid(raw.grid, &mut errors);
    if let (Some(m), Some((spec, _, _))) = (&model, &grid) {
        if let Err(e) = Grid::new(spec, m.maturity) {
            errors.push(FieldError::new("grid", e.to_string()));
        }
    }
    match (model, payoff, grid) {
        (Some(model), Some(payoff), Some((grid, drift_form, boundary))) if errors.is_empty() => {
            Ok(RunConfig {
                model,
                payoff,
                grid,
                options: SchemeOptions {
                    drift_form,
                    boundary,
                    ..SchemeOptions::default()
                },
            })
        }
        _ => Err(errors),
    }
}

fn span_suffix(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) => {
            let line = text[..r.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        None => String::new(),
    }
}
