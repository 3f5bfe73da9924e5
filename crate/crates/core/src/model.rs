//! The spot-price model: time-dependent coefficients, the log-normal jump
//! law, payoffs and parameter validation.
//!
//! Under the risk-neutral measure the spot follows
//!
//! ```text
//! dS = (α(t) S − β(t)) dt + σ(t) S dW + (J − 1) S dq
//! ```
//!
//! with `q` a Poisson process of intensity `ell` and `ln J ~ N(−σ_J²/2, σ_J²)`,
//! so `E[J] = 1`. The mean of `ln J` is always derived from `sigma_j`.

use std::fmt;

use thiserror::Error;

use crate::normal;

/// Smallest admissible volatility level.
pub const DEFAULT_SIGMA_MIN: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("time {t} is outside [0, {maturity}]")]
    TimeOutOfDomain { t: f64, maturity: f64 },
    #[error("spot {0} is negative")]
    NegativeSpot(f64),
    #[error("invalid time function: {0}")]
    InvalidTimeFunction(String),
    #[error("invalid payoff: {0}")]
    InvalidPayoff(String),
    #[error("invalid model parameters: {0}")]
    Invalid(ValidationReport),
}

/// A coefficient that is either constant or piecewise-constant in calendar
/// time (right-continuous at breakpoints).
#[derive(Debug, Clone, PartialEq)]
pub enum TimeFunction {
    Constant(f64),
    Piecewise { times: Vec<f64>, values: Vec<f64> },
}

impl TimeFunction {
    pub fn constant(value: f64) -> Self {
        TimeFunction::Constant(value)
    }

    /// Builds a piecewise-constant table. Breakpoints must start at 0 and be
    /// strictly increasing; `values[k]` applies on `[times[k], times[k+1])`.
    pub fn piecewise(times: Vec<f64>, values: Vec<f64>) -> Result<Self, ModelError> {
        if times.is_empty() || times.len() != values.len() {
            return Err(ModelError::InvalidTimeFunction(format!(
                "need equally many breakpoints and values (got {} and {})",
                times.len(),
                values.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(ModelError::InvalidTimeFunction(
                "first breakpoint must be 0".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ModelError::InvalidTimeFunction(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if values.iter().chain(&times).any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidTimeFunction("non-finite entry".into()));
        }
        Ok(TimeFunction::Piecewise { times, values })
    }

    /// Value at `t`, checked against `[0, maturity]`.
    pub fn eval(&self, t: f64, maturity: f64) -> Result<f64, ModelError> {
        if !(0.0..=maturity).contains(&t) {
            return Err(ModelError::TimeOutOfDomain { t, maturity });
        }
        Ok(self.value_at(t))
    }

    /// Unchecked lookup; times past the last breakpoint take the last value.
    pub(crate) fn value_at(&self, t: f64) -> f64 {
        match self {
            TimeFunction::Constant(v) => *v,
            TimeFunction::Piecewise { times, values } => {
                let k = times.partition_point(|&s| s <= t);
                values[k.saturating_sub(1)]
            }
        }
    }

    /// Breakpoints strictly inside `(a, b)`.
    pub(crate) fn breakpoints_in(&self, a: f64, b: f64) -> Vec<f64> {
        match self {
            TimeFunction::Constant(_) => Vec::new(),
            TimeFunction::Piecewise { times, .. } => {
                times.iter().copied().filter(|&s| s > a && s < b).collect()
            }
        }
    }

    /// Exact ∫_a^b of the function.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.integral_of(a, b, |v| v)
    }

    /// Exact ∫_a^b of the squared function.
    pub fn integral_of_square(&self, a: f64, b: f64) -> f64 {
        self.integral_of(a, b, |v| v * v)
    }

    fn integral_of(&self, a: f64, b: f64, g: impl Fn(f64) -> f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match self {
            TimeFunction::Constant(v) => g(*v) * (b - a),
            TimeFunction::Piecewise { times, values } => {
                let mut total = 0.0;
                for k in 0..times.len() {
                    let lo = times[k].max(a);
                    let hi = times.get(k + 1).copied().unwrap_or(f64::INFINITY).min(b);
                    if hi > lo {
                        total += g(values[k]) * (hi - lo);
                    }
                }
                total
            }
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            TimeFunction::Constant(v) => std::slice::from_ref(v),
            TimeFunction::Piecewise { values, .. } => values,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn min_value(&self) -> f64 {
        self.values().iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn last_breakpoint(&self) -> f64 {
        match self {
            TimeFunction::Constant(_) => 0.0,
            TimeFunction::Piecewise { times, .. } => *times.last().unwrap_or(&0.0),
        }
    }
}

impl From<f64> for TimeFunction {
    fn from(v: f64) -> Self {
        TimeFunction::Constant(v)
    }
}

/// Model coefficients. Times are calendar times in years, `t ∈ [0, maturity]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Proportional drift α(t) = inflation − efficiency factor (1/year).
    pub alpha: TimeFunction,
    /// Additive drift β(t) = subsidy + quality penalties − uncontrollable cost
    /// (currency/year).
    pub beta: TimeFunction,
    /// Diffusion volatility σ(t) (1/√year).
    pub sigma: TimeFunction,
    /// Jump intensity (1/year).
    pub ell: f64,
    /// Standard deviation of ln J.
    pub sigma_j: f64,
    /// Discount rate (1/year).
    pub r: f64,
    pub s0: f64,
    pub maturity: f64,
    /// Floor enforced on σ(t) by [`validate_params`].
    pub sigma_min: f64,
}

impl ModelParams {
    /// Constant-coefficient model.
    #[allow(clippy::too_many_arguments)]
    pub fn constant(
        alpha: f64,
        beta: f64,
        sigma: f64,
        ell: f64,
        sigma_j: f64,
        r: f64,
        s0: f64,
        maturity: f64,
    ) -> Self {
        ModelParams {
            alpha: alpha.into(),
            beta: beta.into(),
            sigma: sigma.into(),
            ell,
            sigma_j,
            r,
            s0,
            maturity,
            sigma_min: DEFAULT_SIGMA_MIN,
        }
    }

    /// The constant parameter set used in the published numerical section:
    /// α = 0.015, β = 0.4, σ = 0.5, σ_J = 0.5, ℓ = 1.5, r = 0.04, S₀ = 50, T = 1.
    pub fn reference() -> Self {
        Self::constant(0.015, 0.4, 0.5, 1.5, 0.5, 0.04, 50.0, 1.0)
    }

    /// Mean of ln J, fixed by E[J] = 1.
    pub fn log_jump_mean(&self) -> f64 {
        -0.5 * self.sigma_j * self.sigma_j
    }

    pub fn alpha_at(&self, t: f64) -> Result<f64, ModelError> {
        self.alpha.eval(t, self.maturity)
    }

    pub fn beta_at(&self, t: f64) -> Result<f64, ModelError> {
        self.beta.eval(t, self.maturity)
    }

    pub fn sigma_at(&self, t: f64) -> Result<f64, ModelError> {
        self.sigma.eval(t, self.maturity)
    }

    /// Validates and returns `self`, or the full list of violations.
    pub fn validated(self) -> Result<Self, ModelError> {
        let report = validate_params(&self);
        if report.is_ok() {
            Ok(self)
        } else {
            Err(ModelError::Invalid(report))
        }
    }
}

/// One violated rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub rule: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: &'static str, rule: impl Into<String>) {
        self.violations.push(Violation {
            field,
            rule: rule.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .violations
            .iter()
            .map(|v| format!("{}: {}", v.field, v.rule))
            .collect();
        f.write_str(&parts.join("; "))
    }
}

/// Checks every model invariant and reports all violations; never fails.
pub fn validate_params(m: &ModelParams) -> ValidationReport {
    let mut report = ValidationReport::default();

    if !(m.maturity > 0.0 && m.maturity.is_finite()) {
        report.push("maturity", "must be > 0 and finite");
    }
    if !(m.s0 > 0.0 && m.s0.is_finite()) {
        report.push("s0", "must be > 0 and finite");
    }
    if !(m.ell >= 0.0 && m.ell.is_finite()) {
        report.push("ell", "must be >= 0 and finite");
    }
    if !(m.sigma_j > 0.0 && m.sigma_j.is_finite()) {
        report.push("sigma_j", "must be > 0 and finite");
    }
    if !m.r.is_finite() {
        report.push("r", "must be finite");
    }
    if !(m.sigma_min > 0.0) {
        report.push("sigma_min", "must be > 0");
    }

    for (field, tf) in [("alpha", &m.alpha), ("beta", &m.beta), ("sigma", &m.sigma)] {
        if tf.values().iter().any(|v| !v.is_finite()) {
            report.push(field, "values must be finite");
        }
        if let TimeFunction::Piecewise { times, values } = tf {
            if times.is_empty() || times.len() != values.len() {
                report.push(
                    field,
                    "breakpoints and values must have equal, nonzero length",
                );
            } else if times[0] != 0.0 {
                report.push(field, "first breakpoint must be 0");
            }
            if times.windows(2).any(|w| !(w[1] > w[0])) {
                report.push(field, "breakpoints must be strictly increasing");
            }
        }
        if m.maturity.is_finite() && tf.last_breakpoint() > m.maturity {
            report.push(field, "last breakpoint must be <= maturity");
        }
    }
    if m.sigma.min_value() < m.sigma_min {
        report.push(
            "sigma",
            format!("must be >= sigma_min = {} at all times", m.sigma_min),
        );
    }
    report
}

/// Density of ln J ~ N(−σ_J²/2, σ_J²) at `y`.
pub fn log_jump_density(sigma_j: f64, y: f64) -> f64 {
    normal::density(y, -0.5 * sigma_j * sigma_j, sigma_j)
}

/// Terminal payoff H(S).
#[derive(Debug, Clone, PartialEq)]
pub enum Payoff {
    Call {
        strike: f64,
    },
    Put {
        strike: f64,
    },
    /// Linear interpolation through `(S, H(S))` pairs sorted by S, constant
    /// beyond the end points.
    Table {
        points: Vec<(f64, f64)>,
    },
}

impl Payoff {
    pub fn call(strike: f64) -> Result<Self, ModelError> {
        Self::check_strike(strike)?;
        Ok(Payoff::Call { strike })
    }

    pub fn put(strike: f64) -> Result<Self, ModelError> {
        Self::check_strike(strike)?;
        Ok(Payoff::Put { strike })
    }

    pub fn table(points: Vec<(f64, f64)>) -> Result<Self, ModelError> {
        if points.is_empty() {
            return Err(ModelError::InvalidPayoff(
                "table needs at least one point".into(),
            ));
        }
        if points
            .iter()
            .any(|&(s, h)| !s.is_finite() || !h.is_finite())
        {
            return Err(ModelError::InvalidPayoff(
                "table entries must be finite".into(),
            ));
        }
        if points.iter().any(|&(_, h)| h < 0.0) {
            return Err(ModelError::InvalidPayoff(
                "payoff values must be >= 0".into(),
            ));
        }
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(ModelError::InvalidPayoff(
                "table spots must be strictly increasing".into(),
            ));
        }
        Ok(Payoff::Table { points })
    }

    /// Samples `f` at the given spots into a table payoff.
    pub fn tabulate(spots: &[f64], f: impl Fn(f64) -> f64) -> Result<Self, ModelError> {
        Self::table(spots.iter().map(|&s| (s, f(s))).collect())
    }

    fn check_strike(strike: f64) -> Result<(), ModelError> {
        if strike > 0.0 && strike.is_finite() {
            Ok(())
        } else {
            Err(ModelError::InvalidPayoff(format!(
                "strike {strike} must be > 0"
            )))
        }
    }

    /// H(S) for `S >= 0`.
    pub fn eval(&self, s: f64) -> Result<f64, ModelError> {
        if s < 0.0 {
            return Err(ModelError::NegativeSpot(s));
        }
        Ok(self.value(s))
    }

    /// H extended to any real argument (negative simulated spots included).
    pub fn value(&self, s: f64) -> f64 {
        match self {
            Payoff::Call { strike } => (s - strike).max(0.0),
            Payoff::Put { strike } => (strike - s).max(0.0),
            Payoff::Table { points } => {
                let k = points.partition_point(|&(x, _)| x <= s);
                if k == 0 {
                    return points[0].1;
                }
                if k == points.len() {
                    return points[k - 1].1;
                }
                let (x0, h0) = points[k - 1];
                if s == x0 {
                    return h0;
                }
                let (x1, h1) = points[k];
                h0 + (h1 - h0) * (s - x0) / (x1 - x0)
            }
        }
    }

    pub fn strike(&self) -> Option<f64> {
        match self {
            Payoff::Call { strike } | Payoff::Put { strike } => Some(*strike),
            Payoff::Table { .. } => None,
        }
    }

    /// sup over S ≥ 0 of |H(S)|, `None` when unbounded.
    pub fn sup_norm(&self) -> Option<f64> {
        match self {
            Payoff::Call { .. } => None,
            Payoff::Put { strike } => Some(*strike),
            Payoff::Table { points } => Some(points.iter().fold(0.0, |m, p| m.max(p.1.abs()))),
        }
    }

    /// Same payoff kind with a different strike; tables are returned unchanged.
    pub fn with_strike(&self, strike: f64) -> Result<Self, ModelError> {
        match self {
            Payoff::Call { .. } => Self::call(strike),
            Payoff::Put { .. } => Self::put(strike),
            Payoff::Table { .. } => Ok(self.clone()),
        }
    }
}
