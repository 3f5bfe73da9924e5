//! Side-by-side comparison of the PIDE price at `(t = 0, S = S₀)` with the
//! Black–Scholes and Merton closed forms and with the Monte Carlo estimate.

use std::io::{self, Write};

use thiserror::Error;

use crate::discretization::GridSpec;
use crate::model::{ModelParams, Payoff, TimeFunction};
use crate::montecarlo::{black_scholes_call, mc_price, merton_call, McConfig, McError};
use crate::par::Execution;
use crate::solver::{price_surface, BoundaryMode, SchemeOptions, SolverError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("oracle checks need a call payoff")]
    NotACall,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    MonteCarlo(#[from] McError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSettings {
    /// Grid for the two closed-form cases.
    pub closed_form_grid: GridSpec,
    /// Grid for the full-model case.
    pub mc_grid: GridSpec,
    pub boundary: BoundaryMode,
    pub merton_terms: usize,
    pub mc: McConfig,
    pub bs_rel_tol: f64,
    pub merton_rel_tol: f64,
    /// Allowed distance to the Monte Carlo price, in standard errors.
    pub mc_std_errors: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            closed_form_grid: GridSpec::new(-2.5, 2.5, 1000, 500),
            mc_grid: GridSpec::new(-4.0, 4.0, 2000, 1000),
            boundary: BoundaryMode::DirichletPayoff,
            merton_terms: 50,
            mc: McConfig::new(100_000, 256, 42),
            bs_rel_tol: 0.01,
            merton_rel_tol: 0.015,
            mc_std_errors: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub case: &'static str,
    pub pide: f64,
    pub oracle: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    /// Largest `abs_err` that passes.
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleRow {
    fn new(case: &'static str, pide: f64, oracle: f64, tolerance: f64) -> Self {
        let abs_err = (pide - oracle).abs();
        OracleRow {
            case,
            pide,
            oracle,
            abs_err,
            rel_err: abs_err / oracle.abs(),
            tolerance,
            pass: abs_err <= tolerance,
        }
    }
}

/// Root-mean-square volatility over `[0, T]`; exact for Black–Scholes with a
/// deterministic time-dependent volatility.
fn rms_sigma(m: &ModelParams) -> f64 {
    (m.sigma.integral_of_square(0.0, m.maturity) / m.maturity).sqrt()
}

/// `m` with `β = 0` and `α = r`, which makes the model a Merton model.
fn without_mean_reversion(m: &ModelParams, ell: f64) -> ModelParams {
    let mut d = m.clone();
    d.alpha = TimeFunction::constant(m.r);
    d.beta = TimeFunction::constant(0.0);
    d.ell = ell;
    d
}

/// Runs the three comparisons. The model supplies `σ`, `σ_J`, `ℓ`, `r`,
/// `S₀` and `T`; the closed-form cases replace `α` by `r` and drop `β`.
pub fn oracle_check(
    m: &ModelParams,
    payoff: &Payoff,
    settings: &OracleSettings,
    execution: Execution,
) -> Result<Vec<OracleRow>, OracleError> {
    let strike = match payoff {
        Payoff::Call { strike } => *strike,
        _ => return Err(OracleError::NotACall),
    };
    let opts = SchemeOptions::default()
        .with_boundary(settings.boundary)
        .with_execution(execution);
    let pide_at_spot = |model: &ModelParams, spec: &GridSpec| -> Result<f64, SolverError> {
        price_surface(model, payoff, spec, opts)?.price_at(0.0, model.s0)
    };
    let (s0, r, tau) = (m.s0, m.r, m.maturity);
    let sigma = rms_sigma(m);

    let bs_model = without_mean_reversion(m, 0.0);
    let bs = black_scholes_call(s0, strike, r, sigma, tau);
    let bs_pide = pide_at_spot(&bs_model, &settings.closed_form_grid)?;

    let merton_model = without_mean_reversion(m, m.ell);
    let merton = merton_call(
        s0,
        strike,
        r,
        sigma,
        m.sigma_j,
        m.ell,
        tau,
        settings.merton_terms,
    );
    let merton_pide = pide_at_spot(&merton_model, &settings.closed_form_grid)?;

    let full_pide = pide_at_spot(m, &settings.mc_grid)?;
    let est = mc_price(m, payoff, s0, 0.0, &settings.mc, execution)?;

    Ok(vec![
        OracleRow::new("black_scholes", bs_pide, bs, settings.bs_rel_tol * bs.abs()),
        OracleRow::new(
            "merton",
            merton_pide,
            merton,
            settings.merton_rel_tol * merton.abs(),
        ),
        OracleRow::new(
            "full_model_mc",
            full_pide,
            est.price,
            settings.mc_std_errors * est.std_error,
        ),
    ])
}

/// CSV with header `case,pide,oracle,abs_err,rel_err,pass`.
pub fn write_csv<W: Write>(rows: &[OracleRow], mut out: W) -> io::Result<()> {
    writeln!(out, "case,pide,oracle,abs_err,rel_err,pass")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.case, r.pide, r.oracle, r.abs_err, r.rel_err, r.pass
        )?;
    }
    Ok(())
}
