//! One-dimensional cuts of the price surface: price against spot at fixed
//! remaining times, against remaining time at fixed spots, and against strike.

use std::io::{self, Write};

use thiserror::Error;

use crate::discretization::GridSpec;
use crate::model::{ModelError, ModelParams, Payoff};
use crate::solver::{price_surface, SchemeOptions, Solution, SolverError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SliceError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("strike slices need a call or put payoff")]
    NoStrike,
    #[error("remaining time {tau} is outside [0, {maturity}]")]
    RemainingTimeOutOfRange { tau: f64, maturity: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceMode {
    VsSpotAtTimes,
    VsTimeAtSpots,
    VsStrike,
}

impl std::str::FromStr for SliceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vs_spot_at_times" => Ok(SliceMode::VsSpotAtTimes),
            "vs_time_at_spots" => Ok(SliceMode::VsTimeAtSpots),
            "vs_strike" => Ok(SliceMode::VsStrike),
            other => Err(format!(
                "unknown slice mode `{other}` (expected vs_spot_at_times, vs_time_at_spots or vs_strike)"
            )),
        }
    }
}

/// A single curve with the coordinate held fixed along it.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    /// `remaining_time`, `S` or `K`.
    pub axis: &'static str,
    /// Name and value of the fixed coordinate, e.g. `("tau", 0.5)`.
    pub fixed: (&'static str, f64),
    pub points: Vec<(f64, f64)>,
}

impl Slice {
    /// CSV with header `<axis>,price`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{},price", self.axis)?;
        for (a, p) in &self.points {
            writeln!(out, "{a},{p}")?;
        }
        Ok(())
    }

    /// File stem naming the fixed coordinate, e.g. `tau_0.5`.
    pub fn file_stem(&self) -> String {
        format!("{}_{}", self.fixed.0, self.fixed.1)
    }
}

/// Price against every grid spot, one curve per remaining time `τ`.
pub fn vs_spot_at_times(sol: &Solution, remaining_times: &[f64]) -> Result<Vec<Slice>, SliceError> {
    let maturity = sol.model().maturity;
    let g = sol.grid();
    remaining_times
        .iter()
        .map(|&tau| {
            if !(0.0..=maturity).contains(&tau) {
                return Err(SliceError::RemainingTimeOutOfRange { tau, maturity });
            }
            let discount = (-sol.model().r * tau).exp();
            let points = (0..g.n_nodes())
                .map(|i| Ok((sol.spot(i), discount * sol.u_at(tau, g.x(i))?)))
                .collect::<Result<_, SolverError>>()?;
            Ok(Slice {
                axis: "S",
                fixed: ("tau", tau),
                points,
            })
        })
        .collect()
}

/// Price against every lattice remaining time, one curve per spot.
pub fn vs_time_at_spots(sol: &Solution, spots: &[f64]) -> Result<Vec<Slice>, SliceError> {
    let maturity = sol.model().maturity;
    let g = sol.grid();
    spots
        .iter()
        .map(|&s| {
            let points = (0..=g.n_time)
                .map(|n| {
                    let tau = g.tau(n);
                    Ok((tau, sol.price_at(maturity - tau, s)?))
                })
                .collect::<Result<_, SolverError>>()?;
            Ok(Slice {
                axis: "remaining_time",
                fixed: ("S", s),
                points,
            })
        })
        .collect()
}

/// Price at `(t, spot)` against strike, re-solving for each `K`.
pub fn vs_strike(
    m: &ModelParams,
    p: &Payoff,
    spec: &GridSpec,
    opts: SchemeOptions,
    strikes: &[f64],
    spot: f64,
    t: f64,
) -> Result<Slice, SliceError> {
    if p.strike().is_none() {
        return Err(SliceError::NoStrike);
    }
    let payoffs = strikes
        .iter()
        .map(|&k| p.with_strike(k))
        .collect::<Result<Vec<_>, _>>()?;
    let prices = opts.execution.map_items(&payoffs, |pk| {
        price_surface(m, pk, spec, opts).and_then(|sol| sol.price_at(t, spot))
    });
    let points = strikes
        .iter()
        .zip(prices)
        .map(|(&k, price)| Ok((k, price?)))
        .collect::<Result<_, SolverError>>()?;
    Ok(Slice {
        axis: "K",
        fixed: ("S", spot),
        points,
    })
}
