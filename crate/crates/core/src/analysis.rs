//! Empirical error studies: grid refinement, domain localization and jump
//! truncation. Each family is measured against its own finest, widest or
//! least-truncated member.

use std::io::{self, Write};
use std::time::Instant;

use thiserror::Error;

use crate::discretization::{Grid, GridSpec};
use crate::model::{ModelParams, Payoff};
use crate::solver::{price_surface, SchemeOptions, Solution, SolverError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StudyError {
    #[error("a refinement study needs at least 3 levels (got {0})")]
    TooFewLevels(usize),
    #[error("a study needs at least one row")]
    Empty,
    #[error("study parameters must be strictly monotone (rows {0} and {1})")]
    NotMonotone(usize, usize),
    #[error("error values must be finite and >= 0 (row {0})")]
    BadError(usize),
    #[error("the localization study needs a bounded payoff")]
    UnboundedPayoff,
    #[error("width {width} is not a positive multiple of the space step {dx}")]
    WidthOffGrid { width: f64, dx: f64 },
    #[error("truncation level {0} must be > 0")]
    BadTruncation(f64),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyRow {
    pub param: f64,
    pub error: f64,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    /// Least-squares slope; see each study for the axes. NaN when fewer than
    /// two rows carry a positive error.
    pub fitted_rate: f64,
    pub reference_description: String,
    /// `max |u|` over the reference lattice.
    pub reference_scale: f64,
}

impl StudyReport {
    pub fn new(
        rows: Vec<StudyRow>,
        fitted_rate: f64,
        reference_description: String,
        reference_scale: f64,
    ) -> Result<Self, StudyError> {
        if rows.is_empty() {
            return Err(StudyError::Empty);
        }
        let step = |k: usize| {
            let d = rows[k + 1].param - rows[k].param;
            if d > 0.0 {
                1
            } else if d < 0.0 {
                -1
            } else {
                0
            }
        };
        for k in 0..rows.len().saturating_sub(1) {
            if step(k) == 0 || step(k) != step(0) {
                return Err(StudyError::NotMonotone(k, k + 1));
            }
        }
        if let Some(k) = rows
            .iter()
            .position(|r| !(r.error >= 0.0 && r.error.is_finite()))
        {
            return Err(StudyError::BadError(k));
        }
        Ok(StudyReport {
            rows,
            fitted_rate,
            reference_description,
            reference_scale,
        })
    }

    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }

    /// True when every error is strictly below the previous one.
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].error < w[0].error)
    }

    /// CSV with header `param,error,runtime_s` and a closing
    /// `# fitted_rate=<value>` line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "param,error,runtime_s")?;
        for r in &self.rows {
            writeln!(out, "{},{},{}", r.param, r.error, r.runtime_s)?;
        }
        writeln!(out, "# fitted_rate={}", self.fitted_rate)
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return f64::NAN;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Slope of `ln(error)` against `param` over rows with a positive error.
fn log_error_slope(rows: &[StudyRow]) -> f64 {
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.error > 0.0)
        .map(|r| (r.param, r.error.ln()))
        .unzip();
    fit_slope(&xs, &ys)
}

fn timed_solve(
    m: &ModelParams,
    p: &Payoff,
    spec: &GridSpec,
    opts: SchemeOptions,
) -> Result<(Solution, f64), SolverError> {
    let start = Instant::now();
    let sol = price_surface(m, p, spec, opts)?;
    Ok((sol, start.elapsed().as_secs_f64()))
}

fn solve_all(
    m: &ModelParams,
    p: &Payoff,
    specs: &[GridSpec],
    opts: SchemeOptions,
) -> Result<Vec<(Solution, f64)>, SolverError> {
    opts.execution
        .map_items(specs, |spec| timed_solve(m, p, spec, opts))
        .into_iter()
        .collect()
}

/// Solves on `base` refined `levels − 1` times (Δx and Δt halved together)
/// and measures the max-norm error at `τ = T` on the coarse nodes against the
/// finest level. Rows are indexed by Δx; `fitted_rate` is the slope of
/// `log₂ e` against `log₂ Δx`, i.e. the observed order.
pub fn refinement_study(
    m: &ModelParams,
    p: &Payoff,
    base: &GridSpec,
    levels: usize,
    opts: SchemeOptions,
) -> Result<StudyReport, StudyError> {
    if levels < 3 {
        return Err(StudyError::TooFewLevels(levels));
    }
    let specs: Vec<GridSpec> = (0..levels)
        .map(|k| GridSpec {
            n_space: base.n_space << k,
            n_time: base.n_time << k,
            ..*base
        })
        .collect();
    let solved = solve_all(m, p, &specs, opts)?;
    let (finest, _) = &solved[levels - 1];
    let fine_row = finest.row(finest.grid().n_time);

    let rows: Vec<StudyRow> = solved[..levels - 1]
        .iter()
        .enumerate()
        .map(|(k, (sol, secs))| {
            let stride = 1usize << (levels - 1 - k);
            let row = sol.row(sol.grid().n_time);
            let error = row
                .iter()
                .enumerate()
                .map(|(i, u)| (u - fine_row[i * stride]).abs())
                .fold(0.0, f64::max);
            StudyRow {
                param: sol.grid().dx,
                error,
                runtime_s: *secs,
            }
        })
        .collect();

    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.error > 0.0)
        .map(|r| (r.param.log2(), r.error.log2()))
        .unzip();
    let g = finest.grid();
    StudyReport::new(
        rows,
        fit_slope(&xs, &ys),
        format!(
            "finest level: N={}, M={} on ({}, {})",
            g.n_space, g.n_time, g.x_left, g.x_right
        ),
        finest.max_abs(),
    )
}

/// Solves on `(−w, w)` for each width with `Δx` fixed and `n_time` steps,
/// and measures the max error at `τ = T` over nodes with `|x| ≤ 0.2·w_min`
/// against the widest domain. `fitted_rate` is the slope of `ln e` against
/// `w` (rows with zero error are left out of the fit).
pub fn localization_study(
    m: &ModelParams,
    p: &Payoff,
    widths: &[f64],
    dx: f64,
    n_time: usize,
    opts: SchemeOptions,
) -> Result<StudyReport, StudyError> {
    if p.sup_norm().is_none() {
        return Err(StudyError::UnboundedPayoff);
    }
    if widths.is_empty() {
        return Err(StudyError::Empty);
    }
    for k in 1..widths.len() {
        if !(widths[k] > widths[k - 1]) {
            return Err(StudyError::NotMonotone(k - 1, k));
        }
    }
    let mut halves = Vec::with_capacity(widths.len());
    for &w in widths {
        let cells = w / dx;
        let k = cells.round();
        if !(dx > 0.0) || k < 1.0 || (cells - k).abs() > 1e-9 * cells.max(1.0) {
            return Err(StudyError::WidthOffGrid { width: w, dx });
        }
        halves.push(k as usize);
    }
    let specs: Vec<GridSpec> = widths
        .iter()
        .zip(&halves)
        .map(|(&w, &k)| GridSpec::new(-w, w, 2 * k, n_time))
        .collect();
    let solved = solve_all(m, p, &specs, opts)?;

    let reach = ((0.2 * widths[0]) / dx + 1e-9).floor() as usize;
    let k_ref = *halves.last().unwrap();
    let (reference, _) = solved.last().unwrap();
    let ref_row = reference.row(reference.grid().n_time);

    let rows: Vec<StudyRow> = solved
        .iter()
        .zip(&halves)
        .zip(widths)
        .map(|(((sol, secs), &k), &w)| {
            let row = sol.row(sol.grid().n_time);
            let error = (k - reach..=k + reach)
                .map(|i| (row[i] - ref_row[i + k_ref - k]).abs())
                .fold(0.0, f64::max);
            StudyRow {
                param: w,
                error,
                runtime_s: *secs,
            }
        })
        .collect();
    let slope = log_error_slope(&rows);
    StudyReport::new(
        rows,
        slope,
        format!(
            "widest domain (-{w}, {w}) with dx={dx}, M={n_time}; evaluated on |x| <= {}",
            0.2 * widths[0],
            w = widths.last().unwrap()
        ),
        reference.max_abs(),
    )
}

/// Solves on a fixed grid with truncation `B_l = −(Bσ_J + σ_J²/2)`,
/// `B_r = Bσ_J` for each `B` (in units of `σ_J`), and measures the max error
/// at `τ = T` over the central 20% of the domain against the largest `B`.
/// `fitted_rate` is the slope of `ln e` against `B`.
pub fn truncation_study(
    m: &ModelParams,
    p: &Payoff,
    spec: &GridSpec,
    b_values: &[f64],
    opts: SchemeOptions,
) -> Result<StudyReport, StudyError> {
    if b_values.is_empty() {
        return Err(StudyError::Empty);
    }
    if let Some(&b) = b_values.iter().find(|&&b| !(b > 0.0 && b.is_finite())) {
        return Err(StudyError::BadTruncation(b));
    }
    for k in 1..b_values.len() {
        if !(b_values[k] > b_values[k - 1]) {
            return Err(StudyError::NotMonotone(k - 1, k));
        }
    }
    let sj = m.sigma_j;
    let specs: Vec<GridSpec> = b_values
        .iter()
        .map(|&b| spec.with_truncation(-(b * sj + 0.5 * sj * sj), b * sj))
        .collect();
    let solved = solve_all(m, p, &specs, opts)?;

    let grid = Grid::new(spec, m.maturity).map_err(SolverError::from)?;
    let center = 0.5 * (grid.x_left + grid.x_right);
    let half = 0.1 * (grid.x_right - grid.x_left);
    let nodes: Vec<usize> = (0..grid.n_nodes())
        .filter(|&i| (grid.x(i) - center).abs() <= half)
        .collect();
    let (reference, _) = solved.last().unwrap();
    let ref_row = reference.row(grid.n_time);

    let rows: Vec<StudyRow> = solved
        .iter()
        .zip(b_values)
        .map(|((sol, secs), &b)| {
            let row = sol.row(grid.n_time);
            let error = nodes
                .iter()
                .map(|&i| (row[i] - ref_row[i]).abs())
                .fold(0.0, f64::max);
            StudyRow {
                param: b,
                error,
                runtime_s: *secs,
            }
        })
        .collect();
    let slope = log_error_slope(&rows);
    StudyReport::new(
        rows,
        slope,
        format!(
            "truncation B={} sigma_J on N={}, M={} over ({}, {}); evaluated on the central 20%",
            b_values.last().unwrap(),
            grid.n_space,
            grid.n_time,
            grid.x_left,
            grid.x_right
        ),
        reference.max_abs(),
    )
}

/// Gaussian bump `height·exp(−x²/(2·width²))` in `x = ln(S/S₀)`, tabulated on
/// the nodes of `grid`. Exact at every node of coarser grids that nest in it.
pub fn gaussian_payoff(m: &ModelParams, grid: &Grid, width: f64, height: f64) -> Payoff {
    let spots: Vec<f64> = grid.xs().iter().map(|x| m.s0 * x.exp()).collect();
    Payoff::tabulate(&spots, |s| {
        let x = (s / m.s0).ln();
        height * (-0.5 * x * x / (width * width)).exp()
    })
    .expect("gaussian samples are finite and nonnegative")
}
