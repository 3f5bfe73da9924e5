//! `pricecap` command-line front end.
//!
//! Exit codes: 0 success, 1 an oracle comparison failed, 2 configuration
//! error (a JSON error list is written to stderr), 3 runtime failure
//! (numerical breakdown or an output file that cannot be written).

pub mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use pricecap_core::analysis::{
    gaussian_payoff, localization_study, refinement_study, truncation_study, StudyError,
    StudyReport,
};
use pricecap_core::discretization::Grid;
use pricecap_core::montecarlo::{mc_price, McConfig, McError};
use pricecap_core::oracle::{self, OracleError, OracleSettings};
use pricecap_core::slices::{self, Slice, SliceError};
use pricecap_core::solver::{Scheme, SolverError};
use pricecap_core::Execution;

use config::{parse_config, FieldError, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "pricecap",
    version,
    about = "Price-cap jump-diffusion option pricer"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Directory for CSV output (created if missing).
    #[arg(long, global = true, default_value = ".")]
    pub output: PathBuf,
    /// Built-in configuration instead of --config.
    #[arg(long, global = true, value_enum)]
    pub preset: Option<Preset>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Monte Carlo seed.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Published parameters and grid: a call struck at 45 on (−0.096, 0.079).
    Table12,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SliceModeArg {
    VsSpotAtTimes,
    VsTimeAtSpots,
    VsStrike,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve on the configured grid and write surface.csv.
    Price,
    /// Write one CSV per curve of the chosen family.
    Slices {
        #[arg(long, value_enum)]
        mode: SliceModeArg,
        /// Remaining times for vs-spot-at-times (default 0, T/4, T/2, 3T/4, T).
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        /// Spots for vs-time-at-spots (default S0).
        #[arg(long, value_delimiter = ',')]
        spots: Option<Vec<f64>>,
        /// Strikes for vs-strike (default 0.9K, K, 1.1K).
        #[arg(long, value_delimiter = ',')]
        strikes: Option<Vec<f64>>,
    },
    /// Monte Carlo price at (t = 0, S = S0); writes mc_price.csv.
    McPrice {
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = 256)]
        substeps: usize,
        #[arg(long)]
        antithetic: bool,
    },
    /// Compare with Black–Scholes, Merton and Monte Carlo; writes oracle_check.csv.
    OracleCheck {
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = 256)]
        substeps: usize,
    },
    /// Grid refinement study; writes study_refine.csv.
    StudyRefine {
        #[arg(long, default_value_t = 4)]
        levels: usize,
        /// Replace the payoff by a Gaussian bump of this width in ln(S/S0).
        #[arg(long)]
        bump_width: Option<f64>,
    },
    /// Domain localization study; writes study_localize.csv.
    StudyLocalize {
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,1.5,2")]
        widths: Vec<f64>,
        #[arg(long, default_value_t = 0.01)]
        dx: f64,
    },
    /// Jump truncation study; writes study_truncate.csv.
    StudyTruncate {
        /// Truncation levels in units of sigma_J.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        b_values: Vec<f64>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration")]
    Config(Vec<FieldError>),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("oracle check failed")]
    OracleFailed,
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::OracleFailed => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io { .. } => 3,
        }
    }

    fn config(field: &str, message: impl ToString) -> Self {
        CliError::Config(vec![FieldError::new(field, message.to_string())])
    }
}

#[derive(Serialize)]
struct ErrorList<'a> {
    errors: &'a [FieldError],
}

/// Machine-readable form of a configuration error list.
pub fn errors_json(errors: &[FieldError]) -> String {
    serde_json::to_string(&ErrorList { errors }).expect("plain strings serialize")
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::InvalidModel(_) => CliError::config("model", e),
            SolverError::Grid(_) => CliError::config("grid", e),
            SolverError::StabilityBound { .. } => CliError::config("grid.n_time", e),
            SolverError::SpotOutOfRange { .. } | SolverError::TimeOutOfRange { .. } => {
                CliError::config("slices", e)
            }
            SolverError::Tridiag(_) | SolverError::NonFinite { .. } => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}

impl From<McError> for CliError {
    fn from(e: McError) -> Self {
        CliError::config("mc", e)
    }
}

impl From<StudyError> for CliError {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Solver(s) => s.into(),
            other => CliError::config("study", other),
        }
    }
}

impl From<SliceError> for CliError {
    fn from(e: SliceError) -> Self {
        match e {
            SliceError::Solver(s) => s.into(),
            other => CliError::config("slices", other),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Solver(s) => s.into(),
            OracleError::MonteCarlo(m) => m.into(),
            OracleError::NotACall => CliError::config("payoff.kind", e),
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    match (&cli.preset, &cli.config) {
        (Some(Preset::Table12), _) => {
            eprintln!(
                "warning: the table12 preset uses the published domain (-0.096, 0.079); \
                 it is meant for replication, and accuracy checks need a wider domain"
            );
            Ok(RunConfig::table12())
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))?;
            parse_config(&text).map_err(CliError::Config)
        }
        (None, None) => Err(CliError::config(
            "config",
            "pass --config <path> or --preset table12",
        )),
    }
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn write(
        &self,
        name: &str,
        f: impl FnOnce(&mut dyn Write) -> io::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        let io_err = |source| CliError::Io {
            path: path.clone(),
            source,
        };
        fs::create_dir_all(&self.dir).map_err(io_err)?;
        let mut w = BufWriter::new(File::create(&path).map_err(io_err)?);
        f(&mut w).and_then(|_| w.flush()).map_err(io_err)?;
        Ok(path)
    }
}

fn check_all_positive(field: &str, values: &[f64]) -> Result<(), CliError> {
    if values.is_empty() || values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(CliError::config(
            field,
            "expected a nonempty list of positive numbers",
        ));
    }
    Ok(())
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("threads", "must be >= 1"));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let cfg = load(cli)?;
    let out = Output {
        dir: cli.output.clone(),
    };
    let exec = Execution::Parallel;
    let opts = cfg.options.with_execution(exec);
    let (m, payoff) = (&cfg.model, &cfg.payoff);

    match &cli.command {
        Command::Price => {
            let sol = Scheme::new(m, payoff, &cfg.grid, opts)?.solve()?;
            out.write("surface.csv", |w| sol.write_csv(w))?;
            match sol.price_at(0.0, m.s0) {
                Ok(p) => println!("price(t=0, S={})={p}", m.s0),
                Err(_) => println!("price(t=0, S={}) is outside the grid", m.s0),
            }
        }
        Command::Slices {
            mode,
            times,
            spots,
            strikes,
        } => {
            let scheme = Scheme::new(m, payoff, &cfg.grid, opts)?;
            let grid: &Grid = scheme.grid();
            let (lo, hi) = (m.s0 * grid.x_left.exp(), m.s0 * grid.x_right.exp());
            let in_range = |field: &str, s: f64| {
                if s >= lo * (1.0 - 1e-12) && s <= hi * (1.0 + 1e-12) {
                    Ok(())
                } else {
                    Err(CliError::config(
                        field,
                        format!("spot {s} is outside the grid range [{lo}, {hi}]"),
                    ))
                }
            };
            let (tag, curves): (&str, Vec<Slice>) = match mode {
                SliceModeArg::VsSpotAtTimes => {
                    let t = m.maturity;
                    let taus = times
                        .clone()
                        .unwrap_or_else(|| vec![0.0, 0.25 * t, 0.5 * t, 0.75 * t, t]);
                    if let Some(bad) = taus.iter().find(|&&x| !(0.0..=t).contains(&x)) {
                        return Err(CliError::config(
                            "slices.times",
                            format!("remaining time {bad} is outside [0, {t}]"),
                        ));
                    }
                    (
                        "vs_spot_at_times",
                        slices::vs_spot_at_times(&scheme.solve()?, &taus)?,
                    )
                }
                SliceModeArg::VsTimeAtSpots => {
                    let spots = spots.clone().unwrap_or_else(|| vec![m.s0]);
                    for &s in &spots {
                        in_range("slices.spots", s)?;
                    }
                    (
                        "vs_time_at_spots",
                        slices::vs_time_at_spots(&scheme.solve()?, &spots)?,
                    )
                }
                SliceModeArg::VsStrike => {
                    let Some(k) = payoff.strike() else {
                        return Err(CliError::config(
                            "payoff.kind",
                            "vs-strike needs a call or put payoff",
                        ));
                    };
                    let strikes = strikes.clone().unwrap_or_else(|| vec![0.9 * k, k, 1.1 * k]);
                    check_all_positive("slices.strikes", &strikes)?;
                    in_range("model.s0", m.s0)?;
                    let curve = slices::vs_strike(m, payoff, &cfg.grid, opts, &strikes, m.s0, 0.0)?;
                    ("vs_strike", vec![curve])
                }
            };
            for curve in &curves {
                let path = out.write(&format!("slices_{tag}_{}.csv", curve.file_stem()), |w| {
                    curve.write_csv(w)
                })?;
                println!("{}", path.display());
            }
        }
        Command::McPrice {
            paths,
            substeps,
            antithetic,
        } => {
            let mc = McConfig::new(*paths, *substeps, cli.seed).with_antithetic(*antithetic);
            let est = mc_price(m, payoff, m.s0, 0.0, &mc, exec)?;
            out.write("mc_price.csv", |w| {
                writeln!(w, "price,std_error,n_paths,seed")?;
                writeln!(
                    w,
                    "{},{},{},{}",
                    est.price, est.std_error, est.n_paths, cli.seed
                )
            })?;
            println!(
                "price={} std_error={} n_paths={} negative_fraction={}",
                est.price, est.std_error, est.n_paths, est.negative_fraction
            );
        }
        Command::OracleCheck { paths, substeps } => {
            let settings = OracleSettings {
                mc: McConfig::new(*paths, *substeps, cli.seed),
                ..OracleSettings::default()
            };
            settings.mc.validate()?;
            let rows = oracle::oracle_check(m, payoff, &settings, exec)?;
            out.write("oracle_check.csv", |w| oracle::write_csv(&rows, w))?;
            for r in &rows {
                println!(
                    "{}: pide={} oracle={} abs_err={} {}",
                    r.case,
                    r.pide,
                    r.oracle,
                    r.abs_err,
                    if r.pass { "PASS" } else { "FAIL" }
                );
            }
            if !rows.iter().all(|r| r.pass) {
                return Err(CliError::OracleFailed);
            }
        }
        Command::StudyRefine { levels, bump_width } => {
            let payoff = match bump_width {
                Some(w) if *w > 0.0 => {
                    let finest = pricecap_core::GridSpec {
                        n_space: cfg.grid.n_space << levels.saturating_sub(1),
                        ..cfg.grid
                    };
                    let g = Grid::new(&finest, m.maturity).map_err(SolverError::from)?;
                    gaussian_payoff(m, &g, *w, 1.0)
                }
                Some(w) => return Err(CliError::config("bump_width", format!("{w} must be > 0"))),
                None => payoff.clone(),
            };
            let report = refinement_study(m, &payoff, &cfg.grid, *levels, opts)?;
            write_study(&out, "study_refine.csv", &report)?;
        }
        Command::StudyLocalize { widths, dx } => {
            let report = localization_study(m, payoff, widths, *dx, cfg.grid.n_time, opts)?;
            write_study(&out, "study_localize.csv", &report)?;
        }
        Command::StudyTruncate { b_values } => {
            let report = truncation_study(m, payoff, &cfg.grid, b_values, opts)?;
            write_study(&out, "study_truncate.csv", &report)?;
        }
    }
    Ok(())
}

fn write_study(out: &Output, name: &str, report: &StudyReport) -> Result<(), CliError> {
    let path = out.write(name, |w| report.write_csv(w))?;
    println!(
        "{}: fitted_rate={} ({})",
        path.display(),
        report.fitted_rate,
        report.reference_description
    );
    Ok(())
}

/// Reports an error on stderr in the form matching its exit code.
pub fn report(err: &CliError) {
    match err {
        CliError::Config(errors) => eprintln!("{}", errors_json(errors)),
        other => eprintln!("error: {other}"),
    }
}

/// Runs `cli` and returns the process exit code.
pub fn main_with(cli: &Cli) -> i32 {
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            report(&e);
            e.exit_code()
        }
    }
}
