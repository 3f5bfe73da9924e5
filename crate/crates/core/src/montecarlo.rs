//! Monte Carlo oracle from the exact solution
//! `S_T = e^{X_T}·(S − ∫ β(s) e^{−X_s} ds)` with `X` started at 0, plus the
//! Black–Scholes and Merton closed forms used for degenerate parameter sets.
//!
//! Every path (or antithetic pair) owns a ChaCha8 stream selected by its
//! index, so estimates do not depend on how paths are spread over threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use thiserror::Error;

use crate::model::{validate_params, ModelParams, Payoff, ValidationReport};
use crate::normal;
use crate::par::{compensated_sum, Execution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("n_paths must be >= 1")]
    NoPaths,
    #[error("n_substeps must be >= 1")]
    NoSubsteps,
    #[error("time {t} is outside [0, {maturity})")]
    TimeOutOfRange { t: f64, maturity: f64 },
    #[error("spot must be > 0 and finite (got {0})")]
    BadSpot(f64),
    #[error("invalid model parameters: {0}")]
    InvalidModel(ValidationReport),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    pub n_paths: usize,
    /// Uniform substeps of `[t, T]` for the β-integral.
    pub n_substeps: usize,
    pub seed: u64,
    /// Pairs each path with its mirror (all normals negated). An odd
    /// `n_paths` is rounded up to a whole number of pairs.
    pub antithetic: bool,
}

impl McConfig {
    pub fn new(n_paths: usize, n_substeps: usize, seed: u64) -> Self {
        McConfig {
            n_paths,
            n_substeps,
            seed,
            antithetic: false,
        }
    }

    pub fn with_antithetic(mut self, on: bool) -> Self {
        self.antithetic = on;
        self
    }

    pub fn validate(&self) -> Result<(), McError> {
        if self.n_paths == 0 {
            return Err(McError::NoPaths);
        }
        if self.n_substeps == 0 {
            return Err(McError::NoSubsteps);
        }
        Ok(())
    }
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig::new(100_000, 256, 42)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub price: f64,
    /// Infinite when fewer than two independent samples exist.
    pub std_error: f64,
    /// Paths actually simulated (both members of every antithetic pair).
    pub n_paths: usize,
    /// Share of terminal samples below zero.
    pub negative_fraction: f64,
}

/// Path-independent part of a simulation over `[T − τ, T]`: the merged
/// substep and breakpoint grid with the coefficients of each interval.
struct PathPlan {
    spot: f64,
    t0: f64,
    tau: f64,
    jump_rate: f64,
    sigma_j: f64,
    nodes: Vec<f64>,
    /// `(α, σ², β)` on `[nodes[k], nodes[k+1])`.
    coeffs: Vec<(f64, f64, f64)>,
}

impl PathPlan {
    fn new(m: &ModelParams, spot: f64, tau: f64, n_substeps: usize) -> Self {
        let t_end = m.maturity;
        let t0 = t_end - tau;
        let mut nodes: Vec<f64> = (0..n_substeps)
            .map(|k| t0 + tau * k as f64 / n_substeps as f64)
            .collect();
        nodes.push(t_end);
        for f in [&m.alpha, &m.beta, &m.sigma] {
            nodes.extend(f.breakpoints_in(t0, t_end));
        }
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        let coeffs = nodes
            .windows(2)
            .map(|w| {
                let s = m.sigma.value_at(w[0]);
                (m.alpha.value_at(w[0]), s * s, m.beta.value_at(w[0]))
            })
            .collect();
        PathPlan {
            spot,
            t0,
            tau,
            jump_rate: m.ell * tau,
            sigma_j: m.sigma_j,
            nodes,
            coeffs,
        }
    }

    /// One terminal sample. `sign = −1` mirrors every normal draw.
    fn simulate<R: Rng + ?Sized>(&self, rng: &mut R, sign: f64) -> f64 {
        let n_jumps = if self.jump_rate > 0.0 {
            let count: f64 = Poisson::new(self.jump_rate)
                .expect("jump rate is positive and finite")
                .sample(rng);
            count as usize
        } else {
            0
        };
        let mut times: Vec<f64> = (0..n_jumps)
            .map(|_| self.t0 + self.tau * rng.random::<f64>())
            .collect();
        times.sort_by(f64::total_cmp);
        let sj = self.sigma_j;
        let sizes: Vec<f64> = (0..n_jumps)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                -0.5 * sj * sj + sj * sign * z
            })
            .collect();

        let mut x = 0.0;
        let mut e_minus_x = 1.0;
        let mut integral = 0.0;
        let mut next = 0;
        for (k, &(alpha, var, beta)) in self.coeffs.iter().enumerate() {
            let mut a = self.nodes[k];
            let b = self.nodes[k + 1];
            loop {
                let jump_here = next < n_jumps && times[next] < b;
                let end = if jump_here { times[next].max(a) } else { b };
                let h = end - a;
                let z: f64 = StandardNormal.sample(rng);
                let x_end = x + (alpha - 0.5 * var) * h + sign * (var * h).sqrt() * z;
                let e_end = (-x_end).exp();
                integral += 0.5 * h * beta * (e_minus_x + e_end);
                x = x_end;
                e_minus_x = e_end;
                if !jump_here {
                    break;
                }
                x += sizes[next];
                e_minus_x = (-x).exp();
                next += 1;
                a = end;
            }
        }
        x.exp() * (self.spot - integral)
    }
}

/// One sample of `S_T` given `S_{T−τ} = S₀e^x`. No parameter validation.
pub fn simulate_terminal<R: Rng + ?Sized>(
    m: &ModelParams,
    x: f64,
    tau: f64,
    n_substeps: usize,
    rng: &mut R,
) -> f64 {
    PathPlan::new(m, m.s0 * x.exp(), tau, n_substeps.max(1)).simulate(rng, 1.0)
}

fn stream_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// `C(t, S) ≈ e^{−r(T−t)}·mean H(S_T)`.
pub fn mc_price(
    m: &ModelParams,
    payoff: &Payoff,
    spot: f64,
    t: f64,
    cfg: &McConfig,
    exec: Execution,
) -> Result<McEstimate, McError> {
    cfg.validate()?;
    let report = validate_params(m);
    if !report.is_ok() {
        return Err(McError::InvalidModel(report));
    }
    if !(spot > 0.0 && spot.is_finite()) {
        return Err(McError::BadSpot(spot));
    }
    if !(0.0..m.maturity).contains(&t) {
        return Err(McError::TimeOutOfRange {
            t,
            maturity: m.maturity,
        });
    }
    let tau = m.maturity - t;
    let plan = PathPlan::new(m, spot, tau, cfg.n_substeps);

    // (payoff contribution, negative samples) per independent unit
    let units: Vec<(f64, u32)> = if cfg.antithetic {
        exec.map_range(cfg.n_paths.div_ceil(2), |k| {
            let up = plan.simulate(&mut stream_rng(cfg.seed, k), 1.0);
            let down = plan.simulate(&mut stream_rng(cfg.seed, k), -1.0);
            let neg = (up < 0.0) as u32 + (down < 0.0) as u32;
            (0.5 * (payoff.value(up) + payoff.value(down)), neg)
        })
    } else {
        exec.map_range(cfg.n_paths, |k| {
            let s = plan.simulate(&mut stream_rng(cfg.seed, k), 1.0);
            (payoff.value(s), (s < 0.0) as u32)
        })
    };

    let n = units.len();
    let mean = compensated_sum(units.iter().map(|u| u.0)) / n as f64;
    let std_error = if n < 2 {
        f64::INFINITY
    } else {
        let ss = compensated_sum(units.iter().map(|u| (u.0 - mean) * (u.0 - mean)));
        (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
    };
    let n_paths = if cfg.antithetic { 2 * n } else { n };
    let negatives: u64 = units.iter().map(|u| u.1 as u64).sum();
    let discount = (-m.r * tau).exp();
    Ok(McEstimate {
        price: discount * mean,
        std_error: discount * std_error,
        n_paths,
        negative_fraction: negatives as f64 / n_paths as f64,
    })
}

/// Black–Scholes call. As `σ√τ → 0` this tends to `max(S − Ke^{−rτ}, 0)`.
pub fn black_scholes_call(spot: f64, strike: f64, r: f64, sigma: f64, tau: f64) -> f64 {
    let df = (-r * tau.max(0.0)).exp();
    let vol = sigma * tau.max(0.0).sqrt();
    if spot <= 0.0 {
        return 0.0;
    }
    if strike <= 0.0 {
        return spot - strike * df;
    }
    if vol < 1e-12 {
        return (spot - strike * df).max(0.0);
    }
    let d1 = ((spot / strike).ln() + r * tau) / vol + 0.5 * vol;
    let d2 = d1 - vol;
    spot * normal::cdf(d1) - strike * df * normal::cdf(d2)
}

/// Black–Scholes put.
pub fn black_scholes_put(spot: f64, strike: f64, r: f64, sigma: f64, tau: f64) -> f64 {
    let df = (-r * tau.max(0.0)).exp();
    let vol = sigma * tau.max(0.0).sqrt();
    if spot <= 0.0 || vol < 1e-12 {
        return (strike * df - spot).max(0.0);
    }
    let d1 = ((spot / strike).ln() + r * tau) / vol + 0.5 * vol;
    let d2 = d1 - vol;
    strike * df * normal::cdf(-d2) - spot * normal::cdf(-d1)
}

/// Merton series with `n_terms + 1` Poisson-weighted Black–Scholes prices.
/// The jump compensator is zero because `E[J] = 1`.
#[allow(clippy::too_many_arguments)]
pub fn merton_call(
    spot: f64,
    strike: f64,
    r: f64,
    sigma: f64,
    sigma_j: f64,
    ell: f64,
    tau: f64,
    n_terms: usize,
) -> f64 {
    merton_series(n_terms, ell * tau, |n| {
        let vol = (sigma * sigma + n as f64 * sigma_j * sigma_j / tau).sqrt();
        black_scholes_call(spot, strike, r, vol, tau)
    })
}

/// Merton put, by the same series.
#[allow(clippy::too_many_arguments)]
pub fn merton_put(
    spot: f64,
    strike: f64,
    r: f64,
    sigma: f64,
    sigma_j: f64,
    ell: f64,
    tau: f64,
    n_terms: usize,
) -> f64 {
    merton_series(n_terms, ell * tau, |n| {
        let vol = (sigma * sigma + n as f64 * sigma_j * sigma_j / tau).sqrt();
        black_scholes_put(spot, strike, r, vol, tau)
    })
}

fn merton_series(n_terms: usize, lambda: f64, price: impl Fn(usize) -> f64) -> f64 {
    if lambda <= 0.0 {
        return price(0);
    }
    let mut weight = (-lambda).exp();
    let mut total = 0.0;
    for n in 0..=n_terms {
        if n > 0 {
            weight *= lambda / n as f64;
        }
        total += weight * price(n);
    }
    total
}
