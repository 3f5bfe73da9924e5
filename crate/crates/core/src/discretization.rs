//! Space-time grid, jump quadrature weights and upwinded operator
//! coefficients for the transformed problem in `u(τ, x)`, where
//! `τ = T − t` and `x = ln(S / S₀)`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{ModelError, ModelParams};
use crate::normal;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("x_left = {x_left} must be below x_right = {x_right}")]
    EmptyDomain { x_left: f64, x_right: f64 },
    #[error("n_space = {0} must be at least 2")]
    TooFewIntervals(usize),
    #[error("truncation bounds must satisfy b_left < 0 < b_right (got {b_left}, {b_right})")]
    BadTruncation { b_left: f64, b_right: f64 },
    #[error("space step must be positive and finite (got {0})")]
    BadSpaceStep(f64),
    #[error("maturity must be positive and finite (got {0})")]
    BadMaturity(f64),
    #[error("unknown drift form `{0}` (expected derived, paper_fds or paper_ca)")]
    UnknownDriftForm(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Geometry of the computational grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Left end of the log-moneyness interval.
    pub x_left: f64,
    /// Right end of the log-moneyness interval.
    pub x_right: f64,
    /// Number of space intervals (N); the grid has N + 1 nodes.
    pub n_space: usize,
    /// Number of time steps (M).
    pub n_time: usize,
    /// Left jump truncation bound; defaults to −(6σ_J + σ_J²/2).
    pub b_left: Option<f64>,
    /// Right jump truncation bound; defaults to 6σ_J.
    pub b_right: Option<f64>,
}

impl GridSpec {
    pub fn new(x_left: f64, x_right: f64, n_space: usize, n_time: usize) -> Self {
        GridSpec {
            x_left,
            x_right,
            n_space,
            n_time,
            b_left: None,
            b_right: None,
        }
    }

    pub fn with_truncation(mut self, b_left: f64, b_right: f64) -> Self {
        self.b_left = Some(b_left);
        self.b_right = Some(b_right);
        self
    }

    /// The published replication grid: x ∈ (−0.096, 0.079), N = 175, M = 100.
    pub fn reference() -> Self {
        GridSpec::new(-0.096, 0.079, 175, 100)
    }

    /// Truncation bounds, filling in the defaults for `sigma_j`.
    pub fn truncation(&self, sigma_j: f64) -> (f64, f64) {
        let (dl, dr) = default_truncation(sigma_j);
        (self.b_left.unwrap_or(dl), self.b_right.unwrap_or(dr))
    }
}

/// Default jump truncation: leaves less than 1e−8 of Gaussian mass outside.
pub fn default_truncation(sigma_j: f64) -> (f64, f64) {
    (-(6.0 * sigma_j + 0.5 * sigma_j * sigma_j), 6.0 * sigma_j)
}

/// Uniform grid `x_i = x_left + iΔx`, `τ_n = nΔt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub x_left: f64,
    pub x_right: f64,
    pub n_space: usize,
    pub n_time: usize,
    pub maturity: f64,
    pub dx: f64,
    pub dt: f64,
}

impl Grid {
    pub fn new(spec: &GridSpec, maturity: f64) -> Result<Self, GridError> {
        if !(spec.x_left < spec.x_right) || !spec.x_left.is_finite() || !spec.x_right.is_finite() {
            return Err(GridError::EmptyDomain {
                x_left: spec.x_left,
                x_right: spec.x_right,
            });
        }
        if spec.n_space < 2 {
            return Err(GridError::TooFewIntervals(spec.n_space));
        }
        if !(maturity > 0.0 && maturity.is_finite()) {
            return Err(GridError::BadMaturity(maturity));
        }
        let dx = (spec.x_right - spec.x_left) / spec.n_space as f64;
        let dt = if spec.n_time == 0 {
            0.0
        } else {
            maturity / spec.n_time as f64
        };
        Ok(Grid {
            x_left: spec.x_left,
            x_right: spec.x_right,
            n_space: spec.n_space,
            n_time: spec.n_time,
            maturity,
            dx,
            dt,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_space + 1
    }

    /// Node `i`; `x(0)` and `x(N)` hit the interval ends exactly.
    pub fn x(&self, i: usize) -> f64 {
        if i == self.n_space {
            return self.x_right;
        }
        self.x_left + (self.x_right - self.x_left) * i as f64 / self.n_space as f64
    }

    /// Position of a (possibly exterior) node index.
    pub fn x_signed(&self, i: isize) -> f64 {
        self.x_left + (self.x_right - self.x_left) * i as f64 / self.n_space as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..=self.n_space).map(|i| self.x(i)).collect()
    }

    /// Time level `n` (time to maturity).
    pub fn tau(&self, n: usize) -> f64 {
        if self.n_time == 0 {
            return 0.0;
        }
        self.maturity * n as f64 / self.n_time as f64
    }

    /// Calendar time `T − τ_n`, exactly 0 at the last level.
    pub fn calendar_time(&self, n: usize) -> f64 {
        if self.n_time == 0 {
            return self.maturity;
        }
        self.maturity * (self.n_time - n) as f64 / self.n_time as f64
    }

    pub fn taus(&self) -> Vec<f64> {
        (0..=self.n_time).map(|n| self.tau(n)).collect()
    }
}

/// Truncated, discretised jump measure: `nu[k]` is the weight of a jump of
/// `j = k_left + k` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpWeights {
    pub k_left: isize,
    pub k_right: isize,
    pub nu: Vec<f64>,
    pub total: f64,
}

impl JumpWeights {
    /// `ν_j = ℓ · P(ln J ∈ ((j − ½)Δx, (j + ½)Δx])` for `j = K_l..=K_r`,
    /// with `K_l = ⌊B_l/Δx⌋`, `K_r = ⌈B_r/Δx⌉`.
    pub fn new(m: &ModelParams, dx: f64, b_left: f64, b_right: f64) -> Result<Self, GridError> {
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(GridError::BadSpaceStep(dx));
        }
        if !(b_left < 0.0 && b_right > 0.0 && b_left.is_finite() && b_right.is_finite()) {
            return Err(GridError::BadTruncation { b_left, b_right });
        }
        let k_left = (b_left / dx).floor() as isize;
        let k_right = (b_right / dx).ceil() as isize;
        let sj = m.sigma_j;
        let shift = 0.5 * sj * sj;
        let nu: Vec<f64> = (k_left..=k_right)
            .map(|j| {
                if m.ell == 0.0 {
                    return 0.0;
                }
                let lo = ((j as f64 - 0.5) * dx + shift) / sj;
                let hi = ((j as f64 + 0.5) * dx + shift) / sj;
                m.ell * normal::interval_mass(lo, hi)
            })
            .collect();
        let total = crate::par::compensated_sum(nu.iter().copied());
        Ok(JumpWeights {
            k_left,
            k_right,
            nu,
            total,
        })
    }

    /// Weight for a jump of `j` cells (zero outside the support).
    pub fn weight(&self, j: isize) -> f64 {
        if j < self.k_left || j > self.k_right {
            0.0
        } else {
            self.nu[(j - self.k_left) as usize]
        }
    }

    pub fn len(&self) -> usize {
        self.nu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nu.is_empty()
    }

    /// Largest admissible time step, `1 / Σν_j`; infinite without jumps.
    pub fn stability_bound(&self) -> f64 {
        stability_bound(self)
    }
}

pub fn stability_bound(w: &JumpWeights) -> f64 {
    if w.total > 0.0 {
        1.0 / w.total
    } else {
        f64::INFINITY
    }
}

/// Which first-order coefficient to discretise.
///
/// The change of variables gives `α − σ²/2 − (β/S₀)e^{−x}` (`Derived`).
/// `PaperFds` uses `e^{+x}` and `PaperCa` drops the exponential; both are kept
/// for replication runs only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DriftForm {
    #[default]
    Derived,
    PaperFds,
    PaperCa,
}

impl FromStr for DriftForm {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "derived" => Ok(DriftForm::Derived),
            "paper_fds" => Ok(DriftForm::PaperFds),
            "paper_ca" => Ok(DriftForm::PaperCa),
            other => Err(GridError::UnknownDriftForm(other.to_string())),
        }
    }
}

impl fmt::Display for DriftForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DriftForm::Derived => "derived",
            DriftForm::PaperFds => "paper_fds",
            DriftForm::PaperCa => "paper_ca",
        })
    }
}

/// First-order coefficient `f(τ, x)` of the transformed operator.
pub fn drift_coefficient(
    m: &ModelParams,
    tau: f64,
    x: f64,
    form: DriftForm,
) -> Result<f64, ModelError> {
    if !(0.0..=m.maturity).contains(&tau) {
        return Err(ModelError::TimeOutOfDomain {
            t: tau,
            maturity: m.maturity,
        });
    }
    let t = (m.maturity - tau).max(0.0);
    let alpha = m.alpha_at(t)?;
    let beta = m.beta_at(t)?;
    let sigma = m.sigma_at(t)?;
    Ok(drift_from_levels(alpha, beta, sigma, m.s0, x, form))
}

fn drift_from_levels(alpha: f64, beta: f64, sigma: f64, s0: f64, x: f64, form: DriftForm) -> f64 {
    let base = alpha - 0.5 * sigma * sigma;
    let scale = beta / s0;
    match form {
        DriftForm::Derived => base - scale * (-x).exp(),
        DriftForm::PaperFds => base - scale * x.exp(),
        DriftForm::PaperCa => base - scale,
    }
}

/// Upwinded coefficients on interior nodes `i = 1..N−1`, stored at index
/// `i − 1`. The implicit row reads
/// `−cΔt·u_{i−1} + (1 + aΔt)·u_i − bΔt·u_{i+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorCoeffs {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

/// Upwind split for a single node: returns `(a, b, c)`.
/// Ties (`f = 0`) take the forward branch.
pub fn upwind_coefficients(drift: f64, diffusion: f64, dx: f64) -> (f64, f64, f64) {
    let half = 0.5 * diffusion / (dx * dx);
    let (b, c) = if drift >= 0.0 {
        (drift / dx + half, half)
    } else {
        (half, -drift / dx + half)
    };
    (b + c, b, c)
}

/// Coefficients at time level `tau_next`, with `σ², α, β` taken at calendar
/// time `T − tau_next`.
pub fn operator_coefficients(
    m: &ModelParams,
    tau_next: f64,
    grid: &Grid,
    form: DriftForm,
) -> Result<OperatorCoeffs, ModelError> {
    if !(0.0..=m.maturity).contains(&tau_next) {
        return Err(ModelError::TimeOutOfDomain {
            t: tau_next,
            maturity: m.maturity,
        });
    }
    let t = (m.maturity - tau_next).max(0.0);
    Ok(coefficients_at_calendar_time(m, t, grid, form))
}

pub(crate) fn coefficients_at_calendar_time(
    m: &ModelParams,
    t: f64,
    grid: &Grid,
    form: DriftForm,
) -> OperatorCoeffs {
    let alpha = m.alpha.value_at(t);
    let beta = m.beta.value_at(t);
    let sigma = m.sigma.value_at(t);
    let diffusion = sigma * sigma;
    let interior = grid.n_space - 1;
    let mut a = Vec::with_capacity(interior);
    let mut b = Vec::with_capacity(interior);
    let mut c = Vec::with_capacity(interior);
    for i in 1..grid.n_space {
        let f = drift_from_levels(alpha, beta, sigma, m.s0, grid.x(i), form);
        let (ai, bi, ci) = upwind_coefficients(f, diffusion, grid.dx);
        a.push(ai);
        b.push(bi);
        c.push(ci);
    }
    OperatorCoeffs { a, b, c }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::series_cdf;
    use proptest::prelude::*;

    #[test]
    fn reference_grid_steps() {
        let g = Grid::new(&GridSpec::reference(), 1.0).unwrap();
        assert!((g.dx - 0.001).abs() < 1e-15);
        assert!((g.dt - 0.01).abs() < 1e-15);
        assert_eq!(g.x(0), -0.096);
        assert_eq!(g.x(175), 0.079);
        assert_eq!(g.tau(100), 1.0);
        assert_eq!(g.calendar_time(100), 0.0);
    }

    #[test]
    fn small_grids() {
        let g = Grid::new(&GridSpec::new(-1.0, 1.0, 2, 4), 1.0).unwrap();
        assert_eq!(g.xs(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(g.taus(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn grid_construction_errors() {
        assert!(matches!(
            Grid::new(&GridSpec::new(1.0, -1.0, 10, 10), 1.0),
            Err(GridError::EmptyDomain { .. })
        ));
        assert!(matches!(
            Grid::new(&GridSpec::new(-1.0, 1.0, 1, 10), 1.0),
            Err(GridError::TooFewIntervals(1))
        ));
        assert!(Grid::new(&GridSpec::new(-1.0, 1.0, 10, 10), 0.0).is_err());
    }

    #[test]
    fn central_weight_matches_cdf_oracle() {
        let m = ModelParams::reference();
        let w = JumpWeights::new(&m, 0.001, -0.5, 0.5).unwrap();
        let oracle = 1.5 * (series_cdf(0.251) - series_cdf(0.249));
        // frozen high-precision value of the same quantity
        assert!((oracle - 1.160_004_169_157_893_3e-3).abs() < 1e-15);
        assert!(
            (w.weight(0) - 1.160_004_169_157_893_3e-3).abs() < 1e-15,
            "{}",
            w.weight(0)
        );
        let sanity = 1.5 * 0.001 * normal::pdf(0.25) / 0.5;
        assert!((w.weight(0) - sanity).abs() / sanity < 1e-5);
    }

    #[test]
    fn no_jumps_means_zero_weights() {
        let mut m = ModelParams::reference();
        m.ell = 0.0;
        let w = JumpWeights::new(&m, 0.01, -1.0, 1.0).unwrap();
        assert!(w.nu.iter().all(|&v| v == 0.0));
        assert_eq!(w.total, 0.0);
        assert_eq!(w.stability_bound(), f64::INFINITY);
    }

    #[test]
    fn default_truncation_keeps_almost_all_mass() {
        let m = ModelParams::reference();
        let (bl, br) = default_truncation(m.sigma_j);
        for &dx in &[0.001, 0.005, 0.01, 0.05] {
            let w = JumpWeights::new(&m, dx, bl, br).unwrap();
            assert!(
                (w.total - m.ell).abs() <= m.ell * 1e-8,
                "dx={dx}: {}",
                w.total
            );
            assert!(w.total <= m.ell * (1.0 + 1e-14));
            assert!((w.stability_bound() - 1.0 / 1.5).abs() < 1e-4);
        }
    }

    #[test]
    fn reference_time_step_is_admissible() {
        let m = ModelParams::reference();
        let g = Grid::new(&GridSpec::reference(), m.maturity).unwrap();
        let (bl, br) = default_truncation(m.sigma_j);
        let w = JumpWeights::new(&m, g.dx, bl, br).unwrap();
        assert!(g.dt <= w.stability_bound());
    }

    #[test]
    fn covering_invariant() {
        let m = ModelParams::reference();
        for &(dx, bl, br) in &[(0.001, -0.3, 0.2), (0.007, -1.0, 3.3), (0.1, -0.05, 0.05)] {
            let w = JumpWeights::new(&m, dx, bl, br).unwrap();
            assert!((w.k_left as f64 - 0.5) * dx <= bl);
            assert!(br <= (w.k_right as f64 + 0.5) * dx);
            assert_eq!(w.len() as isize, w.k_right - w.k_left + 1);
        }
        assert!(JumpWeights::new(&m, 0.01, 0.1, 1.0).is_err());
        assert!(JumpWeights::new(&m, 0.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn first_moment_is_accurate_on_coarse_grids() {
        // exact cell masses put Σ ν_j·jΔx at the truncation floor already
        let m = ModelParams::reference();
        let (bl, br) = default_truncation(m.sigma_j);
        let target = m.ell * m.log_jump_mean();
        for &dx in &[0.1, 0.05, 0.025] {
            let w = JumpWeights::new(&m, dx, bl, br).unwrap();
            let moment: f64 = (w.k_left..=w.k_right)
                .map(|j| w.weight(j) * j as f64 * dx)
                .sum();
            assert!(
                (moment - target).abs() < 1e-8,
                "dx={dx}: {moment} vs {target}"
            );
        }
    }

    #[test]
    fn drift_forms() {
        let m = ModelParams::reference();
        let d = drift_coefficient(&m, 0.0, 0.0, DriftForm::Derived).unwrap();
        assert!((d - (0.015 - 0.125 - 0.008)).abs() < 1e-15);
        let fds = drift_coefficient(&m, 0.0, 0.0, DriftForm::PaperFds).unwrap();
        assert_eq!(d, fds);
        let x = 0.3;
        let d = drift_coefficient(&m, 0.5, x, DriftForm::Derived).unwrap();
        assert!((d - (0.015 - 0.125 - 0.008 * (-x).exp())).abs() < 1e-15);
        let fds = drift_coefficient(&m, 0.5, x, DriftForm::PaperFds).unwrap();
        assert!((fds - (0.015 - 0.125 - 0.008 * x.exp())).abs() < 1e-15);
        let ca = drift_coefficient(&m, 0.5, x, DriftForm::PaperCa).unwrap();
        assert!((ca - (0.015 - 0.125 - 0.008)).abs() < 1e-15);

        let mut m = m;
        m.beta = 0.0.into();
        for form in [DriftForm::Derived, DriftForm::PaperFds, DriftForm::PaperCa] {
            let v = drift_coefficient(&m, 0.3, 1.7, form).unwrap();
            assert!((v - (-0.11)).abs() < 1e-15);
        }
        assert!(drift_coefficient(&m, 1.5, 0.0, DriftForm::Derived).is_err());
    }

    #[test]
    fn drift_form_parsing() {
        assert_eq!("paper_ca".parse::<DriftForm>().unwrap(), DriftForm::PaperCa);
        assert_eq!(DriftForm::PaperFds.to_string(), "paper_fds");
        assert!("upwind".parse::<DriftForm>().is_err());
    }

    #[test]
    fn upwind_values() {
        let (a, b, c) = upwind_coefficients(0.0, 0.25, 0.01);
        assert_eq!(b, c);
        assert!((a - 0.25 / 1e-4).abs() < 1e-9);

        // σ = 0.5, Δx = 0.001, f = −0.11: ½σ²/Δx² = 125000.
        let (a, b, c) = upwind_coefficients(-0.11, 0.25, 0.001);
        assert!((c - 125_110.0).abs() < 1e-6);
        assert!((b - 125_000.0).abs() < 1e-6);
        assert!((a - 250_110.0).abs() < 1e-6);

        let (a, b, c) = upwind_coefficients(0.2, 0.25, 0.001);
        assert!((b - 125_200.0).abs() < 1e-6);
        assert!((c - 125_000.0).abs() < 1e-6);
        assert_eq!(a, b + c);
    }

    #[test]
    fn operator_coefficients_on_grid() {
        let m = ModelParams::reference();
        let g = Grid::new(&GridSpec::new(-1.0, 1.0, 20, 10), 1.0).unwrap();
        let oc = operator_coefficients(&m, g.tau(3), &g, DriftForm::Derived).unwrap();
        assert_eq!(oc.a.len(), 19);
        for i in 0..19 {
            assert_eq!(oc.a[i], oc.b[i] + oc.c[i]);
            assert!(oc.a[i] >= 0.0 && oc.b[i] >= 0.0 && oc.c[i] >= 0.0);
        }
        assert!(operator_coefficients(&m, 2.0, &g, DriftForm::Derived).is_err());
    }

    proptest! {
        #[test]
        fn coefficients_are_nonnegative_and_balanced(
            f in -50.0f64..50.0, s in 1e-6f64..4.0, dx in 1e-4f64..0.5,
        ) {
            let (a, b, c) = upwind_coefficients(f, s, dx);
            prop_assert!(a >= 0.0 && b >= 0.0 && c >= 0.0);
            prop_assert_eq!(a, b + c);
        }

        #[test]
        fn widening_truncation_never_loses_mass(
            dx in 0.002f64..0.1, bl in 0.05f64..2.0, br in 0.05f64..2.0, grow in 0.0f64..1.0,
        ) {
            let m = ModelParams::reference();
            let narrow = JumpWeights::new(&m, dx, -bl, br).unwrap();
            let wide = JumpWeights::new(&m, dx, -bl - grow, br + grow).unwrap();
            prop_assert!(narrow.nu.iter().all(|&v| v >= 0.0));
            prop_assert!(wide.total >= narrow.total);
            prop_assert!(wide.total <= m.ell * (1.0 + 1e-14));
        }
    }
}
