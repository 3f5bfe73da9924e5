//! Explicit-implicit time stepping for `u(τ, x) = e^{rτ} C(T − τ, S₀e^x)`.
//!
//! Each step folds the explicit jump sum into the right-hand side and then
//! solves the implicit upwinded convection-diffusion system:
//!
//! ```text
//! −cΔt·u^{n+1}_{i−1} + (1 + aΔt)·u^{n+1}_i − bΔt·u^{n+1}_{i+1}
//!     = u^n_i + Δt·Σ_j ν_j (u^n_{i+j} − u^n_i)
//! ```
//!
//! Nodes `0` and `N` are pinned by the [`BoundaryMode`]; the same mode sets
//! the values seen by the jump sum outside the grid.

use std::io::{self, Write};

use thiserror::Error;

use crate::discretization::{
    coefficients_at_calendar_time, DriftForm, Grid, GridError, GridSpec, JumpWeights,
    OperatorCoeffs,
};
use crate::model::{validate_params, ModelParams, Payoff, ValidationReport};
use crate::par::Execution;
use crate::tridiag::{self, TridiagError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid model parameters: {0}")]
    InvalidModel(ValidationReport),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Tridiag(#[from] TridiagError),
    #[error("time step {dt} exceeds the stability bound {bound} = 1/sum(nu_j)")]
    StabilityBound { dt: f64, bound: f64 },
    #[error("non-finite value produced at time step {step}")]
    NonFinite { step: usize },
    #[error("spot {spot} is outside the grid range [{lo}, {hi}]")]
    SpotOutOfRange { spot: f64, lo: f64, hi: f64 },
    #[error("time {t} is outside [0, {maturity}]")]
    TimeOutOfRange { t: f64, maturity: f64 },
}

/// Values imposed at nodes `0`, `N` and beyond.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryMode {
    /// `u = 0` on the boundary nodes and outside the grid.
    #[default]
    DirichletZero,
    /// `u = H(S₀e^x)` on the boundary nodes and outside the grid, i.e. the
    /// option is worth the discounted payoff there.
    DirichletPayoff,
}

impl std::str::FromStr for BoundaryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dirichlet_zero" => Ok(BoundaryMode::DirichletZero),
            "dirichlet_payoff" => Ok(BoundaryMode::DirichletPayoff),
            other => Err(format!(
                "unknown boundary mode `{other}` (expected dirichlet_zero or dirichlet_payoff)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SchemeOptions {
    pub drift_form: DriftForm,
    pub boundary: BoundaryMode,
    pub execution: Execution,
}

impl SchemeOptions {
    pub fn with_boundary(mut self, boundary: BoundaryMode) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn with_drift_form(mut self, drift_form: DriftForm) -> Self {
        self.drift_form = drift_form;
        self
    }
}

/// `u^0_i = H(S₀e^{x_i})` for every node.
pub fn initial_condition(payoff: &Payoff, grid: &Grid, m: &ModelParams) -> Vec<f64> {
    (0..grid.n_nodes())
        .map(|i| payoff.value(m.s0 * grid.x(i).exp()))
        .collect()
}

/// `v_i = Σ_j ν_j (ũ_{i+j} − u_i)` with `ũ = 0` outside the grid.
pub fn apply_jump_operator(u_row: &[f64], w: &JumpWeights) -> Vec<f64> {
    let ext = extend(u_row, w, |_| 0.0);
    let mut out = vec![0.0; u_row.len()];
    jump_sums(&ext, u_row, w, 0, &mut out, Execution::Sequential);
    out
}

/// Extended row covering node indices `K_l ..= N + K_r`.
fn extend(u_row: &[f64], w: &JumpWeights, exterior: impl Fn(isize) -> f64) -> Vec<f64> {
    let n = u_row.len() as isize;
    (w.k_left..n + w.k_right)
        .map(|k| {
            if (0..n).contains(&k) {
                u_row[k as usize]
            } else {
                exterior(k)
            }
        })
        .collect()
}

/// Writes the jump sums for nodes `first .. first + out.len()`.
fn jump_sums(
    ext: &[f64],
    u_row: &[f64],
    w: &JumpWeights,
    first: usize,
    out: &mut [f64],
    exec: Execution,
) {
    let len = w.nu.len();
    exec.fill(out, |k| {
        let i = first + k;
        dot(&ext[i..i + len], &w.nu) - w.total * u_row[i]
    });
}

/// Dot product with four fixed-order partial sums.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// Solves the implicit system on interior nodes with `u_0 = boundary.0` and
/// `u_N = boundary.1`. `u_expl` already contains the explicit jump term; its
/// end entries are ignored.
pub fn implicit_step(
    u_expl: &[f64],
    coeffs: &OperatorCoeffs,
    dt: f64,
    boundary: (f64, f64),
) -> Result<Vec<f64>, TridiagError> {
    let mut ws = Workspace::new(u_expl.len() - 1);
    let mut out = vec![0.0; u_expl.len()];
    ws.implicit_step(u_expl, coeffs, dt, boundary, &mut out)?;
    Ok(out)
}

struct Workspace {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    x: Vec<f64>,
    scratch: Vec<f64>,
}

impl Workspace {
    fn new(n_space: usize) -> Self {
        let m = n_space - 1;
        let band = m.saturating_sub(1);
        Workspace {
            lower: vec![0.0; band],
            diag: vec![0.0; m],
            upper: vec![0.0; band],
            rhs: vec![0.0; m],
            x: vec![0.0; m],
            scratch: vec![0.0; m],
        }
    }

    fn implicit_step(
        &mut self,
        u_expl: &[f64],
        coeffs: &OperatorCoeffs,
        dt: f64,
        (left, right): (f64, f64),
        out: &mut [f64],
    ) -> Result<(), TridiagError> {
        let m = self.diag.len();
        for r in 0..m {
            self.diag[r] = 1.0 + coeffs.a[r] * dt;
            self.rhs[r] = u_expl[r + 1];
            if r > 0 {
                self.lower[r - 1] = -coeffs.c[r] * dt;
            }
            if r + 1 < m {
                self.upper[r] = -coeffs.b[r] * dt;
            }
        }
        self.rhs[0] += coeffs.c[0] * dt * left;
        self.rhs[m - 1] += coeffs.b[m - 1] * dt * right;
        tridiag::solve_into(
            &self.lower,
            &self.diag,
            &self.upper,
            &self.rhs,
            &mut self.x,
            &mut self.scratch,
        )?;
        out[0] = left;
        out[1..=m].copy_from_slice(&self.x);
        out[m + 1] = right;
        Ok(())
    }
}

/// A validated pricing problem, ready to run.
#[derive(Debug, Clone)]
pub struct Scheme {
    model: ModelParams,
    payoff: Payoff,
    grid: Grid,
    weights: JumpWeights,
    options: SchemeOptions,
}

impl Scheme {
    /// Validates everything a solve needs, including `Δt ≤ 1/Σν_j`.
    pub fn new(
        model: &ModelParams,
        payoff: &Payoff,
        spec: &GridSpec,
        options: SchemeOptions,
    ) -> Result<Self, SolverError> {
        let report = validate_params(model);
        if !report.is_ok() {
            return Err(SolverError::InvalidModel(report));
        }
        let grid = Grid::new(spec, model.maturity)?;
        let (b_left, b_right) = spec.truncation(model.sigma_j);
        let weights = JumpWeights::new(model, grid.dx, b_left, b_right)?;
        let bound = weights.stability_bound();
        if grid.n_time > 0 && grid.dt > bound {
            return Err(SolverError::StabilityBound { dt: grid.dt, bound });
        }
        Ok(Scheme {
            model: model.clone(),
            payoff: payoff.clone(),
            grid,
            weights,
            options,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn weights(&self) -> &JumpWeights {
        &self.weights
    }

    fn exterior_value(&self, k: isize) -> f64 {
        match self.options.boundary {
            BoundaryMode::DirichletZero => 0.0,
            BoundaryMode::DirichletPayoff => self
                .payoff
                .value(self.model.s0 * self.grid.x_signed(k).exp()),
        }
    }

    pub fn solve(&self) -> Result<Solution, SolverError> {
        let grid = &self.grid;
        let n_nodes = grid.n_nodes();
        let n_space = grid.n_space;
        let dt = grid.dt;
        let exec = self.options.execution;

        let u0 = initial_condition(&self.payoff, grid, &self.model);
        let boundary = (
            self.exterior_value(0),
            self.exterior_value(n_space as isize),
        );

        let mut values = Vec::with_capacity(n_nodes * (grid.n_time + 1));
        values.extend_from_slice(&u0);

        let offset = (-self.weights.k_left) as usize;
        let mut ext = extend(&u0, &self.weights, |k| self.exterior_value(k));
        let mut jump = vec![0.0; n_space - 1];
        let mut rhs = vec![0.0; n_nodes];
        let mut next = vec![0.0; n_nodes];
        let mut ws = Workspace::new(n_space);

        for n in 0..grid.n_time {
            let current = &values[n * n_nodes..(n + 1) * n_nodes];
            ext[offset..offset + n_nodes].copy_from_slice(current);
            jump_sums(&ext, current, &self.weights, 1, &mut jump, exec);
            for i in 1..n_space {
                rhs[i] = current[i] + dt * jump[i - 1];
            }
            let coeffs = coefficients_at_calendar_time(
                &self.model,
                grid.calendar_time(n + 1),
                grid,
                self.options.drift_form,
            );
            ws.implicit_step(&rhs, &coeffs, dt, boundary, &mut next)?;
            if next.iter().any(|v| !v.is_finite()) {
                return Err(SolverError::NonFinite { step: n + 1 });
            }
            values.extend_from_slice(&next);
        }

        Ok(Solution {
            model: self.model.clone(),
            payoff: self.payoff.clone(),
            grid: self.grid.clone(),
            values,
        })
    }
}

/// Runs the scheme for `M` steps and returns the full lattice.
pub fn price_surface(
    model: &ModelParams,
    payoff: &Payoff,
    spec: &GridSpec,
    options: SchemeOptions,
) -> Result<Solution, SolverError> {
    Scheme::new(model, payoff, spec, options)?.solve()
}

/// The `(M + 1) × (N + 1)` lattice `u^n_i`, row-major in `n`.
#[derive(Debug, Clone)]
pub struct Solution {
    model: ModelParams,
    payoff: Payoff,
    grid: Grid,
    values: Vec<f64>,
}

/// Snap distance, in cells, under which a query is treated as a node.
const NODE_SNAP: f64 = 1e-9;

impl Solution {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn model(&self) -> &ModelParams {
        &self.model
    }

    pub fn payoff(&self) -> &Payoff {
        &self.payoff
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, n: usize) -> &[f64] {
        let w = self.grid.n_nodes();
        &self.values[n * w..(n + 1) * w]
    }

    pub fn value(&self, n: usize, i: usize) -> f64 {
        self.values[n * self.grid.n_nodes() + i]
    }

    /// Option price `C = e^{−rτ_n} u^n_i` at a lattice node.
    pub fn node_price(&self, n: usize, i: usize) -> f64 {
        (-self.model.r * self.grid.tau(n)).exp() * self.value(n, i)
    }

    pub fn spot(&self, i: usize) -> f64 {
        self.model.s0 * self.grid.x(i).exp()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Transformed value `u(τ, x)` by bilinear interpolation.
    pub fn u_at(&self, tau: f64, x: f64) -> Result<f64, SolverError> {
        let g = &self.grid;
        let (n0, wt) = locate(tau / g.dt.max(f64::MIN_POSITIVE), g.n_time, g.n_time == 0);
        let (i0, wx) = locate((x - g.x_left) / g.dx, g.n_space, false);
        let at_row = |n: usize| {
            if wx == 0.0 {
                self.value(n, i0)
            } else {
                (1.0 - wx) * self.value(n, i0) + wx * self.value(n, i0 + 1)
            }
        };
        if wt == 0.0 {
            Ok(at_row(n0))
        } else {
            Ok((1.0 - wt) * at_row(n0) + wt * at_row(n0 + 1))
        }
    }

    /// Option price `C(t, S)`; no extrapolation outside the grid.
    pub fn price_at(&self, t: f64, spot: f64) -> Result<f64, SolverError> {
        let g = &self.grid;
        let maturity = self.model.maturity;
        if !(0.0..=maturity).contains(&t) {
            return Err(SolverError::TimeOutOfRange { t, maturity });
        }
        let lo = self.model.s0 * g.x_left.exp();
        let hi = self.model.s0 * g.x_right.exp();
        let x = (spot / self.model.s0).ln();
        let tol = NODE_SNAP * g.dx;
        if !(spot > 0.0) || x < g.x_left - tol || x > g.x_right + tol {
            return Err(SolverError::SpotOutOfRange { spot, lo, hi });
        }
        let tau = maturity - t;
        Ok((-self.model.r * tau).exp() * self.u_at(tau, x)?)
    }

    /// CSV with header `tau,x,S,u,C`, one row per node, `n`-major.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "tau,x,S,u,C")?;
        for n in 0..=self.grid.n_time {
            let tau = self.grid.tau(n);
            for i in 0..self.grid.n_nodes() {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    tau,
                    self.grid.x(i),
                    self.spot(i),
                    self.value(n, i),
                    self.node_price(n, i)
                )?;
            }
        }
        Ok(())
    }
}

/// Cell index and fractional weight for a continuous position in `[0, last]`,
/// snapping to nodes within [`NODE_SNAP`].
fn locate(pos: f64, last: usize, degenerate: bool) -> (usize, f64) {
    if degenerate || last == 0 {
        return (0, 0.0);
    }
    let pos = pos.clamp(0.0, last as f64);
    let nearest = pos.round();
    if (pos - nearest).abs() <= NODE_SNAP {
        let k = nearest as usize;
        return (k, 0.0);
    }
    let k = (pos.floor() as usize).min(last - 1);
    (k, pos - k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{operator_coefficients, upwind_coefficients};
    use crate::test_support::dense_solve;
    use proptest::prelude::*;

    fn no_jump_model() -> ModelParams {
        ModelParams::constant(0.04, 0.0, 0.5, 0.0, 0.5, 0.04, 50.0, 1.0)
    }

    #[test]
    fn initial_condition_values() {
        let m = ModelParams::reference();
        let call = Payoff::call(45.0).unwrap();
        let x_atm = (45.0f64 / 50.0).ln();
        let g = Grid::new(&GridSpec::new(x_atm, -x_atm, 2, 1), 1.0).unwrap();
        let u0 = initial_condition(&call, &g, &m);
        assert!(u0[0].abs() < 1e-12);
        assert_eq!(u0[1], 5.0);

        let put = Payoff::put(45.0).unwrap();
        let g = Grid::new(&GridSpec::new(-3.0, 3.0, 300, 1), 1.0).unwrap();
        assert!(initial_condition(&put, &g, &m).iter().all(|&v| v <= 45.0));
    }

    fn brute_force_jump(u: &[f64], w: &JumpWeights) -> Vec<f64> {
        let n = u.len() as isize;
        (0..n)
            .map(|i| {
                let mut s = 0.0;
                for j in w.k_left..=w.k_right {
                    let k = i + j;
                    let uk = if (0..n).contains(&k) {
                        u[k as usize]
                    } else {
                        0.0
                    };
                    s += w.weight(j) * (uk - u[i as usize]);
                }
                s
            })
            .collect()
    }

    #[test]
    fn jump_operator_annihilates_constants_on_full_stencils() {
        let m = ModelParams::reference();
        let w = JumpWeights::new(&m, 0.05, -0.6, 0.6).unwrap();
        let u = vec![3.0; 101];
        let v = apply_jump_operator(&u, &w);
        let reach = w.k_right.max(-w.k_left) as usize;
        for (i, vi) in v.iter().enumerate().take(101 - reach).skip(reach) {
            assert!(vi.abs() < 1e-14, "i={i}: {vi}");
        }
        // truncated stencils leak mass at the edges
        assert!(v[0] < 0.0 && v[100] < 0.0);
    }

    #[test]
    fn jump_operator_without_jumps_is_zero() {
        let mut m = ModelParams::reference();
        m.ell = 0.0;
        let w = JumpWeights::new(&m, 0.05, -1.0, 1.0).unwrap();
        let u: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        assert!(apply_jump_operator(&u, &w).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn jump_operator_on_unit_spike() {
        let m = ModelParams::reference();
        let w = JumpWeights::new(&m, 0.05, -0.7, 0.4).unwrap();
        let k = 20;
        let mut u = vec![0.0; 41];
        u[k] = 1.0;
        let v = apply_jump_operator(&u, &w);
        let oracle = brute_force_jump(&u, &w);
        for i in 0..41 {
            let expected = w.weight(k as isize - i as isize) - if i == k { w.total } else { 0.0 };
            assert!((v[i] - expected).abs() < 1e-15);
            assert!((v[i] - oracle[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn jump_operator_matches_brute_force_on_random_rows() {
        let m = ModelParams::reference();
        let w = JumpWeights::new(&m, 0.03, -1.1, 0.9).unwrap();
        let u: Vec<f64> = (0..80)
            .map(|i| ((i * 37 % 17) as f64).cos() * 4.0)
            .collect();
        let v = apply_jump_operator(&u, &w);
        for (a, b) in v.iter().zip(brute_force_jump(&u, &w)) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn implicit_step_with_zero_dt_is_identity() {
        let m = ModelParams::reference();
        let g = Grid::new(&GridSpec::new(-1.0, 1.0, 10, 10), 1.0).unwrap();
        let oc = operator_coefficients(&m, 0.1, &g, DriftForm::Derived).unwrap();
        let u: Vec<f64> = (0..11).map(|i| i as f64 * 0.3).collect();
        let out = implicit_step(&u, &oc, 0.0, (u[0], u[10])).unwrap();
        assert_eq!(out, u);
    }

    #[test]
    fn implicit_step_preserves_constants_without_drift() {
        let g = Grid::new(&GridSpec::new(-1.0, 1.0, 16, 4), 1.0).unwrap();
        let (a, b, c) = upwind_coefficients(0.0, 0.09, g.dx);
        let oc = OperatorCoeffs {
            a: vec![a; 15],
            b: vec![b; 15],
            c: vec![c; 15],
        };
        let u = vec![2.5; 17];
        let out = implicit_step(&u, &oc, 0.05, (2.5, 2.5)).unwrap();
        for v in out {
            assert!((v - 2.5).abs() < 1e-13);
        }
    }

    #[test]
    fn implicit_step_matches_dense_oracle() {
        let n_space = 20;
        let dt = 0.01;
        let g = Grid::new(&GridSpec::new(-1.0, 1.0, n_space, 1), 1.0).unwrap();
        let (a, b, c) = upwind_coefficients(0.0, 0.36, g.dx);
        let m = n_space - 1;
        let oc = OperatorCoeffs {
            a: vec![a; m],
            b: vec![b; m],
            c: vec![c; m],
        };
        let u: Vec<f64> = g.xs().iter().map(|x| 1.0 + x * x).collect();
        let out = implicit_step(&u, &oc, dt, (u[0], u[n_space])).unwrap();

        let mut dense = vec![vec![0.0; n_space + 1]; n_space + 1];
        dense[0][0] = 1.0;
        dense[n_space][n_space] = 1.0;
        for i in 1..n_space {
            dense[i][i - 1] = -c * dt;
            dense[i][i] = 1.0 + a * dt;
            dense[i][i + 1] = -b * dt;
        }
        let oracle = dense_solve(dense, u.clone());
        for (x, y) in out.iter().zip(&oracle) {
            assert!((x - y).abs() <= 1e-10 * y.abs().max(1.0));
        }
    }

    #[test]
    fn zero_steps_keep_only_the_payoff() {
        let m = ModelParams::reference();
        let call = Payoff::call(45.0).unwrap();
        let sol = price_surface(
            &m,
            &call,
            &GridSpec::new(-1.0, 1.0, 50, 0),
            SchemeOptions::default(),
        )
        .unwrap();
        assert_eq!(sol.values().len(), 51);
        assert_eq!(
            sol.row(0),
            initial_condition(&call, sol.grid(), &m).as_slice()
        );
    }

    #[test]
    fn refuses_steps_above_the_stability_bound() {
        let mut m = ModelParams::reference();
        m.ell = 20.0;
        let err = price_surface(
            &m,
            &Payoff::put(45.0).unwrap(),
            &GridSpec::new(-1.0, 1.0, 50, 10),
            SchemeOptions::default(),
        )
        .unwrap_err();
        match err {
            SolverError::StabilityBound { dt, bound } => {
                assert_eq!(dt, 0.1);
                assert!((bound - 0.05).abs() < 1e-6);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn refuses_invalid_models() {
        let mut m = ModelParams::reference();
        m.sigma_j = -1.0;
        let err = price_surface(
            &m,
            &Payoff::put(45.0).unwrap(),
            &GridSpec::new(-1.0, 1.0, 50, 10),
            SchemeOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, SolverError::InvalidModel(_)));
    }

    #[test]
    fn reference_configuration_stays_bounded() {
        let m = ModelParams::reference();
        let call = Payoff::call(45.0).unwrap();
        let sol =
            price_surface(&m, &call, &GridSpec::reference(), SchemeOptions::default()).unwrap();
        let max_payoff = sol.row(0).iter().fold(0.0f64, |a, &b| a.max(b));
        assert!(sol
            .values()
            .iter()
            .all(|v| v.is_finite() && v.abs() <= max_payoff));
    }

    #[test]
    fn black_scholes_degenerate_case() {
        let m = no_jump_model();
        let call = Payoff::call(45.0).unwrap();
        let opts = SchemeOptions::default().with_boundary(BoundaryMode::DirichletPayoff);
        let sol = price_surface(&m, &call, &GridSpec::new(-2.5, 2.5, 500, 200), opts).unwrap();
        let bs = 12.962_558_834_466_775;
        let pide = sol.price_at(0.0, 50.0).unwrap();
        assert!((pide - bs).abs() / bs < 0.01, "{pide} vs {bs}");
        // same quantity in the transformed variable
        let u = sol.u_at(1.0, 0.0).unwrap();
        assert!((u - 0.04f64.exp() * bs).abs() / bs < 0.01);
    }

    #[test]
    fn price_at_nodes_and_payoff_row() {
        let m = ModelParams::reference();
        let call = Payoff::call(45.0).unwrap();
        let sol = price_surface(
            &m,
            &call,
            &GridSpec::new(-1.0, 1.0, 40, 20),
            SchemeOptions::default(),
        )
        .unwrap();
        for i in [0usize, 7, 20, 33, 40] {
            let s = sol.spot(i);
            assert_eq!(sol.price_at(1.0, s).unwrap(), call.value(s));
        }
        for (n, i) in [(3usize, 11usize), (20, 20), (10, 1)] {
            let t = 1.0 - sol.grid().tau(n);
            assert_eq!(sol.price_at(t, sol.spot(i)).unwrap(), sol.node_price(n, i));
        }
        assert!(matches!(
            sol.price_at(0.0, 50.0 * 3.0f64.exp()),
            Err(SolverError::SpotOutOfRange { .. })
        ));
        assert!(matches!(
            sol.price_at(1.5, 50.0),
            Err(SolverError::TimeOutOfRange { .. })
        ));
    }

    #[test]
    fn interpolation_between_nodes() {
        let m = ModelParams::reference();
        let put = Payoff::put(45.0).unwrap();
        let sol = price_surface(
            &m,
            &put,
            &GridSpec::new(-1.0, 1.0, 40, 20),
            SchemeOptions::default(),
        )
        .unwrap();
        let g = sol.grid().clone();
        let x = 0.5 * (g.x(10) + g.x(11));
        let tau = 0.5 * (g.tau(4) + g.tau(5));
        let expected =
            0.25 * (sol.value(4, 10) + sol.value(4, 11) + sol.value(5, 10) + sol.value(5, 11));
        assert!((sol.u_at(tau, x).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let m = ModelParams::reference();
        let call = Payoff::call(45.0).unwrap();
        let sol = price_surface(
            &m,
            &call,
            &GridSpec::new(-0.5, 0.5, 4, 2),
            SchemeOptions::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        sol.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "tau,x,S,u,C");
        assert_eq!(lines.len(), 1 + 3 * 5);
        assert!(lines[1].starts_with("0,-0.5,"));
        assert!(lines[15].starts_with("1,0.5,"));
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let m = ModelParams::reference();
        let call = Payoff::call(45.0).unwrap();
        let spec = GridSpec::new(-2.0, 2.0, 400, 50);
        let seq = price_surface(
            &m,
            &call,
            &spec,
            SchemeOptions::default().with_execution(Execution::Sequential),
        )
        .unwrap();
        let par = price_surface(
            &m,
            &call,
            &spec,
            SchemeOptions::default().with_execution(Execution::Parallel),
        )
        .unwrap();
        assert_eq!(seq.values(), par.values());
    }

    #[test]
    fn boundary_mode_parsing() {
        assert_eq!(
            "dirichlet_payoff".parse::<BoundaryMode>().unwrap(),
            BoundaryMode::DirichletPayoff
        );
        assert!("neumann".parse::<BoundaryMode>().is_err());
    }

    fn node_table(sol_grid: &Grid, m: &ModelParams, f: impl Fn(f64) -> f64) -> Payoff {
        let spots: Vec<f64> = sol_grid.xs().iter().map(|x| m.s0 * x.exp()).collect();
        Payoff::tabulate(&spots, f).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn scheme_is_linear_in_the_payoff(a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let m = ModelParams::reference();
            let spec = GridSpec::new(-1.0, 1.0, 60, 20);
            let g = Grid::new(&spec, m.maturity).unwrap();
            let h1 = |s: f64| (s - 45.0f64).max(0.0);
            let h2 = |s: f64| (40.0 - s).max(0.0) + 0.1 * s;
            let p1 = node_table(&g, &m, h1);
            let p2 = node_table(&g, &m, h2);
            let p3 = node_table(&g, &m, |s| a * h1(s) + b * h2(s));
            let opts = SchemeOptions::default();
            let s1 = price_surface(&m, &p1, &spec, opts).unwrap();
            let s2 = price_surface(&m, &p2, &spec, opts).unwrap();
            let s3 = price_surface(&m, &p3, &spec, opts).unwrap();
            let scale = s3.max_abs().max(1.0);
            for k in 0..s3.values().len() {
                let lin = a * s1.values()[k] + b * s2.values()[k];
                prop_assert!((s3.values()[k] - lin).abs() <= 1e-10 * scale);
            }
        }

        #[test]
        fn bounded_payoffs_stay_bounded(strike in 20.0f64..80.0, m_steps in 2usize..40) {
            let m = ModelParams::reference();
            let put = Payoff::put(strike).unwrap();
            let sol = price_surface(&m, &put, &GridSpec::new(-1.5, 1.5, 90, m_steps), SchemeOptions::default()).unwrap();
            prop_assert!(sol.max_abs() <= strike);
        }
    }
}
