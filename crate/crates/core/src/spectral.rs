//! Mode-by-mode solution of the truncated system.
//!
//! The coefficients `u_k(t) = int u(x, t) Y_k(x) dx` satisfy
//!
//! ```text
//! u_0''      = F_0
//! u_{2k-1}'' + lambda_k^2 u_{2k-1} = F_{2k-1}
//! u_{2k}''   + lambda_k^2 u_{2k}   = F_{2k} - 2 p lambda_k u_{2k-1}
//! u_k(0) + delta1 u_k(T) = phi_k,   u_k'(0) + delta2 u_k'(T) = psi_k
//! ```
//!
//! with `F_k = a(t) u_k(t) + f_k(t)`. Each equation is solved by its Green's
//! kernel, discretised once per mode as a dense `n x n` matrix.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{eval_x, lambda, BasisParams, ModeIndex, Projector};
use crate::error::{Error, Result};
use crate::expr::Var;
use crate::kernels::{
    g0_after, g0_before, gk_after, gk_before, phi_bracket, psi_bracket, rho_k, NonlocalParams,
};
use crate::problem::{Grids, ProblemData};
use crate::quadrature::{piece_weights, UniformGrid};

/// Guard for the observation: `|h(t)|` must stay above this everywhere.
pub const EPS_H: f64 = 1e-8;

/// A function sampled on the time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGridFunction {
    pub grid: UniformGrid,
    pub values: Vec<f64>,
}

impl TimeGridFunction {
    pub fn new(grid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values on a {}-point time grid",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite time-grid value".into()));
        }
        Ok(TimeGridFunction { grid, values })
    }

    pub fn zeros(grid: UniformGrid) -> Self {
        TimeGridFunction { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: UniformGrid, f: impl Fn(f64) -> f64) -> Self {
        TimeGridFunction { grid, values: grid.nodes().into_iter().map(f).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// How the odd mode feeds the even-mode equation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingMode {
    /// `-2 p lambda_k int G_k(t, tau) u_{2k-1}(tau) dtau`, so the even mode
    /// satisfies its ODE.
    #[default]
    OdeConsistent,
    /// The printed closed form: `-phi_{2k-1} Pb(t) + psi_{2k-1}/lambda_k Qb(t)
    /// plus int G_k int G_k F_{2k-1}`, with the printed sign in the coefficient
    /// formula.
    AsPrinted,
}

impl std::str::FromStr for CouplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ode-consistent" => Ok(CouplingMode::OdeConsistent),
            "as-printed" => Ok(CouplingMode::AsPrinted),
            other => Err(Error::InvalidInput(format!(
                "unknown coupling mode `{other}` (expected ode-consistent or as-printed)"
            ))),
        }
    }
}

/// Projections of the data onto the dual family.
#[derive(Clone, Debug)]
pub struct DataCoefficients {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub f: Vec<TimeGridFunction>,
    pub h: TimeGridFunction,
    /// `h''(t)`.
    pub h2: TimeGridFunction,
    /// `f(1/2, t)`.
    pub f_mid: TimeGridFunction,
}

impl DataCoefficients {
    pub fn k_max(&self) -> usize {
        (self.phi.len() - 1) / 2
    }

    pub fn grid(&self) -> UniformGrid {
        self.h.grid
    }
}

/// Mode coefficients `u_k(t_j)`, `k = 0..=2K`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState {
    pub modes: Vec<TimeGridFunction>,
}

impl SpectralState {
    pub fn zeros(k_max: usize, grid: UniformGrid) -> Self {
        SpectralState { modes: vec![TimeGridFunction::zeros(grid); 2 * k_max + 1] }
    }

    pub fn k_max(&self) -> usize {
        (self.modes.len() - 1) / 2
    }

    pub fn grid(&self) -> UniformGrid {
        self.modes[0].grid
    }

    pub fn mode(&self, idx: ModeIndex) -> &TimeGridFunction {
        &self.modes[idx.flat()]
    }

    /// Coefficient vector at time node `j`.
    pub fn at(&self, j: usize) -> Vec<f64> {
        self.modes.iter().map(|m| m.values[j]).collect()
    }
}

/// Projects the problem data onto the first `2K + 1` dual functions.
pub fn extract_data(problem: &ProblemData, k_max: usize, grids: &Grids) -> Result<DataCoefficients> {
    extract_data_with(problem, k_max, grids, true)
}

/// As [`extract_data`]; the guard on `h` is skipped when the observation
/// plays no role, as in the direct problem.
pub(crate) fn extract_data_with(
    problem: &ProblemData,
    k_max: usize,
    grids: &Grids,
    guard_h: bool,
) -> Result<DataCoefficients> {
    if k_max == 0 {
        return Err(Error::InvalidInput("truncation K must be at least 1".into()));
    }
    check_horizon(grids, problem.horizon())?;
    let projector = Projector::new(k_max, &problem.basis, grids.x)?;
    let tgrid = grids.t;
    let (nx, nt) = (grids.x.len(), tgrid.len());

    let h = problem.h.sample(Var::T, &tgrid)?;
    for (t, v) in tgrid.nodes().into_iter().zip(&h) {
        if guard_h && v.abs() < EPS_H {
            return Err(Error::HNearZero { t, value: *v, eps: EPS_H });
        }
    }
    let h2 = problem.h.derivative(Var::T, 2)?.sample(Var::T, &tgrid)?;

    let phi = projector.project(&problem.phi.sample(Var::X, &grids.x)?)?;
    let psi = projector.project(&problem.psi.sample(Var::X, &grids.x)?)?;

    let fs = problem.f.sample_2d(&grids.x, &tgrid)?;
    let per_time: Vec<Vec<f64>> = (0..nt)
        .into_par_iter()
        .map(|j| {
            let col: Vec<f64> = (0..nx).map(|i| fs[i * nt + j]).collect();
            projector.project(&col)
        })
        .collect::<Result<_>>()?;
    let f = (0..2 * k_max + 1)
        .map(|m| TimeGridFunction::new(tgrid, per_time.iter().map(|c| c[m]).collect()))
        .collect::<Result<_>>()?;

    let f_mid = tgrid
        .nodes()
        .into_iter()
        .map(|t| problem.f.eval_xt(0.5, t))
        .collect::<Result<Vec<_>>>()?;

    Ok(DataCoefficients {
        phi,
        psi,
        f,
        h: TimeGridFunction::new(tgrid, h)?,
        h2: TimeGridFunction::new(tgrid, h2)?,
        f_mid: TimeGridFunction::new(tgrid, f_mid)?,
    })
}

fn check_horizon(grids: &Grids, horizon: f64) -> Result<()> {
    if grids.t.start() != 0.0 || (grids.t.end() - horizon).abs() > 1e-12 * horizon.max(1.0) {
        return Err(Error::GridMismatch(format!(
            "time grid [{}, {}] does not cover [0, T = {horizon}]",
            grids.t.start(),
            grids.t.end()
        )));
    }
    Ok(())
}

/// `F_k(t_j) = a(t_j) u_k(t_j) + f_k(t_j)`.
pub fn assemble_f(
    state: &SpectralState,
    a: &TimeGridFunction,
    data: &DataCoefficients,
) -> Result<Vec<TimeGridFunction>> {
    if state.modes.len() != data.f.len() {
        return Err(Error::GridMismatch(format!(
            "state has {} modes, data has {}",
            state.modes.len(),
            data.f.len()
        )));
    }
    state
        .modes
        .iter()
        .zip(&data.f)
        .map(|(u, f)| {
            if u.len() != a.len() || f.len() != a.len() {
                return Err(Error::GridMismatch("time grids differ".into()));
            }
            Ok(TimeGridFunction {
                grid: u.grid,
                values: u
                    .values
                    .iter()
                    .zip(&a.values)
                    .zip(&f.values)
                    .map(|((u, a), f)| a * u + f)
                    .collect(),
            })
        })
        .collect()
}

/// Discretised kernel: row `j` integrates against `G(t_j, .)`.
///
/// The piece `[0, t_j]` uses the `t >= tau` branch and `[t_j, T]` the
/// `t < tau` branch. A one-interval piece borrows nodes from across the kink
/// and evaluates the same branch there, i.e. its analytic continuation.
fn kernel_matrix(
    grid: &UniformGrid,
    before: impl Fn(f64, f64) -> f64,
    after: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    let n = grid.len();
    let nodes = grid.nodes();
    let mut m = vec![0.0; n * n];
    for (j, &t) in nodes.iter().enumerate() {
        let row = &mut m[j * n..(j + 1) * n];
        for (i, w) in piece_weights(grid, 0, j) {
            row[i] += w * after(t, nodes[i]);
        }
        for (i, w) in piece_weights(grid, j, n - 1) {
            row[i] += w * before(t, nodes[i]);
        }
    }
    m
}

fn matvec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    m.chunks_exact(n)
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Inputs from the odd mode that drive the even mode of the same `k`.
#[derive(Clone, Copy, Debug)]
pub struct OddCoupling<'a> {
    pub phi: f64,
    pub psi: f64,
    pub forcing: &'a [f64],
    /// The odd-mode solution built from `phi`, `psi` and `forcing`.
    pub solution: &'a [f64],
}

/// Precomputed kernels for modes `0..=K` on one time grid.
#[derive(Clone, Debug)]
pub struct ModeSolver {
    np: NonlocalParams,
    p: f64,
    grid: UniformGrid,
    rho: Vec<f64>,
    kernels: Vec<Vec<f64>>,
}

impl ModeSolver {
    pub fn new(
        k_max: usize,
        np: &NonlocalParams,
        params: &BasisParams,
        grid: UniformGrid,
    ) -> Result<Self> {
        if (grid.end() - np.horizon).abs() > 1e-12 * np.horizon.max(1.0) || grid.start() != 0.0 {
            return Err(Error::GridMismatch(format!(
                "time grid [{}, {}] does not cover [0, T = {}]",
                grid.start(),
                grid.end(),
                np.horizon
            )));
        }
        let rho = std::iter::once(Ok(1.0))
            .chain((1..=k_max).map(|k| rho_k(k, np)))
            .collect::<Result<Vec<_>>>()?;
        let np = *np;
        let kernels = (0..=k_max)
            .into_par_iter()
            .map(|k| {
                if k == 0 {
                    kernel_matrix(&grid, |t, s| g0_before(t, s, &np), |t, s| g0_after(t, s, &np))
                } else {
                    let (l, r) = (lambda(k), rho[k]);
                    kernel_matrix(
                        &grid,
                        |t, s| gk_before(l, r, t, s, &np),
                        |t, s| gk_after(l, r, t, s, &np),
                    )
                }
            })
            .collect();
        Ok(ModeSolver { np, p: params.p, grid, rho, kernels })
    }

    pub fn k_max(&self) -> usize {
        self.kernels.len() - 1
    }

    pub fn grid(&self) -> UniformGrid {
        self.grid
    }

    pub fn nonlocal(&self) -> &NonlocalParams {
        &self.np
    }

    /// `int_0^T G_k(t_j, tau) F(tau) dtau` for every node `t_j`.
    pub fn apply_kernel(&self, k: usize, forcing: &[f64]) -> Vec<f64> {
        matvec(&self.kernels[k], forcing)
    }

    fn homogeneous0(&self, phi0: f64, psi0: f64, t: f64) -> f64 {
        let NonlocalParams { delta1: d1, delta2: d2, horizon: tt } = self.np;
        phi0 / (1.0 + d1) + (t - d1 * (tt - t)) / ((1.0 + d1) * (1.0 + d2)) * psi0
    }

    fn homogeneous(&self, k: usize, phi: f64, psi: f64, t: f64) -> f64 {
        let NonlocalParams { delta1: d1, delta2: d2, horizon: tt } = self.np;
        let l = lambda(k);
        (phi * ((l * t).cos() + d2 * (l * (tt - t)).cos())
            + psi / l * ((l * t).sin() - d1 * (l * (tt - t)).sin()))
            / self.rho[k]
    }

    pub fn solve_u0(&self, phi0: f64, psi0: f64, forcing: &[f64]) -> TimeGridFunction {
        let integral = self.apply_kernel(0, forcing);
        let values = self
            .grid
            .nodes()
            .into_iter()
            .zip(integral)
            .map(|(t, g)| self.homogeneous0(phi0, psi0, t) + g)
            .collect();
        TimeGridFunction { grid: self.grid, values }
    }

    pub fn solve_u_odd(&self, k: usize, phi: f64, psi: f64, forcing: &[f64]) -> TimeGridFunction {
        let integral = self.apply_kernel(k, forcing);
        let values = self
            .grid
            .nodes()
            .into_iter()
            .zip(integral)
            .map(|(t, g)| self.homogeneous(k, phi, psi, t) + g)
            .collect();
        TimeGridFunction { grid: self.grid, values }
    }

    pub fn solve_u_even(
        &self,
        k: usize,
        phi: f64,
        psi: f64,
        forcing: &[f64],
        odd: OddCoupling<'_>,
        mode: CouplingMode,
    ) -> Result<TimeGridFunction> {
        let l = lambda(k);
        let base = self.solve_u_odd(k, phi, psi, forcing);
        let coupling: Vec<f64> = match mode {
            CouplingMode::OdeConsistent => self
                .apply_kernel(k, odd.solution)
                .into_iter()
                .map(|v| -2.0 * self.p * l * v)
                .collect(),
            CouplingMode::AsPrinted => {
                let inner = self.apply_kernel(k, odd.forcing);
                let double = self.apply_kernel(k, &inner);
                self.grid
                    .nodes()
                    .into_iter()
                    .zip(double)
                    .map(|(t, d)| {
                        Ok(-odd.phi * phi_bracket(k, t, &self.np)?
                            + odd.psi / l * psi_bracket(k, t, &self.np)?
                            + d)
                    })
                    .collect::<Result<_>>()?
            }
        };
        let values = base.values.iter().zip(&coupling).map(|(a, b)| a + b).collect();
        Ok(TimeGridFunction { grid: self.grid, values })
    }

    /// All modes from the data and the sources `F_k`, modes solved in parallel.
    pub fn solve_all(
        &self,
        data: &DataCoefficients,
        forcing: &[TimeGridFunction],
        mode: CouplingMode,
    ) -> Result<SpectralState> {
        let k_max = data.k_max();
        if k_max > self.k_max() || forcing.len() != 2 * k_max + 1 {
            return Err(Error::GridMismatch(format!(
                "solver built for K = {}, data has K = {k_max}, {} sources",
                self.k_max(),
                forcing.len()
            )));
        }
        let pairs: Vec<(TimeGridFunction, TimeGridFunction)> = (1..=k_max)
            .into_par_iter()
            .map(|k| {
                let (o, e) = (2 * k - 1, 2 * k);
                let odd = self.solve_u_odd(k, data.phi[o], data.psi[o], &forcing[o].values);
                let coupling = OddCoupling {
                    phi: data.phi[o],
                    psi: data.psi[o],
                    forcing: &forcing[o].values,
                    solution: &odd.values,
                };
                let even = self.solve_u_even(
                    k,
                    data.phi[e],
                    data.psi[e],
                    &forcing[e].values,
                    coupling,
                    mode,
                )?;
                Ok((odd, even))
            })
            .collect::<Result<_>>()?;
        let mut modes = Vec::with_capacity(2 * k_max + 1);
        modes.push(self.solve_u0(data.phi[0], data.psi[0], &forcing[0].values));
        for (odd, even) in pairs {
            modes.push(odd);
            modes.push(even);
        }
        Ok(SpectralState { modes })
    }
}

fn single_mode_solver(k: usize, np: &NonlocalParams, p: f64, grid: UniformGrid) -> Result<ModeSolver> {
    let rho = if k == 0 { 1.0 } else { rho_k(k, np)? };
    let np = *np;
    let kernel = if k == 0 {
        kernel_matrix(&grid, |t, s| g0_before(t, s, &np), |t, s| g0_after(t, s, &np))
    } else {
        let l = lambda(k);
        kernel_matrix(&grid, |t, s| gk_before(l, rho, t, s, &np), |t, s| gk_after(l, rho, t, s, &np))
    };
    let mut kernels = vec![Vec::new(); k + 1];
    kernels[k] = kernel;
    let mut rhos = vec![1.0; k + 1];
    rhos[k] = rho;
    Ok(ModeSolver { np, p, grid, rho: rhos, kernels })
}

/// Mode-zero solution for the given data and source.
pub fn solve_u0(phi0: f64, psi0: f64, forcing: &TimeGridFunction, np: &NonlocalParams) -> Result<TimeGridFunction> {
    Ok(single_mode_solver(0, np, 0.0, forcing.grid)?.solve_u0(phi0, psi0, &forcing.values))
}

/// Odd-mode solution `u_{2k-1}` for the given data and source.
pub fn solve_u_odd(
    k: usize,
    phi: f64,
    psi: f64,
    forcing: &TimeGridFunction,
    np: &NonlocalParams,
) -> Result<TimeGridFunction> {
    if k == 0 {
        return Err(Error::ZeroMode(k));
    }
    Ok(single_mode_solver(k, np, 0.0, forcing.grid)?.solve_u_odd(k, phi, psi, &forcing.values))
}

/// Even-mode solution `u_{2k}`, including the coupling to `u_{2k-1}`.
pub fn solve_u_even(
    k: usize,
    data: &DataCoefficients,
    f_even: &TimeGridFunction,
    f_odd: &TimeGridFunction,
    np: &NonlocalParams,
    params: &BasisParams,
    mode: CouplingMode,
) -> Result<TimeGridFunction> {
    if k == 0 {
        return Err(Error::ZeroMode(k));
    }
    let (o, e) = (2 * k - 1, 2 * k);
    let solver = single_mode_solver(k, np, params.p, f_even.grid)?;
    let odd = solver.solve_u_odd(k, data.phi[o], data.psi[o], &f_odd.values);
    solver.solve_u_even(
        k,
        data.phi[e],
        data.psi[e],
        &f_even.values,
        OddCoupling {
            phi: data.phi[o],
            psi: data.psi[o],
            forcing: &f_odd.values,
            solution: &odd.values,
        },
        mode,
    )
}

/// `u(x_i, t_j)` as `values[i * nt + j]`.
pub fn synthesize_field(state: &SpectralState, params: &BasisParams, xgrid: &UniformGrid) -> Vec<f64> {
    let nt = state.grid().len();
    let xs = xgrid.nodes();
    let mut out = vec![0.0; xs.len() * nt];
    out.par_chunks_mut(nt).zip(xs.par_iter()).for_each(|(row, &x)| {
        for (m, u) in state.modes.iter().enumerate() {
            let xv = eval_x(ModeIndex::from_flat(m), params, x);
            if xv == 0.0 {
                continue;
            }
            for (r, v) in row.iter_mut().zip(&u.values) {
                *r += xv * v;
            }
        }
    });
    out
}

/// Per-mode residuals of the mode equations and the nonlocal conditions.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct OdeResidual {
    /// `max_j |D^2 u_k + lambda_k^2 u_k - RHS_k|` over interior nodes.
    pub equation: Vec<f64>,
    /// `|u_k(0) + delta1 u_k(T) - phi_k|`.
    pub value_condition: Vec<f64>,
    /// `|u_k'(0) + delta2 u_k'(T) - psi_k|` with one-sided stencils.
    pub slope_condition: Vec<f64>,
}

impl OdeResidual {
    pub fn max_equation(&self) -> f64 {
        self.equation.iter().fold(0.0, |m, v| m.max(*v))
    }

    pub fn max_condition(&self) -> f64 {
        self.value_condition
            .iter()
            .chain(&self.slope_condition)
            .fold(0.0, |m, v| m.max(*v))
    }
}

/// Finite-difference check of a state against the mode equations.
pub fn ode_residual(
    state: &SpectralState,
    forcing: &[TimeGridFunction],
    data: &DataCoefficients,
    np: &NonlocalParams,
    params: &BasisParams,
) -> Result<OdeResidual> {
    let grid = state.grid();
    let n = grid.len();
    if n < 5 {
        return Err(Error::InvalidGrid(format!("residual needs at least 5 time nodes, got {n}")));
    }
    if forcing.len() != state.modes.len() || data.phi.len() != state.modes.len() {
        return Err(Error::GridMismatch("mode counts differ".into()));
    }
    let h = grid.step();
    let mut out = OdeResidual::default();
    for (m, u) in state.modes.iter().enumerate() {
        let idx = ModeIndex::from_flat(m);
        let l2 = match idx {
            ModeIndex::Zero => 0.0,
            _ => lambda(idx.k()).powi(2),
        };
        let v = &u.values;
        let mut worst: f64 = 0.0;
        for j in 1..n - 1 {
            let d2 = (v[j + 1] - 2.0 * v[j] + v[j - 1]) / (h * h);
            let mut rhs = forcing[m].values[j];
            if let ModeIndex::Even(k) = idx {
                rhs -= 2.0 * params.p * lambda(k) * state.modes[2 * k - 1].values[j];
            }
            worst = worst.max((d2 + l2 * v[j] - rhs).abs());
        }
        out.equation.push(worst);
        out.value_condition
            .push((v[0] + np.delta1 * v[n - 1] - data.phi[m]).abs());
        let d0 = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
        let d1 = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
        out.slope_condition.push((d0 + np.delta2 * d1 - data.psi[m]).abs());
    }
    Ok(out)
}
