//! Fixed-point iteration for the pair `(u, a)`.
//!
//! One step maps `z = (u, a)` to `Phi(z)`: the modes are re-solved with the
//! sources `F_k = a u_k + f_k`, and `a` is recovered from the observation at
//! `x = 1/2` using the freshly computed odd modes.

use serde::Serialize;

use crate::basis::{eval_x_derivs, lambda, BasisParams, ModeIndex};
use crate::conditions::{norm_b, norm_e};
use crate::error::{Error, Result};
use crate::expr::Var;
use crate::problem::{DataFn, Grids, ProblemData};
use crate::quadrature::{integrate, UniformGrid};
use crate::spectral::{
    assemble_f, extract_data, extract_data_with, CouplingMode, DataCoefficients, ModeSolver, SpectralState,
    TimeGridFunction,
};

/// A point `(u, a)` of the iteration space.
#[derive(Clone, Debug, PartialEq)]
pub struct Iterate {
    pub state: SpectralState,
    pub a: TimeGridFunction,
}

impl Iterate {
    pub fn zeros(k_max: usize, grid: UniformGrid) -> Self {
        Iterate { state: SpectralState::zeros(k_max, grid), a: TimeGridFunction::zeros(grid) }
    }

    /// `z - w`, mode by mode.
    pub fn difference(&self, other: &Iterate) -> Result<Iterate> {
        if self.state.modes.len() != other.state.modes.len() || self.a.len() != other.a.len() {
            return Err(Error::GridMismatch("iterates have different shapes".into()));
        }
        let sub = |x: &TimeGridFunction, y: &TimeGridFunction| TimeGridFunction {
            grid: x.grid,
            values: x.values.iter().zip(&y.values).map(|(a, b)| a - b).collect(),
        };
        Ok(Iterate {
            state: SpectralState {
                modes: self.state.modes.iter().zip(&other.state.modes).map(|(x, y)| sub(x, y)).collect(),
            },
            a: sub(&self.a, &other.a),
        })
    }

    pub fn distance(&self, other: &Iterate) -> Result<f64> {
        Ok(norm_e(&self.difference(other)?))
    }
}

/// Where the iteration starts.
#[derive(Clone, Debug, Default)]
pub enum InitialGuess {
    /// Homogeneous mode solutions and `a = (h'' - f(1/2, t)) / h`.
    #[default]
    DataOnly,
    Zero,
    Given(Iterate),
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Stop when `||z_{n+1} - z_n||_E <= tol * max(1, ||z_{n+1}||_E)`.
    pub tol: f64,
    pub max_iter: usize,
    pub mode: CouplingMode,
    /// Warn when an iterate leaves the ball of this radius.
    pub ball_radius: Option<f64>,
    pub initial: InitialGuess,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_iter: 100,
            mode: CouplingMode::default(),
            ball_radius: None,
            initial: InitialGuess::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `||z_n - z_{n-1}||_E`.
    pub delta: f64,
    pub norm_e: f64,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub solution: Iterate,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    /// `delta_{n+1} / delta_n` for consecutive steps.
    pub contraction_ratios: Vec<f64>,
    /// Geometric mean of the last few contraction ratios.
    pub tail_ratio: Option<f64>,
    pub warnings: Vec<String>,
    pub residuals: Option<ResidualReport>,
}

/// The map `Phi` for one problem at fixed truncation and grids.
#[derive(Clone, Debug)]
pub struct InverseOperator {
    solver: ModeSolver,
    data: DataCoefficients,
    params: BasisParams,
    mode: CouplingMode,
}

impl InverseOperator {
    pub fn new(problem: &ProblemData, k_max: usize, grids: &Grids, mode: CouplingMode) -> Result<Self> {
        let data = extract_data(problem, k_max, grids)?;
        let solver = ModeSolver::new(k_max, &problem.nonlocal, &problem.basis, grids.t)?;
        Ok(InverseOperator { solver, data, params: problem.basis, mode })
    }

    /// Operator for the direct problem; `h` is not inspected.
    fn direct(problem: &ProblemData, k_max: usize, grids: &Grids, mode: CouplingMode) -> Result<Self> {
        let data = extract_data_with(problem, k_max, grids, false)?;
        let solver = ModeSolver::new(k_max, &problem.nonlocal, &problem.basis, grids.t)?;
        Ok(InverseOperator { solver, data, params: problem.basis, mode })
    }

    pub fn data(&self) -> &DataCoefficients {
        &self.data
    }

    pub fn solver(&self) -> &ModeSolver {
        &self.solver
    }

    pub fn params(&self) -> &BasisParams {
        &self.params
    }

    pub fn mode(&self) -> CouplingMode {
        self.mode
    }

    pub fn k_max(&self) -> usize {
        self.data.k_max()
    }

    pub fn grid(&self) -> UniformGrid {
        self.data.grid()
    }

    /// Modes solved with sources `F_k = a u_k + f_k` built from `z`.
    pub fn phi1(&self, z: &Iterate) -> Result<SpectralState> {
        let forcing = assemble_f(&z.state, &z.a, &self.data)?;
        self.solver.solve_all(&self.data, &forcing, self.mode)
    }

    /// Coefficient recovered from the observation and the odd modes of `state`.
    pub fn phi2(&self, state: &SpectralState) -> TimeGridFunction {
        let sign = match self.mode {
            CouplingMode::OdeConsistent => 1.0,
            CouplingMode::AsPrinted => -1.0,
        };
        let grid = self.grid();
        let values = (0..grid.len())
            .map(|j| {
                let series: f64 = (1..=state.k_max())
                    .map(|k| {
                        let alt = if k % 2 == 0 { 1.0 } else { -1.0 };
                        alt * lambda(k).powi(2) * state.modes[2 * k - 1].values[j]
                    })
                    .sum();
                let d = &self.data;
                (d.h2.values[j] - d.f_mid.values[j] + sign * 0.5 * series) / d.h.values[j]
            })
            .collect();
        TimeGridFunction { grid, values }
    }

    pub fn apply(&self, z: &Iterate) -> Result<Iterate> {
        let state = self.phi1(z)?;
        let a = self.phi2(&state);
        Ok(Iterate { state, a })
    }

    /// Modes driven by the data alone and the coefficient with the series dropped.
    pub fn data_only(&self) -> Result<Iterate> {
        let grid = self.grid();
        let zero = vec![TimeGridFunction::zeros(grid); self.data.phi.len()];
        let state = self.solver.solve_all(&self.data, &zero, self.mode)?;
        let d = &self.data;
        let a = TimeGridFunction {
            grid,
            values: (0..grid.len())
                .map(|j| (d.h2.values[j] - d.f_mid.values[j]) / d.h.values[j])
                .collect(),
        };
        Ok(Iterate { state, a })
    }

    pub fn initial(&self, guess: &InitialGuess) -> Result<Iterate> {
        match guess {
            InitialGuess::DataOnly => self.data_only(),
            InitialGuess::Zero => Ok(Iterate::zeros(self.k_max(), self.grid())),
            InitialGuess::Given(z) => {
                if z.state.k_max() != self.k_max() || z.a.len() != self.grid().len() {
                    return Err(Error::GridMismatch(format!(
                        "initial guess has K = {} and {} time nodes, expected K = {} and {}",
                        z.state.k_max(),
                        z.a.len(),
                        self.k_max(),
                        self.grid().len()
                    )));
                }
                Ok(z.clone())
            }
        }
    }
}

/// `Phi(z)` for the given data.
pub fn apply_phi(op: &InverseOperator, z: &Iterate) -> Result<Iterate> {
    op.apply(z)
}

const TAIL_WINDOW: usize = 5;

/// Runs the iteration; reports non-convergence through `converged`.
pub fn fixed_point_iterate(op: &InverseOperator, opts: &SolveOptions) -> Result<SolveResult> {
    let mut z = op.initial(&opts.initial)?;
    let mut history = Vec::new();
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut warned_ball = false;
    while iterations < opts.max_iter {
        let next = op.apply(&z)?;
        iterations += 1;
        let delta = next.distance(&z)?;
        let ne = norm_e(&next);
        if !delta.is_finite() || !ne.is_finite() {
            warnings.push(format!("iterate became non-finite at step {iterations}"));
            history.push(IterationRecord { iteration: iterations, delta, norm_e: ne });
            z = next;
            break;
        }
        log::debug!("iteration {iterations}: delta {delta:e}, ||z||_E {ne:e}");
        history.push(IterationRecord { iteration: iterations, delta, norm_e: ne });
        if let Some(r) = opts.ball_radius {
            if ne > r && !warned_ball {
                warnings.push(format!("iterate {iterations} left the ball: ||z||_E = {ne:e} > R = {r:e}"));
                warned_ball = true;
            }
        }
        z = next;
        if delta <= opts.tol * ne.max(1.0) {
            converged = true;
            break;
        }
    }
    let contraction_ratios: Vec<f64> = history
        .windows(2)
        .map(|w| w[1].delta / w[0].delta)
        .collect();
    let tail_ratio = tail_ratio(&contraction_ratios);
    if !converged {
        log::warn!(
            "no convergence after {iterations} iterations (last delta {:e})",
            history.last().map_or(f64::NAN, |r| r.delta)
        );
    }
    Ok(SolveResult {
        solution: z,
        iterations,
        history,
        converged,
        contraction_ratios,
        tail_ratio,
        warnings,
        residuals: None,
    })
}

/// Geometric mean of the last few finite, positive ratios.
pub fn tail_ratio(ratios: &[f64]) -> Option<f64> {
    let tail: Vec<f64> = ratios
        .iter()
        .rev()
        .filter(|r| r.is_finite() && **r > 0.0)
        .take(TAIL_WINDOW)
        .copied()
        .collect();
    if tail.is_empty() {
        return None;
    }
    Some((tail.iter().map(|r| r.ln()).sum::<f64>() / tail.len() as f64).exp())
}

/// Like [`fixed_point_iterate`], but non-convergence is an error.
pub fn fixed_point_solve(op: &InverseOperator, opts: &SolveOptions) -> Result<SolveResult> {
    let r = fixed_point_iterate(op, opts)?;
    if !r.converged {
        return Err(Error::NonConvergence {
            iterations: r.iterations,
            last_delta: r.history.last().map_or(f64::NAN, |h| h.delta),
        });
    }
    Ok(r)
}

/// Builds the operator and solves the inverse problem.
pub fn solve_inverse(
    problem: &ProblemData,
    k_max: usize,
    grids: &Grids,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    let op = InverseOperator::new(problem, k_max, grids, opts.mode)?;
    let mut r = fixed_point_iterate(&op, opts)?;
    r.residuals = Some(residual_report(problem, &r.solution, grids.x)?);
    Ok(r)
}

/// Direct problem for a known coefficient `a(t)`.
///
/// The iteration on `u` alone terminates after one pass when `a == 0`.
pub fn forward_solve(
    problem: &ProblemData,
    a: &DataFn,
    k_max: usize,
    grids: &Grids,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    let op = InverseOperator::direct(problem, k_max, grids, opts.mode)?;
    let av = TimeGridFunction::new(grids.t, a.sample(Var::T, &grids.t)?)?;
    let mut z = Iterate { state: SpectralState::zeros(k_max, grids.t), a: av.clone() };
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let zero_a = av.max_abs() == 0.0;
    while iterations < opts.max_iter {
        let state = op.phi1(&z)?;
        iterations += 1;
        let delta = norm_b(&Iterate { state: state.clone(), a: av.clone() }.difference(&z)?.state);
        let next = Iterate { state, a: av.clone() };
        history.push(IterationRecord { iteration: iterations, delta, norm_e: norm_e(&next) });
        z = next;
        if zero_a || delta <= opts.tol * norm_b(&z.state).max(1.0) {
            converged = true;
            break;
        }
    }
    let contraction_ratios: Vec<f64> = history.windows(2).map(|w| w[1].delta / w[0].delta).collect();
    let residuals = Some(residual_report(problem, &z, grids.x)?);
    Ok(SolveResult {
        solution: z,
        iterations,
        history,
        converged,
        tail_ratio: tail_ratio(&contraction_ratios),
        contraction_ratios,
        warnings: Vec::new(),
        residuals,
    })
}

/// `u(x_i, t_j)`, `u_xx(x_i, t_j)` and `u_x(x_i, t_j)` from the modes,
/// stored as `[i * nt + j]`.
fn field_with_derivatives(state: &SpectralState, params: &BasisParams, xs: &[f64]) -> [Vec<f64>; 3] {
    let nt = state.grid().len();
    let mut u = vec![0.0; xs.len() * nt];
    let mut ux = vec![0.0; xs.len() * nt];
    let mut uxx = vec![0.0; xs.len() * nt];
    for (i, &x) in xs.iter().enumerate() {
        for (m, mode) in state.modes.iter().enumerate() {
            let (v, d1, d2) = eval_x_derivs(ModeIndex::from_flat(m), params, x);
            for (j, c) in mode.values.iter().enumerate() {
                u[i * nt + j] += v * c;
                ux[i * nt + j] += d1 * c;
                uxx[i * nt + j] += d2 * c;
            }
        }
    }
    [u, ux, uxx]
}

/// How well a computed pair satisfies the continuous problem.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ResidualReport {
    /// `max |u_tt - u_xx - a u - f|` at interior time nodes; `u_tt` by
    /// central differences, `u_xx` from the modes.
    pub pde: f64,
    /// Size of the finite-difference roundoff in `u_tt`, `4 eps max|u| / dt^2`.
    pub pde_roundoff_floor: f64,
    /// `max_t |int_0^1 u dx|`.
    pub mean: f64,
    /// `max_t |u(1/2, t) - h(t)|`.
    pub observation: f64,
    /// `max_x |u(x, 0) + delta1 u(x, T) - phi(x)|`.
    pub initial_value: f64,
    /// `max_x |u_t(x, 0) + delta2 u_t(x, T) - psi(x)|` with one-sided differences.
    pub initial_slope: f64,
    /// `max_t |u(0, t) - beta u(1, t)|`.
    pub boundary_value: f64,
    /// `max_t |u_x(0, t) - u_x(1, t)|`.
    pub boundary_flux: f64,
}

/// Residuals of `z` on the spatial grid `xgrid` and the iterate's time grid.
pub fn residual_report(problem: &ProblemData, z: &Iterate, xgrid: UniformGrid) -> Result<ResidualReport> {
    let tgrid = z.state.grid();
    let nt = tgrid.len();
    if nt < 5 {
        return Err(Error::InvalidGrid(format!("residuals need at least 5 time nodes, got {nt}")));
    }
    let params = &problem.basis;
    let np = &problem.nonlocal;
    let xs = xgrid.nodes();
    let ts = tgrid.nodes();
    let [u, ux, uxx] = field_with_derivatives(&z.state, params, &xs);
    let dt = tgrid.step();
    let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut out = ResidualReport {
        pde_roundoff_floor: 4.0 * f64::EPSILON * umax / (dt * dt),
        ..Default::default()
    };
    for (i, &x) in xs.iter().enumerate() {
        let row = &u[i * nt..(i + 1) * nt];
        for j in 1..nt - 1 {
            let utt = (row[j + 1] - 2.0 * row[j] + row[j - 1]) / (dt * dt);
            let r = utt - uxx[i * nt + j] - z.a.values[j] * row[j] - problem.f.eval_xt(x, ts[j])?;
            out.pde = out.pde.max(r.abs());
        }
        out.initial_value = out
            .initial_value
            .max((row[0] + np.delta1 * row[nt - 1] - problem.phi.eval_x(x)?).abs());
        let d0 = (-3.0 * row[0] + 4.0 * row[1] - row[2]) / (2.0 * dt);
        let d1 = (3.0 * row[nt - 1] - 4.0 * row[nt - 2] + row[nt - 3]) / (2.0 * dt);
        out.initial_slope = out.initial_slope.max((d0 + np.delta2 * d1 - problem.psi.eval_x(x)?).abs());
    }

    let last = (xs.len() - 1) * nt;
    let mut column = vec![0.0; xs.len()];
    let mid = [0.5];
    let [umid, _, _] = field_with_derivatives(&z.state, params, &mid);
    for (j, &t) in ts.iter().enumerate() {
        for (i, c) in column.iter_mut().enumerate() {
            *c = u[i * nt + j];
        }
        out.mean = out.mean.max(integrate(&column, &xgrid)?.abs());
        out.observation = out.observation.max((umid[j] - problem.h.eval_t(t)?).abs());
        out.boundary_value = out.boundary_value.max((u[j] - params.beta * u[last + j]).abs());
        out.boundary_flux = out.boundary_flux.max((ux[j] - ux[last + j]).abs());
    }
    Ok(out)
}
