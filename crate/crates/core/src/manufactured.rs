//! Problems with a known solution, built from a few basis modes.
//!
//! Pick amplitudes `g_m(t)` and a coefficient `a*(t)`, set
//! `u*(x, t) = sum g_m(t) X_{k_m}(x)` and derive `f`, `phi`, `psi` and `h`
//! so that `(u*, a*)` solves the inverse problem exactly.

use serde::Serialize;

use crate::basis::{x_expr, BasisParams, ModeIndex};
use crate::conditions::{compute_constants, max_horizon, norm_e, NormResolution};
use crate::error::{Error, Result};
use crate::expr::{parse, Expr, Var};
use crate::inverse::{solve_inverse, Iterate, SolveOptions};
use crate::kernels::NonlocalParams;
use crate::problem::{DataFn, Grids, ProblemData};
use crate::quadrature::UniformGrid;
use crate::spectral::{SpectralState, TimeGridFunction};

/// One basis mode with a time-dependent amplitude.
#[derive(Clone, Debug, PartialEq)]
pub struct ManufacturedMode {
    pub index: ModeIndex,
    pub amplitude: Expr,
}

/// Coefficient given either as a fixed expression in `t` or one that
/// depends on the horizon, such as `0.5 (1 + t) / (1 + T)`.
#[derive(Clone, Debug, PartialEq)]
pub enum CoefficientSpec {
    Fixed(Expr),
    /// `scale * (1 + t) / (1 + T)`.
    NormalizedRamp(f64),
}

impl CoefficientSpec {
    pub fn expr(&self, horizon: f64) -> Expr {
        match self {
            CoefficientSpec::Fixed(e) => e.clone(),
            CoefficientSpec::NormalizedRamp(s) => {
                Expr::num(s / (1.0 + horizon)) * (Expr::num(1.0) + Expr::var(Var::T))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManufacturedSpec {
    pub beta: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub horizon: f64,
    pub a_star: CoefficientSpec,
    pub modes: Vec<ManufacturedMode>,
    /// Permits `X_0`, whose nonzero mean breaks the compatibility conditions.
    pub allow_zero_mode: bool,
}

impl ManufacturedSpec {
    pub fn with_horizon(&self, horizon: f64) -> Self {
        ManufacturedSpec { horizon, ..self.clone() }
    }

    fn validate(&self) -> Result<(BasisParams, NonlocalParams)> {
        if self.beta == 0.0 {
            return Err(Error::InvalidInput("manufactured problems require beta != 0".into()));
        }
        let params = BasisParams::new(self.beta)?;
        let np = NonlocalParams::new(self.delta1, self.delta2, self.horizon)?;
        if self.modes.is_empty() {
            return Err(Error::InvalidInput("manufactured spec has no modes".into()));
        }
        for m in &self.modes {
            if m.index == ModeIndex::Zero && !self.allow_zero_mode {
                return Err(Error::InvalidInput(
                    "X_0 has nonzero mean; set allow_zero_mode to include it".into(),
                ));
            }
            if m.amplitude.contains(Var::X) {
                return Err(Error::InvalidInput("mode amplitudes may depend on t only".into()));
            }
        }
        if !self.modes.iter().any(|m| matches!(m.index, ModeIndex::Odd(_) | ModeIndex::Zero)) {
            return Err(Error::HIdenticallyZero);
        }
        Ok((params, np))
    }

    pub fn coefficient(&self) -> Expr {
        self.a_star.expr(self.horizon)
    }

    /// `u*(x, t)` as an expression.
    pub fn solution(&self) -> Result<Expr> {
        let (params, _) = self.validate()?;
        Ok(self.sum(|m| m.amplitude.clone() * x_expr(m.index, &params)))
    }

    fn sum(&self, term: impl Fn(&ManufacturedMode) -> Expr) -> Expr {
        let mut it = self.modes.iter().map(term);
        let first = it.next().unwrap_or_else(|| Expr::num(0.0));
        it.fold(first, |acc, e| acc + e)
    }

    /// The data of the problem solved by `(u*, a*)`.
    pub fn problem(&self) -> Result<ProblemData> {
        let (params, np) = self.validate()?;
        let tt = self.horizon;
        let u = self.solution()?;
        let a = self.coefficient();
        let f = u.derivative(Var::T, 2)? - u.derivative(Var::X, 2)? - a * u.clone();
        let ut = u.derivative(Var::T, 1)?;
        let phi = u.substitute(Var::T, 0.0) + Expr::num(self.delta1) * u.substitute(Var::T, tt);
        let psi = ut.substitute(Var::T, 0.0) + Expr::num(self.delta2) * ut.substitute(Var::T, tt);
        // X_{2k-1}(1/2) = (-1)^k / 2, X_{2k}(1/2) = 0, X_0(1/2) = 1/2
        let h = self.sum(|m| {
            let w = match m.index {
                ModeIndex::Zero => 0.5,
                ModeIndex::Odd(k) => if k % 2 == 0 { 0.5 } else { -0.5 },
                ModeIndex::Even(_) => 0.0,
            };
            Expr::num(w) * m.amplitude.clone()
        });
        Ok(ProblemData {
            basis: params,
            nonlocal: np,
            f: DataFn::Expr(f),
            phi: DataFn::Expr(phi),
            psi: DataFn::Expr(psi),
            h: DataFn::Expr(h),
        })
    }

    /// Mode coefficients of `u*` and samples of `a*` on `tgrid`.
    pub fn truth(&self, k_max: usize, tgrid: UniformGrid) -> Result<Iterate> {
        self.validate()?;
        let mut state = SpectralState::zeros(k_max, tgrid);
        for m in &self.modes {
            if m.index.k() > k_max {
                return Err(Error::InvalidInput(format!(
                    "mode {:?} lies beyond the truncation K = {k_max}",
                    m.index
                )));
            }
            let g = DataFn::Expr(m.amplitude.clone()).sample(Var::T, &tgrid)?;
            let slot = &mut state.modes[m.index.flat()].values;
            for (s, v) in slot.iter_mut().zip(g) {
                *s += v;
            }
        }
        let a = TimeGridFunction::new(tgrid, DataFn::Expr(self.coefficient()).sample(Var::T, &tgrid)?)?;
        Ok(Iterate { state, a })
    }

    pub fn build(&self, k_max: usize, tgrid: UniformGrid) -> Result<(ProblemData, Iterate)> {
        Ok((self.problem()?, self.truth(k_max, tgrid)?))
    }

    /// Largest horizon for which the contraction inequality holds, starting
    /// the bracket search at the current horizon.
    pub fn max_horizon(&self, rel_tol: f64) -> Result<f64> {
        max_horizon(
            |tt| compute_constants(&self.with_horizon(tt).problem()?, NormResolution::default()),
            self.horizon,
            rel_tol,
        )
    }
}

/// Names of the built-in specs.
pub const PRESETS: [&str; 3] = ["single-odd", "odd-even", "three-mode"];

fn e(text: &str) -> Expr {
    parse(text).expect("preset expressions parse")
}

/// A built-in spec at the given horizon.
pub fn preset_at(name: &str, horizon: f64) -> Result<ManufacturedSpec> {
    let mode = |index, text: &str| ManufacturedMode { index, amplitude: e(text) };
    let spec = match name {
        "single-odd" => ManufacturedSpec {
            beta: 3.0,
            delta1: 0.0,
            delta2: 0.0,
            horizon,
            a_star: CoefficientSpec::Fixed(e("0.25*sin(t)")),
            modes: vec![mode(ModeIndex::Odd(1), "1 + 0.1*sin(t)")],
            allow_zero_mode: false,
        },
        "odd-even" => ManufacturedSpec {
            beta: 0.5,
            delta1: 0.2,
            delta2: 0.1,
            horizon,
            a_star: CoefficientSpec::NormalizedRamp(0.5),
            modes: vec![
                mode(ModeIndex::Odd(1), "1 + 0.1*sin(t)"),
                mode(ModeIndex::Even(1), "0.5*cos(t)"),
            ],
            allow_zero_mode: false,
        },
        "three-mode" => ManufacturedSpec {
            beta: -0.5,
            delta1: 0.1,
            delta2: 0.3,
            horizon,
            a_star: CoefficientSpec::Fixed(Expr::num(0.0)),
            modes: vec![
                mode(ModeIndex::Odd(1), "1 + 0.1*sin(t)"),
                mode(ModeIndex::Even(1), "0.3*cos(t)"),
                mode(ModeIndex::Odd(2), "0.2*sin(2*t)"),
            ],
            allow_zero_mode: false,
        },
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown preset `{other}` (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    };
    spec.validate()?;
    Ok(spec)
}

/// Relative tolerance of the horizon bisection for presets.
pub const HORIZON_REL_TOL: f64 = 1e-4;

/// A built-in spec at the largest horizon satisfying the contraction inequality.
pub fn preset(name: &str) -> Result<ManufacturedSpec> {
    let spec = preset_at(name, 1e-3)?;
    let tt = spec.max_horizon(HORIZON_REL_TOL)?;
    Ok(spec.with_horizon(tt))
}

/// Errors of a computed pair against the truth.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorReport {
    pub a_sup: f64,
    /// `(sum_j w_j |a - a*|^2)^{1/2}` with trapezoid weights.
    pub a_l2: f64,
    /// `max_t |u_k - u*_k|` per mode.
    pub mode_sup: Vec<f64>,
    pub e_norm: f64,
}

pub fn error_report(computed: &Iterate, truth: &Iterate) -> Result<ErrorReport> {
    if computed.a.grid != truth.a.grid {
        return Err(Error::GridMismatch("computed and true coefficients use different time grids".into()));
    }
    let d = computed.difference(truth)?;
    let dt = d.a.grid.step();
    let n = d.a.len();
    let l2 = d
        .a
        .values
        .iter()
        .enumerate()
        .map(|(j, v)| if j == 0 || j == n - 1 { 0.5 * dt * v * v } else { dt * v * v })
        .sum::<f64>()
        .sqrt();
    Ok(ErrorReport {
        a_sup: d.a.max_abs(),
        a_l2: l2,
        mode_sup: d.state.modes.iter().map(|m| m.max_abs()).collect(),
        e_norm: norm_e(&d),
    })
}

/// One level of a refinement study.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefinementLevel {
    pub nt: usize,
    pub iterations: usize,
    pub converged: bool,
    pub errors: ErrorReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefinementStudy {
    pub k_max: usize,
    pub levels: Vec<RefinementLevel>,
    /// `a_sup(level i) / a_sup(level i + 1)`.
    pub a_error_ratios: Vec<f64>,
    pub errors_shrink: bool,
}

/// Solves the spec on each time grid and compares with the truth.
pub fn refinement_study(
    spec: &ManufacturedSpec,
    k_max: usize,
    nx: usize,
    nts: &[usize],
    opts: &SolveOptions,
) -> Result<RefinementStudy> {
    let problem = spec.problem()?;
    let mut levels = Vec::new();
    for &nt in nts {
        let grids = Grids::new(nx, nt, spec.horizon)?;
        let truth = spec.truth(k_max, grids.t)?;
        let r = solve_inverse(&problem, k_max, &grids, opts)?;
        levels.push(RefinementLevel {
            nt,
            iterations: r.iterations,
            converged: r.converged,
            errors: error_report(&r.solution, &truth)?,
        });
    }
    let a_error_ratios: Vec<f64> = levels
        .windows(2)
        .map(|w| w[0].errors.a_sup / w[1].errors.a_sup)
        .collect();
    let errors_shrink = a_error_ratios.iter().all(|r| *r > 1.0);
    Ok(RefinementStudy { k_max, levels, a_error_ratios, errors_shrink })
}
