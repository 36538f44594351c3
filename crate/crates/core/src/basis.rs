//! The non-orthogonal spatial basis and its dual family.
//!
//! With `p = (1 - beta)/(1 + beta)`, `q = beta/(1 + beta)` and
//! `lambda_k = 2 k pi`:
//!
//! ```text
//! X_0 = p x + q,   X_{2k-1} = (p x + q) cos(lambda_k x),   X_{2k} = sin(lambda_k x)
//! ```
//!
//! Every `X_j` satisfies `X(0) = beta X(1)` and `X'(0) = X'(1)`. The dual
//! family used for coefficient extraction is
//!
//! ```text
//! Y_0 = 2,   Y_{2k-1} = 4 cos(lambda_k x),   Y_{2k} = 4 (1 - q - p x) sin(lambda_k x)
//! ```
//!
//! which satisfies `int_0^1 X_j Y_k dx = delta_jk`. [`DualFamily::AsPrinted`]
//! selects the alternative `Y_{2k-1} = 4 sin`, `Y_{2k} = q (1 - q - p x) cos`,
//! kept for comparison; it is not biorthogonal to `X`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::quadrature::{composite_weights, UniformGrid};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualFamily {
    #[default]
    Biorthogonal,
    AsPrinted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BasisParams {
    pub beta: f64,
    pub p: f64,
    pub q: f64,
    pub dual: DualFamily,
}

impl BasisParams {
    pub fn new(beta: f64) -> Result<Self> {
        Self::with_dual(beta, DualFamily::Biorthogonal)
    }

    pub fn with_dual(beta: f64, dual: DualFamily) -> Result<Self> {
        if !beta.is_finite() || (beta - 1.0).abs() < 1e-12 || (beta + 1.0).abs() < 1e-12 {
            return Err(Error::DegenerateBeta(beta));
        }
        Ok(BasisParams {
            beta,
            p: (1.0 - beta) / (1.0 + beta),
            q: beta / (1.0 + beta),
            dual,
        })
    }
}

pub fn make_basis_params(beta: f64) -> Result<BasisParams> {
    BasisParams::new(beta)
}

/// Position of a basis function in the sequence `X_0, X_1, X_2, ...`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeIndex {
    Zero,
    /// `X_{2k-1}`, `k >= 1`.
    Odd(usize),
    /// `X_{2k}`, `k >= 1`.
    Even(usize),
}

impl ModeIndex {
    pub fn from_flat(i: usize) -> ModeIndex {
        match i {
            0 => ModeIndex::Zero,
            i if i % 2 == 1 => ModeIndex::Odd(i.div_ceil(2)),
            i => ModeIndex::Even(i / 2),
        }
    }

    pub fn flat(self) -> usize {
        match self {
            ModeIndex::Zero => 0,
            ModeIndex::Odd(k) => 2 * k - 1,
            ModeIndex::Even(k) => 2 * k,
        }
    }

    pub fn k(self) -> usize {
        match self {
            ModeIndex::Zero => 0,
            ModeIndex::Odd(k) | ModeIndex::Even(k) => k,
        }
    }

}

/// `lambda_k = 2 k pi`.
pub fn lambda_k(k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::ZeroMode(k));
    }
    Ok(lambda(k))
}

#[inline]
pub(crate) fn lambda(k: usize) -> f64 {
    2.0 * k as f64 * PI
}

pub fn eval_x(idx: ModeIndex, params: &BasisParams, x: f64) -> f64 {
    let lin = params.p * x + params.q;
    match idx {
        ModeIndex::Zero => lin,
        ModeIndex::Odd(k) => lin * (lambda(k) * x).cos(),
        ModeIndex::Even(k) => (lambda(k) * x).sin(),
    }
}

pub fn eval_y(idx: ModeIndex, params: &BasisParams, x: f64) -> f64 {
    let BasisParams { p, q, dual, .. } = *params;
    match (idx, dual) {
        (ModeIndex::Zero, _) => 2.0,
        (ModeIndex::Odd(k), DualFamily::Biorthogonal) => 4.0 * (lambda(k) * x).cos(),
        (ModeIndex::Even(k), DualFamily::Biorthogonal) => {
            4.0 * (1.0 - q - p * x) * (lambda(k) * x).sin()
        }
        (ModeIndex::Odd(k), DualFamily::AsPrinted) => 4.0 * (lambda(k) * x).sin(),
        (ModeIndex::Even(k), DualFamily::AsPrinted) => q * (1.0 - q - p * x) * (lambda(k) * x).cos(),
    }
}

/// `(X, X', X'')` at `x`.
pub fn eval_x_derivs(idx: ModeIndex, params: &BasisParams, x: f64) -> (f64, f64, f64) {
    let p = params.p;
    let lin = p * x + params.q;
    match idx {
        ModeIndex::Zero => (lin, p, 0.0),
        ModeIndex::Odd(k) => {
            let l = lambda(k);
            let (s, c) = (l * x).sin_cos();
            (lin * c, p * c - l * lin * s, -2.0 * p * l * s - l * l * lin * c)
        }
        ModeIndex::Even(k) => {
            let l = lambda(k);
            let (s, c) = (l * x).sin_cos();
            (s, l * c, -l * l * s)
        }
    }
}

/// `X_idx` as an expression in `x`.
pub fn x_expr(idx: ModeIndex, params: &BasisParams) -> Expr {
    let x = || Expr::var(Var::X);
    let lin = || Expr::num(params.p) * x() + Expr::num(params.q);
    let arg = |k: usize| Expr::num(2.0 * k as f64) * Expr::pi() * x();
    match idx {
        ModeIndex::Zero => lin(),
        ModeIndex::Odd(k) => lin() * Expr::cos(arg(k)),
        ModeIndex::Even(k) => Expr::sin(arg(k)),
    }
}

/// Default spatial grid size for truncation `k_max`: odd, at least 513 and
/// at least eight points per period of the highest mode.
pub fn default_spatial_points(k_max: usize) -> usize {
    513.max(16 * k_max + 1)
}

/// Precomputed quadrature weights `w_i Y_k(x_i)` for coefficient extraction.
#[derive(Clone, Debug)]
pub struct Projector {
    k_max: usize,
    grid: UniformGrid,
    // row-major, (2K+1) x n
    table: Vec<f64>,
}

impl Projector {
    pub fn new(k_max: usize, params: &BasisParams, grid: UniformGrid) -> Result<Self> {
        if k_max >= 1 && params.dual == DualFamily::AsPrinted && params.q == 0.0 {
            log::warn!("as-printed dual family is identically zero for beta = 0; choose beta != 0");
            return Err(Error::DegenerateDualFamily);
        }
        if grid.len() < 8 * k_max {
            log::warn!(
                "quadrature resolution: {} points for K = {} (recommended >= {})",
                grid.len(),
                k_max,
                default_spatial_points(k_max)
            );
        }
        let n = grid.len();
        let w = composite_weights(n, grid.step());
        let xs = grid.nodes();
        let modes = 2 * k_max + 1;
        let mut table = Vec::with_capacity(modes * n);
        for m in 0..modes {
            let idx = ModeIndex::from_flat(m);
            table.extend(xs.iter().zip(&w).map(|(&x, &wi)| wi * eval_y(idx, params, x)));
        }
        Ok(Projector { k_max, grid, table })
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    /// `v_k = int v Y_k dx` for `k = 0..=2K`.
    pub fn project(&self, samples: &[f64]) -> Result<Vec<f64>> {
        let n = self.grid.len();
        if samples.len() != n {
            return Err(Error::GridMismatch(format!(
                "{} samples for a {n}-point spatial grid",
                samples.len()
            )));
        }
        Ok(self
            .table
            .chunks_exact(n)
            .map(|row| row.iter().zip(samples).map(|(a, b)| a * b).sum())
            .collect())
    }
}

/// Coefficients of `v` against the dual family, `k = 0..=2K`.
pub fn coefficients(
    v: impl Fn(f64) -> f64,
    k_max: usize,
    params: &BasisParams,
    grid: UniformGrid,
) -> Result<Vec<f64>> {
    let samples: Vec<f64> = grid.nodes().into_iter().map(v).collect();
    coefficients_from_samples(&samples, k_max, params, grid)
}

pub fn coefficients_from_samples(
    samples: &[f64],
    k_max: usize,
    params: &BasisParams,
    grid: UniformGrid,
) -> Result<Vec<f64>> {
    if k_max == 0 {
        return Err(Error::InvalidInput("truncation K must be at least 1".into()));
    }
    Projector::new(k_max, params, grid)?.project(samples)
}

/// Truncated series `sum_k u_k X_k(x)`.
pub fn synthesize(coeffs: &[f64], params: &BasisParams, x: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| c * eval_x(ModeIndex::from_flat(i), params, x))
        .sum()
}

/// `max_{j,k <= 2K} |int X_j Y_k dx - delta_jk|` on `points` quadrature nodes.
pub fn biorthogonality_defect(k_max: usize, params: &BasisParams, points: usize) -> Result<f64> {
    let grid = UniformGrid::new(0.0, 1.0, points)?;
    let modes = 2 * k_max + 1;
    let xs = grid.nodes();
    let w = composite_weights(points, grid.step());
    let xt: Vec<Vec<f64>> = (0..modes)
        .map(|j| xs.iter().map(|&x| eval_x(ModeIndex::from_flat(j), params, x)).collect())
        .collect();
    let yt: Vec<Vec<f64>> = (0..modes)
        .map(|k| {
            xs.iter()
                .zip(&w)
                .map(|(&x, wi)| wi * eval_y(ModeIndex::from_flat(k), params, x))
                .collect()
        })
        .collect();
    let mut defect: f64 = 0.0;
    for (j, xj) in xt.iter().enumerate() {
        for (k, yk) in yt.iter().enumerate() {
            let ip: f64 = xj.iter().zip(yk).map(|(a, b)| a * b).sum();
            let target = if j == k { 1.0 } else { 0.0 };
            defect = defect.max((ip - target).abs());
        }
    }
    Ok(defect)
}
