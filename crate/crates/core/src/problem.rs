//! Input data of one inverse-problem instance.

use crate::basis::BasisParams;
use crate::error::{Error, Result};
use crate::expr::{Bindings, Expr, Var};
use crate::kernels::NonlocalParams;
use crate::quadrature::UniformGrid;

/// A data function given either symbolically or by uniform samples.
#[derive(Clone, Debug)]
pub enum DataFn {
    Expr(Expr),
    /// Samples of a function of one variable.
    Curve {
        var: Var,
        grid: UniformGrid,
        values: Vec<f64>,
    },
    /// Samples `values[i * nt + j] = f(x_i, t_j)`.
    Surface {
        xgrid: UniformGrid,
        tgrid: UniformGrid,
        values: Vec<f64>,
    },
}

impl From<Expr> for DataFn {
    fn from(e: Expr) -> Self {
        DataFn::Expr(e)
    }
}

impl DataFn {
    pub fn curve(var: Var, grid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a {}-point grid",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite sample".into()));
        }
        Ok(DataFn::Curve { var, grid, values })
    }

    pub fn surface(xgrid: UniformGrid, tgrid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != xgrid.len() * tgrid.len() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a {}x{} grid",
                values.len(),
                xgrid.len(),
                tgrid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite sample".into()));
        }
        Ok(DataFn::Surface { xgrid, tgrid, values })
    }

    pub fn is_symbolic(&self) -> bool {
        matches!(self, DataFn::Expr(_))
    }

    pub fn eval(&self, b: &Bindings) -> Result<f64> {
        match self {
            DataFn::Expr(e) => Ok(e.eval(b)?),
            DataFn::Curve { var, grid, values } => {
                let s = match var {
                    Var::X => b.x,
                    Var::T => b.t,
                }
                .ok_or(crate::expr::EvalError::UnboundVariable(*var))?;
                Ok(interpolate(grid, values, s))
            }
            DataFn::Surface { xgrid, tgrid, values } => {
                let x = b.x.ok_or(crate::expr::EvalError::UnboundVariable(Var::X))?;
                let t = b.t.ok_or(crate::expr::EvalError::UnboundVariable(Var::T))?;
                let nt = tgrid.len();
                let (ix, wx) = stencil(xgrid, x);
                let mut acc = 0.0;
                for (a, wa) in ix.iter().zip(&wx) {
                    let row = &values[a * nt..(a + 1) * nt];
                    acc += wa * interpolate(tgrid, row, t);
                }
                Ok(acc)
            }
        }
    }

    pub fn eval_x(&self, x: f64) -> Result<f64> {
        self.eval(&Bindings::x(x))
    }

    pub fn eval_t(&self, t: f64) -> Result<f64> {
        self.eval(&Bindings::t(t))
    }

    pub fn eval_xt(&self, x: f64, t: f64) -> Result<f64> {
        self.eval(&Bindings::xt(x, t))
    }

    /// Derivative of the given order; symbolic for expressions, second-order
    /// finite differences on the sample grid otherwise.
    pub fn derivative(&self, var: Var, order: usize) -> Result<DataFn> {
        match self {
            DataFn::Expr(e) => Ok(DataFn::Expr(e.derivative(var, order)?)),
            DataFn::Curve { var: v, grid, values } => {
                if *v != var {
                    return Ok(DataFn::Curve {
                        var: *v,
                        grid: *grid,
                        values: vec![0.0; values.len()],
                    });
                }
                let out = fd_derivative_n(values, grid.step(), order)?;
                Ok(DataFn::Curve { var: *v, grid: *grid, values: out })
            }
            DataFn::Surface { xgrid, tgrid, values } => {
                let (nx, nt) = (xgrid.len(), tgrid.len());
                let mut out = vec![0.0; values.len()];
                match var {
                    Var::T => {
                        for (src, dst) in values.chunks_exact(nt).zip(out.chunks_exact_mut(nt)) {
                            dst.copy_from_slice(&fd_derivative_n(src, tgrid.step(), order)?);
                        }
                    }
                    Var::X => {
                        for j in 0..nt {
                            let col: Vec<f64> = (0..nx).map(|i| values[i * nt + j]).collect();
                            let d = fd_derivative_n(&col, xgrid.step(), order)?;
                            for (i, v) in d.into_iter().enumerate() {
                                out[i * nt + j] = v;
                            }
                        }
                    }
                }
                Ok(DataFn::Surface { xgrid: *xgrid, tgrid: *tgrid, values: out })
            }
        }
    }

    /// Values at every node of `grid`, read as the `var` axis.
    pub fn sample(&self, var: Var, grid: &UniformGrid) -> Result<Vec<f64>> {
        let nodes = grid.nodes();
        match (self, var) {
            (DataFn::Curve { var: v, grid: g, values }, _) if *v == var && g == grid => {
                Ok(values.clone())
            }
            _ => nodes
                .into_iter()
                .map(|s| match var {
                    Var::X => self.eval_x(s),
                    Var::T => self.eval_t(s),
                })
                .collect(),
        }
    }

    /// Values `out[i * nt + j] = f(x_i, t_j)`.
    pub fn sample_2d(&self, xgrid: &UniformGrid, tgrid: &UniformGrid) -> Result<Vec<f64>> {
        if let DataFn::Surface { xgrid: gx, tgrid: gt, values } = self {
            if gx == xgrid && gt == tgrid {
                return Ok(values.clone());
            }
        }
        let ts = tgrid.nodes();
        let mut out = Vec::with_capacity(xgrid.len() * tgrid.len());
        for x in xgrid.nodes() {
            for &t in &ts {
                out.push(self.eval_xt(x, t)?);
            }
        }
        Ok(out)
    }
}

/// Derivative of the given order from second-order stencils: central in the
/// interior, one-sided at the ends. Orders above two are built by repeated
/// application and lose accuracy at the ends.
fn fd_derivative_n(values: &[f64], h: f64, order: usize) -> Result<Vec<f64>> {
    let mut out = values.to_vec();
    let mut left = order;
    while left > 0 {
        out = if left >= 2 { fd_second(&out, h)? } else { fd_first(&out, h)? };
        left -= left.min(2);
    }
    Ok(out)
}

fn fd_first(values: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = values.len();
    if n < 3 {
        return Err(Error::MissingDerivative(format!(
            "need at least 3 samples to differentiate, got {n}"
        )));
    }
    let mut d = vec![0.0; n];
    d[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h);
    d[n - 1] = (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * h);
    for j in 1..n - 1 {
        d[j] = (values[j + 1] - values[j - 1]) / (2.0 * h);
    }
    Ok(d)
}

fn fd_second(values: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = values.len();
    if n < 4 {
        return Err(Error::MissingDerivative(format!(
            "need at least 4 samples for a second derivative, got {n}"
        )));
    }
    let h2 = h * h;
    let mut d = vec![0.0; n];
    d[0] = (2.0 * values[0] - 5.0 * values[1] + 4.0 * values[2] - values[3]) / h2;
    d[n - 1] = (2.0 * values[n - 1] - 5.0 * values[n - 2] + 4.0 * values[n - 3] - values[n - 4]) / h2;
    for j in 1..n - 1 {
        d[j] = (values[j + 1] - 2.0 * values[j] + values[j - 1]) / h2;
    }
    Ok(d)
}

/// Node indices and weights of the local cubic Lagrange interpolant at `s`.
fn stencil(grid: &UniformGrid, s: f64) -> (Vec<usize>, Vec<f64>) {
    let n = grid.len();
    if let Some(j) = grid.index_of(s) {
        return (vec![j], vec![1.0]);
    }
    let m = n.min(4);
    let r = (s - grid.start()) / grid.step();
    let base = (r.floor() as isize - (m as isize / 2 - 1)).clamp(0, (n - m) as isize) as usize;
    let idx: Vec<usize> = (base..base + m).collect();
    let w = idx
        .iter()
        .map(|&i| {
            idx.iter()
                .filter(|&&k| k != i)
                .map(|&k| (r - k as f64) / (i as f64 - k as f64))
                .product()
        })
        .collect();
    (idx, w)
}

fn interpolate(grid: &UniformGrid, values: &[f64], s: f64) -> f64 {
    let (idx, w) = stencil(grid, s);
    idx.iter().zip(&w).map(|(&i, wi)| wi * values[i]).sum()
}

/// The data `(f, phi, psi, h)` together with `beta`, `delta1`, `delta2`, `T`.
#[derive(Clone, Debug)]
pub struct ProblemData {
    pub basis: BasisParams,
    pub nonlocal: NonlocalParams,
    /// `f(x, t)`.
    pub f: DataFn,
    /// `phi(x)`.
    pub phi: DataFn,
    /// `psi(x)`.
    pub psi: DataFn,
    /// `h(t)`, the observation `u(1/2, t)`.
    pub h: DataFn,
}

impl ProblemData {
    pub fn horizon(&self) -> f64 {
        self.nonlocal.horizon
    }

    pub fn is_symbolic(&self) -> bool {
        self.f.is_symbolic() && self.phi.is_symbolic() && self.psi.is_symbolic() && self.h.is_symbolic()
    }
}

/// Spatial and temporal solver grids.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grids {
    pub x: UniformGrid,
    pub t: UniformGrid,
}

impl Grids {
    pub fn new(nx: usize, nt: usize, horizon: f64) -> Result<Self> {
        Ok(Grids {
            x: UniformGrid::new(0.0, 1.0, nx)?,
            t: UniformGrid::new(0.0, horizon, nt)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn curve_interpolation_is_cubic_exact() {
        let g = UniformGrid::new(0.0, 2.0, 9).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|t| t * t * t - t).collect();
        let f = DataFn::curve(Var::T, g, v).unwrap();
        for s in [0.0, 0.1, 0.33, 1.0, 1.77, 2.0] {
            assert!((f.eval_t(s).unwrap() - (s * s * s - s)).abs() < 1e-12);
        }
    }

    #[test]
    fn curve_derivative_second_order() {
        let err = |n| {
            let g = UniformGrid::new(0.0, 1.0, n).unwrap();
            let v: Vec<f64> = g.nodes().iter().map(|t| t.sin()).collect();
            let d = DataFn::curve(Var::T, g, v).unwrap().derivative(Var::T, 2).unwrap();
            let s = d.sample(Var::T, &g).unwrap();
            g.nodes()
                .iter()
                .zip(&s)
                .map(|(t, v)| (v + t.sin()).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(65), err(129));
        assert!(e1 / e2 > 3.0, "{e1} {e2}");
    }

    #[test]
    fn surface_matches_expression() {
        let e = parse("sin(x)*exp(t)").unwrap();
        let gx = UniformGrid::new(0.0, 1.0, 33).unwrap();
        let gt = UniformGrid::new(0.0, 0.5, 17).unwrap();
        let expr = DataFn::Expr(e);
        let vals = expr.sample_2d(&gx, &gt).unwrap();
        let s = DataFn::surface(gx, gt, vals).unwrap();
        assert!((s.eval_xt(0.3, 0.2).unwrap() - expr.eval_xt(0.3, 0.2).unwrap()).abs() < 1e-7);
        let dx = s.derivative(Var::X, 1).unwrap();
        assert!((dx.eval_xt(0.5, 0.25).unwrap() - 0.5f64.cos() * 0.25f64.exp()).abs() < 1e-3);
    }
}
