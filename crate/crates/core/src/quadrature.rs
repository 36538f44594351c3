//! Composite quadrature on uniform grids.
//!
//! Odd point counts use composite Simpson; even counts use Simpson on all but
//! the last three intervals and a Simpson-3/8 panel on those. A single
//! interval cannot carry a fourth-order rule on its own nodes, so a piece
//! consisting of one interval borrows the two neighbouring nodes and applies
//! the cubic end-interval rule `h/24 (9, 19, -5, 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniformly spaced nodes `a + j * step`, `j = 0..n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    a: f64,
    b: f64,
    n: usize,
}

impl UniformGrid {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {n}")));
        }
        if !(a.is_finite() && b.is_finite()) || b <= a {
            return Err(Error::InvalidGrid(format!("need a < b, got [{a}, {b}]")));
        }
        Ok(UniformGrid { a, b, n })
    }

    pub fn start(&self) -> f64 {
        self.a
    }

    pub fn end(&self) -> f64 {
        self.b
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.b - self.a) / (self.n - 1) as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j + 1 == self.n {
            self.b
        } else {
            self.a + j as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    /// Index of the node equal to `x` (within a relative 1e-9 of the step).
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let r = (x - self.a) / self.step();
        let j = r.round();
        if (r - j).abs() < 1e-9 && j >= 0.0 && (j as usize) < self.n {
            Some(j as usize)
        } else {
            None
        }
    }

    /// Every `stride`-th node; requires `stride` to divide `n - 1`.
    pub fn coarsen(&self, stride: usize) -> Option<UniformGrid> {
        if stride == 0 || !(self.n - 1).is_multiple_of(stride) || (self.n - 1) / stride < 1 {
            return None;
        }
        UniformGrid::new(self.a, self.b, (self.n - 1) / stride + 1).ok()
    }
}

/// Weights of the composite rule over `count` consecutive nodes with spacing `h`.
pub fn composite_weights(count: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; count];
    match count {
        0 | 1 => {}
        2 => {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
        }
        _ => {
            let simpson_end = if count % 2 == 1 { count - 1 } else { count - 4 };
            let mut i = 0;
            while i + 2 <= simpson_end {
                w[i] += h / 3.0;
                w[i + 1] += 4.0 * h / 3.0;
                w[i + 2] += h / 3.0;
                i += 2;
            }
            if count.is_multiple_of(2) {
                let s = count - 4;
                let c = 3.0 * h / 8.0;
                w[s] += c;
                w[s + 1] += 3.0 * c;
                w[s + 2] += 3.0 * c;
                w[s + 3] += c;
            }
        }
    }
    w
}

/// Sparse weights integrating over `[node(lo), node(hi)]`.
///
/// The returned indices lie in `lo..=hi` except for a one-interval piece on a
/// grid with at least four nodes, which reaches two nodes past the piece.
pub fn piece_weights(grid: &UniformGrid, lo: usize, hi: usize) -> Vec<(usize, f64)> {
    assert!(lo <= hi && hi < grid.len());
    let h = grid.step();
    if lo == hi {
        return Vec::new();
    }
    if hi - lo == 1 && grid.len() >= 4 {
        let c = h / 24.0;
        return if lo + 3 < grid.len() {
            vec![(lo, 9.0 * c), (lo + 1, 19.0 * c), (lo + 2, -5.0 * c), (lo + 3, c)]
        } else {
            vec![(hi - 3, c), (hi - 2, -5.0 * c), (hi - 1, 19.0 * c), (hi, 9.0 * c)]
        };
    }
    composite_weights(hi - lo + 1, h)
        .into_iter()
        .enumerate()
        .map(|(i, w)| (lo + i, w))
        .collect()
}

fn check_len(samples: &[f64], grid: &UniformGrid) -> Result<()> {
    if samples.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "{} samples on a {}-point grid",
            samples.len(),
            grid.len()
        )));
    }
    Ok(())
}

/// Integral of uniformly sampled data over the whole grid.
pub fn integrate(samples: &[f64], grid: &UniformGrid) -> Result<f64> {
    check_len(samples, grid)?;
    Ok(composite_weights(grid.len(), grid.step())
        .iter()
        .zip(samples)
        .map(|(w, s)| w * s)
        .sum())
}

/// Integrals over `[a, t_split]` and `[t_split, b]`.
pub fn integrate_split(samples: &[f64], grid: &UniformGrid, split: usize) -> Result<(f64, f64)> {
    check_len(samples, grid)?;
    if split >= grid.len() {
        return Err(Error::InvalidGrid(format!(
            "split index {split} outside 0..{}",
            grid.len()
        )));
    }
    let apply = |ws: Vec<(usize, f64)>| ws.into_iter().map(|(i, w)| w * samples[i]).sum::<f64>();
    Ok((
        apply(piece_weights(grid, 0, split)),
        apply(piece_weights(grid, split, grid.len() - 1)),
    ))
}

/// Tensor-product integral of samples `values[i * nt + j]` over `xgrid x tgrid`.
pub fn integrate_2d(values: &[f64], xgrid: &UniformGrid, tgrid: &UniformGrid) -> Result<f64> {
    if values.len() != xgrid.len() * tgrid.len() {
        return Err(Error::GridMismatch("2-D sample count mismatch".into()));
    }
    let wx = composite_weights(xgrid.len(), xgrid.step());
    let wt = composite_weights(tgrid.len(), tgrid.step());
    let nt = tgrid.len();
    Ok(wx
        .iter()
        .enumerate()
        .map(|(i, wxi)| {
            wxi * wt
                .iter()
                .zip(&values[i * nt..(i + 1) * nt])
                .map(|(w, v)| w * v)
                .sum::<f64>()
        })
        .sum())
}
