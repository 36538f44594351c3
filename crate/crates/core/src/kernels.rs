//! Green's kernels of the nonlocal two-point time problems.
//!
//! For `u'' = F` (mode zero) and `u'' + lambda^2 u = F` with
//! `u(0) + delta1 u(T) = phi`, `u'(0) + delta2 u'(T) = psi`, the solutions
//! are the homogeneous part plus `int_0^T G(t, tau) F(tau) dtau`.

use serde::{Deserialize, Serialize};

use crate::basis::lambda;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlocalParams {
    pub delta1: f64,
    pub delta2: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl NonlocalParams {
    /// Requires `delta1, delta2 >= 0`, `1 + delta1 delta2 > delta1 + delta2`
    /// and `T > 0`.
    pub fn new(delta1: f64, delta2: f64, horizon: f64) -> Result<Self> {
        if !(delta1.is_finite() && delta2.is_finite()) || delta1 < 0.0 || delta2 < 0.0 {
            return Err(Error::InvalidNonlocal(format!(
                "delta1 = {delta1}, delta2 = {delta2} must be finite and non-negative"
            )));
        }
        if 1.0 + delta1 * delta2 <= delta1 + delta2 {
            return Err(Error::InvalidNonlocal(format!(
                "1 + delta1 delta2 = {} must exceed delta1 + delta2 = {}",
                1.0 + delta1 * delta2,
                delta1 + delta2
            )));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidNonlocal(format!("horizon T = {horizon} must be positive")));
        }
        Ok(NonlocalParams { delta1, delta2, horizon })
    }

    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        NonlocalParams::new(self.delta1, self.delta2, horizon)
    }

    /// `rho = 1 / (1 - (delta1 + delta2) + delta1 delta2)`, an upper bound on `1 / rho_k(T)`.
    pub fn rho_bound(&self) -> f64 {
        1.0 / (1.0 - (self.delta1 + self.delta2) + self.delta1 * self.delta2)
    }
}

/// `rho_k(T) = 1 + (delta1 + delta2) cos(lambda_k T) + delta1 delta2`.
pub fn rho_k(k: usize, np: &NonlocalParams) -> Result<f64> {
    if k == 0 {
        return Err(Error::ZeroMode(k));
    }
    let v = 1.0 + (np.delta1 + np.delta2) * (lambda(k) * np.horizon).cos() + np.delta1 * np.delta2;
    if v <= 0.0 {
        return Err(Error::NonPositiveRho { k, value: v });
    }
    Ok(v)
}

/// Kernel for the mode-zero problem `u'' = F`.
pub fn g0(t: f64, tau: f64, np: &NonlocalParams) -> f64 {
    if t < tau {
        g0_before(t, tau, np)
    } else {
        g0_after(t, tau, np)
    }
}

pub(crate) fn g0_before(t: f64, tau: f64, np: &NonlocalParams) -> f64 {
    let NonlocalParams { delta1: d1, delta2: d2, horizon: tt } = *np;
    -(d2 * t + d1 * (tt - tau) + d1 * d2 * (t - tau)) / ((1.0 + d1) * (1.0 + d2))
}

pub(crate) fn g0_after(t: f64, tau: f64, np: &NonlocalParams) -> f64 {
    let NonlocalParams { delta1: d1, delta2: d2, horizon: tt } = *np;
    -(d2 * t + d1 * (tt - tau) - (1.0 + d1 + d2) * (t - tau)) / ((1.0 + d1) * (1.0 + d2))
}

/// Kernel for `u'' + lambda_k^2 u = F`.
pub fn gk(k: usize, t: f64, tau: f64, np: &NonlocalParams) -> Result<f64> {
    let rho = rho_k(k, np)?;
    let l = lambda(k);
    Ok(if t < tau {
        gk_before(l, rho, t, tau, np)
    } else {
        gk_after(l, rho, t, tau, np)
    })
}

/// Both branches of the kernel of mode `k` (`k = 0` for `G_0`) evaluated at
/// the same point, as `(t < tau branch, t >= tau branch)`.
pub fn kernel_branches(k: usize, t: f64, tau: f64, np: &NonlocalParams) -> Result<(f64, f64)> {
    if k == 0 {
        return Ok((g0_before(t, tau, np), g0_after(t, tau, np)));
    }
    let (l, rho) = (lambda(k), rho_k(k, np)?);
    Ok((gk_before(l, rho, t, tau, np), gk_after(l, rho, t, tau, np)))
}

pub(crate) fn gk_before(l: f64, rho: f64, t: f64, tau: f64, np: &NonlocalParams) -> f64 {
    let NonlocalParams { delta1: d1, delta2: d2, horizon: tt } = *np;
    -(d1 * (l * (tt - tau)).sin() * (l * t).cos()
        + d2 * (l * (tt - tau)).cos() * (l * t).sin()
        + d1 * d2 * (l * (t - tau)).sin())
        / (rho * l)
}

pub(crate) fn gk_after(l: f64, rho: f64, t: f64, tau: f64, np: &NonlocalParams) -> f64 {
    gk_before(l, rho, t, tau, np) + (l * (t - tau)).sin() / l
}

/// The brace multiplying `-phi_{2k-1}` in the printed closed form of the
/// even-mode solution.
pub fn phi_bracket(k: usize, t: f64, np: &NonlocalParams) -> Result<f64> {
    let rho = rho_k(k, np)?;
    let NonlocalParams { delta1: d1, delta2: d2, horizon: tt } = *np;
    let l = lambda(k);
    let (s, c) = (|a: f64| (l * a).sin(), |a: f64| (l * a).cos());

    let inner = d1 * c(t) * (tt / 2.0 * s(tt) + d2 * (1.0 - c(2.0 * tt)) / 4.0)
        + d2 * s(t) * (s(tt) / (2.0 * l) + tt / 2.0 * c(tt) + d2 * (tt / 2.0 + s(2.0 * tt) / (4.0 * l)))
        + d1 * d2
            * ((c(2.0 * tt - t) - c(t)) / (4.0 * l)
                + tt / 2.0 * s(t)
                + d2 * (-tt / 2.0 * s(tt - t) + (c(tt - t) - c(tt + t)) / (4.0 * l)));
    let tail =
        t / 2.0 * s(t) + d2 * (-t / 2.0 * s(tt - t) + (c(tt - t) - c(tt + t)) / (4.0 * l));
    Ok(-inner / (rho * rho * l) + tail)
}

/// The brace multiplying `psi_{2k-1} / lambda_k` in the printed closed form
/// of the even-mode solution.
pub fn psi_bracket(k: usize, t: f64, np: &NonlocalParams) -> Result<f64> {
    let rho = rho_k(k, np)?;
    let NonlocalParams { delta1: d1, delta2: d2, horizon: tt } = *np;
    let l = lambda(k);
    let (s, c) = (|a: f64| (l * a).sin(), |a: f64| (l * a).cos());

    let inner = d1 * c(t) * (s(tt) / (2.0 * l) - tt / 2.0 * c(tt))
        - d1 * (tt / 2.0 - s(2.0 * tt) / (4.0 * l))
        + d2 * s(t) * (tt / 2.0 * s(tt) - d1 * (1.0 - c(2.0 * tt)) / (4.0 * l))
        + d1 * d2
            * ((s(2.0 * tt - t) + s(t)) / (4.0 * l)
                - tt / 2.0 * c(t)
                - d1 * (tt / 2.0 * c(tt - t) - (s(tt - t) + s(tt + t)) / (4.0 * l)));
    let tail = s(t) / (2.0 * l) - t / 2.0 * c(t)
        - d1 * (t / 2.0 * c(tt - t) + (s(tt - t) - s(tt + t)) / (4.0 * l));
    Ok(-inner / (rho * rho * l) + tail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    use proptest::prelude::*;

    use crate::expr::{parse, Bindings};

    fn np(d1: f64, d2: f64, t: f64) -> NonlocalParams {
        NonlocalParams::new(d1, d2, t).unwrap()
    }

    /// Evaluates the bracket text through the expression parser, with the
    /// parameters spliced in as literals.
    fn substitute(template: &str, k: usize, t: f64, p: &NonlocalParams) -> f64 {
        let l = 2.0 * k as f64 * PI;
        let rho = 1.0 + (p.delta1 + p.delta2) * (l * p.horizon).cos() + p.delta1 * p.delta2;
        let text = template
            .replace("D1", &format!("({:e})", p.delta1))
            .replace("D2", &format!("({:e})", p.delta2))
            .replace("TT", &format!("({:e})", p.horizon))
            .replace("L", &format!("({:e})", l))
            .replace("R", &format!("({:e})", rho));
        parse(&text).unwrap().eval(&Bindings::t(t)).unwrap()
    }

    const PHI_TEXT: &str = "-(1/(R^2*L))*(D1*cos(L*t)*(TT/2*sin(L*TT) + D2*(1-cos(2*L*TT))/4) \
        + D2*sin(L*t)*(sin(L*TT)/(2*L) + TT/2*cos(L*TT) + D2*(TT/2 + sin(2*L*TT)/(4*L))) \
        + D1*D2*((cos(L*(2*TT-t)) - cos(L*t))/(4*L) + TT/2*sin(L*t) \
        + D2*(-TT/2*sin(L*(TT-t)) + (cos(L*(TT-t)) - cos(L*(TT+t)))/(4*L)))) \
        + t/2*sin(L*t) + D2*(-t/2*sin(L*(TT-t)) + (cos(L*(TT-t)) - cos(L*(TT+t)))/(4*L))";

    const PSI_TEXT: &str = "-(1/(R^2*L))*(D1*cos(L*t)*(sin(L*TT)/(2*L) - TT/2*cos(L*TT)) \
        - D1*(TT/2 - sin(2*L*TT)/(4*L)) \
        + D2*sin(L*t)*(TT/2*sin(L*TT) - D1*(1-cos(2*L*TT))/(4*L)) \
        + D1*D2*((sin(L*(2*TT-t)) + sin(L*t))/(4*L) - TT/2*cos(L*t) \
        - D1*(TT/2*cos(L*(TT-t)) - (sin(L*(TT-t)) + sin(L*(TT+t)))/(4*L)))) \
        + (sin(L*t)/(2*L) - t/2*cos(L*t) - D1*(t/2*cos(L*(TT-t)) + (sin(L*(TT-t)) - sin(L*(TT+t)))/(4*L)))";

    #[test]
    fn construction_rules() {
        assert!(NonlocalParams::new(0.0, 0.0, 1.0).is_ok());
        assert!(NonlocalParams::new(1.0, 0.0, 1.0).is_err());
        assert!(NonlocalParams::new(0.5, 0.5, 1.0).is_ok());
        assert!(NonlocalParams::new(2.0, 2.0, 1.0).is_ok());
        assert!(NonlocalParams::new(-0.1, 0.0, 1.0).is_err());
        assert!(NonlocalParams::new(0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn rho_fixtures() {
        assert_eq!(rho_k(3, &np(0.0, 0.0, 0.7)).unwrap(), 1.0);
        // delta1 = delta2 = 1 fails construction; check the formula directly
        let raw = NonlocalParams { delta1: 1.0, delta2: 1.0, horizon: 1.0 };
        assert!((rho_k(1, &raw).unwrap() - 4.0).abs() < 1e-14);
        assert!((rho_k(1, &np(0.2, 0.1, 0.25)).unwrap() - 1.02).abs() < 1e-14);
        assert!(rho_k(0, &raw).is_err());
        let bad = NonlocalParams { delta1: 1.0, delta2: 1.0, horizon: 0.25 };
        assert!(rho_k(2, &bad).is_err());
    }

    #[test]
    fn rho_positive_for_admissible_pairs() {
        for &(d1, d2) in &[(0.0, 0.0), (0.3, 0.2), (0.9, 0.05), (2.0, 3.0), (0.5, 0.99)] {
            for &t in &[0.01, 0.13, 0.5, 1.0, 2.71] {
                let p = np(d1, d2, t);
                let floor = 1.0 - (d1 + d2) + d1 * d2;
                for k in 1..=64 {
                    assert!(rho_k(k, &p).unwrap() >= floor - 1e-14);
                    assert!(1.0 / rho_k(k, &p).unwrap() <= p.rho_bound() + 1e-12);
                }
            }
        }
    }

    #[test]
    fn g0_fixtures() {
        let p = np(0.0, 0.0, 1.0);
        assert_eq!(g0(0.2, 0.5, &p), 0.0);
        assert!((g0(0.7, 0.5, &p) - 0.2).abs() < 1e-15);
        let raw = NonlocalParams { delta1: 1.0, delta2: 0.0, horizon: 1.0 };
        assert!((g0(0.0, 0.5, &raw) + 0.25).abs() < 1e-15);
    }

    #[test]
    fn gk_fixtures() {
        let p = np(0.0, 0.0, 1.0);
        assert_eq!(gk(2, 0.2, 0.5, &p).unwrap(), 0.0);
        let l = 4.0 * PI;
        assert!((gk(2, 0.7, 0.5, &p).unwrap() - (l * 0.2).sin() / l).abs() < 1e-15);
        let p = NonlocalParams { delta1: 1.0, delta2: 0.0, horizon: 0.25 };
        assert!((gk(1, 0.0, 0.0, &p).unwrap() + 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn bracket_reductions() {
        let p = np(0.0, 0.0, 0.8);
        for k in 1..4 {
            let l = lambda(k);
            for i in 0..=10 {
                let t = 0.08 * i as f64;
                let phi = phi_bracket(k, t, &p).unwrap();
                let psi = psi_bracket(k, t, &p).unwrap();
                assert!((phi - t / 2.0 * (l * t).sin()).abs() < 1e-15);
                let want = (l * t).sin() / (2.0 * l) - t / 2.0 * (l * t).cos();
                assert!((psi - want).abs() < 1e-15);
            }
        }
        assert_eq!(phi_bracket(1, 0.0, &p).unwrap(), 0.0);
        assert_eq!(psi_bracket(1, 0.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn brackets_match_substitution() {
        let a = NonlocalParams { delta1: 1.0, delta2: 0.0, horizon: 0.25 };
        let got = phi_bracket(1, 0.25, &a).unwrap();
        assert!((got - substitute(PHI_TEXT, 1, 0.25, &a)).abs() < 1e-13);
        let b = np(0.5, 0.0, 0.25);
        let got = psi_bracket(1, 0.1, &b).unwrap();
        assert!((got - substitute(PSI_TEXT, 1, 0.1, &b)).abs() < 1e-13);
        for &(d1, d2, tt) in &[(0.2, 0.1, 0.5), (0.4, 0.3, 1.3), (3.0, 2.0, 0.7)] {
            let p = np(d1, d2, tt);
            for k in 1..5 {
                for i in 0..=6 {
                    let t = tt * i as f64 / 6.0;
                    let x = phi_bracket(k, t, &p).unwrap();
                    let y = substitute(PHI_TEXT, k, t, &p);
                    assert!((x - y).abs() < 1e-12 * y.abs().max(1.0), "phi k={k} t={t}");
                    let x = psi_bracket(k, t, &p).unwrap();
                    let y = substitute(PSI_TEXT, k, t, &p);
                    assert!((x - y).abs() < 1e-12 * y.abs().max(1.0), "psi k={k} t={t}");
                }
            }
        }
    }

    #[test]
    fn resonant_bracket_satisfies_forced_equation() {
        let p = np(0.0, 0.0, 1.0);
        let l = lambda(1);
        let h = 1e-4;
        for i in 1..10 {
            let t = 0.1 * i as f64;
            let f = |t| phi_bracket(1, t, &p).unwrap();
            let d2 = (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h);
            assert!((d2 + l * l * f(t) - l * (l * t).cos()).abs() < 1e-5);
        }
    }

    proptest! {
        #[test]
        fn kernels_continuous_on_diagonal(
            k in 1usize..=8,
            d1 in 0.0f64..0.9,
            d2 in 0.0f64..0.9,
            tt in 0.05f64..3.0,
            frac in 0.0f64..=1.0,
        ) {
            let p = np(d1, d2, tt);
            let s = frac * tt;
            prop_assert!((g0_before(s, s, &p) - g0_after(s, s, &p)).abs() < 1e-12);
            let rho = rho_k(k, &p).unwrap();
            let l = lambda(k);
            prop_assert!((gk_before(l, rho, s, s, &p) - gk_after(l, rho, s, s, &p)).abs() < 1e-12);
        }
    }
}
