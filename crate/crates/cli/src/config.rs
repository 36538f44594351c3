//! Problem configuration files.

use std::path::{Path, PathBuf};

use nonlocal_inverse::basis::BasisParams;
use nonlocal_inverse::expr::{parse, Var};
use nonlocal_inverse::kernels::NonlocalParams;
use nonlocal_inverse::manufactured::{preset, preset_at, ManufacturedSpec};
use nonlocal_inverse::problem::{DataFn, ProblemData};
use nonlocal_inverse::spectral::CouplingMode;
use serde::{Deserialize, Serialize};

use crate::io::{read_curve, read_surface};
use crate::CliError;

fn default_k() -> usize {
    16
}

fn default_nt() -> usize {
    257
}

fn default_nx() -> usize {
    513
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    100
}

/// A data function: an expression string or a CSV file of samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source {
    Expr(String),
    File {
        file: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Functions {
    pub f: Source,
    pub phi: Source,
    pub psi: Source,
    pub h: Source,
    /// Coefficient for the direct problem, or the known answer of an inverse one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Source>,
}

/// The JSON problem file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta2: Option<f64>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(rename = "K", default = "default_k")]
    pub k_max: usize,
    #[serde(default = "default_nt")]
    pub nt: usize,
    #[serde(default = "default_nx")]
    pub nx: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functions: Option<Functions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default)]
    pub coupling_mode: CouplingMode,
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Config for a manufactured spec with every function written out.
    pub fn from_spec(spec: &ManufacturedSpec, template: &ProblemConfig) -> Result<Self, CliError> {
        let p = spec.problem()?;
        let text = |d: &DataFn| match d {
            DataFn::Expr(e) => Ok(Source::Expr(e.to_string())),
            _ => Err(CliError::Input("manufactured data must be symbolic".into())),
        };
        Ok(ProblemConfig {
            beta: Some(spec.beta),
            delta1: Some(spec.delta1),
            delta2: Some(spec.delta2),
            horizon: Some(spec.horizon),
            functions: Some(Functions {
                f: text(&p.f)?,
                phi: text(&p.phi)?,
                psi: text(&p.psi)?,
                h: text(&p.h)?,
                a: Some(Source::Expr(spec.coefficient().to_string())),
            }),
            preset: None,
            ..template.clone()
        })
    }
}

/// A validated configuration ready for the solvers.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub problem: ProblemData,
    pub k_max: usize,
    pub nt: usize,
    pub nx: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub mode: CouplingMode,
    /// Known coefficient, from a preset or `functions.a`.
    pub a: Option<DataFn>,
    pub spec: Option<ManufacturedSpec>,
}

fn source(src: &Source, var: Var, base: &Path, name: &str) -> Result<DataFn, CliError> {
    match src {
        Source::Expr(text) => {
            let e = parse(text).map_err(|e| CliError::Input(format!("functions.{name}: {e}")))?;
            let other = match var {
                Var::X => Var::T,
                Var::T => Var::X,
            };
            if name != "f" && e.contains(other) {
                return Err(CliError::Input(format!("functions.{name} may only depend on {var}")));
            }
            Ok(DataFn::Expr(e))
        }
        Source::File { file } => {
            let path = base.join(file);
            if name == "f" {
                read_surface(&path)
            } else {
                read_curve(&path, var)
            }
        }
    }
}

/// Validates a configuration and builds the problem. Relative sample paths
/// are resolved against `base`. `horizon_override` replaces `T`.
pub fn load(cfg: &ProblemConfig, base: &Path, horizon_override: Option<f64>) -> Result<Loaded, CliError> {
    if cfg.k_max == 0 {
        return Err(CliError::Input("K must be at least 1".into()));
    }
    if cfg.nt < 5 || cfg.nx < 5 {
        return Err(CliError::Input("nt and nx must be at least 5".into()));
    }
    if cfg.tol.is_nan() || cfg.tol <= 0.0 || cfg.max_iter == 0 {
        return Err(CliError::Input("tol must be positive and max_iter at least 1".into()));
    }
    let (problem, a, spec) = match (&cfg.functions, &cfg.preset) {
        (Some(_), Some(_)) | (None, None) => {
            return Err(CliError::Input("exactly one of `functions` and `preset` must be given".into()))
        }
        (None, Some(name)) => {
            if cfg.beta.is_some() || cfg.delta1.is_some() || cfg.delta2.is_some() {
                return Err(CliError::Input("beta, delta1 and delta2 come from the preset".into()));
            }
            let spec = match horizon_override.or(cfg.horizon) {
                Some(t) => preset_at(name, t)?,
                None => preset(name)?,
            };
            let a = DataFn::Expr(spec.coefficient());
            (spec.problem()?, Some(a), Some(spec))
        }
        (Some(funcs), None) => {
            let (Some(beta), Some(d1), Some(d2)) = (cfg.beta, cfg.delta1, cfg.delta2) else {
                return Err(CliError::Input("beta, delta1 and delta2 are required with `functions`".into()));
            };
            let Some(tt) = horizon_override.or(cfg.horizon) else {
                return Err(CliError::Input("T is required with `functions`".into()));
            };
            let problem = ProblemData {
                basis: BasisParams::new(beta)?,
                nonlocal: NonlocalParams::new(d1, d2, tt)?,
                f: source(&funcs.f, Var::X, base, "f")?,
                phi: source(&funcs.phi, Var::X, base, "phi")?,
                psi: source(&funcs.psi, Var::X, base, "psi")?,
                h: source(&funcs.h, Var::T, base, "h")?,
            };
            let a = funcs.a.as_ref().map(|s| source(s, Var::T, base, "a")).transpose()?;
            (problem, a, None)
        }
    };
    Ok(Loaded {
        problem,
        k_max: cfg.k_max,
        nt: cfg.nt,
        nx: cfg.nx,
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        mode: cfg.coupling_mode,
        a,
        spec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_unknown_fields() {
        let c = ProblemConfig::from_json(r#"{"preset": "single-odd"}"#).unwrap();
        assert_eq!((c.k_max, c.nt, c.nx, c.max_iter), (16, 257, 513, 100));
        assert_eq!(c.tol, 1e-10);
        assert_eq!(c.coupling_mode, CouplingMode::OdeConsistent);
        assert!(ProblemConfig::from_json(r#"{"preset": "single-odd", "bogus": 1}"#).is_err());
    }

    #[test]
    fn exactly_one_source() {
        let c = ProblemConfig::from_json(r#"{"beta": 3, "delta1": 0, "delta2": 0, "T": 0.1}"#).unwrap();
        assert!(matches!(load(&c, Path::new("."), None), Err(CliError::Input(_))));
    }

    #[test]
    fn round_trip_of_spec() {
        let spec = preset_at("odd-even", 0.1).unwrap();
        let template = ProblemConfig::from_json(r#"{"preset": "odd-even"}"#).unwrap();
        let cfg = ProblemConfig::from_spec(&spec, &template).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back = ProblemConfig::from_json(&json).unwrap();
        let loaded = load(&back, Path::new("."), None).unwrap();
        let direct = spec.problem().unwrap();
        for &(x, t) in &[(0.1, 0.02), (0.6, 0.09)] {
            let a = loaded.problem.f.eval_xt(x, t).unwrap();
            let b = direct.f.eval_xt(x, t).unwrap();
            assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0));
        }
    }
}
