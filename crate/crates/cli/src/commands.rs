//! Subcommand implementations. Each returns the exit code and a JSON
//! summary; files go to the output directory when one is given.

use std::path::{Path, PathBuf};

use nonlocal_inverse::basis::Projector;
use nonlocal_inverse::conditions::{
    check_conditions, compute_constants, max_horizon, ComplianceReport, ConstantsReport, NormResolution,
};
use nonlocal_inverse::expr::{Bindings, Var};
use nonlocal_inverse::inverse::{
    fixed_point_iterate, forward_solve, residual_report, InverseOperator, Iterate, ResidualReport,
    SolveOptions, SolveResult,
};
use nonlocal_inverse::manufactured::{preset, preset_at, HORIZON_REL_TOL};
use nonlocal_inverse::problem::{DataFn, Grids};
use nonlocal_inverse::spectral::{synthesize_field, CouplingMode, SpectralState, TimeGridFunction};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{load, Loaded, ProblemConfig};
use crate::io::{read_field, write_csv, write_json};
use crate::{exit, CliError};

/// What a command produced.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub summary: Value,
}

/// Options shared by the configuration-driven commands.
#[derive(Clone, Debug, Default)]
pub struct Common {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub mode: Option<CouplingMode>,
}

fn read_config(common: &Common) -> Result<(ProblemConfig, PathBuf), CliError> {
    let mut cfg = ProblemConfig::read(&common.config)?;
    if let Some(m) = common.mode {
        cfg.coupling_mode = m;
    }
    let base = common
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((cfg, base))
}

fn out_dir(out: &Option<PathBuf>) -> Result<Option<&Path>, CliError> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
    }
    Ok(out.as_deref())
}

fn to_value(v: &impl Serialize) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

#[derive(Debug, Serialize)]
struct CheckReport<'a> {
    #[serde(rename = "T")]
    horizon: f64,
    compliance: &'a ComplianceReport,
    constants: &'a ConstantsReport,
    #[serde(rename = "max_T", skip_serializing_if = "Option::is_none")]
    max_horizon: Option<f64>,
    all_hold: bool,
}

/// Largest horizon satisfying the contraction inequality for this config.
fn config_max_horizon(cfg: &ProblemConfig, base: &Path, start: f64) -> Result<f64, CliError> {
    if let Some(name) = &cfg.preset {
        return Ok(preset_at(name, start)?.max_horizon(HORIZON_REL_TOL)?);
    }
    let mut failure = None;
    let found = max_horizon(
        |tt| match load(cfg, base, Some(tt)) {
            Ok(l) => compute_constants(&l.problem, NormResolution::default()),
            Err(e) => {
                let msg = e.to_string();
                failure = Some(e);
                Err(nonlocal_inverse::Error::InvalidInput(msg))
            }
        },
        start,
        HORIZON_REL_TOL,
    );
    match (found, failure) {
        (Ok(t), _) => Ok(t),
        (Err(_), Some(e)) => Err(e),
        (Err(e), None) => Err(e.into()),
    }
}

pub fn cmd_check(common: &Common, find_max_horizon: bool) -> Result<Outcome, CliError> {
    let (cfg, base) = read_config(common)?;
    let loaded = load(&cfg, &base, None)?;
    let compliance = check_conditions(&loaded.problem)?;
    let constants = compute_constants(&loaded.problem, NormResolution::default())?;
    let horizon = loaded.problem.horizon();
    let max_h = if find_max_horizon { Some(config_max_horizon(&cfg, &base, horizon)?) } else { None };
    let all_hold = compliance.all_hold && constants.eq33_holds;
    let report = CheckReport {
        horizon,
        compliance: &compliance,
        constants: &constants,
        max_horizon: max_h,
        all_hold,
    };
    if let Some(dir) = out_dir(&common.out)? {
        write_json(&dir.join("check.json"), &report)?;
    }
    Ok(Outcome {
        code: if all_hold { exit::OK } else { exit::CONDITIONS },
        summary: to_value(&report),
    })
}

fn grids_of(l: &Loaded) -> Result<Grids, CliError> {
    Ok(Grids::new(l.nx, l.nt, l.problem.horizon())?)
}

fn sample_t(d: &DataFn, grids: &Grids) -> Result<Vec<f64>, CliError> {
    Ok(d.sample(Var::T, &grids.t)?)
}

fn write_field(path: &Path, state: &SpectralState, l: &Loaded, grids: &Grids) -> Result<(), CliError> {
    let u = synthesize_field(state, &l.problem.basis, &grids.x);
    let (xs, ts) = (grids.x.nodes(), grids.t.nodes());
    let nt = ts.len();
    write_csv(
        path,
        &["x", "t", "u"],
        xs.iter()
            .enumerate()
            .flat_map(|(i, &x)| ts.iter().enumerate().map(move |(j, &t)| (i, j, x, t)))
            .map(|(i, j, x, t)| vec![x, t, u[i * nt + j]]),
    )
}

fn write_coefficient(path: &Path, a: &TimeGridFunction, truth: Option<&[f64]>) -> Result<f64, CliError> {
    let ts = a.grid.nodes();
    let mut worst: f64 = 0.0;
    match truth {
        Some(tr) => {
            let rows: Vec<Vec<f64>> = ts
                .iter()
                .zip(&a.values)
                .zip(tr)
                .map(|((&t, &v), &w)| {
                    worst = worst.max((v - w).abs());
                    vec![t, v, w, (v - w).abs()]
                })
                .collect();
            write_csv(path, &["t", "a", "a_true", "abs_err"], rows)?;
        }
        None => write_csv(path, &["t", "a"], ts.iter().zip(&a.values).map(|(&t, &v)| vec![t, v]))?,
    }
    Ok(worst)
}

#[derive(Debug, Serialize)]
struct SolveReport<'a> {
    converged: bool,
    iterations: usize,
    deltas: Vec<f64>,
    norms_e: Vec<f64>,
    contraction_ratios: &'a [f64],
    tail_ratio: Option<f64>,
    residuals: Option<&'a ResidualReport>,
    max_abs_err: Option<f64>,
    warnings: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    compliance: Option<&'a ComplianceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    constants: Option<&'a ConstantsReport>,
}

fn solve_report<'a>(
    r: &'a SolveResult,
    max_abs_err: Option<f64>,
    compliance: Option<&'a ComplianceReport>,
    constants: Option<&'a ConstantsReport>,
) -> SolveReport<'a> {
    SolveReport {
        converged: r.converged,
        iterations: r.iterations,
        deltas: r.history.iter().map(|h| h.delta).collect(),
        norms_e: r.history.iter().map(|h| h.norm_e).collect(),
        contraction_ratios: &r.contraction_ratios,
        tail_ratio: r.tail_ratio,
        residuals: r.residuals.as_ref(),
        max_abs_err,
        warnings: &r.warnings,
        compliance,
        constants,
    }
}

pub fn cmd_solve_inverse(common: &Common, force: bool, max_iter: Option<usize>) -> Result<Outcome, CliError> {
    let (cfg, base) = read_config(common)?;
    let l = load(&cfg, &base, None)?;
    let compliance = check_conditions(&l.problem)?;
    let mut warnings = Vec::new();
    if !compliance.all_hold {
        let failed: Vec<String> = compliance.failed_checks().iter().map(|c| c.name.clone()).collect();
        if !force {
            let summary = json!({ "compliance": to_value(&compliance), "failed": failed });
            if let Some(dir) = out_dir(&common.out)? {
                write_json(&dir.join("report.json"), &summary)?;
            }
            return Ok(Outcome { code: exit::CONDITIONS, summary });
        }
        log::warn!("data hypotheses violated ({}); continuing because of --force", failed.join("; "));
        warnings.push(format!("data hypotheses violated: {}", failed.join("; ")));
    }
    let constants = match compute_constants(&l.problem, NormResolution::default()) {
        Ok(c) => {
            if !c.eq33_holds {
                warnings.push(format!(
                    "contraction inequality fails (B (A + 2)^2 = {:e}); convergence is not guaranteed",
                    c.eq33_lhs
                ));
            }
            Some(c)
        }
        Err(e) => {
            warnings.push(format!("constants unavailable: {e}"));
            None
        }
    };
    let grids = grids_of(&l)?;
    let opts = SolveOptions {
        tol: l.tol,
        max_iter: max_iter.unwrap_or(l.max_iter),
        mode: l.mode,
        ball_radius: constants.as_ref().filter(|c| c.eq33_holds).map(|c| c.r),
        ..Default::default()
    };
    let op = InverseOperator::new(&l.problem, l.k_max, &grids, l.mode)?;
    let mut r = fixed_point_iterate(&op, &opts)?;
    r.residuals = Some(residual_report(&l.problem, &r.solution, grids.x)?);
    r.warnings.splice(0..0, warnings);
    for w in &r.warnings {
        log::warn!("{w}");
    }

    let truth = l.a.as_ref().map(|a| sample_t(a, &grids)).transpose()?;
    let mut max_err = truth.as_ref().map(|tr| {
        r.solution.a.values.iter().zip(tr).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    });
    if let Some(dir) = out_dir(&common.out)? {
        let worst = write_coefficient(&dir.join("a.csv"), &r.solution.a, truth.as_deref())?;
        if truth.is_some() {
            max_err = Some(worst);
        }
        write_field(&dir.join("u.csv"), &r.solution.state, &l, &grids)?;
        write_json(
            &dir.join("report.json"),
            &solve_report(&r, max_err, Some(&compliance), constants.as_ref()),
        )?;
    }
    let summary = to_value(&solve_report(&r, max_err, None, None));
    Ok(Outcome { code: if r.converged { exit::OK } else { exit::NON_CONVERGENCE }, summary })
}

pub fn cmd_solve_forward(common: &Common, max_iter: Option<usize>) -> Result<Outcome, CliError> {
    let (cfg, base) = read_config(common)?;
    let l = load(&cfg, &base, None)?;
    let Some(a) = l.a.clone() else {
        return Err(CliError::Input("the direct problem needs `functions.a` or a preset".into()));
    };
    let grids = grids_of(&l)?;
    let opts = SolveOptions {
        tol: l.tol,
        max_iter: max_iter.unwrap_or(l.max_iter),
        mode: l.mode,
        ..Default::default()
    };
    let r = forward_solve(&l.problem, &a, l.k_max, &grids, &opts)?;
    if let Some(dir) = out_dir(&common.out)? {
        write_field(&dir.join("u.csv"), &r.solution.state, &l, &grids)?;
        write_json(&dir.join("report.json"), &solve_report(&r, None, None, None))?;
    }
    let summary = to_value(&solve_report(&r, None, None, None));
    Ok(Outcome { code: if r.converged { exit::OK } else { exit::NON_CONVERGENCE }, summary })
}

/// Writes `problem.json`, `truth_a.csv` and `truth_u.csv` for a preset.
pub fn cmd_manufacture(name: &str, horizon: Option<f64>, out: &Path) -> Result<Outcome, CliError> {
    let spec = match horizon {
        Some(t) => preset_at(name, t)?,
        None => preset(name)?,
    };
    let template = ProblemConfig::from_json("{}")?;
    let cfg = ProblemConfig::from_spec(&spec, &template)?;
    let grids = Grids::new(cfg.nx, cfg.nt, spec.horizon)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::Output(format!("{}: {e}", out.display())))?;
    write_json(&out.join("problem.json"), &cfg)?;

    let a = DataFn::Expr(spec.coefficient()).sample(Var::T, &grids.t)?;
    let ts = grids.t.nodes();
    write_csv(&out.join("truth_a.csv"), &["t", "a"], ts.iter().zip(&a).map(|(&t, &v)| vec![t, v]))?;
    let u = spec.solution()?;
    let mut rows = Vec::with_capacity(grids.x.len() * ts.len());
    for x in grids.x.nodes() {
        for &t in &ts {
            rows.push(vec![x, t, u.eval(&Bindings::xt(x, t)).map_err(nonlocal_inverse::Error::from)?]);
        }
    }
    write_csv(&out.join("truth_u.csv"), &["x", "t", "u"], rows)?;
    Ok(Outcome {
        code: exit::OK,
        summary: json!({ "preset": name, "T": spec.horizon, "out": out.display().to_string() }),
    })
}

#[derive(Debug, Serialize)]
struct ResidualSummary {
    #[serde(flatten)]
    residuals: ResidualReport,
    /// `max |u - P_K u|` between the supplied field and its truncated expansion.
    projection_error: f64,
    /// `max |a_file - a_field|` over nodes shared with the field grid.
    max_residual: f64,
}

/// Residuals of externally supplied `a(t)` and `u(x, t)` files.
pub fn cmd_residual(common: &Common, a_path: &Path, u_path: &Path) -> Result<Outcome, CliError> {
    let (cfg, base) = read_config(common)?;
    let l = load(&cfg, &base, None)?;
    let (xg, tg, u) = read_field(u_path, &["x", "t"])?;
    let tt = l.problem.horizon();
    if xg.start().abs() > 1e-12 || (xg.end() - 1.0).abs() > 1e-12 {
        return Err(CliError::Input(format!("{}: x nodes must span [0, 1]", u_path.display())));
    }
    if tg.start().abs() > 1e-12 || (tg.end() - tt).abs() > 1e-12 * tt.max(1.0) {
        return Err(CliError::Input(format!("{}: t nodes must span [0, T = {tt}]", u_path.display())));
    }
    let a = crate::io::read_curve(a_path, Var::T)?;
    let av = TimeGridFunction::new(tg, a.sample(Var::T, &tg)?)?;

    let nt = tg.len();
    let projector = Projector::new(l.k_max, &l.problem.basis, xg)?;
    let mut state = SpectralState::zeros(l.k_max, tg);
    for j in 0..nt {
        let column: Vec<f64> = (0..xg.len()).map(|i| u[i * nt + j]).collect();
        for (m, c) in projector.project(&column)?.into_iter().enumerate() {
            state.modes[m].values[j] = c;
        }
    }
    let back = synthesize_field(&state, &l.problem.basis, &xg);
    let projection_error = back.iter().zip(&u).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let residuals = residual_report(&l.problem, &Iterate { state, a: av }, xg)?;
    let max_residual = [
        residuals.pde,
        residuals.mean,
        residuals.observation,
        residuals.initial_value,
        residuals.initial_slope,
        residuals.boundary_value,
        residuals.boundary_flux,
    ]
    .into_iter()
    .fold(0.0f64, f64::max);
    let summary = ResidualSummary { residuals, projection_error, max_residual };
    if let Some(dir) = out_dir(&common.out)? {
        write_json(&dir.join("residual.json"), &summary)?;
    }
    Ok(Outcome { code: exit::OK, summary: to_value(&summary) })
}
