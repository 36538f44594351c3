//! CSV input and output.

use std::path::Path;

use nonlocal_inverse::expr::Var;
use nonlocal_inverse::problem::DataFn;
use nonlocal_inverse::quadrature::UniformGrid;

use crate::CliError;

/// Relative tolerance for recognising uniform spacing.
const SPACING_TOL: f64 = 1e-9;

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn headers(rdr: &mut csv::Reader<std::fs::File>, path: &Path) -> Result<Vec<String>, CliError> {
    Ok(rdr
        .headers()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect())
}

fn rows(rdr: &mut csv::Reader<std::fs::File>, path: &Path, width: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if rec.len() < width {
            return Err(CliError::Input(format!(
                "{}: row {} has {} fields, expected {width}",
                path.display(),
                line + 2,
                rec.len()
            )));
        }
        let vals = rec
            .iter()
            .take(width)
            .map(|s| {
                s.parse::<f64>().map_err(|_| {
                    CliError::Input(format!("{}: row {}: `{s}` is not a number", path.display(), line + 2))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(vals);
    }
    Ok(out)
}

/// Uniform grid through sorted distinct `values`.
pub fn uniform_grid(values: &[f64], what: &str) -> Result<UniformGrid, CliError> {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    if v.len() < 2 {
        return Err(CliError::Input(format!("{what}: need at least two distinct nodes")));
    }
    let grid = UniformGrid::new(v[0], v[v.len() - 1], v.len())?;
    let h = grid.step();
    for (j, x) in v.iter().enumerate() {
        if (x - grid.node(j)).abs() > SPACING_TOL * h.max(x.abs()) {
            return Err(CliError::Input(format!("{what}: nodes are not uniformly spaced")));
        }
    }
    Ok(grid)
}

/// Two-column samples `var,value` of a function of one variable.
pub fn read_curve(path: &Path, var: Var) -> Result<DataFn, CliError> {
    let mut rdr = open(path)?;
    let head = headers(&mut rdr, path)?;
    if head.len() < 2 || head[0] != var.to_string() {
        return Err(CliError::Input(format!(
            "{}: expected header `{var},value`, found `{}`",
            path.display(),
            head.join(",")
        )));
    }
    let mut data = rows(&mut rdr, path, 2)?;
    data.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let grid = uniform_grid(&data.iter().map(|r| r[0]).collect::<Vec<_>>(), &path.display().to_string())?;
    if grid.len() != data.len() {
        return Err(CliError::Input(format!("{}: repeated nodes", path.display())));
    }
    Ok(DataFn::curve(var, grid, data.into_iter().map(|r| r[1]).collect())?)
}

/// Samples `x,t,value` on a tensor grid, one row per node, any order.
pub fn read_surface(path: &Path) -> Result<DataFn, CliError> {
    let (xg, tg, values) = read_field(path, &["x", "t"])?;
    Ok(DataFn::surface(xg, tg, values)?)
}

/// Tensor-grid field with the given two leading column names; values are
/// returned as `[i * nt + j]`.
pub fn read_field(path: &Path, names: &[&str; 2]) -> Result<(UniformGrid, UniformGrid, Vec<f64>), CliError> {
    let mut rdr = open(path)?;
    let head = headers(&mut rdr, path)?;
    if head.len() < 3 || head[0] != names[0] || head[1] != names[1] {
        return Err(CliError::Input(format!(
            "{}: expected header `{},{},value`, found `{}`",
            path.display(),
            names[0],
            names[1],
            head.join(",")
        )));
    }
    let data = rows(&mut rdr, path, 3)?;
    let name = path.display().to_string();
    let xg = uniform_grid(&data.iter().map(|r| r[0]).collect::<Vec<_>>(), &name)?;
    let tg = uniform_grid(&data.iter().map(|r| r[1]).collect::<Vec<_>>(), &name)?;
    let (nx, nt) = (xg.len(), tg.len());
    if data.len() != nx * nt {
        return Err(CliError::Input(format!("{name}: {} rows for a {nx} x {nt} grid", data.len())));
    }
    let mut values = vec![f64::NAN; nx * nt];
    for r in &data {
        let i = xg.index_of(r[0]);
        let j = tg.index_of(r[1]);
        match (i, j) {
            (Some(i), Some(j)) => values[i * nt + j] = r[2],
            _ => return Err(CliError::Input(format!("{name}: node ({}, {}) is off the grid", r[0], r[1]))),
        }
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(CliError::Input(format!("{name}: missing or repeated nodes")));
    }
    Ok((xg, tg, values))
}

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Writes a header and rows of floats with LF line endings.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    let err = |e: csv::Error| CliError::Output(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r.iter().map(|v| fmt_f64(*v))).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 1.7200410366058349e-7, -2.5e300, 0.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(0.5), "0.5");
    }

    #[test]
    fn curve_and_field_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        write_csv(&p, &["t", "value"], (0..5).map(|j| vec![j as f64 * 0.25, 1.0 + j as f64])).unwrap();
        let d = read_curve(&p, Var::T).unwrap();
        assert!((d.eval_t(0.5).unwrap() - 3.0).abs() < 1e-14);
        assert!(read_curve(&p, Var::X).is_err());

        let p = dir.path().join("u.csv");
        let mut rows = Vec::new();
        for j in 0..3 {
            for i in 0..4 {
                rows.push(vec![i as f64 / 3.0, j as f64 * 0.5, (i * 10 + j) as f64]);
            }
        }
        write_csv(&p, &["x", "t", "u"], rows).unwrap();
        let (xg, tg, v) = read_field(&p, &["x", "t"]).unwrap();
        assert_eq!((xg.len(), tg.len()), (4, 3));
        assert_eq!(v[2 * 3 + 1], 21.0);

        std::fs::write(&p, "x,value\n0,1\n0.3,2\n1,3\n").unwrap();
        assert!(read_curve(&p, Var::X).is_err());
    }
}
