use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::estimators::{
    fit_breakpoint, fit_loss_curve, fit_power_law, BreakpointFit, FitError, LossCurveFit, PowerLawFit,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitKind {
    /// Discrete power law over a column of counts.
    PowerLaw,
    /// Two-segment fit of `log10 y` against `log10 x`.
    Breakpoint,
    /// `y = l_opt + A x^-s`.
    Loss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FitOutput {
    PowerLaw(PowerLawFit),
    Breakpoint(BreakpointFit),
    Loss(LossCurveFit),
}

/// Reads one column of a CSV written by this crate (or any CSV with a
/// header); `#` lines are skipped and empty cells come back as `None`.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<Option<f64>>, HarnessError> {
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => HarnessError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => HarnessError::Parse {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(io)?;
    let headers = reader.headers().map_err(io)?.clone();
    let idx = headers.iter().position(|h| h == column).ok_or_else(|| HarnessError::Invalid {
        field: "column".into(),
        message: format!("`{column}` not in header {:?}", headers.iter().collect::<Vec<_>>()),
    })?;
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(io)?;
        let cell = rec.get(idx).unwrap_or("").trim();
        if cell.is_empty() {
            out.push(None);
            continue;
        }
        let v = cell.parse::<f64>().map_err(|e| HarnessError::Parse {
            path: path.to_path_buf(),
            message: format!("record {}: `{cell}` in column `{column}`: {e}", line + 1),
        })?;
        out.push(Some(v));
    }
    Ok(out)
}

fn paired(xs: Vec<Option<f64>>, ys: Vec<Option<f64>>) -> (Vec<f64>, Vec<f64>) {
    xs.into_iter()
        .zip(ys)
        .filter_map(|(x, y)| Some((x?, y?)))
        .unzip()
}

/// Fits `column` of the CSV at `path`. `x_column` supplies the abscissa for
/// breakpoint and loss fits and the per-row multiplicity for power-law fits;
/// loss fits keep rows with `y <= max_y` only.
pub fn fit_from_csv(
    path: &Path,
    kind: FitKind,
    column: &str,
    x_column: Option<&str>,
    max_y: Option<f64>,
) -> Result<FitOutput, HarnessError> {
    let ys = read_column(path, column)?;
    match kind {
        FitKind::PowerLaw => {
            let weights = match x_column {
                Some(w) => read_column(path, w)?,
                None => vec![Some(1.0); ys.len()],
            };
            let mut samples = Vec::new();
            for (y, w) in ys.into_iter().zip(weights) {
                let (Some(y), Some(w)) = (y, w) else { continue };
                if y.fract() != 0.0 || y < 1.0 || w.fract() != 0.0 || w < 0.0 {
                    return Err(FitError::InvalidInput(format!("counts must be positive integers, got {y} x {w}")).into());
                }
                samples.extend(std::iter::repeat_n(y as u64, w as usize));
            }
            Ok(FitOutput::PowerLaw(fit_power_law(&samples)?))
        }
        FitKind::Breakpoint => {
            let xs = read_column(path, x_column.unwrap_or("D"))?;
            let (xs, ys): (Vec<f64>, Vec<f64>) = xs
                .into_iter()
                .zip(ys)
                .filter_map(|(x, y)| match (x, y) {
                    (Some(x), Some(y)) if x > 0.0 && y > 0.0 => Some((x.log10(), y.log10())),
                    _ => None,
                })
                .unzip();
            Ok(FitOutput::Breakpoint(fit_breakpoint(&xs, &ys)?))
        }
        FitKind::Loss => {
            let xs = read_column(path, x_column.unwrap_or("D"))?;
            let (xs, ys) = paired(xs, ys);
            let (xs, ys): (Vec<f64>, Vec<f64>) = xs
                .into_iter()
                .zip(ys)
                .filter(|&(_, y)| max_y.is_none_or(|m| y <= m))
                .unzip();
            Ok(FitOutput::Loss(fit_loss_curve(&xs, &ys)?))
        }
    }
}
