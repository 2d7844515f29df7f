use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::spec::{OutputKind, OutputRequest};
use super::sweep::{Fits, Provenance, SweepResult};
use super::HarnessError;

pub const TRAJECTORY_HEADER: [&str; 6] = ["D", "K_mc_mean", "K_mc_std", "K_analytic", "replicates", "seed_hash"];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never see a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::Builder::new()
        .prefix(".urnscale-")
        .tempfile_in(dir)
        .map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(float).unwrap_or_default()
}

fn table(provenance: &Provenance, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut out = format!("{}\n", provenance.comment()).into_bytes();
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(&mut out);
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.flush().expect("in-memory write");
    drop(w);
    out
}

/// Trajectory table: one row per checkpoint, 17 significant digits.
pub fn render_csv(result: &SweepResult) -> Vec<u8> {
    let p = &result.provenance;
    let seed_hash = p.seed_hash();
    table(
        p,
        &TRAJECTORY_HEADER,
        result.records.iter().map(|r| {
            vec![
                float(r.d),
                opt(r.k_mc_mean),
                opt(r.k_mc_std),
                float(r.k_analytic),
                result.replicates.to_string(),
                seed_hash.clone(),
            ]
        }),
    )
}

pub fn render_histogram_csv(result: &SweepResult) -> Vec<u8> {
    table(
        &result.provenance,
        &["k", "neurons"],
        result.pooled_histogram.iter().map(|(k, n)| vec![k.to_string(), n.to_string()]),
    )
}

pub fn render_loss_csv(result: &SweepResult) -> Vec<u8> {
    table(
        &result.provenance,
        &["D", "loss_mc_mean", "loss_model"],
        result
            .records
            .iter()
            .map(|r| vec![float(r.d), opt(r.loss_mc_mean), opt(r.loss_model)]),
    )
}

#[derive(Serialize)]
struct FitReport<'a> {
    provenance: &'a Provenance,
    replicates: usize,
    breakpoint_log10: f64,
    fits: &'a Fits,
}

pub fn render_fit_report(result: &SweepResult) -> Vec<u8> {
    let report = FitReport {
        provenance: &result.provenance,
        replicates: result.replicates,
        breakpoint_log10: result.spec.model.breakpoint_log10(),
        fits: &result.fits,
    };
    let mut out = serde_json::to_vec_pretty(&report).expect("fit reports serialize");
    out.push(b'\n');
    out
}

pub fn emit_csv(result: &SweepResult, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    atomic_write(path.as_ref(), &render_csv(result))
}

pub fn emit_histogram_csv(result: &SweepResult, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    atomic_write(path.as_ref(), &render_histogram_csv(result))
}

pub fn emit_loss_csv(result: &SweepResult, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    atomic_write(path.as_ref(), &render_loss_csv(result))
}

pub fn emit_fit_report(result: &SweepResult, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    atomic_write(path.as_ref(), &render_fit_report(result))
}

/// Writes every artifact the spec requests, with relative paths resolved
/// against `out_dir`. Returns the paths written.
pub fn emit_outputs(result: &SweepResult, out_dir: &Path) -> Result<Vec<std::path::PathBuf>, HarnessError> {
    let mut written = Vec::new();
    for OutputRequest { kind, path } in &result.spec.outputs {
        let path = out_dir.join(path);
        let bytes = match kind {
            OutputKind::TrajectoryCsv => render_csv(result),
            OutputKind::HistogramCsv => render_histogram_csv(result),
            OutputKind::LossSweepCsv => render_loss_csv(result),
            OutputKind::FitReport => render_fit_report(result),
            OutputKind::SvgPlot => super::plot::render_svg(result).into_bytes(),
        };
        atomic_write(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}
