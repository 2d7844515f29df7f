use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::analytic::ModelParams;
use crate::loss::LossParams;
use crate::urn::{ActivationMode, UrnConfig, DEFAULT_MEMORY_CAP_BYTES, DEFAULT_REBUILD_INTERVAL};

pub const DEFAULT_REPLICATES: usize = 8;

/// Log-spaced checkpoints `min, ..., max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DGrid {
    pub count: usize,
    pub min: f64,
    pub max: f64,
}

impl DGrid {
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let (lo, hi) = (self.min.log10(), self.max.log10());
        (0..self.count)
            .map(|i| match i {
                0 => self.min,
                i if i + 1 == self.count => self.max,
                i => 10f64.powf(lo + (hi - lo) * i as f64 / (self.count - 1) as f64),
            })
            .collect()
    }

    /// Checkpoints rounded to whole sample counts.
    pub fn sample_counts(&self) -> Vec<u64> {
        self.points().into_iter().map(|d| d.round() as u64).collect()
    }
}

/// Sampler settings layered over the model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UrnOverrides {
    #[serde(default)]
    pub mode: ActivationMode,
    #[serde(default = "default_rebuild_interval")]
    pub rebuild_interval: u64,
    #[serde(default = "default_memory_cap")]
    pub memory_cap_bytes: u64,
}

impl Default for UrnOverrides {
    fn default() -> Self {
        Self {
            mode: ActivationMode::default(),
            rebuild_interval: DEFAULT_REBUILD_INTERVAL,
            memory_cap_bytes: DEFAULT_MEMORY_CAP_BYTES,
        }
    }
}

fn default_rebuild_interval() -> u64 {
    DEFAULT_REBUILD_INTERVAL
}

fn default_memory_cap() -> u64 {
    DEFAULT_MEMORY_CAP_BYTES
}

fn default_replicates() -> usize {
    DEFAULT_REPLICATES
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputKind {
    TrajectoryCsv,
    HistogramCsv,
    LossSweepCsv,
    FitReport,
    SvgPlot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRequest {
    pub kind: OutputKind,
    pub path: PathBuf,
}

/// Tolerances used by `verify`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifySettings {
    /// Allowed deviation of the MC mean from the closed form, in standard errors.
    #[serde(default = "default_k_sigma")]
    pub k_sigma: f64,
    #[serde(default = "default_pmf_ks")]
    pub pmf_ks_max: f64,
    #[serde(default = "default_exponent_tol")]
    pub loss_exponent_tol: f64,
    /// Replaces `b` in the analytic reference only; a negative control.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inject_analytic_b: Option<f64>,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            k_sigma: default_k_sigma(),
            pmf_ks_max: default_pmf_ks(),
            loss_exponent_tol: default_exponent_tol(),
            inject_analytic_b: None,
        }
    }
}

fn default_k_sigma() -> f64 {
    3.0
}

fn default_pmf_ks() -> f64 {
    0.05
}

fn default_exponent_tol() -> f64 {
    0.01
}

/// A declarative experiment, as read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Skip the simulation and report the closed-form curves only.
    #[serde(default)]
    pub analytic_only: bool,
    pub model: ModelParams,
    #[serde(default)]
    pub urn: UrnOverrides,
    pub d_grid: DGrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossParams>,
    #[serde(default)]
    pub verify: VerifySettings,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<OutputRequest>,
}

fn invalid(field: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, HarnessError> {
        let spec: Self = toml::from_str(text).map_err(|e| HarnessError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment specs always serialize")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.model.validate().map_err(|e| invalid("model", e.to_string()))?;
        let g = &self.d_grid;
        if g.count == 0 {
            return Err(invalid("d_grid.count", "need at least one checkpoint"));
        }
        if !(g.min >= 1.0 && g.min.is_finite()) {
            return Err(invalid("d_grid.min", format!("must be >= 1, got {}", g.min)));
        }
        if !(g.max >= g.min && g.max.is_finite()) || (g.count > 1 && g.max == g.min) {
            return Err(invalid("d_grid.max", format!("must exceed d_grid.min, got {}", g.max)));
        }
        if g.min < self.model.d0 {
            return Err(invalid("d_grid.min", format!("lies below model.d0 = {}", self.model.d0)));
        }
        if self.replicates == 0 {
            return Err(invalid("replicates", "must be at least 1"));
        }
        if let Some(loss) = &self.loss {
            loss.validate().map_err(|e| invalid("loss", e.to_string()))?;
        }
        if !self.analytic_only {
            for (field, v) in [("model.n", self.model.n), ("model.c", self.model.c)] {
                if v.fract() != 0.0 || v > usize::MAX as f64 {
                    return Err(invalid(field, format!("simulation needs a whole number, got {v}")));
                }
            }
            if !self.d_grid.sample_counts().windows(2).all(|w| w[0] < w[1]) {
                return Err(invalid(
                    "d_grid",
                    "rounding to whole sample counts merges checkpoints; widen the range or lower the count",
                ));
            }
            self.urn_config().validate().map_err(|e| invalid("urn", e.to_string()))?;
        }
        if let Some(b) = self.verify.inject_analytic_b {
            if !(b > 0.0 && b.is_finite()) {
                return Err(invalid("verify.inject_analytic_b", format!("must be positive, got {b}")));
            }
        }
        for (i, out) in self.outputs.iter().enumerate() {
            if out.path.file_name().is_none() {
                return Err(invalid(&format!("outputs[{i}].path"), "must name a file"));
            }
        }
        Ok(())
    }

    pub fn urn_config(&self) -> UrnConfig {
        UrnConfig {
            n: self.model.n as usize,
            b: self.model.b,
            c: self.model.c as usize,
            mode: self.urn.mode,
            seed: self.seed,
            rebuild_interval: self.urn.rebuild_interval,
            record_histograms: true,
            memory_cap_bytes: self.urn.memory_cap_bytes,
        }
    }
}

/// Reads and validates an experiment spec.
pub fn load_spec(path: impl AsRef<Path>) -> Result<ExperimentSpec, HarnessError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ExperimentSpec::from_toml_str(&text, path)
}

/// The desk-scale experiment used by `verify` when no config is given.
pub const DESK_SPEC: &str = include_str!("../../configs/desk.toml");

/// The analytic-only growth curve at `N = 1e11, b = 1e3, c = 1e5`.
pub const LARGE_SPEC: &str = include_str!("../../configs/large.toml");

pub fn builtin(text: &str, name: &str) -> ExperimentSpec {
    ExperimentSpec::from_toml_str(text, Path::new(name)).expect("built-in specs are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentSpec, HarnessError> {
        ExperimentSpec::from_toml_str(text, Path::new("test.toml"))
    }

    const MINIMAL: &str = "[model]\nn = 1000\nb = 1\nc = 10\n[d_grid]\ncount = 5\nmin = 10\nmax = 1e4\n";

    #[test]
    fn minimal_spec_gets_defaults() {
        let spec = parse(MINIMAL).unwrap();
        assert_eq!(spec.replicates, DEFAULT_REPLICATES);
        assert_eq!(spec.urn.mode, ActivationMode::FixedC);
        assert_eq!(spec.seed, 0);
        assert!(spec.loss.is_none() && spec.outputs.is_empty());
    }

    #[test]
    fn zero_replicates_rejected() {
        let err = parse(&format!("replicates = 0\n{MINIMAL}")).unwrap_err();
        assert!(matches!(err, HarnessError::Invalid { ref field, .. } if field == "replicates"), "{err}");
    }

    #[test]
    fn parse_error_reports_line() {
        let err = parse("[model]\nn = \n").unwrap_err();
        assert!(matches!(err, HarnessError::Parse { .. }));
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn bad_grid_rejected() {
        let err = parse(&MINIMAL.replace("min = 10", "min = 0.5")).unwrap_err();
        assert!(err.to_string().contains("d_grid.min"), "{err}");
        let err = parse(&MINIMAL.replace("count = 5", "count = 500").replace("max = 1e4", "max = 20")).unwrap_err();
        assert!(err.to_string().contains("d_grid"), "{err}");
    }

    #[test]
    fn round_trip() {
        for text in [MINIMAL, DESK_SPEC, LARGE_SPEC] {
            let spec = parse(text).unwrap();
            assert_eq!(parse(&spec.to_toml()).unwrap(), spec);
        }
    }

    #[test]
    fn grid_ends_are_exact() {
        let g = DGrid {
            count: 20,
            min: 100.0,
            max: 1e5,
        };
        let pts = g.points();
        assert_eq!((pts[0], pts[19]), (100.0, 1e5));
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
    }
}
