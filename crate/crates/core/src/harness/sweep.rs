use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spec::ExperimentSpec;
use super::HarnessError;
use crate::analytic::{k_closed_form, ModelParams};
use crate::estimators::{
    fit_breakpoint, fit_loss_curve, fit_power_law, fit_three_phase, BreakpointFit, LossCurveFit, PowerLawFit,
    ThreePhaseFit,
};
use crate::loss::{expected_loss, mixture_loss};
use crate::urn::{simulate, Histogram};

/// Aggregates at one checkpoint. MC fields are absent in analytic-only runs,
/// loss fields when the spec has no `[loss]` table or the model is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub d: f64,
    pub k_mc_mean: Option<f64>,
    pub k_mc_std: Option<f64>,
    pub k_analytic: f64,
    pub loss_mc_mean: Option<f64>,
    pub loss_model: Option<f64>,
}

/// Final state of one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub working: usize,
    pub activations: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Fits {
    /// Two-segment fit of `log10 K_analytic` against `log10 D`.
    pub k_breakpoint: Option<BreakpointFit>,
    /// Successive breakpoint fits of the loss against `log10 D`.
    pub loss_three_phase: Option<ThreePhaseFit>,
    /// Scaling-law fit over the checkpoints past the loss midpoint.
    pub loss_curve: Option<LossCurveFit>,
    /// Power-law fit of the pooled final activation counts.
    pub power_law: Option<PowerLawFit>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub spec_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    /// Short digest of `(spec hash, seed)` carried on every CSV row.
    pub fn seed_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(format!("{}:{}", self.spec_hash, self.seed).as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn comment(&self) -> String {
        format!(
            "# urnscale {} spec_sha256={} seed={}",
            self.version, self.spec_hash, self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: ExperimentSpec,
    /// Replicates actually simulated; zero in analytic-only runs.
    pub replicates: usize,
    pub records: Vec<Record>,
    /// Final histograms of all replicates, summed.
    pub pooled_histogram: Histogram,
    pub finals: Vec<ReplicateSummary>,
    pub fits: Fits,
    pub provenance: Provenance,
}

struct ReplicateRun {
    ks: Vec<usize>,
    losses: Option<Vec<f64>>,
    histogram: Histogram,
    summary: ReplicateSummary,
}

fn run_replicate(spec: &ExperimentSpec, model: &ModelParams, schedule: &[u64], id: u64) -> Result<ReplicateRun, HarnessError> {
    let config = spec.urn_config();
    let traj = simulate(&config, *schedule.last().expect("grid is non-empty"), schedule, id)?;
    let losses = match &spec.loss {
        Some(lp) => Some(
            traj.checkpoints
                .iter()
                .map(|cp| mixture_loss(cp.histogram.as_ref().expect("histograms recorded"), cp.d as f64, lp, model))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        None => None,
    };
    let histogram = traj.last().histogram.clone().expect("histograms recorded");
    let activations = histogram.iter().map(|(k, n)| k * n).sum();
    Ok(ReplicateRun {
        ks: traj.checkpoints.iter().map(|cp| cp.k).collect(),
        losses,
        summary: ReplicateSummary {
            working: traj.last().k,
            activations,
        },
        histogram,
    })
}

fn mean_std(xs: impl ExactSizeIterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs the replicates of `spec` on `workers` threads (0 picks the rayon
/// default) and aggregates them in replicate order, so the result depends on
/// the spec and seed only.
pub fn run_sweep(spec: &ExperimentSpec, workers: usize) -> Result<SweepResult, HarnessError> {
    spec.validate()?;
    let model = spec.model;
    let points = spec.d_grid.points();

    let runs: Vec<ReplicateRun> = if spec.analytic_only {
        Vec::new()
    } else {
        let schedule = spec.d_grid.sample_counts();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool construction");
        pool.install(|| {
            (0..spec.replicates as u64)
                .into_par_iter()
                .map(|id| run_replicate(spec, &model, &schedule, id))
                .collect::<Result<Vec<_>, _>>()
        })?
    };

    let mut records = Vec::with_capacity(points.len());
    for (j, &d_real) in points.iter().enumerate() {
        let d = if spec.analytic_only { d_real } else { d_real.round() };
        let (k_mc_mean, k_mc_std) = if runs.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_std(runs.iter().map(|r| r.ks[j] as f64));
            (Some(m), Some(s))
        };
        let loss_mc_mean = runs
            .iter()
            .map(|r| r.losses.as_ref().map(|l| l[j]))
            .collect::<Option<Vec<f64>>>()
            .filter(|v| !v.is_empty())
            .map(|v| mean_std(v.into_iter()).0);
        let loss_model = spec.loss.as_ref().and_then(|lp| expected_loss(lp, &model, d).ok());
        records.push(Record {
            d,
            k_mc_mean,
            k_mc_std,
            k_analytic: k_closed_form(&model, d)?,
            loss_mc_mean,
            loss_model,
        });
    }

    let mut pooled_histogram = Histogram::new();
    for run in &runs {
        for (&k, &n) in &run.histogram {
            *pooled_histogram.entry(k).or_insert(0) += n;
        }
    }
    let fits = fit_all(spec, &records, &pooled_histogram);
    Ok(SweepResult {
        spec: spec.clone(),
        replicates: runs.len(),
        records,
        pooled_histogram,
        finals: runs.iter().map(|r| r.summary).collect(),
        fits,
        provenance: Provenance {
            spec_hash: spec.hash(),
            seed: spec.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

fn fit_all(spec: &ExperimentSpec, records: &[Record], pooled: &Histogram) -> Fits {
    let (xs, ys): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter(|r| r.k_analytic > 0.0)
        .map(|r| (r.d.log10(), r.k_analytic.log10()))
        .unzip();
    let mut fits = Fits {
        k_breakpoint: fit_breakpoint(&xs, &ys).ok(),
        ..Fits::default()
    };

    if let Some(lp) = &spec.loss {
        let losses: Vec<(f64, f64)> = records
            .iter()
            .filter_map(|r| r.loss_mc_mean.or(r.loss_model).map(|l| (r.d, l)))
            .collect();
        let (lx, ly): (Vec<f64>, Vec<f64>) = losses.iter().map(|&(d, l)| (d.log10(), l)).unzip();
        fits.loss_three_phase = fit_three_phase(&lx, &ly).ok();
        let midpoint = lp.l_opt + 0.5 * lp.gap();
        let (tx, ty): (Vec<f64>, Vec<f64>) = losses.iter().filter(|&&(_, l)| l <= midpoint).copied().unzip();
        fits.loss_curve = fit_loss_curve(&tx, &ty).ok();
    }

    if !pooled.is_empty() {
        let samples: Vec<u64> = pooled
            .iter()
            .flat_map(|(&k, &n)| std::iter::repeat_n(k, n as usize))
            .collect();
        fits.power_law = fit_power_law(&samples).ok();
    }
    fits
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::spec::{builtin, DESK_SPEC, LARGE_SPEC};

    fn small() -> ExperimentSpec {
        let mut spec = builtin(DESK_SPEC, "desk.toml");
        spec.replicates = 3;
        spec.d_grid.max = 1e3;
        spec.d_grid.count = 8;
        spec
    }

    #[test]
    fn single_replicate_matches_simulate() {
        let mut spec = small();
        spec.replicates = 1;
        let res = run_sweep(&spec, 1).unwrap();
        let traj = simulate(&spec.urn_config(), 1000, &spec.d_grid.sample_counts(), 0).unwrap();
        for (r, cp) in res.records.iter().zip(&traj.checkpoints) {
            assert_eq!(r.d, cp.d as f64);
            assert_eq!(r.k_mc_mean, Some(cp.k as f64));
            assert_eq!(r.k_mc_std, Some(0.0));
        }
        assert_eq!(res.records.len(), spec.d_grid.count);
    }

    #[test]
    fn worker_count_does_not_matter() {
        let spec = small();
        let one = run_sweep(&spec, 1).unwrap();
        let four = run_sweep(&spec, 4).unwrap();
        assert_eq!(serde_json::to_string(&one).unwrap(), serde_json::to_string(&four).unwrap());
    }

    #[test]
    fn std_is_non_negative_and_losses_bracketed() {
        let res = run_sweep(&small(), 2).unwrap();
        let lp = res.spec.loss.unwrap();
        for r in &res.records {
            assert!(r.k_mc_std.unwrap() >= 0.0);
            let l = r.loss_mc_mean.unwrap();
            assert!(l >= lp.l_opt && l <= lp.l_noise);
        }
        assert_eq!(res.finals.len(), 3);
        assert!(res.finals.iter().all(|f| f.activations == 2 * 1000));
    }

    #[test]
    fn analytic_only_skips_simulation() {
        let res = run_sweep(&builtin(LARGE_SPEC, "large.toml"), 1).unwrap();
        assert_eq!(res.replicates, 0);
        assert!(res.records.iter().all(|r| r.k_mc_mean.is_none()));
        assert!(res.fits.k_breakpoint.is_some());
    }

    #[test]
    fn resource_errors_propagate() {
        let mut spec = small();
        spec.urn.memory_cap_bytes = 16;
        assert!(matches!(run_sweep(&spec, 1), Err(HarnessError::Urn(_))));
    }
}
