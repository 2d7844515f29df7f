use serde::{Deserialize, Serialize};

use super::{FitError, MIN_TAIL};
use crate::loss::Pmf;

/// Discrete power law `P(k) ∝ k^-alpha` on `x_min..=x_max`, fitted by
/// maximum likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub alpha_hat: f64,
    pub x_min: u64,
    pub x_max: u64,
    pub n_tail: usize,
    pub ks_distance: f64,
    pub log_likelihood: f64,
}

const MAX_CANDIDATES: usize = 64;
const ALPHA_LO: f64 = 1e-6;
const ALPHA_HI: f64 = 20.0;

/// Sums `k^-alpha ln^j k` for `j = 0, 1, 2` over the support.
fn moments(ln_k: &[f64], alpha: f64) -> (f64, f64, f64) {
    let (mut z, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for &l in ln_k {
        let w = (-alpha * l).exp();
        z += w;
        s1 += w * l;
        s2 += w * l * l;
    }
    (z, s1, s2)
}

/// Maximum-likelihood exponent with the lower cutoff fixed at `x_min`; the
/// upper end of the support is the largest sample.
pub fn fit_power_law_at(samples: &[u64], x_min: u64) -> Result<PowerLawFit, FitError> {
    let mut tail: Vec<u64> = samples.iter().copied().filter(|&x| x >= x_min).collect();
    tail.sort_unstable();
    fit_sorted_tail(&tail)
}

fn fit_sorted_tail(tail: &[u64]) -> Result<PowerLawFit, FitError> {
    let n = tail.len();
    if n < MIN_TAIL {
        return Err(FitError::TooFewSamples { needed: MIN_TAIL, got: n });
    }
    let (x_min, x_max) = (tail[0], tail[n - 1]);
    if x_min == 0 {
        return Err(FitError::InvalidInput("power-law samples must be positive".into()));
    }
    if x_min == x_max {
        return Err(FitError::Degenerate("all tail samples are identical".into()));
    }
    let ln_k: Vec<f64> = (x_min..=x_max).map(|k| (k as f64).ln()).collect();
    let mean_ln = tail.iter().map(|&x| (x as f64).ln()).sum::<f64>() / n as f64;

    // score(alpha) = E_alpha[ln k] - mean_ln is decreasing in alpha
    let score = |alpha: f64| {
        let (z, s1, s2) = moments(&ln_k, alpha);
        let m = s1 / z;
        (m - mean_ln, s2 / z - m * m)
    };
    let (mut lo, mut hi) = (ALPHA_LO, ALPHA_HI);
    let alpha = if score(lo).0 <= 0.0 {
        lo
    } else if score(hi).0 >= 0.0 {
        hi
    } else {
        let mut a = 0.5;
        for _ in 0..200 {
            let (g, var) = score(a);
            if g > 0.0 {
                lo = a;
            } else {
                hi = a;
            }
            let newton = a + g / var.max(f64::MIN_POSITIVE);
            let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if (next - a).abs() <= 1e-13 * a.max(1.0) || hi - lo <= 1e-14 {
                a = next;
                break;
            }
            a = next;
        }
        a
    };

    let (z, _, _) = moments(&ln_k, alpha);
    let log_likelihood = -alpha * mean_ln * n as f64 - n as f64 * z.ln();

    // KS over every integer of the support
    let mut ks: f64 = 0.0;
    let mut model_cdf = 0.0;
    let mut seen = 0usize;
    for (j, &l) in ln_k.iter().enumerate() {
        let k = x_min + j as u64;
        model_cdf += (-alpha * l).exp() / z;
        while seen < n && tail[seen] <= k {
            seen += 1;
        }
        ks = ks.max((seen as f64 / n as f64 - model_cdf).abs());
    }

    Ok(PowerLawFit {
        alpha_hat: alpha,
        x_min,
        x_max,
        n_tail: n,
        ks_distance: ks.min(1.0),
        log_likelihood,
    })
}

/// Discrete power-law fit with `x_min` chosen by minimizing the KS distance.
///
/// Candidate cutoffs are the distinct sample values that leave at least
/// [`MIN_TAIL`] samples and two distinct values above them; when there are
/// more than 64 of them, 64 log-spaced ones are used.
pub fn fit_power_law(samples: &[u64]) -> Result<PowerLawFit, FitError> {
    if samples.len() < MIN_TAIL {
        return Err(FitError::TooFewSamples {
            needed: MIN_TAIL,
            got: samples.len(),
        });
    }
    if samples.contains(&0) {
        return Err(FitError::InvalidInput("power-law samples must be positive".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let max = sorted[sorted.len() - 1];
    if sorted[0] == max {
        return Err(FitError::Degenerate("all samples are identical".into()));
    }

    let mut candidates: Vec<(u64, usize)> = Vec::new();
    for (pos, &x) in sorted.iter().enumerate() {
        if (pos == 0 || sorted[pos - 1] != x) && sorted.len() - pos >= MIN_TAIL && x < max {
            candidates.push((x, pos));
        }
    }
    if candidates.is_empty() {
        return Err(FitError::Degenerate("no cutoff leaves a non-trivial tail".into()));
    }
    if candidates.len() > MAX_CANDIDATES {
        let (lo, hi) = ((candidates[0].0 as f64).ln(), (candidates[candidates.len() - 1].0 as f64).ln());
        let mut picked: Vec<(u64, usize)> = Vec::with_capacity(MAX_CANDIDATES);
        for j in 0..MAX_CANDIDATES {
            let target = lo + (hi - lo) * j as f64 / (MAX_CANDIDATES - 1) as f64;
            let i = candidates.partition_point(|&(x, _)| (x as f64).ln() < target);
            let c = candidates[i.min(candidates.len() - 1)];
            if picked.last() != Some(&c) {
                picked.push(c);
            }
        }
        candidates = picked;
    }

    let mut best: Option<PowerLawFit> = None;
    for (_, pos) in candidates {
        let fit = match fit_sorted_tail(&sorted[pos..]) {
            Ok(f) => f,
            Err(_) => continue,
        };
        if best.as_ref().is_none_or(|b| fit.ks_distance < b.ks_distance) {
            best = Some(fit);
        }
    }
    best.ok_or_else(|| FitError::Degenerate("no cutoff produced a valid fit".into()))
}

/// Largest absolute difference between the empirical CDF of `samples` and
/// the CDF of `pmf`.
pub fn ks_distance(samples: &[u64], pmf: &Pmf) -> Result<f64, FitError> {
    if samples.is_empty() {
        return Err(FitError::TooFewSamples { needed: 1, got: 0 });
    }
    let d_max = pmf.d_max();
    if let Some(&bad) = samples.iter().find(|&&x| x == 0 || x > d_max) {
        return Err(FitError::SupportMismatch(bad));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let mut ks: f64 = 0.0;
    let mut seen = 0usize;
    for k in 1..=d_max {
        while seen < sorted.len() && sorted[seen] <= k {
            seen += 1;
        }
        ks = ks.max((seen as f64 / n - pmf.cdf(k)).abs());
    }
    Ok(ks.min(1.0))
}
