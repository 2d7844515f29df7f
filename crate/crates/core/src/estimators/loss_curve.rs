use serde::{Deserialize, Serialize};

use super::FitError;

/// `L(D) = l_opt + amplitude * D^-exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossCurveFit {
    pub l_opt_hat: f64,
    pub amplitude_hat: f64,
    pub exponent_hat: f64,
    pub rmse: f64,
}

impl LossCurveFit {
    pub fn predict(&self, d: f64) -> f64 {
        self.l_opt_hat + self.amplitude_hat * d.powf(-self.exponent_hat)
    }
}

const GRID: usize = 241;
// offsets below min(L), in units of the observed range
const OFFSET_LO: f64 = -12.0;
const OFFSET_HI: f64 = 3.0;

/// For a fixed floor, regresses `ln(L - floor)` on `ln D`; returns
/// `(amplitude, exponent, sse)` with the sse measured on `L` itself.
fn profile(ln_d: &[f64], ls: &[f64], floor: f64) -> (f64, f64, f64) {
    let n = ln_d.len() as f64;
    let ln_y: Vec<f64> = ls.iter().map(|l| (l - floor).ln()).collect();
    let mx = ln_d.iter().sum::<f64>() / n;
    let my = ln_y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in ln_d.iter().zip(&ln_y) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let amplitude = (my - slope * mx).exp();
    let sse = ln_d
        .iter()
        .zip(ls)
        .map(|(x, l)| (l - floor - amplitude * (slope * x).exp()).powi(2))
        .sum();
    (amplitude, -slope, sse)
}

/// Scaling-law fit by profile least squares: the floor `l_opt` is searched
/// in one dimension (log-spaced grid below `min(L)`, then golden section),
/// and `(amplitude, exponent)` come from a log-space regression at each floor.
pub fn fit_loss_curve(ds: &[f64], ls: &[f64]) -> Result<LossCurveFit, FitError> {
    if ds.len() != ls.len() {
        return Err(FitError::InvalidInput(format!("{} Ds but {} losses", ds.len(), ls.len())));
    }
    if ds.len() < 6 {
        return Err(FitError::TooFewSamples { needed: 6, got: ds.len() });
    }
    if ds.iter().any(|&d| !(d > 0.0)) {
        return Err(FitError::InvalidInput("D must be positive".into()));
    }
    if !ds.windows(2).all(|w| w[0] < w[1]) {
        return Err(FitError::InvalidInput("Ds must be strictly increasing".into()));
    }
    if ls.iter().any(|l| !l.is_finite()) {
        return Err(FitError::InvalidInput("non-finite loss".into()));
    }
    let l_min = ls.iter().copied().fold(f64::INFINITY, f64::min);
    let l_max = ls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = l_max - l_min;
    if !(range > 1e-12 * l_max.abs().max(1.0)) {
        return Err(FitError::FitFailed("loss is constant; no decay to fit".into()));
    }
    let ln_d: Vec<f64> = ds.iter().map(|d| d.ln()).collect();
    // floor = l_min - range * 10^t
    let floor_at = |t: f64| l_min - range * 10f64.powf(t);
    let objective = |t: f64| profile(&ln_d, ls, floor_at(t)).2;

    let ts: Vec<f64> = (0..GRID)
        .map(|i| OFFSET_LO + (OFFSET_HI - OFFSET_LO) * i as f64 / (GRID - 1) as f64)
        .collect();
    let values: Vec<f64> = ts.iter().map(|&t| objective(t)).collect();
    let best = (0..GRID).min_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap();
    if best == GRID - 1 {
        return Err(FitError::FitFailed("floor search does not bracket a minimum".into()));
    }
    let t = if best == 0 {
        // residual still falling as the floor reaches min(L): noiseless data
        // whose floor lies below the grid resolution
        ts[0]
    } else {
        golden_section(&objective, ts[best - 1], ts[best + 1])
    };
    let floor = floor_at(t);
    let (amplitude, exponent, sse) = profile(&ln_d, ls, floor);
    if !(exponent > 0.0) {
        return Err(FitError::FitFailed(format!("non-positive exponent {exponent}")));
    }
    Ok(LossCurveFit {
        l_opt_hat: floor,
        amplitude_hat: amplitude,
        exponent_hat: exponent,
        rmse: (sse / ds.len() as f64).sqrt(),
    })
}

fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (b - a).abs() < 1e-12 {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}
