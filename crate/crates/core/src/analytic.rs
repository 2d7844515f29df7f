//! Closed-form theory of working-neuron growth.
//!
//! With `s = (b/c) N`, the expected number of working neurons obeys
//! `dK/dD = (N - K) b / (D + s)`, whose solution from `(D0, K0)` is
//! `K(D) = N + (K0 - N) ((D0 + s) / (D + s))^b`.
//!
//! Logarithms exposed to callers are base 10. Real powers are evaluated as
//! `exp(b ln(.))`, using `ln_1p`/`expm1` so that `1 - (...)^b` keeps full
//! relative precision when `cD << bN`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_EPSILON: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("D = {d} lies outside the domain (D must be at least {min})")]
    Domain { d: f64, min: f64 },
    #[error("{steps} RK4 steps disagree with {} steps by {rel_diff:e} relative", 2 * steps)]
    StepCountTooSmall { steps: usize, rel_diff: f64 },
    #[error("no working neurons at D = {0}; samples per working neuron is undefined")]
    DivisionByZero(f64),
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: f64,
    pub b: f64,
    pub c: f64,
    #[serde(default)]
    pub k0: f64,
    #[serde(default)]
    pub d0: f64,
}

impl ModelParams {
    pub fn new(n: f64, b: f64, c: f64) -> Result<Self, AnalyticError> {
        Self::with_initial(n, b, c, 0.0, 0.0)
    }

    pub fn with_initial(n: f64, b: f64, c: f64, k0: f64, d0: f64) -> Result<Self, AnalyticError> {
        let p = Self { n, b, c, k0, d0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), AnalyticError> {
        let bad = |m: String| Err(AnalyticError::InvalidParams(m));
        if !(self.n >= 1.0 && self.n.is_finite()) {
            return bad(format!("N must be >= 1, got {}", self.n));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return bad(format!("b must be positive, got {}", self.b));
        }
        if !(self.c >= 1.0 && self.c <= self.n) {
            return bad(format!("c must satisfy 1 <= c <= N, got c = {}", self.c));
        }
        if !(self.k0 >= 0.0 && self.k0 <= self.n) {
            return bad(format!("K0 must satisfy 0 <= K0 <= N, got {}", self.k0));
        }
        if !(self.d0 >= 0.0 && self.d0.is_finite()) {
            return bad(format!("D0 must be non-negative, got {}", self.d0));
        }
        Ok(())
    }

    /// `(b/c) N`, the sample count at which `cD = bN`.
    pub fn scale(&self) -> f64 {
        self.b * self.n / self.c
    }

    /// `log10(bN/c)`.
    pub fn breakpoint_log10(&self) -> f64 {
        self.scale().log10()
    }
}

/// Expected working-neuron count from the exact solution of the growth ODE.
pub fn k_closed_form(p: &ModelParams, d: f64) -> Result<f64, AnalyticError> {
    if !(d >= p.d0) {
        return Err(AnalyticError::Domain { d, min: p.d0 });
    }
    let x = -p.b * ((d - p.d0) / (p.d0 + p.scale())).ln_1p();
    Ok(p.k0 + (p.n - p.k0) * -x.exp_m1())
}

/// `N (1 - (bN / (cD + bN))^b)`, the blank-slate (`K0 = D0 = 0`) form.
pub fn k_large_limit(p: &ModelParams, d: f64) -> f64 {
    p.n * -(-p.b * (p.c * d / (p.b * p.n)).ln_1p()).exp_m1()
}

/// Fraction of free neurons `(N - K(D)) / N = ((b/c)N / (D + (b/c)N))^b`.
pub fn compressibility_ratio(p: &ModelParams, d: f64) -> f64 {
    (-p.b * (p.c * d / (p.b * p.n)).ln_1p()).exp()
}

/// Number of RK4 steps that gives `steps_per_decade` steps for every decade
/// of `D + (b/c)N` between `D0` and `d`, or of the free fraction
/// `((D0 + s)/(D + s))^b` when `b > 1`.
/// The count never drops below what keeps `b` times the log step at
/// [`STABLE_LOG_STEP`].
pub fn ode_steps(p: &ModelParams, d: f64, steps_per_decade: usize) -> usize {
    let span = ((d - p.d0) / (p.d0 + p.scale())).ln_1p().max(0.0);
    let by_decade = (span * p.b.max(1.0) / std::f64::consts::LN_10 * steps_per_decade as f64).ceil();
    let by_stability = (p.b * span / STABLE_LOG_STEP).ceil();
    (by_decade.max(by_stability) as usize).max(MIN_STEPS)
}

const MIN_STEPS: usize = 16;

/// Largest `b * ln((x + h + s)/(x + s))` [`ode_steps`] hands out.
pub const STABLE_LOG_STEP: f64 = 0.5;

/// RK4 on the decay `y' = -b y` in `ln(D + s)` is stable up to `b h ≈ 2.78`.
const RK4_STABILITY_LIMIT: f64 = 2.5;

/// Classic RK4 on `dK/dD = (N - K) b / (D + s)`, stepping on a grid that is
/// geometric in `D + s`.
pub fn rk4(p: &ModelParams, d: f64, steps: usize) -> f64 {
    let s = p.scale();
    let rhs = |x: f64, k: f64| (p.n - k) * p.b / (x + s);
    let base = p.d0 + s;
    let log_step = ((d - p.d0) / base).ln_1p() / steps as f64;
    let mut x = p.d0;
    let mut k = p.k0;
    for j in 1..=steps {
        let next = if j == steps { d } else { p.d0 + base * (j as f64 * log_step).exp_m1() };
        let h = next - x;
        let k1 = rhs(x, k);
        let k2 = rhs(x + h / 2.0, k + h * k1 / 2.0);
        let k3 = rhs(x + h / 2.0, k + h * k2 / 2.0);
        let k4 = rhs(x + h, k + h * k3);
        k += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
        x = next;
    }
    k
}

/// Numerical solution of the growth ODE with a step-doubling accuracy check;
/// returns the `2 * step_count` solution.
pub fn k_ode(p: &ModelParams, d: f64, step_count: usize) -> Result<f64, AnalyticError> {
    if !(d >= p.d0) {
        return Err(AnalyticError::Domain { d, min: p.d0 });
    }
    if step_count == 0 {
        return Err(AnalyticError::StepCountTooSmall {
            steps: 0,
            rel_diff: f64::INFINITY,
        });
    }
    if d == p.d0 {
        return Ok(p.k0);
    }
    let log_step = p.b * ((d - p.d0) / (p.d0 + p.scale())).ln_1p() / step_count as f64;
    if log_step > RK4_STABILITY_LIMIT {
        return Err(AnalyticError::StepCountTooSmall {
            steps: step_count,
            rel_diff: f64::INFINITY,
        });
    }
    let coarse = rk4(p, d, step_count);
    let fine = rk4(p, d, 2 * step_count);
    let rel_diff = (coarse - fine).abs() / fine.abs().max(f64::MIN_POSITIVE);
    if rel_diff > 1e-6 {
        return Err(AnalyticError::StepCountTooSmall {
            steps: step_count,
            rel_diff,
        });
    }
    Ok(fine)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Linear,
    Constant,
    Transition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub breakpoint_log10: f64,
    pub epsilon: f64,
    pub regime: Regime,
}

/// Which piece of the log-scale approximation of `K(D)` applies at `log10_d`.
pub fn regime_classify(p: &ModelParams, log10_d: f64, epsilon: f64) -> Result<RegimeReport, AnalyticError> {
    if !(epsilon > 0.0) {
        return Err(AnalyticError::InvalidEpsilon(epsilon));
    }
    let bp = p.breakpoint_log10();
    let regime = if log10_d <= bp - epsilon {
        Regime::Linear
    } else if log10_d >= bp + epsilon {
        Regime::Constant
    } else {
        Regime::Transition
    };
    Ok(RegimeReport {
        breakpoint_log10: bp,
        epsilon,
        regime,
    })
}

/// Central-difference slope of `log10 K` against `log10 D` for the
/// blank-slate curve.
pub fn log_log_slope(p: &ModelParams, log10_d: f64) -> f64 {
    let h = 1e-4;
    let f = |x: f64| k_large_limit(p, 10f64.powf(x)).log10();
    (f(log10_d + h) - f(log10_d - h)) / (2.0 * h)
}

/// Average number of samples learnt by each working neuron, `cD / K(D)`.
pub fn avg_samples_per_working(p: &ModelParams, d: f64) -> Result<f64, AnalyticError> {
    let k = k_closed_form(p, d)?;
    if k <= 0.0 {
        return Err(AnalyticError::DivisionByZero(d));
    }
    Ok(p.c * d / k)
}

/// Order-of-magnitude estimate of the largest activation count, `cD / K(D)`.
pub fn d_max_estimate(p: &ModelParams, d: f64) -> Result<f64, AnalyticError> {
    avg_samples_per_working(p, d)
}
