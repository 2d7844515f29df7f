//! Loss theory built on the activation-count distribution.
//!
//! Every working neuron is the head of a sub-network with a shared
//! configuration `(b', c', N')`. Its own loss follows the phase transition of
//! that sub-network: `L_noise` while `log10 D_i` is below
//! `log10(b'N'/c') - epsilon`, `L_opt` above `+ epsilon`, and a bridge in
//! between. The network loss is a mixture of those per-neuron losses.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{self, ModelParams};
use crate::urn::Histogram;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),
    #[error("histogram holds no working neurons at D = {0}")]
    Degenerate(f64),
    #[error("d_max = {d_max} must exceed the sub-network breakpoint {breakpoint}")]
    BelowBreakpoint { d_max: f64, breakpoint: f64 },
    #[error(transparent)]
    Analytic(#[from] analytic::AnalyticError),
}

/// Shape of the per-neuron loss inside the transition band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionShape {
    /// Linear interpolation in `log10 D_i` across the band.
    #[default]
    LinearInLogD,
    /// `L_noise` below the breakpoint, `L_opt` from it on.
    StepAtBreakpoint,
}

/// Weight given to a working neuron with count `D_i` in the loss mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixtureWeighting {
    /// `D_i / sum_j D_j`, the activation share of the neuron.
    #[default]
    Activation,
    /// `(D_i + b) / sum_j (D_j + b)` over working neurons.
    ActivationSmoothed,
    /// Uniform over working neurons: the count distribution `P(D_i)` itself.
    Neuron,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    pub l_noise: f64,
    pub l_opt: f64,
    pub alpha: f64,
    pub b_sub: f64,
    pub c_sub: f64,
    pub n_sub: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub transition_shape: TransitionShape,
    #[serde(default)]
    pub weighting: MixtureWeighting,
    /// Multiplier on `c D` used as `D_max` in the closed-form loss.
    #[serde(default = "default_scale")]
    pub d_max_scale: f64,
}

fn default_epsilon() -> f64 {
    analytic::DEFAULT_EPSILON
}

fn default_scale() -> f64 {
    1.0
}

impl LossParams {
    pub fn new(l_noise: f64, l_opt: f64, alpha: f64, b_sub: f64, c_sub: f64, n_sub: f64) -> Self {
        Self {
            l_noise,
            l_opt,
            alpha,
            b_sub,
            c_sub,
            n_sub,
            epsilon: default_epsilon(),
            transition_shape: TransitionShape::default(),
            weighting: MixtureWeighting::default(),
            d_max_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let bad = |m: String| Err(LossError::ParameterDomain(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.l_opt < self.l_noise) {
            return bad(format!("L_opt ({}) must be below L_noise ({})", self.l_opt, self.l_noise));
        }
        if !(self.b_sub > 0.0 && self.c_sub > 0.0 && self.n_sub > 0.0) {
            return bad("b', c', N' must be positive".into());
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.d_max_scale > 0.0) {
            return bad(format!("d_max_scale must be positive, got {}", self.d_max_scale));
        }
        Ok(())
    }

    /// `b'N'/c'`, the count at which a sub-network leaves its noise regime.
    pub fn breakpoint_value(&self) -> f64 {
        self.b_sub * self.n_sub / self.c_sub
    }

    pub fn breakpoint_log10(&self) -> f64 {
        self.breakpoint_value().log10()
    }

    pub fn gap(&self) -> f64 {
        self.l_noise - self.l_opt
    }
}

/// Probability mass function on `1..=d_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    probabilities: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Pmf {
    /// Normalizes non-negative weights for `k = 1..=weights.len()`.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self, LossError> {
        if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(LossError::ParameterDomain("PMF weights must be non-negative and non-empty".into()));
        }
        let total = kahan_sum(weights.iter().copied());
        if !(total > 0.0) {
            return Err(LossError::ParameterDomain("PMF weights sum to zero".into()));
        }
        let probabilities: Vec<f64> = weights.into_iter().map(|w| w / total).collect();
        let mut cumulative = Vec::with_capacity(probabilities.len());
        let mut acc = 0.0;
        let mut comp = 0.0;
        for p in &probabilities {
            let y = p - comp;
            let t = acc + y;
            comp = (t - acc) - y;
            acc = t;
            cumulative.push(acc);
        }
        Ok(Self {
            probabilities,
            cumulative,
        })
    }

    pub fn d_max(&self) -> u64 {
        self.probabilities.len() as u64
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// `P(D_i = k)`; zero outside the support.
    pub fn prob(&self, k: u64) -> f64 {
        if k == 0 {
            return 0.0;
        }
        self.probabilities.get(k as usize - 1).copied().unwrap_or(0.0)
    }

    /// `P(D_i <= k)`.
    pub fn cdf(&self, k: u64) -> f64 {
        match k {
            0 => 0.0,
            k if k >= self.d_max() => 1.0,
            k => self.cumulative[k as usize - 1].min(1.0),
        }
    }

    pub fn mean(&self) -> f64 {
        kahan_sum(self.probabilities.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let i = self.cumulative.partition_point(|&c| c <= u);
        (i.min(self.probabilities.len() - 1) + 1) as u64
    }
}

fn kahan_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in xs {
        let y = x - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Solution of `(k + b) P(k) = (k + 1 + b) P(k + 1)`: `P(k) ∝ 1/(k + b)`.
pub fn steady_state_pmf_exact(b: f64, d_max: u64) -> Result<Pmf, LossError> {
    if !(b > 0.0) || d_max == 0 {
        return Err(LossError::ParameterDomain(format!("need b > 0 and d_max >= 1, got b = {b}, d_max = {d_max}")));
    }
    Pmf::from_weights((1..=d_max).map(|k| 1.0 / (k as f64 + b)).collect())
}

/// Count law of a working neuron in an `n`-neuron urn after `activations`
/// single draws: the beta-binomial marginal of the Dirichlet-multinomial,
/// conditioned on `D_i >= 1`. The support is cut where the mass falls below
/// `1e-30` of the mode.
pub fn finite_urn_pmf(b: f64, n: u64, activations: u64) -> Result<Pmf, LossError> {
    if !(b > 0.0) || n == 0 || activations == 0 {
        return Err(LossError::ParameterDomain(format!(
            "need b > 0, N >= 1 and at least one activation, got b = {b}, N = {n}, A = {activations}"
        )));
    }
    let a = activations as f64;
    let rest = (n - 1) as f64 * b;
    let mut logs = vec![0.0f64];
    let mut peak = 0.0f64;
    for k in 1..activations {
        let kf = k as f64;
        let step = ((a - kf) / (kf + 1.0) * (kf + b) / (a - kf - 1.0 + rest)).ln();
        let next = logs[logs.len() - 1] + step;
        peak = peak.max(next);
        if step < 0.0 && next < peak - 69.0 {
            break;
        }
        logs.push(next);
    }
    Pmf::from_weights(logs.into_iter().map(|l| (l - peak).exp()).collect())
}

/// Truncated power law `P(k) ∝ k^-alpha` on `1..=d_max`.
pub fn steady_state_pmf_powerlaw(alpha: f64, d_max: u64) -> Result<Pmf, LossError> {
    if !(alpha > 0.0 && alpha < 1.0) || d_max == 0 {
        return Err(LossError::ParameterDomain(format!(
            "need 0 < alpha < 1 and d_max >= 1, got alpha = {alpha}, d_max = {d_max}"
        )));
    }
    Pmf::from_weights((1..=d_max).map(|k| (-alpha * (k as f64).ln()).exp()).collect())
}

/// Integral approximation `(1 - alpha) / d_max^(1 - alpha)` of the power-law
/// normalizer.
pub fn continuous_normalizer(alpha: f64, d_max: f64) -> f64 {
    (1.0 - alpha) / d_max.powf(1.0 - alpha)
}

/// Integral approximation of the power-law mean,
/// `(1-a)/(2-a) (d_max^(2-a) - 1) / d_max^(1-a)`.
pub fn continuous_mean(alpha: f64, d_max: f64) -> f64 {
    (1.0 - alpha) / (2.0 - alpha) * (d_max.powf(2.0 - alpha) - 1.0) / d_max.powf(1.0 - alpha)
}

/// Loss of a single working neuron that has learnt `d_i` samples.
pub fn per_neuron_loss(d_i: f64, params: &LossParams) -> f64 {
    if d_i <= 0.0 {
        return params.l_noise;
    }
    let x = d_i.log10();
    let bp = params.breakpoint_log10();
    let eps = params.epsilon;
    match params.transition_shape {
        TransitionShape::LinearInLogD => {
            if x <= bp - eps {
                params.l_noise
            } else if x >= bp + eps {
                params.l_opt
            } else {
                let t = (x - (bp - eps)) / (2.0 * eps);
                params.l_noise + (params.l_opt - params.l_noise) * t
            }
        }
        TransitionShape::StepAtBreakpoint => {
            if x < bp {
                params.l_noise
            } else {
                params.l_opt
            }
        }
    }
}

fn mixture_over(
    masses: impl Iterator<Item = (u64, f64)>,
    d: f64,
    params: &LossParams,
    model: &ModelParams,
) -> Result<f64, LossError> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, neurons) in masses.filter(|&(k, m)| k > 0 && m > 0.0) {
        let w = match params.weighting {
            MixtureWeighting::Activation => k as f64 * neurons,
            MixtureWeighting::ActivationSmoothed => (k as f64 + model.b) * neurons,
            MixtureWeighting::Neuron => neurons,
        };
        num += w * per_neuron_loss(k as f64, params);
        den += w;
    }
    if !(den > 0.0) {
        return Err(LossError::Degenerate(d));
    }
    Ok((num / den).clamp(params.l_opt, params.l_noise))
}

/// Network loss as the weighted mixture of per-neuron losses over the working
/// neurons of `histogram`, taken at `d` samples.
pub fn mixture_loss(histogram: &Histogram, d: f64, params: &LossParams, model: &ModelParams) -> Result<f64, LossError> {
    if !(d > 0.0) {
        return Err(LossError::ParameterDomain(format!("D must be positive, got {d}")));
    }
    mixture_over(histogram.iter().map(|(&k, &n)| (k, n as f64)), d, params, model)
}

/// [`mixture_loss`] with neuron masses taken from a PMF instead of a histogram.
pub fn mixture_loss_pmf(pmf: &Pmf, d: f64, params: &LossParams, model: &ModelParams) -> Result<f64, LossError> {
    mixture_over(
        pmf.probabilities().iter().enumerate().map(|(i, &p)| (i as u64 + 1, p)),
        d,
        params,
        model,
    )
}

/// Closed-form mass of the transition band around `b'N'/c'` for the
/// base-10 half-width `params.epsilon`.
pub fn transition_mass(params: &LossParams, d_max: f64) -> Result<f64, LossError> {
    transition_mass_ln(params, params.epsilon * std::f64::consts::LN_10, d_max)
}

/// `(b'N'/c')^(1-a) (e^eps - e^-eps) / d_max^(1-a)` with `eps_ln` the
/// natural-log half-width of the band.
pub fn transition_mass_ln(params: &LossParams, eps_ln: f64, d_max: f64) -> Result<f64, LossError> {
    let t = params.breakpoint_value();
    if !(d_max > t) {
        return Err(LossError::BelowBreakpoint { d_max, breakpoint: t });
    }
    let a = 1.0 - params.alpha;
    Ok((t / d_max).powf(a) * 2.0 * eps_ln.sinh())
}

/// Mass of the same band obtained by integrating the normalized density
/// `(1-a) k^-a / d_max^(1-a)` across it: the `e^{±eps}` terms carry the
/// factor `1 - alpha` in their exponent.
pub fn transition_mass_integrated(params: &LossParams, eps_ln: f64, d_max: f64) -> Result<f64, LossError> {
    let t = params.breakpoint_value();
    if !(d_max > t) {
        return Err(LossError::BelowBreakpoint { d_max, breakpoint: t });
    }
    let a = 1.0 - params.alpha;
    Ok((t / d_max).powf(a) * 2.0 * (a * eps_ln).sinh())
}

/// Closed-form loss for a given largest activation count `d_max`.
pub fn loss_from_dmax(params: &LossParams, d_max: f64) -> Result<f64, LossError> {
    params.validate()?;
    let a = 1.0 - params.alpha;
    let excess = ((params.b_sub * params.n_sub).powf(a) - 1.0) / (params.c_sub * d_max).powf(a);
    Ok((params.l_opt + params.gap() * excess).min(params.l_noise))
}

/// Power-law loss at `d` samples with `D_max = d_max_scale * c * D`.
pub fn expected_loss(params: &LossParams, model: &ModelParams, d: f64) -> Result<f64, LossError> {
    params.validate()?;
    if analytic::d_max_estimate(model, d)? < 1.0 {
        return Err(LossError::ParameterDomain(format!("D = {d} is too small for D_max >= 1")));
    }
    loss_from_dmax(params, params.d_max_scale * model.c * d)
}
