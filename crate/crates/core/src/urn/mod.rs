//! The preferential activation process.
//!
//! Every neuron `i` carries an activation count `D_i`. A new sample activates
//! neuron `i` with probability proportional to `D_i + b`, so free neurons keep
//! a small chance of being recruited while working neurons attract more and
//! more of the traffic.

mod index;
mod sim;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use index::{weight_of, WeightIndex};
pub use sim::{replicate_rng, simulate, Checkpoint, Trajectory};

/// Sparse activation histogram: `k -> number of neurons with D_i = k`, `k > 0`.
pub type Histogram = BTreeMap<u64, u64>;

pub const DEFAULT_REBUILD_INTERVAL: u64 = 1 << 20;
pub const DEFAULT_MEMORY_CAP_BYTES: u64 = 1 << 31;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UrnError {
    #[error("invalid urn config: {0}")]
    InvalidConfig(String),
    #[error("neuron index {index} out of range for {n} neurons")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("neuron {0} activated more than once in one sample")]
    DuplicateIndex(usize),
    #[error("checkpoint schedule must be strictly increasing and end at or before {d_target}")]
    InvalidSchedule { d_target: u64 },
    #[error("state for {n} neurons needs {needed} bytes, above the cap of {cap} bytes")]
    ResourceLimit { n: usize, needed: u64, cap: u64 },
}

/// How a single sample recruits neurons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationMode {
    /// Exactly `c` distinct neurons, drawn sequentially without replacement.
    #[default]
    FixedC,
    /// Each neuron independently, with its marginal activation probability.
    Bernoulli,
    /// One weighted draw per sample.
    SingleDraw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UrnConfig {
    pub n: usize,
    pub b: f64,
    pub c: usize,
    #[serde(default)]
    pub mode: ActivationMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_rebuild_interval")]
    pub rebuild_interval: u64,
    #[serde(default = "default_true")]
    pub record_histograms: bool,
    #[serde(default = "default_memory_cap")]
    pub memory_cap_bytes: u64,
}

fn default_rebuild_interval() -> u64 {
    DEFAULT_REBUILD_INTERVAL
}

fn default_true() -> bool {
    true
}

fn default_memory_cap() -> u64 {
    DEFAULT_MEMORY_CAP_BYTES
}

impl UrnConfig {
    pub fn new(n: usize, b: f64, c: usize) -> Self {
        Self {
            n,
            b,
            c,
            mode: ActivationMode::FixedC,
            seed: 0,
            rebuild_interval: DEFAULT_REBUILD_INTERVAL,
            record_histograms: true,
            memory_cap_bytes: DEFAULT_MEMORY_CAP_BYTES,
        }
    }

    pub fn with_mode(mut self, mode: ActivationMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), UrnError> {
        if self.n == 0 {
            return Err(UrnError::InvalidConfig("N must be at least 1".into()));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(UrnError::InvalidConfig(format!("b must be a positive finite real, got {}", self.b)));
        }
        if self.c == 0 || self.c > self.n {
            return Err(UrnError::InvalidConfig(format!(
                "c must satisfy 1 <= c <= N, got c = {} with N = {}",
                self.c, self.n
            )));
        }
        if self.rebuild_interval == 0 {
            return Err(UrnError::InvalidConfig("rebuild_interval must be positive".into()));
        }
        Ok(())
    }
}

/// Live state of one urn.
#[derive(Debug, Clone, PartialEq)]
pub struct UrnState {
    config: UrnConfig,
    counts: Vec<u64>,
    samples: u64,
    working: usize,
    suspended: Vec<bool>,
    index: WeightIndex,
    updates_since_rebuild: u64,
}

impl UrnState {
    pub fn new(config: UrnConfig) -> Result<Self, UrnError> {
        config.validate()?;
        let counts = vec![0; config.n];
        let suspended = vec![false; config.n];
        let index = WeightIndex::build(config.b, &counts, &suspended);
        Ok(Self {
            config,
            counts,
            samples: 0,
            working: 0,
            suspended,
            index,
            updates_since_rebuild: 0,
        })
    }

    /// State with arbitrary counts; `samples` is the number of samples `D`
    /// the counts are attributed to.
    pub fn from_counts(config: UrnConfig, counts: Vec<u64>, samples: u64) -> Result<Self, UrnError> {
        config.validate()?;
        if counts.len() != config.n {
            return Err(UrnError::InvalidConfig(format!(
                "expected {} counts, got {}",
                config.n,
                counts.len()
            )));
        }
        let suspended = vec![false; config.n];
        let index = WeightIndex::build(config.b, &counts, &suspended);
        let working = counts.iter().filter(|&&k| k > 0).count();
        Ok(Self {
            config,
            counts,
            samples,
            working,
            suspended,
            index,
            updates_since_rebuild: 0,
        })
    }

    pub fn config(&self) -> &UrnConfig {
        &self.config
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Samples processed, `D`.
    pub fn samples(&self) -> u64 {
        self.samples
    }

    /// Working neurons, `K`.
    pub fn working(&self) -> usize {
        self.working
    }

    /// Total activations recorded, `sum(D_i)`.
    pub fn activations(&self) -> u64 {
        self.index.total_count() + self.suspended_count_mass()
    }

    fn suspended_count_mass(&self) -> u64 {
        self.suspended
            .iter()
            .zip(&self.counts)
            .filter(|(s, _)| **s)
            .map(|(_, k)| *k)
            .sum()
    }

    pub fn index(&self) -> &WeightIndex {
        &self.index
    }

    /// Total weight held by the index (suspended neurons contribute nothing).
    pub fn total_weight(&self) -> f64 {
        self.index.total_weight()
    }

    /// Total weight recomputed from the counts by a full scan.
    pub fn scanned_weight(&self) -> f64 {
        let (mut c, mut a) = (0u64, 0u64);
        for (k, s) in self.counts.iter().zip(&self.suspended) {
            if !s {
                c += k;
                a += 1;
            }
        }
        weight_of(c, a, self.config.b)
    }

    /// Marginal probability that the next sample activates neuron `i`:
    /// `c (D_i + b) / (sum_j D_j + b N)`, which is `(D_i + b) / (D + (b/c) N)`
    /// whenever `sum_j D_j = c D`.
    pub fn activation_probability(&self, i: usize) -> Result<f64, UrnError> {
        let n = self.config.n;
        let k = *self.counts.get(i).ok_or(UrnError::IndexOutOfRange { index: i, n })?;
        Ok(self.probability_of(k))
    }

    fn probability_of(&self, k: u64) -> f64 {
        let b = self.config.b;
        let total = weight_of(self.index.total_count(), self.config.n as u64, b);
        self.config.c as f64 * (k as f64 + b) / total
    }

    /// Linear-scan CDF inversion. Test oracle for [`UrnState::indexed_draw`].
    pub fn reference_draw(&self, u: f64) -> usize {
        let b = self.config.b;
        let (mut total_c, mut total_a) = (0u64, 0u64);
        for (k, s) in self.counts.iter().zip(&self.suspended) {
            if !s {
                total_c += k;
                total_a += 1;
            }
        }
        let target = u * weight_of(total_c, total_a, b);
        let (mut c, mut a) = (0u64, 0u64);
        let mut last = 0;
        for (i, (k, s)) in self.counts.iter().zip(&self.suspended).enumerate() {
            if *s {
                continue;
            }
            c += k;
            a += 1;
            last = i;
            if weight_of(c, a, b) > target {
                return i;
            }
        }
        last
    }

    /// Logarithmic-time draw through the weight index.
    pub fn indexed_draw(&self, u: f64) -> usize {
        self.index.draw(u)
    }

    /// Removes neuron `i` from the index until [`UrnState::resume_all`].
    pub fn suspend(&mut self, i: usize) -> Result<(), UrnError> {
        let n = self.config.n;
        if i >= n {
            return Err(UrnError::IndexOutOfRange { index: i, n });
        }
        if !self.suspended[i] {
            self.suspended[i] = true;
            self.index.update(i, -(self.counts[i] as i64), -1);
            self.bump_updates(1);
        }
        Ok(())
    }

    pub fn resume_all(&mut self) {
        for i in 0..self.config.n {
            if self.suspended[i] {
                self.suspended[i] = false;
                self.index.update(i, self.counts[i] as i64, 1);
                self.bump_updates(1);
            }
        }
    }

    /// Draws the set of neurons activated by one new sample.
    pub fn draw_sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<usize> {
        match self.config.mode {
            ActivationMode::FixedC => {
                let mut drawn = Vec::with_capacity(self.config.c);
                for _ in 0..self.config.c {
                    let i = self.index.draw(rng.random::<f64>());
                    drawn.push(i);
                    self.suspended[i] = true;
                    self.index.update(i, -(self.counts[i] as i64), -1);
                }
                for &i in &drawn {
                    self.suspended[i] = false;
                    self.index.update(i, self.counts[i] as i64, 1);
                }
                self.bump_updates(2 * drawn.len() as u64);
                drawn
            }
            ActivationMode::Bernoulli => {
                let mut drawn = Vec::new();
                for i in 0..self.config.n {
                    let p = self.probability_of(self.counts[i]).min(1.0);
                    if rng.random::<f64>() < p {
                        drawn.push(i);
                    }
                }
                drawn
            }
            ActivationMode::SingleDraw => vec![self.index.draw(rng.random::<f64>())],
        }
    }

    /// Records one sample that activated `activated`.
    pub fn apply_sample(&mut self, activated: &[usize]) -> Result<(), UrnError> {
        let n = self.config.n;
        if let Some(&index) = activated.iter().find(|&&i| i >= n) {
            return Err(UrnError::IndexOutOfRange { index, n });
        }
        let mut sorted = activated.to_vec();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(UrnError::DuplicateIndex(w[0]));
        }
        for &i in activated {
            if self.counts[i] == 0 {
                self.working += 1;
            }
            self.counts[i] += 1;
            if !self.suspended[i] {
                self.index.update(i, 1, 0);
            }
        }
        self.samples += 1;
        self.bump_updates(activated.len() as u64);
        Ok(())
    }

    /// One full step of the process: draw and apply.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let activated = self.draw_sample(rng);
        self.apply_sample(&activated)
            .expect("sampler produced an invalid activation set");
    }

    pub fn histogram(&self) -> Histogram {
        let mut h = Histogram::new();
        for &k in self.counts.iter().filter(|&&k| k > 0) {
            *h.entry(k).or_insert(0) += 1;
        }
        h
    }

    /// Rebuilds the index from the counts.
    pub fn rebuild(&mut self) {
        self.index = WeightIndex::build(self.config.b, &self.counts, &self.suspended);
        self.updates_since_rebuild = 0;
    }

    fn bump_updates(&mut self, n: u64) {
        self.updates_since_rebuild += n;
        if self.updates_since_rebuild >= self.config.rebuild_interval && !self.suspended.iter().any(|&s| s) {
            self.rebuild();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(n: usize, b: f64, c: usize) -> UrnConfig {
        UrnConfig::new(n, b, c)
    }

    #[test]
    fn init_weights() {
        let s = UrnState::new(cfg(100, 1.0, 10)).unwrap();
        assert_eq!(s.total_weight(), 100.0);
        assert_eq!((s.samples(), s.working()), (0, 0));
        let s = UrnState::new(cfg(1, 0.5, 1)).unwrap();
        assert_eq!(s.total_weight(), 0.5);
    }

    #[test]
    fn init_rejects_bad_bounds() {
        let err = UrnState::new(cfg(10, 1.0, 11)).unwrap_err();
        assert!(matches!(err, UrnError::InvalidConfig(ref m) if m.contains("c must satisfy")));
        assert!(UrnState::new(cfg(0, 1.0, 1)).is_err());
        assert!(UrnState::new(cfg(5, 0.0, 1)).is_err());
        assert!(UrnState::new(cfg(5, f64::NAN, 1)).is_err());
        assert!(UrnState::new(cfg(5, 1.0, 0)).is_err());
    }

    #[test]
    fn activation_probability_examples() {
        let s = UrnState::new(cfg(100, 1.0, 10)).unwrap();
        for i in 0..100 {
            assert!((s.activation_probability(i).unwrap() - 0.1).abs() < 1e-15);
        }
        // D_i = 3, b = 1, D = 10, N = 20, c = 2: sum of counts is c D = 20
        let mut counts = vec![1u64; 20];
        counts[0] = 3;
        counts[1] = 0;
        counts[2] = 0;
        assert_eq!(counts.iter().sum::<u64>(), 20);
        let s = UrnState::from_counts(cfg(20, 1.0, 2), counts, 10).unwrap();
        assert!((s.activation_probability(0).unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(
            s.activation_probability(20),
            Err(UrnError::IndexOutOfRange { index: 20, n: 20 })
        ));
    }

    #[test]
    fn reference_draw_examples() {
        let s = UrnState::new(cfg(4, 1.0, 1)).unwrap();
        assert_eq!(s.reference_draw(0.0), 0);
        assert_eq!(s.reference_draw(0.74), 2);
        assert_eq!(s.indexed_draw(0.0), 0);
        assert_eq!(s.indexed_draw(0.74), 2);
    }

    #[test]
    fn apply_sample_tracks_working() {
        let mut s = UrnState::new(cfg(10, 1.0, 2)).unwrap();
        s.apply_sample(&[0, 1]).unwrap();
        assert_eq!((s.working(), s.samples()), (2, 1));
        s.apply_sample(&[1, 0]).unwrap();
        assert_eq!(s.working(), 2);
        assert_eq!(s.apply_sample(&[3, 3]), Err(UrnError::DuplicateIndex(3)));
        assert!(matches!(s.apply_sample(&[10]), Err(UrnError::IndexOutOfRange { .. })));
        assert_eq!(s.histogram(), Histogram::from([(2, 2)]));
    }

    #[test]
    fn histogram_examples() {
        let mut s = UrnState::new(cfg(5, 1.0, 1)).unwrap();
        assert!(s.histogram().is_empty());
        s.apply_sample(&[0]).unwrap();
        assert_eq!(s.histogram(), Histogram::from([(1, 1)]));
    }

    #[test]
    fn single_draw_one_neuron() {
        let mut s = UrnState::new(cfg(1, 0.3, 1).with_mode(ActivationMode::SingleDraw)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            assert_eq!(s.draw_sample(&mut rng), vec![0]);
            s.step(&mut rng);
        }
        assert_eq!(s.counts(), &[100]);
    }

    #[test]
    fn fixed_c_draws_are_distinct_and_restore_weights() {
        let mut s = UrnState::new(cfg(50, 0.7, 50)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let mut drawn = s.draw_sample(&mut rng);
            drawn.sort_unstable();
            assert_eq!(drawn, (0..50).collect::<Vec<_>>());
            s.apply_sample(&drawn).unwrap();
            assert_eq!(s.total_weight(), s.scanned_weight());
        }
        assert_eq!(s.activations(), 50 * 20);
    }

    #[test]
    fn fixed_c_fresh_state_is_uniform() {
        // chi-square over 100 cells with 99 degrees of freedom; the 0.99
        // quantile is 134.6
        let s0 = UrnState::new(cfg(100, 1.0, 10)).unwrap();
        let mut s = s0.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut freq = vec![0u64; 100];
        let samples = 100_000;
        for _ in 0..samples {
            for i in s.draw_sample(&mut rng) {
                freq[i] += 1;
            }
            assert_eq!((s.index(), s.counts()), (s0.index(), s0.counts()));
        }
        let expected = samples as f64 * 10.0 / 100.0;
        let chi2: f64 = freq.iter().map(|&f| (f as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 134.6, "chi2 = {chi2}");
    }

    #[test]
    fn bernoulli_fresh_state_mean_size() {
        let mut s = UrnState::new(cfg(100, 1.0, 10).with_mode(ActivationMode::Bernoulli)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let trials = 100_000;
        let sizes: Vec<f64> = (0..trials).map(|_| s.draw_sample(&mut rng).len() as f64).collect();
        let mean = sizes.iter().sum::<f64>() / trials as f64;
        let var = sizes.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        assert!((mean - 10.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn conservation_by_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut fixed = UrnState::new(cfg(30, 1.5, 4)).unwrap();
        let mut single = UrnState::new(cfg(30, 1.5, 4).with_mode(ActivationMode::SingleDraw)).unwrap();
        for d in 1..=500u64 {
            fixed.step(&mut rng);
            single.step(&mut rng);
            assert_eq!(fixed.counts().iter().sum::<u64>(), 4 * d);
            assert_eq!(single.counts().iter().sum::<u64>(), d);
            let k = fixed.counts().iter().filter(|&&x| x > 0).count();
            assert_eq!(k, fixed.working());
            assert!(fixed.working() as u64 <= (4 * d).min(30));
        }
    }

    #[test]
    fn rebuild_interval_keeps_index_consistent() {
        let mut c = cfg(64, 0.25, 3);
        c.rebuild_interval = 7;
        let mut s = UrnState::new(c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            s.step(&mut rng);
        }
        let (count, active) = s.index().prefix(64);
        assert_eq!(count, 3000);
        assert_eq!(active, 64);
        assert_eq!(s.total_weight(), s.scanned_weight());
    }
}
