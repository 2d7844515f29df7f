use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Histogram, UrnConfig, UrnError, UrnState};

/// One recorded point of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub d: u64,
    pub k: usize,
    pub histogram: Option<Histogram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub config: UrnConfig,
    pub replicate_id: u64,
    pub checkpoints: Vec<Checkpoint>,
}

impl Trajectory {
    pub fn last(&self) -> &Checkpoint {
        self.checkpoints.last().expect("trajectory always holds the final checkpoint")
    }
}

/// RNG stream for one replicate: the ChaCha key comes from `seed`, the stream
/// id from `replicate_id`, so adding replicates never perturbs existing ones.
pub fn replicate_rng(seed: u64, replicate_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate_id);
    rng
}

/// Runs the process to `d_target` samples, recording every scheduled `D` and
/// always the final state.
pub fn simulate(
    config: &UrnConfig,
    d_target: u64,
    schedule: &[u64],
    replicate_id: u64,
) -> Result<Trajectory, UrnError> {
    config.validate()?;
    let needed = (config.n as u64).saturating_mul(8);
    if needed > config.memory_cap_bytes {
        return Err(UrnError::ResourceLimit {
            n: config.n,
            needed,
            cap: config.memory_cap_bytes,
        });
    }
    let increasing = schedule.windows(2).all(|w| w[0] < w[1]);
    if !increasing || schedule.last().is_some_and(|&d| d > d_target) {
        return Err(UrnError::InvalidSchedule { d_target });
    }

    let mut points: Vec<u64> = schedule.to_vec();
    if points.last() != Some(&d_target) {
        points.push(d_target);
    }

    let mut rng = replicate_rng(config.seed, replicate_id);
    let mut state = UrnState::new(*config)?;
    let mut checkpoints = Vec::with_capacity(points.len());
    for d in points {
        while state.samples() < d {
            state.step(&mut rng);
        }
        checkpoints.push(Checkpoint {
            d,
            k: state.working(),
            histogram: config.record_histograms.then(|| state.histogram()),
        });
    }
    Ok(Trajectory {
        config: *config,
        replicate_id,
        checkpoints,
    })
}
