use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{SimConfig, SimWorld};
use crate::error::{Error, Result};
use crate::predictor::{DatasetRow, TrainingSample};
use crate::topology::DcId;

/// A dataset row plus the static-independent measurement of the same pair, the baseline
/// that existing schedulers would use as their bandwidth estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetRecord {
    pub row: DatasetRow,
    pub independent_bw: f64,
}

/// Simulated measurement campaign.
///
/// Each sample draws a cluster size from `cluster_sizes` and that many DCs from the
/// configured topology, perturbs host load, then records for every ordered pair the
/// snapshot features and the stable runtime bandwidth as target.
pub fn generate_dataset(
    config: &SimConfig,
    n_samples: usize,
    cluster_sizes: &[usize],
    seed: u64,
) -> Result<Vec<DatasetRecord>> {
    config.validate()?;
    let pool = config.topology.n();
    if cluster_sizes.is_empty() && n_samples > 0 {
        return Err(Error::validation("no cluster sizes given"));
    }
    if let Some(&s) = cluster_sizes.iter().find(|&&s| s < 2 || s > pool) {
        return Err(Error::validation(format!(
            "cluster size {s} outside [2, {pool}] for this topology"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plans: Vec<(Vec<DcId>, u64)> = (0..n_samples)
        .map(|_| {
            let size = cluster_sizes[rng.random_range(0..cluster_sizes.len())];
            let mut ids = index::sample(&mut rng, pool, size).into_vec();
            ids.sort_unstable();
            (ids.into_iter().map(DcId).collect(), rng.random())
        })
        .collect();

    let per_sample: Vec<Vec<DatasetRecord>> = plans
        .into_par_iter()
        .enumerate()
        .map(|(sample_id, (ids, world_seed))| {
            let mut sub = config.subset(&ids)?;
            sub.seed = world_seed;
            measure_round(sub, sample_id)
        })
        .collect::<Result<_>>()?;
    Ok(per_sample.into_iter().flatten().collect())
}

fn measure_round(config: SimConfig, sample_id: usize) -> Result<Vec<DatasetRecord>> {
    let mut world = SimWorld::new(config)?;
    world.perturb_hosts();
    let stable = world.measure_stable();
    let n = world.n();
    let mut out = Vec::with_capacity(n * (n - 1));
    for src in 0..n {
        for dst in (0..n).filter(|&d| d != src) {
            let features = world.measure_snapshot(src, dst)?;
            let independent_bw = world.measure_independent(src, dst)?;
            out.push(DatasetRecord {
                row: DatasetRow {
                    sample_id,
                    src,
                    dst,
                    sample: TrainingSample {
                        features,
                        target: stable.get(src, dst),
                    },
                },
                independent_bw,
            });
        }
    }
    Ok(out)
}
