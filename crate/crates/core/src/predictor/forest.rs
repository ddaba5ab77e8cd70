use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, TrainingSample, N_FEATURES};
use super::tree::{RegressionTree, TreeParams};
use crate::error::{Error, Result};
use crate::matrix::{BandwidthMatrix, SquareMatrix};

/// Minimum dataset size accepted by [`train`].
pub const MIN_TRAINING_SAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Split candidates per node; `None` means `ceil(F / 3)`.
    pub max_features: Option<usize>,
    /// Fit each tree on a same-size resample drawn with replacement.
    pub bootstrap: bool,
    pub seed: u64,
}

impl ForestConfig {
    pub fn new(n_trees: usize, seed: u64) -> Self {
        ForestConfig {
            n_trees,
            max_depth: 12,
            min_leaf: 3,
            max_features: None,
            bootstrap: true,
            seed,
        }
    }

    fn tree_params(&self, n_features: usize) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
            max_features: self.max_features.unwrap_or(n_features.div_ceil(3)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_features: usize,
    pub n_trees: usize,
    pub seed: u64,
    /// In-sample mean absolute error of the ensemble (Mbps).
    pub training_mae: f64,
    pub config: ForestConfig,
    /// Number of warm retrains applied; keys the seeds of replacement trees.
    pub generation: u64,
    pub trees: Vec<RegressionTree>,
}

impl ForestModel {
    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: row.len(),
            });
        }
        Ok(self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64)
    }

    pub fn predict(&self, features: &FeatureVector) -> Result<f64> {
        self.predict_row(&features.to_array())
    }

    pub fn to_json_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let model: ForestModel = serde_json::from_reader(f)?;
        if model.trees.is_empty() || model.trees.len() != model.n_trees {
            return Err(Error::validation("model tree count does not match n_trees"));
        }
        Ok(model)
    }
}

fn to_xy(samples: &[TrainingSample]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    for s in samples {
        s.validate()?;
    }
    let x = samples.iter().map(|s| s.features.to_array().to_vec()).collect();
    let y = samples.iter().map(|s| s.target).collect();
    Ok((x, y))
}

/// Fits `count` trees, each with its own seed drawn from a ChaCha stream.
fn fit_trees(x: &[Vec<f64>], y: &[f64], config: &ForestConfig, count: usize, stream: u64) -> Vec<RegressionTree> {
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    master.set_stream(stream);
    let seeds: Vec<u64> = (0..count).map(|_| master.random()).collect();
    let params = config.tree_params(x.first().map_or(0, Vec::len));
    let n = y.len();
    seeds
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sample: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            RegressionTree::fit(x, y, &sample, &params, &mut rng)
        })
        .collect()
}

fn mae(trees: &[RegressionTree], x: &[Vec<f64>], y: &[f64]) -> f64 {
    let total: f64 = x
        .iter()
        .zip(y)
        .map(|(row, &t)| (trees.iter().map(|tr| tr.predict(row)).sum::<f64>() / trees.len() as f64 - t).abs())
        .sum();
    total / y.len() as f64
}

/// Trains a forest with default hyperparameters.
pub fn train(samples: &[TrainingSample], n_trees: usize, seed: u64) -> Result<ForestModel> {
    if samples.len() < MIN_TRAINING_SAMPLES {
        return Err(Error::validation(format!(
            "need at least {MIN_TRAINING_SAMPLES} training samples, got {}",
            samples.len()
        )));
    }
    train_with(samples, &ForestConfig::new(n_trees, seed))
}

/// Trains a forest with explicit hyperparameters. Only requires a nonempty dataset.
pub fn train_with(samples: &[TrainingSample], config: &ForestConfig) -> Result<ForestModel> {
    if samples.is_empty() {
        return Err(Error::validation("training dataset is empty"));
    }
    if config.n_trees < 1 || config.min_leaf < 1 {
        return Err(Error::validation("n_trees and min_leaf must be >= 1"));
    }
    let (x, y) = to_xy(samples)?;
    let trees = fit_trees(&x, &y, config, config.n_trees, 0);
    let training_mae = mae(&trees, &x, &y);
    log::debug!("trained {} trees, training MAE {training_mae:.2}", trees.len());
    Ok(ForestModel {
        n_features: N_FEATURES,
        n_trees: config.n_trees,
        seed: config.seed,
        training_mae,
        config: *config,
        generation: 0,
        trees,
    })
}

/// Refreshes a model with newer samples.
///
/// Fits `ceil(n_trees / 4)` trees on `previous` plus `new_samples` and replaces that many
/// of the oldest trees, so the ensemble size is unchanged. The model does not retain its
/// training data, so the caller passes the earlier dataset as `previous`.
pub fn warm_retrain(
    model: &ForestModel,
    previous: &[TrainingSample],
    new_samples: &[TrainingSample],
) -> Result<ForestModel> {
    if new_samples.is_empty() {
        return Err(Error::validation("warm retrain needs at least one new sample"));
    }
    let all: Vec<TrainingSample> = previous.iter().chain(new_samples).copied().collect();
    let (x, y) = to_xy(&all)?;
    let k = model.n_trees.div_ceil(4);
    let generation = model.generation + 1;
    let fresh = fit_trees(&x, &y, &model.config, k, generation);
    let mut trees: Vec<RegressionTree> = model.trees[k.min(model.trees.len())..].to_vec();
    trees.extend(fresh);
    let training_mae = mae(&trees, &x, &y);
    Ok(ForestModel {
        trees,
        training_mae,
        generation,
        ..model.clone()
    })
}

/// Predicts a bandwidth matrix from a per-pair feature grid.
///
/// Off-diagonal entries are forest predictions; the diagonal keeps the snapshot value.
pub fn predict_matrix(model: &ForestModel, grid: &SquareMatrix<FeatureVector>) -> Result<BandwidthMatrix> {
    if model.n_features != N_FEATURES {
        return Err(Error::DimensionMismatch {
            expected: N_FEATURES,
            actual: model.n_features,
        });
    }
    let mut out = SquareMatrix::filled(grid.n(), 0.0);
    for (i, j, f) in grid.iter_indexed() {
        f.validate()?;
        out[(i, j)] = if i == j { f.snapshot_bw } else { model.predict(f)? };
    }
    BandwidthMatrix::new(out)
}
