//! Runtime-bandwidth prediction from per-pair features with a random-forest regressor.

mod features;
mod forest;
mod staleness;
mod tree;

pub use features::{read_dataset, write_dataset, DatasetRow, FeatureVector, TrainingSample, N_FEATURES};
pub use forest::{predict_matrix, train, train_with, warm_retrain, ForestConfig, ForestModel};
pub use staleness::StalenessTracker;
pub use tree::{Node, RegressionTree, TreeParams};
