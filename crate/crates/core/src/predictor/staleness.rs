use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// Sliding window of absolute prediction errors that flags a model for retraining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StalenessTracker {
    pub error_threshold: f64,
    pub capacity: usize,
    window: VecDeque<f64>,
    retrain_flag: bool,
}

impl StalenessTracker {
    pub const DEFAULT_WINDOW: usize = 20;

    pub fn new(error_threshold: f64) -> Self {
        Self::with_window(error_threshold, Self::DEFAULT_WINDOW)
    }

    pub fn with_window(error_threshold: f64, capacity: usize) -> Self {
        StalenessTracker {
            error_threshold,
            capacity: capacity.max(1),
            window: VecDeque::with_capacity(capacity.max(1)),
            retrain_flag: false,
        }
    }

    pub fn record(&mut self, predicted: f64, observed: f64) {
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back((predicted - observed).abs());
        self.retrain_flag = self.mean_error() > self.error_threshold;
    }

    pub fn mean_error(&self) -> f64 {
        if self.window.is_empty() {
            return 0.0;
        }
        self.window.iter().sum::<f64>() / self.window.len() as f64
    }

    pub fn retrain_flag(&self) -> bool {
        self.retrain_flag
    }

    pub fn window(&self) -> impl Iterator<Item = f64> + '_ {
        self.window.iter().copied()
    }
}

impl Default for StalenessTracker {
    fn default() -> Self {
        Self::new(crate::SIGNIFICANT_DELTA_MBPS)
    }
}
