//! Closeness indices between DC pairs, inferred from a bandwidth matrix.
//!
//! Bandwidth values are bucketed into significance-separated levels; the highest level
//! gets closeness index 1, the lowest gets `L`, the number of retained levels.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{BandwidthMatrix, SquareMatrix};

/// Minimum bandwidth difference (Mbps) for two levels to count as distinct.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignificanceGap(f64);

impl SignificanceGap {
    pub fn new(mbps: f64) -> Result<Self> {
        if !(mbps.is_finite() && mbps > 0.0) {
            return Err(Error::validation(format!("significance gap must be > 0, got {mbps}")));
        }
        Ok(SignificanceGap(mbps))
    }

    pub fn mbps(self) -> f64 {
        self.0
    }
}

impl Default for SignificanceGap {
    fn default() -> Self {
        SignificanceGap(crate::SIGNIFICANT_DELTA_MBPS)
    }
}

/// Closeness index per DC pair, 1 being the closest relationship.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClosenessMatrix(SquareMatrix<u32>);

impl ClosenessMatrix {
    pub fn new(rel: SquareMatrix<u32>) -> Result<Self> {
        if rel.n() == 0 {
            return Err(Error::validation("closeness matrix is empty"));
        }
        if rel.as_slice().iter().any(|&r| r < 1) {
            return Err(Error::validation("closeness indices must be >= 1"));
        }
        Ok(ClosenessMatrix(rel))
    }

    pub fn from_rows(rows: Vec<Vec<u32>>) -> Result<Self> {
        Self::new(SquareMatrix::from_rows(rows)?)
    }

    pub fn n(&self) -> usize {
        self.0.n()
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.0[(i, j)]
    }

    pub fn values(&self) -> &SquareMatrix<u32> {
        &self.0
    }

    pub fn rows(&self) -> Vec<Vec<u32>> {
        self.0.rows()
    }
}

/// Sorted distinct bandwidth values with insignificant steps removed.
///
/// Walks the ascending list from the top down and drops a level whenever it is less than
/// `gap` above its (current) predecessor.
pub fn unique_filtered_levels(bw: &BandwidthMatrix, gap: SignificanceGap) -> Vec<f64> {
    let mut levels: Vec<f64> = bw.values().as_slice().to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let d = gap.mbps();
    for i in (1..levels.len()).rev() {
        // removing index i never shifts i - 1, so the walk stays valid
        if levels[i] - levels[i - 1] < d {
            levels.remove(i);
        }
    }
    levels
}

/// 1-based position of the level a bandwidth value snaps to.
///
/// Exact matches use their own index. Values between two levels snap to the nearer
/// one, preferring the lower level on a tie. Values outside the range clamp to the ends.
fn level_index(levels: &[f64], value: f64) -> usize {
    match levels.binary_search_by(|probe| probe.partial_cmp(&value).unwrap_or(Ordering::Less)) {
        Ok(k) => k + 1,
        Err(0) => 1,
        Err(k) if k == levels.len() => levels.len(),
        Err(k) => {
            let (lo, hi) = (levels[k - 1], levels[k]);
            if value - lo <= hi - value {
                k
            } else {
                k + 1
            }
        }
    }
}

/// Infers the closeness index of every DC pair (diagonal included).
pub fn infer_dc_relations(bw: &BandwidthMatrix, gap: SignificanceGap) -> Result<ClosenessMatrix> {
    if bw.n() == 0 {
        return Err(Error::validation("bandwidth matrix is empty"));
    }
    let levels = unique_filtered_levels(bw, gap);
    let len = levels.len();
    let rel = bw.values().map(|_, _, &v| (len - level_index(&levels, v) + 1) as u32);
    ClosenessMatrix::new(rel)
}
