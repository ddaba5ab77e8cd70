//! Global connection planning.
//!
//! Distant pairs (large closeness index) receive more parallel connections out of the
//! per-DC budget `M`. The result is a `[minCons, maxCons]` envelope per DC pair plus the
//! matching achievable bandwidth envelope, assuming bandwidth grows linearly with the
//! number of connections.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{BandwidthMatrix, SquareMatrix};
use crate::relations::ClosenessMatrix;

/// Per-pair multiplicative weights derived from input-data skew.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SkewWeights(SquareMatrix<f64>);

impl SkewWeights {
    pub fn new(w: SquareMatrix<f64>) -> Result<Self> {
        check_positive(&w, "skew weight")?;
        Ok(SkewWeights(w))
    }

    pub fn uniform(n: usize) -> Self {
        SkewWeights(SquareMatrix::filled(n, 1.0))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn values(&self) -> &SquareMatrix<f64> {
        &self.0
    }
}

/// Per-pair bandwidth correction for heterogeneous providers or VM types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RefactorVector(SquareMatrix<f64>);

impl RefactorVector {
    pub fn new(r: SquareMatrix<f64>) -> Result<Self> {
        check_positive(&r, "refactoring factor")?;
        Ok(RefactorVector(r))
    }

    pub fn uniform(n: usize) -> Self {
        RefactorVector(SquareMatrix::filled(n, 1.0))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }
}

fn check_positive(m: &SquareMatrix<f64>, what: &str) -> Result<()> {
    match m.iter_indexed().find(|(_, _, v)| !(v.is_finite() && **v > 0.0)) {
        Some((i, j, v)) => Err(Error::validation(format!("{what} ({i}, {j}) = {v} must be > 0"))),
        None => Ok(()),
    }
}

/// Expands per-DC weights into a pair matrix.
///
/// Pair weight is the mean of its endpoints' weights, rescaled so that the off-diagonal
/// mean is exactly 1. The diagonal is 1.
pub fn expand_skew(per_dc: &[f64]) -> Result<SkewWeights> {
    if per_dc.len() < 2 {
        return Err(Error::validation("skew weights need at least 2 DCs"));
    }
    if let Some(w) = per_dc.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::validation(format!("per-DC skew weight {w} must be > 0")));
    }
    let n = per_dc.len();
    let raw = |i: usize, j: usize| (per_dc[i] + per_dc[j]) / 2.0;
    let off_sum: f64 = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| raw(i, j))
        .sum();
    let mean = off_sum / (n * (n - 1)) as f64;
    SkewWeights::new(SquareMatrix::from_fn(n, |i, j| if i == j { 1.0 } else { raw(i, j) / mean }))
}

/// Per-DC weights proportional to how many input blocks each DC stores.
///
/// Add-one smoothing keeps DCs without blocks at a small positive weight.
pub fn weights_from_block_counts(blocks: &[u64]) -> Vec<f64> {
    let smoothed: Vec<f64> = blocks.iter().map(|&b| b as f64 + 1.0).collect();
    let mean = smoothed.iter().sum::<f64>() / smoothed.len().max(1) as f64;
    smoothed.iter().map(|b| b / mean).collect()
}

/// `sum_all` (closeness sum with the diagonal's N ones removed) and per-row maxima.
pub fn plan_sums(rel: &ClosenessMatrix) -> Result<(u64, Vec<u32>)> {
    let n = rel.n();
    let total: u64 = rel.values().as_slice().iter().map(|&r| u64::from(r)).sum();
    let sum_all = total - n as u64;
    if sum_all == 0 {
        return Err(Error::validation("closeness sum is zero; need at least 2 DCs"));
    }
    let max_r = (0..n)
        .map(|i| rel.values().row(i).iter().copied().max().unwrap_or(1))
        .collect();
    Ok((sum_all, max_r))
}

/// Connection and achievable-bandwidth envelope for every DC pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConnectionPlan {
    pub min_cons: SquareMatrix<u32>,
    pub max_cons: SquareMatrix<u32>,
    #[serde(rename = "minBW")]
    pub min_bw: SquareMatrix<f64>,
    #[serde(rename = "maxBW")]
    pub max_bw: SquareMatrix<f64>,
}

impl ConnectionPlan {
    pub fn n(&self) -> usize {
        self.min_cons.n()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        for m in [self.max_cons.n(), self.min_bw.n(), self.max_bw.n()] {
            if m != n {
                return Err(Error::DimensionMismatch { expected: n, actual: m });
            }
        }
        for (i, j, &lo) in self.min_cons.iter_indexed() {
            let hi = self.max_cons[(i, j)];
            if lo < 1 || lo > hi {
                return Err(Error::validation(format!(
                    "pair ({i}, {j}) needs 1 <= minCons <= maxCons, got {lo}..{hi}"
                )));
            }
            let (blo, bhi) = (self.min_bw[(i, j)], self.max_bw[(i, j)]);
            if !(blo.is_finite() && bhi.is_finite() && 0.0 <= blo && blo <= bhi) {
                return Err(Error::validation(format!(
                    "pair ({i}, {j}) needs 0 <= minBW <= maxBW, got {blo}..{bhi}"
                )));
            }
        }
        Ok(())
    }

    /// A plan pinned to the given connection matrix (min = max), with the rates taken
    /// from a bandwidth matrix.
    pub fn fixed(bw: &BandwidthMatrix, cons: &SquareMatrix<u32>) -> Result<Self> {
        if bw.n() != cons.n() {
            return Err(Error::DimensionMismatch {
                expected: bw.n(),
                actual: cons.n(),
            });
        }
        let bws = bw.values().map(|i, j, &b| b * f64::from(cons[(i, j)]));
        let plan = ConnectionPlan {
            min_cons: cons.clone(),
            max_cons: cons.clone(),
            min_bw: bws.clone(),
            max_bw: bws,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_json_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let plan: ConnectionPlan = serde_json::from_reader(std::fs::File::open(path)?)?;
        plan.validate()?;
        Ok(plan)
    }

    /// Writes `minCons.csv`, `maxCons.csv`, `minBW.csv` and `maxBW.csv` into `dir`.
    pub fn write_csvs(&self, dir: impl AsRef<Path>, labels: &[String]) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.min_cons.write_csv(labels, std::fs::File::create(dir.join("minCons.csv"))?)?;
        self.max_cons.write_csv(labels, std::fs::File::create(dir.join("maxCons.csv"))?)?;
        self.min_bw.write_csv(labels, std::fs::File::create(dir.join("minBW.csv"))?)?;
        self.max_bw.write_csv(labels, std::fs::File::create(dir.join("maxBW.csv"))?)?;
        Ok(())
    }
}

fn round_half_up(x: f64) -> u32 {
    (x + 0.5).floor().max(0.0) as u32
}

/// Builds the connection envelope from predicted bandwidth and closeness indices.
///
/// For off-diagonal pairs:
///
/// * `minCons = round(max(floor(rel / sum_all * (M - 1)), 1) * w)`, clamped to `[1, maxCons]`
/// * `maxCons = round(ceil(M * rel / max_r_i) * w)`, clamped to `[1, M]`
///
/// The diagonal always gets a single connection. Bandwidth envelopes are
/// `bw * cons * r_vec`.
pub fn build_plan(
    bw: &BandwidthMatrix,
    rel: &ClosenessMatrix,
    max_parallel: u32,
    skew: &SkewWeights,
    refactor: &RefactorVector,
) -> Result<ConnectionPlan> {
    let n = bw.n();
    if max_parallel < 1 {
        return Err(Error::validation("max_parallel must be at least 1"));
    }
    for m in [rel.n(), skew.values().n(), refactor.0.n()] {
        if m != n {
            return Err(Error::DimensionMismatch { expected: n, actual: m });
        }
    }
    let (sum_all, max_r) = plan_sums(rel)?;
    let m = u64::from(max_parallel);

    let max_cons = SquareMatrix::from_fn(n, |i, j| {
        if i == j {
            return 1;
        }
        let r = u64::from(rel.get(i, j));
        let mr = u64::from(max_r[i]);
        let raw = (m * r).div_ceil(mr) as f64;
        round_half_up(raw * skew.get(i, j)).clamp(1, max_parallel)
    });
    let min_cons = SquareMatrix::from_fn(n, |i, j| {
        let r = u64::from(rel.get(i, j));
        let candidate = (r * (m - 1) / sum_all).max(1) as f64;
        round_half_up(candidate * skew.get(i, j)).clamp(1, max_cons[(i, j)])
    });
    let scale = |cons: &SquareMatrix<u32>| {
        SquareMatrix::from_fn(n, |i, j| bw.get(i, j) * f64::from(cons[(i, j)]) * refactor.get(i, j))
    };
    let plan = ConnectionPlan {
        min_bw: scale(&min_cons),
        max_bw: scale(&max_cons),
        min_cons,
        max_cons,
    };
    Ok(plan)
}
