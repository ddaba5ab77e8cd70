use serde::{Deserialize, Serialize};

use super::{FlowSet, SimWorld};
use crate::agent::throttle_caps;
use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;

const MAX_ORACLE_DCS: usize = 3;
const MAX_ORACLE_PARALLEL: u32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub connections: SquareMatrix<u32>,
    pub min_flow: f64,
    pub evaluated: usize,
}

/// Exhaustive search for the connection matrix that maximizes the smallest flow.
///
/// Every off-diagonal pair takes a value in `1..=m`; assignments are visited in
/// lexicographic (row-major) order and only a strictly better one replaces the
/// incumbent, so ties resolve to the lexicographically smallest matrix. Fluctuation is off.
pub fn brute_force_best_plan(world: &SimWorld, m: u32) -> Result<OracleResult> {
    let n = world.n();
    if n > MAX_ORACLE_DCS || !(1..=MAX_ORACLE_PARALLEL).contains(&m) {
        return Err(Error::validation(format!(
            "oracle search limited to N <= {MAX_ORACLE_DCS} and 1 <= M <= {MAX_ORACLE_PARALLEL}, got N = {n}, M = {m}"
        )));
    }
    let pairs: Vec<(usize, usize)> = SquareMatrix::<u32>::filled(n, 1).off_diagonal_pairs().collect();
    let mut digits = vec![1u32; pairs.len()];
    let mut best: Option<(Vec<u32>, f64)> = None;
    let mut evaluated = 0;
    loop {
        let mut cons = SquareMatrix::filled(n, 1u32);
        for (&(i, j), &d) in pairs.iter().zip(&digits) {
            cons[(i, j)] = d;
        }
        let flows = FlowSet::all_pairs(&cons, None)?;
        let min_flow = world.allocate_quiet(&flows).min_rate();
        evaluated += 1;
        if best.as_ref().is_none_or(|(_, b)| min_flow > b + 1e-9) {
            best = Some((digits.clone(), min_flow));
        }
        // odometer increment, last pair fastest
        let mut k = digits.len();
        loop {
            if k == 0 {
                let (digits, min_flow) = best.expect("at least one assignment evaluated");
                let mut connections = SquareMatrix::filled(n, 1u32);
                for (&(i, j), &d) in pairs.iter().zip(&digits) {
                    connections[(i, j)] = d;
                }
                return Ok(OracleResult {
                    connections,
                    min_flow,
                    evaluated,
                });
            }
            k -= 1;
            if digits[k] < m {
                digits[k] += 1;
                break;
            }
            digits[k] = 1;
        }
    }
}

/// Allocation under a connection matrix after one round of mean-threshold throttling.
///
/// The pairs run once unthrottled; each source then caps destinations above its mean rate
/// and the capped flows run again. Fluctuation is off.
pub fn throttled_allocation(world: &SimWorld, cons: &SquareMatrix<u32>) -> Result<SquareMatrix<f64>> {
    let n = world.n();
    let first = world.allocate_quiet(&FlowSet::all_pairs(cons, None)?).to_matrix(n);
    let mut demand = SquareMatrix::filled(n, None);
    for i in 0..n {
        for (j, cap) in throttle_caps(first.row(i), i)?.into_iter().enumerate() {
            demand[(i, j)] = cap;
        }
    }
    Ok(world
        .allocate_quiet(&FlowSet::all_pairs(cons, Some(&demand))?)
        .to_matrix(n))
}
