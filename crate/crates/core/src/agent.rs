//! Per-DC local optimizer.
//!
//! Each agent starts its destinations at the top of the planned envelope and adjusts them
//! every epoch with additive increase and multiplicative decrease. Links that could
//! deliver much more than the source's average are throttled to that average.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::ConnectionPlan;

/// Transfers with less pending data than this leave the agent's state untouched.
pub const MIN_PENDING_BYTES: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Increase,
    Decrease,
    Idle,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Increase => "increase",
            Mode::Decrease => "decrease",
            Mode::Idle => "idle",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DestinationState {
    pub dst: usize,
    pub min_cons: u32,
    pub max_cons: u32,
    pub min_bw: f64,
    pub max_bw: f64,
    /// Achievable bandwidth of one connection.
    pub unit_bw: f64,
    pub target_cons: u32,
    pub target_bw: f64,
    pub mode: Mode,
    pub throttle_cap: Option<f64>,
}

impl DestinationState {
    /// True when the envelope leaves no room to adapt.
    pub fn is_pinned(&self) -> bool {
        self.min_cons == self.max_cons && self.min_bw == self.max_bw
    }

    fn apply_cap(&mut self) {
        if let Some(cap) = self.throttle_cap {
            self.target_bw = self.target_bw.min(cap);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub src: usize,
    /// One record per destination DC, including `src` itself.
    pub dests: Vec<DestinationState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochObservation {
    pub monitored_bw: Vec<f64>,
    pub pending_bytes: Vec<u64>,
}

/// Builds the agent for DC `src` from its row of the plan, with every target at maximum.
pub fn init_agent(plan: &ConnectionPlan, src: usize) -> Result<AgentState> {
    plan.validate()?;
    let n = plan.n();
    if src >= n {
        return Err(Error::validation(format!("source DC {src} outside plan of size {n}")));
    }
    let mut dests = Vec::with_capacity(n);
    for dst in 0..n {
        let (min_cons, max_cons) = (plan.min_cons[(src, dst)], plan.max_cons[(src, dst)]);
        let (min_bw, max_bw) = (plan.min_bw[(src, dst)], plan.max_bw[(src, dst)]);
        let unit_bw = max_bw / f64::from(max_cons);
        let check = min_bw / f64::from(min_cons);
        if (unit_bw - check).abs() > 1e-9 * unit_bw.max(1.0) {
            return Err(Error::validation(format!(
                "pair ({src}, {dst}): maxBW/maxCons = {unit_bw} differs from minBW/minCons = {check}"
            )));
        }
        dests.push(DestinationState {
            dst,
            min_cons,
            max_cons,
            min_bw,
            max_bw,
            unit_bw,
            target_cons: max_cons,
            target_bw: max_bw,
            mode: if dst == src { Mode::Idle } else { Mode::Increase },
            throttle_cap: None,
        });
    }
    Ok(AgentState { src, dests })
}

/// One AIMD update.
///
/// Per destination with at least 1 MB pending: a monitored rate more than `delta` below
/// target halves connections and bandwidth (not below the envelope minimum); otherwise one
/// connection is added and bandwidth follows `unit_bw * cons` up to the envelope maximum.
/// Throttle caps are applied last.
pub fn aimd_step(state: &AgentState, obs: &EpochObservation, delta: f64) -> Result<AgentState> {
    let n = state.dests.len();
    for len in [obs.monitored_bw.len(), obs.pending_bytes.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, actual: len });
        }
    }
    let mut next = state.clone();
    for (d, (&monitored, &pending)) in next.dests.iter_mut().zip(obs.monitored_bw.iter().zip(&obs.pending_bytes)) {
        if pending < MIN_PENDING_BYTES || d.is_pinned() {
            continue;
        }
        if monitored < d.target_bw - delta {
            d.mode = Mode::Decrease;
            d.target_cons = d.min_cons.max(d.target_cons / 2);
            d.target_bw = d.min_bw.max(d.target_bw / 2.0);
        } else {
            d.mode = Mode::Increase;
            d.target_cons = d.max_cons.min(d.target_cons + 1);
            d.target_bw = if d.target_cons == d.max_cons {
                d.max_bw
            } else {
                d.max_bw.min(d.unit_bw * f64::from(d.target_cons))
            };
        }
        d.apply_cap();
    }
    Ok(next)
}

/// Caps for links that exceed the mean achievable bandwidth out of `src`.
///
/// The mean skips the `src` entry itself. Destinations strictly above it are capped to it.
pub fn throttle_caps(achievable: &[f64], src: usize) -> Result<Vec<Option<f64>>> {
    let others: Vec<f64> = achievable
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != src)
        .map(|(_, &v)| v)
        .collect();
    if others.is_empty() {
        return Err(Error::validation("throttling needs at least one destination"));
    }
    let t = others.iter().sum::<f64>() / others.len() as f64;
    Ok(achievable
        .iter()
        .enumerate()
        .map(|(j, &v)| (j != src && v > t).then_some(t))
        .collect())
}

/// Installs throttle caps and clamps current targets to them.
pub fn apply_throttle(state: &mut AgentState, caps: &[Option<f64>]) -> Result<()> {
    if caps.len() != state.dests.len() {
        return Err(Error::DimensionMismatch {
            expected: state.dests.len(),
            actual: caps.len(),
        });
    }
    for (d, &cap) in state.dests.iter_mut().zip(caps) {
        d.throttle_cap = cap;
        d.apply_cap();
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoolAction {
    Open(u32),
    Close(u32),
    Hold,
}

/// Connection-pool changes needed to move from `current` to `target` connections.
pub fn reconcile_pool(current: i64, target: i64) -> Result<PoolAction> {
    if current < 0 || target < 0 {
        return Err(Error::validation(format!(
            "connection counts must be >= 0, got current {current}, target {target}"
        )));
    }
    let diff = u32::try_from((target - current).unsigned_abs())
        .map_err(|_| Error::validation("connection count difference too large"))?;
    Ok(match target.cmp(&current) {
        std::cmp::Ordering::Greater => PoolAction::Open(diff),
        std::cmp::Ordering::Less => PoolAction::Close(diff),
        std::cmp::Ordering::Equal => PoolAction::Hold,
    })
}

/// One agent trace line: the targets in force during `epoch`, what was monitored, and
/// the mode chosen in response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub epoch: usize,
    pub src: usize,
    pub dst: usize,
    pub mode: Mode,
    pub target_cons: u32,
    pub target_bw: f64,
    pub monitored_bw: f64,
    pub capped: bool,
}

pub fn write_trace<W: Write>(records: &[TraceRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record([
        "epoch",
        "src",
        "dst",
        "mode",
        "target_cons",
        "target_bw",
        "monitored_bw",
        "capped",
    ])?;
    for r in records {
        w.write_record([
            r.epoch.to_string(),
            r.src.to_string(),
            r.dst.to_string(),
            r.mode.to_string(),
            r.target_cons.to_string(),
            format!("{:.3}", r.target_bw),
            format!("{:.3}", r.monitored_bw),
            r.capped.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
