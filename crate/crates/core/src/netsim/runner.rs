use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Allocation, FlowSet, SimWorld};
use crate::agent::{aimd_step, apply_throttle, init_agent, throttle_caps, AgentState, EpochObservation, Mode, TraceRecord};
use crate::error::{Error, Result};
use crate::matrix::{BandwidthMatrix, SquareMatrix};
use crate::planner::{build_plan, ConnectionPlan, RefactorVector, SkewWeights};
use crate::relations::{infer_dc_relations, SignificanceGap};

/// How connections are chosen for a simulated run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Planned envelope, throttling and AIMD agents.
    Heterogeneous,
    /// `M` connections on every pair, no adaptation.
    Uniform,
    /// One connection on every pair, no adaptation.
    Single,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub epochs: usize,
    pub strategy: Strategy,
    /// Per-pair connection budget; defaults to the topology's `max_parallel`.
    pub max_parallel: Option<u32>,
    pub gap: f64,
    pub delta: f64,
    /// Relative error injected into targets after every update (0 disables).
    pub error_fraction: f64,
    pub pending_bytes: u64,
    /// Bandwidth used for planning; measured from the world when absent.
    pub bandwidth: Option<BandwidthMatrix>,
    pub seed: u64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            epochs: 50,
            strategy: Strategy::Heterogeneous,
            max_parallel: None,
            gap: crate::SIGNIFICANT_DELTA_MBPS,
            delta: crate::SIGNIFICANT_DELTA_MBPS,
            error_fraction: 0.0,
            pending_bytes: 1 << 30,
            bandwidth: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub strategy: Strategy,
    pub epochs: usize,
    /// Smallest per-pair mean rate over the run.
    pub min_bw: f64,
    /// Average of per-pair mean rates.
    pub mean_bw: f64,
    /// Pairs with `|target - monitored| > delta`, per epoch.
    pub significant_per_epoch: Vec<usize>,
    pub significant_total: usize,
    pub mode_toggles: usize,
}

impl SimSummary {
    /// Significant deltas from epoch `from` on.
    pub fn significant_after(&self, from: usize) -> usize {
        self.significant_per_epoch.iter().skip(from).sum()
    }

    /// Epochs with at least one significant delta.
    pub fn significant_epochs(&self) -> usize {
        self.significant_per_epoch.iter().filter(|&&c| c > 0).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub plan: ConnectionPlan,
    pub planning_bw: BandwidthMatrix,
    pub trace: Vec<TraceRecord>,
    pub allocations: Vec<Allocation>,
    pub summary: SimSummary,
}

fn strategy_plan(world: &mut SimWorld, opts: &SimulationOptions, m: u32) -> Result<(BandwidthMatrix, ConnectionPlan)> {
    let n = world.n();
    let bw = match &opts.bandwidth {
        Some(b) if b.n() != n => {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: b.n(),
            })
        }
        Some(b) => b.clone(),
        None => world.measure_stable(),
    };
    let plan = match opts.strategy {
        Strategy::Heterogeneous => {
            let rel = infer_dc_relations(&bw, SignificanceGap::new(opts.gap)?)?;
            build_plan(&bw, &rel, m, &SkewWeights::uniform(n), &RefactorVector::uniform(n))?
        }
        Strategy::Uniform => ConnectionPlan::fixed(&bw, &SquareMatrix::from_fn(n, |i, j| if i == j { 1 } else { m }))?,
        Strategy::Single => ConnectionPlan::fixed(&bw, &SquareMatrix::filled(n, 1))?,
    };
    Ok((bw, plan))
}

/// Runs agents against the simulator for `opts.epochs` epochs.
///
/// Each epoch the flows use the agents' target connections, with throttle caps enforced
/// as sender-side rate limits. After the first epoch each heterogeneous agent derives its
/// caps from the monitored rates and keeps them for the rest of the run.
pub fn simulate(world: &mut SimWorld, opts: &SimulationOptions) -> Result<SimulationResult> {
    let n = world.n();
    let m = opts.max_parallel.unwrap_or(world.config().topology.max_parallel);
    if m < 1 {
        return Err(Error::validation("max_parallel must be >= 1"));
    }
    if !(0.0..1.0).contains(&opts.error_fraction) {
        return Err(Error::validation("error_fraction must be in [0, 1)"));
    }
    let (planning_bw, plan) = strategy_plan(world, opts, m)?;
    let mut agents: Vec<AgentState> = (0..n).map(|i| init_agent(&plan, i)).collect::<Result<_>>()?;
    let mut last_mode: Vec<Vec<Mode>> = agents.iter().map(|a| a.dests.iter().map(|d| d.mode).collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut trace = Vec::with_capacity(opts.epochs * n * n.saturating_sub(1));
    let mut allocations = Vec::with_capacity(opts.epochs);
    let mut significant_per_epoch = Vec::with_capacity(opts.epochs);
    let mut mode_toggles = 0;
    let mut sums = SquareMatrix::filled(n, 0.0);

    for epoch in 0..opts.epochs {
        let cons = SquareMatrix::from_fn(n, |i, j| agents[i].dests[j].target_cons.max(1));
        let demand = SquareMatrix::from_fn(n, |i, j| agents[i].dests[j].throttle_cap);
        let alloc = world.allocate(&FlowSet::all_pairs(&cons, Some(&demand))?);
        let monitored = alloc.to_matrix(n);
        for (i, j) in monitored.off_diagonal_pairs() {
            sums[(i, j)] += monitored[(i, j)];
        }
        let significant = monitored
            .off_diagonal_pairs()
            .filter(|&(i, j)| (agents[i].dests[j].target_bw - monitored[(i, j)]).abs() > opts.delta)
            .count();
        significant_per_epoch.push(significant);

        for (i, agent) in agents.iter_mut().enumerate() {
            if epoch == 0 && opts.strategy == Strategy::Heterogeneous {
                apply_throttle(agent, &throttle_caps(monitored.row(i), i)?)?;
            }
            let obs = EpochObservation {
                monitored_bw: monitored.row(i).to_vec(),
                pending_bytes: (0..n).map(|j| if j == i { 0 } else { opts.pending_bytes }).collect(),
            };
            let before = agent.clone();
            let mut next = aimd_step(agent, &obs, opts.delta)?;
            if opts.error_fraction > 0.0 {
                for d in next.dests.iter_mut().filter(|d| d.dst != i) {
                    let sign = |r: &mut ChaCha8Rng| if r.random_bool(0.5) { 1.0 } else { -1.0 };
                    d.target_bw *= 1.0 + opts.error_fraction * sign(&mut rng);
                    let c = f64::from(d.target_cons) * (1.0 + opts.error_fraction * sign(&mut rng));
                    d.target_cons = (c.round() as u32).max(1);
                }
            }
            for (j, d) in next.dests.iter().enumerate().filter(|&(j, _)| j != i) {
                if d.mode != last_mode[i][j] {
                    mode_toggles += 1;
                    last_mode[i][j] = d.mode;
                }
                trace.push(TraceRecord {
                    epoch,
                    src: i,
                    dst: j,
                    mode: d.mode,
                    target_cons: before.dests[j].target_cons,
                    target_bw: before.dests[j].target_bw,
                    monitored_bw: monitored[(i, j)],
                    capped: d.throttle_cap.is_some(),
                });
            }
            *agent = next;
        }
        allocations.push(alloc);
    }

    let epochs = opts.epochs.max(1) as f64;
    let means: Vec<f64> = sums.off_diagonal_pairs().map(|(i, j)| sums[(i, j)] / epochs).collect();
    let summary = SimSummary {
        strategy: opts.strategy,
        epochs: opts.epochs,
        min_bw: means.iter().copied().fold(f64::INFINITY, f64::min),
        mean_bw: means.iter().sum::<f64>() / means.len().max(1) as f64,
        significant_total: significant_per_epoch.iter().sum(),
        significant_per_epoch,
        mode_toggles,
    };
    Ok(SimulationResult {
        plan,
        planning_bw,
        trace,
        allocations,
        summary,
    })
}
