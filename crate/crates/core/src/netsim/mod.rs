//! Deterministic flow-level WAN simulator.
//!
//! Time advances in 5-second epochs. In each epoch every active flow gets a rate from a
//! weighted progressive filling over per-DC egress and ingress budgets. A flow's own
//! ceiling depends on distance, connection count (with a congestion knee), host load and
//! a bounded lognormal fluctuation.

mod dataset;
mod oracle;
mod runner;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{BandwidthMatrix, SquareMatrix};
use crate::predictor::FeatureVector;
use crate::topology::{DcId, Topology};

pub use dataset::{generate_dataset, DatasetRecord};
pub use oracle::{brute_force_best_plan, throttled_allocation, OracleResult};
pub use runner::{simulate, SimulationOptions, SimulationResult, SimSummary, Strategy};

/// Simulated seconds per epoch.
pub const EPOCH_SECONDS: f64 = 5.0;
/// Epochs in a stable (20 s) measurement.
pub const STABLE_EPOCHS: usize = 4;

const EPS: f64 = 1e-9;

/// NIC capacity in Mbps, shared by all DCs or given per DC. Half goes to egress, half to ingress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NicCapacity {
    Uniform(f64),
    PerDc(Vec<f64>),
}

impl NicCapacity {
    pub fn of(&self, dc: usize) -> f64 {
        match self {
            NicCapacity::Uniform(c) => *c,
            NicCapacity::PerDc(v) => v[dc],
        }
    }
}

fn default_nic() -> NicCapacity {
    NicCapacity::Uniform(3600.0)
}
fn default_base_max() -> f64 {
    1700.0
}
fn default_base_min() -> f64 {
    120.0
}
fn default_d_near() -> f64 {
    1000.0
}
fn default_d_far() -> f64 {
    9000.0
}
fn default_knee() -> u32 {
    8
}
fn default_penalty() -> f64 {
    0.05
}
fn default_fairness() -> f64 {
    0.5
}
fn default_intra() -> f64 {
    10_000.0
}
fn default_sigma() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub topology: Topology,
    #[serde(default = "default_nic")]
    pub nic_capacity: NicCapacity,
    /// Link ceiling for DCs closer than `d_near` miles.
    #[serde(default = "default_base_max")]
    pub base_max: f64,
    /// Link ceiling for DCs farther than `d_far` miles.
    #[serde(default = "default_base_min")]
    pub base_min: f64,
    #[serde(default = "default_d_near")]
    pub d_near: f64,
    #[serde(default = "default_d_far")]
    pub d_far: f64,
    /// Most one connection can carry on any link.
    #[serde(default = "default_base_max")]
    pub per_conn_cap: f64,
    #[serde(default = "default_knee")]
    pub congestion_knee: u32,
    /// Fractional loss per connection beyond the knee.
    #[serde(default = "default_penalty")]
    pub congestion_penalty: f64,
    /// Exponent on the link ceiling in a flow's filling weight. Zero gives plain
    /// per-connection fairness; larger values favour short links.
    #[serde(default = "default_fairness")]
    pub fairness_exponent: f64,
    /// Reported bandwidth between VMs of the same DC.
    #[serde(default = "default_intra")]
    pub intra_dc_bw: f64,
    /// Sigma of the multiplicative lognormal fluctuation; 0 disables it.
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SimConfig {
    pub fn new(topology: Topology) -> Self {
        SimConfig {
            topology,
            nic_capacity: default_nic(),
            base_max: default_base_max(),
            base_min: default_base_min(),
            d_near: default_d_near(),
            d_far: default_d_far(),
            per_conn_cap: default_base_max(),
            congestion_knee: default_knee(),
            congestion_penalty: default_penalty(),
            fairness_exponent: default_fairness(),
            intra_dc_bw: default_intra(),
            noise_sigma: default_sigma(),
            seed: 0,
        }
    }

    /// Same configuration with fluctuation disabled.
    pub fn noiseless(mut self) -> Self {
        self.noise_sigma = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        let n = self.topology.n();
        if let NicCapacity::PerDc(v) = &self.nic_capacity {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: v.len(),
                });
            }
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::validation(format!("{name} must be > 0, got {v}")))
            }
        };
        for i in 0..n {
            positive("nic_capacity", self.nic_capacity.of(i))?;
        }
        positive("base_max", self.base_max)?;
        positive("base_min", self.base_min)?;
        positive("per_conn_cap", self.per_conn_cap)?;
        positive("intra_dc_bw", self.intra_dc_bw)?;
        if self.base_min > self.base_max {
            return Err(Error::validation("base_min must not exceed base_max"));
        }
        if !(self.d_near >= 0.0 && self.d_far > self.d_near) {
            return Err(Error::validation("need 0 <= d_near < d_far"));
        }
        if self.congestion_knee < 1 {
            return Err(Error::validation("congestion_knee must be >= 1"));
        }
        for (name, v) in [
            ("congestion_penalty", self.congestion_penalty),
            ("fairness_exponent", self.fairness_exponent),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let c: SimConfig = serde_json::from_reader(std::fs::File::open(path)?)?;
        c.validate()?;
        Ok(c)
    }

    /// Distance-dependent link ceiling: flat up to `d_near`, then linear down to `base_min` at `d_far`.
    pub fn base_link_bw(&self, miles: f64) -> f64 {
        if miles <= self.d_near {
            self.base_max
        } else if miles >= self.d_far {
            self.base_min
        } else {
            let f = (miles - self.d_near) / (self.d_far - self.d_near);
            self.base_max + (self.base_min - self.base_max) * f
        }
    }

    /// Connections' combined usefulness: linear up to the knee, then shrinking
    /// multiplicatively by `congestion_penalty` per extra connection.
    pub fn effective_connections(&self, connections: u32) -> f64 {
        let knee = self.congestion_knee;
        let excess = f64::from(connections.saturating_sub(knee));
        f64::from(connections.min(knee)) * (1.0 - self.congestion_penalty * excess).max(0.0)
    }

    /// Restricts the configuration to the listed DCs.
    pub fn subset(&self, ids: &[DcId]) -> Result<SimConfig> {
        let topology = self.topology.subset(ids)?;
        let nic_capacity = match &self.nic_capacity {
            NicCapacity::Uniform(c) => NicCapacity::Uniform(*c),
            NicCapacity::PerDc(v) => NicCapacity::PerDc(ids.iter().map(|id| v[id.0]).collect()),
        };
        Ok(SimConfig {
            topology,
            nic_capacity,
            ..self.clone()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub src: usize,
    pub dst: usize,
    pub connections: u32,
    /// Rate limit imposed by the sender; `None` means unbounded.
    pub demand: Option<f64>,
}

/// Concurrent inter-DC flows, at most one per ordered pair, kept sorted by `(src, dst)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FlowSet {
    flows: Vec<Flow>,
}

impl FlowSet {
    pub fn new(n_dcs: usize, mut flows: Vec<Flow>) -> Result<Self> {
        flows.sort_by_key(|f| (f.src, f.dst));
        for w in flows.windows(2) {
            if (w[0].src, w[0].dst) == (w[1].src, w[1].dst) {
                return Err(Error::validation(format!("duplicate flow {} -> {}", w[0].src, w[0].dst)));
            }
        }
        for f in &flows {
            if f.src >= n_dcs || f.dst >= n_dcs || f.src == f.dst {
                return Err(Error::validation(format!("invalid flow {} -> {}", f.src, f.dst)));
            }
            if f.connections < 1 {
                return Err(Error::validation(format!("flow {} -> {} has no connections", f.src, f.dst)));
            }
            if let Some(d) = f.demand {
                if d.is_nan() || d < 0.0 {
                    return Err(Error::validation(format!("flow demand must be >= 0, got {d}")));
                }
            }
        }
        Ok(FlowSet { flows })
    }

    /// Every ordered pair active with the given connection matrix and optional demand caps.
    pub fn all_pairs(cons: &SquareMatrix<u32>, demand: Option<&SquareMatrix<Option<f64>>>) -> Result<Self> {
        let flows = cons
            .off_diagonal_pairs()
            .map(|(i, j)| Flow {
                src: i,
                dst: j,
                connections: cons[(i, j)],
                demand: demand.and_then(|d| d[(i, j)]),
            })
            .collect();
        FlowSet::new(cons.n(), flows)
    }

    pub fn single(n_dcs: usize, src: usize, dst: usize, connections: u32) -> Result<Self> {
        FlowSet::new(
            n_dcs,
            vec![Flow {
                src,
                dst,
                connections,
                demand: None,
            }],
        )
    }

    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }
}

/// Load on one DC's hosts during the current measurement round.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HostStats {
    pub cpu_load: f64,
    pub mem_util: f64,
    /// Share of the NIC consumed by traffic outside the simulation.
    pub background_util: f64,
    pub retransmissions: u32,
}

impl HostStats {
    /// Throughput multiplier from sender CPU and receiver memory pressure.
    fn flow_factor(src: &HostStats, dst: &HostStats) -> f64 {
        (1.0 - 0.3 * src.cpu_load) * (1.0 - 0.5 * (dst.mem_util - 0.6).max(0.0))
    }
}

/// Per-flow rates for one epoch, aligned with the flow set's order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub flows: Vec<Flow>,
    pub rates: Vec<f64>,
}

impl Allocation {
    pub fn rate(&self, src: usize, dst: usize) -> Option<f64> {
        self.flows
            .iter()
            .position(|f| f.src == src && f.dst == dst)
            .map(|k| self.rates[k])
    }

    pub fn min_rate(&self) -> f64 {
        self.rates.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Rates as a matrix; pairs without a flow are 0.
    pub fn to_matrix(&self, n: usize) -> SquareMatrix<f64> {
        let mut m = SquareMatrix::filled(n, 0.0);
        for (f, &r) in self.flows.iter().zip(&self.rates) {
            m[(f.src, f.dst)] = r;
        }
        m
    }
}

/// Simulator state: configuration, epoch counter, host load and the random stream.
#[derive(Debug, Clone)]
pub struct SimWorld {
    config: SimConfig,
    distances: SquareMatrix<f64>,
    epoch: u64,
    host_stats: Vec<HostStats>,
    rng: ChaCha8Rng,
}

impl SimWorld {
    /// A world with idle hosts, seeded from `config.seed`.
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let distances = config.topology.distance_matrix();
        let n = config.topology.n();
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(SimWorld {
            config,
            distances,
            epoch: 0,
            host_stats: vec![HostStats::default(); n],
            rng,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.config.topology.n()
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn host_stats(&self) -> &[HostStats] {
        &self.host_stats
    }

    pub fn distance(&self, src: usize, dst: usize) -> f64 {
        self.distances[(src, dst)]
    }

    /// Draws fresh background load for every DC.
    pub fn perturb_hosts(&mut self) {
        for h in &mut self.host_stats {
            let cpu_load = self.rng.random_range(0.05..0.95);
            let mem_util = self.rng.random_range(0.2..0.9);
            let background_util = self.rng.random_range(0.0..0.35);
            let jitter: f64 = self.rng.random_range(0.0..5.0);
            *h = HostStats {
                cpu_load,
                mem_util,
                background_util,
                retransmissions: (background_util * 40.0 + jitter).round() as u32,
            };
        }
    }

    pub fn set_host_stats(&mut self, stats: Vec<HostStats>) -> Result<()> {
        if stats.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                actual: stats.len(),
            });
        }
        self.host_stats = stats;
        Ok(())
    }

    fn noise_factor(&mut self) -> f64 {
        let sigma = self.config.noise_sigma;
        if sigma == 0.0 {
            return 1.0;
        }
        let d = LogNormal::new(0.0, sigma).expect("sigma validated as finite and >= 0");
        d.sample(&mut self.rng).clamp(0.5, 1.5)
    }

    /// Allocates one epoch of bandwidth and advances the clock.
    pub fn allocate(&mut self, flows: &FlowSet) -> Allocation {
        let noise: Vec<f64> = flows.flows().iter().map(|_| self.noise_factor()).collect();
        self.epoch += 1;
        self.fill(flows, &noise)
    }

    /// Allocation with fluctuation off; does not touch the clock or random stream.
    pub fn allocate_quiet(&self, flows: &FlowSet) -> Allocation {
        self.fill(flows, &vec![1.0; flows.len()])
    }

    /// Mean allocation over `epochs` consecutive epochs.
    pub fn allocate_mean(&mut self, flows: &FlowSet, epochs: usize) -> Allocation {
        let mut sum = vec![0.0; flows.len()];
        for _ in 0..epochs {
            let a = self.allocate(flows);
            for (s, r) in sum.iter_mut().zip(&a.rates) {
                *s += r;
            }
        }
        Allocation {
            flows: flows.flows().to_vec(),
            rates: sum.into_iter().map(|s| s / epochs.max(1) as f64).collect(),
        }
    }

    /// Ceiling a flow would reach if it were alone, before budgets.
    pub fn flow_ceiling(&self, flow: &Flow) -> f64 {
        let c = &self.config;
        let base = c.base_link_bw(self.distance(flow.src, flow.dst));
        let factor = HostStats::flow_factor(&self.host_stats[flow.src], &self.host_stats[flow.dst]);
        let cap = c.effective_connections(flow.connections) * c.per_conn_cap.min(base) * factor;
        flow.demand.map_or(cap, |d| cap.min(d))
    }

    /// Speed at which a flow grows during filling: effective connections times the link
    /// ceiling raised to `fairness_exponent`.
    pub fn flow_weight(&self, flow: &Flow) -> f64 {
        let c = &self.config;
        let base = c.base_link_bw(self.distance(flow.src, flow.dst));
        c.effective_connections(flow.connections) * base.powf(c.fairness_exponent)
    }

    pub fn egress_budget(&self, dc: usize) -> f64 {
        self.config.nic_capacity.of(dc) / 2.0 * (1.0 - self.host_stats[dc].background_util)
    }

    pub fn ingress_budget(&self, dc: usize) -> f64 {
        self.egress_budget(dc)
    }

    /// Weighted progressive filling.
    ///
    /// All unfrozen flows grow at a speed equal to their weight until they reach their
    /// ceiling or a DC budget they use runs out.
    fn fill(&self, flows: &FlowSet, noise: &[f64]) -> Allocation {
        let n = self.n();
        let fl = flows.flows();
        let caps: Vec<f64> = fl
            .iter()
            .zip(noise)
            .map(|(f, &z)| {
                let alone = Flow { demand: None, ..*f };
                let cap = self.flow_ceiling(&alone) * z;
                f.demand.map_or(cap, |d| cap.min(d))
            })
            .collect();
        let weights: Vec<f64> = fl.iter().map(|f| self.flow_weight(f)).collect();
        let mut egress: Vec<f64> = (0..n).map(|d| self.egress_budget(d)).collect();
        let mut ingress: Vec<f64> = (0..n).map(|d| self.ingress_budget(d)).collect();
        let mut rates = vec![0.0; fl.len()];
        let mut active: Vec<bool> = caps.iter().zip(&weights).map(|(&c, &w)| c > 0.0 && w > 0.0).collect();

        while active.iter().any(|&a| a) {
            let mut out_w = vec![0.0; n];
            let mut in_w = vec![0.0; n];
            let mut dt = f64::INFINITY;
            for (k, f) in fl.iter().enumerate().filter(|&(k, _)| active[k]) {
                out_w[f.src] += weights[k];
                in_w[f.dst] += weights[k];
                dt = dt.min((caps[k] - rates[k]) / weights[k]);
            }
            for d in 0..n {
                if out_w[d] > 0.0 {
                    dt = dt.min(egress[d] / out_w[d]);
                }
                if in_w[d] > 0.0 {
                    dt = dt.min(ingress[d] / in_w[d]);
                }
            }
            let dt = dt.max(0.0);
            for (k, f) in fl.iter().enumerate().filter(|&(k, _)| active[k]) {
                let inc = weights[k] * dt;
                rates[k] += inc;
                egress[f.src] -= inc;
                ingress[f.dst] -= inc;
            }
            for (k, f) in fl.iter().enumerate() {
                if active[k] && (caps[k] - rates[k] <= EPS || egress[f.src] <= EPS || ingress[f.dst] <= EPS) {
                    active[k] = false;
                }
            }
        }
        Allocation {
            flows: fl.to_vec(),
            rates,
        }
    }

    /// One-epoch, one-connection probe of `src -> dst` with every other pair idle.
    pub fn measure_snapshot(&mut self, src: usize, dst: usize) -> Result<FeatureVector> {
        let flows = FlowSet::single(self.n(), src, dst, 1)?;
        let bw = self.allocate(&flows).rates[0];
        Ok(self.features(src, dst, bw))
    }

    /// Feature vector for a pair with the given probe bandwidth, from current host stats.
    pub fn features(&self, src: usize, dst: usize, snapshot_bw: f64) -> FeatureVector {
        let (hs, hd) = (&self.host_stats[src], &self.host_stats[dst]);
        FeatureVector {
            n_dcs: self.n() as u32,
            snapshot_bw,
            mem_util_dst: hd.mem_util,
            cpu_load_src: hs.cpu_load,
            cpu_load_dst: hd.cpu_load,
            retransmissions: hs.retransmissions,
            distance: self.distance(src, dst),
        }
    }

    /// Stable runtime bandwidth: all ordered pairs transfer at once over 4 epochs with one
    /// connection each. The diagonal reports `intra_dc_bw`.
    pub fn measure_stable(&mut self) -> BandwidthMatrix {
        self.measure_stable_with(&SquareMatrix::filled(self.n(), 1))
    }

    /// Stable measurement with an arbitrary connection matrix.
    pub fn measure_stable_with(&mut self, cons: &SquareMatrix<u32>) -> BandwidthMatrix {
        let flows = FlowSet::all_pairs(cons, None).expect("connection matrix sized to the world");
        let mean = self.allocate_mean(&flows, STABLE_EPOCHS);
        let intra = self.config.intra_dc_bw;
        let m = mean.to_matrix(self.n()).map(|i, j, &v| if i == j { intra } else { v });
        BandwidthMatrix::new(m).expect("allocations are finite and nonnegative")
    }

    /// Static-independent bandwidth: the pair alone, one connection, 4 epochs.
    pub fn measure_independent(&mut self, src: usize, dst: usize) -> Result<f64> {
        let flows = FlowSet::single(self.n(), src, dst, 1)?;
        Ok(self.allocate_mean(&flows, STABLE_EPOCHS).rates[0])
    }
}

/// Writes the per-epoch flow trace as CSV.
pub fn write_epoch_trace<W: std::io::Write>(epochs: &[Allocation], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "src", "dst", "connections", "allocated_mbps"])?;
    for (e, a) in epochs.iter().enumerate() {
        for (f, r) in a.flows.iter().zip(&a.rates) {
            w.write_record([
                e.to_string(),
                f.src.to_string(),
                f.dst.to_string(),
                f.connections.to_string(),
                format!("{r:.3}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
