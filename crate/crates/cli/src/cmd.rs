use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use wanify::costmodel::{
    network_cost, prediction_approach_cost, runtime_monitoring_cost, savings_ratio, write_report, CostParams, CostRow,
};
use wanify::netsim::{
    brute_force_best_plan, generate_dataset, simulate as run_simulation, throttled_allocation, write_epoch_trace, NicCapacity, SimConfig, SimWorld,
    SimulationOptions, Strategy,
};
use wanify::planner::{build_plan, expand_skew, RefactorVector, SkewWeights};
use wanify::predictor::{predict_matrix, read_dataset, train as train_forest, write_dataset, ForestModel};
use wanify::relations::{infer_dc_relations, SignificanceGap};
use wanify::topology::{DataCenter, Topology};
use wanify::{BandwidthMatrix, SquareMatrix};

use crate::manifest::{manifest_for, Outputs, RunManifest};
use crate::{CliError, CliResult, SimFlags};

fn input_err(path: &Path) -> impl Fn(wanify::Error) -> CliError + '_ {
    move |e| CliError::Input(format!("{}: {e}", path.display()))
}

fn load_config(flags: &SimFlags) -> CliResult<SimConfig> {
    let mut config = SimConfig::from_json_file(&flags.config).map_err(input_err(&flags.config))?;
    if let Some(seed) = flags.seed {
        config.seed = seed;
    }
    if let Some(sigma) = flags.noise {
        config.noise_sigma = sigma;
    }
    config.validate()?;
    Ok(config)
}

fn sim_manifest(name: &'static str, flags: &SimFlags, config: &SimConfig) -> RunManifest {
    let mut m = RunManifest::new(name).input(&flags.config).seed(config.seed);
    if let Some(sigma) = flags.noise {
        m = m.set("noise_sigma", sigma);
    }
    m
}

fn read_bw(path: &Path) -> CliResult<(Vec<String>, BandwidthMatrix)> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    BandwidthMatrix::read_csv(file).map_err(input_err(path))
}

fn csv_bytes<T: std::fmt::Display>(m: &SquareMatrix<T>, labels: &[String]) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    m.write_csv(labels, &mut buf)?;
    Ok(buf)
}

fn json_line(value: &impl Serialize) -> CliResult {
    let s = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    // A closed stdout (for example a pipe into `head`) must not abort the run.
    let _ = writeln!(std::io::stdout().lock(), "{s}");
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Aws8,
    NearNearFar,
}

#[derive(Debug, Args)]
pub struct GenTopologyArgs {
    /// Named topology; ignored when --random is given.
    #[arg(long, value_enum, default_value = "aws8")]
    preset: Preset,
    /// Generate this many DCs at random locations instead of a preset.
    #[arg(long)]
    random: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_parallel: Option<u32>,
    /// Uniform NIC capacity in Mbps.
    #[arg(long)]
    nic: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

fn random_topology(n: usize, rng: &mut ChaCha8Rng) -> CliResult<Topology> {
    let dcs = (0..n)
        .map(|i| {
            let lat = rng.random_range(-50.0..60.0);
            let lon = rng.random_range(-180.0..180.0);
            DataCenter::new(format!("dc{i}"), lat, lon, 1)
        })
        .collect();
    Ok(Topology::new(dcs, 8)?)
}

pub fn gen_topology(a: GenTopologyArgs) -> CliResult {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut topology = match a.random {
        Some(n) => random_topology(n, &mut rng)?,
        None => match a.preset {
            Preset::Aws8 => Topology::aws8(),
            Preset::NearNearFar => Topology::near_near_far(),
        },
    };
    if let Some(m) = a.max_parallel {
        topology.max_parallel = m;
    }
    let mut config = SimConfig::new(topology);
    config.seed = a.seed;
    if let Some(nic) = a.nic {
        config.nic_capacity = NicCapacity::Uniform(nic);
    }
    if let Some(sigma) = a.noise {
        config.noise_sigma = sigma;
    }
    config.validate()?;

    let mut manifest = RunManifest::new("gen-topology").seed(a.seed);
    manifest = match a.random {
        Some(n) => manifest.set("random", n),
        None => manifest.set("preset", format!("{:?}", a.preset)),
    };
    if let Some(m) = a.max_parallel {
        manifest = manifest.set("max_parallel", m);
    }
    if let Some(nic) = a.nic {
        manifest = manifest.set("nic", nic);
    }
    if let Some(sigma) = a.noise {
        manifest = manifest.set("noise_sigma", sigma);
    }
    let mut out = Outputs::default();
    out.add_json(&a.out, &config)?;
    out.commit(manifest, manifest_for(&a.out))
}

#[derive(Debug, Args)]
pub struct GenDatasetArgs {
    #[command(flatten)]
    sim: SimFlags,
    #[arg(long, visible_alias = "n", default_value_t = 600)]
    samples: usize,
    /// Cluster sizes to draw from.
    #[arg(long, value_delimiter = ',', default_value = "4,5,6,7,8")]
    sizes: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the static-independent baseline measurement of every row.
    #[arg(long)]
    baseline_out: Option<PathBuf>,
}

#[derive(Serialize)]
struct BaselineRow {
    sample_id: usize,
    src: usize,
    dst: usize,
    independent_bw: f64,
}

pub fn gen_dataset(a: GenDatasetArgs) -> CliResult {
    let config = load_config(&a.sim)?;
    let records = generate_dataset(&config, a.samples, &a.sizes, config.seed)?;
    let rows: Vec<_> = records.iter().map(|r| r.row).collect();
    let mut buf = Vec::new();
    write_dataset(&rows, &mut buf)?;
    let mut out = Outputs::default();
    out.add(&a.out, buf);
    if let Some(path) = &a.baseline_out {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &records {
            w.serialize(BaselineRow {
                sample_id: r.row.sample_id,
                src: r.row.src,
                dst: r.row.dst,
                independent_bw: r.independent_bw,
            })
            .map_err(|e| CliError::Internal(e.to_string()))?;
        }
        out.add(path, w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?);
    }
    log::info!("generated {} rows from {} samples", rows.len(), a.samples);
    let manifest = sim_manifest("gen-dataset", &a.sim, &config)
        .set("samples", a.samples)
        .set("sizes", &a.sizes);
    out.commit(manifest, manifest_for(&a.out))
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

pub fn train(a: TrainArgs) -> CliResult {
    let file = std::fs::File::open(&a.data).map_err(|e| CliError::Input(format!("{}: {e}", a.data.display())))?;
    let rows = read_dataset(file).map_err(input_err(&a.data))?;
    let samples: Vec<_> = rows.iter().map(|r| r.sample).collect();
    let model = train_forest(&samples, a.trees, a.seed)?;
    json_line(&serde_json::json!({ "samples": samples.len(), "trees": a.trees, "training_mae": model.training_mae }))?;
    let manifest = RunManifest::new("train")
        .input(&a.data)
        .seed(a.seed)
        .set("trees", a.trees);
    let mut out = Outputs::default();
    out.add_json(&a.out, &model)?;
    out.commit(manifest, manifest_for(&a.out))
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    sim: SimFlags,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Takes one snapshot per pair in a freshly perturbed world and predicts the runtime matrix.
pub fn predict(a: PredictArgs) -> CliResult {
    let config = load_config(&a.sim)?;
    let model = ForestModel::from_json_file(&a.model).map_err(input_err(&a.model))?;
    let labels = config.topology.names();
    let mut world = SimWorld::new(config)?;
    world.perturb_hosts();
    let n = world.n();
    let intra = world.config().intra_dc_bw;
    let mut grid = SquareMatrix::from_fn(n, |i, j| world.features(i, j, intra));
    for (i, j) in grid.off_diagonal_pairs().collect::<Vec<_>>() {
        grid[(i, j)] = world.measure_snapshot(i, j)?;
    }
    let predicted = predict_matrix(&model, &grid)?;
    let mut buf = Vec::new();
    predicted.write_csv(&labels, &mut buf)?;
    let manifest = sim_manifest("predict", &a.sim, world.config()).input(&a.model);
    let mut out = Outputs::default();
    out.add(&a.out, buf);
    out.commit(manifest, manifest_for(&a.out))
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Bandwidth matrix CSV with a header row of DC labels.
    #[arg(long)]
    bw: PathBuf,
    #[arg(long, default_value_t = wanify::SIGNIFICANT_DELTA_MBPS)]
    gap: f64,
    #[arg(long, default_value_t = 8)]
    max_parallel: u32,
    /// Per-DC skew weights, expanded to pair weights.
    #[arg(long, value_delimiter = ',')]
    skew: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
    /// Directory for closeness and plan matrices as CSV.
    #[arg(long)]
    csv_dir: Option<PathBuf>,
}

pub fn plan(a: PlanArgs) -> CliResult {
    let (labels, bw) = read_bw(&a.bw)?;
    let n = bw.n();
    let rel = infer_dc_relations(&bw, SignificanceGap::new(a.gap)?)?;
    let skew = match &a.skew {
        Some(w) if w.len() != n => {
            return Err(CliError::Input(format!("--skew has {} weights for {n} DCs", w.len())));
        }
        Some(w) => expand_skew(w)?,
        None => SkewWeights::uniform(n),
    };
    let plan = build_plan(&bw, &rel, a.max_parallel, &skew, &RefactorVector::uniform(n))?;

    let mut out = Outputs::default();
    out.add_json(&a.out, &plan)?;
    if let Some(dir) = &a.csv_dir {
        out.add(dir.join("relations.csv"), csv_bytes(rel.values(), &labels)?);
        out.add(dir.join("minCons.csv"), csv_bytes(&plan.min_cons, &labels)?);
        out.add(dir.join("maxCons.csv"), csv_bytes(&plan.max_cons, &labels)?);
        out.add(dir.join("minBW.csv"), csv_bytes(&plan.min_bw, &labels)?);
        out.add(dir.join("maxBW.csv"), csv_bytes(&plan.max_bw, &labels)?);
    }
    let mut manifest = RunManifest::new("plan")
        .input(&a.bw)
        .set("gap", a.gap)
        .set("max_parallel", a.max_parallel);
    if let Some(w) = &a.skew {
        manifest = manifest.set("skew", w);
    }
    out.commit(manifest, manifest_for(&a.out))
}

/// Connection strategy; heterogeneous when no flag is given.
#[derive(Debug, Args)]
#[group(multiple = false)]
pub struct StrategyFlags {
    /// Planned envelope with throttling and AIMD agents.
    #[arg(long)]
    heterogeneous: bool,
    /// `max_parallel` connections on every pair.
    #[arg(long)]
    uniform: bool,
    /// One connection on every pair.
    #[arg(long)]
    single: bool,
}

impl StrategyFlags {
    fn strategy(&self) -> Strategy {
        if self.uniform {
            Strategy::Uniform
        } else if self.single {
            Strategy::Single
        } else {
            Strategy::Heterogeneous
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    sim: SimFlags,
    #[command(flatten)]
    strategy: StrategyFlags,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long)]
    max_parallel: Option<u32>,
    #[arg(long, default_value_t = wanify::SIGNIFICANT_DELTA_MBPS)]
    gap: f64,
    #[arg(long, default_value_t = wanify::SIGNIFICANT_DELTA_MBPS)]
    delta: f64,
    /// Relative error injected into agent targets each epoch.
    #[arg(long, default_value_t = 0.0)]
    error: f64,
    /// Planning bandwidth CSV (for example a predicted matrix); measured when absent.
    #[arg(long)]
    bw: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

pub fn simulate(a: SimulateArgs) -> CliResult {
    let config = load_config(&a.sim)?;
    let bandwidth = a.bw.as_deref().map(read_bw).transpose()?.map(|(_, b)| b);
    let opts = SimulationOptions {
        epochs: a.epochs,
        strategy: a.strategy.strategy(),
        max_parallel: a.max_parallel,
        gap: a.gap,
        delta: a.delta,
        error_fraction: a.error,
        bandwidth,
        seed: config.seed,
        ..Default::default()
    };
    let mut world = SimWorld::new(config)?;
    let result = run_simulation(&mut world, &opts)?;

    let mut trace = Vec::new();
    wanify::agent::write_trace(&result.trace, &mut trace)?;
    let mut epochs = Vec::new();
    write_epoch_trace(&result.allocations, &mut epochs)?;
    let mut out = Outputs::default();
    out.add(a.out.join("trace.csv"), trace);
    out.add(a.out.join("epochs.csv"), epochs);
    out.add_json(a.out.join("plan.json"), &result.plan)?;
    out.add_json(a.out.join("summary.json"), &result.summary)?;
    json_line(&serde_json::json!({
        "strategy": result.summary.strategy,
        "min_bw": result.summary.min_bw,
        "mean_bw": result.summary.mean_bw,
        "significant_total": result.summary.significant_total,
    }))?;

    let mut manifest = sim_manifest("simulate", &a.sim, world.config())
        .set("strategy", opts.strategy)
        .set("epochs", a.epochs)
        .set("gap", a.gap)
        .set("delta", a.delta)
        .set("error", a.error);
    if let Some(m) = a.max_parallel {
        manifest = manifest.set("max_parallel", m);
    }
    if let Some(bw) = &a.bw {
        manifest = manifest.input(bw);
    }
    out.commit(manifest, a.out.join("manifest.json"))
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    sim: SimFlags,
    #[arg(long, default_value_t = 4)]
    max_parallel: u32,
    #[arg(long, default_value_t = wanify::SIGNIFICANT_DELTA_MBPS)]
    gap: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct OracleReport {
    planned_connections: SquareMatrix<u32>,
    planned_min_flow: f64,
    best_connections: SquareMatrix<u32>,
    best_min_flow: f64,
    evaluated: usize,
    ratio: f64,
}

/// Fluctuation is always disabled so both sides see the same deterministic world.
pub fn oracle(a: OracleArgs) -> CliResult {
    let config = load_config(&a.sim)?.noiseless();
    let mut world = SimWorld::new(config)?;
    let n = world.n();
    let bw = world.measure_stable();
    let rel = infer_dc_relations(&bw, SignificanceGap::new(a.gap)?)?;
    let plan = build_plan(&bw, &rel, a.max_parallel, &SkewWeights::uniform(n), &RefactorVector::uniform(n))?;
    let best = brute_force_best_plan(&world, a.max_parallel)?;
    let rates = throttled_allocation(&world, &plan.max_cons)?;
    let planned_min_flow = rates
        .off_diagonal_pairs()
        .map(|(i, j)| rates[(i, j)])
        .fold(f64::INFINITY, f64::min);
    let report = OracleReport {
        planned_connections: plan.max_cons,
        planned_min_flow,
        ratio: planned_min_flow / best.min_flow,
        best_connections: best.connections,
        best_min_flow: best.min_flow,
        evaluated: best.evaluated,
    };
    json_line(&serde_json::json!({ "planned_min_flow": planned_min_flow, "best_min_flow": report.best_min_flow, "ratio": report.ratio }))?;
    let manifest = sim_manifest("oracle", &a.sim, world.config())
        .set("max_parallel", a.max_parallel)
        .set("gap", a.gap);
    let mut out = Outputs::default();
    out.add_json(&a.out, &report)?;
    out.commit(manifest, manifest_for(&a.out))
}

/// Scenario set for the cost report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostScenarios {
    /// One-off cost of collecting training data and fitting the model.
    pub training_cost: f64,
    pub runtime: Vec<CostParams>,
    /// Snapshot probes under the prediction approach, one entry per runtime scenario.
    pub snapshot: Vec<CostParams>,
}

impl Default for CostScenarios {
    /// Half-hourly probes at 200 Mbps on t3.nano instances for 4, 6 and 8 DCs:
    /// 20-second runtime measurements against 1-second snapshots.
    fn default() -> Self {
        let base = |nodes: f64, seconds: f64| CostParams {
            occurrences_per_year: 17520.0,
            nodes,
            compute_cost_per_second: 0.0052 / 3600.0,
            monitoring_duration: seconds,
            network_cost_per_event: network_cost(200.0, seconds, 0.02),
        };
        let sizes = [4.0, 6.0, 8.0];
        CostScenarios {
            training_cost: 69.0,
            runtime: sizes.iter().map(|&n| base(n, 20.0)).collect(),
            snapshot: sizes.iter().map(|&n| base(n, 1.0)).collect(),
        }
    }
}

#[derive(Debug, Serialize, PartialEq)]
pub struct CostTotals {
    pub runtime: f64,
    pub prediction: f64,
    pub savings: f64,
}

pub fn cost_totals(scenarios: &CostScenarios) -> Result<(Vec<CostRow>, CostTotals), wanify::Error> {
    let mut rows = Vec::new();
    let mut runtime = 0.0;
    for p in &scenarios.runtime {
        let c = runtime_monitoring_cost(p)?;
        runtime += c;
        rows.push(CostRow::new(format!("runtime_n{}", p.nodes), p, c));
    }
    let mut prediction = scenarios.training_cost;
    for p in &scenarios.snapshot {
        let c = prediction_approach_cost(0.0, p, p.occurrences_per_year as u64)?;
        prediction += c;
        rows.push(CostRow::new(format!("snapshot_n{}", p.nodes), p, c));
    }
    if !(scenarios.training_cost.is_finite() && scenarios.training_cost >= 0.0) {
        return Err(wanify::Error::Validation("training_cost must be >= 0".into()));
    }
    let totals = CostTotals {
        runtime,
        prediction,
        savings: savings_ratio(runtime, prediction),
    };
    Ok((rows, totals))
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Scenario JSON; the built-in reference scenarios are used when absent.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

pub fn cost(a: CostArgs) -> CliResult {
    let scenarios: CostScenarios = match &a.params {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            serde_json::from_slice(&bytes).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?
        }
        None => CostScenarios::default(),
    };
    let (rows, totals) = cost_totals(&scenarios)?;
    json_line(&totals)?;
    let mut buf = Vec::new();
    write_report(&rows, &mut buf)?;
    let mut manifest = RunManifest::new("cost");
    if let Some(p) = &a.params {
        manifest = manifest.input(p);
    }
    let mut out = Outputs::default();
    out.add(&a.out, buf);
    out.commit(manifest, manifest_for(&a.out))
}
