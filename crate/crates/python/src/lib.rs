//! Python bindings for the wanify core crate.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use wanify::agent::{aimd_step, apply_throttle, init_agent, throttle_caps, AgentState, EpochObservation};
use wanify::costmodel::{self, CostParams};
use wanify::netsim::{self, SimConfig, SimWorld, SimulationOptions, Strategy};
use wanify::planner::{self, expand_skew, RefactorVector, SkewWeights};
use wanify::predictor::{self, FeatureVector, ForestModel, TrainingSample, N_FEATURES};
use wanify::relations::{self, SignificanceGap};
use wanify::topology::Topology;
use wanify::BandwidthMatrix;

fn to_py(e: wanify::Error) -> PyErr {
    if e.is_input_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn bw_matrix(rows: Vec<Vec<f64>>) -> PyResult<BandwidthMatrix> {
    BandwidthMatrix::from_rows(rows).map_err(to_py)
}

fn gap(mbps: f64) -> PyResult<SignificanceGap> {
    SignificanceGap::new(mbps).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (bw, gap_mbps = 100.0))]
fn unique_filtered_levels(bw: Vec<Vec<f64>>, gap_mbps: f64) -> PyResult<Vec<f64>> {
    Ok(relations::unique_filtered_levels(&bw_matrix(bw)?, gap(gap_mbps)?))
}

/// Closeness index of every DC pair; 1 is the fastest level.
#[pyfunction]
#[pyo3(signature = (bw, gap_mbps = 100.0))]
fn infer_dc_relations(bw: Vec<Vec<f64>>, gap_mbps: f64) -> PyResult<Vec<Vec<u32>>> {
    let rel = relations::infer_dc_relations(&bw_matrix(bw)?, gap(gap_mbps)?).map_err(to_py)?;
    Ok(rel.rows())
}

#[pyclass(name = "ConnectionPlan", frozen)]
struct PyConnectionPlan {
    inner: planner::ConnectionPlan,
}

#[pymethods]
impl PyConnectionPlan {
    #[getter]
    fn min_cons(&self) -> Vec<Vec<u32>> {
        self.inner.min_cons.rows()
    }

    #[getter]
    fn max_cons(&self) -> Vec<Vec<u32>> {
        self.inner.max_cons.rows()
    }

    #[getter]
    fn min_bw(&self) -> Vec<Vec<f64>> {
        self.inner.min_bw.rows()
    }

    #[getter]
    fn max_bw(&self) -> Vec<Vec<f64>> {
        self.inner.max_bw.rows()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        let inner: planner::ConnectionPlan = serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(to_py)?;
        Ok(PyConnectionPlan { inner })
    }

    fn __repr__(&self) -> String {
        format!("ConnectionPlan(n={})", self.inner.n())
    }
}

/// Infers relations from `bw` and builds the connection envelope.
#[pyfunction]
#[pyo3(signature = (bw, max_parallel = 8, gap_mbps = 100.0, skew = None))]
fn build_plan(bw: Vec<Vec<f64>>, max_parallel: u32, gap_mbps: f64, skew: Option<Vec<f64>>) -> PyResult<PyConnectionPlan> {
    let bw = bw_matrix(bw)?;
    let n = bw.n();
    let rel = relations::infer_dc_relations(&bw, gap(gap_mbps)?).map_err(to_py)?;
    let skew = match skew {
        Some(w) if w.len() != n => {
            return Err(PyValueError::new_err(format!("skew has {} weights for {n} DCs", w.len())));
        }
        Some(w) => expand_skew(&w).map_err(to_py)?,
        None => SkewWeights::uniform(n),
    };
    let inner = planner::build_plan(&bw, &rel, max_parallel, &skew, &RefactorVector::uniform(n)).map_err(to_py)?;
    Ok(PyConnectionPlan { inner })
}

/// Local AIMD agent for one source DC.
#[pyclass(name = "Agent")]
struct PyAgent {
    state: AgentState,
    delta: f64,
}

#[pymethods]
impl PyAgent {
    #[new]
    #[pyo3(signature = (plan, src, delta = 100.0))]
    fn new(plan: &PyConnectionPlan, src: usize, delta: f64) -> PyResult<Self> {
        let state = init_agent(&plan.inner, src).map_err(to_py)?;
        Ok(PyAgent { state, delta })
    }

    /// Caps destinations whose achievable bandwidth is above the source's mean.
    fn throttle(&mut self, achievable: Vec<f64>) -> PyResult<Vec<Option<f64>>> {
        let caps = throttle_caps(&achievable, self.state.src).map_err(to_py)?;
        apply_throttle(&mut self.state, &caps).map_err(to_py)?;
        Ok(caps)
    }

    fn step(&mut self, monitored_bw: Vec<f64>, pending_bytes: Vec<u64>) -> PyResult<()> {
        let obs = EpochObservation {
            monitored_bw,
            pending_bytes,
        };
        self.state = aimd_step(&self.state, &obs, self.delta).map_err(to_py)?;
        Ok(())
    }

    #[getter]
    fn target_cons(&self) -> Vec<u32> {
        self.state.dests.iter().map(|d| d.target_cons).collect()
    }

    #[getter]
    fn target_bw(&self) -> Vec<f64> {
        self.state.dests.iter().map(|d| d.target_bw).collect()
    }

    #[getter]
    fn modes(&self) -> Vec<String> {
        self.state.dests.iter().map(|d| d.mode.to_string()).collect()
    }
}

/// Flow-level WAN simulator.
#[pyclass(name = "World")]
struct PyWorld {
    inner: SimWorld,
}

fn preset(name: &str) -> PyResult<Topology> {
    match name {
        "aws8" => Ok(Topology::aws8()),
        "near_near_far" => Ok(Topology::near_near_far()),
        other => Err(PyValueError::new_err(format!("unknown preset {other:?}"))),
    }
}

#[pymethods]
impl PyWorld {
    #[staticmethod]
    #[pyo3(signature = (name, seed = 0, noise = None))]
    fn preset(name: &str, seed: u64, noise: Option<f64>) -> PyResult<Self> {
        let mut config = SimConfig::new(preset(name)?);
        config.seed = seed;
        if let Some(sigma) = noise {
            config.noise_sigma = sigma;
        }
        Ok(PyWorld {
            inner: SimWorld::new(config).map_err(to_py)?,
        })
    }

    /// Builds a world from a simulator configuration JSON document.
    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        let config: SimConfig = serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyWorld {
            inner: SimWorld::new(config).map_err(to_py)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.config().topology.names()
    }

    fn perturb_hosts(&mut self) {
        self.inner.perturb_hosts();
    }

    /// Runtime bandwidth with every pair transferring at once.
    fn measure_stable(&mut self) -> Vec<Vec<f64>> {
        self.inner.measure_stable().values().rows()
    }

    /// Feature row of a one-second probe from `src` to `dst`.
    fn snapshot_features(&mut self, src: usize, dst: usize) -> PyResult<Vec<f64>> {
        Ok(self.inner.measure_snapshot(src, dst).map_err(to_py)?.to_array().to_vec())
    }

    /// Best min-flow over all connection matrices and the planner's throttled min-flow.
    #[pyo3(signature = (max_parallel = 4, gap_mbps = 100.0))]
    fn oracle(&mut self, max_parallel: u32, gap_mbps: f64) -> PyResult<(f64, f64)> {
        let n = self.inner.n();
        let bw = self.inner.measure_stable();
        let rel = relations::infer_dc_relations(&bw, gap(gap_mbps)?).map_err(to_py)?;
        let plan = planner::build_plan(&bw, &rel, max_parallel, &SkewWeights::uniform(n), &RefactorVector::uniform(n))
            .map_err(to_py)?;
        let rates = netsim::throttled_allocation(&self.inner, &plan.max_cons).map_err(to_py)?;
        let planned = rates
            .off_diagonal_pairs()
            .map(|(i, j)| rates[(i, j)])
            .fold(f64::INFINITY, f64::min);
        let best = netsim::brute_force_best_plan(&self.inner, max_parallel).map_err(to_py)?;
        Ok((best.min_flow, planned))
    }

    /// Runs agents for `epochs` epochs and returns the summary as JSON.
    #[pyo3(signature = (strategy = "heterogeneous", epochs = 50, error_fraction = 0.0, seed = 0))]
    fn simulate(&mut self, strategy: &str, epochs: usize, error_fraction: f64, seed: u64) -> PyResult<String> {
        let strategy = match strategy {
            "heterogeneous" => Strategy::Heterogeneous,
            "uniform" => Strategy::Uniform,
            "single" => Strategy::Single,
            other => return Err(PyValueError::new_err(format!("unknown strategy {other:?}"))),
        };
        let opts = SimulationOptions {
            strategy,
            epochs,
            error_fraction,
            seed,
            ..Default::default()
        };
        let result = netsim::simulate(&mut self.inner, &opts).map_err(to_py)?;
        serde_json::to_string(&result.summary).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

/// Simulated campaign over a preset pool: feature rows, targets and the
/// static-independent baseline of every row.
#[pyfunction]
#[pyo3(signature = (preset_name, n_samples, sizes, seed = 0))]
#[allow(clippy::type_complexity)]
fn generate_dataset(
    preset_name: &str,
    n_samples: usize,
    sizes: Vec<usize>,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    let config = SimConfig::new(preset(preset_name)?);
    let records = netsim::generate_dataset(&config, n_samples, &sizes, seed).map_err(to_py)?;
    let x = records.iter().map(|r| r.row.sample.features.to_array().to_vec()).collect();
    let y = records.iter().map(|r| r.row.sample.target).collect();
    let baseline = records.iter().map(|r| r.independent_bw).collect();
    Ok((x, y, baseline))
}

fn feature_vector(row: &[f64]) -> PyResult<FeatureVector> {
    if row.len() != N_FEATURES {
        return Err(PyValueError::new_err(format!("expected {N_FEATURES} features, got {}", row.len())));
    }
    let f = FeatureVector {
        n_dcs: row[0] as u32,
        snapshot_bw: row[1],
        mem_util_dst: row[2],
        cpu_load_src: row[3],
        cpu_load_dst: row[4],
        retransmissions: row[5] as u32,
        distance: row[6],
    };
    f.validate().map_err(to_py)?;
    Ok(f)
}

/// Random-forest bandwidth predictor.
#[pyclass(name = "Forest", frozen)]
struct PyForest {
    inner: ForestModel,
}

#[pymethods]
impl PyForest {
    /// Rows follow the `FeatureVector` order: n_dcs, snapshot_bw, mem_util_dst,
    /// cpu_load_src, cpu_load_dst, retransmissions, distance.
    #[staticmethod]
    #[pyo3(signature = (x, y, n_trees = 100, seed = 0))]
    fn train(x: Vec<Vec<f64>>, y: Vec<f64>, n_trees: usize, seed: u64) -> PyResult<Self> {
        if x.len() != y.len() {
            return Err(PyValueError::new_err(format!("{} rows but {} targets", x.len(), y.len())));
        }
        let samples = x
            .iter()
            .zip(y)
            .map(|(row, target)| {
                Ok(TrainingSample {
                    features: feature_vector(row)?,
                    target,
                })
            })
            .collect::<PyResult<Vec<_>>>()?;
        Ok(PyForest {
            inner: predictor::train(&samples, n_trees, seed).map_err(to_py)?,
        })
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        x.iter()
            .map(|row| self.inner.predict(&feature_vector(row)?).map_err(to_py))
            .collect()
    }

    #[getter]
    fn training_mae(&self) -> f64 {
        self.inner.training_mae
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyForest { inner })
    }
}

#[pyfunction]
fn network_cost(mbps: f64, seconds: f64, usd_per_gb: f64) -> f64 {
    costmodel::network_cost(mbps, seconds, usd_per_gb)
}

/// Annual cost `O * N * (x * y + z)`.
#[pyfunction]
fn runtime_monitoring_cost(o: f64, n: f64, x: f64, y: f64, z: f64) -> PyResult<f64> {
    let p = CostParams {
        occurrences_per_year: o,
        nodes: n,
        compute_cost_per_second: x,
        monitoring_duration: y,
        network_cost_per_event: z,
    };
    costmodel::runtime_monitoring_cost(&p).map_err(to_py)
}

#[pyfunction]
fn savings_ratio(monitoring: f64, prediction: f64) -> f64 {
    costmodel::savings_ratio(monitoring, prediction)
}

#[pymodule]
fn wanify_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConnectionPlan>()?;
    m.add_class::<PyAgent>()?;
    m.add_class::<PyWorld>()?;
    m.add_class::<PyForest>()?;
    m.add_function(wrap_pyfunction!(unique_filtered_levels, m)?)?;
    m.add_function(wrap_pyfunction!(infer_dc_relations, m)?)?;
    m.add_function(wrap_pyfunction!(build_plan, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(network_cost, m)?)?;
    m.add_function(wrap_pyfunction!(runtime_monitoring_cost, m)?)?;
    m.add_function(wrap_pyfunction!(savings_ratio, m)?)?;
    m.add("SIGNIFICANT_DELTA_MBPS", wanify::SIGNIFICANT_DELTA_MBPS)?;
    Ok(())
}
