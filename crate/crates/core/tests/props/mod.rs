//! Randomized invariant checks shared by the property tests and the acceptance run.
//!
//! Each suite runs a fixed-seed proptest runner and returns the number of cases checked.

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestError, TestRng, TestRunner};

use wanify::agent::{aimd_step, apply_throttle, init_agent, EpochObservation, MIN_PENDING_BYTES};
use wanify::netsim::{Flow, FlowSet, NicCapacity, SimConfig, SimWorld};
use wanify::planner::{build_plan, expand_skew, RefactorVector, SkewWeights};
use wanify::relations::{infer_dc_relations, unique_filtered_levels, SignificanceGap};
use wanify::topology::{DataCenter, Topology};
use wanify::{BandwidthMatrix, SquareMatrix};

pub const CASES: u32 = 256;

pub type SuiteResult = Result<u32, String>;

fn runner(seed: u8) -> TestRunner {
    let config = Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]))
}

fn run<S: Strategy>(seed: u8, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> SuiteResult
where
    S::Value: std::fmt::Debug,
{
    match runner(seed).run(&strategy, test) {
        Ok(()) => Ok(CASES),
        Err(TestError::Fail(reason, value)) => Err(format!("{reason} for input {value:?}")),
        Err(TestError::Abort(reason)) => Err(format!("aborted: {reason}")),
    }
}

fn bw_matrix(max_n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2..=max_n).prop_flat_map(|n| prop::collection::vec(prop::collection::vec(0u32..4000, n), n))
        .prop_map(|rows| rows.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect())
}

// ---------------------------------------------------------------- relations

pub fn relations_monotone() -> SuiteResult {
    run(1, (bw_matrix(6), 1u32..400), |(rows, gap)| {
        let bw = BandwidthMatrix::from_rows(rows).unwrap();
        let gap = SignificanceGap::new(f64::from(gap)).unwrap();
        let rel = infer_dc_relations(&bw, gap).unwrap();
        let levels = unique_filtered_levels(&bw, gap);
        let entries: Vec<(f64, u32)> = bw.values().as_slice().iter().copied().zip(rel.values().as_slice().iter().copied()).collect();
        for &(va, ra) in &entries {
            prop_assert!(ra >= 1 && ra as usize <= levels.len());
            for &(vb, rb) in &entries {
                if va <= vb {
                    prop_assert!(ra >= rb, "bw {} -> rel {}, bw {} -> rel {}", va, ra, vb, rb);
                }
            }
        }
        for w in levels.windows(2) {
            prop_assert!(w[1] - w[0] >= gap.mbps());
        }
        let max = entries.iter().map(|e| e.0).fold(f64::MIN, f64::max);
        let min = entries.iter().map(|e| e.0).fold(f64::MAX, f64::min);
        for &(v, r) in &entries {
            if v == max {
                prop_assert_eq!(r, 1);
            }
            if v == min {
                prop_assert_eq!(r as usize, levels.len());
            }
        }
        Ok(())
    })
}

pub fn relations_scale_invariant() -> SuiteResult {
    // powers of two scale floats exactly, so level gaps compare identically
    run(2, (bw_matrix(6), 1u32..400, prop::sample::select(vec![0.25, 0.5, 2.0, 4.0, 8.0])), |(rows, gap, k)| {
        let bw = BandwidthMatrix::from_rows(rows.clone()).unwrap();
        let scaled = BandwidthMatrix::from_rows(rows.iter().map(|r| r.iter().map(|v| v * k).collect()).collect()).unwrap();
        let a = infer_dc_relations(&bw, SignificanceGap::new(f64::from(gap)).unwrap()).unwrap();
        let b = infer_dc_relations(&scaled, SignificanceGap::new(f64::from(gap) * k).unwrap()).unwrap();
        prop_assert_eq!(a, b);
        Ok(())
    })
}

// ---------------------------------------------------------------- planner

fn plan_inputs() -> impl Strategy<Value = (Vec<Vec<f64>>, u32, u32, Vec<f64>, Vec<f64>)> {
    bw_matrix(7).prop_flat_map(|rows| {
        let n = rows.len();
        (
            Just(rows),
            1u32..300,
            1u32..=12,
            prop::collection::vec(0.2f64..5.0, n),
            prop::collection::vec(0.5f64..2.0, n * n),
        )
    })
}

pub fn planner_envelope() -> SuiteResult {
    run(3, plan_inputs(), |(rows, gap, m, skew, refactor)| {
        let n = rows.len();
        let bw = BandwidthMatrix::from_rows(rows).unwrap();
        let rel = infer_dc_relations(&bw, SignificanceGap::new(f64::from(gap)).unwrap()).unwrap();
        let w = expand_skew(&skew).unwrap();
        let r = RefactorVector::new(SquareMatrix::from_rows(refactor.chunks(n).map(<[f64]>::to_vec).collect()).unwrap()).unwrap();
        let plan = build_plan(&bw, &rel, m, &w, &r).unwrap();
        prop_assert!(plan.validate().is_ok());
        for i in 0..n {
            prop_assert_eq!(plan.max_cons[(i, i)], 1);
            for j in 0..n {
                let (lo, hi) = (plan.min_cons[(i, j)], plan.max_cons[(i, j)]);
                prop_assert!(1 <= lo && lo <= hi && hi <= m);
                prop_assert_eq!(plan.min_bw[(i, j)], bw.get(i, j) * f64::from(lo) * r.get(i, j));
                prop_assert_eq!(plan.max_bw[(i, j)], bw.get(i, j) * f64::from(hi) * r.get(i, j));
            }
        }
        Ok(())
    })
}

pub fn planner_identities() -> SuiteResult {
    run(4, (bw_matrix(7), 1u32..300, 1u32..=12), |(rows, gap, m)| {
        let n = rows.len();
        let bw = BandwidthMatrix::from_rows(rows.clone()).unwrap();
        let gap = f64::from(gap);
        let rel = infer_dc_relations(&bw, SignificanceGap::new(gap).unwrap()).unwrap();
        let plan = build_plan(&bw, &rel, m, &SkewWeights::uniform(n), &RefactorVector::uniform(n)).unwrap();
        // doubling bandwidth (and the gap) keeps connections and doubles the envelope
        let bw2 = BandwidthMatrix::from_rows(rows.iter().map(|r| r.iter().map(|v| v * 2.0).collect()).collect()).unwrap();
        let rel2 = infer_dc_relations(&bw2, SignificanceGap::new(gap * 2.0).unwrap()).unwrap();
        let plan2 = build_plan(&bw2, &rel2, m, &SkewWeights::uniform(n), &RefactorVector::uniform(n)).unwrap();
        prop_assert_eq!(&plan.min_cons, &plan2.min_cons);
        prop_assert_eq!(&plan.max_cons, &plan2.max_cons);
        for i in 0..n {
            let row_max = (0..n).map(|j| rel.get(i, j)).max().unwrap();
            for j in 0..n {
                prop_assert_eq!(plan2.max_bw[(i, j)], 2.0 * plan.max_bw[(i, j)]);
                if i == j {
                    continue;
                }
                // the most distant peer of a row gets the whole budget
                if rel.get(i, j) == row_max {
                    prop_assert_eq!(plan.max_cons[(i, j)], m);
                }
                for k in (0..n).filter(|&k| k != i) {
                    if rel.get(i, j) <= rel.get(i, k) {
                        prop_assert!(plan.max_cons[(i, j)] <= plan.max_cons[(i, k)]);
                    }
                }
            }
        }
        Ok(())
    })
}

// ---------------------------------------------------------------- agent

type AgentCase = (Vec<Vec<f64>>, u32, Vec<Vec<(u32, u64)>>, Vec<f64>);

fn agent_case() -> impl Strategy<Value = AgentCase> {
    bw_matrix(5).prop_flat_map(|rows| {
        let n = rows.len();
        (
            Just(rows),
            1u32..=10,
            prop::collection::vec(prop::collection::vec((0u32..30_000, 0u64..4_000_000), n), 1..40),
            prop::collection::vec(0.0f64..20_000.0, n),
        )
    })
}

fn agents_for(rows: &[Vec<f64>], m: u32) -> Vec<wanify::agent::AgentState> {
    let n = rows.len();
    let bw = BandwidthMatrix::from_rows(rows.to_vec()).unwrap();
    let rel = infer_dc_relations(&bw, SignificanceGap::default()).unwrap();
    let plan = build_plan(&bw, &rel, m, &SkewWeights::uniform(n), &RefactorVector::uniform(n)).unwrap();
    (0..n).map(|i| init_agent(&plan, i).unwrap()).collect()
}

pub fn agent_envelope() -> SuiteResult {
    run(5, agent_case(), |(rows, m, steps, caps)| {
        for mut a in agents_for(&rows, m) {
            let with_caps = a.src % 2 == 1;
            if with_caps {
                let c: Vec<Option<f64>> = caps.iter().map(|&c| Some(c)).collect();
                apply_throttle(&mut a, &c).unwrap();
            }
            for step in &steps {
                let obs = EpochObservation {
                    monitored_bw: step.iter().map(|s| f64::from(s.0) / 10.0).collect(),
                    pending_bytes: step.iter().map(|s| s.1).collect(),
                };
                a = aimd_step(&a, &obs, 100.0).unwrap();
                for d in &a.dests {
                    prop_assert!(d.min_cons <= d.target_cons && d.target_cons <= d.max_cons);
                    prop_assert!(d.target_bw <= d.max_bw);
                    match d.throttle_cap {
                        Some(cap) => prop_assert!(d.target_bw <= cap),
                        // unit_bw is a quotient, so allow rounding in the last place
                        None => prop_assert!(d.target_bw >= d.min_bw * (1.0 - 1e-12)),
                    }
                }
            }
        }
        Ok(())
    })
}

pub fn agent_gating() -> SuiteResult {
    run(6, agent_case(), |(rows, m, steps, _)| {
        for mut a in agents_for(&rows, m) {
            for step in &steps {
                let obs = EpochObservation {
                    monitored_bw: step.iter().map(|s| f64::from(s.0) / 10.0).collect(),
                    pending_bytes: step.iter().map(|s| s.1).collect(),
                };
                let next = aimd_step(&a, &obs, 100.0).unwrap();
                for (j, (before, after)) in a.dests.iter().zip(&next.dests).enumerate() {
                    if obs.pending_bytes[j] < MIN_PENDING_BYTES {
                        prop_assert_eq!(before, after);
                    }
                }
                a = next;
            }
        }
        Ok(())
    })
}

pub fn agent_recovers() -> SuiteResult {
    run(7, (bw_matrix(5), 1u32..=10), |(rows, m)| {
        let big = 10 * MIN_PENDING_BYTES;
        for start in agents_for(&rows, m) {
            let n = start.dests.len();
            let low = EpochObservation {
                monitored_bw: vec![0.0; n],
                pending_bytes: vec![big; n],
            };
            let mut a = aimd_step(&start, &low, 100.0).unwrap();
            for _ in 0..=m {
                let on_target = EpochObservation {
                    monitored_bw: a.dests.iter().map(|d| d.target_bw).collect(),
                    pending_bytes: vec![big; n],
                };
                a = aimd_step(&a, &on_target, 100.0).unwrap();
            }
            for (d, s) in a.dests.iter().zip(&start.dests) {
                prop_assert_eq!(d.target_cons, s.target_cons);
                prop_assert_eq!(d.target_bw, s.target_bw);
            }
        }
        Ok(())
    })
}

// ---------------------------------------------------------------- netsim

#[derive(Debug, Clone)]
pub struct NetCase {
    coords: Vec<(f64, f64)>,
    nic: Vec<f64>,
    flows: Vec<(usize, usize, u32, Option<f64>)>,
    fairness: f64,
    sigma: f64,
    seed: u64,
}

fn net_case() -> impl Strategy<Value = NetCase> {
    (2usize..=5)
        .prop_flat_map(|n| {
            (
                prop::collection::vec((-60.0f64..60.0, -180.0f64..180.0), n),
                prop::collection::vec(200.0f64..6000.0, n),
                prop::collection::vec((0..n, 0..n, 1u32..=24, prop::option::of(0.0f64..3000.0)), 1..(n * n)),
                prop::sample::select(vec![0.0, 0.5, 1.0]),
                prop::sample::select(vec![0.0, 0.0, 0.3]),
                any::<u64>(),
            )
        })
        .prop_map(|(coords, nic, raw, fairness, sigma, seed)| {
            let mut seen = std::collections::BTreeSet::new();
            let mut flows: Vec<_> = raw
                .iter()
                .copied()
                .filter(|&(s, d, _, _)| s != d && seen.insert((s, d)))
                .collect();
            if flows.is_empty() {
                let (_, _, c, demand) = raw[0];
                flows.push((0, 1, c, demand));
            }
            NetCase {
                coords,
                nic,
                flows,
                fairness,
                sigma,
                seed,
            }
        })
}

fn build_world(c: &NetCase) -> (SimWorld, FlowSet) {
    let dcs = c
        .coords
        .iter()
        .enumerate()
        .map(|(k, &(lat, lon))| DataCenter::new(format!("dc{k}"), lat, lon, 1))
        .collect();
    let mut cfg = SimConfig::new(Topology::new(dcs, 8).unwrap());
    cfg.nic_capacity = NicCapacity::PerDc(c.nic.clone());
    cfg.fairness_exponent = c.fairness;
    cfg.noise_sigma = c.sigma;
    cfg.seed = c.seed;
    let n = c.coords.len();
    let flows = c
        .flows
        .iter()
        .map(|&(src, dst, connections, demand)| Flow {
            src,
            dst,
            connections,
            demand,
        })
        .collect();
    (SimWorld::new(cfg).unwrap(), FlowSet::new(n, flows).unwrap())
}

const TOL: f64 = 1e-6;

pub fn netsim_conservation() -> SuiteResult {
    run(8, net_case(), |case| {
        let (mut world, flows) = build_world(&case);
        let n = world.n();
        let a = world.allocate(&flows);
        for d in 0..n {
            let out: f64 = a.flows.iter().zip(&a.rates).filter(|(f, _)| f.src == d).map(|(_, r)| r).sum();
            let inn: f64 = a.flows.iter().zip(&a.rates).filter(|(f, _)| f.dst == d).map(|(_, r)| r).sum();
            prop_assert!(out <= world.egress_budget(d) + TOL);
            prop_assert!(inn <= world.ingress_budget(d) + TOL);
        }
        for (f, &r) in a.flows.iter().zip(&a.rates) {
            prop_assert!(r >= 0.0);
            if let Some(dem) = f.demand {
                prop_assert!(r <= dem + TOL);
            }
        }
        Ok(())
    })
}

/// Every flow below its own ceiling is blocked by a saturated DC budget on which no other
/// flow has a larger rate per unit weight. Equal weights reduce this to plain max-min.
pub fn netsim_max_min() -> SuiteResult {
    run(9, net_case(), |mut case| {
        case.sigma = 0.0;
        let (world, flows) = build_world(&case);
        let a = world.allocate_quiet(&flows);
        let n = world.n();
        let mut out = vec![0.0; n];
        let mut inn = vec![0.0; n];
        for (f, r) in a.flows.iter().zip(&a.rates) {
            out[f.src] += r;
            inn[f.dst] += r;
        }
        let share = |k: usize| a.rates[k] / world.flow_weight(&a.flows[k]);
        for (k, f) in a.flows.iter().enumerate() {
            if a.rates[k] >= world.flow_ceiling(f) - TOL {
                continue;
            }
            let egress_ok = out[f.src] >= world.egress_budget(f.src) - TOL
                && (0..a.flows.len()).filter(|&l| a.flows[l].src == f.src).all(|l| share(l) <= share(k) + TOL);
            let ingress_ok = inn[f.dst] >= world.ingress_budget(f.dst) - TOL
                && (0..a.flows.len()).filter(|&l| a.flows[l].dst == f.dst).all(|l| share(l) <= share(k) + TOL);
            prop_assert!(egress_ok || ingress_ok, "flow {:?} rate {} not bottlenecked", f, a.rates[k]);
        }
        Ok(())
    })
}

pub fn netsim_parallelism() -> SuiteResult {
    run(10, net_case(), |mut case| {
        case.sigma = 0.0;
        case.flows.truncate(1);
        let (world, flows) = build_world(&case);
        let f = flows.flows()[0];
        let knee = world.config().congestion_knee;
        let rate = |c: u32| {
            let single = FlowSet::new(world.n(), vec![Flow { connections: c, ..f }]).unwrap();
            world.allocate_quiet(&single).rates[0]
        };
        let rates: Vec<f64> = (1..=24).map(rate).collect();
        for c in 1..24u32 {
            let (now, next) = (rates[c as usize - 1], rates[c as usize]);
            if c < knee {
                prop_assert!(next >= now - TOL);
            } else {
                prop_assert!(next <= now + TOL);
            }
        }
        Ok(())
    })
}

pub fn netsim_determinism() -> SuiteResult {
    run(11, net_case(), |case| {
        let (mut w1, flows) = build_world(&case);
        let (mut w2, _) = build_world(&case);
        w1.perturb_hosts();
        w2.perturb_hosts();
        for _ in 0..3 {
            prop_assert_eq!(w1.allocate(&flows), w2.allocate(&flows));
        }
        prop_assert_eq!(w1.host_stats(), w2.host_stats());
        Ok(())
    })
}

pub fn netsim_distance_monotone() -> SuiteResult {
    run(12, (0.0f64..15_000.0, 0.0f64..15_000.0), |(a, b)| {
        let cfg = SimConfig::new(Topology::aws8());
        let (near, far) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(cfg.base_link_bw(near) >= cfg.base_link_bw(far));
        Ok(())
    })
}

/// All suites grouped by module.
pub type Suite = (&'static str, fn() -> SuiteResult);

pub fn all_suites() -> Vec<Suite> {
    vec![
        ("relations monotonicity", relations_monotone as fn() -> SuiteResult),
        ("relations scale invariance", relations_scale_invariant),
        ("planner envelope", planner_envelope),
        ("planner identities", planner_identities),
        ("agent envelope containment", agent_envelope),
        ("agent gating", agent_gating),
        ("agent decrease then recover", agent_recovers),
        ("netsim conservation", netsim_conservation),
        ("netsim max-min", netsim_max_min),
        ("netsim parallelism knee", netsim_parallelism),
        ("netsim determinism", netsim_determinism),
        ("netsim distance monotonicity", netsim_distance_monotone),
    ]
}
