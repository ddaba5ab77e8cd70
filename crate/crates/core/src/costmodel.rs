//! Annual cost of keeping bandwidth estimates fresh.
//!
//! Runtime monitoring costs `O * N * (x * y + z)` per year: `O` monitoring events, `N`
//! nodes, compute price `x` per instance-second for `y` seconds, plus the network cost `z`
//! of the probe traffic each instance sends.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Megabits per gigabyte (decimal units).
const MEGABITS_PER_GB: f64 = 8000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Monitoring events per year.
    pub occurrences_per_year: f64,
    pub nodes: f64,
    /// Compute price per instance-second.
    pub compute_cost_per_second: f64,
    /// Seconds per monitoring event.
    pub monitoring_duration: f64,
    /// Network cost per instance per event.
    pub network_cost_per_event: f64,
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("occurrences_per_year", self.occurrences_per_year),
            ("nodes", self.nodes),
            ("compute_cost_per_second", self.compute_cost_per_second),
            ("monitoring_duration", self.monitoring_duration),
            ("network_cost_per_event", self.network_cost_per_event),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Cost of moving `mbps` for `seconds` at `usd_per_gb`.
pub fn network_cost(mbps: f64, seconds: f64, usd_per_gb: f64) -> f64 {
    mbps * seconds / MEGABITS_PER_GB * usd_per_gb
}

pub fn runtime_monitoring_cost(p: &CostParams) -> Result<f64> {
    p.validate()?;
    Ok(p.occurrences_per_year
        * p.nodes
        * (p.compute_cost_per_second * p.monitoring_duration + p.network_cost_per_event))
}

/// One-off training cost plus `predictions_per_year` short snapshot probes.
///
/// The per-prediction parameters describe a snapshot: `monitoring_duration` is normally
/// 1 s and `network_cost_per_event` the cost of the snapshot's traffic.
pub fn prediction_approach_cost(training: f64, per_prediction: &CostParams, predictions_per_year: u64) -> Result<f64> {
    if !(training.is_finite() && training >= 0.0) {
        return Err(Error::validation(format!("training cost must be >= 0, got {training}")));
    }
    let p = CostParams {
        occurrences_per_year: predictions_per_year as f64,
        ..*per_prediction
    };
    Ok(training + runtime_monitoring_cost(&p)?)
}

/// Savings of the prediction approach relative to runtime monitoring, as a fraction.
pub fn savings_ratio(monitoring: f64, prediction: f64) -> f64 {
    if monitoring <= 0.0 {
        return 0.0;
    }
    1.0 - prediction / monitoring
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub scenario: String,
    #[serde(rename = "O")]
    pub occurrences: f64,
    #[serde(rename = "N")]
    pub nodes: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub annual_cost: f64,
}

impl CostRow {
    pub fn new(scenario: impl Into<String>, p: &CostParams, annual_cost: f64) -> Self {
        CostRow {
            scenario: scenario.into(),
            occurrences: p.occurrences_per_year,
            nodes: p.nodes,
            x: p.compute_cost_per_second,
            y: p.monitoring_duration,
            z: p.network_cost_per_event,
            annual_cost,
        }
    }
}

pub fn write_report<W: Write>(rows: &[CostRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Half-hourly 20-second probes at 200 Mbps on t3.nano instances.
    fn aws(nodes: f64) -> CostParams {
        CostParams {
            occurrences_per_year: 17520.0,
            nodes,
            compute_cost_per_second: 0.0052 / 3600.0,
            monitoring_duration: 20.0,
            network_cost_per_event: network_cost(200.0, 20.0, 0.02),
        }
    }

    #[test]
    fn probe_traffic_cost() {
        // 200 Mbps for 20 s is 4000 Mb = 0.5 GB
        assert!((network_cost(200.0, 20.0, 0.02) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn no_monitoring_costs_nothing() {
        let p = CostParams {
            occurrences_per_year: 0.0,
            ..aws(4.0)
        };
        assert_eq!(runtime_monitoring_cost(&p).unwrap(), 0.0);
    }

    #[test]
    fn four_dc_reference_cost() {
        let c = runtime_monitoring_cost(&aws(4.0)).unwrap();
        let oracle = 17520.0 * 4.0 * (0.0052 / 3600.0 * 20.0 + 0.5 * 0.02);
        assert!((c - oracle).abs() < 1e-9);
        assert!((c - 703.0).abs() / 703.0 < 0.05, "{c}");
    }

    #[test]
    fn linear_in_nodes() {
        let c4 = runtime_monitoring_cost(&aws(4.0)).unwrap();
        let c8 = runtime_monitoring_cost(&aws(8.0)).unwrap();
        assert_eq!(c8, 2.0 * c4);
    }

    #[test]
    fn negative_params_rejected() {
        let p = CostParams {
            nodes: -1.0,
            ..aws(4.0)
        };
        assert!(runtime_monitoring_cost(&p).is_err());
        assert!(prediction_approach_cost(-1.0, &aws(4.0), 1).is_err());
    }

    #[test]
    fn prediction_cost_components() {
        let snap = CostParams {
            monitoring_duration: 1.0,
            network_cost_per_event: network_cost(200.0, 1.0, 0.02),
            ..aws(4.0)
        };
        assert_eq!(prediction_approach_cost(69.0, &snap, 0).unwrap(), 69.0);
        let one = prediction_approach_cost(0.0, &snap, 17520).unwrap();
        let two = prediction_approach_cost(0.0, &snap, 35040).unwrap();
        assert!((two - 2.0 * one).abs() < 1e-9);
    }

    #[test]
    fn report_layout() {
        let p = aws(4.0);
        let mut buf = Vec::new();
        write_report(&[CostRow::new("runtime", &p, 1.5)], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("scenario,O,N,x,y,z,annual_cost\nruntime,17520.0,4.0,"));
    }
}
