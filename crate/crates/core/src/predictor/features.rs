use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of model inputs per DC pair.
pub const N_FEATURES: usize = 7;

/// Inputs describing one ordered DC pair at prediction time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub n_dcs: u32,
    pub snapshot_bw: f64,
    pub mem_util_dst: f64,
    pub cpu_load_src: f64,
    pub cpu_load_dst: f64,
    pub retransmissions: u32,
    pub distance: f64,
}

impl FeatureVector {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::validation(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        let fraction = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::validation(format!("{name} must be in [0, 1], got {v}")))
            }
        };
        nonneg("snapshot_bw", self.snapshot_bw)?;
        nonneg("distance", self.distance)?;
        fraction("mem_util_dst", self.mem_util_dst)?;
        fraction("cpu_load_src", self.cpu_load_src)?;
        fraction("cpu_load_dst", self.cpu_load_dst)
    }

    /// Model input order: n_dcs, snapshot_bw, mem_util_dst, cpu_src, cpu_dst, retransmissions, distance.
    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [
            f64::from(self.n_dcs),
            self.snapshot_bw,
            self.mem_util_dst,
            self.cpu_load_src,
            self.cpu_load_dst,
            f64::from(self.retransmissions),
            self.distance,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub features: FeatureVector,
    /// Stable runtime bandwidth in Mbps.
    pub target: f64,
}

impl TrainingSample {
    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        if !(self.target.is_finite() && self.target >= 0.0) {
            return Err(Error::validation(format!("target must be >= 0, got {}", self.target)));
        }
        Ok(())
    }
}

/// One dataset line: a training sample tagged with the measurement round and pair it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetRow {
    pub sample_id: usize,
    pub src: usize,
    pub dst: usize,
    pub sample: TrainingSample,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    sample_id: usize,
    n_dcs: u32,
    src: usize,
    dst: usize,
    snapshot_bw: f64,
    mem_util_dst: f64,
    cpu_src: f64,
    cpu_dst: f64,
    retrans: u32,
    distance_miles: f64,
    target_bw: f64,
}

const HEADER: [&str; 11] = [
    "sample_id",
    "n_dcs",
    "src",
    "dst",
    "snapshot_bw",
    "mem_util_dst",
    "cpu_src",
    "cpu_dst",
    "retrans",
    "distance_miles",
    "target_bw",
];

pub fn write_dataset<W: Write>(rows: &[DatasetRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    // written by hand so an empty dataset still gets a header
    w.write_record(HEADER)?;
    for r in rows {
        let f = &r.sample.features;
        w.serialize(CsvRow {
            sample_id: r.sample_id,
            n_dcs: f.n_dcs,
            src: r.src,
            dst: r.dst,
            snapshot_bw: f.snapshot_bw,
            mem_util_dst: f.mem_util_dst,
            cpu_src: f.cpu_load_src,
            cpu_dst: f.cpu_load_dst,
            retrans: f.retransmissions,
            distance_miles: f.distance,
            target_bw: r.sample.target,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(input: R) -> Result<Vec<DatasetRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        return Err(Error::validation(format!(
            "dataset header {header:?} does not match expected {HEADER:?}"
        )));
    }
    let mut rows = Vec::new();
    for rec in r.deserialize::<CsvRow>() {
        let c = rec?;
        let row = DatasetRow {
            sample_id: c.sample_id,
            src: c.src,
            dst: c.dst,
            sample: TrainingSample {
                features: FeatureVector {
                    n_dcs: c.n_dcs,
                    snapshot_bw: c.snapshot_bw,
                    mem_util_dst: c.mem_util_dst,
                    cpu_load_src: c.cpu_src,
                    cpu_load_dst: c.cpu_dst,
                    retransmissions: c.retrans,
                    distance: c.distance_miles,
                },
                target: c.target_bw,
            },
        };
        row.sample.validate()?;
        rows.push(row);
    }
    Ok(rows)
}
