//! Runtime WAN bandwidth gauging and balancing for geo-distributed data analytics.
//!
//! The crate is organised around the pipeline a cluster goes through:
//!
//! * [`topology`] describes data centers, their VMs and the distances between them.
//! * [`predictor`] turns short snapshot probes into predicted runtime bandwidth with a
//!   random-forest regressor.
//! * [`relations`] infers closeness indices between DC pairs from a bandwidth matrix.
//! * [`planner`] converts closeness and predicted bandwidth into a heterogeneous
//!   min/max connection envelope.
//! * [`agent`] fine-tunes connections and target bandwidth per source DC at runtime
//!   (AIMD plus throttling of bandwidth-rich links).
//! * [`netsim`] is a deterministic flow-level WAN simulator used to generate training
//!   data, drive agents and act as a brute-force oracle.
//! * [`costmodel`] accounts for the cost of runtime bandwidth monitoring.

pub mod agent;
pub mod costmodel;
pub mod error;
pub mod matrix;
pub mod netsim;
pub mod planner;
pub mod predictor;
pub mod relations;
pub mod topology;

pub use error::{Error, Result};
pub use matrix::{BandwidthMatrix, SquareMatrix};

/// Bandwidth gap (Mbps) above which two measurements are considered materially different.
pub const SIGNIFICANT_DELTA_MBPS: f64 = 100.0;
