//! Data centers, their VMs, and geographic distance between them.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{BandwidthMatrix, SquareMatrix};
use crate::planner::ConnectionPlan;

/// Mean Earth radius in statute miles.
pub const EARTH_RADIUS_MILES: f64 = 3958.8;

/// A latitude/longitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let p = GeoPoint { lat, lon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(Error::validation(format!("latitude {} outside [-90, 90]", self.lat)));
        }
        if !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::validation(format!("longitude {} outside [-180, 180]", self.lon)));
        }
        Ok(())
    }
}

/// Great-circle distance in miles between two points.
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    // clamp guards against h drifting just above 1 for antipodal points
    Ok(2.0 * EARTH_RADIUS_MILES * h.sqrt().min(1.0).asin())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DcId(pub usize);

/// One data center record as stored in a topology file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataCenter {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub vm_count: usize,
}

impl DataCenter {
    pub fn new(name: impl Into<String>, lat: f64, lon: f64, vm_count: usize) -> Self {
        DataCenter {
            name: name.into(),
            lat,
            lon,
            vm_count,
        }
    }

    pub fn location(&self) -> GeoPoint {
        GeoPoint {
            lat: self.lat,
            lon: self.lon,
        }
    }
}

/// The set of participating DCs plus the per-pair parallel connection cap `max_parallel`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub dcs: Vec<DataCenter>,
    pub max_parallel: u32,
}

impl Topology {
    pub fn new(dcs: Vec<DataCenter>, max_parallel: u32) -> Result<Self> {
        let t = Topology { dcs, max_parallel };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dcs.len() < 2 {
            return Err(Error::validation(format!(
                "a topology needs at least 2 DCs, got {}",
                self.dcs.len()
            )));
        }
        if self.max_parallel < 1 {
            return Err(Error::validation("max_parallel must be at least 1"));
        }
        let mut names = HashSet::new();
        for dc in &self.dcs {
            dc.location().validate()?;
            if dc.vm_count == 0 {
                return Err(Error::validation(format!("DC {} has no VMs", dc.name)));
            }
            if !names.insert(dc.name.as_str()) {
                return Err(Error::validation(format!("duplicate DC name {}", dc.name)));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.dcs.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.dcs.iter().map(|d| d.name.clone()).collect()
    }

    pub fn id_of(&self, name: &str) -> Option<DcId> {
        self.dcs.iter().position(|d| d.name == name).map(DcId)
    }

    pub fn distance(&self, a: DcId, b: DcId) -> f64 {
        // coordinates were validated on construction
        haversine_distance(self.dcs[a.0].location(), self.dcs[b.0].location()).unwrap_or(0.0)
    }

    /// Pairwise distance matrix in miles.
    pub fn distance_matrix(&self) -> SquareMatrix<f64> {
        SquareMatrix::from_fn(self.n(), |i, j| self.distance(DcId(i), DcId(j)))
    }

    /// Keeps only the listed DCs, in the given order.
    pub fn subset(&self, ids: &[DcId]) -> Result<Topology> {
        let dcs = ids
            .iter()
            .map(|id| {
                self.dcs
                    .get(id.0)
                    .cloned()
                    .ok_or_else(|| Error::validation(format!("unknown DC index {}", id.0)))
            })
            .collect::<Result<Vec<_>>>()?;
        Topology::new(dcs, self.max_parallel)
    }

    /// Contiguous VM numbering: DC 0's VMs first, then DC 1's, and so on.
    pub fn association(&self) -> VmAssociation {
        let vm_to_dc = self
            .dcs
            .iter()
            .enumerate()
            .flat_map(|(i, dc)| std::iter::repeat_n(DcId(i), dc.vm_count))
            .collect();
        VmAssociation {
            n_dcs: self.n(),
            vm_to_dc,
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Topology> {
        let t: Topology = serde_json::from_reader(std::fs::File::open(path)?)?;
        t.validate()?;
        Ok(t)
    }

    /// The eight regions of the reference AWS deployment.
    pub fn aws8() -> Topology {
        let dcs = vec![
            DataCenter::new("us-east-1", 38.9, -77.0, 1),
            DataCenter::new("us-west-1", 37.4, -122.0, 1),
            DataCenter::new("ap-south-1", 19.1, 72.9, 1),
            DataCenter::new("ap-southeast-1", 1.35, 103.8, 1),
            DataCenter::new("ap-southeast-2", -33.9, 151.2, 1),
            DataCenter::new("ap-northeast-1", 35.7, 139.7, 1),
            DataCenter::new("eu-west-1", 53.3, -6.3, 1),
            DataCenter::new("sa-east-1", -23.5, -46.6, 1),
        ];
        Topology { dcs, max_parallel: 8 }
    }

    /// Two nearby DCs and one far away, the shape of the motivating 3-DC experiment.
    pub fn near_near_far() -> Topology {
        let dcs = vec![
            DataCenter::new("us-east-1", 38.9, -77.0, 1),
            DataCenter::new("us-east-2", 40.0, -83.0, 1),
            DataCenter::new("ap-southeast-1", 1.35, 103.8, 1),
        ];
        Topology { dcs, max_parallel: 8 }
    }
}

/// Maps every VM (0-based, contiguous) to the DC hosting it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmAssociation {
    pub n_dcs: usize,
    pub vm_to_dc: Vec<DcId>,
}

impl VmAssociation {
    pub fn new(n_dcs: usize, vm_to_dc: Vec<DcId>) -> Result<Self> {
        let a = VmAssociation { n_dcs, vm_to_dc };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.n_dcs];
        for (vm, dc) in self.vm_to_dc.iter().enumerate() {
            let slot = seen
                .get_mut(dc.0)
                .ok_or_else(|| Error::validation(format!("VM {vm} maps to unknown DC {}", dc.0)))?;
            *slot = true;
        }
        if let Some(dc) = seen.iter().position(|s| !s) {
            return Err(Error::validation(format!("DC {dc} has no VMs")));
        }
        Ok(())
    }

    pub fn n_vms(&self) -> usize {
        self.vm_to_dc.len()
    }

    pub fn vms_of(&self, dc: DcId) -> Vec<usize> {
        (0..self.vm_to_dc.len()).filter(|&v| self.vm_to_dc[v] == dc).collect()
    }

    /// Identity association: VM `i` lives in DC `i`.
    pub fn one_to_one(n: usize) -> Self {
        VmAssociation {
            n_dcs: n,
            vm_to_dc: (0..n).map(DcId).collect(),
        }
    }
}

/// Collapses a VM-level bandwidth matrix into a DC-level one by summing VM pairs.
///
/// Off-diagonal entries sum every `(u, v)` with `u` in DC `i` and `v` in DC `j`. The
/// diagonal sums intra-DC pairs `u != v`, or keeps the VM's own diagonal value when the
/// DC has a single VM.
pub fn associate_bandwidth(per_vm: &BandwidthMatrix, assoc: &VmAssociation) -> Result<BandwidthMatrix> {
    assoc.validate()?;
    if per_vm.n() != assoc.n_vms() {
        return Err(Error::DimensionMismatch {
            expected: assoc.n_vms(),
            actual: per_vm.n(),
        });
    }
    let groups: Vec<Vec<usize>> = (0..assoc.n_dcs).map(|d| assoc.vms_of(DcId(d))).collect();
    BandwidthMatrix::from_fn(assoc.n_dcs, |i, j| {
        if i == j && groups[i].len() == 1 {
            let u = groups[i][0];
            return per_vm.get(u, u);
        }
        let mut sum = 0.0;
        for &u in &groups[i] {
            for &v in &groups[j] {
                if u != v {
                    sum += per_vm.get(u, v);
                }
            }
        }
        sum
    })
}

/// A DC-level plan distributed over individual VM pairs.
///
/// Entries may be zero when a DC pair has fewer connections than VM pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmPlan {
    pub assoc: VmAssociation,
    pub min_cons: SquareMatrix<u32>,
    pub max_cons: SquareMatrix<u32>,
    pub min_bw: SquareMatrix<f64>,
    pub max_bw: SquareMatrix<f64>,
}

/// Splits `total` over `parts` slots: equal shares, remainder to the lowest slots first.
fn split_evenly(total: u32, parts: usize) -> Vec<u32> {
    let parts_u = parts as u32;
    let (base, rem) = (total / parts_u, total % parts_u);
    (0..parts_u).map(|k| base + u32::from(k < rem)).collect()
}

/// Chunks a DC-level plan proportionally across the VM pairs of each DC pair.
///
/// VM pairs of a DC pair are ordered by (source VM, destination VM). Bandwidth envelopes
/// follow the connection chunks so that each chunk keeps the pair's per-connection rate.
pub fn chunk_plan(plan: &ConnectionPlan, assoc: &VmAssociation) -> Result<VmPlan> {
    assoc.validate()?;
    if plan.n() != assoc.n_dcs {
        return Err(Error::DimensionMismatch {
            expected: assoc.n_dcs,
            actual: plan.n(),
        });
    }
    let v = assoc.n_vms();
    let mut min_cons = SquareMatrix::filled(v, 0u32);
    let mut max_cons = SquareMatrix::filled(v, 0u32);
    let mut min_bw = SquareMatrix::filled(v, 0.0);
    let mut max_bw = SquareMatrix::filled(v, 0.0);
    let groups: Vec<Vec<usize>> = (0..assoc.n_dcs).map(|d| assoc.vms_of(DcId(d))).collect();

    for i in 0..assoc.n_dcs {
        for j in 0..assoc.n_dcs {
            let pairs: Vec<(usize, usize)> = groups[i]
                .iter()
                .flat_map(|&u| groups[j].iter().map(move |&w| (u, w)))
                .collect();
            let mins = split_evenly(plan.min_cons[(i, j)], pairs.len());
            let maxs = split_evenly(plan.max_cons[(i, j)], pairs.len());
            let min_rate = plan.min_bw[(i, j)] / f64::from(plan.min_cons[(i, j)]);
            let max_rate = plan.max_bw[(i, j)] / f64::from(plan.max_cons[(i, j)]);
            for (k, &(u, w)) in pairs.iter().enumerate() {
                min_cons[(u, w)] = mins[k];
                max_cons[(u, w)] = maxs[k];
                min_bw[(u, w)] = min_rate * f64::from(mins[k]);
                max_bw[(u, w)] = max_rate * f64::from(maxs[k]);
            }
        }
    }
    Ok(VmPlan {
        assoc: assoc.clone(),
        min_cons,
        max_cons,
        min_bw,
        max_bw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn identical_points_are_zero_apart() {
        let p = pt(12.5, -45.0);
        assert_eq!(haversine_distance(p, p).unwrap(), 0.0);
    }

    #[test]
    fn washington_to_san_francisco_matches_oracle() {
        // Frozen from an independent great-circle script; the spherical law of cosines
        // gives the same value to 1e-9 miles.
        let d = haversine_distance(pt(38.9, -77.0), pt(37.4, -122.0)).unwrap();
        assert!((d - 2422.261083170013).abs() < 1e-6, "{d}");
    }

    #[test]
    fn antipodal_on_equator_is_half_circumference() {
        let d = haversine_distance(pt(0.0, 0.0), pt(0.0, 180.0)).unwrap();
        let half = std::f64::consts::PI * EARTH_RADIUS_MILES;
        assert!((d - half).abs() / half < 0.01);
        assert!((d - 12436.937).abs() < 0.01);
    }

    #[test]
    fn out_of_range_coordinates_rejected() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -180.5).is_err());
        let bad = GeoPoint { lat: 0.0, lon: 200.0 };
        assert!(haversine_distance(bad, pt(0.0, 0.0)).is_err());
    }

    #[test]
    fn topology_validation() {
        let one = vec![DataCenter::new("a", 0.0, 0.0, 1)];
        assert!(Topology::new(one, 8).is_err());
        let dup = vec![DataCenter::new("a", 0.0, 0.0, 1), DataCenter::new("a", 1.0, 1.0, 1)];
        assert!(Topology::new(dup, 8).is_err());
        let novm = vec![DataCenter::new("a", 0.0, 0.0, 0), DataCenter::new("b", 1.0, 1.0, 1)];
        assert!(Topology::new(novm, 8).is_err());
        let ok = vec![DataCenter::new("a", 0.0, 0.0, 1), DataCenter::new("b", 1.0, 1.0, 2)];
        assert!(Topology::new(ok.clone(), 0).is_err());
        let t = Topology::new(ok, 4).unwrap();
        assert_eq!(t.association().vm_to_dc, vec![DcId(0), DcId(1), DcId(1)]);
        Topology::aws8().validate().unwrap();
        Topology::near_near_far().validate().unwrap();
    }

    #[test]
    fn topology_json_schema() {
        let json = r#"{"dcs":[{"name":"a","lat":1.0,"lon":2.0,"vm_count":1},
                              {"name":"b","lat":-3.0,"lon":4.0,"vm_count":2}],"max_parallel":8}"#;
        let t: Topology = serde_json::from_str(json).unwrap();
        assert_eq!(t.n(), 2);
        assert_eq!(t.dcs[1].vm_count, 2);
        assert_eq!(t.id_of("b"), Some(DcId(1)));
    }

    #[test]
    fn one_to_one_association_is_identity() {
        let bw = BandwidthMatrix::from_rows(vec![
            vec![900.0, 300.0, 120.0],
            vec![310.0, 950.0, 140.0],
            vec![100.0, 130.0, 990.0],
        ])
        .unwrap();
        let out = associate_bandwidth(&bw, &VmAssociation::one_to_one(3)).unwrap();
        assert_eq!(out, bw);
    }

    #[test]
    fn two_vms_sum_toward_single_vm_dc() {
        // DC0 = {vm0, vm1}, DC1 = {vm2}; each DC0 VM has 300 Mbps to vm2.
        let bw = BandwidthMatrix::from_rows(vec![
            vec![1000.0, 800.0, 300.0],
            vec![800.0, 1000.0, 300.0],
            vec![250.0, 250.0, 1000.0],
        ])
        .unwrap();
        let assoc = VmAssociation::new(2, vec![DcId(0), DcId(0), DcId(1)]).unwrap();
        let out = associate_bandwidth(&bw, &assoc).unwrap();
        assert_eq!(out.get(0, 1), 600.0);
        assert_eq!(out.get(1, 0), 500.0);
        assert_eq!(out.get(0, 0), 1600.0);
        assert_eq!(out.get(1, 1), 1000.0);
    }

    #[test]
    fn association_rejects_unknown_dc_and_empty_dc() {
        assert!(VmAssociation::new(2, vec![DcId(0), DcId(2)]).is_err());
        assert!(VmAssociation::new(3, vec![DcId(0), DcId(1)]).is_err());
        let bw = BandwidthMatrix::from_rows(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let assoc = VmAssociation::one_to_one(3);
        assert!(associate_bandwidth(&bw, &assoc).is_err());
    }

    #[test]
    fn split_remainder_goes_to_lowest_index() {
        assert_eq!(split_evenly(8, 2), vec![4, 4]);
        assert_eq!(split_evenly(5, 2), vec![3, 2]);
        assert_eq!(split_evenly(1, 3), vec![1, 0, 0]);
    }
}
