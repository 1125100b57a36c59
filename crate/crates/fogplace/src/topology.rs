//! Four-layer access network: LTE base stations feed per-BS ONTs, ONTs
//! aggregate into one OLT per cluster, OLTs interconnect over the metro and
//! uplink to an abstract cloud sink. Routing is deterministic tree routing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// Identifier of a network device. Clinics are demand points, not devices;
/// patient traffic enters the network at a base station.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DeviceId {
    Bs(u32),
    Ont(u32),
    Olt(u32),
    Cloud,
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeviceId::Bs(id) => write!(f, "bs{id}"),
            DeviceId::Ont(id) => write!(f, "ont{id}"),
            DeviceId::Olt(id) => write!(f, "olt{id}"),
            DeviceId::Cloud => write!(f, "cloud"),
        }
    }
}

impl std::str::FromStr for DeviceId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_id = |rest: &str| {
            rest.parse::<u32>()
                .map_err(|_| format!("bad device id `{s}`"))
        };
        if s == "cloud" {
            Ok(DeviceId::Cloud)
        } else if let Some(rest) = s.strip_prefix("bs") {
            Ok(DeviceId::Bs(parse_id(rest)?))
        } else if let Some(rest) = s.strip_prefix("ont") {
            Ok(DeviceId::Ont(parse_id(rest)?))
        } else if let Some(rest) = s.strip_prefix("olt") {
            Ok(DeviceId::Olt(parse_id(rest)?))
        } else {
            Err(format!("unknown device id `{s}`"))
        }
    }
}

/// Kind of a candidate processing-server site.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Ont,
    Olt,
}

#[derive(Clone, Debug)]
pub struct Clinic {
    pub id: u32,
    pub patient_count: u32,
    /// Base stations this clinic may attach to, in preference-free order.
    pub candidate_bs: Vec<u32>,
}

#[derive(Clone, Debug)]
pub struct BaseStation {
    pub id: u32,
    pub ont_id: u32,
    /// Radio/backhaul capacity in bits per second. Also used as the
    /// capacity of the BS-to-ONT link.
    pub capacity: f64,
}

#[derive(Clone, Debug)]
pub struct Ont {
    pub id: u32,
    pub olt_id: u32,
    /// Capacity of the ONT-OLT link in bits per second.
    pub upstream_capacity: f64,
}

#[derive(Clone, Debug)]
pub struct Olt {
    pub id: u32,
    pub cluster_id: u32,
}

/// A site that may host processing servers, with the per-node server cap.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CandidateNode {
    pub id: DeviceId,
    pub kind: NodeKind,
    pub cluster_id: u32,
    pub max_servers: u32,
}

/// The unique tree path between two devices: the visited devices plus the
/// capacity of each traversed link. `links[i]` connects `devices[i]` and
/// `devices[i + 1]`; both endpoints are included in `devices`.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    devices: Vec<DeviceId>,
    links: Vec<f64>,
}

impl Path {
    fn empty() -> Self {
        Path {
            devices: Vec::new(),
            links: Vec::new(),
        }
    }

    pub fn devices(&self) -> &[DeviceId] {
        &self.devices
    }

    pub fn links(&self) -> &[f64] {
        &self.links
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    /// Number of traversed links.
    pub fn hop_count(&self) -> usize {
        self.links.len()
    }

    pub fn min_link_capacity(&self) -> Option<f64> {
        self.links.iter().copied().reduce(f64::min)
    }

    pub fn reversed(&self) -> Path {
        Path {
            devices: self.devices.iter().rev().copied().collect(),
            links: self.links.iter().rev().copied().collect(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RouteError {
    #[error("unknown device {0}")]
    UnknownDevice(DeviceId),
}

/// A violation of a structural invariant, reported by [`Topology::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum TopologyViolation {
    DuplicateId { id: DeviceId },
    DuplicateClinicId { clinic: u32 },
    ClinicNoCandidates { clinic: u32 },
    ClinicDuplicateBs { clinic: u32, bs: u32 },
    ClinicUnknownBs { clinic: u32, bs: u32 },
    ClinicTooManyBsInCluster { clinic: u32, cluster: u32, count: usize },
    BsUnknownOnt { bs: u32, ont: u32 },
    OntUnknownOlt { ont: u32, olt: u32 },
    OltBadCluster { olt: u32, cluster: u32 },
    NonPositiveCapacity { device: String, capacity: f64 },
    NoClusters,
}

impl fmt::Display for TopologyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologyViolation::DuplicateId { id } => write!(f, "duplicate device id {id}"),
            TopologyViolation::DuplicateClinicId { clinic } => {
                write!(f, "duplicate clinic id {clinic}")
            }
            TopologyViolation::ClinicNoCandidates { clinic } => {
                write!(f, "clinic {clinic} lists no candidate base stations")
            }
            TopologyViolation::ClinicDuplicateBs { clinic, bs } => {
                write!(f, "clinic {clinic} lists base station {bs} more than once")
            }
            TopologyViolation::ClinicUnknownBs { clinic, bs } => {
                write!(f, "clinic {clinic} references unknown base station {bs}")
            }
            TopologyViolation::ClinicTooManyBsInCluster {
                clinic,
                cluster,
                count,
            } => write!(
                f,
                "clinic {clinic} lists {count} base stations in cluster {cluster} (max 2)"
            ),
            TopologyViolation::BsUnknownOnt { bs, ont } => {
                write!(f, "base station {bs} references unknown ONT {ont}")
            }
            TopologyViolation::OntUnknownOlt { ont, olt } => {
                write!(f, "ONT {ont} references unknown OLT {olt}")
            }
            TopologyViolation::OltBadCluster { olt, cluster } => {
                write!(f, "OLT {olt} references cluster {cluster} out of range")
            }
            TopologyViolation::NonPositiveCapacity { device, capacity } => {
                write!(f, "{device} has non-positive capacity {capacity}")
            }
            TopologyViolation::NoClusters => write!(f, "cluster count must be positive"),
        }
    }
}

/// The access network. Immutable after construction; all lookups go through
/// id-to-index maps built once.
#[derive(Clone, Debug)]
pub struct Topology {
    pub clinics: Vec<Clinic>,
    pub base_stations: Vec<BaseStation>,
    pub onts: Vec<Ont>,
    pub olts: Vec<Olt>,
    pub clusters: u32,
    pub metro_link_capacity: f64,
    pub cloud_uplink_capacity: f64,
    bs_index: BTreeMap<u32, usize>,
    ont_index: BTreeMap<u32, usize>,
    olt_index: BTreeMap<u32, usize>,
    clinic_index: BTreeMap<u32, usize>,
}

impl Topology {
    pub fn new(
        mut clinics: Vec<Clinic>,
        mut base_stations: Vec<BaseStation>,
        mut onts: Vec<Ont>,
        mut olts: Vec<Olt>,
        clusters: u32,
        metro_link_capacity: f64,
        cloud_uplink_capacity: f64,
    ) -> Self {
        clinics.sort_by_key(|c| c.id);
        base_stations.sort_by_key(|b| b.id);
        onts.sort_by_key(|o| o.id);
        olts.sort_by_key(|o| o.id);
        let bs_index = base_stations
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect();
        let ont_index = onts.iter().enumerate().map(|(i, o)| (o.id, i)).collect();
        let olt_index = olts.iter().enumerate().map(|(i, o)| (o.id, i)).collect();
        let clinic_index = clinics.iter().enumerate().map(|(i, c)| (c.id, i)).collect();
        Topology {
            clinics,
            base_stations,
            onts,
            olts,
            clusters,
            metro_link_capacity,
            cloud_uplink_capacity,
            bs_index,
            ont_index,
            olt_index,
            clinic_index,
        }
    }

    pub fn clinic(&self, id: u32) -> Option<&Clinic> {
        self.clinic_index.get(&id).map(|&i| &self.clinics[i])
    }

    pub fn base_station(&self, id: u32) -> Option<&BaseStation> {
        self.bs_index.get(&id).map(|&i| &self.base_stations[i])
    }

    pub fn ont(&self, id: u32) -> Option<&Ont> {
        self.ont_index.get(&id).map(|&i| &self.onts[i])
    }

    pub fn olt(&self, id: u32) -> Option<&Olt> {
        self.olt_index.get(&id).map(|&i| &self.olts[i])
    }

    pub fn total_patients(&self) -> u32 {
        self.clinics.iter().map(|c| c.patient_count).sum()
    }

    /// Checks every structural invariant and returns one entry per violation.
    pub fn validate(&self) -> Vec<TopologyViolation> {
        let mut violations = Vec::new();

        if self.clusters == 0 {
            violations.push(TopologyViolation::NoClusters);
        }
        for (capacity, device) in [
            (self.metro_link_capacity, "metro link".to_string()),
            (self.cloud_uplink_capacity, "cloud uplink".to_string()),
        ] {
            if !(capacity > 0.0) {
                violations.push(TopologyViolation::NonPositiveCapacity { device, capacity });
            }
        }

        let mut seen = BTreeSet::new();
        for bs in &self.base_stations {
            if !seen.insert(DeviceId::Bs(bs.id)) {
                violations.push(TopologyViolation::DuplicateId {
                    id: DeviceId::Bs(bs.id),
                });
            }
            if !(bs.capacity > 0.0) {
                violations.push(TopologyViolation::NonPositiveCapacity {
                    device: DeviceId::Bs(bs.id).to_string(),
                    capacity: bs.capacity,
                });
            }
            if self.ont(bs.ont_id).is_none() {
                violations.push(TopologyViolation::BsUnknownOnt {
                    bs: bs.id,
                    ont: bs.ont_id,
                });
            }
        }
        let mut seen = BTreeSet::new();
        for ont in &self.onts {
            if !seen.insert(DeviceId::Ont(ont.id)) {
                violations.push(TopologyViolation::DuplicateId {
                    id: DeviceId::Ont(ont.id),
                });
            }
            if !(ont.upstream_capacity > 0.0) {
                violations.push(TopologyViolation::NonPositiveCapacity {
                    device: DeviceId::Ont(ont.id).to_string(),
                    capacity: ont.upstream_capacity,
                });
            }
            if self.olt(ont.olt_id).is_none() {
                violations.push(TopologyViolation::OntUnknownOlt {
                    ont: ont.id,
                    olt: ont.olt_id,
                });
            }
        }
        let mut seen = BTreeSet::new();
        for olt in &self.olts {
            if !seen.insert(DeviceId::Olt(olt.id)) {
                violations.push(TopologyViolation::DuplicateId {
                    id: DeviceId::Olt(olt.id),
                });
            }
            if olt.cluster_id >= self.clusters {
                violations.push(TopologyViolation::OltBadCluster {
                    olt: olt.id,
                    cluster: olt.cluster_id,
                });
            }
        }

        let mut seen = BTreeSet::new();
        for clinic in &self.clinics {
            if !seen.insert(clinic.id) {
                violations.push(TopologyViolation::DuplicateClinicId { clinic: clinic.id });
            }
            if clinic.candidate_bs.is_empty() {
                violations.push(TopologyViolation::ClinicNoCandidates { clinic: clinic.id });
                continue;
            }
            let mut per_cluster: BTreeMap<u32, usize> = BTreeMap::new();
            let mut listed = BTreeSet::new();
            for &bs_id in &clinic.candidate_bs {
                if !listed.insert(bs_id) {
                    violations.push(TopologyViolation::ClinicDuplicateBs {
                        clinic: clinic.id,
                        bs: bs_id,
                    });
                    continue;
                }
                match self.cluster_of_bs(bs_id) {
                    Some(cluster) => *per_cluster.entry(cluster).or_insert(0) += 1,
                    None => violations.push(TopologyViolation::ClinicUnknownBs {
                        clinic: clinic.id,
                        bs: bs_id,
                    }),
                }
            }
            for (cluster, count) in per_cluster {
                if count > 2 {
                    violations.push(TopologyViolation::ClinicTooManyBsInCluster {
                        clinic: clinic.id,
                        cluster,
                        count,
                    });
                }
            }
        }
        violations
    }

    fn cluster_of_bs(&self, bs_id: u32) -> Option<u32> {
        let bs = self.base_station(bs_id)?;
        let ont = self.ont(bs.ont_id)?;
        let olt = self.olt(ont.olt_id)?;
        Some(olt.cluster_id)
    }

    /// One candidate server site per ONT and per OLT, each carrying the
    /// configured per-node server cap.
    pub fn candidate_nodes(&self, max_servers: u32) -> Vec<CandidateNode> {
        let mut nodes = Vec::with_capacity(self.onts.len() + self.olts.len());
        for ont in &self.onts {
            let cluster_id = self
                .olt(ont.olt_id)
                .map(|olt| olt.cluster_id)
                .unwrap_or(0);
            nodes.push(CandidateNode {
                id: DeviceId::Ont(ont.id),
                kind: NodeKind::Ont,
                cluster_id,
                max_servers,
            });
        }
        for olt in &self.olts {
            nodes.push(CandidateNode {
                id: DeviceId::Olt(olt.id),
                kind: NodeKind::Olt,
                cluster_id: olt.cluster_id,
                max_servers,
            });
        }
        nodes
    }

    /// Upward chain from a device to its OLT: visited devices plus the link
    /// capacities between consecutive entries. The OLT is the last device.
    fn up_chain(&self, from: DeviceId) -> Result<(Vec<DeviceId>, Vec<f64>), RouteError> {
        match from {
            DeviceId::Bs(id) => {
                let bs = self
                    .base_station(id)
                    .ok_or(RouteError::UnknownDevice(from))?;
                let ont = self
                    .ont(bs.ont_id)
                    .ok_or(RouteError::UnknownDevice(DeviceId::Ont(bs.ont_id)))?;
                self.olt(ont.olt_id)
                    .ok_or(RouteError::UnknownDevice(DeviceId::Olt(ont.olt_id)))?;
                Ok((
                    vec![from, DeviceId::Ont(ont.id), DeviceId::Olt(ont.olt_id)],
                    vec![bs.capacity, ont.upstream_capacity],
                ))
            }
            DeviceId::Ont(id) => {
                let ont = self.ont(id).ok_or(RouteError::UnknownDevice(from))?;
                self.olt(ont.olt_id)
                    .ok_or(RouteError::UnknownDevice(DeviceId::Olt(ont.olt_id)))?;
                Ok((
                    vec![from, DeviceId::Olt(ont.olt_id)],
                    vec![ont.upstream_capacity],
                ))
            }
            DeviceId::Olt(id) => {
                self.olt(id).ok_or(RouteError::UnknownDevice(from))?;
                Ok((vec![from], vec![]))
            }
            DeviceId::Cloud => Ok((vec![from], vec![])),
        }
    }

    /// The unique tree path between two devices. Intra-cluster traffic turns
    /// around at the first common ancestor; inter-cluster traffic crosses the
    /// metro between the two OLTs; cloud traffic leaves through the serving
    /// OLT's uplink. `route(a, a)` is the empty path.
    pub fn route(&self, from: DeviceId, to: DeviceId) -> Result<Path, RouteError> {
        if from == to {
            // Still surface unknown ids.
            self.up_chain(from)?;
            return Ok(Path::empty());
        }
        if from == DeviceId::Cloud {
            return Ok(self.route(to, from)?.reversed());
        }
        if to == DeviceId::Cloud {
            let (mut devices, mut links) = self.up_chain(from)?;
            devices.push(DeviceId::Cloud);
            links.push(self.cloud_uplink_capacity);
            return Ok(Path { devices, links });
        }

        let (a_dev, a_links) = self.up_chain(from)?;
        let (b_dev, b_links) = self.up_chain(to)?;

        // Same OLT: splice at the lowest common device.
        if a_dev.last() == b_dev.last() {
            let (ia, ib) = a_dev
                .iter()
                .enumerate()
                .find_map(|(ia, d)| b_dev.iter().position(|x| x == d).map(|ib| (ia, ib)))
                .expect("chains to a common OLT must intersect");
            let mut devices: Vec<DeviceId> = a_dev[..=ia].to_vec();
            let mut links: Vec<f64> = a_links[..ia].to_vec();
            for j in (0..ib).rev() {
                devices.push(b_dev[j]);
                links.push(b_links[j]);
            }
            return Ok(Path { devices, links });
        }

        // Different clusters: up to the first OLT, one metro hop, down.
        let mut devices = a_dev;
        let mut links = a_links;
        links.push(self.metro_link_capacity);
        for j in (0..b_dev.len()).rev() {
            devices.push(b_dev[j]);
            if j > 0 {
                links.push(b_links[j - 1]);
            }
        }
        Ok(Path { devices, links })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two clusters: BS 0,1 -> ONT 0,1 -> OLT 0; BS 2 -> ONT 2 -> OLT 1.
    fn small_topology() -> Topology {
        Topology::new(
            vec![
                Clinic {
                    id: 0,
                    patient_count: 3,
                    candidate_bs: vec![0, 1],
                },
                Clinic {
                    id: 1,
                    patient_count: 2,
                    candidate_bs: vec![2],
                },
            ],
            vec![
                BaseStation {
                    id: 0,
                    ont_id: 0,
                    capacity: 0.3e9,
                },
                BaseStation {
                    id: 1,
                    ont_id: 1,
                    capacity: 0.3e9,
                },
                BaseStation {
                    id: 2,
                    ont_id: 2,
                    capacity: 0.3e9,
                },
            ],
            vec![
                Ont {
                    id: 0,
                    olt_id: 0,
                    upstream_capacity: 1.25e9,
                },
                Ont {
                    id: 1,
                    olt_id: 0,
                    upstream_capacity: 1.25e9,
                },
                Ont {
                    id: 2,
                    olt_id: 1,
                    upstream_capacity: 1.25e9,
                },
            ],
            vec![
                Olt {
                    id: 0,
                    cluster_id: 0,
                },
                Olt {
                    id: 1,
                    cluster_id: 1,
                },
            ],
            2,
            40e9,
            40e9,
        )
    }

    #[test]
    fn valid_topology_has_no_violations() {
        assert!(small_topology().validate().is_empty());
    }

    #[test]
    fn zero_clinics_is_vacuously_valid() {
        let mut topo = small_topology();
        topo = Topology::new(
            vec![],
            topo.base_stations,
            topo.onts,
            topo.olts,
            2,
            40e9,
            40e9,
        );
        assert!(topo.validate().is_empty());
    }

    #[test]
    fn three_bs_in_one_cluster_is_flagged() {
        let mut topo = small_topology();
        // A third BS in cluster 0 and a clinic listing all three.
        topo.base_stations.push(BaseStation {
            id: 3,
            ont_id: 0,
            capacity: 0.3e9,
        });
        let clinics = vec![Clinic {
            id: 7,
            patient_count: 1,
            candidate_bs: vec![0, 1, 3],
        }];
        let topo = Topology::new(clinics, topo.base_stations, topo.onts, topo.olts, 2, 40e9, 40e9);
        let violations = topo.validate();
        assert_eq!(violations.len(), 1);
        assert_eq!(
            violations[0],
            TopologyViolation::ClinicTooManyBsInCluster {
                clinic: 7,
                cluster: 0,
                count: 3
            }
        );
    }

    #[test]
    fn negative_capacity_is_flagged() {
        let mut topo = small_topology();
        topo.base_stations[0].capacity = -1.0;
        let topo = Topology::new(
            topo.clinics,
            topo.base_stations,
            topo.onts,
            topo.olts,
            2,
            40e9,
            40e9,
        );
        assert!(topo
            .validate()
            .iter()
            .any(|v| matches!(v, TopologyViolation::NonPositiveCapacity { .. })));
    }

    #[test]
    fn route_bs_to_own_olt() {
        let topo = small_topology();
        let path = topo.route(DeviceId::Bs(0), DeviceId::Olt(0)).unwrap();
        assert_eq!(
            path.devices(),
            &[DeviceId::Bs(0), DeviceId::Ont(0), DeviceId::Olt(0)]
        );
        assert_eq!(path.links(), &[0.3e9, 1.25e9]);
    }

    #[test]
    fn route_cross_cluster_ont_to_ont() {
        let topo = small_topology();
        let path = topo.route(DeviceId::Ont(0), DeviceId::Ont(2)).unwrap();
        assert_eq!(
            path.devices(),
            &[
                DeviceId::Ont(0),
                DeviceId::Olt(0),
                DeviceId::Olt(1),
                DeviceId::Ont(2)
            ]
        );
        assert_eq!(path.links(), &[1.25e9, 40e9, 1.25e9]);
    }

    #[test]
    fn route_same_device_is_empty() {
        let topo = small_topology();
        assert!(topo.route(DeviceId::Olt(0), DeviceId::Olt(0)).unwrap().is_empty());
    }

    #[test]
    fn route_to_cloud_passes_ont_and_olt() {
        let topo = small_topology();
        let path = topo.route(DeviceId::Bs(1), DeviceId::Cloud).unwrap();
        assert_eq!(
            path.devices(),
            &[
                DeviceId::Bs(1),
                DeviceId::Ont(1),
                DeviceId::Olt(0),
                DeviceId::Cloud
            ]
        );
        assert_eq!(path.links().last(), Some(&40e9));
    }

    #[test]
    fn route_is_reversal_symmetric() {
        let topo = small_topology();
        let pairs = [
            (DeviceId::Bs(0), DeviceId::Olt(1)),
            (DeviceId::Ont(1), DeviceId::Ont(2)),
            (DeviceId::Bs(2), DeviceId::Cloud),
            (DeviceId::Bs(0), DeviceId::Ont(1)),
        ];
        for (a, b) in pairs {
            let forward = topo.route(a, b).unwrap();
            let backward = topo.route(b, a).unwrap();
            assert_eq!(forward.reversed(), backward, "{a} <-> {b}");
        }
    }

    #[test]
    fn route_unknown_device_errors() {
        let topo = small_topology();
        assert_eq!(
            topo.route(DeviceId::Bs(99), DeviceId::Olt(0)),
            Err(RouteError::UnknownDevice(DeviceId::Bs(99)))
        );
    }

    #[test]
    fn route_bs_to_sibling_ont_turns_at_shared_ont() {
        let topo = small_topology();
        // BS0 -> ONT0 is a one-hop path, not via the OLT.
        let path = topo.route(DeviceId::Bs(0), DeviceId::Ont(0)).unwrap();
        assert_eq!(path.devices(), &[DeviceId::Bs(0), DeviceId::Ont(0)]);
        // BS0 -> ONT1 goes up to the OLT and back down.
        let path = topo.route(DeviceId::Bs(0), DeviceId::Ont(1)).unwrap();
        assert_eq!(
            path.devices(),
            &[
                DeviceId::Bs(0),
                DeviceId::Ont(0),
                DeviceId::Olt(0),
                DeviceId::Ont(1)
            ]
        );
    }

    #[test]
    fn candidate_nodes_cover_all_onts_and_olts() {
        let topo = small_topology();
        let nodes = topo.candidate_nodes(4);
        assert_eq!(nodes.len(), topo.onts.len() + topo.olts.len());
        assert!(nodes.iter().all(|n| n.max_servers == 4));
        assert_eq!(nodes.iter().filter(|n| n.kind == NodeKind::Olt).count(), 2);
    }
}
