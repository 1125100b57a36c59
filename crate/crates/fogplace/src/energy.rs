//! Idle-plus-proportional power models and per-monitoring-window energy
//! accounting.
//!
//! Every device charges its idle power once per window when activated
//! (scaled down for devices shared with other applications) and a
//! proportional term of energy-per-bit times the bits it carries. Servers
//! charge full idle plus a utilization-scaled term over their processing
//! time.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::placement::Placement;
use crate::timing::{ServerSpec, SignalSpec};
use crate::topology::{DeviceId, Topology};

/// Linear power profile of one device class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DevicePowerProfile {
    pub max_power: f64,
    pub idle_power: f64,
    /// Bits per second for network devices, patients for servers.
    pub capacity: f64,
    /// Shared devices charge only `idle_share` of their idle power.
    pub shared: bool,
    pub idle_share: f64,
}

impl DevicePowerProfile {
    /// Proportional energy cost of moving one bit through the device.
    pub fn energy_per_bit(&self) -> f64 {
        (self.max_power - self.idle_power) / self.capacity
    }

    /// Idle energy over `window` seconds; zero when inactive, scaled by the
    /// idle share when the device is shared with other applications.
    pub fn idle_energy(&self, active: bool, window: f64) -> f64 {
        if !active {
            return 0.0;
        }
        let share = if self.shared { self.idle_share } else { 1.0 };
        share * self.idle_power * window
    }
}

/// Power profiles for every network device class in the accounting.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerModel {
    pub base_station: DevicePowerProfile,
    pub ont: DevicePowerProfile,
    pub olt: DevicePowerProfile,
    /// Switch attaching the servers at a candidate node; dedicated.
    pub ethernet_switch: DevicePowerProfile,
}

impl PowerModel {
    pub fn profile_for(&self, device: DeviceId) -> Option<&DevicePowerProfile> {
        match device {
            DeviceId::Bs(_) => Some(&self.base_station),
            DeviceId::Ont(_) => Some(&self.ont),
            DeviceId::Olt(_) => Some(&self.olt),
            // The cloud is an abstract sink with no modeled energy.
            DeviceId::Cloud => None,
        }
    }
}

/// A row key in the energy report; orders network devices, switches and
/// servers deterministically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReportDevice {
    Network(DeviceId),
    EthSwitch(DeviceId),
    Server(DeviceId, u32),
}

impl fmt::Display for ReportDevice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReportDevice::Network(d) => write!(f, "{d}"),
            ReportDevice::EthSwitch(d) => write!(f, "eth@{d}"),
            ReportDevice::Server(d, i) => write!(f, "server@{d}/{i}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeviceKind {
    BaseStation,
    Ont,
    Olt,
    EthernetSwitch,
    Server,
}

impl fmt::Display for DeviceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DeviceKind::BaseStation => "base_station",
            DeviceKind::Ont => "ont",
            DeviceKind::Olt => "olt",
            DeviceKind::EthernetSwitch => "ethernet_switch",
            DeviceKind::Server => "server",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeviceEnergy {
    pub kind: DeviceKind,
    pub idle_j: f64,
    pub proportional_j: f64,
}

impl DeviceEnergy {
    pub fn total(&self) -> f64 {
        self.idle_j + self.proportional_j
    }
}

/// Per-device and aggregate energy for one monitoring window.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    pub per_device: BTreeMap<ReportDevice, DeviceEnergy>,
    pub network_total: f64,
    pub processing_total: f64,
    pub grand_total: f64,
}

impl EnergyReport {
    /// Computes the aggregates from per-device entries in key order.
    pub fn assemble(per_device: BTreeMap<ReportDevice, DeviceEnergy>) -> EnergyReport {
        let mut network_total = 0.0;
        let mut processing_total = 0.0;
        for (device, energy) in &per_device {
            match device {
                ReportDevice::Network(_) | ReportDevice::EthSwitch(_) => {
                    network_total += energy.total();
                }
                ReportDevice::Server(..) => processing_total += energy.total(),
            }
        }
        EnergyReport {
            per_device,
            network_total,
            processing_total,
            grand_total: network_total + processing_total,
        }
    }

    pub fn empty() -> EnergyReport {
        EnergyReport::assemble(BTreeMap::new())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("node {node} carries {load} patients but only {servers} servers of capacity {cap}")]
    CapacityViolation {
        node: DeviceId,
        load: u32,
        servers: u32,
        cap: u32,
    },
    #[error("routing failed during energy accounting: {0}")]
    Route(String),
}

/// Everything the accounting needs besides the placement itself.
#[derive(Clone, Copy)]
pub struct EnergyContext<'a> {
    pub topology: &'a Topology,
    pub power: &'a PowerModel,
    pub signal: &'a SignalSpec,
    pub server: &'a ServerSpec,
    /// Monitoring window in seconds; idle energy accrues over it.
    pub window: f64,
    /// When set, the backup server's result copies also traverse the
    /// network toward the clinic and the cloud.
    pub duplicate_results: bool,
}

/// Splits a node's patient load over its servers as evenly as possible,
/// larger shares first.
pub fn split_server_load(load: u32, servers: u32) -> Vec<u32> {
    if servers == 0 {
        return Vec::new();
    }
    let base = load / servers;
    let extra = load % servers;
    (0..servers)
        .map(|i| if i < extra { base + 1 } else { base })
        .collect()
}

/// Network-side accounting: per-device idle and proportional energy for all
/// upload, feedback and storage flows of a placement.
pub fn network_energy(
    ctx: &EnergyContext,
    placement: &Placement,
) -> Result<BTreeMap<ReportDevice, DeviceEnergy>, EnergyError> {
    let mut device_bits: BTreeMap<DeviceId, f64> = BTreeMap::new();
    let mut eth_bits: BTreeMap<DeviceId, f64> = BTreeMap::new();

    let mut add_path_bits = |from: DeviceId,
                             to: DeviceId,
                             bits: f64,
                             device_bits: &mut BTreeMap<DeviceId, f64>|
     -> Result<(), EnergyError> {
        let path = ctx
            .topology
            .route(from, to)
            .map_err(|e| EnergyError::Route(e.to_string()))?;
        for &device in path.devices() {
            if device == DeviceId::Cloud {
                continue;
            }
            *device_bits.entry(device).or_insert(0.0) += bits;
        }
        Ok(())
    };

    let ecg = ctx.signal.ecg_bits;
    let result = ctx.signal.result_bits;
    for (key, &count) in &placement.assignments {
        if count == 0 {
            continue;
        }
        let patients = f64::from(count);
        let bs = DeviceId::Bs(key.bs);

        // Both copies of the recording go up concurrently.
        add_path_bits(bs, key.primary, ecg * patients, &mut device_bits)?;
        add_path_bits(bs, key.backup, ecg * patients, &mut device_bits)?;
        // Results from the primary: feedback to the clinic, one copy to
        // storage.
        add_path_bits(key.primary, bs, result * patients, &mut device_bits)?;
        add_path_bits(key.primary, DeviceId::Cloud, result * patients, &mut device_bits)?;
        if ctx.duplicate_results {
            add_path_bits(key.backup, bs, result * patients, &mut device_bits)?;
            add_path_bits(key.backup, DeviceId::Cloud, result * patients, &mut device_bits)?;
        }

        // Traffic through the server-attachment switch at each serving node.
        let result_out = if ctx.duplicate_results {
            2.0 * result
        } else {
            0.0
        };
        *eth_bits.entry(key.primary).or_insert(0.0) += (ecg + 2.0 * result) * patients;
        *eth_bits.entry(key.backup).or_insert(0.0) += (ecg + result_out) * patients;
    }

    let mut entries = BTreeMap::new();
    for (device, bits) in device_bits {
        let profile = match ctx.power.profile_for(device) {
            Some(p) => p,
            None => continue,
        };
        let kind = match device {
            DeviceId::Bs(_) => DeviceKind::BaseStation,
            DeviceId::Ont(_) => DeviceKind::Ont,
            DeviceId::Olt(_) => DeviceKind::Olt,
            DeviceId::Cloud => continue,
        };
        entries.insert(
            ReportDevice::Network(device),
            DeviceEnergy {
                kind,
                idle_j: profile.idle_energy(true, ctx.window),
                proportional_j: profile.energy_per_bit() * bits,
            },
        );
    }

    // One dedicated switch per activated candidate node.
    let mut active_nodes: BTreeSet<DeviceId> = eth_bits.keys().copied().collect();
    active_nodes.extend(placement.servers.iter().filter(|(_, &s)| s > 0).map(|(&n, _)| n));
    for node in active_nodes {
        let bits = eth_bits.get(&node).copied().unwrap_or(0.0);
        let profile = &ctx.power.ethernet_switch;
        entries.insert(
            ReportDevice::EthSwitch(node),
            DeviceEnergy {
                kind: DeviceKind::EthernetSwitch,
                idle_j: profile.idle_energy(true, ctx.window),
                proportional_j: profile.energy_per_bit() * bits,
            },
        );
    }
    Ok(entries)
}

/// Processing-side accounting: per-server idle plus utilization-scaled
/// energy over the processing time of its assigned patients.
pub fn processing_energy(
    ctx: &EnergyContext,
    placement: &Placement,
) -> Result<BTreeMap<ReportDevice, DeviceEnergy>, EnergyError> {
    let server = ctx.server;
    let loads = placement.node_loads();
    let mut entries = BTreeMap::new();
    for (&node, &count) in &placement.servers {
        if count == 0 {
            continue;
        }
        let load = loads.get(&node).copied().unwrap_or(0);
        if load > count * server.pat_cap {
            return Err(EnergyError::CapacityViolation {
                node,
                load,
                servers: count,
                cap: server.pat_cap,
            });
        }
        for (i, assigned) in split_server_load(load, count).into_iter().enumerate() {
            let time = server
                .processing_time(assigned)
                .expect("per-server load within capacity after node check");
            let utilization = f64::from(assigned) / f64::from(server.pat_cap);
            let span = server.power.max_power - server.power.idle_power;
            entries.insert(
                ReportDevice::Server(node, i as u32),
                DeviceEnergy {
                    kind: DeviceKind::Server,
                    idle_j: server.power.idle_energy(true, ctx.window),
                    proportional_j: span * utilization * time,
                },
            );
        }
    }
    // Loads on nodes absent from the server map are capacity violations.
    for (&node, &load) in &loads {
        if load > 0 && placement.servers.get(&node).copied().unwrap_or(0) == 0 {
            return Err(EnergyError::CapacityViolation {
                node,
                load,
                servers: 0,
                cap: server.pat_cap,
            });
        }
    }
    Ok(entries)
}

/// Full per-window report: network and processing entries with aggregates.
pub fn energy_report(ctx: &EnergyContext, placement: &Placement) -> Result<EnergyReport, EnergyError> {
    let mut entries = network_energy(ctx, placement)?;
    entries.extend(processing_energy(ctx, placement)?);
    Ok(EnergyReport::assemble(entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::placement::AssignmentKey;
    use crate::topology::{BaseStation, Clinic, Olt, Ont};

    fn relative_eq(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    fn switch_profile() -> DevicePowerProfile {
        DevicePowerProfile {
            max_power: 3.52,
            idle_power: 0.57,
            capacity: 16e9,
            shared: false,
            idle_share: 1.0,
        }
    }

    fn bs_profile() -> DevicePowerProfile {
        DevicePowerProfile {
            max_power: 528.0,
            idle_power: 333.0,
            capacity: 0.3e9,
            shared: true,
            idle_share: 0.003,
        }
    }

    fn power_model() -> PowerModel {
        PowerModel {
            base_station: bs_profile(),
            ont: DevicePowerProfile {
                max_power: 15.0,
                idle_power: 8.0,
                capacity: 1.25e9,
                shared: true,
                idle_share: 0.003,
            },
            olt: DevicePowerProfile {
                max_power: 1940.0,
                idle_power: 60.0,
                capacity: 20e9,
                shared: true,
                idle_share: 0.003,
            },
            ethernet_switch: switch_profile(),
        }
    }

    fn server_spec() -> ServerSpec {
        ServerSpec {
            pat_cap: 60,
            proc_slope: 0.002,
            proc_intercept: 4.6857,
            power: DevicePowerProfile {
                max_power: 180.0,
                idle_power: 78.0,
                capacity: 60.0,
                shared: false,
                idle_share: 1.0,
            },
        }
    }

    fn signal() -> SignalSpec {
        SignalSpec {
            ecg_bits: 252_800.0,
            result_bits: 256.0,
            recording_time: 30.0,
        }
    }

    /// One clinic on BS0 -> ONT0 -> OLT0.
    fn chain_topology() -> Topology {
        Topology::new(
            vec![Clinic {
                id: 0,
                patient_count: 1,
                candidate_bs: vec![0],
            }],
            vec![BaseStation {
                id: 0,
                ont_id: 0,
                capacity: 0.3e9,
            }],
            vec![Ont {
                id: 0,
                olt_id: 0,
                upstream_capacity: 1.25e9,
            }],
            vec![Olt {
                id: 0,
                cluster_id: 0,
            }],
            1,
            40e9,
            40e9,
        )
    }

    #[test]
    fn energy_per_bit_from_power_span() {
        assert!(relative_eq(switch_profile().energy_per_bit(), 1.84375e-10, 1e-12));
        assert!(relative_eq(bs_profile().energy_per_bit(), 6.5e-7, 1e-12));

        let flat = DevicePowerProfile {
            max_power: 5.0,
            idle_power: 5.0,
            capacity: 1e9,
            shared: false,
            idle_share: 1.0,
        };
        assert_eq!(flat.energy_per_bit(), 0.0);
    }

    #[test]
    fn idle_energy_respects_sharing_and_activity() {
        assert!(relative_eq(bs_profile().idle_energy(true, 240.0), 239.76, 1e-12));
        assert_eq!(bs_profile().idle_energy(false, 240.0), 0.0);
        assert!(relative_eq(
            server_spec().power.idle_energy(true, 240.0),
            18_720.0,
            1e-12
        ));
    }

    fn ctx<'a>(
        topo: &'a Topology,
        power: &'a PowerModel,
        sig: &'a SignalSpec,
        server: &'a ServerSpec,
    ) -> EnergyContext<'a> {
        EnergyContext {
            topology: topo,
            power,
            signal: sig,
            server,
            window: 240.0,
            duplicate_results: false,
        }
    }

    #[test]
    fn zero_patients_zero_network_energy() {
        let topo = chain_topology();
        let power = power_model();
        let sig = signal();
        let server = server_spec();
        let entries = network_energy(&ctx(&topo, &power, &sig, &server), &Placement::default()).unwrap();
        assert!(entries.is_empty());
    }

    #[test]
    fn single_patient_colocated_matches_hand_accounting() {
        let topo = chain_topology();
        let power = power_model();
        let sig = signal();
        let server = server_spec();

        let mut placement = Placement::default();
        placement.assignments.insert(
            AssignmentKey {
                clinic: 0,
                bs: 0,
                primary: DeviceId::Ont(0),
                backup: DeviceId::Ont(0),
            },
            1,
        );
        placement.servers.insert(DeviceId::Ont(0), 2);

        let report = energy_report(&ctx(&topo, &power, &sig, &server), &placement).unwrap();

        // Independent hand computation of every term.
        let pi = 252_800.0;
        let alpha = 256.0;
        let bs_bits = 2.0 * pi + alpha; // two uploads in, feedback out
        let ont_bits = 2.0 * pi + 2.0 * alpha; // uploads, feedback, storage
        let olt_bits = alpha; // storage transit
        let eth_bits = 2.0 * pi + 2.0 * alpha;
        let expected_network = 0.003 * 333.0 * 240.0
            + bs_bits * (195.0 / 0.3e9)
            + 0.003 * 8.0 * 240.0
            + ont_bits * (7.0 / 1.25e9)
            + 0.003 * 60.0 * 240.0
            + olt_bits * (1880.0 / 20e9)
            + 0.57 * 240.0
            + eth_bits * (2.95 / 16e9);
        assert!(relative_eq(report.network_total, expected_network, 1e-9));

        // Two servers: one with the single patient, one idle.
        let expected_processing =
            2.0 * (78.0 * 240.0) + 102.0 * (1.0 / 60.0) * (0.002 * 1.0 + 4.6857);
        assert!(relative_eq(report.processing_total, expected_processing, 1e-9));
        assert!(relative_eq(
            report.grand_total,
            expected_network + expected_processing,
            1e-12
        ));
    }

    #[test]
    fn geo_separated_backup_costs_more_network_energy() {
        // Second candidate node (the OLT) forces a longer backup path.
        let topo = chain_topology();
        let power = power_model();
        let sig = signal();
        let server = server_spec();
        let context = ctx(&topo, &power, &sig, &server);

        let mut colocated = Placement::default();
        colocated.assignments.insert(
            AssignmentKey {
                clinic: 0,
                bs: 0,
                primary: DeviceId::Ont(0),
                backup: DeviceId::Ont(0),
            },
            1,
        );
        colocated.servers.insert(DeviceId::Ont(0), 2);

        let mut separated = Placement::default();
        separated.assignments.insert(
            AssignmentKey {
                clinic: 0,
                bs: 0,
                primary: DeviceId::Ont(0),
                backup: DeviceId::Olt(0),
            },
            1,
        );
        separated.servers.insert(DeviceId::Ont(0), 1);
        separated.servers.insert(DeviceId::Olt(0), 1);

        let colocated_net: f64 = network_energy(&context, &colocated)
            .unwrap()
            .values()
            .map(|e| e.total())
            .sum();
        let separated_net: f64 = network_energy(&context, &separated)
            .unwrap()
            .values()
            .map(|e| e.total())
            .sum();
        assert!(separated_net > colocated_net + 1e-9);
    }

    #[test]
    fn processing_energy_single_full_server() {
        let topo = chain_topology();
        let power = power_model();
        let sig = signal();
        let server = server_spec();

        let mut placement = Placement::default();
        placement.assignments.insert(
            AssignmentKey {
                clinic: 0,
                bs: 0,
                primary: DeviceId::Ont(0),
                backup: DeviceId::Olt(0),
            },
            30,
        );
        placement.servers.insert(DeviceId::Ont(0), 1);
        placement.servers.insert(DeviceId::Olt(0), 1);

        // Each node carries 30 patients on one server.
        let entries = processing_energy(&ctx(&topo, &power, &sig, &server), &placement).unwrap();
        assert_eq!(entries.len(), 2);
        let per_server = 78.0 * 240.0 + 102.0 * (30.0 / 60.0) * (0.002 * 30.0 + 4.6857);
        for energy in entries.values() {
            assert!(relative_eq(energy.total(), per_server, 1e-12));
        }
    }

    #[test]
    fn full_server_matches_hand_value() {
        let topo = chain_topology();
        let power = power_model();
        let sig = signal();
        let server = server_spec();

        let mut placement = Placement::default();
        placement.assignments.insert(
            AssignmentKey {
                clinic: 0,
                bs: 0,
                primary: DeviceId::Ont(0),
                backup: DeviceId::Ont(0),
            },
            30,
        );
        placement.servers.insert(DeviceId::Ont(0), 1);

        // 30 primary + 30 backup = one fully loaded server.
        let entries = processing_energy(&ctx(&topo, &power, &sig, &server), &placement).unwrap();
        let total: f64 = entries.values().map(|e| e.total()).sum();
        assert!(relative_eq(total, 19_210.1814, 1e-9));
    }

    #[test]
    fn processing_energy_rejects_capacity_violation() {
        let topo = chain_topology();
        let power = power_model();
        let sig = signal();
        let server = server_spec();

        let mut placement = Placement::default();
        placement.assignments.insert(
            AssignmentKey {
                clinic: 0,
                bs: 0,
                primary: DeviceId::Ont(0),
                backup: DeviceId::Ont(0),
            },
            40,
        );
        placement.servers.insert(DeviceId::Ont(0), 1);

        assert!(matches!(
            processing_energy(&ctx(&topo, &power, &sig, &server), &placement),
            Err(EnergyError::CapacityViolation { .. })
        ));
    }

    #[test]
    fn processing_energy_ignores_server_locations() {
        let topo = chain_topology();
        let power = power_model();
        let sig = signal();
        let server = server_spec();
        let context = ctx(&topo, &power, &sig, &server);

        // Same load multiset {20, 11} at different nodes.
        let mut a = Placement::default();
        a.assignments.insert(
            AssignmentKey {
                clinic: 0,
                bs: 0,
                primary: DeviceId::Ont(0),
                backup: DeviceId::Olt(0),
            },
            9,
        );
        a.assignments.insert(
            AssignmentKey {
                clinic: 0,
                bs: 0,
                primary: DeviceId::Ont(0),
                backup: DeviceId::Ont(0),
            },
            11,
        );
        a.servers.insert(DeviceId::Ont(0), 1);
        a.servers.insert(DeviceId::Olt(0), 1);

        let mut b = Placement::default();
        b.assignments.insert(
            AssignmentKey {
                clinic: 0,
                bs: 0,
                primary: DeviceId::Olt(0),
                backup: DeviceId::Ont(0),
            },
            9,
        );
        b.assignments.insert(
            AssignmentKey {
                clinic: 0,
                bs: 0,
                primary: DeviceId::Olt(0),
                backup: DeviceId::Olt(0),
            },
            11,
        );
        b.servers.insert(DeviceId::Olt(0), 1);
        b.servers.insert(DeviceId::Ont(0), 1);

        let total = |p: &Placement| -> f64 {
            processing_energy(&context, p)
                .unwrap()
                .values()
                .map(|e| e.total())
                .sum()
        };
        assert!(relative_eq(total(&a), total(&b), 1e-12));
    }

    #[test]
    fn report_totals_are_additive() {
        let topo = chain_topology();
        let power = power_model();
        let sig = signal();
        let server = server_spec();

        let mut placement = Placement::default();
        placement.assignments.insert(
            AssignmentKey {
                clinic: 0,
                bs: 0,
                primary: DeviceId::Olt(0),
                backup: DeviceId::Olt(0),
            },
            5,
        );
        placement.servers.insert(DeviceId::Olt(0), 1);

        let report = energy_report(&ctx(&topo, &power, &sig, &server), &placement).unwrap();
        let sum: f64 = report.per_device.values().map(|e| e.total()).sum();
        assert!(relative_eq(report.grand_total, sum, 1e-12));
        assert!(relative_eq(
            report.grand_total,
            report.network_total + report.processing_total,
            1e-12
        ));
    }

    #[test]
    fn split_server_load_is_balanced() {
        assert_eq!(split_server_load(120, 2), vec![60, 60]);
        assert_eq!(split_server_load(61, 2), vec![31, 30]);
        assert_eq!(split_server_load(5, 3), vec![2, 2, 1]);
        assert_eq!(split_server_load(0, 2), vec![0, 0]);
        assert_eq!(split_server_load(0, 0), Vec::<u32>::new());
    }
}
