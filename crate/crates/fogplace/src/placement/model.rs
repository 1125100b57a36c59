//! Integer-program formulation of the placement problem.
//!
//! Columns:
//! - one integer assignment count per (clinic, base station, primary node,
//!   backup node) tuple, with the per-patient energy of all its flows as the
//!   objective coefficient;
//! - per candidate node, one binary per possible patient load, selecting an
//!   entry of the exact node cost table (server idle + utilization-scaled
//!   processing + switch idle). The table makes the otherwise nonlinear
//!   per-server energy exactly linear over the load-indicator columns;
//! - one activation binary per shared network device, charging its idle
//!   share once.
//!
//! Rows: per-clinic coverage, per-node load definition, per-node load
//! convexity, and big-M activation links per device.

use crate::energy::split_server_load;
use crate::placement::simplex::{Column, LinearProgram, RowKind};
use crate::placement::{AssignmentKey, Placement, PlacementProblem, SolveError};
use crate::topology::DeviceId;

#[derive(Clone, Debug)]
pub struct TupleVar {
    pub key: AssignmentKey,
    pub clinic_idx: usize,
    pub demand: u32,
    /// Joules of proportional network energy per assigned patient.
    pub energy_per_patient: f64,
    /// Indices into [`Model::devices`] of every device its flows touch.
    pub devices: Vec<u32>,
    pub primary_idx: usize,
    pub backup_idx: usize,
}

#[derive(Clone, Debug)]
pub struct NodeVar {
    pub id: DeviceId,
    /// Largest modeled load: min(N * Pat, 2 * total demand).
    pub load_domain: u32,
}

#[derive(Clone, Debug)]
pub struct DeviceVar {
    pub id: DeviceId,
    /// Idle energy charged once when activated.
    pub idle_j: f64,
    /// Big-M for the activation link: the demand that can touch the device.
    pub big_m: f64,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub clinics: Vec<(u32, u32)>,
    pub tuples: Vec<TupleVar>,
    pub nodes: Vec<NodeVar>,
    pub devices: Vec<DeviceVar>,
    /// Exact energy of hosting load `l` at a node (indexed by `l`).
    pub cost_table: Vec<f64>,
    /// Server count realizing each cost table entry.
    pub server_table: Vec<u32>,
    pub lp: LinearProgram,
    /// Column ranges: tuples start at 0.
    pub w_offsets: Vec<usize>,
    pub y_offset: usize,
}

impl Model {
    pub fn tuple_count(&self) -> usize {
        self.tuples.len()
    }

    pub fn column_count(&self) -> usize {
        self.lp.columns.len()
    }

    pub fn row_count(&self) -> usize {
        self.lp.rhs.len()
    }

    /// Node capacity in patients under the per-node server cap.
    pub fn node_capacity(&self) -> u32 {
        (self.cost_table.len() - 1) as u32
    }

    /// Builds the placement encoded by integer tuple counts, deriving each
    /// node's server count from the cost table.
    pub fn extract_placement(&self, counts: &[u32]) -> Placement {
        let mut placement = Placement::default();
        let mut loads = vec![0u32; self.nodes.len()];
        for (tuple, &count) in self.tuples.iter().zip(counts) {
            if count == 0 {
                continue;
            }
            placement.assignments.insert(tuple.key, count);
            loads[tuple.primary_idx] += count;
            loads[tuple.backup_idx] += count;
        }
        for (node, &load) in self.nodes.iter().zip(&loads) {
            if load > 0 {
                placement
                    .servers
                    .insert(node.id, self.server_table[load as usize]);
            }
        }
        placement
    }
}

/// Exact cost of hosting `load` patients at one candidate node, minimized
/// over the feasible server count; mirrors the energy accounting term by
/// term.
fn node_cost_tables(problem: &PlacementProblem, load_domain: u32) -> (Vec<f64>, Vec<u32>) {
    let server = &problem.server;
    let window = problem.window;
    let eth_idle = problem.power.ethernet_switch.idle_energy(true, window);
    let server_idle = server.power.idle_energy(true, window);
    let span = server.power.max_power - server.power.idle_power;
    let n_max = problem.servers_per_node;

    let mut costs = Vec::with_capacity(load_domain as usize + 1);
    let mut servers = Vec::with_capacity(load_domain as usize + 1);
    costs.push(0.0);
    servers.push(0);
    for load in 1..=load_domain {
        let min_servers = load.div_ceil(server.pat_cap);
        let mut best = f64::INFINITY;
        let mut best_servers = min_servers;
        for s in min_servers..=n_max {
            let mut cost = f64::from(s) * server_idle;
            for per_server in split_server_load(load, s) {
                let time = server
                    .processing_time(per_server)
                    .expect("split keeps servers within capacity");
                cost += span * (f64::from(per_server) / f64::from(server.pat_cap)) * time;
            }
            if cost < best - 1e-12 {
                best = cost;
                best_servers = s;
            }
        }
        costs.push(eth_idle + best);
        servers.push(best_servers);
    }
    (costs, servers)
}

/// Builds the integer program for a problem instance.
pub fn formulate(problem: &PlacementProblem) -> Result<Model, SolveError> {
    let total_demand = problem.total_demand();
    let node_ids = problem.candidate_node_ids();
    let pat_cap = problem.server.pat_cap;
    let node_capacity = problem.servers_per_node * pat_cap;
    let load_domain = node_capacity.min(2 * total_demand);

    let nodes: Vec<NodeVar> = node_ids
        .iter()
        .map(|&id| NodeVar { id, load_domain })
        .collect();
    let node_index = |id: DeviceId| node_ids.iter().position(|&n| n == id).unwrap();

    // Network devices in deterministic order, with their activation idle.
    let mut device_ids: Vec<DeviceId> = problem
        .topology
        .base_stations
        .iter()
        .map(|b| DeviceId::Bs(b.id))
        .chain(problem.topology.onts.iter().map(|o| DeviceId::Ont(o.id)))
        .chain(problem.topology.olts.iter().map(|o| DeviceId::Olt(o.id)))
        .collect();
    device_ids.sort_unstable();
    let device_index = |id: DeviceId| device_ids.iter().position(|&d| d == id).unwrap() as u32;

    let route_stats = |from: DeviceId, to: DeviceId| -> Result<(f64, Vec<u32>), SolveError> {
        let path = problem
            .topology
            .route(from, to)
            .map_err(|e| SolveError::Infeasible(e.to_string()))?;
        let mut epb_sum = 0.0;
        let mut touched = Vec::new();
        for &device in path.devices() {
            if let Some(profile) = problem.power.profile_for(device) {
                epb_sum += profile.energy_per_bit();
                touched.push(device_index(device));
            }
        }
        touched.sort_unstable();
        Ok((epb_sum, touched))
    };

    // Serving base stations and per-(bs, node) path statistics.
    let clinics: Vec<(u32, u32)> = problem
        .demand
        .iter()
        .filter(|(_, &d)| d > 0)
        .map(|(&c, &d)| (c, d))
        .collect();
    let mut serving_bs: Vec<u32> = clinics
        .iter()
        .filter_map(|(c, _)| problem.topology.clinic(*c))
        .flat_map(|c| c.candidate_bs.iter().copied())
        .collect();
    serving_bs.sort_unstable();
    serving_bs.dedup();

    let mut up_stats = vec![vec![(0.0, Vec::new()); node_ids.len()]; serving_bs.len()];
    for (bi, &bs) in serving_bs.iter().enumerate() {
        for (ki, &node) in node_ids.iter().enumerate() {
            up_stats[bi][ki] = route_stats(DeviceId::Bs(bs), node)?;
        }
    }
    let mut cloud_stats = Vec::with_capacity(node_ids.len());
    for &node in &node_ids {
        cloud_stats.push(route_stats(node, DeviceId::Cloud)?);
    }

    let ecg = problem.signal.ecg_bits;
    let result = problem.signal.result_bits;
    let eth_epb = problem.power.ethernet_switch.energy_per_bit();

    let mut tuples = Vec::new();
    for (clinic_idx, &(clinic_id, demand)) in clinics.iter().enumerate() {
        let clinic = problem
            .topology
            .clinic(clinic_id)
            .ok_or_else(|| SolveError::Infeasible(format!("unknown clinic {clinic_id}")))?;
        let mut candidate_bs = clinic.candidate_bs.clone();
        candidate_bs.sort_unstable();
        for &bs in &candidate_bs {
            let bi = serving_bs.binary_search(&bs).unwrap();
            for (pi, &primary) in node_ids.iter().enumerate() {
                for (qi, &backup) in node_ids.iter().enumerate() {
                    if problem.geo_constraint && primary == backup {
                        continue;
                    }
                    let (up_p, mask_p) = &up_stats[bi][pi];
                    let (up_b, mask_b) = &up_stats[bi][qi];
                    let (cloud_p, cloud_mask_p) = &cloud_stats[pi];
                    let (cloud_b, cloud_mask_b) = &cloud_stats[qi];

                    let mut energy = ecg * (up_p + up_b)
                        + result * (up_p + cloud_p)
                        + eth_epb * (ecg + 2.0 * result)
                        + eth_epb * ecg;
                    let mut devices: Vec<u32> = mask_p
                        .iter()
                        .chain(mask_b.iter())
                        .chain(cloud_mask_p.iter())
                        .copied()
                        .collect();
                    if problem.duplicate_results {
                        energy += result * (up_b + cloud_b) + eth_epb * 2.0 * result;
                        devices.extend(cloud_mask_b.iter().copied());
                    }
                    devices.sort_unstable();
                    devices.dedup();

                    tuples.push(TupleVar {
                        key: AssignmentKey {
                            clinic: clinic_id,
                            bs,
                            primary,
                            backup,
                        },
                        clinic_idx,
                        demand,
                        energy_per_patient: energy,
                        devices,
                        primary_idx: pi,
                        backup_idx: qi,
                    });
                }
            }
        }
    }

    // Activation variables only for devices some flow can touch and whose
    // idle share is worth charging.
    let window = problem.window;
    let mut device_touch_demand = vec![0.0_f64; device_ids.len()];
    {
        // Sum each clinic's demand once per device it can reach.
        let mut seen = vec![u32::MAX; device_ids.len()];
        for (clinic_idx, &(_, demand)) in clinics.iter().enumerate() {
            for tuple in tuples.iter().filter(|t| t.clinic_idx == clinic_idx) {
                for &d in &tuple.devices {
                    if seen[d as usize] != clinic_idx as u32 {
                        seen[d as usize] = clinic_idx as u32;
                        device_touch_demand[d as usize] += f64::from(demand);
                    }
                }
            }
        }
    }
    let mut devices = Vec::new();
    let mut y_column_of_device = vec![usize::MAX; device_ids.len()];
    for (di, &id) in device_ids.iter().enumerate() {
        let idle_j = problem
            .power
            .profile_for(id)
            .map(|p| p.idle_energy(true, window))
            .unwrap_or(0.0);
        if idle_j > 0.0 && device_touch_demand[di] > 0.0 {
            y_column_of_device[di] = devices.len();
            devices.push(DeviceVar {
                id,
                idle_j,
                big_m: device_touch_demand[di],
            });
        }
    }

    let (cost_table, server_table) = node_cost_tables(problem, load_domain);

    // Assemble rows and columns.
    let n_clinics = clinics.len();
    let n_nodes = nodes.len();
    let coverage_row = |c: usize| c as u32;
    let load_row = |n: usize| (n_clinics + n) as u32;
    let wsum_row = |n: usize| (n_clinics + n_nodes + n) as u32;
    let link_row = |d: usize| (n_clinics + 2 * n_nodes + d) as u32;

    let mut row_kinds = vec![RowKind::Equal; n_clinics + 2 * n_nodes];
    row_kinds.extend(vec![RowKind::LessEq; devices.len()]);
    let mut rhs = Vec::with_capacity(row_kinds.len());
    rhs.extend(clinics.iter().map(|&(_, d)| f64::from(d)));
    rhs.extend(std::iter::repeat(0.0).take(n_nodes));
    rhs.extend(std::iter::repeat(1.0).take(n_nodes));
    rhs.extend(std::iter::repeat(0.0).take(devices.len()));

    let mut columns = Vec::new();
    for tuple in &tuples {
        let mut entries = vec![(coverage_row(tuple.clinic_idx), 1.0)];
        if tuple.primary_idx == tuple.backup_idx {
            entries.push((load_row(tuple.primary_idx), 2.0));
        } else {
            entries.push((load_row(tuple.primary_idx), 1.0));
            entries.push((load_row(tuple.backup_idx), 1.0));
        }
        for &d in &tuple.devices {
            let y = y_column_of_device[d as usize];
            if y != usize::MAX {
                entries.push((link_row(y), 1.0));
            }
        }
        entries.sort_unstable_by_key(|e| e.0);
        columns.push(Column {
            cost: tuple.energy_per_patient,
            lower: 0.0,
            upper: f64::from(tuple.demand),
            entries,
        });
    }
    let mut w_offsets = Vec::with_capacity(n_nodes);
    for n in 0..n_nodes {
        w_offsets.push(columns.len());
        for load in 0..=load_domain {
            let mut entries = Vec::with_capacity(2);
            if load > 0 {
                entries.push((load_row(n), -f64::from(load)));
            }
            entries.push((wsum_row(n), 1.0));
            columns.push(Column {
                cost: cost_table[load as usize],
                lower: 0.0,
                upper: 1.0,
                entries,
            });
        }
    }
    let y_offset = columns.len();
    for (d, device) in devices.iter().enumerate() {
        columns.push(Column {
            cost: device.idle_j,
            lower: 0.0,
            upper: 1.0,
            entries: vec![(link_row(d), -device.big_m)],
        });
    }

    Ok(Model {
        clinics,
        tuples,
        nodes,
        devices,
        cost_table,
        server_table,
        lp: LinearProgram {
            row_kinds,
            rhs,
            columns,
        },
        w_offsets,
        y_offset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{DevicePowerProfile, PowerModel};
    use crate::timing::{ServerSpec, SignalSpec};
    use crate::topology::{BaseStation, Clinic, Olt, Ont, Topology};
    use std::collections::BTreeMap;

    fn two_node_problem(geo: bool) -> PlacementProblem {
        let topology = Topology::new(
            vec![Clinic {
                id: 0,
                patient_count: 2,
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
        );
        let power = PowerModel {
            base_station: DevicePowerProfile {
                max_power: 528.0,
                idle_power: 333.0,
                capacity: 0.3e9,
                shared: true,
                idle_share: 0.003,
            },
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
            ethernet_switch: DevicePowerProfile {
                max_power: 3.52,
                idle_power: 0.57,
                capacity: 16e9,
                shared: false,
                idle_share: 1.0,
            },
        };
        PlacementProblem {
            topology,
            signal: SignalSpec {
                ecg_bits: 252_800.0,
                result_bits: 256.0,
                recording_time: 30.0,
            },
            server: ServerSpec {
                pat_cap: 4,
                proc_slope: 0.002,
                proc_intercept: 4.6857,
                power: DevicePowerProfile {
                    max_power: 180.0,
                    idle_power: 78.0,
                    capacity: 4.0,
                    shared: false,
                    idle_share: 1.0,
                },
            },
            power,
            demand: BTreeMap::from([(0u32, 2u32)]),
            servers_per_node: 2,
            geo_constraint: geo,
            duplicate_results: false,
            healthcare_share: 0.003,
            re_rate: 336.0,
            window: 240.0,
        }
    }

    #[test]
    fn geo_removes_colocated_tuples() {
        let free = formulate(&two_node_problem(false)).unwrap();
        let geo = formulate(&two_node_problem(true)).unwrap();
        // 1 clinic x 1 bs x 2 nodes x 2 nodes, minus the 2 diagonal pairs.
        assert_eq!(free.tuple_count(), 4);
        assert_eq!(geo.tuple_count(), 2);
        assert!(geo.tuples.iter().all(|t| t.key.primary != t.key.backup));
    }

    #[test]
    fn load_domain_is_capped_by_demand() {
        let model = formulate(&two_node_problem(false)).unwrap();
        // 2 patients -> loads 0..=4 even though N * Pat = 8.
        assert_eq!(model.node_capacity(), 4);
    }

    #[test]
    fn cost_table_starts_at_zero_and_grows() {
        let model = formulate(&two_node_problem(false)).unwrap();
        assert_eq!(model.cost_table[0], 0.0);
        assert_eq!(model.server_table[0], 0);
        for l in 1..model.cost_table.len() {
            assert!(model.cost_table[l] > 0.0);
            assert!(model.server_table[l] >= 1);
        }
        // One server suffices up to Pat, two beyond.
        assert_eq!(model.server_table[4], 1);
    }

    #[test]
    fn extract_placement_derives_servers() {
        let model = formulate(&two_node_problem(false)).unwrap();
        let mut counts = vec![0u32; model.tuple_count()];
        // Find the colocated tuple at the first node and assign everything.
        let idx = model
            .tuples
            .iter()
            .position(|t| t.primary_idx == 0 && t.backup_idx == 0)
            .unwrap();
        counts[idx] = 2;
        let placement = model.extract_placement(&counts);
        assert_eq!(placement.node_loads().get(&model.nodes[0].id), Some(&4));
        assert_eq!(placement.servers.get(&model.nodes[0].id), Some(&1));
    }
}
