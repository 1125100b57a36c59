//! Minimum-energy placement of primary and backup processing servers at the
//! access network's candidate nodes.
//!
//! [`solve_exact`] runs a deterministic branch-and-bound over an LP
//! relaxation solved by the in-repo simplex; [`solve_oracle`] exhaustively
//! enumerates tiny instances under the identical energy accounting and is
//! used to cross-check the solver.

mod branch_bound;
mod model;
mod oracle;
mod simplex;

pub use model::{formulate, Model};
pub use simplex::{Column, LinearProgram, LpResult, LpSolution, RowKind, SimplexSolver};

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::energy::{energy_report, EnergyContext, EnergyError, EnergyReport, PowerModel};
use crate::timing::{build_rate_plan, RatePlan, ServerSpec, SignalSpec, TimingError};
use crate::topology::{DeviceId, Topology};

/// One group of identically routed patients: a clinic, the base station they
/// attach through, and the nodes hosting their primary and backup servers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct AssignmentKey {
    pub clinic: u32,
    pub bs: u32,
    pub primary: DeviceId,
    pub backup: DeviceId,
}

/// Integer patient assignments plus active server counts per node.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Placement {
    pub assignments: BTreeMap<AssignmentKey, u32>,
    pub servers: BTreeMap<DeviceId, u32>,
}

impl Placement {
    /// Combined primary plus backup patient load per node.
    pub fn node_loads(&self) -> BTreeMap<DeviceId, u32> {
        let mut loads = BTreeMap::new();
        for (key, &count) in &self.assignments {
            if count == 0 {
                continue;
            }
            *loads.entry(key.primary).or_insert(0) += count;
            *loads.entry(key.backup).or_insert(0) += count;
        }
        loads
    }

    pub fn total_servers(&self) -> u32 {
        self.servers.values().sum()
    }

    /// Nodes hosting at least one server, in id order.
    pub fn active_nodes(&self) -> Vec<DeviceId> {
        self.servers
            .iter()
            .filter(|(_, &s)| s > 0)
            .map(|(&n, _)| n)
            .collect()
    }

    /// Per-server load multiset in descending order, across all nodes.
    pub fn server_load_multiset(&self, pat_cap: u32) -> Vec<u32> {
        let _ = pat_cap;
        let loads = self.node_loads();
        let mut all = Vec::new();
        for (&node, &servers) in &self.servers {
            let load = loads.get(&node).copied().unwrap_or(0);
            all.extend(crate::energy::split_server_load(load, servers));
        }
        all.sort_unstable_by(|a, b| b.cmp(a));
        all
    }
}

/// A full problem instance: topology, device models, scaled demand and the
/// scenario knobs.
#[derive(Clone, Debug)]
pub struct PlacementProblem {
    pub topology: Topology,
    pub signal: SignalSpec,
    pub server: ServerSpec,
    pub power: PowerModel,
    /// Patients per clinic after demand scaling.
    pub demand: BTreeMap<u32, u32>,
    /// Per-node server cap (the scenario's N).
    pub servers_per_node: u32,
    /// Forbid colocating a patient's primary and backup servers.
    pub geo_constraint: bool,
    pub duplicate_results: bool,
    pub healthcare_share: f64,
    /// Rate of one resource element in b/s.
    pub re_rate: f64,
    /// Monitoring window in seconds.
    pub window: f64,
}

impl PlacementProblem {
    pub fn total_demand(&self) -> u32 {
        self.demand.values().sum()
    }

    /// Candidate node ids in deterministic order (ONTs then OLTs by id).
    pub fn candidate_node_ids(&self) -> Vec<DeviceId> {
        self.topology
            .candidate_nodes(self.servers_per_node)
            .iter()
            .map(|n| n.id)
            .collect()
    }

    /// The scenario rate plan, sized for fully loaded nodes.
    pub fn rate_plan(&self) -> Result<RatePlan, TimingError> {
        build_rate_plan(
            &self.topology,
            &self.signal,
            &self.server,
            self.servers_per_node,
            self.healthcare_share,
            self.re_rate,
            self.window,
        )
    }

    pub fn energy_context(&self) -> EnergyContext<'_> {
        EnergyContext {
            topology: &self.topology,
            power: &self.power,
            signal: &self.signal,
            server: &self.server,
            window: self.window,
            duplicate_results: self.duplicate_results,
        }
    }

    /// Evaluates the full energy report of a placement under this problem.
    pub fn evaluate(&self, placement: &Placement) -> Result<EnergyReport, EnergyError> {
        energy_report(&self.energy_context(), placement)
    }
}

/// Solver optimality status.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Optimality {
    pub proven_optimal: bool,
    pub bound_gap: f64,
}

/// Search statistics, for logs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub nodes_explored: u64,
    pub lp_iterations: u64,
    pub oracle_leaves: u64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub placement: Placement,
    pub energy: EnergyReport,
    pub objective: f64,
    pub optimality: Optimality,
    pub stats: SolveStats,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("timing plan infeasible: {0}")]
    Timing(#[from] TimingError),
    #[error(
        "total demand {demand} needs {required} server slots but only {available} exist \
         ({nodes} nodes x {per_node} servers)"
    )]
    CapacityExceeded {
        demand: u32,
        required: u64,
        available: u64,
        nodes: usize,
        per_node: u32,
    },
    #[error("geographic separation needs at least two candidate nodes, found {nodes}")]
    GeoImpossible { nodes: usize },
    #[error("no feasible placement: {0}")]
    Infeasible(String),
    #[error("energy accounting failed: {0}")]
    Energy(#[from] EnergyError),
    #[error("instance exceeds oracle enumeration bounds: {0}")]
    OracleBounds(String),
    #[error("numerical failure in LP solve: {0}")]
    Numerical(String),
}

/// A violated placement invariant, reported by [`verify`].
#[derive(Clone, Debug, PartialEq)]
pub enum PlacementViolation {
    Coverage {
        clinic: u32,
        assigned: u32,
        demand: u32,
    },
    UnknownClinic {
        clinic: u32,
    },
    BsNotCandidate {
        clinic: u32,
        bs: u32,
    },
    UnknownNode {
        node: DeviceId,
    },
    NodeCapacity {
        node: DeviceId,
        load: u32,
        capacity: u32,
    },
    ServerCapExceeded {
        node: DeviceId,
        servers: u32,
        max: u32,
    },
    GeoColocated {
        clinic: u32,
        node: DeviceId,
    },
}

impl fmt::Display for PlacementViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlacementViolation::Coverage {
                clinic,
                assigned,
                demand,
            } => write!(
                f,
                "clinic {clinic} has {assigned} patients assigned but demands {demand}"
            ),
            PlacementViolation::UnknownClinic { clinic } => {
                write!(f, "assignment references unknown clinic {clinic}")
            }
            PlacementViolation::BsNotCandidate { clinic, bs } => {
                write!(f, "clinic {clinic} cannot attach through base station {bs}")
            }
            PlacementViolation::UnknownNode { node } => {
                write!(f, "{node} is not a candidate server node")
            }
            PlacementViolation::NodeCapacity {
                node,
                load,
                capacity,
            } => write!(
                f,
                "node {node} carries {load} patients beyond its server capacity {capacity}"
            ),
            PlacementViolation::ServerCapExceeded { node, servers, max } => {
                write!(f, "node {node} hosts {servers} servers, cap is {max}")
            }
            PlacementViolation::GeoColocated { clinic, node } => write!(
                f,
                "clinic {clinic} places primary and backup at the same node {node} \
                 despite the geographic constraint"
            ),
        }
    }
}

/// Checks every placement invariant against the problem; empty means valid.
pub fn verify(placement: &Placement, problem: &PlacementProblem) -> Vec<PlacementViolation> {
    let mut violations = Vec::new();
    let candidates = problem.candidate_node_ids();
    let is_candidate = |node: DeviceId| candidates.contains(&node);

    let mut assigned: BTreeMap<u32, u32> = BTreeMap::new();
    for (key, &count) in &placement.assignments {
        if count == 0 {
            continue;
        }
        *assigned.entry(key.clinic).or_insert(0) += count;
        match problem.topology.clinic(key.clinic) {
            None => violations.push(PlacementViolation::UnknownClinic { clinic: key.clinic }),
            Some(clinic) => {
                if !clinic.candidate_bs.contains(&key.bs) {
                    violations.push(PlacementViolation::BsNotCandidate {
                        clinic: key.clinic,
                        bs: key.bs,
                    });
                }
            }
        }
        for node in [key.primary, key.backup] {
            if !is_candidate(node) {
                violations.push(PlacementViolation::UnknownNode { node });
            }
        }
        if problem.geo_constraint && key.primary == key.backup {
            violations.push(PlacementViolation::GeoColocated {
                clinic: key.clinic,
                node: key.primary,
            });
        }
    }

    for (&clinic, &demand) in &problem.demand {
        let got = assigned.get(&clinic).copied().unwrap_or(0);
        if got != demand {
            violations.push(PlacementViolation::Coverage {
                clinic,
                assigned: got,
                demand,
            });
        }
    }
    for (&clinic, &got) in &assigned {
        if !problem.demand.contains_key(&clinic) && got > 0 {
            violations.push(PlacementViolation::Coverage {
                clinic,
                assigned: got,
                demand: 0,
            });
        }
    }

    let loads = placement.node_loads();
    for (&node, &load) in &loads {
        let servers = placement.servers.get(&node).copied().unwrap_or(0);
        let capacity = servers * problem.server.pat_cap;
        if load > capacity {
            violations.push(PlacementViolation::NodeCapacity {
                node,
                load,
                capacity,
            });
        }
    }
    for (&node, &servers) in &placement.servers {
        if servers > problem.servers_per_node {
            violations.push(PlacementViolation::ServerCapExceeded {
                node,
                servers,
                max: problem.servers_per_node,
            });
        }
        if servers > 0 && !is_candidate(node) {
            violations.push(PlacementViolation::UnknownNode { node });
        }
    }
    violations
}

/// Shared feasibility preflight for both solvers: timing plan, aggregate
/// capacity and the minimum node count for geographic separation.
fn preflight(problem: &PlacementProblem) -> Result<RatePlan, SolveError> {
    let plan = problem.rate_plan()?;
    let demand = problem.total_demand();
    let nodes = problem.candidate_node_ids().len();
    let required = 2 * u64::from(demand);
    let available =
        nodes as u64 * u64::from(problem.servers_per_node) * u64::from(problem.server.pat_cap);
    if required > available {
        return Err(SolveError::CapacityExceeded {
            demand,
            required,
            available,
            nodes,
            per_node: problem.servers_per_node,
        });
    }
    if problem.geo_constraint && demand > 0 && nodes < 2 {
        return Err(SolveError::GeoImpossible { nodes });
    }
    Ok(plan)
}

/// Exact solve via branch-and-bound; returns a proven-optimal solution and
/// is deterministic for identical input.
pub fn solve_exact(problem: &PlacementProblem) -> Result<Solution, SolveError> {
    let _plan = preflight(problem)?;
    if problem.total_demand() == 0 {
        let placement = Placement::default();
        let energy = problem.evaluate(&placement)?;
        return Ok(Solution {
            placement,
            objective: energy.grand_total,
            energy,
            optimality: Optimality {
                proven_optimal: true,
                bound_gap: 0.0,
            },
            stats: SolveStats::default(),
        });
    }
    let model = model::formulate(problem)?;
    branch_bound::solve(problem, &model)
}

/// Exhaustive enumeration for tiny instances, evaluating candidates with the
/// same energy accounting as [`solve_exact`].
pub fn solve_oracle(problem: &PlacementProblem) -> Result<Solution, SolveError> {
    let _plan = preflight(problem)?;
    oracle::solve(problem)
}
