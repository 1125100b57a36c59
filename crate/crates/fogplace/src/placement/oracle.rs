//! Exhaustive reference solver for tiny instances.
//!
//! Enumerates every distribution of each clinic's patients over its
//! (base station, primary, backup) tuples, subject only to node capacity,
//! and keeps the best candidate under the same energy accounting and
//! tie-break rules as the branch-and-bound. Intended for cross-checking;
//! refuses instances beyond desk scale.

use crate::placement::model::{formulate, Model};
use crate::placement::{
    verify, Optimality, Placement, PlacementProblem, Solution, SolveError, SolveStats,
};

const MAX_NODES: usize = 4;
const MAX_CLINICS: usize = 4;
const MAX_DEMAND: u32 = 8;
const MAX_LEAVES: u64 = 50_000_000;

struct Enumeration<'a> {
    model: &'a Model,
    problem: &'a PlacementProblem,
    capacity: u32,
    /// Tuple index ranges per clinic, in clinic order.
    clinic_ranges: Vec<(usize, usize)>,
    loads: Vec<u32>,
    device_refs: Vec<u32>,
    counts: Vec<u32>,
    linear: f64,
    leaves: u64,
    best: Option<(f64, Vec<u32>)>,
}

impl Enumeration<'_> {
    fn objective_at_leaf(&self) -> f64 {
        let mut total = self.linear;
        for (d, &refs) in self.device_refs.iter().enumerate() {
            if refs > 0 {
                total += self.model.devices[d].idle_j;
            }
        }
        for &load in &self.loads {
            total += self.model.cost_table[load as usize];
        }
        total
    }

    fn record_leaf(&mut self) -> Result<(), SolveError> {
        self.leaves += 1;
        if self.leaves > MAX_LEAVES {
            return Err(SolveError::OracleBounds(format!(
                "more than {MAX_LEAVES} assignments to enumerate"
            )));
        }
        let objective = self.objective_at_leaf();
        let replace = match &self.best {
            None => true,
            Some((best_obj, best_counts)) => {
                let eps = 1e-9 * best_obj.abs().max(1.0);
                if objective < best_obj - eps {
                    true
                } else if objective > best_obj + eps {
                    false
                } else {
                    // Same tie-break as the exact solver: smallest activated
                    // node set, then smallest assignment table.
                    let cand = self.model.extract_placement(&self.counts);
                    let inc = self.model.extract_placement(best_counts);
                    match cand.active_nodes().cmp(&inc.active_nodes()) {
                        std::cmp::Ordering::Less => true,
                        std::cmp::Ordering::Greater => false,
                        std::cmp::Ordering::Equal => cand.assignments < inc.assignments,
                    }
                }
            }
        };
        if replace {
            self.best = Some((objective, self.counts.clone()));
        }
        Ok(())
    }

    fn assign(&mut self, tuple_idx: usize, patients: u32) {
        let tuple = &self.model.tuples[tuple_idx];
        self.counts[tuple_idx] += patients;
        self.loads[tuple.primary_idx] += patients;
        self.loads[tuple.backup_idx] += patients;
        self.linear += tuple.energy_per_patient * f64::from(patients);
        for &d in &tuple.devices {
            self.device_refs[d as usize] += patients;
        }
    }

    fn unassign(&mut self, tuple_idx: usize, patients: u32) {
        let tuple = &self.model.tuples[tuple_idx];
        self.counts[tuple_idx] -= patients;
        self.loads[tuple.primary_idx] -= patients;
        self.loads[tuple.backup_idx] -= patients;
        self.linear -= tuple.energy_per_patient * f64::from(patients);
        for &d in &tuple.devices {
            self.device_refs[d as usize] -= patients;
        }
    }

    fn fit(&self, tuple_idx: usize) -> u32 {
        let tuple = &self.model.tuples[tuple_idx];
        if tuple.primary_idx == tuple.backup_idx {
            (self.capacity - self.loads[tuple.primary_idx]) / 2
        } else {
            (self.capacity - self.loads[tuple.primary_idx])
                .min(self.capacity - self.loads[tuple.backup_idx])
        }
    }

    fn recurse(&mut self, clinic: usize, tuple: usize, remaining: u32) -> Result<(), SolveError> {
        if clinic == self.clinic_ranges.len() {
            return self.record_leaf();
        }
        let (start, end) = self.clinic_ranges[clinic];
        let at = start + tuple;
        if remaining == 0 {
            return self.recurse(clinic + 1, 0, self.demand_of(clinic + 1));
        }
        if at == end {
            return Ok(()); // patients left over, infeasible branch
        }
        let max_here = remaining.min(self.fit(at));
        // Last tuple of the clinic must absorb the remainder.
        if at + 1 == end {
            if max_here == remaining {
                self.assign(at, remaining);
                self.recurse(clinic + 1, 0, self.demand_of(clinic + 1))?;
                self.unassign(at, remaining);
            }
            return Ok(());
        }
        for take in 0..=max_here {
            if take > 0 {
                self.assign(at, take);
            }
            self.recurse(clinic, tuple + 1, remaining - take)?;
            if take > 0 {
                self.unassign(at, take);
            }
        }
        Ok(())
    }

    fn demand_of(&self, clinic: usize) -> u32 {
        if clinic < self.model.clinics.len() {
            self.model.clinics[clinic].1
        } else {
            0
        }
    }

    fn run(&mut self) -> Result<(), SolveError> {
        let first_demand = self.demand_of(0);
        if self.clinic_ranges.is_empty() {
            return self.record_leaf();
        }
        self.recurse(0, 0, first_demand)
    }
}

pub fn solve(problem: &PlacementProblem) -> Result<Solution, SolveError> {
    let nodes = problem.candidate_node_ids();
    if nodes.len() > MAX_NODES {
        return Err(SolveError::OracleBounds(format!(
            "{} candidate nodes exceed the oracle limit of {MAX_NODES}",
            nodes.len()
        )));
    }
    let clinic_count = problem.demand.values().filter(|&&d| d > 0).count();
    if clinic_count > MAX_CLINICS {
        return Err(SolveError::OracleBounds(format!(
            "{clinic_count} clinics exceed the oracle limit of {MAX_CLINICS}"
        )));
    }
    let demand = problem.total_demand();
    if demand > MAX_DEMAND {
        return Err(SolveError::OracleBounds(format!(
            "total demand {demand} exceeds the oracle limit of {MAX_DEMAND}"
        )));
    }

    let model = formulate(problem)?;
    let mut clinic_ranges = Vec::with_capacity(model.clinics.len());
    let mut start = 0usize;
    for clinic_idx in 0..model.clinics.len() {
        let end = model
            .tuples
            .iter()
            .position(|t| t.clinic_idx > clinic_idx)
            .unwrap_or(model.tuples.len());
        clinic_ranges.push((start, end));
        start = end;
    }

    let mut enumeration = Enumeration {
        capacity: model.node_capacity(),
        clinic_ranges,
        loads: vec![0; model.nodes.len()],
        device_refs: vec![0; model.devices.len()],
        counts: vec![0; model.tuples.len()],
        linear: 0.0,
        leaves: 0,
        best: None,
        model: &model,
        problem,
    };
    enumeration.run()?;

    let (_, counts) = enumeration
        .best
        .ok_or_else(|| SolveError::Infeasible("no feasible assignment enumerated".to_string()))?;
    let placement = model.extract_placement(&counts);
    debug_assert!(verify(&placement, problem).is_empty());
    let energy = problem.evaluate(&placement)?;
    Ok(Solution {
        objective: energy.grand_total,
        placement,
        energy,
        optimality: Optimality {
            proven_optimal: true,
            bound_gap: 0.0,
        },
        stats: SolveStats {
            oracle_leaves: enumeration.leaves,
            ..SolveStats::default()
        },
    })
}
