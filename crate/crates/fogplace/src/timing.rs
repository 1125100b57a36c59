//! Processing-time model, resource-element-granular rate allocations and the
//! end-to-end monitoring deadline check.
//!
//! A monitoring round must fit in the window `tau_t`: record the signal
//! (`tau_m`), upload it to the servers (`tau_a`), process it (`tau_p`) and
//! return the result to the clinic (`tau_b`). Upload and feedback run over
//! radio resource elements, so their rates are quantized to multiples of the
//! per-RE rate; the wired storage path is plain capacity division.

use thiserror::Error;

use crate::energy::DevicePowerProfile;
use crate::topology::{DeviceId, Topology};

/// Sizes and recording time of the monitored signal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignalSpec {
    /// Size of one recorded signal in bits.
    pub ecg_bits: f64,
    /// Size of one processed result in bits.
    pub result_bits: f64,
    /// Recording time in seconds.
    pub recording_time: f64,
}

/// A processing server: patient capacity, affine processing-time model and
/// power profile.
#[derive(Clone, Debug, PartialEq)]
pub struct ServerSpec {
    /// Maximum patients one server can serve.
    pub pat_cap: u32,
    /// Seconds of processing per additional patient.
    pub proc_slope: f64,
    /// Fixed processing overhead in seconds.
    pub proc_intercept: f64,
    pub power: DevicePowerProfile,
}

impl ServerSpec {
    /// Processing-and-analysis duration for `pat` patients on one server.
    pub fn processing_time(&self, pat: u32) -> Result<f64, TimingError> {
        if pat > self.pat_cap {
            return Err(TimingError::ServerOverCapacity {
                patients: pat,
                cap: self.pat_cap,
            });
        }
        Ok(self.proc_slope * f64::from(pat) + self.proc_intercept)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TimingError {
    #[error("{patients} patients exceed the per-server capacity of {cap}")]
    ServerOverCapacity { patients: u32, cap: u32 },
    #[error(
        "feedback share {share:.3} b/s per patient is below one resource element ({re_rate} b/s)"
    )]
    FeedbackBelowOneRe { share: f64, re_rate: f64 },
    #[error(
        "upload rate {granted:.3} b/s per patient is below the required {required:.3} b/s"
    )]
    UploadTooSlow { granted: f64, required: f64 },
    #[error("deadline budget leaves no upload time: {max_upload:.3} s")]
    NoUploadTime { max_upload: f64 },
    #[error("routing failed while scanning bottlenecks: {0}")]
    Route(String),
}

/// Maximum patients servable at one candidate node hosting `n_servers`
/// servers of capacity `pat_cap`.
pub fn max_patients_per_node(n_servers: u32, pat_cap: u32) -> u32 {
    n_servers * pat_cap
}

/// Portion of a link reserved for the monitoring application.
pub fn healthcare_share(link_capacity: f64, share_fraction: f64) -> f64 {
    link_capacity * share_fraction
}

/// Feedback-rate allocation for one patient. Grants the largest whole number
/// of resource elements whose rate does not exceed the per-patient share.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeedbackAllocation {
    /// Per-patient share of the bottleneck capacity, b/s.
    pub share_rate: f64,
    /// Granted resource elements per patient.
    pub re_count: u32,
    /// Granted feedback rate, b/s.
    pub rate: f64,
    /// Time to deliver one result, seconds.
    pub time: f64,
}

pub fn feedback_allocation(
    bottleneck_capacity: f64,
    max_p: u32,
    re_rate: f64,
    result_bits: f64,
) -> Result<FeedbackAllocation, TimingError> {
    let share_rate = bottleneck_capacity / f64::from(max_p);
    let re_count = whole_res(share_rate, re_rate);
    if re_count < 1 {
        return Err(TimingError::FeedbackBelowOneRe {
            share: share_rate,
            re_rate,
        });
    }
    let rate = re_rate * f64::from(re_count);
    Ok(FeedbackAllocation {
        share_rate,
        re_count,
        rate,
        time: result_bits / rate,
    })
}

/// Upload-rate allocation for one patient, RE-granular, checked against the
/// deadline-derived minimum rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UploadAllocation {
    pub re_count: u32,
    /// Granted upload rate, b/s.
    pub rate: f64,
    /// Time to upload one recording, seconds.
    pub time: f64,
}

pub fn upload_allocation(
    bs_capacity_share: f64,
    max_p: u32,
    ecg_bits: f64,
    max_upload_time: f64,
    re_rate: f64,
) -> Result<UploadAllocation, TimingError> {
    if !(max_upload_time > 0.0) {
        return Err(TimingError::NoUploadTime {
            max_upload: max_upload_time,
        });
    }
    let per_patient = bs_capacity_share / f64::from(max_p);
    let re_count = whole_res(per_patient, re_rate);
    let rate = re_rate * f64::from(re_count);
    let required = ecg_bits / max_upload_time;
    if rate < required {
        return Err(TimingError::UploadTooSlow {
            granted: rate,
            required,
        });
    }
    Ok(UploadAllocation {
        re_count,
        rate,
        time: ecg_bits / rate,
    })
}

/// Storage-rate allocation toward the cloud; wired, so not RE-granular.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StorageAllocation {
    /// Granted storage rate, b/s.
    pub rate: f64,
    /// Time to ship one result to storage, seconds.
    pub time: f64,
}

pub fn storage_allocation(cloud_bottleneck: f64, max_p: u32, result_bits: f64) -> StorageAllocation {
    let rate = cloud_bottleneck / f64::from(max_p);
    StorageAllocation {
        rate,
        time: result_bits / rate,
    }
}

fn whole_res(rate: f64, re_rate: f64) -> u32 {
    let count = (rate / re_rate).floor();
    if count.is_finite() && count >= 0.0 {
        count.min(f64::from(u32::MAX)) as u32
    } else if count.is_infinite() && count > 0.0 {
        u32::MAX
    } else {
        0
    }
}

/// Deadline budget: the full window and the upload time left after recording,
/// worst-case processing and feedback.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimingBudget {
    /// Total window, seconds.
    pub total: f64,
    /// Upload time available after the other components, seconds.
    pub max_upload: f64,
}

/// The bottleneck capacities (healthcare share applied) that sized the plan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateBottlenecks {
    pub feedback: f64,
    pub upload: f64,
    pub storage: f64,
}

/// Complete per-patient rate plan for one scenario, sized for the worst case
/// of fully loaded nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatePlan {
    pub feedback: FeedbackAllocation,
    pub upload: UploadAllocation,
    pub storage: StorageAllocation,
    /// Rate of a single resource element, b/s.
    pub re_rate: f64,
    pub budget: TimingBudget,
    pub bottlenecks: RateBottlenecks,
}

/// Feasibility verdict of the deadline check, with the remaining slack.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BudgetCheck {
    pub feasible: bool,
    /// `total - used`; negative when infeasible.
    pub slack: f64,
    pub used: f64,
}

/// Checks that recording, upload, processing of `pat` patients and feedback
/// fit in the window.
pub fn check_budget(
    plan: &RatePlan,
    signal: &SignalSpec,
    server: &ServerSpec,
    pat: u32,
) -> Result<BudgetCheck, TimingError> {
    let used =
        signal.recording_time + plan.upload.time + server.processing_time(pat)? + plan.feedback.time;
    let slack = plan.budget.total - used;
    Ok(BudgetCheck {
        feasible: slack >= 0.0,
        slack,
        used,
    })
}

/// Builds the scenario rate plan from the topology's worst-case bottlenecks.
///
/// The feedback and upload bottlenecks scan every route between a clinic
/// candidate base station and a candidate server node; the storage bottleneck
/// scans every route from a candidate node to the cloud. Each link
/// contributes its healthcare share, and the minimum along a route bounds
/// that route. Rates then divide the worst route bottleneck by the maximum
/// patients a fully equipped node can serve.
pub fn build_rate_plan(
    topology: &Topology,
    signal: &SignalSpec,
    server: &ServerSpec,
    n_servers: u32,
    share_fraction: f64,
    re_rate: f64,
    window: f64,
) -> Result<RatePlan, TimingError> {
    let max_p = max_patients_per_node(n_servers, server.pat_cap);
    let nodes: Vec<DeviceId> = topology
        .candidate_nodes(n_servers)
        .iter()
        .map(|n| n.id)
        .collect();

    let mut serving_bs: Vec<u32> = topology
        .clinics
        .iter()
        .flat_map(|c| c.candidate_bs.iter().copied())
        .collect();
    serving_bs.sort_unstable();
    serving_bs.dedup();

    let route_share = |from: DeviceId, to: DeviceId| -> Result<f64, TimingError> {
        let path = topology
            .route(from, to)
            .map_err(|e| TimingError::Route(e.to_string()))?;
        Ok(path
            .min_link_capacity()
            .map(|c| healthcare_share(c, share_fraction))
            .unwrap_or(f64::INFINITY))
    };

    let mut access_bottleneck = f64::INFINITY;
    for &bs in &serving_bs {
        for &node in &nodes {
            access_bottleneck = access_bottleneck.min(route_share(DeviceId::Bs(bs), node)?);
        }
    }
    let mut storage_bottleneck = f64::INFINITY;
    for &node in &nodes {
        storage_bottleneck = storage_bottleneck.min(route_share(node, DeviceId::Cloud)?);
    }

    let feedback = feedback_allocation(access_bottleneck, max_p, re_rate, signal.result_bits)?;
    let worst_processing = server.processing_time(server.pat_cap)?;
    let max_upload = window - signal.recording_time - worst_processing - feedback.time;
    if !(max_upload > 0.0) {
        return Err(TimingError::NoUploadTime { max_upload });
    }
    let upload = upload_allocation(
        access_bottleneck,
        max_p,
        signal.ecg_bits,
        max_upload,
        re_rate,
    )?;
    let storage = storage_allocation(storage_bottleneck, max_p, signal.result_bits);

    Ok(RatePlan {
        feedback,
        upload,
        storage,
        re_rate,
        budget: TimingBudget {
            total: window,
            max_upload,
        },
        bottlenecks: RateBottlenecks {
            feedback: access_bottleneck,
            upload: access_bottleneck,
            storage: storage_bottleneck,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relative_eq(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    fn test_server() -> ServerSpec {
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

    #[test]
    fn processing_time_matches_fitted_model() {
        let server = test_server();
        assert!(relative_eq(server.processing_time(60).unwrap(), 4.8057, 1e-12));
        assert!(relative_eq(server.processing_time(0).unwrap(), 4.6857, 1e-12));
    }

    #[test]
    fn processing_time_rejects_over_capacity() {
        let server = test_server();
        assert_eq!(
            server.processing_time(120),
            Err(TimingError::ServerOverCapacity {
                patients: 120,
                cap: 60
            })
        );
    }

    #[test]
    fn node_capacity_is_servers_times_cap() {
        assert_eq!(max_patients_per_node(2, 60), 120);
        assert_eq!(max_patients_per_node(4, 60), 240);
        assert_eq!(max_patients_per_node(1, 1), 1);
    }

    #[test]
    fn healthcare_share_scales_capacity() {
        assert!(relative_eq(healthcare_share(1.25e9, 0.003), 3.75e6, 1e-12));
        assert_eq!(healthcare_share(7.0e8, 1.0), 7.0e8);
        assert!(relative_eq(healthcare_share(16e9, 0.003), 4.8e7, 1e-12));
    }

    #[test]
    fn feedback_allocation_grants_whole_res() {
        // 3.75e6 / 120 = 31250 b/s per patient; 93 REs of 336 b/s fit.
        let alloc = feedback_allocation(3.75e6, 120, 336.0, 256.0).unwrap();
        assert_eq!(alloc.re_count, 93);
        assert!(relative_eq(alloc.rate, 31_248.0, 1e-9));
        assert!(relative_eq(alloc.time, 256.0 / 31_248.0, 1e-9));
    }

    #[test]
    fn feedback_allocation_single_re_boundary() {
        let alloc = feedback_allocation(336.0, 1, 336.0, 256.0).unwrap();
        assert_eq!(alloc.re_count, 1);
        assert_eq!(alloc.rate, 336.0);
        assert!(relative_eq(alloc.time, 256.0 / 336.0, 1e-12));

        assert!(matches!(
            feedback_allocation(335.0, 1, 336.0, 256.0),
            Err(TimingError::FeedbackBelowOneRe { .. })
        ));
    }

    #[test]
    fn feedback_re_count_is_maximal() {
        for bottleneck in [3.75e6, 9e5, 1.6e7, 336.0 * 7.0] {
            let alloc = feedback_allocation(bottleneck, 120, 336.0, 256.0);
            if let Ok(alloc) = alloc {
                assert!(336.0 * f64::from(alloc.re_count) <= alloc.share_rate + 1e-9);
                assert!(336.0 * f64::from(alloc.re_count + 1) > alloc.share_rate);
            }
        }
    }

    #[test]
    fn upload_allocation_floors_to_res_and_meets_deadline() {
        // 9e5 / 120 = 7500 b/s raw; 22 REs -> 7392 b/s; 252800 / 7392 ~ 34.2 s.
        let alloc = upload_allocation(9e5, 120, 252_800.0, 180.0, 336.0).unwrap();
        assert_eq!(alloc.re_count, 22);
        assert!(relative_eq(alloc.rate, 7392.0, 1e-9));
        assert!(relative_eq(alloc.time, 252_800.0 / 7392.0, 1e-9));
        assert!(alloc.time <= 180.0);
    }

    #[test]
    fn upload_allocation_boundary_hits_deadline_exactly() {
        // Rate lands exactly on the minimum: time == max upload time.
        let ecg = 336.0 * 10.0 * 50.0; // 10 REs for 50 s
        let alloc = upload_allocation(336.0 * 10.0, 1, ecg, 50.0, 336.0).unwrap();
        assert_eq!(alloc.re_count, 10);
        assert!(relative_eq(alloc.time, 50.0, 1e-12));
    }

    #[test]
    fn upload_allocation_rejects_slow_rates() {
        // Huge patient count starves the per-patient rate.
        assert!(matches!(
            upload_allocation(9e5, 100_000, 252_800.0, 180.0, 336.0),
            Err(TimingError::UploadTooSlow { .. })
        ));
    }

    #[test]
    fn storage_allocation_divides_bottleneck() {
        let alloc = storage_allocation(3.75e6, 120, 256.0);
        assert!(relative_eq(alloc.rate, 31_250.0, 1e-12));
        assert!(relative_eq(alloc.time, 256.0 / 31_250.0, 1e-12));

        let unit = storage_allocation(256.0, 1, 256.0);
        assert!(relative_eq(unit.time, 1.0, 1e-12));

        let doubled = storage_allocation(7.5e6, 120, 256.0);
        assert!(relative_eq(doubled.time, alloc.time / 2.0, 1e-12));
    }

    fn plan_with_components(upload_t: f64, feedback_t: f64, window: f64) -> RatePlan {
        RatePlan {
            feedback: FeedbackAllocation {
                share_rate: 0.0,
                re_count: 1,
                rate: 1.0,
                time: feedback_t,
            },
            upload: UploadAllocation {
                re_count: 1,
                rate: 1.0,
                time: upload_t,
            },
            storage: StorageAllocation { rate: 1.0, time: 0.0 },
            re_rate: 336.0,
            budget: TimingBudget {
                total: window,
                max_upload: window,
            },
            bottlenecks: RateBottlenecks {
                feedback: 0.0,
                upload: 0.0,
                storage: 0.0,
            },
        }
    }

    #[test]
    fn budget_check_sums_all_components() {
        let signal = SignalSpec {
            ecg_bits: 252_800.0,
            result_bits: 256.0,
            recording_time: 30.0,
        };
        let mut server = test_server();
        // Pin processing to exactly 4.8057 s at the checked load.
        server.proc_slope = 0.0;
        server.proc_intercept = 4.8057;
        let plan = plan_with_components(34.2, 0.0082, 240.0);
        let check = check_budget(&plan, &signal, &server, 60).unwrap();
        assert!(check.feasible);
        assert!(relative_eq(check.slack, 240.0 - 69.0139, 1e-9));
    }

    #[test]
    fn budget_check_zero_slack_is_feasible() {
        let signal = SignalSpec {
            ecg_bits: 1.0,
            result_bits: 1.0,
            recording_time: 240.0,
        };
        let mut server = test_server();
        server.proc_slope = 0.0;
        server.proc_intercept = 0.0;
        let plan = plan_with_components(0.0, 0.0, 240.0);
        let check = check_budget(&plan, &signal, &server, 0).unwrap();
        assert!(check.feasible);
        assert_eq!(check.slack, 0.0);
    }

    #[test]
    fn budget_check_upload_consuming_window_is_infeasible() {
        let signal = SignalSpec {
            ecg_bits: 1.0,
            result_bits: 1.0,
            recording_time: 30.0,
        };
        let server = test_server();
        let plan = plan_with_components(240.0, 0.0082, 240.0);
        let check = check_budget(&plan, &signal, &server, 60).unwrap();
        assert!(!check.feasible);
        assert!(check.slack < 0.0);
    }

    #[test]
    fn processing_time_is_affine() {
        let server = test_server();
        for (a, b) in [(0u32, 5u32), (10, 20), (30, 30), (1, 59)] {
            let lhs = server.processing_time(a).unwrap() + server.processing_time(b).unwrap();
            let rhs = server.processing_time(a + b).unwrap() + server.proc_intercept;
            assert!(relative_eq(lhs, rhs, 1e-12));
        }
    }

    #[test]
    fn feasibility_is_monotone_in_patient_count() {
        let signal = SignalSpec {
            ecg_bits: 252_800.0,
            result_bits: 256.0,
            recording_time: 30.0,
        };
        let server = test_server();
        let plan = plan_with_components(34.2, 0.0082, 240.0);
        let mut last_slack = f64::INFINITY;
        for pat in 0..=60 {
            let check = check_budget(&plan, &signal, &server, pat).unwrap();
            assert!(check.slack <= last_slack);
            last_slack = check.slack;
        }
    }
}
