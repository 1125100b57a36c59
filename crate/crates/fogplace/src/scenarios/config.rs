//! Scenario configuration: a TOML document with `[topology]`, `[signal]`,
//! `[power]` and `[sweep]` sections. Every constant outside the topology has
//! a documented default, so a minimal config only describes the network and
//! the clinics.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::energy::{DevicePowerProfile, PowerModel};
use crate::placement::PlacementProblem;
use crate::timing::{ServerSpec, SignalSpec};
use crate::topology::{BaseStation, Clinic, Olt, Ont, Topology};

pub mod defaults {
    pub const ECG_BITS: f64 = 252_800.0;
    pub const RESULT_BITS: f64 = 256.0;
    pub const RECORDING_SECONDS: f64 = 30.0;
    pub const WINDOW_SECONDS: f64 = 240.0;
    pub const RE_RATE: f64 = 336.0;
    pub const HEALTHCARE_SHARE: f64 = 0.003;
    pub const PROC_SLOPE: f64 = 0.002;
    pub const PROC_INTERCEPT: f64 = 4.6857;
    pub const PAT_FRACTION: f64 = 0.20;
    pub const IDLE_SHARE: f64 = 0.003;

    pub const BS_CAPACITY: f64 = 0.3e9;
    pub const ONT_UPSTREAM: f64 = 1.25e9;
    pub const METRO_CAPACITY: f64 = 40e9;
    pub const CLOUD_UPLINK: f64 = 40e9;

    pub const BS_MAX_W: f64 = 528.0;
    pub const BS_IDLE_W: f64 = 333.0;
    /// ONT and OLT electronics are deployment-specific; these are typical
    /// GPON figures, not measured values.
    pub const ONT_MAX_W: f64 = 15.0;
    pub const ONT_IDLE_W: f64 = 8.0;
    pub const ONT_CAPACITY: f64 = 1.25e9;
    pub const OLT_MAX_W: f64 = 1940.0;
    pub const OLT_IDLE_W: f64 = 60.0;
    pub const OLT_CAPACITY: f64 = 20e9;
    pub const SWITCH_MAX_W: f64 = 3.52;
    pub const SWITCH_IDLE_W: f64 = 0.57;
    pub const SWITCH_CAPACITY: f64 = 16e9;
    pub const SERVER_MAX_W: f64 = 180.0;
    pub const SERVER_IDLE_W: f64 = 78.0;

    pub const DEMAND_FRACTIONS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];
    pub const SERVERS_PER_NODE: [u32; 2] = [2, 4];
    pub const GEO_FLAGS: [bool; 2] = [false, true];
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(ValidationErrors),
}

#[derive(Debug)]
pub struct ValidationErrors(pub Vec<String>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} validation error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    topology: RawTopology,
    #[serde(default)]
    signal: RawSignal,
    #[serde(default)]
    power: RawPower,
    #[serde(default)]
    sweep: RawSweep,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    clusters: u32,
    metro_link_capacity: Option<f64>,
    cloud_uplink_capacity: Option<f64>,
    #[serde(default)]
    olts: Vec<RawOlt>,
    #[serde(default)]
    onts: Vec<RawOnt>,
    #[serde(default)]
    base_stations: Vec<RawBs>,
    #[serde(default)]
    clinics: Vec<RawClinic>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOlt {
    id: u32,
    cluster: u32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOnt {
    id: u32,
    olt: u32,
    upstream_capacity: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBs {
    id: u32,
    ont: u32,
    capacity: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClinic {
    id: u32,
    patients: u32,
    base_stations: Vec<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSignal {
    ecg_bits: Option<f64>,
    result_bits: Option<f64>,
    recording_seconds: Option<f64>,
    window_seconds: Option<f64>,
    re_rate: Option<f64>,
    healthcare_share: Option<f64>,
    proc_slope: Option<f64>,
    proc_intercept: Option<f64>,
    pat_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPower {
    idle_share: Option<f64>,
    base_station: Option<RawProfile>,
    ont: Option<RawProfile>,
    olt: Option<RawProfile>,
    ethernet_switch: Option<RawProfile>,
    server: Option<RawServerPower>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    max_w: f64,
    idle_w: f64,
    capacity_bps: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawServerPower {
    max_w: f64,
    idle_w: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    demand_fractions: Option<Vec<f64>>,
    servers_per_node: Option<Vec<u32>>,
    geo: Option<Vec<bool>>,
    duplicate_results: Option<bool>,
}

/// A fully validated scenario: topology, device models, constants and the
/// sweep grid.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub topology: Topology,
    pub signal: SignalSpec,
    pub power: PowerModel,
    pub server_power: DevicePowerProfile,
    pub proc_slope: f64,
    pub proc_intercept: f64,
    pub pat_fraction: f64,
    pub healthcare_share: f64,
    pub re_rate: f64,
    pub window: f64,
    pub demand_fractions: Vec<f64>,
    pub servers_per_node: Vec<u32>,
    pub geo_flags: Vec<bool>,
    pub duplicate_results: bool,
}

impl ScenarioConfig {
    /// Per-server patient capacity: the configured fraction of the full
    /// cohort, at least one.
    pub fn pat_cap(&self) -> u32 {
        let total = self.topology.total_patients();
        ((self.pat_fraction * f64::from(total)).round() as u32).max(1)
    }

    pub fn server_spec(&self) -> ServerSpec {
        let pat_cap = self.pat_cap();
        let mut power = self.server_power;
        power.capacity = f64::from(pat_cap);
        ServerSpec {
            pat_cap,
            proc_slope: self.proc_slope,
            proc_intercept: self.proc_intercept,
            power,
        }
    }

    /// Scales per-clinic demand by `fraction` with largest-remainder
    /// apportionment, so the total equals `round(fraction * total)`.
    pub fn scale_demand(&self, fraction: f64) -> BTreeMap<u32, u32> {
        let total = self.topology.total_patients();
        let target = (fraction * f64::from(total)).round() as u32;
        let mut demand = BTreeMap::new();
        let mut remainders = Vec::new();
        let mut assigned = 0u32;
        for clinic in &self.topology.clinics {
            let share = fraction * f64::from(clinic.patient_count);
            let base = share.floor() as u32;
            assigned += base;
            demand.insert(clinic.id, base);
            remainders.push((clinic.id, share - share.floor()));
        }
        // Largest remainder first; clinic id breaks ties.
        remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut extra = target.saturating_sub(assigned);
        for (clinic_id, _) in remainders {
            if extra == 0 {
                break;
            }
            *demand.get_mut(&clinic_id).unwrap() += 1;
            extra -= 1;
        }
        demand
    }

    /// Builds the placement problem for one grid cell.
    pub fn problem(&self, fraction: f64, servers_per_node: u32, geo: bool) -> PlacementProblem {
        PlacementProblem {
            topology: self.topology.clone(),
            signal: self.signal,
            server: self.server_spec(),
            power: self.power.clone(),
            demand: self.scale_demand(fraction),
            servers_per_node,
            geo_constraint: geo,
            duplicate_results: self.duplicate_results,
            healthcare_share: self.healthcare_share,
            re_rate: self.re_rate,
            window: self.window,
        }
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text)?;
    build(raw)
}

fn profile(
    raw: &Option<RawProfile>,
    default_max: f64,
    default_idle: f64,
    default_capacity: f64,
    shared: bool,
    idle_share: f64,
) -> DevicePowerProfile {
    match raw {
        Some(p) => DevicePowerProfile {
            max_power: p.max_w,
            idle_power: p.idle_w,
            capacity: p.capacity_bps,
            shared,
            idle_share,
        },
        None => DevicePowerProfile {
            max_power: default_max,
            idle_power: default_idle,
            capacity: default_capacity,
            shared,
            idle_share,
        },
    }
}

fn build(raw: RawConfig) -> Result<ScenarioConfig, ConfigError> {
    use defaults as d;

    let topology = Topology::new(
        raw.topology
            .clinics
            .iter()
            .map(|c| Clinic {
                id: c.id,
                patient_count: c.patients,
                candidate_bs: c.base_stations.clone(),
            })
            .collect(),
        raw.topology
            .base_stations
            .iter()
            .map(|b| BaseStation {
                id: b.id,
                ont_id: b.ont,
                capacity: b.capacity.unwrap_or(d::BS_CAPACITY),
            })
            .collect(),
        raw.topology
            .onts
            .iter()
            .map(|o| Ont {
                id: o.id,
                olt_id: o.olt,
                upstream_capacity: o.upstream_capacity.unwrap_or(d::ONT_UPSTREAM),
            })
            .collect(),
        raw.topology
            .olts
            .iter()
            .map(|o| Olt {
                id: o.id,
                cluster_id: o.cluster,
            })
            .collect(),
        raw.topology.clusters,
        raw.topology.metro_link_capacity.unwrap_or(d::METRO_CAPACITY),
        raw.topology.cloud_uplink_capacity.unwrap_or(d::CLOUD_UPLINK),
    );

    let idle_share = raw.power.idle_share.unwrap_or(d::IDLE_SHARE);
    let power = PowerModel {
        base_station: profile(
            &raw.power.base_station,
            d::BS_MAX_W,
            d::BS_IDLE_W,
            d::BS_CAPACITY,
            true,
            idle_share,
        ),
        ont: profile(
            &raw.power.ont,
            d::ONT_MAX_W,
            d::ONT_IDLE_W,
            d::ONT_CAPACITY,
            true,
            idle_share,
        ),
        olt: profile(
            &raw.power.olt,
            d::OLT_MAX_W,
            d::OLT_IDLE_W,
            d::OLT_CAPACITY,
            true,
            idle_share,
        ),
        ethernet_switch: profile(
            &raw.power.ethernet_switch,
            d::SWITCH_MAX_W,
            d::SWITCH_IDLE_W,
            d::SWITCH_CAPACITY,
            false,
            1.0,
        ),
    };
    let server_power = match &raw.power.server {
        Some(s) => DevicePowerProfile {
            max_power: s.max_w,
            idle_power: s.idle_w,
            capacity: 1.0, // patched with the patient capacity per scenario
            shared: false,
            idle_share: 1.0,
        },
        None => DevicePowerProfile {
            max_power: d::SERVER_MAX_W,
            idle_power: d::SERVER_IDLE_W,
            capacity: 1.0,
            shared: false,
            idle_share: 1.0,
        },
    };

    let config = ScenarioConfig {
        topology,
        signal: SignalSpec {
            ecg_bits: raw.signal.ecg_bits.unwrap_or(d::ECG_BITS),
            result_bits: raw.signal.result_bits.unwrap_or(d::RESULT_BITS),
            recording_time: raw.signal.recording_seconds.unwrap_or(d::RECORDING_SECONDS),
        },
        power,
        server_power,
        proc_slope: raw.signal.proc_slope.unwrap_or(d::PROC_SLOPE),
        proc_intercept: raw.signal.proc_intercept.unwrap_or(d::PROC_INTERCEPT),
        pat_fraction: raw.signal.pat_fraction.unwrap_or(d::PAT_FRACTION),
        healthcare_share: raw.signal.healthcare_share.unwrap_or(d::HEALTHCARE_SHARE),
        re_rate: raw.signal.re_rate.unwrap_or(d::RE_RATE),
        window: raw.signal.window_seconds.unwrap_or(d::WINDOW_SECONDS),
        demand_fractions: raw
            .sweep
            .demand_fractions
            .unwrap_or_else(|| d::DEMAND_FRACTIONS.to_vec()),
        servers_per_node: raw
            .sweep
            .servers_per_node
            .unwrap_or_else(|| d::SERVERS_PER_NODE.to_vec()),
        geo_flags: raw.sweep.geo.unwrap_or_else(|| d::GEO_FLAGS.to_vec()),
        duplicate_results: raw.sweep.duplicate_results.unwrap_or(false),
    };

    let errors = validate(&config);
    if errors.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError::Invalid(ValidationErrors(errors)))
    }
}

fn validate(config: &ScenarioConfig) -> Vec<String> {
    let mut errors: Vec<String> = config
        .topology
        .validate()
        .iter()
        .map(|v| v.to_string())
        .collect();

    if config.demand_fractions.is_empty() {
        errors.push("sweep.demand_fractions must not be empty".to_string());
    }
    for &f in &config.demand_fractions {
        if !(f > 0.0 && f <= 1.0) {
            errors.push(format!("demand fraction {f} outside (0, 1]"));
        }
    }
    if config.servers_per_node.is_empty() {
        errors.push("sweep.servers_per_node must not be empty".to_string());
    }
    for &n in &config.servers_per_node {
        if n < 1 {
            errors.push(format!("servers_per_node {n} must be at least 1"));
        }
    }
    if config.geo_flags.is_empty() {
        errors.push("sweep.geo must not be empty".to_string());
    }
    if !(config.healthcare_share > 0.0 && config.healthcare_share <= 1.0) {
        errors.push(format!(
            "healthcare_share {} outside (0, 1]",
            config.healthcare_share
        ));
    }
    if !(config.pat_fraction > 0.0 && config.pat_fraction <= 1.0) {
        errors.push(format!("pat_fraction {} outside (0, 1]", config.pat_fraction));
    }
    if !(config.re_rate > 0.0) {
        errors.push(format!("re_rate {} must be positive", config.re_rate));
    }
    if !(config.window > 0.0) {
        errors.push(format!("window_seconds {} must be positive", config.window));
    }
    if !(config.signal.ecg_bits > 0.0) {
        errors.push(format!("ecg_bits {} must be positive", config.signal.ecg_bits));
    }
    if !(config.signal.result_bits > 0.0) {
        errors.push(format!(
            "result_bits {} must be positive",
            config.signal.result_bits
        ));
    }
    if config.signal.recording_time < 0.0 {
        errors.push(format!(
            "recording_seconds {} must not be negative",
            config.signal.recording_time
        ));
    }
    if config.proc_slope < 0.0 {
        errors.push(format!("proc_slope {} must not be negative", config.proc_slope));
    }
    if !(config.proc_intercept > 0.0) {
        errors.push(format!(
            "proc_intercept {} must be positive",
            config.proc_intercept
        ));
    }

    let profiles = [
        ("base_station", &config.power.base_station),
        ("ont", &config.power.ont),
        ("olt", &config.power.olt),
        ("ethernet_switch", &config.power.ethernet_switch),
        ("server", &config.server_power),
    ];
    for (name, p) in profiles {
        if p.idle_power < 0.0 || p.idle_power > p.max_power {
            errors.push(format!(
                "power.{name}: idle {} outside [0, max {}]",
                p.idle_power, p.max_power
            ));
        }
        if !(p.capacity > 0.0) {
            errors.push(format!("power.{name}: capacity {} must be positive", p.capacity));
        }
        if !(p.idle_share > 0.0 && p.idle_share <= 1.0) {
            errors.push(format!(
                "power.{name}: idle_share {} outside (0, 1]",
                p.idle_share
            ));
        }
    }
    errors
}
