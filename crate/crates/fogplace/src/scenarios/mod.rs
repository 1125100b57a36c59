//! Scenario sweep: solve every (demand fraction, servers per node, geo)
//! grid cell, collect energy aggregates and emit reproducible CSV and
//! plot-data files.

mod config;

pub use config::{defaults, load_config, parse_config, ConfigError, ScenarioConfig};

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::placement::{solve_exact, Solution};
use crate::report::{energy_csv, format_sig6, placement_csv};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepCell {
    pub fraction: f64,
    pub servers_per_node: u32,
    pub geo: bool,
}

impl SweepCell {
    /// Stable label used in output file names, e.g. `d20_n2_geooff`.
    pub fn label(&self) -> String {
        format!(
            "d{}_n{}_geo{}",
            (self.fraction * 100.0).round() as u32,
            self.servers_per_node,
            if self.geo { "on" } else { "off" }
        )
    }
}

#[derive(Debug)]
pub struct SweepRow {
    pub cell: SweepCell,
    /// The solved cell, or the failure reason.
    pub outcome: Result<Solution, String>,
    pub solve_time: Duration,
}

#[derive(Debug)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn row(&self, fraction: f64, servers: u32, geo: bool) -> Option<&SweepRow> {
        self.rows.iter().find(|r| {
            r.cell.servers_per_node == servers
                && r.cell.geo == geo
                && (r.cell.fraction - fraction).abs() < 1e-12
        })
    }
}

/// The grid in deterministic order: fractions outermost, then the per-node
/// server cap, then the geo flag, each in config order.
pub fn grid(config: &ScenarioConfig) -> Vec<SweepCell> {
    let mut cells = Vec::new();
    for &fraction in &config.demand_fractions {
        for &servers_per_node in &config.servers_per_node {
            for &geo in &config.geo_flags {
                cells.push(SweepCell {
                    fraction,
                    servers_per_node,
                    geo,
                });
            }
        }
    }
    cells
}

/// Solves every grid cell. Cells run in parallel; results keep grid order
/// and per-cell failures are recorded without aborting the sweep.
pub fn run_sweep(config: &ScenarioConfig) -> SweepResult {
    let cells = grid(config);
    let rows = cells
        .into_par_iter()
        .map(|cell| {
            let started = Instant::now();
            let problem = config.problem(cell.fraction, cell.servers_per_node, cell.geo);
            let outcome = solve_exact(&problem).map_err(|e| e.to_string());
            SweepRow {
                cell,
                outcome,
                solve_time: started.elapsed(),
            }
        })
        .collect();
    SweepResult { rows }
}

fn geo_str(geo: bool) -> &'static str {
    if geo {
        "on"
    } else {
        "off"
    }
}

/// One row per grid cell. Failed cells keep their grid position and carry
/// the failure reason in `solve_status`. Timing is deliberately excluded so
/// repeated runs are byte-identical.
pub fn summary_csv(sweep: &SweepResult) -> String {
    let mut out = String::from(
        "demand_fraction,servers_per_node,geo,network_J,processing_J,total_J,\
         active_nodes,server_count,solve_status\n",
    );
    for row in &sweep.rows {
        let cell = &row.cell;
        match &row.outcome {
            Ok(solution) => {
                let nodes = solution
                    .placement
                    .active_nodes()
                    .iter()
                    .map(|n| n.to_string())
                    .collect::<Vec<_>>()
                    .join(";");
                let status = if solution.optimality.proven_optimal {
                    "optimal"
                } else {
                    "bounded"
                };
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    format_sig6(cell.fraction),
                    cell.servers_per_node,
                    geo_str(cell.geo),
                    format_sig6(solution.energy.network_total),
                    format_sig6(solution.energy.processing_total),
                    format_sig6(solution.energy.grand_total),
                    nodes,
                    solution.placement.total_servers(),
                    status,
                ));
            }
            Err(reason) => {
                out.push_str(&format!(
                    "{},{},{},,,,,,{}\n",
                    format_sig6(cell.fraction),
                    cell.servers_per_node,
                    geo_str(cell.geo),
                    reason.replace(',', ";").replace('\n', " "),
                ));
            }
        }
    }
    out
}

/// Two plot-data files (network and processing energy against demand
/// fraction), one column per (servers-per-node, geo) series.
pub fn emit_plot_data(sweep: &SweepResult) -> (String, String) {
    let mut fractions: Vec<f64> = Vec::new();
    let mut series: Vec<(u32, bool)> = Vec::new();
    for row in &sweep.rows {
        if !fractions.iter().any(|&f| (f - row.cell.fraction).abs() < 1e-12) {
            fractions.push(row.cell.fraction);
        }
        let key = (row.cell.servers_per_node, row.cell.geo);
        if !series.contains(&key) {
            series.push(key);
        }
    }

    let render = |name: &str, pick: &dyn Fn(&Solution) -> f64| -> String {
        let mut out = format!("# {name} (J) per monitoring window against demand fraction\n");
        out.push_str("# columns: demand_fraction");
        for &(n, geo) in &series {
            out.push_str(&format!(" n{}_geo{}", n, geo_str(geo)));
        }
        out.push('\n');
        for &fraction in &fractions {
            out.push_str(&format_sig6(fraction));
            for &(n, geo) in &series {
                let value = sweep
                    .row(fraction, n, geo)
                    .and_then(|r| r.outcome.as_ref().ok())
                    .map(|s| format_sig6(pick(s)))
                    .unwrap_or_else(|| "nan".to_string());
                out.push(' ');
                out.push_str(&value);
            }
            out.push('\n');
        }
        out
    };

    (
        render("network energy", &|s| s.energy.network_total),
        render("processing energy", &|s| s.energy.processing_total),
    )
}

fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(contents.as_bytes())?;
        file.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

/// Writes per-cell placement and energy CSVs, the sweep summary and both
/// plot-data files. Returns the created paths in creation order.
pub fn write_sweep_outputs(sweep: &SweepResult, out_dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for row in &sweep.rows {
        if let Ok(solution) = &row.outcome {
            let label = row.cell.label();
            let placement_path = out_dir.join(format!("placement_{label}.csv"));
            write_atomic(&placement_path, &placement_csv(&solution.placement))?;
            written.push(placement_path);
            let energy_path = out_dir.join(format!("energy_{label}.csv"));
            write_atomic(&energy_path, &energy_csv(&solution.energy))?;
            written.push(energy_path);
        }
    }
    let summary_path = out_dir.join("sweep_summary.csv");
    write_atomic(&summary_path, &summary_csv(sweep))?;
    written.push(summary_path);

    let (network, processing) = emit_plot_data(sweep);
    let network_path = out_dir.join("plot_network.dat");
    write_atomic(&network_path, &network)?;
    written.push(network_path);
    let processing_path = out_dir.join("plot_processing.dat");
    write_atomic(&processing_path, &processing)?;
    written.push(processing_path);
    Ok(written)
}

/// Sanity statistics used by tests and the CLI.
pub fn distinct_series(sweep: &SweepResult) -> usize {
    sweep
        .rows
        .iter()
        .map(|r| (r.cell.servers_per_node, r.cell.geo))
        .collect::<BTreeSet<_>>()
        .len()
}
