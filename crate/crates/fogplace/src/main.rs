use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use fogplace::placement::{
    solve_exact, solve_oracle, verify, AssignmentKey, Placement, PlacementProblem, Solution,
    SolveError,
};
use fogplace::report::{energy_csv, placement_csv};
use fogplace::scenarios::{self, load_config, ScenarioConfig, SweepCell};
use fogplace::topology::DeviceId;

const EXIT_INPUT_ERROR: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "fogplace",
    about = "Minimum-energy placement of primary and backup processing servers \
             in a GPON access network",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OnOff {
    On,
    Off,
}

impl From<OnOff> for bool {
    fn from(v: OnOff) -> bool {
        matches!(v, OnOff::On)
    }
}

#[derive(Args)]
struct CellArgs {
    /// Scenario configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Demand fraction in (0, 1]; defaults to the first sweep value.
    #[arg(long)]
    demand: Option<f64>,
    /// Servers allowed per candidate node; defaults to the first sweep value.
    #[arg(long)]
    servers: Option<u32>,
    /// Geographic separation of primary and backup servers.
    #[arg(long, value_enum)]
    geo: Option<OnOff>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a single scenario cell and write its reports.
    Solve {
        #[command(flatten)]
        cell: CellArgs,
        /// Output directory for the CSV and JSON reports.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the full scenario grid and write all reports.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a placement table against the scenario constraints.
    Verify {
        #[command(flatten)]
        cell: CellArgs,
        /// Placement CSV (clinic,bs,primary_node,backup_node,patients).
        #[arg(long)]
        placement: PathBuf,
    },
    /// Exhaustively solve a tiny instance; optionally cross-check the solver.
    Oracle {
        #[command(flatten)]
        cell: CellArgs,
        /// Also run the exact solver and compare objectives.
        #[arg(long)]
        compare: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_INPUT_ERROR);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    fn input(message: impl Into<String>) -> CliError {
        CliError {
            message: message.into(),
            code: EXIT_INPUT_ERROR,
        }
    }

    fn from_solve(e: SolveError) -> CliError {
        let code = match &e {
            SolveError::Timing(_)
            | SolveError::CapacityExceeded { .. }
            | SolveError::GeoImpossible { .. }
            | SolveError::Infeasible(_)
            | SolveError::OracleBounds(_) => EXIT_INFEASIBLE,
            SolveError::Energy(_) | SolveError::Numerical(_) => EXIT_INPUT_ERROR,
        };
        CliError {
            message: e.to_string(),
            code,
        }
    }
}

fn load(config_path: &Path) -> Result<ScenarioConfig, CliError> {
    load_config(config_path).map_err(|e| CliError::input(e.to_string()))
}

fn cell_of(config: &ScenarioConfig, args: &CellArgs) -> Result<SweepCell, CliError> {
    let fraction = args.demand.unwrap_or(config.demand_fractions[0]);
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CliError::input(format!(
            "demand fraction {fraction} outside (0, 1]"
        )));
    }
    let servers_per_node = args.servers.unwrap_or(config.servers_per_node[0]);
    if servers_per_node < 1 {
        return Err(CliError::input("servers must be at least 1"));
    }
    let geo = args.geo.map(bool::from).unwrap_or(config.geo_flags[0]);
    Ok(SweepCell {
        fraction,
        servers_per_node,
        geo,
    })
}

#[derive(Serialize)]
struct RatePlanSummary {
    upload_rate_bps: f64,
    upload_seconds: f64,
    upload_res: u32,
    feedback_res: u32,
    feedback_rate_bps: f64,
    feedback_seconds: f64,
    storage_rate_bps: f64,
    storage_seconds: f64,
    max_upload_seconds: f64,
    access_bottleneck_bps: f64,
    storage_bottleneck_bps: f64,
}

#[derive(Serialize)]
struct SolveSummary {
    demand_fraction: f64,
    servers_per_node: u32,
    geo: bool,
    objective_j: f64,
    network_j: f64,
    processing_j: f64,
    proven_optimal: bool,
    bound_gap: f64,
    active_nodes: Vec<String>,
    servers: BTreeMap<String, u32>,
    total_servers: u32,
    rate_plan: RatePlanSummary,
    nodes_explored: u64,
    lp_iterations: u64,
}

fn summarize(
    cell: &SweepCell,
    problem: &PlacementProblem,
    solution: &Solution,
) -> Result<SolveSummary, CliError> {
    let plan = problem.rate_plan().map_err(|e| CliError {
        message: e.to_string(),
        code: EXIT_INFEASIBLE,
    })?;
    Ok(SolveSummary {
        demand_fraction: cell.fraction,
        servers_per_node: cell.servers_per_node,
        geo: cell.geo,
        objective_j: solution.objective,
        network_j: solution.energy.network_total,
        processing_j: solution.energy.processing_total,
        proven_optimal: solution.optimality.proven_optimal,
        bound_gap: solution.optimality.bound_gap,
        active_nodes: solution
            .placement
            .active_nodes()
            .iter()
            .map(|n| n.to_string())
            .collect(),
        servers: solution
            .placement
            .servers
            .iter()
            .map(|(n, &s)| (n.to_string(), s))
            .collect(),
        total_servers: solution.placement.total_servers(),
        rate_plan: RatePlanSummary {
            upload_rate_bps: plan.upload.rate,
            upload_seconds: plan.upload.time,
            upload_res: plan.upload.re_count,
            feedback_res: plan.feedback.re_count,
            feedback_rate_bps: plan.feedback.rate,
            feedback_seconds: plan.feedback.time,
            storage_rate_bps: plan.storage.rate,
            storage_seconds: plan.storage.time,
            max_upload_seconds: plan.budget.max_upload,
            access_bottleneck_bps: plan.bottlenecks.upload,
            storage_bottleneck_bps: plan.bottlenecks.storage,
        },
        nodes_explored: solution.stats.nodes_explored,
        lp_iterations: solution.stats.lp_iterations,
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve { cell: args, out } => {
            let config = load(&args.config)?;
            let cell = cell_of(&config, &args)?;
            let problem = config.problem(cell.fraction, cell.servers_per_node, cell.geo);
            let started = Instant::now();
            let solution = solve_exact(&problem).map_err(CliError::from_solve)?;
            let elapsed = started.elapsed();

            std::fs::create_dir_all(&out)
                .map_err(|e| CliError::input(format!("cannot create {}: {e}", out.display())))?;
            let label = cell.label();
            let write = |name: String, contents: String| -> Result<(), CliError> {
                let path = out.join(name);
                std::fs::write(&path, contents)
                    .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
            };
            write(
                format!("placement_{label}.csv"),
                placement_csv(&solution.placement),
            )?;
            write(format!("energy_{label}.csv"), energy_csv(&solution.energy))?;
            let summary = summarize(&cell, &problem, &solution)?;
            let json = serde_json::to_string_pretty(&summary)
                .map_err(|e| CliError::input(e.to_string()))?;
            write(format!("summary_{label}.json"), json)?;

            println!(
                "cell {label}: objective {:.3} J (network {:.3}, processing {:.3}), \
                 {} nodes, {} servers, {} search nodes in {:.2?}",
                solution.objective,
                solution.energy.network_total,
                solution.energy.processing_total,
                solution.placement.active_nodes().len(),
                solution.placement.total_servers(),
                solution.stats.nodes_explored,
                elapsed,
            );
            Ok(())
        }
        Command::Sweep { config, out } => {
            let config = load(&config)?;
            let started = Instant::now();
            let sweep = scenarios::run_sweep(&config);
            let failed: Vec<&scenarios::SweepRow> =
                sweep.rows.iter().filter(|r| r.outcome.is_err()).collect();
            scenarios::write_sweep_outputs(&sweep, &out)
                .map_err(|e| CliError::input(format!("cannot write outputs: {e}")))?;
            println!(
                "sweep: {} cells in {:.2?}, outputs in {}",
                sweep.rows.len(),
                started.elapsed(),
                out.display()
            );
            for row in &sweep.rows {
                match &row.outcome {
                    Ok(s) => println!(
                        "  {}: total {:.3} J, {} servers, {:.2?}",
                        row.cell.label(),
                        s.objective,
                        s.placement.total_servers(),
                        row.solve_time
                    ),
                    Err(reason) => println!("  {}: FAILED ({reason})", row.cell.label()),
                }
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError {
                    message: format!("{} of {} cells infeasible", failed.len(), sweep.rows.len()),
                    code: EXIT_INFEASIBLE,
                })
            }
        }
        Command::Verify { cell: args, placement } => {
            let config = load(&args.config)?;
            let cell = cell_of(&config, &args)?;
            let problem = config.problem(cell.fraction, cell.servers_per_node, cell.geo);
            let parsed = read_placement(&placement, &problem)?;
            let violations = verify(&parsed, &problem);
            if violations.is_empty() {
                println!("placement satisfies all constraints for cell {}", cell.label());
                Ok(())
            } else {
                for v in &violations {
                    eprintln!("violation: {v}");
                }
                Err(CliError {
                    message: format!("{} constraint violation(s)", violations.len()),
                    code: EXIT_INFEASIBLE,
                })
            }
        }
        Command::Oracle { cell: args, compare } => {
            let config = load(&args.config)?;
            let cell = cell_of(&config, &args)?;
            let problem = config.problem(cell.fraction, cell.servers_per_node, cell.geo);
            let oracle = solve_oracle(&problem).map_err(CliError::from_solve)?;
            println!(
                "oracle: objective {:.6} J over {} enumerated assignments",
                oracle.objective, oracle.stats.oracle_leaves
            );
            print!("{}", placement_csv(&oracle.placement));
            if compare {
                let exact = solve_exact(&problem).map_err(CliError::from_solve)?;
                let diff = (exact.objective - oracle.objective).abs()
                    / oracle.objective.abs().max(1.0);
                println!(
                    "exact: objective {:.6} J, relative difference {diff:.3e}",
                    exact.objective
                );
                if diff > 1e-9 {
                    return Err(CliError {
                        message: "solver and oracle objectives disagree".to_string(),
                        code: EXIT_INPUT_ERROR,
                    });
                }
            }
            Ok(())
        }
    }
}

/// Parses a placement table CSV. Server counts are not part of the table;
/// they are reconstructed as the minimum count covering each node's load.
fn read_placement(path: &Path, problem: &PlacementProblem) -> Result<Placement, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let mut placement = Placement::default();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("clinic,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(CliError::input(format!(
                "{}:{}: expected 5 fields, found {}",
                path.display(),
                lineno + 1,
                fields.len()
            )));
        }
        let parse_u32 = |s: &str, what: &str| -> Result<u32, CliError> {
            s.parse::<u32>().map_err(|_| {
                CliError::input(format!(
                    "{}:{}: bad {what} `{s}`",
                    path.display(),
                    lineno + 1
                ))
            })
        };
        let key = AssignmentKey {
            clinic: parse_u32(fields[0], "clinic id")?,
            bs: parse_u32(fields[1], "base station id")?,
            primary: DeviceId::from_str(fields[2]).map_err(CliError::input)?,
            backup: DeviceId::from_str(fields[3]).map_err(CliError::input)?,
        };
        let count = parse_u32(fields[4], "patient count")?;
        *placement.assignments.entry(key).or_insert(0) += count;
    }
    for (node, load) in placement.node_loads() {
        placement
            .servers
            .insert(node, load.div_ceil(problem.server.pat_cap));
    }
    Ok(placement)
}
