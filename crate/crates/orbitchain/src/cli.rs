//! Command-line front door: fit profiles, solve deployments, route
//! workloads, simulate, and analyze ground-contact traces.
//!
//! Exit codes: 0 success, 1 domain infeasibility or incomplete routing,
//! 2 input error, 3 internal error.

use crate::model::{compute_flows, compute_frame_workloads};
use crate::planner::{
    baseline_compute_parallel, baseline_data_parallel, instance_capacities, max_feasible_tiles,
    solve_deployment, verify_plan, DeploymentPlan, PlannerError, SolverStatus,
};
use crate::profile::{fit_piecewise_linear, FitMode};
use crate::routing::{
    greedy_route, random_route, total_hop_traffic, HeadSelection, RoutingStatus,
};
use crate::scenario::{
    digest_hex, fitted_profile_to_toml, load_scenario, metrics_to_csv, plan_from_toml,
    plan_to_toml, routing_from_toml, routing_to_toml, Scenario, SimSummary,
};
use crate::simulator::{run as run_sim, SimScenario};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Internal(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(msg) => write!(f, "input error: {msg}"),
            CliError::Internal(msg) => write!(f, "internal error: {msg}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

macro_rules! from_input {
    ($($ty:ty),*) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Input(e.to_string())
            }
        })*
    };
}

from_input!(
    std::io::Error,
    crate::scenario::ScenarioError,
    crate::profile::ProfileError,
    crate::groundlink::GroundlinkError,
    crate::model::ModelError,
    crate::routing::RoutingError,
    crate::simulator::SimError
);

impl From<PlannerError> for CliError {
    fn from(e: PlannerError) -> Self {
        match e {
            PlannerError::NumericFailure(msg) => CliError::Internal(msg),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "orbitchain",
    about = "Planning and simulation toolkit for in-orbit analytics constellations",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
enum FitModeArg {
    #[default]
    Independent,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
enum StrategyArg {
    #[default]
    Greedy,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
enum HeadRuleArg {
    #[default]
    CapacityFirst,
    MinIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
enum BaselineArg {
    #[default]
    None,
    ComputeParallel,
    DataParallel,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a piecewise-linear CPU speed model to (quota, speed) samples.
    Fit {
        /// CSV with `quota,speed` rows.
        #[arg(long)]
        samples: PathBuf,
        /// Breakpoint quota; repeat for multiple breakpoints.
        #[arg(long = "breakpoint")]
        breakpoints: Vec<f64>,
        #[arg(long, value_enum, default_value_t)]
        mode: FitModeArg,
        /// Output TOML with the fitted segments.
        #[arg(long)]
        output: PathBuf,
    },
    /// Solve the deployment problem for a scenario.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        /// Output plan TOML.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Override the scenario's tiles per frame.
        #[arg(long)]
        tiles: Option<f64>,
        /// Use a baseline placement instead of the solver.
        #[arg(long, value_enum, default_value_t)]
        baseline: BaselineArg,
        /// Comma-separated frame deadlines: print the max analyzable
        /// workload for each instead of solving once.
        #[arg(long, value_delimiter = ',')]
        sweep_deadline: Vec<f64>,
    },
    /// Build a routing plan from a deployment plan.
    Route {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        strategy: StrategyArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t)]
        head_rule: HeadRuleArg,
    },
    /// Simulate a routed deployment and export metrics.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        routing: PathBuf,
        /// Per-frame latency CSV output.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Summary JSON output.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long)]
        frames: Option<usize>,
        /// Override link bandwidth in bits/second.
        #[arg(long)]
        bandwidth: Option<f64>,
        /// Override background CPU noise in [0, 1).
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Analyze a ground-contact trace.
    Groundlink {
        /// Contact CSV: sat_id,start_s,end_s,rate_bps.
        #[arg(long)]
        trace: PathBuf,
        /// On-board data generation rate in bytes/second.
        #[arg(long)]
        gen_rate: f64,
        /// Fraction of data filtered out before downlink.
        #[arg(long, default_value_t = 0.0)]
        filter: f64,
        #[arg(long)]
        cdf_out: Option<PathBuf>,
        #[arg(long)]
        ratios_out: Option<PathBuf>,
    },
}

/// Parses argv and runs; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<Scenario, CliError> {
    Ok(load_scenario(&read(path)?)?)
}

fn dispatch(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Fit {
            samples,
            breakpoints,
            mode,
            output,
        } => cmd_fit(&samples, &breakpoints, mode, &output),
        Command::Plan {
            scenario,
            output,
            tiles,
            baseline,
            sweep_deadline,
        } => cmd_plan(&scenario, output.as_deref(), tiles, baseline, &sweep_deadline),
        Command::Route {
            scenario,
            plan,
            output,
            strategy,
            seed,
            head_rule,
        } => cmd_route(&scenario, &plan, output.as_deref(), strategy, seed, head_rule),
        Command::Simulate {
            scenario,
            plan,
            routing,
            metrics,
            summary,
            frames,
            bandwidth,
            noise,
        } => cmd_simulate(
            &scenario,
            &plan,
            &routing,
            metrics.as_deref(),
            summary.as_deref(),
            frames,
            bandwidth,
            noise,
        ),
        Command::Groundlink {
            trace,
            gen_rate,
            filter,
            cdf_out,
            ratios_out,
        } => cmd_groundlink(&trace, gen_rate, filter, cdf_out.as_deref(), ratios_out.as_deref()),
    }
}

fn cmd_fit(
    samples_path: &Path,
    breakpoints: &[f64],
    mode: FitModeArg,
    output: &Path,
) -> Result<i32, CliError> {
    let text = read(samples_path)?;
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if lineno == 0 && line.chars().next().is_some_and(char::is_alphabetic) {
            continue; // header
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(CliError::Input(format!(
                "{}:{}: expected `quota,speed`",
                samples_path.display(),
                lineno + 1
            )));
        }
        let q: f64 = parts[0]
            .parse()
            .map_err(|e| CliError::Input(format!("line {}: {e}", lineno + 1)))?;
        let v: f64 = parts[1]
            .parse()
            .map_err(|e| CliError::Input(format!("line {}: {e}", lineno + 1)))?;
        samples.push((q, v));
    }
    let fit_mode = match mode {
        FitModeArg::Independent => FitMode::Independent,
        FitModeArg::Continuous => FitMode::Continuous,
    };
    let (model, r2) = fit_piecewise_linear(&samples, breakpoints, fit_mode)?;
    write(
        output,
        &fitted_profile_to_toml(&model, &r2, &digest_hex(&text))?,
    )?;
    for (k, seg) in model.segments().iter().enumerate() {
        println!(
            "segment {k}: [{:.4}, {:.4}] speed = {:.6} * quota + {:.6} (r2 = {:.6})",
            seg.quota_lo, seg.quota_hi, seg.slope, seg.intercept, r2[k]
        );
    }
    Ok(EXIT_OK)
}

fn cmd_plan(
    scenario_path: &Path,
    output: Option<&Path>,
    tiles: Option<f64>,
    baseline: BaselineArg,
    sweep_deadline: &[f64],
) -> Result<i32, CliError> {
    let sc = load(scenario_path)?;
    let flows = compute_flows(&sc.app);

    if !sweep_deadline.is_empty() {
        println!("frame_deadline_s,max_tiles_per_frame");
        for &delta_f in sweep_deadline {
            let mut cons = sc.constellation.clone();
            cons.frame_deadline_s = delta_f;
            let max = max_feasible_tiles(&cons, &sc.app, &sc.profiles, &flows, 1e-3)?;
            println!("{delta_f},{max:.3}");
        }
        return Ok(EXIT_OK);
    }

    let n0 = tiles.unwrap_or(sc.workload.tiles_per_frame);
    let workloads = compute_frame_workloads(&flows, n0);
    let plan: DeploymentPlan = match baseline {
        BaselineArg::None => solve_deployment(&sc.constellation, &sc.app, &sc.profiles, &workloads)?,
        BaselineArg::ComputeParallel => {
            baseline_compute_parallel(&sc.constellation, &sc.app, &sc.profiles)?
        }
        BaselineArg::DataParallel => {
            baseline_data_parallel(&sc.constellation, &sc.app, &sc.profiles)?
        }
    };
    if let Some(path) = output {
        write(path, &plan_to_toml(&plan, &sc.digest)?)?;
    }
    println!("status: {:?}", plan.status);
    if let Some(margin) = plan.objective_margin {
        println!("objective margin: {margin:.6} tiles/frame");
    }
    if plan.status != SolverStatus::Infeasible {
        let report = verify_plan(&plan, &sc.constellation, &sc.app, &sc.profiles, &workloads)?;
        for check in &report.checks {
            println!(
                "check {}: {} (worst slack {:.6})",
                check.name,
                if check.passed { "ok" } else { "VIOLATED" },
                check.worst_slack
            );
        }
        for j in 1..=sc.constellation.num_satellites() {
            let cpu: f64 = (0..sc.app.num_functions())
                .map(|i| plan.cpu_quota[i][j - 1])
                .sum();
            let gpu: f64 = (0..sc.app.num_functions())
                .map(|i| plan.gpu_slice[i][j - 1])
                .sum();
            println!(
                "satellite {j}: cpu {cpu:.3}/{:.3} cores, gpu {gpu:.3}/{:.3} s",
                sc.constellation.beta * sc.constellation.satellite(j).cpu_cores,
                sc.constellation.alpha * sc.constellation.frame_deadline_s
            );
        }
    }
    Ok(if plan.status == SolverStatus::Infeasible {
        EXIT_INFEASIBLE
    } else {
        EXIT_OK
    })
}

fn cmd_route(
    scenario_path: &Path,
    plan_path: &Path,
    output: Option<&Path>,
    strategy: StrategyArg,
    seed: u64,
    head_rule: HeadRuleArg,
) -> Result<i32, CliError> {
    let sc = load(scenario_path)?;
    let plan_doc = plan_from_toml(&read(plan_path)?)?;
    if plan_doc.input_digest != sc.digest {
        eprintln!("warning: plan was solved from a different scenario (digest mismatch)");
    }
    if plan_doc.plan.status == SolverStatus::Infeasible {
        eprintln!("plan is infeasible; nothing to route");
        return Ok(EXIT_INFEASIBLE);
    }
    let caps = instance_capacities(
        &plan_doc.plan,
        &sc.app,
        &sc.profiles,
        sc.constellation.frame_deadline_s,
    )?;
    let head = match head_rule {
        HeadRuleArg::CapacityFirst => HeadSelection::CapacityFirst,
        HeadRuleArg::MinIndex => HeadSelection::MinIndex,
    };
    let routed = match strategy {
        StrategyArg::Greedy => greedy_route(
            &caps,
            &sc.constellation,
            &sc.app,
            sc.workload.tiles_per_frame,
            head,
        ),
        StrategyArg::Random => random_route(
            &caps,
            &sc.constellation,
            &sc.app,
            sc.workload.tiles_per_frame,
            seed,
        ),
    };
    if let Some(path) = output {
        write(path, &routing_to_toml(&routed, &sc.digest)?)?;
    }
    let traffic = total_hop_traffic(
        &routed,
        &sc.app,
        sc.workload.msg_request_bytes,
        sc.workload.msg_response_bytes,
    );
    println!("status: {:?}", routed.status);
    println!("graphs: {}", routed.graphs.len());
    println!(
        "assigned: {:.3}/{:.3} tiles/frame",
        routed.total_assigned(),
        sc.workload.tiles_per_frame
    );
    println!("predicted hop traffic: {traffic:.1} bytes/frame");
    Ok(if routed.status == RoutingStatus::Complete {
        EXIT_OK
    } else {
        EXIT_INFEASIBLE
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    scenario_path: &Path,
    plan_path: &Path,
    routing_path: &Path,
    metrics: Option<&Path>,
    summary: Option<&Path>,
    frames: Option<usize>,
    bandwidth: Option<f64>,
    noise: Option<f64>,
) -> Result<i32, CliError> {
    let sc = load(scenario_path)?;
    let plan_doc = plan_from_toml(&read(plan_path)?)?;
    let caps = instance_capacities(
        &plan_doc.plan,
        &sc.app,
        &sc.profiles,
        sc.constellation.frame_deadline_s,
    )?;
    let (routing, routing_digest) = routing_from_toml(&read(routing_path)?, &sc.app, &caps)?;
    if routing_digest != sc.digest {
        eprintln!("warning: routing was built from a different scenario (digest mismatch)");
    }
    let sim = SimScenario {
        constellation: &sc.constellation,
        app: &sc.app,
        profiles: &sc.profiles,
        deployment: &plan_doc.plan,
        routing: &routing,
        num_frames: frames.unwrap_or(sc.workload.num_frames),
        link_bandwidth_bps: bandwidth.unwrap_or(sc.workload.link_bandwidth_bps),
        msg_request_bytes: sc.workload.msg_request_bytes,
        msg_response_bytes: sc.workload.msg_response_bytes,
        background_noise: noise.unwrap_or(sc.workload.background_noise),
    };
    let report = run_sim(&sim)?;
    if let Some(path) = metrics {
        write(path, &metrics_to_csv(&report))?;
    }
    let sum = SimSummary::from_report(&report, &sc.digest);
    if let Some(path) = summary {
        write(path, &serde_json::to_string_pretty(&sum)?)?;
    }
    println!("application completion: {:.6}", sum.application_completion);
    println!("total hop bytes: {:.1}", sum.total_hop_bytes);
    println!(
        "mean end-to-end: {:.3} s (revisit {:.3} s + analysis {:.3} s)",
        sum.mean_end_to_end_s, sum.mean_revisit_s, sum.mean_analysis_s
    );
    Ok(EXIT_OK)
}

fn cmd_groundlink(
    trace_path: &Path,
    gen_rate: f64,
    filter: f64,
    cdf_out: Option<&Path>,
    ratios_out: Option<&Path>,
) -> Result<i32, CliError> {
    let text = read(trace_path)?;
    let trace = crate::groundlink::ContactTrace::parse_csv(&text)?;
    let cdf = crate::groundlink::contact_interval_cdf(&trace)?;
    let ratios = crate::groundlink::downlinkable_ratio(&trace, gen_rate, filter)?;
    if let Some(path) = cdf_out {
        let mut out = String::from("interval_s,cumulative_fraction\n");
        for (iv, frac) in &cdf {
            out.push_str(&format!("{iv},{frac}\n"));
        }
        write(path, &out)?;
    }
    if let Some(path) = ratios_out {
        let mut out = String::from("satellite,contact_start_s,ratio\n");
        for r in &ratios {
            out.push_str(&format!("{},{},{}\n", r.satellite, r.contact_start_s, r.ratio));
        }
        write(path, &out)?;
    }
    println!("contacts: {}", trace.contacts().len());
    println!("interval cdf points: {}", cdf.len());
    let mean: f64 = ratios.iter().map(|r| r.ratio).sum::<f64>() / ratios.len().max(1) as f64;
    println!("mean downlinkable ratio: {mean:.6}");
    Ok(EXIT_OK)
}
