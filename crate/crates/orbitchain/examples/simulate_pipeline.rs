//! Runs the full plan → route → simulate pipeline and prints completion
//! ratios and the per-frame latency decomposition.
//!
//! Run with: cargo run --example simulate_pipeline

use orbitchain::model::{compute_flows, compute_frame_workloads};
use orbitchain::planner::{instance_capacities, solve_deployment};
use orbitchain::routing::{greedy_route, HeadSelection};
use orbitchain::scenario::load_scenario;
use orbitchain::simulator::{completion_ratio, run, SimScenario};

fn main() {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/assets/jetson3.toml"
    ))
    .unwrap();
    let scenario = load_scenario(&text).unwrap();
    let flows = compute_flows(&scenario.app);
    let workloads = compute_frame_workloads(&flows, scenario.workload.tiles_per_frame);
    let plan = solve_deployment(
        &scenario.constellation,
        &scenario.app,
        &scenario.profiles,
        &workloads,
    )
    .unwrap();
    let caps = instance_capacities(
        &plan,
        &scenario.app,
        &scenario.profiles,
        scenario.constellation.frame_deadline_s,
    )
    .unwrap();
    let routing = greedy_route(
        &caps,
        &scenario.constellation,
        &scenario.app,
        scenario.workload.tiles_per_frame,
        HeadSelection::CapacityFirst,
    );

    let report = run(&SimScenario {
        constellation: &scenario.constellation,
        app: &scenario.app,
        profiles: &scenario.profiles,
        deployment: &plan,
        routing: &routing,
        num_frames: scenario.workload.num_frames,
        link_bandwidth_bps: scenario.workload.link_bandwidth_bps,
        msg_request_bytes: scenario.workload.msg_request_bytes,
        msg_response_bytes: scenario.workload.msg_response_bytes,
        background_noise: scenario.workload.background_noise,
    })
    .unwrap();

    let (per_function, application) = completion_ratio(&report);
    for (f, ratio) in scenario.app.functions().iter().zip(&per_function) {
        println!("completion {:<8} {ratio:.4}", f.name);
    }
    println!("application completion: {application:.4}");
    println!("hop traffic: {:.0} bytes total", report.total_hop_bytes);

    let frames = &report.frames;
    let mean = |f: fn(&orbitchain::simulator::FrameLatency) -> f64| {
        frames.iter().map(f).sum::<f64>() / frames.len() as f64
    };
    println!(
        "latency over {} frames: revisit {:.1} s, analysis {:.1} s, end-to-end {:.1} s (mean)",
        frames.len(),
        mean(|f| f.revisit_s),
        mean(|f| f.analysis_s),
        mean(|f| f.end_to_end_s),
    );
}
