//! Builds realization graphs over a solved deployment with the greedy router
//! and compares its inter-satellite traffic against the random baseline.
//!
//! Run with: cargo run --example route_tiles

use orbitchain::model::{compute_flows, compute_frame_workloads};
use orbitchain::planner::{instance_capacities, solve_deployment};
use orbitchain::routing::{greedy_route, random_route, total_hop_traffic, HeadSelection};
use orbitchain::scenario::load_scenario;

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

    let req = scenario.workload.msg_request_bytes;
    let resp = scenario.workload.msg_response_bytes;
    let greedy = greedy_route(
        &caps,
        &scenario.constellation,
        &scenario.app,
        scenario.workload.tiles_per_frame,
        HeadSelection::CapacityFirst,
    );
    println!("greedy routing ({:?}):", greedy.status);
    for (g, load) in greedy.graphs.iter().zip(&greedy.assigned_load) {
        let placement: Vec<String> = g
            .vertices
            .iter()
            .map(|v| format!("f{}→s{}/{}", v.function, v.satellite, v.device))
            .collect();
        println!(
            "  graph {}: load {load:.1} (capacity {:.1})  {}",
            g.index,
            g.capacity,
            placement.join("  ")
        );
    }
    let greedy_bytes = total_hop_traffic(&greedy, &scenario.app, req, resp);
    println!("greedy hop traffic: {greedy_bytes:.0} bytes/frame");

    let seeds = 30;
    let mut sum = 0.0;
    for seed in 0..seeds {
        let random = random_route(
            &caps,
            &scenario.constellation,
            &scenario.app,
            scenario.workload.tiles_per_frame,
            seed,
        );
        sum += total_hop_traffic(&random, &scenario.app, req, resp);
    }
    println!(
        "random baseline over {seeds} seeds: {:.0} bytes/frame on average ({:.1}x greedy)",
        sum / seeds as f64,
        sum / seeds as f64 / greedy_bytes.max(1.0)
    );
}
