//! Solves the deployment problem for the bundled three-satellite scenario,
//! verifies every constraint on the result, and prints the plan.
//!
//! Run with: cargo run --example plan_deployment

use orbitchain::model::{compute_flows, compute_frame_workloads};
use orbitchain::planner::{solve_deployment, verify_plan};
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
    println!(
        "status {:?}, worst margin {:?} tiles/frame, {} nodes in {:.1} ms",
        plan.status, plan.objective_margin, plan.stats.nodes_explored, plan.stats.wall_time_ms
    );

    for f in scenario.app.functions() {
        let i = f.id - 1;
        print!("{:<8}", f.name);
        for j in 0..scenario.constellation.num_satellites() {
            let r = plan.cpu_quota[i][j];
            let t = plan.gpu_slice[i][j];
            if r > 0.0 || t > 0.0 {
                print!("  s{}: cpu {r:.2} gpu {t:.2}s", j + 1);
            }
        }
        println!();
    }

    let report = verify_plan(
        &plan,
        &scenario.constellation,
        &scenario.app,
        &scenario.profiles,
        &workloads,
    )
    .unwrap();
    for check in &report.checks {
        println!(
            "check {:<28} {}  (worst slack {:+.3e})",
            check.name,
            if check.passed { "ok" } else { "VIOLATED" },
            check.worst_slack
        );
    }
}
