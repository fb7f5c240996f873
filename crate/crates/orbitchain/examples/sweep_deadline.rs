//! Sweeps the frame deadline on the CPU-only scenario and reports the
//! largest analyzable per-frame workload at each setting, illustrating the
//! linear capacity scaling.
//!
//! Run with: cargo run --example sweep_deadline

use orbitchain::model::compute_flows;
use orbitchain::planner::max_feasible_tiles;
use orbitchain::scenario::load_scenario;

fn main() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/pi4.toml"))
        .unwrap();
    let scenario = load_scenario(&text).unwrap();
    let flows = compute_flows(&scenario.app);

    println!("frame deadline (s) -> max head workload (tiles/frame)");
    for deadline in [4.0, 8.0, 12.0, 16.0, 20.0] {
        let mut cons = scenario.constellation.clone();
        cons.frame_deadline_s = deadline;
        let n0 = max_feasible_tiles(&cons, &scenario.app, &scenario.profiles, &flows, 1e-4)
            .unwrap();
        println!("  {deadline:>5.1}  ->  {n0:>8.2}   ({:.3} tiles per deadline-second)", n0 / deadline);
    }
}
