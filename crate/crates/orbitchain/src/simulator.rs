//! Deterministic discrete-event simulation of the sensing-and-analytics
//! pipeline: per-satellite frame captures offset by the revisit interval,
//! CPU-rate and GPU time-sliced processing, store-and-forward space-relay
//! links, and metric collection.

use crate::model::{Constellation, ValidatedApplication};
use crate::planner::{Device, DeploymentPlan};
use crate::profile::{eval_speed, ProfileSet};
use crate::routing::{RoutingPlan, RESIDUAL_TOL};
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("routing plan references instance ({0}, {1}, {2}) absent from the deployment")]
    PlanMismatch(usize, usize, Device),
    #[error("scenario parameter out of range: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Planner(#[from] crate::planner::PlannerError),
}

/// Everything one simulation run needs; borrowed so sweeps can share the
/// immutable pieces.
#[derive(Debug, Clone, Copy)]
pub struct SimScenario<'a> {
    pub constellation: &'a Constellation,
    pub app: &'a ValidatedApplication,
    pub profiles: &'a ProfileSet,
    pub deployment: &'a DeploymentPlan,
    pub routing: &'a RoutingPlan,
    pub num_frames: usize,
    /// Bits per second on every inter-satellite hop.
    pub link_bandwidth_bps: f64,
    pub msg_request_bytes: f64,
    pub msg_response_bytes: f64,
    /// Fractional CPU speed degradation in [0, 1).
    pub background_noise: f64,
}

/// Tile counts are fluid (fractional): per-frame loads and distribution
/// ratios are honored exactly instead of being rounded, matching the
/// continuous capacity math of the planner.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct FunctionTally {
    pub received: f64,
    pub analyzed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameLatency {
    pub frame: usize,
    pub revisit_s: f64,
    pub analysis_s: f64,
    pub end_to_end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    /// Indexed by function id - 1.
    pub per_function: Vec<FunctionTally>,
    pub total_hop_bytes: f64,
    pub frames: Vec<FrameLatency>,
    /// GPU busy seconds per satellite (id - 1).
    pub gpu_busy_s: Vec<f64>,
}

/// Per-function analyzed/received ratios plus the application-level minimum.
pub fn completion_ratio(report: &MetricsReport) -> (Vec<f64>, f64) {
    let per: Vec<f64> = report
        .per_function
        .iter()
        .map(|t| {
            if t.received <= 0.0 {
                1.0
            } else {
                t.analyzed / t.received
            }
        })
        .collect();
    let app = per.iter().copied().fold(1.0f64, f64::min);
    (per, app)
}

/// Per-frame latency rows, already part of the report; exposed for symmetry
/// with the CSV export.
pub fn latency_breakdown(report: &MetricsReport) -> &[FrameLatency] {
    &report.frames
}

/// One deployed instance participating in the routing plan.
struct SimInstance {
    satellite: usize,
    device: Device,
    /// Tiles per second of wall-clock time (GPU rates are scaled by the
    /// slice share of the frame window).
    rate: f64,
    /// Raw GPU tiles/second, for busy-time accounting.
    gpu_speed: f64,
    free_at: f64,
    /// Deadline recurrence state: the previous frame's deadline.
    last_deadline: f64,
    last_deadline_frame: Option<usize>,
}


pub fn run(scenario: &SimScenario) -> Result<MetricsReport, SimError> {
    let cons = scenario.constellation;
    let app = scenario.app;
    let nm = app.num_functions();
    let ns = cons.num_satellites();
    let delta_f = cons.frame_deadline_s;
    let delta_s = cons.revisit_interval_s;
    if scenario.num_frames == 0 {
        return Err(SimError::InvalidScenario("num_frames must be >= 1".into()));
    }
    if !(scenario.link_bandwidth_bps > 0.0) {
        return Err(SimError::InvalidScenario(
            "link_bandwidth_bps must be > 0".into(),
        ));
    }
    if !(0.0..1.0).contains(&scenario.background_noise) {
        return Err(SimError::InvalidScenario(
            "background_noise must be in [0, 1)".into(),
        ));
    }
    let resolved = crate::planner::resolve_profiles(app, scenario.profiles)?;

    // Instantiate every instance the routing plan references, with its
    // effective processing rate.
    let mut instances: BTreeMap<(usize, usize, Device), SimInstance> = BTreeMap::new();
    for graph in &scenario.routing.graphs {
        for v in &graph.vertices {
            if instances.contains_key(&(v.function, v.satellite, v.device)) {
                continue;
            }
            let prof = resolved[v.function - 1];
            let rate = match v.device {
                Device::Cpu => {
                    let quota = scenario.deployment.cpu_quota[v.function - 1][v.satellite - 1];
                    if quota <= RESIDUAL_TOL {
                        return Err(SimError::PlanMismatch(v.function, v.satellite, v.device));
                    }
                    let speed = eval_speed(&prof.speed_cpu, quota)
                        .map_err(crate::planner::PlannerError::from)?;
                    speed * (1.0 - scenario.background_noise)
                }
                Device::Gpu => {
                    let slice = scenario.deployment.gpu_slice[v.function - 1][v.satellite - 1];
                    if slice <= RESIDUAL_TOL || prof.speed_gpu <= 0.0 {
                        return Err(SimError::PlanMismatch(v.function, v.satellite, v.device));
                    }
                    // The scheduler grants `slice` seconds of GPU inside
                    // every frame window, so the wall-clock throughput is
                    // the slice share of the raw speed.
                    prof.speed_gpu * (slice / delta_f)
                }
            };
            if !(rate > 0.0) {
                return Err(SimError::PlanMismatch(v.function, v.satellite, v.device));
            }
            instances.insert(
                (v.function, v.satellite, v.device),
                SimInstance {
                    satellite: v.satellite,
                    device: v.device,
                    rate,
                    gpu_speed: prof.speed_gpu,
                    free_at: 0.0,
                    last_deadline: 0.0,
                    last_deadline_frame: None,
                },
            );
        }
    }

    let capture = |j: usize, frame: usize| frame as f64 * delta_f + (j - 1) as f64 * delta_s;

    // FIFO next-free time per adjacent satellite pair.
    let mut link_free: BTreeMap<(usize, usize), f64> = BTreeMap::new();

    let mut tallies = vec![FunctionTally::default(); nm];
    let mut total_bytes = 0.0;
    let mut gpu_busy = vec![0.0f64; ns];
    let mut frames_out = Vec::with_capacity(scenario.num_frames);

    let msg_bytes = scenario.msg_request_bytes + scenario.msg_response_bytes;
    let used_sats: Vec<usize> = {
        let mut sats: Vec<usize> = scenario
            .routing
            .graphs
            .iter()
            .flat_map(|g| g.vertices.iter().map(|v| v.satellite))
            .collect();
        sats.sort_unstable();
        sats.dedup();
        sats
    };
    let revisit_s = if used_sats.len() >= 2 {
        (used_sats[used_sats.len() - 1] - used_sats[0]) as f64 * delta_s
    } else {
        0.0
    };

    for frame in 0..scenario.num_frames {
        let mut first_start = f64::INFINITY;
        let mut last_end = f64::NEG_INFINITY;

        for (graph, &head_load) in scenario
            .routing
            .graphs
            .iter()
            .zip(&scenario.routing.assigned_load)
        {
            // (ready time, tiles) delivered to each function of this graph
            // for this frame.
            let mut inbox: Vec<(f64, f64)> = vec![(f64::NEG_INFINITY, 0.0); nm + 1];
            for &h in app.heads() {
                let v = graph.vertex(h);
                inbox[h] = (capture(v.satellite, frame), head_load);
            }
            for i in 1..=nm {
                let v = graph.vertex(i);
                let (mut ready, tiles) = inbox[i];
                if app.in_degree(i) > 0 {
                    // Fan-in: wait for every parent delivery and for the
                    // local capture of this frame (data-source rule).
                    ready = ready.max(capture(v.satellite, frame));
                }
                if tiles <= 0.0 {
                    continue;
                }
                tallies[i - 1].received += tiles;
                let inst = instances
                    .get_mut(&(v.function, v.satellite, v.device))
                    .expect("instantiated above");
                let start = ready.max(inst.free_at);
                // Deadline recurrence: each frame extends the previous
                // frame's deadline by at least one frame interval.
                let deadline = match inst.last_deadline_frame {
                    Some(f) if f == frame => inst.last_deadline,
                    Some(_) => {
                        let d = ready.max(inst.last_deadline) + delta_f;
                        inst.last_deadline = d;
                        inst.last_deadline_frame = Some(frame);
                        d
                    }
                    None => {
                        let d = ready + delta_f;
                        inst.last_deadline = d;
                        inst.last_deadline_frame = Some(frame);
                        d
                    }
                };
                let budget_s = (deadline - start).max(0.0);
                let analyzable = budget_s * inst.rate;
                // Fluid accounting: the whole batch completes when it fits
                // the deadline budget (with a small tolerance so exact
                // saturation does not drop), otherwise the tail is dropped.
                let analyzed = if tiles <= analyzable + 1e-9 * (1.0 + tiles) {
                    tiles
                } else {
                    analyzable.max(0.0)
                };
                let finish = start + analyzed / inst.rate;
                inst.free_at = if analyzed < tiles { deadline } else { finish };
                tallies[i - 1].analyzed += analyzed;
                if inst.device == Device::Gpu {
                    gpu_busy[inst.satellite - 1] += analyzed / inst.gpu_speed;
                }
                if analyzed > 0.0 {
                    first_start = first_start.min(start);
                    last_end = last_end.max(finish);
                }

                // Forward surviving tiles downstream, scaled per edge ratio.
                for e in app.edges().iter() {
                    if e.from != i {
                        continue;
                    }
                    let out = analyzed * e.ratio;
                    let dst = graph.vertex(e.to);
                    let mut arrival = finish;
                    if out > 1e-12 && dst.satellite != v.satellite {
                        // Store-and-forward across each adjacent hop.
                        let bits = out * msg_bytes * 8.0;
                        let step: i64 = if dst.satellite > v.satellite { 1 } else { -1 };
                        let mut at = v.satellite as i64;
                        while at != dst.satellite as i64 {
                            let next = at + step;
                            let key = (at.min(next) as usize, at.max(next) as usize);
                            let free = link_free.entry(key).or_insert(0.0);
                            let start_tx = arrival.max(*free);
                            let duration = bits / scenario.link_bandwidth_bps;
                            arrival = start_tx + duration;
                            *free = arrival;
                            total_bytes += out * msg_bytes;
                            at = next;
                        }
                    }
                    let slot = &mut inbox[e.to];
                    slot.0 = slot.0.max(arrival);
                    slot.1 += out;
                }
            }
        }

        let end_to_end = if last_end > first_start {
            last_end - first_start
        } else {
            0.0
        };
        frames_out.push(FrameLatency {
            frame,
            revisit_s,
            analysis_s: end_to_end - revisit_s,
            end_to_end_s: end_to_end,
        });
    }

    Ok(MetricsReport {
        per_function: tallies,
        total_hop_bytes: total_bytes,
        frames: frames_out,
        gpu_busy_s: gpu_busy,
    })
}
