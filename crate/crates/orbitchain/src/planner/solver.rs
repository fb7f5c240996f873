//! Max-min margin deployment solver: branch-and-bound over the per-instance
//! activation binaries with an LP relaxation at every node, plus an
//! exhaustive enumeration path for small instances.

use super::{
    resolve_profiles, DeploymentPlan, PlannerError, SolverStatus, ACTIVE_TOL,
};
use crate::model::{Constellation, ValidatedApplication};
use crate::profile::{eval_speed, FunctionProfile, Segment};
use minilp::{ComparisonOp, OptimizationDirection, Problem, Variable};
use std::time::Instant;

/// Minimum non-zero GPU time slice; keeps the activation binary linked to a
/// strictly positive slice.
const MIN_GPU_SLICE: f64 = 1e-6;
const INT_TOL: f64 = 1e-6;
const HULL_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Instances with at most this many activation binaries are solved by
    /// exhaustive enumeration instead of branch and bound.
    pub enumeration_threshold: usize,
    pub node_limit: u64,
    pub gap_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            enumeration_threshold: 12,
            node_limit: 200_000,
            gap_tol: 1e-6,
        }
    }
}

/// One candidate (function, satellite) placement slot with its bounds and
/// the concave majorant of the speed model.
struct Slot {
    func: usize,
    sat: usize,
    cpu_possible: bool,
    gpu_possible: bool,
    quota_lb: f64,
    quota_ub: f64,
    speed_max: f64,
    /// Lines of the concave upper hull of the speed model, as (slope,
    /// intercept) pairs; for concave models these are the segments
    /// themselves.
    hull: Vec<(f64, f64)>,
    concave: bool,
}

struct ProblemData {
    nm: usize,
    ns: usize,
    slots: Vec<Slot>,
    /// Activation binaries as (slot index, device) pairs; only slots where
    /// the device is possible appear.
    binaries: Vec<(usize, BinKind)>,
    workloads: Vec<f64>,
    delta_f: f64,
    alpha: f64,
    beta: f64,
    gpu_speeds: Vec<f64>,
    gpu_base: Vec<f64>,
    mem_cpu: Vec<f64>,
    mem_gpu: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinKind {
    Cpu,
    Gpu,
}

/// Upper concave hull of the speed model's segment endpoints, as lines.
fn concave_majorant(segments: &[Segment]) -> Vec<(f64, f64)> {
    let mut points: Vec<(f64, f64)> = Vec::new();
    for seg in segments {
        points.push((seg.quota_lo, seg.value_at(seg.quota_lo)));
        points.push((seg.quota_hi, seg.value_at(seg.quota_hi)));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    points.dedup_by(|b, a| (a.0 - b.0).abs() < 1e-12);
    // Andrew's monotone chain, upper hull only.
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in points {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= -1e-15 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    if hull.len() == 1 {
        return vec![(0.0, hull[0].1)];
    }
    hull.windows(2)
        .map(|w| {
            let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            (slope, w[0].1 - slope * w[0].0)
        })
        .collect()
}

fn build_problem_data(
    constellation: &Constellation,
    app: &ValidatedApplication,
    profiles: &[&FunctionProfile],
    workloads: &[f64],
) -> ProblemData {
    let nm = app.num_functions();
    let ns = constellation.num_satellites();
    let mut slots = Vec::with_capacity(nm * ns);
    let mut binaries = Vec::new();
    for i in 0..nm {
        let prof = profiles[i];
        let (lb, ub) = prof.speed_cpu.domain();
        let concave = prof.speed_cpu.is_concave() && prof.speed_cpu.is_continuous();
        let hull = concave_majorant(prof.speed_cpu.segments());
        let speed_max = eval_speed(&prof.speed_cpu, ub).unwrap_or(0.0).max(0.0);
        for j in 0..ns {
            let sat = constellation.satellite(j + 1);
            let quota_ub = ub.min(constellation.beta * sat.cpu_cores);
            let cpu_possible = quota_ub >= lb - 1e-12 && speed_max > 0.0;
            let gpu_possible = sat.has_gpu
                && prof.speed_gpu > 0.0
                && constellation.alpha * constellation.frame_deadline_s > MIN_GPU_SLICE;
            let idx = slots.len();
            if cpu_possible {
                binaries.push((idx, BinKind::Cpu));
            }
            if gpu_possible {
                binaries.push((idx, BinKind::Gpu));
            }
            slots.push(Slot {
                func: i,
                sat: j,
                cpu_possible,
                gpu_possible,
                quota_lb: lb,
                quota_ub,
                speed_max,
                hull: hull.clone(),
                concave,
            });
        }
    }
    ProblemData {
        nm,
        ns,
        slots,
        binaries,
        workloads: workloads.to_vec(),
        delta_f: constellation.frame_deadline_s,
        alpha: constellation.alpha,
        beta: constellation.beta,
        gpu_speeds: profiles.iter().map(|p| p.speed_gpu).collect(),
        gpu_base: profiles.iter().map(|p| p.gpu_base_cpu_quota).collect(),
        mem_cpu: profiles.iter().map(|p| p.mem.cpu_bytes).collect(),
        mem_gpu: profiles.iter().map(|p| p.mem.gpu_bytes).collect(),
    }
}

struct LpSolution {
    objective: f64,
    x_cpu: Vec<f64>,
    x_gpu: Vec<f64>,
    quota: Vec<f64>,
    speed: Vec<f64>,
    slice: Vec<f64>,
}

/// Per-slot fixing state during search: binaries forced on/off and, for
/// non-concave models, the speed segment an active CPU instance must use.
#[derive(Clone)]
struct NodeState {
    fix: Vec<Option<bool>>,
    seg_fix: Vec<Option<usize>>,
}

fn solve_lp(
    data: &ProblemData,
    constellation: &Constellation,
    profiles: &[&FunctionProfile],
    state: &NodeState,
) -> Option<LpSolution> {
    let n_slots = data.slots.len();
    let mut prob = Problem::new(OptimizationDirection::Maximize);

    // Any function with a positive workload but no possible instance makes
    // the whole problem infeasible; workload-free functions contribute a
    // constant zero margin.
    let mut z_cap = f64::INFINITY;
    for i in 0..data.nm {
        let has_any = data
            .slots
            .iter()
            .any(|s| s.func == i && (s.cpu_possible || s.gpu_possible));
        if !has_any {
            if data.workloads[i] > 1e-12 {
                return None;
            }
            z_cap = z_cap.min(-data.workloads[i]);
        }
    }
    let z = prob.add_var(1.0, (f64::NEG_INFINITY, z_cap.min(1e12)));

    let mut bin_fix: Vec<Vec<Option<bool>>> = vec![vec![None; 2]; n_slots];
    for (b, &(slot, kind)) in data.binaries.iter().enumerate() {
        bin_fix[slot][kind as usize] = state.fix[b];
    }

    let mut x_cpu: Vec<Option<Variable>> = vec![None; n_slots];
    let mut x_gpu: Vec<Option<Variable>> = vec![None; n_slots];
    let mut quota: Vec<Option<Variable>> = vec![None; n_slots];
    let mut speed: Vec<Option<Variable>> = vec![None; n_slots];
    let mut slice: Vec<Option<Variable>> = vec![None; n_slots];

    let bin_bounds = |f: Option<bool>| match f {
        None => (0.0, 1.0),
        Some(true) => (1.0, 1.0),
        Some(false) => (0.0, 0.0),
    };

    for (s, slot) in data.slots.iter().enumerate() {
        if slot.cpu_possible {
            let fix = bin_fix[s][BinKind::Cpu as usize];
            if fix == Some(false) {
                // Omitting the variables pins the slot at zero.
            } else {
                let xv = prob.add_var(0.0, bin_bounds(fix));
                let rv = prob.add_var(0.0, (0.0, slot.quota_ub));
                let vv = prob.add_var(0.0, (0.0, slot.speed_max));
                // r <= ub * x ; r >= lb * x
                prob.add_constraint(&[(rv, 1.0), (xv, -slot.quota_ub)], ComparisonOp::Le, 0.0);
                prob.add_constraint(&[(rv, 1.0), (xv, -slot.quota_lb)], ComparisonOp::Ge, 0.0);
                match state.seg_fix[s] {
                    Some(k) => {
                        // Branch restricted to one speed segment: tighten the
                        // quota range and use the exact segment line.
                        let seg = profiles[slot.func].speed_cpu.segments()[k];
                        let lo = slot.quota_lb.max(seg.quota_lo);
                        let hi = slot.quota_ub.min(seg.quota_hi);
                        if lo > hi + 1e-12 {
                            return None;
                        }
                        prob.add_constraint(&[(rv, 1.0), (xv, -hi)], ComparisonOp::Le, 0.0);
                        prob.add_constraint(&[(rv, 1.0), (xv, -lo)], ComparisonOp::Ge, 0.0);
                        prob.add_constraint(
                            &[(vv, 1.0), (rv, -seg.slope), (xv, -seg.intercept)],
                            ComparisonOp::Le,
                            0.0,
                        );
                    }
                    None => {
                        // Hypograph of the concave majorant; exact for
                        // concave models, a relaxation otherwise.
                        for &(sl, ic) in &slot.hull {
                            prob.add_constraint(
                                &[(vv, 1.0), (rv, -sl), (xv, -ic)],
                                ComparisonOp::Le,
                                0.0,
                            );
                        }
                    }
                }
                x_cpu[s] = Some(xv);
                quota[s] = Some(rv);
                speed[s] = Some(vv);
            }
        }
        if slot.gpu_possible {
            let fix = bin_fix[s][BinKind::Gpu as usize];
            if fix != Some(false) {
                let xv = prob.add_var(0.0, bin_bounds(fix));
                let slice_ub = data.alpha * data.delta_f;
                let tv = prob.add_var(0.0, (0.0, slice_ub));
                prob.add_constraint(&[(tv, 1.0), (xv, -slice_ub)], ComparisonOp::Le, 0.0);
                prob.add_constraint(&[(tv, 1.0), (xv, -MIN_GPU_SLICE)], ComparisonOp::Ge, 0.0);
                x_gpu[s] = Some(xv);
                slice[s] = Some(tv);
            }
        }
    }

    // Per-function capacity margin >= z.
    for i in 0..data.nm {
        let mut terms: Vec<(Variable, f64)> = Vec::new();
        for (s, slot) in data.slots.iter().enumerate() {
            if slot.func != i {
                continue;
            }
            if let Some(vv) = speed[s] {
                terms.push((vv, data.delta_f));
            }
            if let Some(tv) = slice[s] {
                terms.push((tv, data.gpu_speeds[i]));
            }
        }
        if terms.is_empty() {
            continue; // handled by the z upper bound above
        }
        let mut with_z = terms.clone();
        with_z.push((z, -1.0));
        prob.add_constraint(&with_z, ComparisonOp::Ge, data.workloads[i]);
        // Margins are individually non-negative regardless of z.
        prob.add_constraint(&terms, ComparisonOp::Ge, data.workloads[i]);
    }

    for j in 0..data.ns {
        let sat = constellation.satellite(j + 1);
        // GPU time-slice budget.
        let gpu_terms: Vec<(Variable, f64)> = data
            .slots
            .iter()
            .enumerate()
            .filter(|(_, slot)| slot.sat == j)
            .filter_map(|(s, _)| slice[s].map(|tv| (tv, 1.0)))
            .collect();
        if !gpu_terms.is_empty() {
            prob.add_constraint(&gpu_terms, ComparisonOp::Le, data.alpha * data.delta_f);
        }
        // CPU capacity including the GPU base quota per active GPU instance.
        let mut cpu_terms: Vec<(Variable, f64)> = Vec::new();
        for (s, slot) in data.slots.iter().enumerate() {
            if slot.sat != j {
                continue;
            }
            if let Some(rv) = quota[s] {
                cpu_terms.push((rv, 1.0));
            }
            if let Some(xv) = x_gpu[s] {
                cpu_terms.push((xv, data.gpu_base[slot.func]));
            }
        }
        if !cpu_terms.is_empty() {
            prob.add_constraint(&cpu_terms, ComparisonOp::Le, data.beta * sat.cpu_cores);
        }
        // Memory.
        let mut cpu_mem_terms: Vec<(Variable, f64)> = Vec::new();
        let mut gpu_mem_terms: Vec<(Variable, f64)> = Vec::new();
        for (s, slot) in data.slots.iter().enumerate() {
            if slot.sat != j {
                continue;
            }
            if let Some(xv) = x_cpu[s] {
                cpu_mem_terms.push((xv, data.mem_cpu[slot.func]));
            }
            if let Some(xv) = x_gpu[s] {
                gpu_mem_terms.push((xv, data.mem_gpu[slot.func]));
            }
        }
        // Memory rows are normalized to a unit right-hand side: byte-scale
        // coefficients next to O(1) quota rows wreck the LP's conditioning.
        let add_mem_row = |prob: &mut Problem, terms: &[(Variable, f64)], budget: f64| {
            if terms.is_empty() {
                return;
            }
            if budget > 0.0 {
                let scaled: Vec<(Variable, f64)> =
                    terms.iter().map(|&(v, c)| (v, c / budget)).collect();
                prob.add_constraint(&scaled, ComparisonOp::Le, 1.0);
            } else {
                // No memory at all: every occupant's binary must stay off.
                prob.add_constraint(terms, ComparisonOp::Le, 0.0);
            }
        };
        match sat.split_memory {
            Some(split) => {
                add_mem_row(&mut prob, &cpu_mem_terms, split.cpu_bytes);
                add_mem_row(&mut prob, &gpu_mem_terms, split.gpu_bytes);
            }
            None => {
                let mut all = cpu_mem_terms;
                all.extend(gpu_mem_terms);
                add_mem_row(&mut prob, &all, sat.memory_bytes);
            }
        }
    }

    let solution = prob.solve().ok()?;
    let read = |v: Option<Variable>| v.map_or(0.0, |var| solution[var]);
    Some(LpSolution {
        objective: solution[z],
        x_cpu: (0..n_slots).map(|s| read(x_cpu[s])).collect(),
        x_gpu: (0..n_slots).map(|s| read(x_gpu[s])).collect(),
        quota: (0..n_slots).map(|s| read(quota[s])).collect(),
        speed: (0..n_slots).map(|s| read(speed[s])).collect(),
        slice: (0..n_slots).map(|s| read(slice[s])).collect(),
    })
}

/// Turns an integral LP solution into a plan: clamps LP-tolerance overshoot
/// of the per-satellite GPU and CPU budgets, then re-evaluates the true
/// speed model at the cleaned quotas. Returns `None` when the true speeds
/// fall materially short of what the relaxation promised.
fn finish_plan(
    data: &ProblemData,
    constellation: &Constellation,
    profiles: &[&FunctionProfile],
    lp: &LpSolution,
) -> Option<(f64, DeploymentPlan)> {
    let mut plan = DeploymentPlan::infeasible(data.nm, data.ns);
    for (s, slot) in data.slots.iter().enumerate() {
        if lp.x_cpu[s] > 0.5 && lp.quota[s] > ACTIVE_TOL {
            plan.cpu_quota[slot.func][slot.sat] = lp.quota[s].clamp(slot.quota_lb, slot.quota_ub);
        }
        if lp.x_gpu[s] > 0.5 && lp.slice[s] > ACTIVE_TOL {
            plan.gpu_slice[slot.func][slot.sat] = lp.slice[s];
        }
    }
    // The LP solver may overshoot budgets by its own feasibility tolerance;
    // scale slices / trim quotas so the plan verifies exactly.
    for j in 0..data.ns {
        let gpu_budget = data.alpha * data.delta_f;
        let gpu_total: f64 = (0..data.nm).map(|i| plan.gpu_slice[i][j]).sum();
        if gpu_total > gpu_budget {
            let scale = gpu_budget / gpu_total;
            for i in 0..data.nm {
                plan.gpu_slice[i][j] *= scale;
            }
        }
        let cpu_budget = data.beta * constellation.satellite(j + 1).cpu_cores;
        let cpu_total: f64 = (0..data.nm)
            .map(|i| {
                plan.cpu_quota[i][j]
                    + if plan.gpu_slice[i][j] > 0.0 {
                        data.gpu_base[i]
                    } else {
                        0.0
                    }
            })
            .sum();
        let mut excess = cpu_total - cpu_budget;
        if excess > 0.0 {
            // Take the overshoot out of the largest quota; stay above the
            // slot's lower bound so the speed model remains in domain.
            if let Some(i) = (0..data.nm).max_by(|&a, &b| {
                plan.cpu_quota[a][j].total_cmp(&plan.cpu_quota[b][j])
            }) {
                let lb = data
                    .slots
                    .iter()
                    .find(|s| s.func == i && s.sat == j)
                    .map_or(0.0, |s| s.quota_lb);
                let cut = excess.min(plan.cpu_quota[i][j] - lb);
                if cut > 0.0 {
                    plan.cpu_quota[i][j] -= cut;
                    excess -= cut;
                }
            }
            if excess > 1e-6 {
                return None; // overshoot too large to be LP tolerance noise
            }
        }
    }
    // True objective from the cleaned plan.
    let mut worst = f64::INFINITY;
    for i in 0..data.nm {
        let mut capacity = 0.0;
        for j in 0..data.ns {
            let r = plan.cpu_quota[i][j];
            if r > 0.0 {
                capacity += eval_speed(&profiles[i].speed_cpu, r).ok()? * data.delta_f;
            }
            capacity += plan.gpu_slice[i][j] * data.gpu_speeds[i];
        }
        let margin = capacity - data.workloads[i];
        if margin < -1e-7 {
            return None; // true speed fell below the relaxation's promise
        }
        worst = worst.min(margin);
    }
    plan.objective_margin = Some(worst);
    plan.status = SolverStatus::Optimal;
    Some((worst, plan))
}

/// Index of the most fractional unfixed binary, if any.
fn most_fractional(data: &ProblemData, state: &NodeState, lp: &LpSolution) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (b, &(slot, kind)) in data.binaries.iter().enumerate() {
        if state.fix[b].is_some() {
            continue;
        }
        let x = match kind {
            BinKind::Cpu => lp.x_cpu[slot],
            BinKind::Gpu => lp.x_gpu[slot],
        };
        let frac = (x - x.round()).abs();
        if frac > INT_TOL && best.map_or(true, |(_, f)| frac > f) {
            best = Some((b, frac));
        }
    }
    best.map(|(b, _)| b)
}

/// Active non-concave CPU slot whose relaxed speed exceeds the true model.
fn hull_violation(
    data: &ProblemData,
    profiles: &[&FunctionProfile],
    state: &NodeState,
    lp: &LpSolution,
) -> Option<usize> {
    for (s, slot) in data.slots.iter().enumerate() {
        if slot.concave || !slot.cpu_possible || state.seg_fix[s].is_some() {
            continue;
        }
        if lp.x_cpu[s] > 0.5 {
            let r = lp.quota[s].min(slot.quota_ub);
            let truth = eval_speed(&profiles[slot.func].speed_cpu, r).unwrap_or(0.0);
            if lp.speed[s] > truth + HULL_TOL {
                return Some(s);
            }
        }
    }
    None
}

/// Solves the deployment MILP with default options.
pub fn solve_deployment(
    constellation: &Constellation,
    app: &ValidatedApplication,
    profiles: &crate::profile::ProfileSet,
    workloads: &[f64],
) -> Result<DeploymentPlan, PlannerError> {
    solve_deployment_with(constellation, app, profiles, workloads, SolveOptions::default())
}

pub fn solve_deployment_with(
    constellation: &Constellation,
    app: &ValidatedApplication,
    profiles: &crate::profile::ProfileSet,
    workloads: &[f64],
    options: SolveOptions,
) -> Result<DeploymentPlan, PlannerError> {
    if workloads.len() != app.num_functions() {
        return Err(PlannerError::DimensionMismatch);
    }
    let resolved = resolve_profiles(app, profiles)?;
    let data = build_problem_data(constellation, app, &resolved, workloads);
    let start = Instant::now();
    let mut result = if data.binaries.len() <= options.enumeration_threshold {
        enumerate(&data, constellation, &resolved)
    } else {
        branch_and_bound(&data, constellation, &resolved, &options)
    };
    result.stats.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(result)
}

fn enumerate(
    data: &ProblemData,
    constellation: &Constellation,
    profiles: &[&FunctionProfile],
) -> DeploymentPlan {
    let nb = data.binaries.len();
    let mut best: Option<(f64, DeploymentPlan)> = None;
    let mut nodes = 0u64;
    for mask in 0u64..(1u64 << nb) {
        let mut state = NodeState {
            fix: (0..nb).map(|b| Some(mask >> b & 1 == 1)).collect(),
            seg_fix: vec![None; data.slots.len()],
        };
        // Non-concave speed models need every admissible segment assignment
        // tried for each active CPU slot.
        let free_slots: Vec<usize> = data
            .slots
            .iter()
            .enumerate()
            .filter(|(s, slot)| {
                !slot.concave
                    && slot.cpu_possible
                    && data
                        .binaries
                        .iter()
                        .position(|&(sl, k)| sl == *s && k == BinKind::Cpu)
                        .map_or(false, |b| state.fix[b] == Some(true))
            })
            .map(|(s, _)| s)
            .collect();
        let seg_counts: Vec<usize> = free_slots
            .iter()
            .map(|&s| profiles[data.slots[s].func].speed_cpu.segments().len())
            .collect();
        let mut odometer = vec![0usize; free_slots.len()];
        loop {
            for (k, &s) in free_slots.iter().enumerate() {
                state.seg_fix[s] = Some(odometer[k]);
            }
            nodes += 1;
            if let Some(lp) = solve_lp(data, constellation, profiles, &state) {
                if let Some((obj, plan)) = finish_plan(data, constellation, profiles, &lp) {
                    if best.as_ref().map_or(true, |(b, _)| obj > *b + 1e-12) {
                        best = Some((obj, plan));
                    }
                }
            }
            // Advance the mixed-radix odometer; empty means a single pass.
            let mut pos = 0;
            loop {
                if pos == free_slots.len() {
                    break;
                }
                odometer[pos] += 1;
                if odometer[pos] < seg_counts[pos] {
                    break;
                }
                odometer[pos] = 0;
                pos += 1;
            }
            if free_slots.is_empty() || pos == free_slots.len() {
                break;
            }
        }
    }
    match best {
        Some((_, mut plan)) => {
            plan.stats.nodes_explored = nodes;
            plan
        }
        None => {
            let mut plan = DeploymentPlan::infeasible(data.nm, data.ns);
            plan.stats.nodes_explored = nodes;
            plan
        }
    }
}

/// Evaluates an integral leaf exactly the way the enumeration path would:
/// every binary pinned to its rounded value and every admissible segment
/// assignment of the active non-concave CPU slots tried, keeping the best
/// finished plan.
fn polish_leaf(
    data: &ProblemData,
    constellation: &Constellation,
    profiles: &[&FunctionProfile],
    state: &NodeState,
    lp: &LpSolution,
) -> Option<(f64, DeploymentPlan)> {
    let mut pinned = state.clone();
    for (b, &(slot, kind)) in data.binaries.iter().enumerate() {
        let x = match kind {
            BinKind::Cpu => lp.x_cpu[slot],
            BinKind::Gpu => lp.x_gpu[slot],
        };
        pinned.fix[b] = Some(x > 0.5);
    }
    let free_slots: Vec<usize> = data
        .slots
        .iter()
        .enumerate()
        .filter(|(s, slot)| {
            !slot.concave && slot.cpu_possible && pinned.seg_fix[*s].is_none() && lp.x_cpu[*s] > 0.5
        })
        .map(|(s, _)| s)
        .collect();
    let seg_counts: Vec<usize> = free_slots
        .iter()
        .map(|&s| profiles[data.slots[s].func].speed_cpu.segments().len())
        .collect();
    let mut odometer = vec![0usize; free_slots.len()];
    let mut best: Option<(f64, DeploymentPlan)> = None;
    loop {
        for (k, &s) in free_slots.iter().enumerate() {
            pinned.seg_fix[s] = Some(odometer[k]);
        }
        if let Some(leaf) = solve_lp(data, constellation, profiles, &pinned) {
            if let Some((obj, plan)) = finish_plan(data, constellation, profiles, &leaf) {
                if best.as_ref().map_or(true, |(b, _)| obj > *b + 1e-12) {
                    best = Some((obj, plan));
                }
            }
        }
        let mut pos = 0;
        loop {
            if pos == free_slots.len() {
                break;
            }
            odometer[pos] += 1;
            if odometer[pos] < seg_counts[pos] {
                break;
            }
            odometer[pos] = 0;
            pos += 1;
        }
        if free_slots.is_empty() || pos == free_slots.len() {
            break;
        }
    }
    best
}

fn branch_and_bound(
    data: &ProblemData,
    constellation: &Constellation,
    profiles: &[&FunctionProfile],
    options: &SolveOptions,
) -> DeploymentPlan {
    let nb = data.binaries.len();
    let root = NodeState {
        fix: vec![None; nb],
        seg_fix: vec![None; data.slots.len()],
    };
    let mut stack = vec![root];
    let mut best: Option<(f64, DeploymentPlan)> = None;
    let mut nodes = 0u64;
    let mut truncated = false;
    while let Some(state) = stack.pop() {
        nodes += 1;
        if nodes > options.node_limit {
            truncated = true;
            break;
        }
        let Some(lp) = solve_lp(data, constellation, profiles, &state) else {
            continue;
        };
        if let Some((incumbent, _)) = &best {
            if lp.objective <= incumbent + options.gap_tol {
                continue;
            }
        }
        if let Some(b) = most_fractional(data, &state, &lp) {
            // Depth-first, x = 1 explored first (pushed last).
            for value in [false, true] {
                let mut child = state.clone();
                child.fix[b] = Some(value);
                stack.push(child);
            }
            continue;
        }
        if let Some(s) = hull_violation(data, profiles, &state, &lp) {
            let nseg = profiles[data.slots[s].func].speed_cpu.segments().len();
            for k in (0..nseg).rev() {
                let mut child = state.clone();
                child.seg_fix[s] = Some(k);
                stack.push(child);
            }
            continue;
        }
        // Integral leaf: re-solve with every binary pinned and all segment
        // assignments tried, so the final numerics match the enumeration
        // path exactly.
        let finished = polish_leaf(data, constellation, profiles, &state, &lp)
            .or_else(|| finish_plan(data, constellation, profiles, &lp));
        let leaf_obj = finished.as_ref().map_or(f64::NEG_INFINITY, |(o, _)| *o);
        if let Some((obj, plan)) = finished {
            if best.as_ref().map_or(true, |(b, _)| obj > *b + 1e-12) {
                best = Some((obj, plan));
            }
        }
        // The cleaned true objective can fall short of the node's LP bound;
        // if binaries are still unfixed the subtree may hold a better
        // pattern, so keep branching instead of closing the node.
        if lp.objective > leaf_obj + options.gap_tol {
            if let Some(b) = (0..nb).find(|&b| state.fix[b].is_none()) {
                for value in [false, true] {
                    let mut child = state.clone();
                    child.fix[b] = Some(value);
                    stack.push(child);
                }
            }
        }
    }
    match best {
        Some((_, mut plan)) => {
            plan.status = if truncated {
                SolverStatus::Feasible
            } else {
                SolverStatus::Optimal
            };
            plan.stats.nodes_explored = nodes;
            plan
        }
        None => {
            let mut plan = DeploymentPlan::infeasible(data.nm, data.ns);
            plan.stats.nodes_explored = nodes;
            plan
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        validate_application, AnalyticsFunction, ApplicationGraph, Constellation, Satellite,
    };
    use crate::profile::{
        cloud_detection_table_model, FunctionProfile, MemoryFootprint, PiecewiseSpeedModel,
        ProfileSet, Segment,
    };
    use approx::assert_abs_diff_eq;

    fn single_function_app() -> crate::model::ValidatedApplication {
        validate_application(ApplicationGraph {
            functions: vec![AnalyticsFunction {
                id: 1,
                name: "cloud".into(),
                profile_ref: "cloud".into(),
            }],
            edges: vec![],
        })
        .unwrap()
    }

    fn cloud_profile() -> FunctionProfile {
        FunctionProfile {
            speed_cpu: cloud_detection_table_model(),
            speed_gpu: 0.0,
            mem: MemoryFootprint {
                cpu_bytes: 1e9,
                gpu_bytes: 0.0,
            },
            gpu_base_cpu_quota: 0.0,
            min_cpu_quota: 0.5,
        }
    }

    fn one_sat(cores: f64, mem: f64, gpu: bool) -> Constellation {
        Constellation {
            satellites: vec![Satellite {
                id: 1,
                cpu_cores: cores,
                memory_bytes: mem,
                split_memory: None,
                has_gpu: gpu,
            }],
            frame_deadline_s: 60.0,
            revisit_interval_s: 10.0,
            alpha: 0.9,
            beta: 0.8,
        }
    }

    /// [DERIVED] Single cloud-detection instance, one 5-core satellite,
    /// beta 0.8 so 4 usable cores but the model domain caps the quota at 4.
    /// Capacity = (0.1751*4 + 0.3458) * 60 = 62.772 tiles. Workload 32
    /// leaves margin 30.772; cross-checked by a quota grid scan with step
    /// 1e-4 (best at the domain end since the model is increasing).
    #[test]
    fn single_instance_margin_matches_grid_scan() {
        let app = single_function_app();
        let mut profiles = ProfileSet::new();
        profiles.insert("cloud".into(), cloud_profile());
        let constellation = one_sat(5.0, 8e9, false);
        let plan =
            solve_deployment(&constellation, &app, &profiles, &[32.0]).unwrap();
        assert_eq!(plan.status, SolverStatus::Optimal);
        assert_abs_diff_eq!(plan.cpu_quota[0][0], 4.0, epsilon = 1e-6);
        assert_abs_diff_eq!(plan.objective_margin.unwrap(), 30.772, epsilon = 1e-5);
    }

    /// [DERIVED] Same setup with workload 70 > 62.772 max capacity: the
    /// non-negative margin constraint cannot hold, so the MILP is infeasible.
    #[test]
    fn excess_workload_is_infeasible() {
        let app = single_function_app();
        let mut profiles = ProfileSet::new();
        profiles.insert("cloud".into(), cloud_profile());
        let constellation = one_sat(5.0, 8e9, false);
        let plan = solve_deployment(&constellation, &app, &profiles, &[70.0]).unwrap();
        assert_eq!(plan.status, SolverStatus::Infeasible);
    }

    /// [DERIVED] GPU-only path: v_gpu = 2 tiles/s, alpha 0.9, deadline 60 s
    /// gives a 54 s slice -> 108 tiles capacity; with workload 100 the
    /// margin is 8 and the CPU instance stays off because the CPU share
    /// (memory forces a choice? no: both fit) -- CPU adds capacity, so the
    /// solver turns both on: total = 108 + 62.772 - gpu_base reduction.
    /// With gpu_base 1.0 the CPU quota drops to min(4, 4 - 1) = 3 ->
    /// speed(3)*60 = 0.8711*60 = 52.266. Margin = 108 + 52.266 - 100.
    #[test]
    fn gpu_and_cpu_combine() {
        let app = single_function_app();
        let mut profiles = ProfileSet::new();
        let mut prof = cloud_profile();
        prof.speed_gpu = 2.0;
        prof.gpu_base_cpu_quota = 1.0;
        prof.mem.gpu_bytes = 1e9;
        profiles.insert("cloud".into(), prof);
        let constellation = one_sat(5.0, 8e9, true);
        let plan = solve_deployment(&constellation, &app, &profiles, &[100.0]).unwrap();
        assert_eq!(plan.status, SolverStatus::Optimal);
        assert_abs_diff_eq!(plan.gpu_slice[0][0], 54.0, epsilon = 1e-6);
        assert_abs_diff_eq!(plan.cpu_quota[0][0], 3.0, epsilon = 1e-6);
        assert_abs_diff_eq!(
            plan.objective_margin.unwrap(),
            108.0 + 52.266 - 100.0,
            epsilon = 1e-5
        );
    }

    /// [DERIVED] Non-concave (convex) speed model: 0.1*r on [0.5, 2] and
    /// 0.3*r - 0.4 on [2, 4]. The concave hull over-estimates mid-range
    /// speeds, so segment branching must land on the true optimum r = 4
    /// with speed 0.8 -> capacity 48.
    #[test]
    fn non_concave_model_uses_true_speed() {
        let model = PiecewiseSpeedModel::new(vec![
            Segment {
                quota_lo: 0.5,
                quota_hi: 2.0,
                slope: 0.1,
                intercept: 0.0,
            },
            Segment {
                quota_lo: 2.0,
                quota_hi: 4.0,
                slope: 0.3,
                intercept: -0.4,
            },
        ])
        .unwrap();
        let app = single_function_app();
        let mut profiles = ProfileSet::new();
        profiles.insert(
            "cloud".into(),
            FunctionProfile {
                speed_cpu: model,
                speed_gpu: 0.0,
                mem: MemoryFootprint {
                    cpu_bytes: 1e9,
                    gpu_bytes: 0.0,
                },
                gpu_base_cpu_quota: 0.0,
                min_cpu_quota: 0.5,
            },
        );
        let constellation = one_sat(5.0, 8e9, false);
        let plan = solve_deployment(&constellation, &app, &profiles, &[10.0]).unwrap();
        assert_eq!(plan.status, SolverStatus::Optimal);
        assert_abs_diff_eq!(plan.objective_margin.unwrap(), 48.0 - 10.0, epsilon = 1e-5);
    }

    /// Branch and bound and enumeration must agree when forced onto the
    /// same instance.
    #[test]
    fn bb_matches_enumeration() {
        let app = crate::model::validate_application(ApplicationGraph {
            functions: vec![
                AnalyticsFunction {
                    id: 1,
                    name: "a".into(),
                    profile_ref: "cloud".into(),
                },
                AnalyticsFunction {
                    id: 2,
                    name: "b".into(),
                    profile_ref: "cloud".into(),
                },
            ],
            edges: vec![crate::model::Edge {
                from: 1,
                to: 2,
                ratio: 0.5,
            }],
        })
        .unwrap();
        let mut profiles = ProfileSet::new();
        profiles.insert("cloud".into(), cloud_profile());
        let constellation = Constellation {
            satellites: vec![
                Satellite {
                    id: 1,
                    cpu_cores: 3.0,
                    memory_bytes: 1.5e9,
                    split_memory: None,
                    has_gpu: false,
                },
                Satellite {
                    id: 2,
                    cpu_cores: 2.0,
                    memory_bytes: 2.5e9,
                    split_memory: None,
                    has_gpu: false,
                },
            ],
            frame_deadline_s: 60.0,
            revisit_interval_s: 10.0,
            alpha: 0.9,
            beta: 0.8,
        };
        let workloads = [20.0, 10.0];
        let enumerated = solve_deployment_with(
            &constellation,
            &app,
            &profiles,
            &workloads,
            SolveOptions {
                enumeration_threshold: 64,
                ..Default::default()
            },
        )
        .unwrap();
        let branched = solve_deployment_with(
            &constellation,
            &app,
            &profiles,
            &workloads,
            SolveOptions {
                enumeration_threshold: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(enumerated.status, SolverStatus::Optimal);
        assert_eq!(branched.status, SolverStatus::Optimal);
        assert_abs_diff_eq!(
            enumerated.objective_margin.unwrap(),
            branched.objective_margin.unwrap(),
            epsilon = 1e-6
        );
    }
}
