//! Analytics function deployment: CPU quota and GPU time-slice allocation
//! maximizing the minimum per-function capacity margin, plus the reference
//! baseline placements and plan verification.

mod solver;

pub use solver::{solve_deployment, solve_deployment_with, SolveOptions};

use crate::model::{Constellation, ValidatedApplication};
use crate::profile::{eval_speed, FunctionProfile, ProfileSet};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Quotas and slices below this are treated as zero.
pub const ACTIVE_TOL: f64 = 1e-9;
/// Constraint satisfaction tolerance for plan verification.
pub const VERIFY_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("no profile registered for reference `{0}`")]
    MissingProfile(String),
    #[error("numeric failure in solver: {0}")]
    NumericFailure(String),
    #[error("compute parallelism needs at least as many satellites as functions")]
    NotEnoughSatellites,
    #[error("plan dimensions do not match the scenario")]
    DimensionMismatch,
    #[error(transparent)]
    Profile(#[from] crate::profile::ProfileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Device {
    Cpu,
    Gpu,
}

impl std::fmt::Display for Device {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Device::Cpu => write!(f, "cpu"),
            Device::Gpu => write!(f, "gpu"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverStatus {
    Optimal,
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct SolverStats {
    pub nodes_explored: u64,
    pub wall_time_ms: f64,
}

/// The deployment decision variables: CPU quota matrix `[function][satellite]`
/// in cores and GPU time-slice matrix in seconds per frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeploymentPlan {
    pub cpu_quota: Vec<Vec<f64>>,
    pub gpu_slice: Vec<Vec<f64>>,
    /// Value of the max-min objective; absent for baseline placements,
    /// which are constructed rather than optimized.
    pub objective_margin: Option<f64>,
    pub status: SolverStatus,
    #[serde(default)]
    pub stats: SolverStats,
}

impl DeploymentPlan {
    pub fn infeasible(num_functions: usize, num_satellites: usize) -> Self {
        Self {
            cpu_quota: vec![vec![0.0; num_satellites]; num_functions],
            gpu_slice: vec![vec![0.0; num_satellites]; num_functions],
            objective_margin: None,
            status: SolverStatus::Infeasible,
            stats: SolverStats::default(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        let ns = self.cpu_quota.first().map_or(0, |row| row.len());
        (self.cpu_quota.len(), ns)
    }
}

/// Per-instance processing capacity in tiles per frame; entries exist only
/// for active instances.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InstanceCapacityTable {
    entries: BTreeMap<(usize, usize, Device), f64>,
}

impl InstanceCapacityTable {
    pub fn insert(&mut self, function: usize, satellite: usize, device: Device, tiles: f64) {
        self.entries.insert((function, satellite, device), tiles);
    }

    pub fn get(&self, function: usize, satellite: usize, device: Device) -> Option<f64> {
        self.entries.get(&(function, satellite, device)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize, Device), &f64)> {
        self.entries.iter()
    }

    pub fn instances_of(
        &self,
        function: usize,
    ) -> impl Iterator<Item = (usize, Device, f64)> + '_ {
        self.entries
            .iter()
            .filter(move |((i, _, _), _)| *i == function)
            .map(|(&(_, j, d), &cap)| (j, d, cap))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Resolves each function's profile from the registry, in id order.
pub fn resolve_profiles<'a>(
    app: &ValidatedApplication,
    profiles: &'a ProfileSet,
) -> Result<Vec<&'a FunctionProfile>, PlannerError> {
    app.functions()
        .iter()
        .map(|f| {
            profiles
                .get(&f.profile_ref)
                .ok_or_else(|| PlannerError::MissingProfile(f.profile_ref.clone()))
        })
        .collect()
}

/// Tiles each active instance can process within one frame deadline:
/// `f_i(r) * Δ_f` on CPU, `t * v_gpu` on GPU.
pub fn instance_capacities(
    plan: &DeploymentPlan,
    app: &ValidatedApplication,
    profiles: &ProfileSet,
    frame_deadline_s: f64,
) -> Result<InstanceCapacityTable, PlannerError> {
    let resolved = resolve_profiles(app, profiles)?;
    let mut table = InstanceCapacityTable::default();
    for (idx, prof) in resolved.iter().enumerate() {
        let i = idx + 1;
        for (jdx, &r) in plan.cpu_quota[idx].iter().enumerate() {
            if r > ACTIVE_TOL {
                let speed = eval_speed(&prof.speed_cpu, r)?;
                table.insert(i, jdx + 1, Device::Cpu, speed * frame_deadline_s);
            }
        }
        for (jdx, &t) in plan.gpu_slice[idx].iter().enumerate() {
            if t > ACTIVE_TOL {
                table.insert(i, jdx + 1, Device::Gpu, t * prof.speed_gpu);
            }
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub passed: bool,
    /// Most negative remaining slack observed for this constraint family;
    /// non-negative (within tolerance) means the constraint holds.
    pub worst_slack: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<ConstraintCheck>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&ConstraintCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Checks every deployment constraint on a plan and reports per-family
/// pass/fail with the worst slack.
pub fn verify_plan(
    plan: &DeploymentPlan,
    constellation: &Constellation,
    app: &ValidatedApplication,
    profiles: &ProfileSet,
    workloads: &[f64],
) -> Result<VerificationReport, PlannerError> {
    let nm = app.num_functions();
    let ns = constellation.num_satellites();
    if plan.cpu_quota.len() != nm
        || plan.gpu_slice.len() != nm
        || plan.cpu_quota.iter().any(|row| row.len() != ns)
        || plan.gpu_slice.iter().any(|row| row.len() != ns)
        || workloads.len() != nm
    {
        return Err(PlannerError::DimensionMismatch);
    }
    let resolved = resolve_profiles(app, profiles)?;
    let delta_f = constellation.frame_deadline_s;
    let mut checks = Vec::new();
    let mut push = |name: &str, worst: f64| {
        checks.push(ConstraintCheck {
            name: name.to_string(),
            passed: worst >= -VERIFY_TOL,
            worst_slack: worst,
        });
    };

    // Non-negativity of all entries.
    let mut worst = f64::INFINITY;
    for row in plan.cpu_quota.iter().chain(plan.gpu_slice.iter()) {
        for &v in row {
            worst = worst.min(v);
        }
    }
    push("non_negative_entries", worst);

    // GPU time-slice budget per satellite.
    let mut worst = f64::INFINITY;
    for j in 0..ns {
        let used: f64 = (0..nm).map(|i| plan.gpu_slice[i][j]).sum();
        worst = worst.min(constellation.alpha * delta_f - used);
    }
    push("gpu_time_slice", worst);

    // Per-function speed margin: capacity minus workload must be >= 0.
    let mut worst = f64::INFINITY;
    let mut domain_worst = f64::INFINITY;
    for i in 0..nm {
        let mut capacity = 0.0;
        for j in 0..ns {
            let r = plan.cpu_quota[i][j];
            if r > ACTIVE_TOL {
                let (_, ub) = resolved[i].speed_cpu.domain();
                domain_worst = domain_worst.min(ub - r);
                let clamped = r.min(ub);
                capacity += eval_speed(&resolved[i].speed_cpu, clamped)? * delta_f;
            }
            capacity += plan.gpu_slice[i][j] * resolved[i].speed_gpu;
        }
        worst = worst.min(capacity - workloads[i]);
    }
    push("speed_margin", worst);
    push("cpu_quota_domain", domain_worst);

    // CPU capacity per satellite, with the GPU base quota charged for every
    // active GPU instance.
    let mut worst = f64::INFINITY;
    for j in 0..ns {
        let mut used = 0.0;
        for i in 0..nm {
            used += plan.cpu_quota[i][j];
            if plan.gpu_slice[i][j] > ACTIVE_TOL {
                used += resolved[i].gpu_base_cpu_quota;
            }
        }
        worst = worst.min(constellation.beta * constellation.satellite(j + 1).cpu_cores - used);
    }
    push("cpu_capacity", worst);

    // Memory per satellite: combined, or the split pair when declared.
    let mut worst = f64::INFINITY;
    for j in 0..ns {
        let sat = constellation.satellite(j + 1);
        let mut cpu_mem = 0.0;
        let mut gpu_mem = 0.0;
        for i in 0..nm {
            if plan.cpu_quota[i][j] > ACTIVE_TOL {
                cpu_mem += resolved[i].mem.cpu_bytes;
            }
            if plan.gpu_slice[i][j] > ACTIVE_TOL {
                gpu_mem += resolved[i].mem.gpu_bytes;
            }
        }
        match sat.split_memory {
            Some(split) => {
                worst = worst.min(split.cpu_bytes - cpu_mem);
                worst = worst.min(split.gpu_bytes - gpu_mem);
            }
            None => worst = worst.min(sat.memory_bytes - (cpu_mem + gpu_mem)),
        }
    }
    push("memory_capacity", worst);

    // Minimum CPU quota for active instances.
    let mut worst = f64::INFINITY;
    for i in 0..nm {
        for j in 0..ns {
            let r = plan.cpu_quota[i][j];
            if r > ACTIVE_TOL {
                worst = worst.min(r - resolved[i].min_cpu_quota);
            }
        }
    }
    push("min_cpu_quota", worst);

    // GPU slices only on satellites that carry a GPU.
    let mut worst = f64::INFINITY;
    for j in 0..ns {
        if !constellation.satellite(j + 1).has_gpu {
            for i in 0..nm {
                worst = worst.min(-plan.gpu_slice[i][j]);
            }
        }
    }
    push("gpu_only_on_gpu_satellites", worst);

    Ok(VerificationReport { checks })
}

/// Largest per-frame head workload N_0 the constellation can absorb, found
/// by doubling then bisecting over solver feasibility. Workloads are
/// `N_0 * flows`.
pub fn max_feasible_tiles(
    constellation: &Constellation,
    app: &ValidatedApplication,
    profiles: &ProfileSet,
    flows: &crate::model::FlowTable,
    rel_tol: f64,
) -> Result<f64, PlannerError> {
    let feasible = |n0: f64| -> Result<bool, PlannerError> {
        let workloads = crate::model::compute_frame_workloads(flows, n0);
        let plan = solve_deployment(constellation, app, profiles, &workloads)?;
        Ok(plan.status != SolverStatus::Infeasible)
    };
    if !feasible(0.0)? {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while feasible(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > 1e9 {
            return Ok(hi);
        }
    }
    while hi - lo > rel_tol * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Compute parallelism: function `m_i` runs alone on satellite `s_i` with
/// all of that satellite's discounted CPU and the full GPU slice budget.
pub fn baseline_compute_parallel(
    constellation: &Constellation,
    app: &ValidatedApplication,
    profiles: &ProfileSet,
) -> Result<DeploymentPlan, PlannerError> {
    let nm = app.num_functions();
    let ns = constellation.num_satellites();
    if ns < nm {
        return Err(PlannerError::NotEnoughSatellites);
    }
    let resolved = resolve_profiles(app, profiles)?;
    let mut plan = DeploymentPlan::infeasible(nm, ns);
    for (idx, prof) in resolved.iter().enumerate() {
        let j = idx; // diagonal placement
        let sat = constellation.satellite(j + 1);
        let gpu_used = sat.has_gpu && prof.speed_gpu > 0.0;
        let mut cpu_avail = constellation.beta * sat.cpu_cores;
        if gpu_used {
            plan.gpu_slice[idx][j] = constellation.alpha * constellation.frame_deadline_s;
            cpu_avail -= prof.gpu_base_cpu_quota;
        }
        let (lb, ub) = prof.speed_cpu.domain();
        let r = cpu_avail.min(ub);
        if r >= lb {
            plan.cpu_quota[idx][j] = r;
        }
    }
    plan.status = SolverStatus::Feasible;
    Ok(plan)
}

/// Data parallelism: every satellite hosts the full application with the
/// CPU budget split evenly. Infeasible when the summed memory footprint
/// exceeds any satellite's memory.
pub fn baseline_data_parallel(
    constellation: &Constellation,
    app: &ValidatedApplication,
    profiles: &ProfileSet,
) -> Result<DeploymentPlan, PlannerError> {
    let nm = app.num_functions();
    let ns = constellation.num_satellites();
    let resolved = resolve_profiles(app, profiles)?;
    let mut plan = DeploymentPlan::infeasible(nm, ns);
    for j in 0..ns {
        let sat = constellation.satellite(j + 1);
        let mut cpu_mem = 0.0;
        let mut gpu_mem = 0.0;
        for prof in &resolved {
            cpu_mem += prof.mem.cpu_bytes;
            if sat.has_gpu && prof.speed_gpu > 0.0 {
                gpu_mem += prof.mem.gpu_bytes;
            }
        }
        let fits = match sat.split_memory {
            Some(split) => cpu_mem <= split.cpu_bytes && gpu_mem <= split.gpu_bytes,
            None => cpu_mem + gpu_mem <= sat.memory_bytes,
        };
        if !fits {
            return Ok(plan);
        }
    }
    for j in 0..ns {
        let sat = constellation.satellite(j + 1);
        let mut cpu_avail = constellation.beta * sat.cpu_cores;
        for prof in &resolved {
            if sat.has_gpu && prof.speed_gpu > 0.0 {
                cpu_avail -= prof.gpu_base_cpu_quota;
            }
        }
        let share = (cpu_avail / nm as f64).max(0.0);
        for (idx, prof) in resolved.iter().enumerate() {
            let (lb, ub) = prof.speed_cpu.domain();
            let r = share.min(ub);
            if r >= lb {
                plan.cpu_quota[idx][j] = r;
            }
            if sat.has_gpu && prof.speed_gpu > 0.0 {
                plan.gpu_slice[idx][j] =
                    constellation.alpha * constellation.frame_deadline_s / nm as f64;
            }
        }
    }
    // A function that could not be instantiated anywhere leaves the whole
    // placement unusable.
    for idx in 0..nm {
        let active = (0..ns)
            .any(|j| plan.cpu_quota[idx][j] > ACTIVE_TOL || plan.gpu_slice[idx][j] > ACTIVE_TOL);
        if !active {
            return Ok(DeploymentPlan::infeasible(nm, ns));
        }
    }
    plan.status = SolverStatus::Feasible;
    Ok(plan)
}
