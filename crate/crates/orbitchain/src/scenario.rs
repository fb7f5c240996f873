//! Scenario, plan, and routing documents: the line-oriented TOML artifacts
//! that tie the pipeline stages together, each carrying the SHA-256 digest
//! of its input for provenance.

use crate::model::{
    validate_application, AnalyticsFunction, ApplicationGraph, Constellation, Edge,
    ValidatedApplication,
};
use crate::planner::{DeploymentPlan, Device, SolverStatus};
use crate::profile::{
    FunctionProfile, MemoryFootprint, PiecewiseSpeedModel, ProfileSet, Segment,
};
use crate::routing::{
    realization_graph_capacity, RealizationGraph, RealizationVertex, RoutingPlan, RoutingStatus,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("TOML parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("TOML serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Profile(#[from] crate::profile::ProfileError),
    #[error(transparent)]
    Routing(#[from] crate::routing::RoutingError),
    #[error("scenario field error: {0}")]
    Invalid(String),
}

/// Hex SHA-256 of an input document, recorded in derived artifacts.
pub fn digest_hex(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------- scenario

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FunctionDoc {
    id: usize,
    name: String,
    profile: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EdgeDoc {
    from: usize,
    to: usize,
    ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ApplicationDoc {
    functions: Vec<FunctionDoc>,
    #[serde(default)]
    edges: Vec<EdgeDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SatelliteDoc {
    id: usize,
    cpu_cores: f64,
    memory_bytes: f64,
    #[serde(default)]
    split_memory_cpu_bytes: Option<f64>,
    #[serde(default)]
    split_memory_gpu_bytes: Option<f64>,
    #[serde(default)]
    has_gpu: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConstellationDoc {
    frame_deadline_s: f64,
    revisit_interval_s: f64,
    alpha: f64,
    beta: f64,
    satellites: Vec<SatelliteDoc>,
}

/// Workload and link parameters shared by planning and simulation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkloadSpec {
    /// N_0: tiles entering each pipeline head per frame.
    pub tiles_per_frame: f64,
    pub num_frames: usize,
    pub msg_request_bytes: f64,
    pub msg_response_bytes: f64,
    pub link_bandwidth_bps: f64,
    #[serde(default)]
    pub background_noise: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProfileDoc {
    #[serde(default)]
    speed_gpu: f64,
    #[serde(default)]
    gpu_base_cpu_quota: f64,
    min_cpu_quota: f64,
    mem_cpu_bytes: f64,
    #[serde(default)]
    mem_gpu_bytes: f64,
    segments: Vec<Segment>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScenarioDoc {
    application: ApplicationDoc,
    constellation: ConstellationDoc,
    workload: WorkloadSpec,
    profiles: BTreeMap<String, ProfileDoc>,
}

/// A fully validated, ready-to-use scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub app: ValidatedApplication,
    pub constellation: Constellation,
    pub profiles: ProfileSet,
    pub workload: WorkloadSpec,
    /// SHA-256 of the source text.
    pub digest: String,
}

pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDoc = toml::from_str(text)?;
    let graph = ApplicationGraph {
        functions: doc
            .application
            .functions
            .iter()
            .map(|f| AnalyticsFunction {
                id: f.id,
                name: f.name.clone(),
                profile_ref: f.profile.clone(),
            })
            .collect(),
        edges: doc
            .application
            .edges
            .iter()
            .map(|e| Edge {
                from: e.from,
                to: e.to,
                ratio: e.ratio,
            })
            .collect(),
    };
    let app = validate_application(graph)?;
    let constellation = Constellation {
        satellites: doc
            .constellation
            .satellites
            .iter()
            .map(|s| crate::model::Satellite {
                id: s.id,
                cpu_cores: s.cpu_cores,
                memory_bytes: s.memory_bytes,
                split_memory: match (s.split_memory_cpu_bytes, s.split_memory_gpu_bytes) {
                    (Some(cpu), Some(gpu)) => Some(crate::model::SplitMemory {
                        cpu_bytes: cpu,
                        gpu_bytes: gpu,
                    }),
                    _ => None,
                },
                has_gpu: s.has_gpu,
            })
            .collect(),
        frame_deadline_s: doc.constellation.frame_deadline_s,
        revisit_interval_s: doc.constellation.revisit_interval_s,
        alpha: doc.constellation.alpha,
        beta: doc.constellation.beta,
    };
    constellation.validate()?;
    let mut profiles = ProfileSet::new();
    for (name, p) in &doc.profiles {
        let profile = FunctionProfile {
            speed_cpu: PiecewiseSpeedModel::new(p.segments.clone())?,
            speed_gpu: p.speed_gpu,
            mem: MemoryFootprint {
                cpu_bytes: p.mem_cpu_bytes,
                gpu_bytes: p.mem_gpu_bytes,
            },
            gpu_base_cpu_quota: p.gpu_base_cpu_quota,
            min_cpu_quota: p.min_cpu_quota,
        };
        profile.validate()?;
        profiles.insert(name.clone(), profile);
    }
    for f in app.functions() {
        if !profiles.contains_key(&f.profile_ref) {
            return Err(ScenarioError::Invalid(format!(
                "function `{}` references missing profile `{}`",
                f.name, f.profile_ref
            )));
        }
    }
    if !(doc.workload.tiles_per_frame >= 0.0) {
        return Err(ScenarioError::Invalid("tiles_per_frame must be >= 0".into()));
    }
    if doc.workload.num_frames == 0 {
        return Err(ScenarioError::Invalid("num_frames must be >= 1".into()));
    }
    Ok(Scenario {
        app,
        constellation,
        profiles,
        workload: doc.workload,
        digest: digest_hex(text),
    })
}

// -------------------------------------------------------------------- plan

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanDocument {
    /// Digest of the scenario this plan was solved from.
    pub input_digest: String,
    pub plan: DeploymentPlan,
}

pub fn plan_to_toml(plan: &DeploymentPlan, input_digest: &str) -> Result<String, ScenarioError> {
    Ok(toml::to_string_pretty(&PlanDocument {
        input_digest: input_digest.to_string(),
        plan: plan.clone(),
    })?)
}

pub fn plan_from_toml(text: &str) -> Result<PlanDocument, ScenarioError> {
    Ok(toml::from_str(text)?)
}

// ----------------------------------------------------------------- routing

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VertexDoc {
    function: usize,
    satellite: usize,
    device: Device,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphDoc {
    capacity: f64,
    assigned_load: f64,
    vertices: Vec<VertexDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoutingDocument {
    pub input_digest: String,
    complete: bool,
    graphs: Vec<GraphDoc>,
}

pub fn routing_to_toml(plan: &RoutingPlan, input_digest: &str) -> Result<String, ScenarioError> {
    let doc = RoutingDocument {
        input_digest: input_digest.to_string(),
        complete: plan.status == RoutingStatus::Complete,
        graphs: plan
            .graphs
            .iter()
            .zip(&plan.assigned_load)
            .map(|(g, &load)| GraphDoc {
                capacity: g.capacity,
                assigned_load: load,
                vertices: g
                    .vertices
                    .iter()
                    .map(|v| VertexDoc {
                        function: v.function,
                        satellite: v.satellite,
                        device: v.device,
                    })
                    .collect(),
            })
            .collect(),
    };
    Ok(toml::to_string_pretty(&doc)?)
}

/// Rebuilds a routing plan from its document; flows and residuals are
/// recomputed against the application and the given capacity table.
pub fn routing_from_toml(
    text: &str,
    app: &ValidatedApplication,
    capacities: &crate::planner::InstanceCapacityTable,
) -> Result<(RoutingPlan, String), ScenarioError> {
    let doc: RoutingDocument = toml::from_str(text)?;
    let mut graphs = Vec::new();
    let mut loads = Vec::new();
    let mut residual = capacities.clone();
    let links: Vec<(usize, usize)> = app.edges().iter().map(|e| (e.from, e.to)).collect();
    for (idx, g) in doc.graphs.iter().enumerate() {
        let vertices: Vec<RealizationVertex> = g
            .vertices
            .iter()
            .map(|v| RealizationVertex {
                function: v.function,
                satellite: v.satellite,
                device: v.device,
            })
            .collect();
        let (_, flows) = realization_graph_capacity(&vertices, capacities, app)?;
        for v in &vertices {
            let cap = residual.get(v.function, v.satellite, v.device).unwrap_or(0.0);
            residual.insert(
                v.function,
                v.satellite,
                v.device,
                (cap - g.assigned_load * flows.flow(v.function)).max(0.0),
            );
        }
        graphs.push(RealizationGraph {
            index: idx,
            vertices,
            links: links.clone(),
            capacity: g.capacity,
            flows,
        });
        loads.push(g.assigned_load);
    }
    let plan = RoutingPlan {
        graphs,
        assigned_load: loads,
        residual_capacities: residual,
        status: if doc.complete {
            RoutingStatus::Complete
        } else {
            RoutingStatus::Incomplete
        },
    };
    Ok((plan, doc.input_digest))
}

// ------------------------------------------------------------ profile file

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedProfileDocument {
    pub input_digest: String,
    pub segments: Vec<Segment>,
    pub r_squared: Vec<f64>,
}

pub fn fitted_profile_to_toml(
    model: &PiecewiseSpeedModel,
    r_squared: &[f64],
    input_digest: &str,
) -> Result<String, ScenarioError> {
    Ok(toml::to_string_pretty(&FittedProfileDocument {
        input_digest: input_digest.to_string(),
        segments: model.segments().to_vec(),
        r_squared: r_squared.to_vec(),
    })?)
}

// ----------------------------------------------------------------- summary

/// JSON summary of a simulation run, for machine consumption.
#[derive(Debug, Clone, Serialize)]
pub struct SimSummary {
    pub input_digest: String,
    pub per_function_completion: Vec<f64>,
    pub application_completion: f64,
    pub total_hop_bytes: f64,
    pub mean_end_to_end_s: f64,
    pub mean_revisit_s: f64,
    pub mean_analysis_s: f64,
    pub gpu_busy_s: Vec<f64>,
}

impl SimSummary {
    pub fn from_report(report: &crate::simulator::MetricsReport, input_digest: &str) -> Self {
        let (per, app) = crate::simulator::completion_ratio(report);
        let n = report.frames.len().max(1) as f64;
        Self {
            input_digest: input_digest.to_string(),
            per_function_completion: per,
            application_completion: app,
            total_hop_bytes: report.total_hop_bytes,
            mean_end_to_end_s: report.frames.iter().map(|f| f.end_to_end_s).sum::<f64>() / n,
            mean_revisit_s: report.frames.iter().map(|f| f.revisit_s).sum::<f64>() / n,
            mean_analysis_s: report.frames.iter().map(|f| f.analysis_s).sum::<f64>() / n,
            gpu_busy_s: report.gpu_busy_s.clone(),
        }
    }
}

/// One CSV row per frame: frame id, revisit, analysis, end-to-end seconds.
pub fn metrics_to_csv(report: &crate::simulator::MetricsReport) -> String {
    let mut out = String::from("frame,revisit_s,analysis_s,end_to_end_s\n");
    for f in &report.frames {
        out.push_str(&format!(
            "{},{},{},{}\n",
            f.frame, f.revisit_s, f.analysis_s, f.end_to_end_s
        ));
    }
    out
}

pub fn plan_status_exit(status: SolverStatus) -> bool {
    status != SolverStatus::Infeasible
}
