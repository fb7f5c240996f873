//! Domain types for analytics applications, constellations, and workload
//! derivation from edge distribution ratios.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("application graph contains a cycle")]
    CycleDetected,
    #[error("edge references unknown function id {0}")]
    UnknownFunctionId(usize),
    #[error("distribution ratio {0} outside (0, 1]")]
    InvalidRatio(f64),
    #[error("function ids must form a contiguous 1..N range")]
    NonContiguousIds,
    #[error("edge {0} -> {1} violates the topological id ordering")]
    IdsNotTopological(usize, usize),
    #[error("invalid constellation parameter: {0}")]
    InvalidConstellation(String),
}

/// One analysis module of the application DAG.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalyticsFunction {
    /// 1-based index, topologically ordered.
    pub id: usize,
    pub name: String,
    /// Key into the function profile registry.
    pub profile_ref: String,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    /// Fraction of tiles the upstream function forwards along this edge.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApplicationGraph {
    pub functions: Vec<AnalyticsFunction>,
    pub edges: Vec<Edge>,
}

/// An application graph whose id ordering has been verified topological
/// and whose ratios are in range. Immutable after validation.
#[derive(Debug, Clone)]
pub struct ValidatedApplication {
    graph: ApplicationGraph,
    heads: Vec<usize>,
}

impl ValidatedApplication {
    pub fn graph(&self) -> &ApplicationGraph {
        &self.graph
    }

    pub fn num_functions(&self) -> usize {
        self.graph.functions.len()
    }

    pub fn functions(&self) -> &[AnalyticsFunction] {
        &self.graph.functions
    }

    pub fn edges(&self) -> &[Edge] {
        &self.graph.edges
    }

    /// Functions with in-degree zero, in id order.
    pub fn heads(&self) -> &[usize] {
        &self.heads
    }

    pub fn function(&self, id: usize) -> &AnalyticsFunction {
        &self.graph.functions[id - 1]
    }

    pub fn downstream(&self, id: usize) -> impl Iterator<Item = &Edge> {
        self.graph.edges.iter().filter(move |e| e.from == id)
    }

    pub fn upstream(&self, id: usize) -> impl Iterator<Item = &Edge> {
        self.graph.edges.iter().filter(move |e| e.to == id)
    }

    pub fn in_degree(&self, id: usize) -> usize {
        self.upstream(id).count()
    }
}

/// Checks the graph invariants: contiguous 1..N ids, acyclic, edge ids in
/// topological order, ratios in (0, 1].
pub fn validate_application(graph: ApplicationGraph) -> Result<ValidatedApplication, ModelError> {
    let n = graph.functions.len();
    let ids: BTreeSet<usize> = graph.functions.iter().map(|f| f.id).collect();
    if ids.len() != n || graph.functions.iter().any(|f| f.id < 1 || f.id > n) {
        return Err(ModelError::NonContiguousIds);
    }
    for e in &graph.edges {
        if !ids.contains(&e.from) {
            return Err(ModelError::UnknownFunctionId(e.from));
        }
        if !ids.contains(&e.to) {
            return Err(ModelError::UnknownFunctionId(e.to));
        }
        if !(e.ratio > 0.0 && e.ratio <= 1.0) {
            return Err(ModelError::InvalidRatio(e.ratio));
        }
    }
    // Kahn's algorithm; report cycles before id-order violations so a
    // 2-cycle surfaces as CycleDetected.
    let mut indeg = vec![0usize; n + 1];
    for e in &graph.edges {
        indeg[e.to] += 1;
    }
    let mut queue: Vec<usize> = (1..=n).filter(|&i| indeg[i] == 0).collect();
    let mut seen = 0;
    while let Some(i) = queue.pop() {
        seen += 1;
        for e in graph.edges.iter().filter(|e| e.from == i) {
            indeg[e.to] -= 1;
            if indeg[e.to] == 0 {
                queue.push(e.to);
            }
        }
    }
    if seen != n {
        return Err(ModelError::CycleDetected);
    }
    for e in &graph.edges {
        if e.from >= e.to {
            return Err(ModelError::IdsNotTopological(e.from, e.to));
        }
    }
    let heads: Vec<usize> = (1..=n)
        .filter(|&i| !graph.edges.iter().any(|e| e.to == i))
        .collect();
    Ok(ValidatedApplication { graph, heads })
}

/// Proportional workload per function for one unit of traffic entering each
/// pipeline head. Fan-in sums parent contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTable {
    flows: Vec<f64>,
}

impl FlowTable {
    pub fn flow(&self, id: usize) -> f64 {
        self.flows[id - 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.flows.iter().enumerate().map(|(k, &f)| (k + 1, f))
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }
}

/// BFS in topological (id) order: heads carry flow 1, each edge multiplies
/// by its ratio, and multi-parent nodes accumulate.
pub fn compute_flows(app: &ValidatedApplication) -> FlowTable {
    let n = app.num_functions();
    let mut flows = vec![0.0f64; n];
    for &h in app.heads() {
        flows[h - 1] = 1.0;
    }
    for i in 1..=n {
        let f = flows[i - 1];
        for e in app.downstream(i) {
            flows[e.to - 1] += e.ratio * f;
        }
    }
    FlowTable { flows }
}

/// Per-function tile workload `N_{f,i} = N_0 * Flows[i]`, kept real-valued.
pub fn compute_frame_workloads(flows: &FlowTable, tiles_per_frame: f64) -> Vec<f64> {
    debug_assert!(tiles_per_frame >= 0.0);
    flows.flows.iter().map(|f| f * tiles_per_frame).collect()
}

/// Per-satellite memory capacity; unified RAM or split RAM/VRAM.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitMemory {
    pub cpu_bytes: f64,
    pub gpu_bytes: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Satellite {
    /// 1-based index in movement order.
    pub id: usize,
    pub cpu_cores: f64,
    pub memory_bytes: f64,
    #[serde(default)]
    pub split_memory: Option<SplitMemory>,
    #[serde(default)]
    pub has_gpu: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Constellation {
    /// Ordered by movement; index j of `satellites[j-1]` is the hop position.
    pub satellites: Vec<Satellite>,
    /// Frame deadline Δ_f in seconds.
    pub frame_deadline_s: f64,
    /// In-orbit revisit time Δ_s in seconds.
    pub revisit_interval_s: f64,
    /// GPU context-switching discount.
    pub alpha: f64,
    /// CPU discount for background processes.
    pub beta: f64,
}

impl Constellation {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.frame_deadline_s <= 0.0 {
            return Err(ModelError::InvalidConstellation(
                "frame_deadline_s must be > 0".into(),
            ));
        }
        if self.revisit_interval_s <= 0.0 {
            return Err(ModelError::InvalidConstellation(
                "revisit_interval_s must be > 0".into(),
            ));
        }
        for coeff in [self.alpha, self.beta] {
            if !(coeff > 0.0 && coeff <= 1.0) {
                return Err(ModelError::InvalidConstellation(format!(
                    "discount coefficient {coeff} outside (0, 1]"
                )));
            }
        }
        for (k, s) in self.satellites.iter().enumerate() {
            if s.id != k + 1 {
                return Err(ModelError::InvalidConstellation(format!(
                    "satellite ids must be 1..N in order, got {} at position {}",
                    s.id,
                    k + 1
                )));
            }
            if s.cpu_cores <= 0.0 || s.memory_bytes <= 0.0 {
                return Err(ModelError::InvalidConstellation(format!(
                    "satellite {} has non-positive resources",
                    s.id
                )));
            }
        }
        Ok(())
    }

    pub fn num_satellites(&self) -> usize {
        self.satellites.len()
    }

    pub fn satellite(&self, j: usize) -> &Satellite {
        &self.satellites[j - 1]
    }
}
