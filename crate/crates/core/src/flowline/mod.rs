//! Flowline DAGs: task vertices, pipes, profiles and timing analysis.

mod timing;
mod validate;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry;

pub use timing::{
    apply_partition, ideal_time, makespan, partitioned_time, ComputationGraph, NetworkParams,
};
pub use validate::{validate, validate_profile, ValidationReport, Violation, Warning};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    ModelCc,
    ModelCe,
    Operator,
}

impl TaskKind {
    pub fn is_model(self) -> bool {
        !matches!(self, TaskKind::Operator)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelTask {
    Cc,
    Ce,
}

impl ModelTask {
    pub fn kind(self) -> TaskKind {
        match self {
            ModelTask::Cc => TaskKind::ModelCc,
            ModelTask::Ce => TaskKind::ModelCe,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelTask::Cc => "cc",
            ModelTask::Ce => "ce",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorFamily {
    Filter,
    Mapper,
    Integrator,
    Constructor,
    Controller,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResourceClass {
    GpuIntensive,
    CpuOnly,
}

impl ResourceClass {
    pub fn for_kind(kind: TaskKind) -> Self {
        if kind.is_model() {
            ResourceClass::GpuIntensive
        } else {
            ResourceClass::CpuOnly
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskNode {
    pub id: String,
    pub label: String,
    pub kind: TaskKind,
    /// Model or operator name, e.g. `BertNER` or `filter`.
    pub function: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator_family: Option<OperatorFamily>,
    pub resource_class: ResourceClass,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub config: BTreeMap<String, String>,
    /// Column bindings declared with `-> a, b`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<String>,
}

impl TaskNode {
    pub fn operator(id: impl Into<String>, function: impl Into<String>) -> Self {
        let id = id.into();
        let function = function.into();
        let label = if id == function {
            id.clone()
        } else {
            format!("{function}[{id}]")
        };
        TaskNode {
            operator_family: registry::lookup(&function).map(|s| s.family),
            id,
            label,
            kind: TaskKind::Operator,
            function,
            resource_class: ResourceClass::CpuOnly,
            config: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    /// Model vertex; CC or CE follows the naming rule in [`registry::model_task_for`].
    pub fn model(id: impl Into<String>, function: impl Into<String>) -> Self {
        let function = function.into();
        let task = registry::model_task_for(&function);
        Self::model_with_task(id, function, task)
    }

    pub fn model_with_task(
        id: impl Into<String>,
        function: impl Into<String>,
        task: ModelTask,
    ) -> Self {
        let id = id.into();
        let function = function.into();
        let label = if id == function {
            id.clone()
        } else {
            format!("{function}[{id}]")
        };
        TaskNode {
            id,
            label,
            kind: task.kind(),
            function,
            operator_family: None,
            resource_class: ResourceClass::GpuIntensive,
            config: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    /// Entrance controller named after the data source.
    pub fn start(id: impl Into<String>) -> Self {
        let mut node = Self::operator(id, "start");
        node.label = node.id.clone();
        node
    }

    pub fn is_gpu(&self) -> bool {
        self.resource_class == ResourceClass::GpuIntensive
    }

    pub fn is_controller(&self) -> bool {
        self.operator_family == Some(OperatorFamily::Controller)
    }

    pub fn with_config(mut self, key: &str, value: impl Into<String>) -> Self {
        self.config.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
}

impl Edge {
    pub fn new(from: impl Into<String>, to: impl Into<String>) -> Self {
        Edge {
            from: from.into(),
            to: to.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flowline {
    pub vertices: Vec<TaskNode>,
    pub edges: Vec<Edge>,
    pub entry: String,
    pub exit: String,
}

#[derive(Debug, Error)]
pub enum FlowlineError {
    #[error("invalid flowline: {0}")]
    Invalid(ValidationReport),
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("missing weight for `{0}`")]
    MissingWeight(String),
    #[error("negative weight for `{0}`")]
    NegativeWeight(String),
    #[error("vertex `{0}` is not assigned to a vm")]
    Unassigned(String),
    #[error("zero bandwidth")]
    ZeroBandwidth,
    #[error("negative latency")]
    NegativeLatency,
    #[error("slice size must be positive")]
    ZeroSliceSize,
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Flowline {
    /// Build a flowline, inferring entry and exit from degrees, and validate it.
    pub fn build(vertices: Vec<TaskNode>, edges: Vec<Edge>) -> Result<Self, FlowlineError> {
        let f = Self::assemble(vertices, edges);
        let report = validate(&f);
        if report.is_ok() {
            Ok(f)
        } else {
            Err(FlowlineError::Invalid(report))
        }
    }

    /// Build without validating. Entry and exit are the first vertex with no
    /// in-edges and the last vertex with no out-edges (empty when none exist).
    pub fn assemble(vertices: Vec<TaskNode>, edges: Vec<Edge>) -> Self {
        let has_in: std::collections::HashSet<&str> = edges.iter().map(|e| e.to.as_str()).collect();
        let has_out: std::collections::HashSet<&str> =
            edges.iter().map(|e| e.from.as_str()).collect();
        let entry = vertices
            .iter()
            .find(|v| !has_in.contains(v.id.as_str()))
            .map(|v| v.id.clone())
            .unwrap_or_default();
        let exit = vertices
            .iter()
            .rev()
            .find(|v| !has_out.contains(v.id.as_str()))
            .map(|v| v.id.clone())
            .unwrap_or_default();
        Flowline {
            vertices,
            edges,
            entry,
            exit,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, FlowlineError> {
        let f: Flowline = serde_json::from_str(text)?;
        let report = validate(&f);
        if report.is_ok() {
            Ok(f)
        } else {
            Err(FlowlineError::Invalid(report))
        }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertex(&self, id: &str) -> Option<&TaskNode> {
        self.vertices.iter().find(|v| v.id == id)
    }

    pub fn index_of(&self) -> HashMap<&str, usize> {
        self.vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (v.id.as_str(), i))
            .collect()
    }

    /// Predecessor ids of `id` in edge order.
    pub fn predecessors(&self, id: &str) -> Vec<&str> {
        self.edges
            .iter()
            .filter(|e| e.to == id)
            .map(|e| e.from.as_str())
            .collect()
    }

    /// Successor ids of `id` in edge order.
    pub fn successors(&self, id: &str) -> Vec<&str> {
        self.edges
            .iter()
            .filter(|e| e.from == id)
            .map(|e| e.to.as_str())
            .collect()
    }

    /// Vertex indices in topological order, breaking ties by vertex order.
    /// Returns `None` on a cycle or a dangling edge.
    pub fn topo_order(&self) -> Option<Vec<usize>> {
        let idx = self.index_of();
        let n = self.vertices.len();
        let mut indeg = vec![0usize; n];
        let mut succ = vec![Vec::new(); n];
        for e in &self.edges {
            let (&a, &b) = (idx.get(e.from.as_str())?, idx.get(e.to.as_str())?);
            succ[a].push(b);
            indeg[b] += 1;
        }
        let mut ready: std::collections::BTreeSet<usize> =
            (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &s in &succ[v] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    ready.insert(s);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    pub fn model_ids(&self) -> Vec<&str> {
        self.vertices
            .iter()
            .filter(|v| v.is_gpu())
            .map(|v| v.id.as_str())
            .collect()
    }

    pub fn operator_ids(&self) -> Vec<&str> {
        self.vertices
            .iter()
            .filter(|v| !v.is_gpu())
            .map(|v| v.id.as_str())
            .collect()
    }
}

/// Bytes carried by one edge per data slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgePayload {
    pub from: String,
    pub to: String,
    pub bytes: f64,
}

/// Per-slice vertex weights (seconds) and edge payloads (bytes).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskProfile {
    pub vertex_weights: BTreeMap<String, f64>,
    #[serde(default)]
    pub edge_payloads: Vec<EdgePayload>,
}

impl TaskProfile {
    pub fn from_json(text: &str) -> Result<Self, FlowlineError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn with_weight(mut self, id: &str, seconds: f64) -> Self {
        self.vertex_weights.insert(id.to_string(), seconds);
        self
    }

    pub fn with_payload(mut self, from: &str, to: &str, bytes: f64) -> Self {
        self.set_payload(from, to, bytes);
        self
    }

    pub fn set_payload(&mut self, from: &str, to: &str, bytes: f64) {
        if let Some(p) = self
            .edge_payloads
            .iter_mut()
            .find(|p| p.from == from && p.to == to)
        {
            p.bytes = bytes;
        } else {
            self.edge_payloads.push(EdgePayload {
                from: from.to_string(),
                to: to.to_string(),
                bytes,
            });
        }
    }

    /// Weight of a vertex. Controllers default to 0 when unprofiled.
    pub fn weight(&self, node: &TaskNode) -> Result<f64, FlowlineError> {
        match self.vertex_weights.get(&node.id) {
            Some(w) if *w < 0.0 || !w.is_finite() => {
                Err(FlowlineError::NegativeWeight(node.id.clone()))
            }
            Some(w) => Ok(*w),
            None if node.is_controller() => Ok(0.0),
            None => Err(FlowlineError::MissingWeight(node.id.clone())),
        }
    }

    /// Payload of an edge; unprofiled edges carry nothing.
    pub fn payload(&self, from: &str, to: &str) -> f64 {
        self.edge_payloads
            .iter()
            .find(|p| p.from == from && p.to == to)
            .map(|p| p.bytes)
            .unwrap_or(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructors_set_resource_class() {
        let m = TaskNode::model("BERTRE", "BERTRE");
        assert_eq!(m.kind, TaskKind::ModelCc);
        assert_eq!(m.resource_class, ResourceClass::GpuIntensive);
        let f = TaskNode::operator("f_bert", "filter");
        assert_eq!(f.label, "filter[f_bert]");
        assert_eq!(f.operator_family, Some(OperatorFamily::Filter));
        assert_eq!(f.resource_class, ResourceClass::CpuOnly);
    }

    #[test]
    fn topo_order_is_stable() {
        let f = Flowline::assemble(
            vec![
                TaskNode::start("s"),
                TaskNode::operator("b", "merge"),
                TaskNode::operator("a", "merge"),
                TaskNode::operator("t", "triple"),
            ],
            vec![
                Edge::new("s", "a"),
                Edge::new("s", "b"),
                Edge::new("a", "t"),
                Edge::new("b", "t"),
            ],
        );
        assert_eq!(f.topo_order(), Some(vec![0, 1, 2, 3]));
        assert_eq!(f.entry, "s");
        assert_eq!(f.exit, "t");
    }

    #[test]
    fn json_round_trip() {
        let f = Flowline::build(
            vec![TaskNode::start("data"), TaskNode::operator("triple", "triple")],
            vec![Edge::new("data", "triple")],
        )
        .unwrap();
        let text = serde_json::to_string(&f).unwrap();
        assert_eq!(Flowline::from_json(&text).unwrap(), f);
    }
}
