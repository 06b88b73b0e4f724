use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{validate, Flowline, FlowlineError, TaskProfile};

/// Inter-VM link: fixed latency plus bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub latency_s: f64,
    pub bandwidth_bps: f64,
}

impl NetworkParams {
    pub fn new(latency_s: f64, bandwidth_bps: f64) -> Result<Self, FlowlineError> {
        let net = NetworkParams {
            latency_s,
            bandwidth_bps,
        };
        net.check()?;
        Ok(net)
    }

    pub fn check(&self) -> Result<(), FlowlineError> {
        if !(self.bandwidth_bps > 0.0) {
            return Err(FlowlineError::ZeroBandwidth);
        }
        if !(self.latency_s >= 0.0) {
            return Err(FlowlineError::NegativeLatency);
        }
        Ok(())
    }

    /// Seconds to move `bytes` between two distinct VMs.
    pub fn transfer(&self, bytes: f64) -> f64 {
        self.latency_s + bytes / self.bandwidth_bps
    }
}

impl Default for NetworkParams {
    fn default() -> Self {
        NetworkParams {
            latency_s: 0.01,
            bandwidth_bps: 125_000_000.0,
        }
    }
}

/// A flowline with vertex weights and partition-induced edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ComputationGraph {
    pub base: Flowline,
    pub profile: TaskProfile,
    pub assignment: BTreeMap<String, usize>,
    /// Seconds per edge, aligned with `base.edges`.
    pub edge_weights: Vec<f64>,
}

impl ComputationGraph {
    /// Every task on one VM; all edge weights are zero.
    pub fn colocated(flowline: &Flowline, profile: &TaskProfile) -> Self {
        ComputationGraph {
            base: flowline.clone(),
            profile: profile.clone(),
            assignment: flowline.vertices.iter().map(|v| (v.id.clone(), 0)).collect(),
            edge_weights: vec![0.0; flowline.edges.len()],
        }
    }

    pub fn edge_weight(&self, from: &str, to: &str) -> Option<f64> {
        self.base
            .edges
            .iter()
            .position(|e| e.from == from && e.to == to)
            .map(|i| self.edge_weights[i])
    }

    /// Finish time of every vertex, aligned with `base.vertices`.
    pub fn finish_times(&self) -> Result<Vec<f64>, FlowlineError> {
        let order = self
            .base
            .topo_order()
            .ok_or_else(|| FlowlineError::Invalid(validate(&self.base)))?;
        let idx = self.base.index_of();
        let n = self.base.vertices.len();
        let mut preds: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (e, w) in self.base.edges.iter().zip(&self.edge_weights) {
            preds[idx[e.to.as_str()]].push((idx[e.from.as_str()], *w));
        }
        let mut ft = vec![0.0; n];
        for v in order {
            let w = self.profile.weight(&self.base.vertices[v])?;
            let start = preds[v]
                .iter()
                .map(|&(u, ew)| ft[u] + ew)
                .fold(0.0_f64, f64::max);
            ft[v] = w + start;
        }
        Ok(ft)
    }
}

/// Finish time of the exit vertex under the finish-time recursion.
pub fn makespan(graph: &ComputationGraph) -> Result<f64, FlowlineError> {
    let report = validate(&graph.base);
    if !report.is_ok() {
        return Err(FlowlineError::Invalid(report));
    }
    let ft = graph.finish_times()?;
    let exit = graph.base.index_of()[graph.base.exit.as_str()];
    Ok(ft[exit])
}

fn slices(corpus_size: u64, slice_size: u64) -> Result<f64, FlowlineError> {
    if slice_size == 0 {
        return Err(FlowlineError::ZeroSliceSize);
    }
    Ok(corpus_size as f64 / slice_size as f64)
}

/// Total time with every task co-located.
pub fn ideal_time(
    flowline: &Flowline,
    profile: &TaskProfile,
    corpus_size: u64,
    slice_size: u64,
) -> Result<f64, FlowlineError> {
    let n = slices(corpus_size, slice_size)?;
    Ok(n * makespan(&ComputationGraph::colocated(flowline, profile))?)
}

/// Edge weights under a task-to-VM partition.
pub fn apply_partition(
    flowline: &Flowline,
    profile: &TaskProfile,
    partition: &BTreeMap<String, usize>,
    net: NetworkParams,
) -> Result<ComputationGraph, FlowlineError> {
    net.check()?;
    for v in &flowline.vertices {
        if !partition.contains_key(&v.id) {
            return Err(FlowlineError::Unassigned(v.id.clone()));
        }
    }
    let mut edge_weights = Vec::with_capacity(flowline.edges.len());
    for e in &flowline.edges {
        let a = partition
            .get(&e.from)
            .ok_or_else(|| FlowlineError::UnknownVertex(e.from.clone()))?;
        let b = partition
            .get(&e.to)
            .ok_or_else(|| FlowlineError::UnknownVertex(e.to.clone()))?;
        edge_weights.push(if a == b {
            0.0
        } else {
            net.transfer(profile.payload(&e.from, &e.to))
        });
    }
    Ok(ComputationGraph {
        base: flowline.clone(),
        profile: profile.clone(),
        assignment: partition.clone(),
        edge_weights,
    })
}

/// Total time on a partitioned graph.
pub fn partitioned_time(
    graph: &ComputationGraph,
    corpus_size: u64,
    slice_size: u64,
) -> Result<f64, FlowlineError> {
    let n = slices(corpus_size, slice_size)?;
    Ok(n * makespan(graph)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowline::{Edge, TaskNode};

    fn chain() -> (Flowline, TaskProfile) {
        let f = Flowline::build(
            vec![TaskNode::operator("v1", "merge"), TaskNode::operator("v2", "merge")],
            vec![Edge::new("v1", "v2")],
        )
        .unwrap();
        let p = TaskProfile::default()
            .with_weight("v1", 2.0)
            .with_weight("v2", 3.0)
            .with_payload("v1", "v2", 4000.0);
        (f, p)
    }

    fn split() -> BTreeMap<String, usize> {
        [("v1".to_string(), 0), ("v2".to_string(), 1)].into()
    }

    #[test]
    fn single_vertex() {
        let f = Flowline::build(vec![TaskNode::operator("a", "merge")], vec![]).unwrap();
        let p = TaskProfile::default().with_weight("a", 3.0);
        assert_eq!(makespan(&ComputationGraph::colocated(&f, &p)).unwrap(), 3.0);
    }

    #[test]
    fn diamond() {
        let f = Flowline::build(
            ["entry", "a", "b", "exit"]
                .iter()
                .map(|id| TaskNode::operator(*id, "merge"))
                .collect(),
            vec![
                Edge::new("entry", "a"),
                Edge::new("entry", "b"),
                Edge::new("a", "exit"),
                Edge::new("b", "exit"),
            ],
        )
        .unwrap();
        let p = TaskProfile::default()
            .with_weight("entry", 1.0)
            .with_weight("a", 2.0)
            .with_weight("b", 5.0)
            .with_weight("exit", 1.0);
        assert_eq!(makespan(&ComputationGraph::colocated(&f, &p)).unwrap(), 7.0);
    }

    #[test]
    fn partition_adds_transfer() {
        let (f, p) = chain();
        let net = NetworkParams::new(0.1, 10_000.0).unwrap();
        let g = apply_partition(&f, &p, &split(), net).unwrap();
        assert!((g.edge_weight("v1", "v2").unwrap() - 0.5).abs() < 1e-12);
        assert!((makespan(&g).unwrap() - 5.5).abs() < 1e-12);
        assert!((partitioned_time(&g, 400, 200).unwrap() - 11.0).abs() < 1e-12);
    }

    #[test]
    fn colocated_partition_equals_ideal() {
        let (f, p) = chain();
        let all: BTreeMap<String, usize> = [("v1".to_string(), 3), ("v2".to_string(), 3)].into();
        let g = apply_partition(&f, &p, &all, NetworkParams::default()).unwrap();
        assert!(g.edge_weights.iter().all(|w| *w == 0.0));
        assert_eq!(
            partitioned_time(&g, 1000, 200).unwrap(),
            ideal_time(&f, &p, 1000, 200).unwrap()
        );
    }

    #[test]
    fn ideal_time_arithmetic() {
        let f = Flowline::build(vec![TaskNode::operator("a", "merge")], vec![]).unwrap();
        let p = TaskProfile::default().with_weight("a", 4.65);
        assert!((ideal_time(&f, &p, 8000, 200).unwrap() - 186.0).abs() < 1e-9);
        assert_eq!(ideal_time(&f, &p, 200, 200).unwrap(), 4.65);
        assert_eq!(ideal_time(&f, &p, 0, 200).unwrap(), 0.0);
        assert!(matches!(ideal_time(&f, &p, 10, 0), Err(FlowlineError::ZeroSliceSize)));
    }

    #[test]
    fn guards() {
        let (f, p) = chain();
        let err = apply_partition(&f, &p, &split(), NetworkParams { latency_s: 0.1, bandwidth_bps: 0.0 })
            .unwrap_err();
        assert_eq!(err.to_string(), "zero bandwidth");
        let partial: BTreeMap<String, usize> = [("v1".to_string(), 0)].into();
        assert!(matches!(
            apply_partition(&f, &p, &partial, NetworkParams::default()),
            Err(FlowlineError::Unassigned(id)) if id == "v2"
        ));
    }
}
