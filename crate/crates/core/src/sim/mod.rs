//! Discrete-event simulation of a plan processing a corpus slice by slice,
//! plus baseline schedulers for comparison.

mod baseline;
mod sweep;

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::monetary_cost;
use crate::flowline::{apply_partition, Flowline, FlowlineError, NetworkParams, TaskProfile};
use crate::scheduler::{check_qualification, SchedError, SchedulePlan};

pub use baseline::{baseline_list, baseline_random, minimal_procurements};
pub use sweep::{quality_cell, sweep_eta, QualityCell, SweepConfig, SweepRow};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Flowline(#[from] FlowlineError),
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error("invalid simulation config: {0}")]
    Config(String),
}

/// When a new slice may enter the flowline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Admission {
    /// A slice enters once the previous slice has left every task.
    #[default]
    Sequential,
    /// Slices stream through; each task holds one slice at a time.
    Pipelined,
    /// Slices stream through with no per-task limit.
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub latency_s: f64,
    pub bandwidth_bps: f64,
    pub slice_size: u64,
    pub corpus_size: u64,
    /// Standard deviation of the log of the duration multiplier.
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub admission: Admission,
}

impl Default for SimConfig {
    fn default() -> Self {
        let net = NetworkParams::default();
        SimConfig {
            latency_s: net.latency_s,
            bandwidth_bps: net.bandwidth_bps,
            slice_size: 200,
            corpus_size: 200,
            jitter: 0.0,
            seed: 0,
            admission: Admission::Sequential,
        }
    }
}

impl SimConfig {
    pub fn net(&self) -> NetworkParams {
        NetworkParams {
            latency_s: self.latency_s,
            bandwidth_bps: self.bandwidth_bps,
        }
    }

    /// Slices needed to cover the corpus; a trailing partial slice counts
    /// as a full one.
    pub fn slices(&self) -> u64 {
        self.corpus_size.div_ceil(self.slice_size)
    }

    pub fn check(&self) -> Result<(), SimError> {
        self.net().check()?;
        if self.slice_size == 0 {
            return Err(FlowlineError::ZeroSliceSize.into());
        }
        if !(self.jitter >= 0.0) || !self.jitter.is_finite() {
            return Err(SimError::Config(format!("jitter must be non-negative, got {}", self.jitter)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub task: String,
    pub slice: u64,
    pub start: f64,
    pub end: f64,
    pub vm: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub total_time: f64,
    /// Last finish minus first start, per slice.
    pub per_slice_makespan: Vec<f64>,
    pub monetary_cost: f64,
    pub timeline: Vec<TraceEvent>,
}

impl SimResult {
    /// The timeline as chrome://tracing complete events, one process per VM.
    pub fn chrome_trace(&self) -> serde_json::Value {
        let events: Vec<serde_json::Value> = self
            .timeline
            .iter()
            .map(|e| {
                serde_json::json!({
                    "name": e.task,
                    "cat": "task",
                    "ph": "X",
                    "ts": e.start * 1e6,
                    "dur": (e.end - e.start) * 1e6,
                    "pid": e.vm,
                    "tid": e.task,
                    "args": { "slice": e.slice },
                })
            })
            .collect();
        serde_json::Value::Array(events)
    }
}

/// Finish event ordered by time, then insertion order.
#[derive(Debug, PartialEq)]
struct Finish {
    time: f64,
    seq: u64,
    vertex: usize,
    slice: usize,
}

impl Eq for Finish {}

impl Ord for Finish {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Finish {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Run `plan` over the corpus. A task instance for slice `s` starts once
/// every predecessor's slice `s` has arrived and, depending on admission,
/// once the task finished slice `s - 1` or the whole of slice `s - 1` left
/// the flowline.
pub fn simulate(
    plan: &SchedulePlan,
    flowline: &Flowline,
    profile: &TaskProfile,
    config: &SimConfig,
) -> Result<SimResult, SimError> {
    config.check()?;
    let violations = check_qualification(plan, flowline);
    if !violations.is_empty() {
        return Err(SchedError::Unqualified(violations).into());
    }
    let graph = apply_partition(flowline, profile, &plan.assignment, config.net())?;
    let n = flowline.vertices.len();
    let slices = config.slices() as usize;
    let idx = flowline.index_of();
    let mut preds: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut succs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (e, &w) in flowline.edges.iter().zip(&graph.edge_weights) {
        let (a, b) = (idx[e.from.as_str()], idx[e.to.as_str()]);
        succs[a].push((b, w));
        preds[b].push((a, w));
    }
    let weights: Vec<f64> = flowline
        .vertices
        .iter()
        .map(|v| profile.weight(v))
        .collect::<Result<_, _>>()?;

    // Duration multipliers are drawn slice by slice in vertex order so a seed
    // fixes the whole run.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let jitter = if config.jitter > 0.0 {
        let s = config.jitter;
        Some(LogNormal::new(-s * s / 2.0, s).map_err(|e| SimError::Config(e.to_string()))?)
    } else {
        None
    };
    let mut duration = vec![vec![0.0; n]; slices];
    for row in duration.iter_mut() {
        for (v, d) in row.iter_mut().enumerate() {
            *d = match &jitter {
                Some(dist) => weights[v] * dist.sample(&mut rng),
                None => weights[v],
            };
        }
    }

    let mode = config.admission;
    let pending_init = |v: usize, s: usize| -> usize {
        let mut k = preds[v].len();
        if s > 0 && mode != Admission::Unbounded {
            k += 1;
        }
        if s > 0 && mode == Admission::Sequential {
            k += 1;
        }
        k
    };
    let mut pending: Vec<Vec<usize>> = (0..slices)
        .map(|s| (0..n).map(|v| pending_init(v, s)).collect())
        .collect();
    let mut ready = vec![vec![0.0f64; n]; slices];
    let mut start = vec![vec![0.0f64; n]; slices];
    let mut finish = vec![vec![f64::NAN; n]; slices];
    let mut done_in_slice = vec![0usize; slices];
    let mut slice_end = vec![0.0f64; slices];

    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut launch = |heap: &mut BinaryHeap<Reverse<Finish>>, start: &mut Vec<Vec<f64>>, v: usize, s: usize, at: f64| {
        start[s][v] = at;
        heap.push(Reverse(Finish {
            time: at + duration[s][v],
            seq,
            vertex: v,
            slice: s,
        }));
        seq += 1;
    };
    for s in 0..slices {
        for v in 0..n {
            if pending[s][v] == 0 {
                launch(&mut heap, &mut start, v, s, 0.0);
            }
        }
    }

    let mut release = |pending: &mut Vec<Vec<usize>>,
                       ready: &mut Vec<Vec<f64>>,
                       heap: &mut BinaryHeap<Reverse<Finish>>,
                       start: &mut Vec<Vec<f64>>,
                       v: usize,
                       s: usize,
                       at: f64| {
        ready[s][v] = ready[s][v].max(at);
        pending[s][v] -= 1;
        if pending[s][v] == 0 {
            let t = ready[s][v];
            launch(heap, start, v, s, t);
        }
    };

    while let Some(Reverse(ev)) = heap.pop() {
        let (v, s, t) = (ev.vertex, ev.slice, ev.time);
        finish[s][v] = t;
        for &(w, delay) in &succs[v] {
            release(&mut pending, &mut ready, &mut heap, &mut start, w, s, t + delay);
        }
        if s + 1 < slices && mode != Admission::Unbounded {
            release(&mut pending, &mut ready, &mut heap, &mut start, v, s + 1, t);
        }
        done_in_slice[s] += 1;
        slice_end[s] = slice_end[s].max(t);
        if done_in_slice[s] == n && s + 1 < slices && mode == Admission::Sequential {
            let end = slice_end[s];
            for u in 0..n {
                release(&mut pending, &mut ready, &mut heap, &mut start, u, s + 1, end);
            }
        }
    }

    let mut timeline = Vec::with_capacity(slices * n);
    let mut per_slice = Vec::with_capacity(slices);
    let mut total: f64 = 0.0;
    for s in 0..slices {
        let first = start[s].iter().copied().fold(f64::INFINITY, f64::min);
        let last = finish[s].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        per_slice.push(last - first);
        total = total.max(last);
        for v in 0..n {
            let id = &flowline.vertices[v].id;
            timeline.push(TraceEvent {
                task: id.clone(),
                slice: s as u64,
                start: start[s][v],
                end: finish[s][v],
                vm: plan.assignment[id],
            });
        }
    }
    Ok(SimResult {
        total_time: total,
        per_slice_makespan: per_slice,
        monetary_cost: monetary_cost(plan.unit_price(), total),
        timeline,
    })
}
