//! Slice-by-slice execution of a flowline over a corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use kgflow_core::expr::Literal;
use kgflow_core::flowline::{validate, Flowline, ModelTask, TaskKind, TaskNode, TaskProfile, ValidationReport};
use kgflow_core::gfl::BINDING_PREFIX;
use kgflow_core::registry;

use crate::endpoint::{EndpointError, EndpointSet, InferResult, InferRow};
use crate::ontology::Ontology;
use crate::operators::{apply_operator, OperatorContext, OperatorError, RowIssue};
use crate::record::{slice_corpus, DataSlice, Document, Record, Triple, DEFAULT_SLICE_SIZE};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid flowline: {0}")]
    Invalid(ValidationReport),
    #[error("slice size must be positive")]
    ZeroSliceSize,
    #[error("no endpoint bound to model `{task}`")]
    Unbound { task: String },
    #[error("endpoint for `{task}` serves {got} but the task is {expected}")]
    TaskMismatch {
        task: String,
        expected: &'static str,
        got: &'static str,
    },
    #[error("endpoint for `{task}` failed: {source}")]
    Endpoint {
        task: String,
        #[source]
        source: EndpointError,
    },
    #[error("pipe `{from}` -> `{to}` lacks column(s) {}", .missing.join(", "))]
    Schema {
        from: String,
        to: String,
        missing: Vec<String>,
    },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("bad binding `{name}`: {message}")]
    Binding { name: String, message: String },
}

/// How task durations are measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Clock {
    /// Fixed cost per input row, so profiles are reproducible.
    Logical { model_row_s: f64, operator_row_s: f64 },
    /// Elapsed wall time.
    Wall,
}

impl Default for Clock {
    fn default() -> Self {
        Clock::Logical {
            model_row_s: 0.005,
            operator_row_s: 0.0002,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub slice_size: usize,
    pub clock: Clock,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            slice_size: DEFAULT_SLICE_SIZE,
            clock: Clock::default(),
        }
    }
}

/// Traffic on one pipe summed over the run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipeStats {
    pub from: String,
    pub to: String,
    pub rows: usize,
    pub bytes: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub documents: usize,
    pub slices: usize,
    /// Seconds spent by each task on each slice.
    pub task_seconds: BTreeMap<String, Vec<f64>>,
    /// Rows received by each task over the run.
    pub task_rows: BTreeMap<String, usize>,
    pub pipes: Vec<PipeStats>,
    pub dropped: Vec<RowIssue>,
}

impl RunReport {
    /// Mean per-slice task time and pipe payload, the input of scheduling.
    pub fn profile(&self) -> TaskProfile {
        let n = self.slices.max(1) as f64;
        let mut p = TaskProfile::default();
        for (task, secs) in &self.task_seconds {
            p = p.with_weight(task, secs.iter().sum::<f64>() / n);
        }
        for pipe in &self.pipes {
            p.set_payload(&pipe.from, &pipe.to, pipe.bytes as f64 / n);
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub triples: BTreeSet<Triple>,
    pub report: RunReport,
}

/// Flowline bindings stored on the entry vertex.
pub fn bindings(flowline: &Flowline) -> Result<BTreeMap<String, Literal>, RunError> {
    let Some(entry) = flowline.vertex(&flowline.entry) else {
        return Ok(BTreeMap::new());
    };
    entry
        .config
        .iter()
        .filter_map(|(k, v)| k.strip_prefix(BINDING_PREFIX).map(|name| (name, v)))
        .map(|(name, v)| {
            Literal::parse(v)
                .map(|l| (name.to_string(), l))
                .map_err(|e| RunError::Binding {
                    name: name.to_string(),
                    message: e.to_string(),
                })
        })
        .collect()
}

fn model_task(node: &TaskNode) -> Option<ModelTask> {
    match node.kind {
        TaskKind::ModelCc => Some(ModelTask::Cc),
        TaskKind::ModelCe => Some(ModelTask::Ce),
        TaskKind::Operator => None,
    }
}

/// Send rows to the model's endpoint and attach its answers. Endpoints only
/// see the model's declared input columns.
fn run_model(node: &TaskNode, task: ModelTask, rows: Vec<Record>, endpoints: &mut EndpointSet) -> Result<Vec<Record>, RunError> {
    if rows.is_empty() {
        return Ok(rows);
    }
    let name = endpoints
        .binding_for(node)
        .ok_or_else(|| RunError::Unbound { task: node.id.clone() })?
        .to_string();
    let endpoint = endpoints.get_mut(&name).expect("bound name resolves");
    let fail = |source| RunError::Endpoint {
        task: node.id.clone(),
        source,
    };
    let bad = |message: String| fail(EndpointError::Protocol(message));
    match task {
        ModelTask::Ce => {
            // One request per sample, in first-seen order.
            let mut samples: Vec<&Record> = Vec::new();
            let mut seen = BTreeSet::new();
            for r in &rows {
                if seen.insert(r.sample_id.as_str()) {
                    samples.push(r);
                }
            }
            let request: Vec<InferRow> = samples
                .iter()
                .map(|r| InferRow {
                    id: r.sample_id.clone(),
                    text: r.sample.clone().unwrap_or_default(),
                    subject: None,
                    object: None,
                })
                .collect();
            let results = endpoint.infer(&request).map_err(fail)?;
            if results.len() != request.len() {
                return Err(bad(format!("{} results for {} rows", results.len(), request.len())));
            }
            let mut out = Vec::new();
            for (r, result) in samples.iter().zip(results) {
                let InferResult::Chunks { chunks } = result else {
                    return Err(bad("extractor returned a label".into()));
                };
                let len = r.sample.as_deref().map_or(0, |s| s.chars().count());
                for c in chunks {
                    if c.start > c.end || c.end > len {
                        return Err(bad(format!("chunk `{}` offsets {}..{} outside the sample", c.surface, c.start, c.end)));
                    }
                    out.push(Record {
                        row_id: format!("{}:{}-{}:{}", r.sample_id, c.start, c.end, c.kind),
                        sample_id: r.sample_id.clone(),
                        sample: r.sample.clone(),
                        entity: Some(c),
                        ..Record::default()
                    });
                }
            }
            Ok(out)
        }
        ModelTask::Cc => {
            let request: Vec<InferRow> = rows
                .iter()
                .map(|r| {
                    let pair = r.entity_pair.as_ref().expect("checked at the pipe");
                    InferRow {
                        id: r.sample_id.clone(),
                        text: r.sample.clone().unwrap_or_default(),
                        subject: Some(pair.subject.clone()),
                        object: Some(pair.object.clone()),
                    }
                })
                .collect();
            let results = endpoint.infer(&request).map_err(fail)?;
            if results.len() != request.len() {
                return Err(bad(format!("{} results for {} rows", results.len(), request.len())));
            }
            rows.into_iter()
                .zip(results)
                .map(|(mut r, result)| {
                    let InferResult::Label { label, score, scores } = result else {
                        return Err(bad("classifier returned chunks".into()));
                    };
                    if !(0.0..=1.0).contains(&score) {
                        return Err(bad(format!("score {score} outside [0, 1]")));
                    }
                    r.relation_category = Some(label);
                    r.score = Some(score);
                    r.scores = scores;
                    Ok(r)
                })
                .collect()
        }
    }
}

/// Run `flowline` over `corpus`. Slices go through the tasks in topological
/// order; the result is the union of every triple constructor's output.
pub fn run_flowline(
    flowline: &Flowline,
    ontology: &Ontology,
    corpus: &[Document],
    endpoints: &mut EndpointSet,
    options: &RunOptions,
) -> Result<RunOutput, RunError> {
    let report = validate(flowline);
    if !report.is_ok() {
        return Err(RunError::Invalid(report));
    }
    if options.slice_size == 0 {
        return Err(RunError::ZeroSliceSize);
    }
    let order = flowline.topo_order().expect("validated flowline is acyclic");
    let idx = flowline.index_of();
    let n = flowline.vertices.len();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut pipe_of: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut pipes: Vec<PipeStats> = Vec::new();
    for e in &flowline.edges {
        let (a, b) = (idx[e.from.as_str()], idx[e.to.as_str()]);
        preds[b].push(a);
        pipe_of.insert((a, b), pipes.len());
        pipes.push(PipeStats {
            from: e.from.clone(),
            to: e.to.clone(),
            ..PipeStats::default()
        });
    }

    // Bindings, model endpoints and column requirements are checked before
    // any slice runs.
    let bindings = bindings(flowline)?;
    let ctx = OperatorContext {
        bindings: &bindings,
        ontology,
    };
    let mut required: Vec<Vec<&'static str>> = Vec::with_capacity(n);
    for v in &flowline.vertices {
        if let Some(task) = model_task(v) {
            let name = endpoints
                .binding_for(v)
                .ok_or_else(|| RunError::Unbound { task: v.id.clone() })?
                .to_string();
            let got = endpoints.get_mut(&name).expect("bound name resolves").task();
            if got != task {
                return Err(RunError::TaskMismatch {
                    task: v.id.clone(),
                    expected: task.as_str(),
                    got: got.as_str(),
                });
            }
        }
        required.push(registry::required_columns(v).ok().flatten().unwrap_or_default());
    }

    let slices = slice_corpus(corpus, options.slice_size);
    let mut out = RunOutput {
        triples: BTreeSet::new(),
        report: RunReport {
            documents: corpus.len(),
            slices: slices.len(),
            task_seconds: flowline
                .vertices
                .iter()
                .map(|v| (v.id.clone(), Vec::with_capacity(slices.len())))
                .collect(),
            task_rows: flowline.vertices.iter().map(|v| (v.id.clone(), 0)).collect(),
            pipes,
            dropped: Vec::new(),
        },
    };
    for source in slices {
        let mut results: Vec<Option<DataSlice>> = vec![None; n];
        for &v in &order {
            let node = &flowline.vertices[v];
            let inputs: Vec<DataSlice> = if preds[v].is_empty() {
                vec![source.clone()]
            } else {
                let mut inputs = Vec::with_capacity(preds[v].len());
                for &u in &preds[v] {
                    let slice = results[u].clone().expect("predecessor ran first");
                    let mut missing: BTreeSet<&str> = BTreeSet::new();
                    for r in &slice.records {
                        missing.extend(required[v].iter().filter(|c| !r.has(c)));
                    }
                    if !missing.is_empty() {
                        return Err(RunError::Schema {
                            from: flowline.vertices[u].id.clone(),
                            to: node.id.clone(),
                            missing: missing.into_iter().map(str::to_string).collect(),
                        });
                    }
                    let stats = &mut out.report.pipes[pipe_of[&(u, v)]];
                    stats.rows += slice.len();
                    stats.bytes += slice.wire_size();
                    inputs.push(slice);
                }
                inputs
            };
            let rows_in: usize = inputs.iter().map(DataSlice::len).sum();
            let started = Instant::now();
            let slice = match model_task(node) {
                Some(task) => {
                    let rows = inputs.into_iter().flat_map(|s| s.records).collect();
                    DataSlice::new(source.slice_index, run_model(node, task, rows, endpoints)?)
                }
                None => {
                    let result = apply_operator(node, &inputs, &ctx)?;
                    out.report.dropped.extend(result.dropped);
                    result.slice
                }
            };
            let seconds = match options.clock {
                Clock::Wall => started.elapsed().as_secs_f64(),
                Clock::Logical { .. } if node.is_controller() => 0.0,
                Clock::Logical { model_row_s, .. } if node.kind.is_model() => model_row_s * rows_in as f64,
                Clock::Logical { operator_row_s, .. } => operator_row_s * rows_in as f64,
            };
            out.report.task_seconds.get_mut(&node.id).expect("every task").push(seconds);
            *out.report.task_rows.get_mut(&node.id).expect("every task") += rows_in;
            if node.function == "triple" && node.kind == TaskKind::Operator {
                out.triples.extend(slice.records.iter().filter_map(|r| r.triple.clone()));
            }
            results[v] = Some(slice);
        }
    }
    Ok(out)
}
