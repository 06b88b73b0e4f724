//! Built-in operators and ensemble rules.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use thiserror::Error;

use kgflow_core::expr::{Expr, Literal};
use kgflow_core::flowline::{TaskKind, TaskNode};
use kgflow_core::registry;

use crate::ontology::Ontology;
use crate::record::{Chunk, DataSlice, EntityPair, Record, Triple, NO_RELATION};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OperatorError {
    #[error("`{task}` is not a built-in operator")]
    NotAnOperator { task: String },
    #[error("bad config for `{task}`: {message}")]
    Config { task: String, message: String },
    #[error("misaligned ensemble inputs at `{task}`: {message}")]
    Misaligned { task: String, message: String },
    #[error("label `{label}` at `{task}` is outside the ontology")]
    UnknownLabel { task: String, label: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error("no classifiers")]
    Empty,
    #[error("classifier {index} has {got} rows, expected {expected}")]
    Misaligned { index: usize, got: usize, expected: usize },
    #[error("{0}")]
    Weights(String),
    #[error("label `{0}` is outside the ontology")]
    UnknownLabel(String),
}

/// A row dropped by an operator, kept for the run report.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RowIssue {
    pub task: String,
    pub row_id: String,
    pub message: String,
}

/// What operators may consult besides their input rows.
#[derive(Debug, Clone, Copy)]
pub struct OperatorContext<'a> {
    /// `name := literal` bindings of the flowline.
    pub bindings: &'a BTreeMap<String, Literal>,
    pub ontology: &'a Ontology,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorOutput {
    pub slice: DataSlice,
    pub dropped: Vec<RowIssue>,
}

/// Modal label per row. Ties go to the tied label voted by the lowest
/// classifier index.
pub fn ensemble_vote(labels: &[Vec<String>]) -> Result<Vec<String>, EnsembleError> {
    let first = labels.first().ok_or(EnsembleError::Empty)?;
    for (j, l) in labels.iter().enumerate() {
        if l.len() != first.len() {
            return Err(EnsembleError::Misaligned {
                index: j,
                got: l.len(),
                expected: first.len(),
            });
        }
    }
    Ok((0..first.len())
        .map(|i| {
            let mut counts: HashMap<&str, usize> = HashMap::new();
            for l in labels {
                *counts.entry(l[i].as_str()).or_default() += 1;
            }
            let top = counts.values().copied().max().unwrap_or(0);
            labels
                .iter()
                .map(|l| l[i].as_str())
                .find(|l| counts[l] == top)
                .expect("at least one classifier")
                .to_string()
        })
        .collect())
}

/// Outcome of the score ensemble for one row.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreDecision {
    Accept { label: String, score: f64 },
    Reject { label: String, score: f64 },
}

impl ScoreDecision {
    /// The label written to the row; rejected rows carry [`NO_RELATION`].
    pub fn label(&self) -> &str {
        match self {
            ScoreDecision::Accept { label, .. } => label,
            ScoreDecision::Reject { .. } => NO_RELATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRule {
    /// Per classifier; `None` weighs every classifier `1/m`.
    pub weights: Option<Vec<f64>>,
    pub threshold: f64,
    /// Accept only when every classifier scores the winner above the
    /// threshold, instead of at least one.
    pub strict: bool,
}

impl Default for ScoreRule {
    fn default() -> Self {
        ScoreRule {
            weights: None,
            threshold: 0.5,
            strict: false,
        }
    }
}

/// Weighted score sum per label across classifiers. The winner is the label
/// with the largest sum (ties to the smallest label); it is accepted when
/// some classifier scores it above the threshold (every classifier under
/// `strict`).
pub fn ensemble_score(
    scores: &[Vec<BTreeMap<String, f64>>],
    rule: &ScoreRule,
    allowed: Option<&BTreeSet<String>>,
) -> Result<Vec<ScoreDecision>, EnsembleError> {
    let m = scores.len();
    let first = scores.first().ok_or(EnsembleError::Empty)?;
    for (j, s) in scores.iter().enumerate() {
        if s.len() != first.len() {
            return Err(EnsembleError::Misaligned {
                index: j,
                got: s.len(),
                expected: first.len(),
            });
        }
    }
    let weights = match &rule.weights {
        Some(w) if w.len() != m => return Err(EnsembleError::Weights(format!("{} weights for {m} classifiers", w.len()))),
        Some(w) if w.iter().any(|x| *x < 0.0) => return Err(EnsembleError::Weights("negative weight".into())),
        Some(w) if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 => {
            return Err(EnsembleError::Weights("weights must sum to 1".into()))
        }
        Some(w) => w.clone(),
        None => vec![1.0 / m as f64; m],
    };
    if !(0.0..=1.0).contains(&rule.threshold) {
        return Err(EnsembleError::Weights(format!("threshold {} outside [0, 1]", rule.threshold)));
    }
    (0..first.len())
        .map(|i| {
            let mut total: BTreeMap<&str, f64> = BTreeMap::new();
            for (j, s) in scores.iter().enumerate() {
                for (label, p) in &s[i] {
                    if let Some(allowed) = allowed {
                        if !allowed.contains(label) {
                            return Err(EnsembleError::UnknownLabel(label.clone()));
                        }
                    }
                    *total.entry(label).or_default() += weights[j] * p;
                }
            }
            let Some((label, score)) = total
                .iter()
                .fold(None::<(&str, f64)>, |best, (l, s)| match best {
                    Some((_, b)) if b >= *s => best,
                    _ => Some((l, *s)),
                })
            else {
                return Ok(ScoreDecision::Reject {
                    label: NO_RELATION.into(),
                    score: 0.0,
                });
            };
            let p = |s: &BTreeMap<String, f64>| s.get(label).copied().unwrap_or(0.0);
            let accept = if rule.strict {
                scores.iter().all(|s| p(&s[i]) > rule.threshold)
            } else {
                scores.iter().any(|s| p(&s[i]) > rule.threshold)
            };
            let label = label.to_string();
            Ok(if accept {
                ScoreDecision::Accept { label, score }
            } else {
                ScoreDecision::Reject { label, score }
            })
        })
        .collect()
}

/// Union of chunk sets without exact duplicates, in first-seen order.
pub fn chunk_ensemble(sets: &[Vec<Chunk>]) -> Vec<Chunk> {
    let mut seen = HashSet::new();
    sets.iter()
        .flatten()
        .filter(|c| seen.insert((*c).clone()))
        .cloned()
        .collect()
}

fn config_err(node: &TaskNode, message: impl Into<String>) -> OperatorError {
    OperatorError::Config {
        task: node.id.clone(),
        message: message.into(),
    }
}

/// Parsed config value; a bare identifier names a flowline binding.
fn arg(node: &TaskNode, key: &str, ctx: &OperatorContext) -> Result<Option<Literal>, OperatorError> {
    let Some(text) = node.config.get(key) else {
        return Ok(None);
    };
    match Expr::parse(text) {
        Ok(Expr::Lit(l)) => Ok(Some(l)),
        Ok(Expr::Ident(name)) => ctx
            .bindings
            .get(&name)
            .cloned()
            .map(Some)
            .ok_or_else(|| config_err(node, format!("`{key}` names unknown binding `{name}`"))),
        _ => Err(config_err(node, format!("`{key}` must be a literal"))),
    }
}

fn string_list(node: &TaskNode, key: &str, ctx: &OperatorContext) -> Result<Vec<String>, OperatorError> {
    match arg(node, key, ctx)? {
        None => Err(config_err(node, format!("missing `{key}`"))),
        Some(Literal::Str(s)) => Ok(vec![s]),
        Some(Literal::List(items)) => items
            .iter()
            .map(|i| {
                i.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| config_err(node, format!("`{key}` must list strings")))
            })
            .collect(),
        Some(_) => Err(config_err(node, format!("`{key}` must list strings"))),
    }
}

fn number(node: &TaskNode, key: &str, default: f64, ctx: &OperatorContext) -> Result<f64, OperatorError> {
    match arg(node, key, ctx)? {
        None => Ok(default),
        Some(Literal::Num(n)) => Ok(n),
        Some(_) => Err(config_err(node, format!("`{key}` must be a number"))),
    }
}

fn flag(node: &TaskNode, key: &str, ctx: &OperatorContext) -> Result<bool, OperatorError> {
    match arg(node, key, ctx)? {
        None => Ok(false),
        Some(Literal::Bool(b)) => Ok(b),
        Some(_) => Err(config_err(node, format!("`{key}` must be true or false"))),
    }
}

/// `table=["from=to", ...]` plus an optional `default`.
fn mapping(node: &TaskNode, ctx: &OperatorContext) -> Result<(HashMap<String, String>, Option<String>), OperatorError> {
    let mut table = HashMap::new();
    for entry in string_list(node, "table", ctx)? {
        let (from, to) = entry
            .split_once('=')
            .ok_or_else(|| config_err(node, format!("table entry `{entry}` is not `from=to`")))?;
        table.insert(from.trim().to_string(), to.trim().to_string());
    }
    let default = match arg(node, "default", ctx)? {
        None => None,
        Some(Literal::Str(s)) => Some(s),
        Some(_) => return Err(config_err(node, "`default` must be a string")),
    };
    Ok((table, default))
}

/// Value of a column or binding as seen by filter predicates.
fn lookup(row: &Record, name: &str, ctx: &OperatorContext) -> Option<Literal> {
    let Some(column) = registry::resolve_column(name) else {
        return ctx.bindings.get(name).cloned();
    };
    let s = |v: &str| Literal::Str(v.to_string());
    match column {
        registry::SAMPLE => row.sample.as_deref().map(s),
        registry::ENTITY => row.entity.as_ref().map(|c| s(&c.surface)),
        registry::ENTITY_TYPE => row.entity.as_ref().map(|c| s(&c.kind)),
        registry::ENTITY_PAIR => row
            .entity_pair
            .as_ref()
            .map(|p| Literal::List(vec![s(&p.subject.surface), s(&p.object.surface)])),
        registry::RELATION_CATEGORY => row.relation_category.as_deref().map(s),
        registry::ATTRIBUTE => row.attribute.as_deref().map(s),
        registry::ATTRIBUTE_VALUE => row.attribute_value.as_deref().map(s),
        registry::TRIPLE => row
            .triple
            .as_ref()
            .map(|t| Literal::List(vec![s(&t.subject), s(&t.predicate), s(&t.object)])),
        registry::META_SCORE => row.score.map(Literal::Num),
        _ => None,
    }
}

fn concat(inputs: &[DataSlice]) -> Vec<Record> {
    inputs.iter().flat_map(|s| s.records.iter().cloned()).collect()
}

/// Rows kept by `keep`; a predicate failure drops the row with an issue.
fn filter_rows(
    node: &TaskNode,
    rows: Vec<Record>,
    dropped: &mut Vec<RowIssue>,
    keep: impl Fn(&Record) -> Result<bool, String>,
) -> Vec<Record> {
    rows.into_iter()
        .filter(|r| match keep(r) {
            Ok(k) => k,
            Err(message) => {
                dropped.push(RowIssue {
                    task: node.id.clone(),
                    row_id: r.row_id.clone(),
                    message,
                });
                false
            }
        })
        .collect()
}

/// Key aligning classifier rows across ensemble inputs.
fn pair_key(r: &Record) -> (String, Option<EntityPair>) {
    (r.sample_id.clone(), r.entity_pair.clone())
}

/// Rows of every input reordered to match the first input.
fn aligned<'s>(node: &TaskNode, inputs: &'s [DataSlice]) -> Result<Vec<Vec<&'s Record>>, OperatorError> {
    let misaligned = |message: String| OperatorError::Misaligned {
        task: node.id.clone(),
        message,
    };
    let Some(first) = inputs.first() else {
        return Ok(Vec::new());
    };
    let order: Vec<_> = first.records.iter().map(pair_key).collect();
    let mut out = Vec::with_capacity(inputs.len());
    for (j, input) in inputs.iter().enumerate() {
        if input.len() != first.len() {
            return Err(misaligned(format!("input {j} has {} rows, expected {}", input.len(), first.len())));
        }
        let mut by_key: HashMap<_, &Record> = HashMap::new();
        for r in &input.records {
            if by_key.insert(pair_key(r), r).is_some() {
                return Err(misaligned(format!("input {j} repeats row `{}`", r.row_id)));
            }
        }
        let rows = order
            .iter()
            .map(|k| {
                by_key
                    .get(k)
                    .copied()
                    .ok_or_else(|| misaligned(format!("input {j} lacks a row for sample `{}`", k.0)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(rows);
    }
    Ok(out)
}

/// Apply a built-in operator to the slices arriving on its input pipes, in
/// pipe order. Integrators combine the inputs; every other operator sees
/// their concatenation.
pub fn apply_operator(node: &TaskNode, inputs: &[DataSlice], ctx: &OperatorContext) -> Result<OperatorOutput, OperatorError> {
    if node.kind != TaskKind::Operator || registry::lookup(&node.function).is_none() {
        return Err(OperatorError::NotAnOperator { task: node.id.clone() });
    }
    let index = inputs.first().map_or(0, |s| s.slice_index);
    let mut dropped = Vec::new();
    let rows: Vec<Record> = match node.function.as_str() {
        "filter" => {
            let text = node
                .config
                .get("predicate")
                .ok_or_else(|| config_err(node, "missing predicate"))?;
            let expr = Expr::parse(text).map_err(|e| config_err(node, e.to_string()))?;
            filter_rows(node, concat(inputs), &mut dropped, |r| {
                expr.eval_bool(&|name: &str| lookup(r, name, ctx))
                    .map_err(|e| e.message)
            })
        }
        "entity_type_filter" => {
            let types = string_list(node, "types", ctx)?;
            filter_rows(node, concat(inputs), &mut dropped, |r| {
                Ok(r.entity.as_ref().is_some_and(|c| types.contains(&c.kind)))
            })
        }
        "relation_filter" => {
            let keep = string_list(node, "relations", ctx)?;
            filter_rows(node, concat(inputs), &mut dropped, |r| {
                Ok(r.relation_category.as_ref().is_some_and(|l| keep.contains(l)))
            })
        }
        "score_filter" => {
            let threshold = number(node, "threshold", 0.5, ctx)?;
            filter_rows(node, concat(inputs), &mut dropped, |r| Ok(r.score.is_some_and(|s| s > threshold)))
        }
        "schema_filter" => {
            let onto = ctx.ontology;
            filter_rows(node, concat(inputs), &mut dropped, |r| {
                if let (Some(pair), Some(label)) = (&r.entity_pair, &r.relation_category) {
                    if label == NO_RELATION {
                        return Ok(true);
                    }
                    if let Some(rel) = onto.relation(label) {
                        return Ok(rel.domain == pair.subject.kind && rel.range == pair.object.kind);
                    }
                    return Ok(onto.attribute(label).is_some_and(|a| a.domain == pair.subject.kind));
                }
                Ok(r.entity.as_ref().is_none_or(|c| onto.classes.contains(&c.kind)))
            })
        }
        "entity_type_mapper" | "relation_mapper" => {
            let (table, default) = mapping(node, ctx)?;
            let entity = node.function == "entity_type_mapper";
            let mut out = Vec::new();
            for mut r in concat(inputs) {
                let slot = if entity {
                    r.entity.as_mut().map(|c| &mut c.kind)
                } else {
                    r.relation_category.as_mut()
                };
                let Some(slot) = slot else {
                    out.push(r);
                    continue;
                };
                match table.get(slot.as_str()).or(default.as_ref()) {
                    Some(to) => {
                        *slot = to.clone();
                        out.push(r);
                    }
                    None => dropped.push(RowIssue {
                        task: node.id.clone(),
                        row_id: r.row_id.clone(),
                        message: format!("no mapping for `{slot}`"),
                    }),
                }
            }
            out
        }
        "vote" => {
            let rows = aligned(node, inputs)?;
            let labels: Vec<Vec<String>> = rows
                .iter()
                .map(|rs| {
                    rs.iter()
                        .map(|r| r.relation_category.clone().unwrap_or_else(|| NO_RELATION.into()))
                        .collect()
                })
                .collect();
            let m = labels.len() as f64;
            let winners = ensemble_vote(&labels).unwrap_or_default();
            winners
                .into_iter()
                .enumerate()
                .map(|(i, label)| {
                    let votes = labels.iter().filter(|l| l[i] == label).count() as f64;
                    let mut r = rows[0][i].clone();
                    r.relation_category = Some(label);
                    r.score = Some(votes / m);
                    r.scores = None;
                    r
                })
                .collect()
        }
        "score_ensemble" => {
            let rows = aligned(node, inputs)?;
            let weights = match arg(node, "weights", ctx)? {
                None => None,
                Some(Literal::List(items)) => Some(
                    items
                        .iter()
                        .map(|i| i.as_num().ok_or_else(|| config_err(node, "`weights` must list numbers")))
                        .collect::<Result<Vec<f64>, _>>()?,
                ),
                Some(_) => return Err(config_err(node, "`weights` must list numbers")),
            };
            let rule = ScoreRule {
                weights,
                threshold: number(node, "threshold", 0.5, ctx)?,
                strict: flag(node, "strict", ctx)?,
            };
            let allowed: Option<BTreeSet<String>> = (!ctx.ontology.predicates().is_empty()).then(|| {
                ctx.ontology
                    .predicates()
                    .into_iter()
                    .map(str::to_string)
                    .chain([NO_RELATION.to_string()])
                    .collect()
            });
            let scores: Vec<Vec<BTreeMap<String, f64>>> =
                rows.iter().map(|rs| rs.iter().map(|r| r.label_scores()).collect()).collect();
            let decisions = ensemble_score(&scores, &rule, allowed.as_ref()).map_err(|e| match e {
                EnsembleError::UnknownLabel(label) => OperatorError::UnknownLabel {
                    task: node.id.clone(),
                    label,
                },
                other => config_err(node, other.to_string()),
            })?;
            decisions
                .into_iter()
                .enumerate()
                .map(|(i, d)| {
                    let mut r = rows[0][i].clone();
                    r.relation_category = Some(d.label().to_string());
                    r.score = Some(match d {
                        ScoreDecision::Accept { score, .. } | ScoreDecision::Reject { score, .. } => score.clamp(0.0, 1.0),
                    });
                    r.scores = None;
                    r
                })
                .collect()
        }
        "chunk_ensemble" => {
            let mut seen = HashSet::new();
            concat(inputs)
                .into_iter()
                .filter(|r| seen.insert((r.sample_id.clone(), r.entity.clone())))
                .collect()
        }
        "merge" | "start" | "end" => concat(inputs),
        "permutate" => {
            let mut groups: Vec<(String, Vec<Record>)> = Vec::new();
            for r in concat(inputs) {
                match groups.iter_mut().find(|(id, _)| *id == r.sample_id) {
                    Some((_, g)) => g.push(r),
                    None => groups.push((r.sample_id.clone(), vec![r])),
                }
            }
            let mut out = Vec::new();
            for (_, group) in groups {
                for (i, a) in group.iter().enumerate() {
                    for (j, b) in group.iter().enumerate() {
                        if i == j {
                            continue;
                        }
                        let (Some(s), Some(o)) = (&a.entity, &b.entity) else { continue };
                        out.push(Record {
                            row_id: format!("{}|{}", a.row_id, b.row_id),
                            sample_id: a.sample_id.clone(),
                            sample: a.sample.clone(),
                            entity_pair: Some(EntityPair {
                                subject: s.clone(),
                                object: o.clone(),
                            }),
                            ..Record::default()
                        });
                    }
                }
            }
            out
        }
        "triple" => concat(inputs)
            .into_iter()
            .filter_map(|mut r| {
                let pair = r.entity_pair.as_ref()?;
                let label = r.relation_category.as_ref().filter(|l| *l != NO_RELATION)?;
                r.triple = Some(Triple::new(&pair.subject.surface, label, &pair.object.surface));
                Some(r)
            })
            .collect(),
        _ => return Err(OperatorError::NotAnOperator { task: node.id.clone() }),
    };
    for issue in &dropped {
        log::warn!("dropped row `{}` at `{}`: {}", issue.row_id, issue.task, issue.message);
    }
    Ok(OperatorOutput {
        slice: DataSlice::new(index, rows),
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx_parts() -> (BTreeMap<String, Literal>, Ontology) {
        (BTreeMap::new(), Ontology::default())
    }

    fn entity_rows(items: &[(&str, &str)]) -> DataSlice {
        let text = items.iter().map(|(s, _)| *s).collect::<Vec<_>>().join(" ");
        let records = items
            .iter()
            .map(|(s, t)| Record {
                row_id: format!("d:{s}"),
                sample_id: "d".into(),
                sample: Some(text.clone()),
                entity: Chunk::find(&text, s, t),
                ..Record::default()
            })
            .collect();
        DataSlice::new(0, records)
    }

    fn op(function: &str, config: &[(&str, &str)]) -> TaskNode {
        let mut n = TaskNode::operator("t", function);
        for (k, v) in config {
            n.config.insert(k.to_string(), v.to_string());
        }
        n
    }

    #[test]
    fn entity_type_filter_keeps_configured_types() {
        let (b, o) = ctx_parts();
        let ctx = OperatorContext { bindings: &b, ontology: &o };
        let out = apply_operator(
            &op("entity_type_filter", &[("types", "[\"PER\"]")]),
            &[entity_rows(&[("Ann", "PER"), ("Oslo", "LOC")])],
            &ctx,
        )
        .unwrap();
        assert_eq!(out.slice.len(), 1);
    }

    #[test]
    fn predicate_filter_uses_bindings() {
        let b = BTreeMap::from([(
            "keep".to_string(),
            Literal::List(vec![Literal::Str("LOC".into())]),
        )]);
        let o = Ontology::default();
        let ctx = OperatorContext { bindings: &b, ontology: &o };
        let input = [entity_rows(&[("Ann", "PER"), ("Oslo", "LOC")])];
        let out = apply_operator(&op("filter", &[("predicate", "ent_t not in keep")]), &input, &ctx).unwrap();
        assert_eq!(out.slice.records[0].entity.as_ref().unwrap().surface, "Ann");
        // An unbound name drops rows instead of failing the slice.
        let out = apply_operator(&op("filter", &[("predicate", "rel == \"x\"")]), &input, &ctx).unwrap();
        assert!(out.slice.is_empty());
        assert_eq!(out.dropped.len(), 2);
    }

    #[test]
    fn permutate_builds_ordered_pairs() {
        let (b, o) = ctx_parts();
        let ctx = OperatorContext { bindings: &b, ontology: &o };
        let out = apply_operator(&op("permutate", &[]), &[entity_rows(&[("A", "PER"), ("B", "ORG")])], &ctx).unwrap();
        let pairs: Vec<(String, String)> = out
            .slice
            .records
            .iter()
            .map(|r| {
                let p = r.entity_pair.as_ref().unwrap();
                (p.subject.surface.clone(), p.object.surface.clone())
            })
            .collect();
        assert_eq!(pairs, [("A".into(), "B".into()), ("B".into(), "A".into())]);
        let three = apply_operator(&op("permutate", &[]), &[entity_rows(&[("A", "X"), ("B", "X"), ("C", "X")])], &ctx).unwrap();
        assert_eq!(three.slice.len(), 6);
    }

    #[test]
    fn triple_joins_pair_and_relation() {
        let (b, o) = ctx_parts();
        let ctx = OperatorContext { bindings: &b, ontology: &o };
        let pair = EntityPair {
            subject: Chunk::new("Steve Jobs", "PER", 0, 10),
            object: Chunk::new("Apple", "ORG", 19, 24),
        };
        let rows = vec![
            Record {
                row_id: "r1".into(),
                entity_pair: Some(pair.clone()),
                relation_category: Some("Found".into()),
                ..Record::default()
            },
            Record {
                row_id: "r2".into(),
                entity_pair: Some(pair),
                relation_category: Some(NO_RELATION.into()),
                ..Record::default()
            },
        ];
        let out = apply_operator(&op("triple", &[]), &[DataSlice::new(0, rows)], &ctx).unwrap();
        assert_eq!(out.slice.len(), 1);
        assert_eq!(
            out.slice.records[0].triple,
            Some(Triple::new("Steve Jobs", "Found", "Apple"))
        );
    }

    #[test]
    fn mapper_drops_unmapped_rows() {
        let (b, o) = ctx_parts();
        let ctx = OperatorContext { bindings: &b, ontology: &o };
        let input = [entity_rows(&[("Ann", "PER"), ("Oslo", "LOC")])];
        let out = apply_operator(&op("entity_type_mapper", &[("table", "[\"PER=Person\"]")]), &input, &ctx).unwrap();
        assert_eq!(out.slice.len(), 1);
        assert_eq!(out.slice.records[0].entity.as_ref().unwrap().kind, "Person");
        assert_eq!(out.dropped[0].message, "no mapping for `LOC`");
        let out = apply_operator(
            &op("entity_type_mapper", &[("table", "[\"PER=Person\"]"), ("default", "\"Thing\"")]),
            &input,
            &ctx,
        )
        .unwrap();
        assert_eq!(out.slice.len(), 2);
    }

    #[test]
    fn vote_examples() {
        let l = |v: &[&str]| v.iter().map(|s| vec![s.to_string()]).collect::<Vec<_>>();
        assert_eq!(ensemble_vote(&l(&["A", "A", "B"])).unwrap(), ["A"]);
        assert_eq!(ensemble_vote(&l(&["A"])).unwrap(), ["A"]);
        assert_eq!(ensemble_vote(&l(&["A", "B"])).unwrap(), ["A"]);
        assert_eq!(ensemble_vote(&l(&["B", "A"])).unwrap(), ["B"]);
        assert!(ensemble_vote(&[vec!["A".into()], vec![]]).is_err());
        assert!(ensemble_vote(&[]).is_err());
    }

    #[test]
    fn vote_ties_go_to_the_lowest_index() {
        // Every assignment of two labels to up to four classifiers.
        for m in 1..=4usize {
            for mask in 0..(1u32 << m) {
                let labels: Vec<Vec<String>> = (0..m)
                    .map(|j| vec![if mask >> j & 1 == 1 { "B" } else { "A" }.to_string()])
                    .collect();
                let b = mask.count_ones() as usize;
                let a = m - b;
                let expected = if a > b {
                    "A"
                } else if b > a {
                    "B"
                } else {
                    labels[0][0].as_str()
                };
                assert_eq!(ensemble_vote(&labels).unwrap()[0], expected, "{labels:?}");
            }
        }
    }

    fn s(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(l, p)| (l.to_string(), *p)).collect()
    }

    #[test]
    fn score_examples() {
        let scores = vec![
            vec![s(&[("rel_a", 0.9), ("rel_b", 0.1)])],
            vec![s(&[("rel_a", 0.7), ("rel_b", 0.3)])],
        ];
        let d = ensemble_score(&scores, &ScoreRule::default(), None).unwrap();
        match &d[0] {
            ScoreDecision::Accept { label, score } => {
                assert_eq!(label, "rel_a");
                assert!((score - 0.8).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        let low = vec![vec![s(&[("rel_a", 0.5)])], vec![s(&[("rel_a", 0.3)])]];
        let d = ensemble_score(&low, &ScoreRule::default(), None).unwrap();
        assert_eq!(d[0].label(), NO_RELATION);
        let single = vec![vec![s(&[("x", 0.6), ("y", 0.4)])]];
        let rule = ScoreRule {
            weights: Some(vec![1.0]),
            ..ScoreRule::default()
        };
        assert_eq!(ensemble_score(&single, &rule, None).unwrap()[0].label(), "x");
    }

    #[test]
    fn strict_rule_needs_every_classifier() {
        let scores = vec![vec![s(&[("a", 0.9)])], vec![s(&[("a", 0.4)])]];
        assert_eq!(ensemble_score(&scores, &ScoreRule::default(), None).unwrap()[0].label(), "a");
        let strict = ScoreRule {
            strict: true,
            ..ScoreRule::default()
        };
        assert_eq!(ensemble_score(&scores, &strict, None).unwrap()[0].label(), NO_RELATION);
    }

    #[test]
    fn score_errors() {
        let scores = vec![vec![s(&[("a", 0.9)])]];
        let allowed = BTreeSet::from(["b".to_string()]);
        assert_eq!(
            ensemble_score(&scores, &ScoreRule::default(), Some(&allowed)),
            Err(EnsembleError::UnknownLabel("a".into()))
        );
        let bad = ScoreRule {
            weights: Some(vec![0.3]),
            ..ScoreRule::default()
        };
        assert!(ensemble_score(&scores, &bad, None).is_err());
    }

    #[test]
    fn chunk_union_dedups_and_keeps_nested() {
        let a = vec![Chunk::new("Steve Jobs", "PER", 0, 10)];
        let b = vec![Chunk::new("Steve Jobs", "PER", 0, 10), Chunk::new("Apple", "ORG", 19, 24)];
        assert_eq!(chunk_ensemble(&[a, b]).len(), 2);
        let nested = vec![Chunk::new("New York", "LOC", 0, 8), Chunk::new("New York City", "LOC", 0, 13)];
        assert_eq!(chunk_ensemble(&[nested]).len(), 2);
    }
}
