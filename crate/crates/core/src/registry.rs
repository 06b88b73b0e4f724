//! Built-in operator table and column vocabulary.
//!
//! The registry is the single source of truth for which functions exist in the
//! `opt` namespace, which family they belong to and which task columns they
//! read and write. Validation uses it to check pipes; the runtime uses the
//! same entries to project slices.

use crate::expr::Expr;
use crate::flowline::{ModelTask, OperatorFamily, TaskKind, TaskNode};

pub const SAMPLE: &str = "sample";
pub const ENTITY: &str = "entity";
pub const ENTITY_TYPE: &str = "entity_type";
pub const ENTITY_PAIR: &str = "entity_pair";
pub const RELATION_CATEGORY: &str = "relation_category";
pub const ATTRIBUTE: &str = "attribute";
pub const ATTRIBUTE_VALUE: &str = "attribute_value";
pub const TRIPLE: &str = "triple";
pub const META_SCORE: &str = "meta.score";
pub const META_SCORES: &str = "meta.scores";

/// Every canonical column name.
pub const COLUMNS: &[&str] = &[
    SAMPLE,
    ENTITY,
    ENTITY_TYPE,
    ENTITY_PAIR,
    RELATION_CATEGORY,
    ATTRIBUTE,
    ATTRIBUTE_VALUE,
    TRIPLE,
    META_SCORE,
    META_SCORES,
];

/// Short binding names accepted in `-> a, b` lists and predicates.
const ALIASES: &[(&str, &str)] = &[
    ("text", SAMPLE),
    ("ent", ENTITY),
    ("ent_t", ENTITY_TYPE),
    ("ent_p", ENTITY_PAIR),
    ("ent_t_p", ENTITY_PAIR),
    ("pair", ENTITY_PAIR),
    ("rel", RELATION_CATEGORY),
    ("relation", RELATION_CATEGORY),
    ("attr", ATTRIBUTE),
    ("attr_v", ATTRIBUTE_VALUE),
    ("score", META_SCORE),
    ("scores", META_SCORES),
];

/// Resolve a canonical column name or alias.
pub fn resolve_column(name: &str) -> Option<&'static str> {
    if let Some(c) = COLUMNS.iter().find(|c| **c == name) {
        return Some(c);
    }
    ALIASES.iter().find(|(a, _)| *a == name).map(|(_, c)| *c)
}

/// Columns an operator reads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Inputs {
    /// Accepts whatever arrives.
    Any,
    /// Derived from the columns referenced by the predicate.
    Predicate,
    Columns(&'static [&'static str]),
}

/// Registry entry for one built-in function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorSpec {
    pub function: &'static str,
    pub family: OperatorFamily,
    pub inputs: Inputs,
    /// Columns added to each row. Empty means rows pass through unchanged.
    pub outputs: &'static [&'static str],
    pub description: &'static str,
}

const OPERATORS: &[OperatorSpec] = &[
    OperatorSpec {
        function: "filter",
        family: OperatorFamily::Filter,
        inputs: Inputs::Predicate,
        outputs: &[],
        description: "keep rows for which the predicate holds",
    },
    OperatorSpec {
        function: "entity_type_filter",
        family: OperatorFamily::Filter,
        inputs: Inputs::Columns(&[ENTITY, ENTITY_TYPE]),
        outputs: &[],
        description: "keep entities whose type is in the configured set",
    },
    OperatorSpec {
        function: "relation_filter",
        family: OperatorFamily::Filter,
        inputs: Inputs::Columns(&[RELATION_CATEGORY]),
        outputs: &[],
        description: "keep rows whose relation is in the configured set",
    },
    OperatorSpec {
        function: "score_filter",
        family: OperatorFamily::Filter,
        inputs: Inputs::Columns(&[META_SCORE]),
        outputs: &[],
        description: "keep rows whose score exceeds the threshold",
    },
    OperatorSpec {
        function: "schema_filter",
        family: OperatorFamily::Filter,
        inputs: Inputs::Any,
        outputs: &[],
        description: "keep entities and relations declared by the ontology",
    },
    OperatorSpec {
        function: "entity_type_mapper",
        family: OperatorFamily::Mapper,
        inputs: Inputs::Columns(&[ENTITY, ENTITY_TYPE]),
        outputs: &[ENTITY, ENTITY_TYPE],
        description: "rename entity types through a table",
    },
    OperatorSpec {
        function: "relation_mapper",
        family: OperatorFamily::Mapper,
        inputs: Inputs::Columns(&[RELATION_CATEGORY]),
        outputs: &[RELATION_CATEGORY],
        description: "rename relations through a table",
    },
    OperatorSpec {
        function: "vote",
        family: OperatorFamily::Integrator,
        inputs: Inputs::Columns(&[RELATION_CATEGORY]),
        outputs: &[RELATION_CATEGORY],
        description: "majority vote over classifier labels",
    },
    OperatorSpec {
        function: "score_ensemble",
        family: OperatorFamily::Integrator,
        inputs: Inputs::Columns(&[RELATION_CATEGORY, META_SCORE]),
        outputs: &[RELATION_CATEGORY, META_SCORE],
        description: "weighted score sum over classifiers with an acceptance threshold",
    },
    OperatorSpec {
        function: "chunk_ensemble",
        family: OperatorFamily::Integrator,
        inputs: Inputs::Columns(&[ENTITY, ENTITY_TYPE]),
        outputs: &[],
        description: "union of extracted chunks with exact deduplication",
    },
    OperatorSpec {
        function: "merge",
        family: OperatorFamily::Integrator,
        inputs: Inputs::Any,
        outputs: &[],
        description: "concatenate inputs preserving order",
    },
    OperatorSpec {
        function: "permutate",
        family: OperatorFamily::Constructor,
        inputs: Inputs::Columns(&[ENTITY, ENTITY_TYPE]),
        outputs: &[ENTITY_PAIR],
        description: "ordered entity pairs without self pairs",
    },
    OperatorSpec {
        function: "triple",
        family: OperatorFamily::Constructor,
        inputs: Inputs::Columns(&[ENTITY_PAIR, RELATION_CATEGORY]),
        outputs: &[TRIPLE],
        description: "join entity pairs and accepted relations into triples",
    },
    OperatorSpec {
        function: "start",
        family: OperatorFamily::Controller,
        inputs: Inputs::Any,
        outputs: &[SAMPLE],
        description: "entrance of the flowline",
    },
    OperatorSpec {
        function: "end",
        family: OperatorFamily::Controller,
        inputs: Inputs::Any,
        outputs: &[],
        description: "outlet of the flowline",
    },
];

pub fn operators() -> &'static [OperatorSpec] {
    OPERATORS
}

pub fn lookup(function: &str) -> Option<&'static OperatorSpec> {
    OPERATORS.iter().find(|op| op.function == function)
}

/// Model task inferred from a model function name: `*RE` and `*CC` classify,
/// everything else extracts chunks.
pub fn model_task_for(function: &str) -> ModelTask {
    if function.ends_with("RE") || function.ends_with("CC") {
        ModelTask::Cc
    } else {
        ModelTask::Ce
    }
}

pub fn model_inputs(task: ModelTask) -> &'static [&'static str] {
    match task {
        ModelTask::Ce => &[SAMPLE],
        ModelTask::Cc => &[SAMPLE, ENTITY_PAIR],
    }
}

pub fn model_outputs(task: ModelTask) -> &'static [&'static str] {
    match task {
        ModelTask::Ce => &[ENTITY, ENTITY_TYPE],
        ModelTask::Cc => &[RELATION_CATEGORY, META_SCORE],
    }
}

/// Resolved column requirements of a task, or `None` when it accepts anything.
///
/// Fails when the task is an unknown operator or its predicate does not parse.
pub fn required_columns(node: &TaskNode) -> Result<Option<Vec<&'static str>>, String> {
    match node.kind {
        TaskKind::ModelCc => Ok(Some(model_inputs(ModelTask::Cc).to_vec())),
        TaskKind::ModelCe => Ok(Some(model_inputs(ModelTask::Ce).to_vec())),
        TaskKind::Operator => {
            let spec = lookup(&node.function)
                .ok_or_else(|| format!("unknown operator `{}`", node.function))?;
            match &spec.inputs {
                Inputs::Any => Ok(None),
                Inputs::Columns(cols) => Ok(Some(cols.to_vec())),
                Inputs::Predicate => {
                    let Some(text) = node.config.get("predicate") else {
                        return Ok(Some(Vec::new()));
                    };
                    let expr = Expr::parse(text).map_err(|e| format!("bad predicate: {e}"))?;
                    let mut cols: Vec<&'static str> = expr
                        .identifiers()
                        .into_iter()
                        .filter_map(|id| resolve_column(&id))
                        .collect();
                    cols.sort_unstable();
                    cols.dedup();
                    Ok(Some(cols))
                }
            }
        }
    }
}

/// Columns a task adds to the rows it emits.
pub fn produced_columns(node: &TaskNode) -> Vec<&'static str> {
    match node.kind {
        TaskKind::ModelCc => model_outputs(ModelTask::Cc).to_vec(),
        TaskKind::ModelCe => model_outputs(ModelTask::Ce).to_vec(),
        TaskKind::Operator => lookup(&node.function)
            .map(|s| s.outputs.to_vec())
            .unwrap_or_default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aliases_resolve() {
        assert_eq!(resolve_column("ent_t"), Some(ENTITY_TYPE));
        assert_eq!(resolve_column("meta.score"), Some(META_SCORE));
        assert_eq!(resolve_column("nope"), None);
    }

    #[test]
    fn model_naming_rule() {
        assert_eq!(model_task_for("BERTRE"), ModelTask::Cc);
        assert_eq!(model_task_for("LSTMRE"), ModelTask::Cc);
        assert_eq!(model_task_for("BertNER"), ModelTask::Ce);
        assert_eq!(model_task_for("OracleCC"), ModelTask::Cc);
    }

    #[test]
    fn predicate_inputs_come_from_identifiers() {
        let mut node = TaskNode::operator("f", "filter");
        node.config
            .insert("predicate".into(), "ent_t in allowed".into());
        assert_eq!(required_columns(&node).unwrap(), Some(vec![ENTITY_TYPE]));
    }
}
