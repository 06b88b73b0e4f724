use std::collections::HashSet;

use super::BINDING_PREFIX;
use crate::flowline::{Flowline, TaskKind, TaskNode};

const INDENT: &str = "    ";

fn call_head(node: &TaskNode) -> String {
    let ns = if node.kind == TaskKind::Operator {
        "opt"
    } else {
        "model"
    };
    if node.id == node.function {
        format!("{ns}.{}", node.function)
    } else {
        format!("{ns}.{}[{}]", node.function, node.id)
    }
}

fn call_args(node: &TaskNode) -> Option<String> {
    if node.kind == TaskKind::Operator && node.function == "filter" {
        return node.config.get("predicate").cloned();
    }
    let args: Vec<String> = node
        .config
        .iter()
        .filter(|(k, _)| !k.starts_with(BINDING_PREFIX))
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    (!args.is_empty()).then(|| args.join(", "))
}

fn full_call(node: &TaskNode, outlet: bool) -> String {
    let mut s = call_head(node);
    if let Some(args) = call_args(node) {
        s.push('(');
        s.push_str(&args);
        s.push(')');
    }
    if !node.outputs.is_empty() {
        s.push_str(" -> ");
        s.push_str(&node.outputs.join(", "));
    }
    if outlet {
        s.push(':');
    }
    s
}

/// Canonical text: bindings first, then the pipeline with 4-space indents and
/// children ordered by vertex id. Each vertex is spelled out with its children
/// at its first occurrence; later occurrences are bare references.
pub fn format(flowline: &Flowline) -> String {
    let mut lines = Vec::new();
    let Some(entry) = flowline.vertex(&flowline.entry) else {
        return String::new();
    };
    let mut bindings: Vec<(&String, &String)> = entry
        .config
        .iter()
        .filter(|(k, _)| k.starts_with(BINDING_PREFIX))
        .collect();
    bindings.sort();
    for (k, v) in bindings {
        lines.push(format!("{} := {v}", &k[BINDING_PREFIX.len()..]));
    }

    let is_source = entry.is_controller() && entry.function == "start";
    if is_source {
        let mut root = format!(":{}", entry.id);
        if !entry.outputs.is_empty() {
            root.push_str(" -> ");
            root.push_str(&entry.outputs.join(", "));
        }
        lines.push(root);
    } else {
        let outlet = flowline.entry == flowline.exit && !flowline.edges.is_empty();
        lines.push(format!(":{}", full_call(entry, outlet)));
    }

    let mut expanded = HashSet::from([entry.id.as_str()]);
    walk(flowline, &entry.id, 1, &mut expanded, &mut lines);
    lines.join("\n")
}

fn walk<'a>(
    flowline: &'a Flowline,
    id: &str,
    depth: usize,
    expanded: &mut HashSet<&'a str>,
    lines: &mut Vec<String>,
) {
    let mut children: Vec<&TaskNode> = flowline
        .successors(id)
        .into_iter()
        .filter_map(|c| flowline.vertex(c))
        .collect();
    children.sort_by(|a, b| a.id.cmp(&b.id));
    children.dedup_by(|a, b| a.id == b.id);
    for child in children {
        let indent = INDENT.repeat(depth);
        if expanded.insert(child.id.as_str()) {
            let outlet = child.id == flowline.exit;
            lines.push(format!("{indent}| {}", full_call(child, outlet)));
            walk(flowline, &child.id, depth + 1, expanded, lines);
        } else {
            lines.push(format!("{indent}| {}", call_head(child)));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::LISTING1;
    use crate::gfl::parse;

    #[test]
    fn trivial_flowline() {
        let f = parse(":data\n    | opt.triple:").unwrap();
        assert_eq!(format(&f), ":data\n    | opt.triple:");
    }

    #[test]
    fn listing_one_is_idempotent() {
        let once = format(&parse(LISTING1).unwrap());
        let twice = format(&parse(&once).unwrap());
        assert_eq!(once, twice);
        assert!(once.starts_with("filtered_ent := []\n:data\n"));
    }

    #[test]
    fn call_root() {
        let f = parse(":model.BertNER\n    | opt.chunk_ensemble:").unwrap();
        let text = format(&f);
        assert_eq!(text, ":model.BertNER\n    | opt.chunk_ensemble:");
        let single = parse(":model.BertNER").unwrap();
        assert_eq!(format(&single), ":model.BertNER");
    }
}
