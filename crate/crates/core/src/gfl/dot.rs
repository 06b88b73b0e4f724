use crate::flowline::{Flowline, TaskKind, TaskNode};

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn shape(node: &TaskNode) -> &'static str {
    match node.kind {
        TaskKind::ModelCe => "box",
        TaskKind::ModelCc => "box3d",
        TaskKind::Operator if node.is_controller() => "circle",
        TaskKind::Operator => "ellipse",
    }
}

/// Graphviz description: one node line per vertex, one edge line per pipe.
pub fn emit_dot(flowline: &Flowline) -> String {
    let mut out = String::from("digraph flowline {\n");
    for v in &flowline.vertices {
        let mut attrs = vec![format!("shape={}", shape(v))];
        if v.label != v.id {
            attrs.push(format!("label={}", quote(&v.label)));
        }
        if !v.config.is_empty() {
            let tip: Vec<String> = v.config.iter().map(|(k, v)| format!("{k}={v}")).collect();
            attrs.push(format!("tooltip={}", quote(&tip.join("; "))));
        }
        out.push_str(&format!("    {} [{}];\n", quote(&v.id), attrs.join(", ")));
    }
    for e in &flowline.edges {
        out.push_str(&format!("    {} -> {};\n", quote(&e.from), quote(&e.to)));
    }
    out.push_str("}\n");
    out
}
