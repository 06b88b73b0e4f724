use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Flowline, OperatorFamily, ResourceClass, TaskKind, TaskProfile};
use crate::registry;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    Empty,
    DuplicateId { id: String },
    DanglingEdge { from: String, to: String },
    Cycle { vertices: Vec<String> },
    NoEntry,
    NoExit,
    MultipleEntries { vertices: Vec<String> },
    MultipleExits { vertices: Vec<String> },
    EntryMismatch { declared: String, actual: String },
    ExitMismatch { declared: String, actual: String },
    Unreachable { id: String },
    DeadEnd { id: String },
    ResourceClass { id: String },
    UnknownOperator { id: String, function: String },
    BadPredicate { id: String, message: String },
    TypeIncompatiblePipe { to: String, from: Vec<String>, missing: Vec<String> },
    MissingWeight { id: String },
    NegativeWeight { id: String },
    UnknownProfileEdge { from: String, to: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "empty flowline"),
            Violation::DuplicateId { id } => write!(f, "duplicate vertex id `{id}`"),
            Violation::DanglingEdge { from, to } => {
                write!(f, "dangling edge `{from}` -> `{to}`")
            }
            Violation::Cycle { vertices } => write!(f, "cycle through {}", vertices.join(", ")),
            Violation::NoEntry => write!(f, "no entry vertex"),
            Violation::NoExit => write!(f, "no exit vertex"),
            Violation::MultipleEntries { vertices } => {
                write!(f, "multiple entries: {}", vertices.join(", "))
            }
            Violation::MultipleExits { vertices } => {
                write!(f, "multiple exits: {}", vertices.join(", "))
            }
            Violation::EntryMismatch { declared, actual } => {
                write!(f, "declared entry `{declared}` but `{actual}` has no inputs")
            }
            Violation::ExitMismatch { declared, actual } => {
                write!(f, "declared exit `{declared}` but `{actual}` has no outputs")
            }
            Violation::Unreachable { id } => write!(f, "unreachable vertex `{id}`"),
            Violation::DeadEnd { id } => write!(f, "vertex `{id}` does not reach the exit"),
            Violation::ResourceClass { id } => {
                write!(f, "resource class of `{id}` does not match its kind")
            }
            Violation::UnknownOperator { id, function } => {
                write!(f, "unknown operator `{function}` at `{id}`")
            }
            Violation::BadPredicate { id, message } => {
                write!(f, "bad predicate at `{id}`: {message}")
            }
            Violation::TypeIncompatiblePipe { to, from, missing } => write!(
                f,
                "type-incompatible pipe {} -> `{to}`: missing {}",
                from.join(", "),
                missing.join(", ")
            ),
            Violation::MissingWeight { id } => write!(f, "missing weight for `{id}`"),
            Violation::NegativeWeight { id } => write!(f, "negative weight for `{id}`"),
            Violation::UnknownProfileEdge { from, to } => {
                write!(f, "profile payload for unknown edge `{from}` -> `{to}`")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Warning {
    ZeroModelWeight { id: String },
    UnknownProfileVertex { id: String },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::ZeroModelWeight { id } => write!(f, "model `{id}` has zero weight"),
            Warning::UnknownProfileVertex { id } => {
                write!(f, "profile weight for unknown vertex `{id}`")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Warning>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, pred: impl Fn(&Violation) -> bool) -> bool {
        self.violations.iter().any(pred)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Structural and column checks. Problems are returned as data.
pub fn validate(flowline: &Flowline) -> ValidationReport {
    let mut report = ValidationReport::default();
    let vs = &flowline.vertices;
    if vs.is_empty() {
        report.violations.push(Violation::Empty);
        return report;
    }

    let mut seen = HashSet::new();
    for v in vs {
        if !seen.insert(v.id.as_str()) {
            report.violations.push(Violation::DuplicateId { id: v.id.clone() });
        }
        if v.resource_class != ResourceClass::for_kind(v.kind) {
            report
                .violations
                .push(Violation::ResourceClass { id: v.id.clone() });
        }
    }

    let idx = flowline.index_of();
    let n = vs.len();
    let mut succ = vec![Vec::new(); n];
    let mut pred = vec![Vec::new(); n];
    for e in &flowline.edges {
        match (idx.get(e.from.as_str()), idx.get(e.to.as_str())) {
            (Some(&a), Some(&b)) => {
                succ[a].push(b);
                pred[b].push(a);
            }
            _ => report.violations.push(Violation::DanglingEdge {
                from: e.from.clone(),
                to: e.to.clone(),
            }),
        }
    }

    let order = flowline.topo_order();
    if order.is_none() && !report.has(|v| matches!(v, Violation::DanglingEdge { .. })) {
        report.violations.push(Violation::Cycle {
            vertices: cycle_members(n, &succ)
                .into_iter()
                .map(|i| vs[i].id.clone())
                .collect(),
        });
    }

    let entries: Vec<usize> = (0..n).filter(|&i| pred[i].is_empty()).collect();
    let exits: Vec<usize> = (0..n).filter(|&i| succ[i].is_empty()).collect();
    let ids = |list: &[usize]| list.iter().map(|&i| vs[i].id.clone()).collect::<Vec<_>>();
    match entries.len() {
        0 => report.violations.push(Violation::NoEntry),
        1 => {
            if vs[entries[0]].id != flowline.entry {
                report.violations.push(Violation::EntryMismatch {
                    declared: flowline.entry.clone(),
                    actual: vs[entries[0]].id.clone(),
                });
            }
        }
        _ => report.violations.push(Violation::MultipleEntries {
            vertices: ids(&entries),
        }),
    }
    match exits.len() {
        0 => report.violations.push(Violation::NoExit),
        1 => {
            if vs[exits[0]].id != flowline.exit {
                report.violations.push(Violation::ExitMismatch {
                    declared: flowline.exit.clone(),
                    actual: vs[exits[0]].id.clone(),
                });
            }
        }
        _ => report.violations.push(Violation::MultipleExits {
            vertices: ids(&exits),
        }),
    }

    if let Some(&entry) = idx.get(flowline.entry.as_str()) {
        let fwd = reach(entry, &succ);
        for i in 0..n {
            if !fwd[i] {
                report.violations.push(Violation::Unreachable {
                    id: vs[i].id.clone(),
                });
            }
        }
    }
    if let Some(&exit) = idx.get(flowline.exit.as_str()) {
        let back = reach(exit, &pred);
        for i in 0..n {
            if !back[i] {
                report.violations.push(Violation::DeadEnd {
                    id: vs[i].id.clone(),
                });
            }
        }
    }

    check_columns(flowline, order.as_deref(), &pred, &mut report);
    report
}

/// Column availability along pipes. The start controller is an open source
/// unless it declares its columns with `->`.
fn check_columns(
    flowline: &Flowline,
    order: Option<&[usize]>,
    pred: &[Vec<usize>],
    report: &mut ValidationReport,
) {
    let vs = &flowline.vertices;
    let mut required = Vec::with_capacity(vs.len());
    let mut known = true;
    for v in vs {
        if v.kind == TaskKind::Operator && registry::lookup(&v.function).is_none() {
            report.violations.push(Violation::UnknownOperator {
                id: v.id.clone(),
                function: v.function.clone(),
            });
            known = false;
            required.push(None);
            continue;
        }
        match registry::required_columns(v) {
            Ok(r) => required.push(r),
            Err(message) => {
                report.violations.push(Violation::BadPredicate {
                    id: v.id.clone(),
                    message,
                });
                known = false;
                required.push(None);
            }
        }
    }
    let Some(order) = order else { return };
    if !known {
        return;
    }

    // None means "any column may be present".
    let mut avail: Vec<Option<BTreeSet<&'static str>>> = vec![Some(BTreeSet::new()); vs.len()];
    for &i in order {
        let v = &vs[i];
        // A vertex without inputs reads the corpus text directly.
        let mut input: Option<BTreeSet<&'static str>> = Some(if pred[i].is_empty() {
            BTreeSet::from([registry::SAMPLE])
        } else {
            BTreeSet::new()
        });
        for &p in &pred[i] {
            match (&mut input, &avail[p]) {
                (Some(acc), Some(cols)) => acc.extend(cols.iter().copied()),
                _ => input = None,
            }
        }
        if !pred[i].is_empty() {
            if let (Some(req), Some(have)) = (&required[i], &input) {
                let missing: Vec<String> = req
                    .iter()
                    .filter(|c| !have.contains(*c))
                    .map(|c| c.to_string())
                    .collect();
                if !missing.is_empty() {
                    report.violations.push(Violation::TypeIncompatiblePipe {
                        to: v.id.clone(),
                        from: pred[i].iter().map(|&p| vs[p].id.clone()).collect(),
                        missing,
                    });
                }
            }
        }
        let is_start = v.operator_family == Some(OperatorFamily::Controller) && v.function == "start";
        avail[i] = if is_start && v.outputs.is_empty() {
            None
        } else {
            input.map(|mut cols| {
                cols.extend(registry::produced_columns(v));
                cols.extend(v.outputs.iter().filter_map(|o| registry::resolve_column(o)));
                cols
            })
        };
    }
}

fn reach(start: usize, adj: &[Vec<usize>]) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen
}

/// Vertices left over after repeatedly peeling sources and sinks.
fn cycle_members(n: usize, succ: &[Vec<usize>]) -> Vec<usize> {
    let mut indeg = vec![0usize; n];
    let mut outdeg = vec![0usize; n];
    let mut pred = vec![Vec::new(); n];
    for (a, list) in succ.iter().enumerate() {
        for &b in list {
            indeg[b] += 1;
            outdeg[a] += 1;
            pred[b].push(a);
        }
    }
    let mut alive = vec![true; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0 || outdeg[i] == 0).collect();
    while let Some(v) = queue.pop_front() {
        if !alive[v] {
            continue;
        }
        alive[v] = false;
        for &w in &succ[v] {
            if alive[w] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    queue.push_back(w);
                }
            }
        }
        for &u in &pred[v] {
            if alive[u] {
                outdeg[u] -= 1;
                if outdeg[u] == 0 {
                    queue.push_back(u);
                }
            }
        }
    }
    (0..n).filter(|&i| alive[i]).collect()
}

/// Checks that a profile covers a flowline.
pub fn validate_profile(flowline: &Flowline, profile: &TaskProfile) -> ValidationReport {
    let mut report = ValidationReport::default();
    for v in &flowline.vertices {
        match profile.vertex_weights.get(&v.id) {
            None if !v.is_controller() => report
                .violations
                .push(Violation::MissingWeight { id: v.id.clone() }),
            Some(w) if *w < 0.0 || !w.is_finite() => report
                .violations
                .push(Violation::NegativeWeight { id: v.id.clone() }),
            Some(w) if *w == 0.0 && v.kind.is_model() => report
                .warnings
                .push(Warning::ZeroModelWeight { id: v.id.clone() }),
            _ => {}
        }
    }
    let ids: HashMap<&str, ()> = flowline.vertices.iter().map(|v| (v.id.as_str(), ())).collect();
    for id in profile.vertex_weights.keys() {
        if !ids.contains_key(id.as_str()) {
            report
                .warnings
                .push(Warning::UnknownProfileVertex { id: id.clone() });
        }
    }
    for p in &profile.edge_payloads {
        if !flowline
            .edges
            .iter()
            .any(|e| e.from == p.from && e.to == p.to)
        {
            report.violations.push(Violation::UnknownProfileEdge {
                from: p.from.clone(),
                to: p.to.clone(),
            });
        }
        if p.bytes < 0.0 || !p.bytes.is_finite() {
            report.violations.push(Violation::NegativeWeight {
                id: format!("{}->{}", p.from, p.to),
            });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowline::{Edge, TaskNode};

    fn ops(ids: &[&str]) -> Vec<TaskNode> {
        ids.iter().map(|id| TaskNode::operator(*id, "merge")).collect()
    }

    #[test]
    fn single_vertex_is_ok() {
        let f = Flowline::assemble(ops(&["a"]), vec![]);
        assert!(validate(&f).is_ok());
    }

    #[test]
    fn two_cycle_is_reported() {
        let f = Flowline {
            vertices: ops(&["a", "b"]),
            edges: vec![Edge::new("a", "b"), Edge::new("b", "a")],
            entry: "a".into(),
            exit: "b".into(),
        };
        let report = validate(&f);
        assert!(report.has(|v| matches!(v, Violation::Cycle { .. })));
        assert!(report.to_string().contains("cycle"));
    }

    #[test]
    fn multiple_entries_and_dangling_edges() {
        let f = Flowline::assemble(ops(&["a", "b", "c"]), vec![Edge::new("a", "c"), Edge::new("b", "c")]);
        assert!(validate(&f).has(|v| matches!(v, Violation::MultipleEntries { .. })));
        let f = Flowline::assemble(ops(&["a"]), vec![Edge::new("a", "zz")]);
        assert!(validate(&f).has(|v| matches!(v, Violation::DanglingEdge { .. })));
    }

    #[test]
    fn missing_columns_name_the_pipe() {
        let f = Flowline::assemble(
            vec![TaskNode::model("BertNER", "BertNER"), TaskNode::operator("triple", "triple")],
            vec![Edge::new("BertNER", "triple")],
        );
        let report = validate(&f);
        assert!(report.has(|v| matches!(
            v,
            Violation::TypeIncompatiblePipe { to, missing, .. }
                if to == "triple" && missing.contains(&"entity_pair".to_string())
        )));
    }

    #[test]
    fn open_source_satisfies_anything() {
        let f = Flowline::assemble(
            vec![TaskNode::start("data"), TaskNode::operator("triple", "triple")],
            vec![Edge::new("data", "triple")],
        );
        assert!(validate(&f).is_ok());
    }

    #[test]
    fn unknown_operator_fails() {
        let f = Flowline::assemble(
            vec![TaskNode::start("data"), TaskNode::operator("x", "frobnicate")],
            vec![Edge::new("data", "x")],
        );
        assert!(validate(&f).has(|v| matches!(v, Violation::UnknownOperator { .. })));
    }

    #[test]
    fn zero_model_weight_is_a_warning() {
        let f = Flowline::assemble(
            vec![TaskNode::start("data"), TaskNode::model("BertNER", "BertNER")],
            vec![Edge::new("data", "BertNER")],
        );
        let p = TaskProfile::default().with_weight("BertNER", 0.0);
        let report = validate_profile(&f, &p);
        assert!(report.is_ok());
        assert_eq!(report.warnings.len(), 1);
        let report = validate_profile(&f, &TaskProfile::default());
        assert!(!report.is_ok());
    }
}
