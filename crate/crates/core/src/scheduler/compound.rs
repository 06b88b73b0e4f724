use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::flowline::Flowline;

/// A GPU task plus the CPU operators fed exclusively by it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Compound {
    /// Member ids in flowline vertex order.
    pub members: Vec<String>,
    /// The GPU task that seeded the compound.
    pub anchor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Compounding {
    pub compounds: Vec<Compound>,
    /// Tasks in no compound, in topological order.
    pub orphans: Vec<String>,
}

/// Grow one compound per GPU task: a CPU-only successor joins when all of its
/// inputs already belong to the compound. Repeat until nothing joins.
pub fn compound(flowline: &Flowline) -> Compounding {
    let order = flowline
        .topo_order()
        .unwrap_or_else(|| (0..flowline.vertices.len()).collect());
    let idx = flowline.index_of();
    let n = flowline.vertices.len();
    let mut preds = vec![Vec::new(); n];
    let mut succs = vec![Vec::new(); n];
    for e in &flowline.edges {
        if let (Some(&a), Some(&b)) = (idx.get(e.from.as_str()), idx.get(e.to.as_str())) {
            succs[a].push(b);
            preds[b].push(a);
        }
    }

    let mut taken = vec![false; n];
    let mut compounds = Vec::new();
    for &t in &order {
        if !flowline.vertices[t].is_gpu() {
            continue;
        }
        let mut members = BTreeSet::from([t]);
        taken[t] = true;
        loop {
            let joinable: Vec<usize> = members
                .iter()
                .flat_map(|&m| succs[m].iter().copied())
                .filter(|&s| {
                    !taken[s]
                        && !flowline.vertices[s].is_gpu()
                        && preds[s].iter().all(|p| members.contains(p))
                })
                .collect();
            if joinable.is_empty() {
                break;
            }
            for s in joinable {
                taken[s] = true;
                members.insert(s);
            }
        }
        compounds.push(Compound {
            members: members
                .into_iter()
                .map(|i| flowline.vertices[i].id.clone())
                .collect(),
            anchor: Some(flowline.vertices[t].id.clone()),
        });
    }
    let orphans = order
        .into_iter()
        .filter(|&i| !taken[i])
        .map(|i| flowline.vertices[i].id.clone())
        .collect();
    Compounding { compounds, orphans }
}
