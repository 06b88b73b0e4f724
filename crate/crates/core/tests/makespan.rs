//! The finish-time recursion against an exhaustive longest-path oracle.

use std::collections::BTreeMap;

use kgflow_core::flowline::{
    apply_partition, makespan, ComputationGraph, Edge, Flowline, NetworkParams, TaskNode, TaskProfile,
};
use petgraph::algo::all_simple_paths;
use petgraph::graph::{DiGraph, NodeIndex};
use proptest::prelude::*;

/// A random single-entry, single-exit DAG with integer weights, so every sum
/// is exact in floating point.
#[derive(Debug, Clone)]
struct Case {
    n: usize,
    edges: Vec<(usize, usize)>,
    weights: Vec<u32>,
    bytes: Vec<u32>,
    vm: Vec<usize>,
}

fn case() -> impl Strategy<Value = Case> {
    (2usize..=12).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let m = pairs.len();
        (
            Just(n),
            Just(pairs),
            proptest::collection::vec(any::<bool>(), m),
            proptest::collection::vec(0u32..100, n),
            proptest::collection::vec(0u32..50, m),
            proptest::collection::vec(0usize..3, n),
        )
            .prop_map(|(n, pairs, keep, weights, bytes, vm)| {
                let mut edges: Vec<(usize, usize)> =
                    pairs.iter().zip(&keep).filter(|(_, k)| **k).map(|(p, _)| *p).collect();
                // Tie every source to vertex 0 and every sink to the last vertex.
                for v in 1..n {
                    if !edges.iter().any(|&(_, b)| b == v) {
                        edges.push((0, v));
                    }
                }
                for v in 0..n - 1 {
                    if !edges.iter().any(|&(a, _)| a == v) {
                        edges.push((v, n - 1));
                    }
                }
                edges.sort();
                let bytes = bytes.into_iter().cycle().take(edges.len()).collect();
                Case { n, edges, weights, bytes, vm }
            })
    })
}

fn id(i: usize) -> String {
    format!("v{i}")
}

fn build(c: &Case) -> (Flowline, TaskProfile) {
    let vertices = (0..c.n).map(|i| TaskNode::operator(id(i), "merge")).collect();
    let edges = c.edges.iter().map(|&(a, b)| Edge::new(id(a), id(b))).collect();
    let f = Flowline::build(vertices, edges).expect("valid dag");
    let mut p = TaskProfile::default();
    for (i, w) in c.weights.iter().enumerate() {
        p = p.with_weight(&id(i), *w as f64);
    }
    for (&(a, b), bytes) in c.edges.iter().zip(&c.bytes) {
        p = p.with_payload(&id(a), &id(b), *bytes as f64);
    }
    (f, p)
}

fn partitioned(c: &Case, f: &Flowline, p: &TaskProfile) -> ComputationGraph {
    let assignment: BTreeMap<String, usize> = (0..c.n).map(|i| (id(i), c.vm[i])).collect();
    apply_partition(f, p, &assignment, NetworkParams::new(3.0, 1.0).unwrap()).unwrap()
}

/// Longest entry-to-exit path by enumerating every simple path.
fn oracle(c: &Case, g: &ComputationGraph) -> f64 {
    let mut dg = DiGraph::<f64, f64>::new();
    let nodes: Vec<NodeIndex> = c.weights.iter().map(|w| dg.add_node(*w as f64)).collect();
    for (k, &(a, b)) in c.edges.iter().enumerate() {
        dg.add_edge(nodes[a], nodes[b], g.edge_weights[k]);
    }
    if c.n == 1 {
        return dg[nodes[0]];
    }
    all_simple_paths::<Vec<_>, _>(&dg, nodes[0], nodes[c.n - 1], 0, None)
        .map(|path| {
            let mut total = 0.0;
            for w in path.windows(2) {
                let e = dg.find_edge(w[0], w[1]).unwrap();
                total += dg[w[0]] + dg[e];
            }
            total + dg[*path.last().unwrap()]
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn recursion_matches_path_enumeration(c in case()) {
        let (f, p) = build(&c);
        let g = partitioned(&c, &f, &p);
        prop_assert_eq!(makespan(&g).unwrap(), oracle(&c, &g));
    }

    #[test]
    fn heavier_tasks_never_shorten(c in case(), bump in 0usize..12, extra in 1u32..20) {
        let (f, p) = build(&c);
        let before = makespan(&partitioned(&c, &f, &p)).unwrap();
        let v = id(bump % c.n);
        let w = p.vertex_weights[&v];
        let heavier = p.clone().with_weight(&v, w + extra as f64);
        let after = makespan(&partitioned(&c, &f, &heavier)).unwrap();
        prop_assert!(after >= before);
    }

    #[test]
    fn cuts_never_beat_colocation(c in case()) {
        let (f, p) = build(&c);
        let split = makespan(&partitioned(&c, &f, &p)).unwrap();
        let together = makespan(&ComputationGraph::colocated(&f, &p)).unwrap();
        prop_assert!(split >= together);
        // Merging two VMs removes cuts, so it cannot lengthen the makespan.
        let merged = Case { vm: c.vm.iter().map(|&v| v.min(1)).collect(), ..c.clone() };
        let coarser = makespan(&partitioned(&merged, &f, &p)).unwrap();
        prop_assert!(coarser <= split);
    }
}
