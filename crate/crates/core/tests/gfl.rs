//! Flowline language round trips.

use kgflow_core::fixtures::{synthetic_flowline, LISTING1};
use kgflow_core::flowline::Flowline;
use kgflow_core::gfl::{format, parse};
use petgraph::algo::is_isomorphic_matching;
use petgraph::graph::DiGraph;

type Label = (String, String, String, Vec<(String, String)>);

fn graph(f: &Flowline) -> DiGraph<Label, ()> {
    let mut g = DiGraph::new();
    let nodes: Vec<_> = f
        .vertices
        .iter()
        .map(|v| {
            g.add_node((
                v.id.clone(),
                v.function.clone(),
                format!("{:?}", v.kind),
                v.config.iter().map(|(k, x)| (k.clone(), x.clone())).collect(),
            ))
        })
        .collect();
    let idx = f.index_of();
    for e in &f.edges {
        g.add_edge(nodes[idx[e.from.as_str()]], nodes[idx[e.to.as_str()]], ());
    }
    g
}

fn corpus() -> Vec<Flowline> {
    let mut texts: Vec<String> = vec![
        LISTING1.to_string(),
        ":data\n    | opt.triple:".into(),
        ":data\n    | model.BertNER -> ent, ent_t\n        | opt.permutate -> ent_p, ent_t_p\n            | model.BERTRE\n                | opt.triple:".into(),
        ":data\n    | model.BertNER -> ent, ent_t\n        | opt.entity_type_filter(types=[\"PER\"])\n            | opt.permutate\n                | model.LSTMRE\n                    | opt.relation_filter(relations=[\"works_for\"])\n                        | opt.triple:".into(),
        ":data\n    | model.ANER[a] -> ent, ent_t\n        | opt.chunk_ensemble[ens]\n    | model.BNER[b] -> ent, ent_t\n        | opt.chunk_ensemble[ens]\n            | opt.permutate\n                | model.CRE\n                    | opt.triple:".into(),
        "keep := [\"PER\", \"LOC\"]\n:data\n    | model.BertNER -> ent, ent_t\n        | opt.filter(ent_t in keep)\n            | opt.permutate\n                | model.BERTRE\n                    | opt.score_filter(threshold=0.5)\n                        | opt.triple:".into(),
    ];
    let mut out: Vec<Flowline> = texts.drain(..).map(|t| parse(&t).unwrap_or_else(|e| panic!("{e}\n{t}"))).collect();
    for (m, o, seed) in [
        (1, 1, 0),
        (1, 4, 1),
        (2, 3, 2),
        (2, 6, 3),
        (3, 6, 4),
        (3, 11, 5),
        (4, 8, 6),
        (4, 12, 7),
        (5, 10, 8),
        (6, 18, 9),
        (6, 29, 10),
        (3, 4, 11),
        (5, 20, 12),
        (2, 2, 13),
        (7, 14, 14),
    ] {
        out.push(synthetic_flowline(m, o, seed).0);
    }
    out
}

#[test]
fn listing_matches_the_running_example() {
    let f = parse(LISTING1).unwrap();
    assert_eq!(f.vertices.len(), 10);
    // Running-example numbering: 1 BertNER, 2/3 filters, 4/5 permutes, 6 BERTRE,
    // 7 LSTMRE, 8 merge, 9 triple, fed by the data source.
    let mut edges: Vec<(&str, &str)> = f.edges.iter().map(|e| (e.from.as_str(), e.to.as_str())).collect();
    edges.sort();
    let mut expected = vec![
        ("data", "BertNER"),
        ("BertNER", "f_bert"),
        ("BertNER", "f_lstm"),
        ("f_bert", "p1"),
        ("f_lstm", "p2"),
        ("p1", "BERTRE"),
        ("p2", "LSTMRE"),
        ("BERTRE", "re"),
        ("LSTMRE", "re"),
        ("re", "triple"),
    ];
    expected.sort();
    assert_eq!(edges, expected);
    assert_eq!(f.entry, "data");
    assert_eq!(f.exit, "triple");
}

#[test]
fn round_trip_is_isomorphic() {
    let corpus = corpus();
    assert!(corpus.len() >= 20);
    for f in &corpus {
        let text = format(f);
        let back = parse(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
        assert!(
            is_isomorphic_matching(&graph(f), &graph(&back), |a, b| a == b, |_, _| true),
            "not isomorphic after round trip:\n{text}"
        );
    }
}

#[test]
fn formatting_is_idempotent() {
    for f in corpus() {
        let once = format(&f);
        let twice = format(&parse(&once).unwrap());
        assert_eq!(once, twice);
    }
}
