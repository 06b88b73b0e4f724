//! Bundled reference data: catalogs, measured observations and example
//! flowlines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::{load_catalog, Observation, VmType};
use crate::flowline::{Edge, Flowline, TaskNode, TaskProfile};
use crate::scheduler::{schedule, PlanContext, ScheduleOptions, SchedulePlan};
use crate::sim::{baseline_list, baseline_random};

/// The flowline of the running example, written in the flowline language.
pub const LISTING1: &str = include_str!("../data/listing1.gfl");

pub const G4DN_JSON: &str = include_str!("../data/g4dn.json");
pub const QCLOUD_JSON: &str = include_str!("../data/qcloud_gn10xp.json");
pub const QCLOUD_OBSERVATIONS_JSON: &str = include_str!("../data/qcloud_observations.json");

/// AWS g4dn on-demand quotes (USD per hour).
pub fn g4dn() -> Vec<VmType> {
    load_catalog(G4DN_JSON).expect("bundled catalog is valid")
}

/// Tencent Cloud GN10Xp quotes (CNY per hour).
pub fn qcloud() -> Vec<VmType> {
    load_catalog(QCLOUD_JSON).expect("bundled catalog is valid")
}

/// Measured makespans of the example flowline on GN10Xp procurements.
pub fn qcloud_observations() -> Vec<Observation> {
    serde_json::from_str(QCLOUD_OBSERVATIONS_JSON).expect("bundled observations are valid")
}

/// The nine tasks of the running example without the data source:
/// an entity extractor (1), two entity filters (2, 3), two pair
/// constructors (4, 5), two relation classifiers (6, 7), a merge (8) and the
/// triple constructor (9).
pub fn example_flowline() -> Flowline {
    let mut f2 = TaskNode::operator("2", "filter");
    f2.config
        .insert("predicate".into(), "ent_t in [\"PER\", \"ORG\"]".into());
    let mut f3 = TaskNode::operator("3", "filter");
    f3.config
        .insert("predicate".into(), "ent_t not in [\"PER\", \"ORG\"]".into());
    let vertices = vec![
        TaskNode::model("1", "BertNER"),
        f2,
        f3,
        TaskNode::operator("4", "permutate"),
        TaskNode::operator("5", "permutate"),
        TaskNode::model("6", "BERTRE"),
        TaskNode::model("7", "LSTMRE"),
        TaskNode::operator("8", "merge"),
        TaskNode::operator("9", "triple"),
    ];
    let edges = [
        ("1", "2"),
        ("1", "3"),
        ("2", "4"),
        ("3", "5"),
        ("4", "6"),
        ("5", "7"),
        ("6", "8"),
        ("7", "8"),
        ("8", "9"),
    ]
    .iter()
    .map(|(a, b)| Edge::new(*a, *b))
    .collect();
    Flowline::assemble(vertices, edges)
}

/// Per-slice profile for [`example_flowline`] (200-row slices).
pub fn example_profile() -> TaskProfile {
    let weights = [
        ("1", 1.60),
        ("2", 0.04),
        ("3", 0.04),
        ("4", 0.08),
        ("5", 0.08),
        ("6", 2.20),
        ("7", 1.90),
        ("8", 0.03),
        ("9", 0.05),
    ];
    let payloads = [
        ("1", "2", 180_000.0),
        ("1", "3", 180_000.0),
        ("2", "4", 120_000.0),
        ("3", "5", 90_000.0),
        ("4", "6", 900_000.0),
        ("5", "7", 600_000.0),
        ("6", "8", 60_000.0),
        ("7", "8", 45_000.0),
        ("8", "9", 100_000.0),
    ];
    let mut p = TaskProfile::default();
    for (id, w) in weights {
        p = p.with_weight(id, w);
    }
    for (a, b, bytes) in payloads {
        p = p.with_payload(a, b, bytes);
    }
    p
}

/// A deterministic synthetic flowline with `models` model tasks and
/// `operators` operator tasks, fed by a `data` source.
///
/// One entity extractor fans out into `models - 1` relation branches. Each
/// branch runs a filter and pair constructor before its classifier; the
/// classifiers are merged and turned into triples. Extra operators are
/// scattered along the branches.
pub fn synthetic_flowline(models: usize, operators: usize, seed: u64) -> (Flowline, TaskProfile) {
    assert!(models >= 1, "at least one model");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let branches = models - 1;
    let fixed = 1 + usize::from(branches >= 2);
    assert!(operators >= fixed, "too few operators for the shape");

    let mut vertices = vec![TaskNode::start("data"), TaskNode::model("ner", "SynthNER")];
    let mut edges = vec![Edge::new("data", "ner")];
    let mut profile = TaskProfile::default().with_weight("ner", rng.gen_range(0.8..2.0));
    let mut op_count = 0usize;
    let mut add_op = |vertices: &mut Vec<TaskNode>, profile: &mut TaskProfile, rng: &mut ChaCha8Rng, function: &str| {
        op_count += 1;
        let id = format!("o{op_count}");
        let mut node = TaskNode::operator(&id, function);
        if function == "filter" {
            node.config
                .insert("predicate".into(), "ent_t in [\"PER\", \"ORG\"]".into());
        }
        vertices.push(node);
        *profile = std::mem::take(profile).with_weight(&id, rng.gen_range(0.01..0.15));
        id
    };

    // Spread the free operators over the pre and post slots of each branch
    // (or after the extractor when there are no branches).
    let free = operators - fixed;
    let slots = (2 * branches).max(1);
    let mut per_slot = vec![0usize; slots];
    for _ in 0..free {
        per_slot[rng.gen_range(0..slots)] += 1;
    }

    let mut tails = Vec::new();
    if branches == 0 {
        let mut prev = "ner".to_string();
        for _ in 0..per_slot[0] {
            let id = add_op(&mut vertices, &mut profile, &mut rng, "entity_type_filter");
            edges.push(Edge::new(&prev, &id));
            prev = id;
        }
        tails.push(prev);
    }
    const PRE: [&str; 3] = ["filter", "permutate", "entity_type_mapper"];
    const POST: [&str; 3] = ["score_filter", "relation_mapper", "relation_filter"];
    for b in 0..branches {
        let mut prev = "ner".to_string();
        for k in 0..per_slot[2 * b] {
            let id = add_op(&mut vertices, &mut profile, &mut rng, PRE[k % PRE.len()]);
            edges.push(Edge::new(&prev, &id));
            prev = id;
        }
        let model = format!("m{}", b + 1);
        vertices.push(TaskNode::model(&model, format!("Synth{}RE", b + 1)));
        profile = profile.with_weight(&model, rng.gen_range(0.8..2.5));
        edges.push(Edge::new(&prev, &model));
        if prev != "ner" {
            edges.push(Edge::new("data", &model));
        }
        prev = model;
        for k in 0..per_slot[2 * b + 1] {
            let id = add_op(&mut vertices, &mut profile, &mut rng, POST[k % POST.len()]);
            edges.push(Edge::new(&prev, &id));
            prev = id;
        }
        tails.push(prev);
    }
    let sink_in = if tails.len() >= 2 {
        let merge = add_op(&mut vertices, &mut profile, &mut rng, "merge");
        for t in &tails {
            edges.push(Edge::new(t, &merge));
        }
        merge
    } else {
        tails.pop().unwrap_or_else(|| "ner".into())
    };
    let triple = add_op(&mut vertices, &mut profile, &mut rng, "triple");
    edges.push(Edge::new(&sink_in, &triple));

    for e in &edges {
        let bytes = rng.gen_range(20_000.0..1_500_000.0);
        profile.set_payload(&e.from, &e.to, bytes);
    }
    let flowline = Flowline::build(vertices, edges).expect("synthetic flowline is valid");
    (flowline, profile)
}

/// A named plan together with the flowline and profile it was made for.
#[derive(Debug, Clone)]
pub struct SuitePlan {
    pub name: String,
    pub flowline: Flowline,
    pub profile: TaskProfile,
    pub plan: SchedulePlan,
}

/// Fifteen qualified plans on the qCloud catalog: the heuristic, the list
/// baseline and a random baseline for the running example and four
/// synthetic shapes.
pub fn plan_suite(ctx: &PlanContext) -> Vec<SuitePlan> {
    let mut flowlines = vec![("example".to_string(), example_flowline(), example_profile())];
    for (m, o, seed) in [(2, 3, 3), (3, 6, 1), (4, 8, 2), (5, 10, 4)] {
        let (f, p) = synthetic_flowline(m, o, seed);
        flowlines.push((format!("synthetic-{m}-{o}-{seed}"), f, p));
    }
    let catalog = qcloud();
    let mut out = Vec::new();
    for (name, f, p) in flowlines {
        let plans = [
            ("heuristic", schedule(&f, &p, &catalog, ctx, &ScheduleOptions::default())),
            ("list", baseline_list(&f, &p, &catalog, ctx)),
            ("random", baseline_random(&f, &p, &catalog, ctx, 0)),
        ];
        for (kind, plan) in plans {
            out.push(SuitePlan {
                name: format!("{name}/{kind}"),
                flowline: f.clone(),
                profile: p.clone(),
                plan: plan.expect("suite plans are feasible"),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowline::validate;

    #[test]
    fn example_is_valid() {
        let f = example_flowline();
        assert!(validate(&f).is_ok(), "{}", validate(&f));
        assert_eq!(f.entry, "1");
        assert_eq!(f.exit, "9");
    }

    #[test]
    fn synthetic_shapes_have_requested_counts() {
        for (m, o) in [(1, 1), (2, 1), (3, 6), (3, 11), (4, 8), (6, 18), (6, 29)] {
            let (f, p) = synthetic_flowline(m, o, 7);
            assert_eq!(f.model_ids().len(), m);
            let ops = f.vertices.iter().filter(|v| !v.is_gpu() && !v.is_controller()).count();
            assert_eq!(ops, o, "shape {m}m{o}o");
            assert!(crate::flowline::validate_profile(&f, &p).is_ok());
        }
    }

    #[test]
    fn bundled_data_loads() {
        assert_eq!(g4dn().len(), 7);
        assert_eq!(qcloud().len(), 4);
        assert_eq!(qcloud_observations().len(), 7);
    }
}
