//! Compounding and partitioning invariants on random flowlines.

use std::collections::{BTreeMap, BTreeSet};

use kgflow_core::cost::{cheapest_feasible, VmType};
use kgflow_core::fixtures::{example_flowline, example_profile, qcloud, synthetic_flowline};
use kgflow_core::flowline::{Edge, Flowline, NetworkParams, TaskNode, TaskProfile};
use kgflow_core::scheduler::{
    check_assignment, compound, demand_of, evaluate, greedy_partition, rank_compounds, schedule, PlanContext,
    ScheduleOptions,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random valid flowline of entity extractors and merges with a profile.
fn flowline(max: usize) -> impl Strategy<Value = (Flowline, TaskProfile)> {
    (2usize..=max).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let m = pairs.len();
        (
            Just(n),
            Just(pairs),
            proptest::collection::vec(any::<bool>(), m),
            proptest::collection::vec(prop::bool::weighted(0.4), n),
            proptest::collection::vec(0.01f64..3.0, n),
            proptest::collection::vec(1e4f64..3e6, m + n),
        )
            .prop_map(|(n, pairs, keep, gpu, weights, bytes)| {
                let mut edges: Vec<(usize, usize)> =
                    pairs.iter().zip(&keep).filter(|(_, k)| **k).map(|(p, _)| *p).collect();
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
                let id = |i: usize| format!("t{i}");
                let vertices = (0..n)
                    .map(|i| {
                        if gpu[i] {
                            TaskNode::model(id(i), format!("Model{i}NER"))
                        } else {
                            TaskNode::operator(id(i), "merge")
                        }
                    })
                    .collect();
                let f = Flowline::build(vertices, edges.iter().map(|&(a, b)| Edge::new(id(a), id(b))).collect())
                    .expect("valid");
                let mut p = TaskProfile::default();
                for (i, w) in weights.iter().enumerate() {
                    p = p.with_weight(&id(i), *w);
                }
                for (k, &(a, b)) in edges.iter().enumerate() {
                    p = p.with_payload(&id(a), &id(b), bytes[k]);
                }
                (f, p)
            })
    })
}

fn vm_pair() -> impl Strategy<Value = Vec<VmType>> {
    let shape = (0u32..3, 1u32..4, 1u32..20).prop_map(|(g, extra, price)| (g, extra, price));
    proptest::collection::vec(shape, 1..=2).prop_map(|shapes| {
        shapes
            .into_iter()
            .enumerate()
            .map(|(i, (g, extra, price))| VmType::new(&format!("s{i}"), g + extra, g, price as f64))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn compounds_partition_the_vertices((f, _) in flowline(10)) {
        let c = compound(&f);
        let mut seen = BTreeSet::new();
        for comp in &c.compounds {
            let gpu: Vec<&String> = comp.members.iter().filter(|m| f.vertex(m).unwrap().is_gpu()).collect();
            prop_assert_eq!(gpu.len(), 1);
            prop_assert_eq!(Some(gpu[0]), comp.anchor.as_ref());
            for m in &comp.members {
                prop_assert!(seen.insert(m.clone()), "{} in two units", m);
            }
            // Every member is reachable from the anchor inside the compound.
            let inside: BTreeSet<&str> = comp.members.iter().map(String::as_str).collect();
            let mut reached = BTreeSet::from([gpu[0].as_str()]);
            let mut frontier = vec![gpu[0].as_str()];
            while let Some(v) = frontier.pop() {
                for e in f.edges.iter().filter(|e| e.from == v && inside.contains(e.to.as_str())) {
                    if reached.insert(e.to.as_str()) {
                        frontier.push(e.to.as_str());
                    }
                }
            }
            prop_assert_eq!(reached, inside);
        }
        for o in &c.orphans {
            prop_assert!(seen.insert(o.clone()));
            prop_assert!(!f.vertex(o).unwrap().is_gpu());
        }
        prop_assert_eq!(seen.len(), f.vertices.len());
    }

    #[test]
    fn greedy_output_is_qualified_and_keeps_compounds_whole((f, _) in flowline(10), vms in vm_pair()) {
        let demand = demand_of(&f);
        let Ok(plan) = cheapest_feasible(&vms, demand) else { return Ok(()); };
        let instances = plan.instances();
        let c = compound(&f);
        if let Ok(a) = greedy_partition(&f, &c, &instances) {
            let one_based: BTreeMap<String, usize> = a.iter().map(|(k, v)| (k.clone(), v + 1)).collect();
            prop_assert!(check_assignment(&f, &instances, &one_based).is_empty());
            for comp in &c.compounds {
                let vm = a[&comp.members[0]];
                prop_assert!(comp.members.iter().all(|m| a[m] == vm));
            }
        }
    }
}

/// A random flowline of at most `max` tasks with a one- or two-type catalog.
fn random_instance(rng: &mut ChaCha8Rng, max: usize) -> (Flowline, TaskProfile, Vec<VmType>, f64) {
    let n = rng.gen_range(2..=max);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.5) {
                edges.push((i, j));
            }
        }
    }
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
    let id = |i: usize| format!("t{i}");
    let vertices = (0..n)
        .map(|i| {
            if rng.gen_bool(0.4) {
                TaskNode::model(id(i), format!("Model{i}NER"))
            } else {
                TaskNode::operator(id(i), "merge")
            }
        })
        .collect();
    let f = Flowline::build(vertices, edges.iter().map(|&(a, b)| Edge::new(id(a), id(b))).collect()).unwrap();
    let mut p = TaskProfile::default();
    for i in 0..n {
        p = p.with_weight(&id(i), rng.gen_range(0.01..3.0));
    }
    for &(a, b) in &edges {
        p = p.with_payload(&id(a), &id(b), rng.gen_range(1e4..3e6));
    }
    let vms = (0..rng.gen_range(1..=2))
        .map(|i| {
            let g = rng.gen_range(0..3);
            VmType::new(&format!("s{i}"), g + rng.gen_range(1..4), g, rng.gen_range(1..20) as f64)
        })
        .collect();
    (f, p, vms, rng.gen_range(0.1..0.9))
}

/// Objective of every qualified assignment of the flowline onto `vms`.
fn all_partitions(f: &Flowline, p: &TaskProfile, vms: &[VmType], ctx: &PlanContext) -> Vec<f64> {
    let (n, k) = (f.vertices.len(), vms.len());
    let mut digits = vec![0usize; n];
    let mut out = Vec::new();
    loop {
        let cand: BTreeMap<String, usize> = f.vertices.iter().zip(&digits).map(|(v, d)| (v.id.clone(), d + 1)).collect();
        if check_assignment(f, vms, &cand).is_empty() {
            out.push(evaluate(f, p, vms, &cand, ctx).unwrap().j);
        }
        let mut i = 0;
        while i < n {
            digits[i] += 1;
            if digits[i] < k {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
        if i == n {
            return out;
        }
    }
}

#[test]
fn schedule_beats_most_partitions_on_most_flowlines() {
    // The plan must match or beat 90% of all qualified partitions under its
    // own procurement. Neither greedy placement nor any plan that keeps
    // compounds whole can promise this on every flowline (see the test
    // below), so the floor is checked across a seeded suite.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut cases, mut held) = (0, 0);
    while cases < 300 {
        let (f, p, vms, eta) = random_instance(&mut rng, 6);
        let ctx = PlanContext { eta, ..PlanContext::default() };
        let Ok(plan) = schedule(&f, &p, &vms, &ctx, &ScheduleOptions::default()) else { continue };
        cases += 1;
        let all = all_partitions(&f, &p, &plan.vms, &ctx);
        let beaten = all.iter().filter(|&&other| plan.predictions.j <= other + 1e-12).count();
        if beaten * 10 >= all.len() * 9 {
            held += 1;
        }
    }
    assert!(held * 10 >= cases * 9, "floor held on {held} of {cases}");
}

#[test]
fn splitting_a_compound_can_win() {
    // A compound {m0, o1} whose operator inflates its payload towards the
    // second model: cutting inside the compound is cheaper, which a plan
    // that keeps compounds whole cannot exploit.
    let f = Flowline::build(
        vec![
            TaskNode::model("m0", "ANER"),
            TaskNode::operator("o1", "merge"),
            TaskNode::model("m2", "BNER"),
        ],
        vec![Edge::new("m0", "o1"), Edge::new("m0", "m2"), Edge::new("o1", "m2")],
    )
    .unwrap();
    let p = TaskProfile::default()
        .with_weight("m0", 0.01)
        .with_weight("o1", 0.01)
        .with_weight("m2", 0.01)
        .with_payload("m0", "o1", 1e4)
        .with_payload("m0", "m2", 1e4)
        .with_payload("o1", "m2", 1.7e6);
    let vms = vec![VmType::new("s0", 2, 1, 1.0)];
    let plan = schedule(&f, &p, &vms, &PlanContext::default(), &ScheduleOptions::default()).unwrap();
    assert_eq!(plan.assignment["m0"], plan.assignment["o1"]);
    let split: BTreeMap<String, usize> = [("m0".into(), 1), ("o1".into(), 2), ("m2".into(), 2)].into();
    let better = evaluate(&f, &p, &plan.vms, &split, &PlanContext::default()).unwrap();
    assert!(better.makespan_s < plan.predictions.makespan_s);
}

#[test]
fn schedule_is_deterministic_and_qualified() {
    for (m, o, seed) in [(2, 3, 1), (3, 6, 2), (4, 8, 3)] {
        let (f, p) = synthetic_flowline(m, o, seed);
        let ctx = PlanContext { corpus_size: 2000, slice_size: 200, ..PlanContext::default() };
        let a = schedule(&f, &p, &qcloud(), &ctx, &ScheduleOptions::default()).unwrap();
        let b = schedule(&f, &p, &qcloud(), &ctx, &ScheduleOptions::default()).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert!(check_assignment(&f, &a.vms, &a.assignment).is_empty());
        for comp in compound(&f).compounds {
            let vm = a.assignment[&comp.members[0]];
            assert!(comp.members.iter().all(|t| a.assignment[t] == vm));
        }
    }
}

#[test]
fn example_trace_is_byte_stable() {
    let f = example_flowline();
    let q = qcloud();
    let vms = vec![q[1].clone(), q[0].clone()];
    let run = || format!("{:?}", greedy_partition(&f, &compound(&f), &vms).unwrap());
    assert_eq!(run(), run());
    let ranked = rank_compounds(&f, &example_profile(), NetworkParams::default(), compound(&f)).unwrap();
    assert_eq!(greedy_partition(&f, &ranked, &vms).unwrap(), greedy_partition(&f, &compound(&f), &vms).unwrap());
}
