//! The simulator against the analytic makespan model.

use kgflow_core::cost::monetary_cost;
use kgflow_core::fixtures::{plan_suite, SuitePlan};
use kgflow_core::flowline::{apply_partition, makespan};
use kgflow_core::scheduler::{evaluate_plan, PlanContext};
use kgflow_core::sim::{simulate, Admission, SimConfig};

fn config() -> SimConfig {
    SimConfig {
        corpus_size: 2000,
        slice_size: 200,
        ..SimConfig::default()
    }
}

fn suite() -> Vec<SuitePlan> {
    let c = config();
    plan_suite(&PlanContext {
        net: c.net(),
        corpus_size: c.corpus_size,
        slice_size: c.slice_size,
        eta: 0.5,
    })
}

#[test]
fn zero_jitter_matches_analysis() {
    let suite = suite();
    assert!(suite.len() >= 10);
    let c = config();
    for s in &suite {
        let g = apply_partition(&s.flowline, &s.profile, &s.plan.assignment, c.net()).unwrap();
        let m = makespan(&g).unwrap();
        let r = simulate(&s.plan, &s.flowline, &s.profile, &c).unwrap();
        let expected = c.slices() as f64 * m;
        assert!(
            (r.total_time - expected).abs() <= 1e-9 * expected,
            "{}: simulated {} analytic {}",
            s.name,
            r.total_time,
            expected
        );
        for &per in &r.per_slice_makespan {
            assert!((per - m).abs() <= 1e-9 * m, "{}", s.name);
        }
    }
}

#[test]
fn money_matches_predictions() {
    let c = config();
    let ctx = PlanContext {
        net: c.net(),
        corpus_size: c.corpus_size,
        slice_size: c.slice_size,
        eta: 0.5,
    };
    for s in suite() {
        let r = simulate(&s.plan, &s.flowline, &s.profile, &c).unwrap();
        let pred = evaluate_plan(&s.plan, &s.flowline, &s.profile, &ctx).unwrap();
        assert!((r.total_time - pred.cost_com_s).abs() <= 1e-9 * pred.cost_com_s);
        assert!((r.monetary_cost - pred.cost_mon).abs() <= 1e-9 * pred.cost_mon);
        assert_eq!(r.monetary_cost, monetary_cost(s.plan.unit_price(), r.total_time));
    }
}

#[test]
fn timelines_are_causal() {
    for admission in [Admission::Sequential, Admission::Pipelined, Admission::Unbounded] {
        for jitter in [0.0, 0.3] {
            let c = SimConfig {
                admission,
                jitter,
                seed: 5,
                ..config()
            };
            for s in suite() {
                let r = simulate(&s.plan, &s.flowline, &s.profile, &c).unwrap();
                let at = |task: &str, slice: u64| {
                    r.timeline
                        .iter()
                        .find(|e| e.task == task && e.slice == slice)
                        .unwrap()
                };
                for ev in &r.timeline {
                    assert!(ev.end >= ev.start && ev.start >= 0.0);
                    for pred in s.flowline.predecessors(&ev.task) {
                        assert!(at(pred, ev.slice).end <= ev.start + 1e-12, "{}", s.name);
                    }
                    if admission != Admission::Unbounded && ev.slice > 0 {
                        assert!(at(&ev.task, ev.slice - 1).end <= ev.start + 1e-12);
                    }
                }
                assert!(r.timeline.iter().all(|e| e.end <= r.total_time));
            }
        }
    }
}

#[test]
fn seeded_runs_repeat() {
    let c = SimConfig {
        jitter: 0.4,
        seed: 99,
        ..config()
    };
    let s = &suite()[0];
    let a = simulate(&s.plan, &s.flowline, &s.profile, &c).unwrap();
    let b = simulate(&s.plan, &s.flowline, &s.profile, &c).unwrap();
    assert_eq!(a, b);
    let other = simulate(&s.plan, &s.flowline, &s.profile, &SimConfig { seed: 100, ..c }).unwrap();
    assert_ne!(a.total_time, other.total_time);
}

#[test]
fn pipelining_never_slower() {
    let c = config();
    for s in suite() {
        let seq = simulate(&s.plan, &s.flowline, &s.profile, &c).unwrap();
        let pipe = simulate(&s.plan, &s.flowline, &s.profile, &SimConfig { admission: Admission::Pipelined, ..c }).unwrap();
        let free = simulate(&s.plan, &s.flowline, &s.profile, &SimConfig { admission: Admission::Unbounded, ..c }).unwrap();
        assert!(pipe.total_time <= seq.total_time + 1e-9);
        assert!(free.total_time <= pipe.total_time + 1e-9);
    }
}
