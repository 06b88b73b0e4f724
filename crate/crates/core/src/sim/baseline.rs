use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cost::{cheapest_feasible, multisets_within, CostError, Demand, ProcurementPlan, VmType};
use crate::flowline::{Flowline, TaskProfile};
use crate::scheduler::{demand_of, uses_core, PlanContext, SchedError, SchedulePlan};

const SEARCH_BOUNDS: [f64; 4] = [4.0, 3.0, 2.0, 1.5];
const SEARCH_VISITS: usize = 200_000;

/// Feasible multisets near the cheapest feasible price from which no
/// instance can be dropped without losing feasibility.
pub fn minimal_procurements(catalog: &[VmType], demand: Demand) -> Result<Vec<ProcurementPlan>, CostError> {
    let floor = cheapest_feasible(catalog, demand)?;
    let mut sets = None;
    for k in SEARCH_BOUNDS {
        match multisets_within(catalog, k * floor.unit_price, SEARCH_VISITS) {
            Ok(s) => {
                sets = Some(s);
                break;
            }
            Err(CostError::SearchLimit(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    let Some(sets) = sets else {
        return Ok(vec![floor]);
    };
    let fits = |counts: &[u32]| {
        let gpus: u32 = catalog.iter().zip(counts).map(|(vm, n)| vm.gpu_cards * n).sum();
        let cpus: u32 = catalog.iter().zip(counts).map(|(vm, n)| vm.cpu_headroom() * n).sum();
        counts.iter().sum::<u32>() > 0 && gpus >= demand.gpus && cpus >= demand.cpus
    };
    Ok(sets
        .into_iter()
        .filter(|c| fits(c))
        .filter(|c| {
            (0..c.len()).filter(|&i| c[i] > 0).all(|i| {
                let mut fewer = c.clone();
                fewer[i] -= 1;
                !fits(&fewer)
            })
        })
        .map(|c| ProcurementPlan::from_counts(catalog, &c))
        .collect())
}

/// A uniformly chosen minimal procurement with every task dropped on a
/// random VM that still has room for it.
pub fn baseline_random(
    flowline: &Flowline,
    profile: &TaskProfile,
    catalog: &[VmType],
    ctx: &PlanContext,
    seed: u64,
) -> Result<SchedulePlan, SchedError> {
    let demand = demand_of(flowline);
    let options = minimal_procurements(catalog, demand)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = options
        .choose(&mut rng)
        .ok_or(CostError::Infeasible {
            gpus: demand.gpus,
            cpus: demand.cpus,
        })?;
    let vms = plan.instances();
    let mut gpu_left: Vec<u32> = vms.iter().map(|v| v.gpu_cards).collect();
    let mut cpu_left: Vec<u32> = vms.iter().map(|v| v.cpu_headroom()).collect();
    let mut assignment = BTreeMap::new();
    for v in &flowline.vertices {
        let open: Vec<usize> = (0..vms.len())
            .filter(|&i| {
                if v.is_gpu() {
                    gpu_left[i] > 0
                } else if uses_core(v) {
                    cpu_left[i] > 0
                } else {
                    true
                }
            })
            .collect();
        let i = *open
            .choose(&mut rng)
            .ok_or_else(|| SchedError::NoCapacity { unit: v.id.clone() })?;
        if v.is_gpu() {
            gpu_left[i] -= 1;
        } else if uses_core(v) {
            cpu_left[i] -= 1;
        }
        assignment.insert(v.id.clone(), i + 1);
    }
    SchedulePlan::build(flowline, profile, vms, assignment, ctx)
}

/// List scheduling over the cheapest feasible procurement: tasks by
/// decreasing upward rank, each on the VM giving the earliest finish.
pub fn baseline_list(
    flowline: &Flowline,
    profile: &TaskProfile,
    catalog: &[VmType],
    ctx: &PlanContext,
) -> Result<SchedulePlan, SchedError> {
    let demand = demand_of(flowline);
    let vms = cheapest_feasible(catalog, demand)?.instances();
    let k = vms.len() as f64;
    let n = flowline.vertices.len();
    let idx = flowline.index_of();
    let order = flowline.topo_order().ok_or(SchedError::NoFeasiblePlan)?;
    let mut topo_pos = vec![0usize; n];
    for (p, &v) in order.iter().enumerate() {
        topo_pos[v] = p;
    }
    let weights: Vec<f64> = flowline
        .vertices
        .iter()
        .map(|v| profile.weight(v))
        .collect::<Result<_, _>>()?;
    let mut succs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut preds: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for e in &flowline.edges {
        let (a, b) = (idx[e.from.as_str()], idx[e.to.as_str()]);
        let cut = ctx.net.transfer(profile.payload(&e.from, &e.to));
        succs[a].push((b, cut));
        preds[b].push((a, cut));
    }

    // Expected communication is the cut cost times the chance two tasks land
    // on different VMs.
    let spread = (k - 1.0) / k;
    let mut rank = vec![0.0f64; n];
    for &v in order.iter().rev() {
        let tail = succs[v]
            .iter()
            .map(|&(s, c)| spread * c + rank[s])
            .fold(0.0, f64::max);
        rank[v] = weights[v] + tail;
    }
    let mut by_rank: Vec<usize> = (0..n).collect();
    by_rank.sort_by(|&a, &b| rank[b].total_cmp(&rank[a]).then(topo_pos[a].cmp(&topo_pos[b])));

    let mut gpu_left: Vec<u32> = vms.iter().map(|v| v.gpu_cards).collect();
    let mut cpu_left: Vec<u32> = vms.iter().map(|v| v.cpu_headroom()).collect();
    let mut placed: Vec<Option<usize>> = vec![None; n];
    let mut finish = vec![0.0f64; n];
    for v in by_rank {
        let node = &flowline.vertices[v];
        let mut best: Option<(usize, f64)> = None;
        for i in 0..vms.len() {
            let room = if node.is_gpu() {
                gpu_left[i] > 0
            } else if uses_core(node) {
                cpu_left[i] > 0
            } else {
                true
            };
            if !room {
                continue;
            }
            let ready = preds[v]
                .iter()
                .map(|&(p, c)| finish[p] + if placed[p] == Some(i) { 0.0 } else { c })
                .fold(0.0, f64::max);
            let eft = ready + weights[v];
            if best.is_none_or(|(_, b)| eft < b) {
                best = Some((i, eft));
            }
        }
        let (i, eft) = best.ok_or_else(|| SchedError::NoCapacity { unit: node.id.clone() })?;
        if node.is_gpu() {
            gpu_left[i] -= 1;
        } else if uses_core(node) {
            cpu_left[i] -= 1;
        }
        placed[v] = Some(i);
        finish[v] = eft;
    }
    let assignment = flowline
        .vertices
        .iter()
        .zip(&placed)
        .map(|(v, p)| (v.id.clone(), p.expect("every task placed") + 1))
        .collect();
    SchedulePlan::build(flowline, profile, vms, assignment, ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{example_flowline, example_profile, qcloud};
    use crate::flowline::{Edge, TaskNode};
    use crate::scheduler::check_qualification;

    #[test]
    fn random_is_seeded_and_qualified() {
        let (f, p) = (example_flowline(), example_profile());
        let ctx = PlanContext::default();
        let a = baseline_random(&f, &p, &qcloud(), &ctx, 3).unwrap();
        assert_eq!(a, baseline_random(&f, &p, &qcloud(), &ctx, 3).unwrap());
        for seed in 0..100 {
            let plan = baseline_random(&f, &p, &qcloud(), &ctx, seed).unwrap();
            assert!(check_qualification(&plan, &f).is_empty());
        }
    }

    #[test]
    fn single_vm_catalog_colocates() {
        let (f, p) = (example_flowline(), example_profile());
        let big = vec![qcloud()[2].clone()];
        let plan = baseline_random(&f, &p, &big, &PlanContext::default(), 1).unwrap();
        assert_eq!(plan.vms.len(), 1);
        assert!(plan.assignment.values().all(|&v| v == 1));
    }

    #[test]
    fn minimal_sets_are_minimal() {
        let plans = minimal_procurements(&qcloud(), Demand { gpus: 3, cpus: 6 }).unwrap();
        let names: Vec<String> = plans.iter().map(|p| p.describe()).collect();
        assert!(names.contains(&"5XLARGE80 x1 + 2XLARGE40 x1".to_string()));
        assert!(names.contains(&"10XLARGE160 x1".to_string()));
        assert!(!names.iter().any(|n| n.contains("10XLARGE160 x1 +")));
    }

    #[test]
    fn list_keeps_a_chain_together() {
        let f = Flowline::build(
            vec![
                TaskNode::model("a", "ANER"),
                TaskNode::operator("b", "entity_type_filter"),
                TaskNode::operator("c", "permutate"),
            ],
            vec![Edge::new("a", "b"), Edge::new("b", "c")],
        )
        .unwrap();
        let p = TaskProfile::default()
            .with_weight("a", 1.0)
            .with_weight("b", 0.1)
            .with_weight("c", 0.1)
            .with_payload("a", "b", 1e6)
            .with_payload("b", "c", 1e6);
        let cat = vec![VmType::new("small", 3, 1, 1.0)];
        let plan = baseline_list(&f, &p, &cat, &PlanContext::default()).unwrap();
        assert_eq!(plan.vms.len(), 1);
        let cat = vec![VmType::new("one", 4, 1, 1.0), VmType::new("cpu", 8, 0, 0.1)];
        let plan = baseline_list(&f, &p, &cat, &PlanContext::default()).unwrap();
        assert!(plan.assignment.values().all(|&v| v == 1));
    }

    #[test]
    fn list_splits_parallel_branches() {
        let f = Flowline::build(
            vec![
                TaskNode::start("s"),
                TaskNode::model("a", "ANER"),
                TaskNode::model("b", "BNER"),
                TaskNode::operator("m", "chunk_ensemble"),
            ],
            vec![Edge::new("s", "a"), Edge::new("s", "b"), Edge::new("a", "m"), Edge::new("b", "m")],
        )
        .unwrap();
        let p = TaskProfile::default()
            .with_weight("a", 2.0)
            .with_weight("b", 2.0)
            .with_weight("m", 0.1);
        let cat = vec![VmType::new("g1", 4, 1, 1.0)];
        let plan = baseline_list(&f, &p, &cat, &PlanContext::default()).unwrap();
        assert_eq!(plan.vms.len(), 2);
        assert_ne!(plan.assignment["a"], plan.assignment["b"]);
    }

    #[test]
    fn list_without_operators() {
        let f = Flowline::build(vec![TaskNode::model("m", "ANER")], vec![]).unwrap();
        let p = TaskProfile::default().with_weight("m", 1.0);
        let plan = baseline_list(&f, &p, &qcloud(), &PlanContext::default()).unwrap();
        assert_eq!(plan.assignment.len(), 1);
    }
}
