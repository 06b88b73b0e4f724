//! Compounding, procurement and greedy partitioning of a profiled flowline
//! onto priced VMs.

mod compound;
mod partition;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{
    cheapest_feasible, fit_price_makespan, monetary_cost, multisets_within, normalized_objectives,
    objective, optimal_unit_price, ranked_procurements, CostError, Demand, MakespanPriceFit,
    Observation, ProcureOptions, ProcurementPlan, VmType,
};
use crate::flowline::{apply_partition, makespan, partitioned_time, Flowline, FlowlineError, NetworkParams, TaskProfile};

pub use compound::{compound, Compound, Compounding};
pub use partition::{check_assignment, greedy_partition, refine_partition, uses_core, QualificationViolation};

#[derive(Debug, Error)]
pub enum SchedError {
    #[error(transparent)]
    Flowline(#[from] FlowlineError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("no vm has room left for `{unit}`")]
    NoCapacity { unit: String },
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("plan fails qualification: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Unqualified(Vec<QualificationViolation>),
    #[error("no procurement admits a partition of the flowline")]
    NoFeasiblePlan,
}

/// Everything besides the flowline that shapes predicted costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanContext {
    pub net: NetworkParams,
    pub corpus_size: u64,
    pub slice_size: u64,
    pub eta: f64,
}

impl Default for PlanContext {
    fn default() -> Self {
        PlanContext {
            net: NetworkParams::default(),
            corpus_size: 1,
            slice_size: 1,
            eta: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcurementItem {
    #[serde(rename = "type")]
    pub vm_type: String,
    pub count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    /// Per-slice makespan of the partitioned graph.
    pub makespan_s: f64,
    /// Time for the whole corpus.
    pub cost_com_s: f64,
    pub cost_mon: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub eta: f64,
}

/// A procurement plus a task assignment. VM indices are 1-based positions
/// in `vms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulePlan {
    pub procurement: Vec<ProcurementItem>,
    pub vms: Vec<VmType>,
    pub assignment: BTreeMap<String, usize>,
    pub predictions: Predictions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<MakespanPriceFit>,
}

impl SchedulePlan {
    /// Combined hourly price of every VM in the plan.
    pub fn unit_price(&self) -> f64 {
        self.vms.iter().map(|v| v.unit_price).sum()
    }

    /// Tasks on VM `vm` (1-based), in id order.
    pub fn tasks_on(&self, vm: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &v)| v == vm)
            .map(|(t, _)| t.as_str())
            .collect()
    }

    pub fn describe(&self) -> String {
        self.procurement
            .iter()
            .map(|i| format!("{} x{}", i.vm_type, i.count))
            .collect::<Vec<_>>()
            .join(" + ")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plans serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Assemble a plan from VMs and an assignment, computing predictions.
    pub fn build(
        flowline: &Flowline,
        profile: &TaskProfile,
        vms: Vec<VmType>,
        assignment: BTreeMap<String, usize>,
        ctx: &PlanContext,
    ) -> Result<Self, SchedError> {
        let violations = check_assignment(flowline, &vms, &assignment);
        if !violations.is_empty() {
            return Err(SchedError::Unqualified(violations));
        }
        let predictions = evaluate(flowline, profile, &vms, &assignment, ctx)?;
        Ok(SchedulePlan {
            procurement: group(&vms),
            vms,
            assignment,
            predictions,
            x0: None,
            fit: None,
        })
    }
}

fn group(vms: &[VmType]) -> Vec<ProcurementItem> {
    let mut items: Vec<ProcurementItem> = Vec::new();
    for vm in vms {
        match items.iter_mut().find(|i| i.vm_type == vm.name) {
            Some(i) => i.count += 1,
            None => items.push(ProcurementItem {
                vm_type: vm.name.clone(),
                count: 1,
            }),
        }
    }
    items
}

/// GPU cards and spare cores the flowline needs. Controllers need neither.
pub fn demand_of(flowline: &Flowline) -> Demand {
    let gpus = flowline.vertices.iter().filter(|v| v.is_gpu()).count() as u32;
    let cpus = flowline.vertices.iter().filter(|v| uses_core(v)).count() as u32;
    Demand { gpus, cpus }
}

pub fn check_qualification(plan: &SchedulePlan, flowline: &Flowline) -> Vec<QualificationViolation> {
    check_assignment(flowline, &plan.vms, &plan.assignment)
}

/// Predicted makespan, corpus time, money and objective of an assignment.
pub fn evaluate(
    flowline: &Flowline,
    profile: &TaskProfile,
    vms: &[VmType],
    assignment: &BTreeMap<String, usize>,
    ctx: &PlanContext,
) -> Result<Predictions, SchedError> {
    crate::cost::check_eta(ctx.eta)?;
    let graph = apply_partition(flowline, profile, assignment, ctx.net)?;
    let m = makespan(&graph)?;
    let com = partitioned_time(&graph, ctx.corpus_size, ctx.slice_size)?;
    let price: f64 = vms.iter().map(|v| v.unit_price).sum();
    let mon = monetary_cost(price, com);
    Ok(Predictions {
        makespan_s: m,
        cost_com_s: com,
        cost_mon: mon,
        j: objective(com, mon, ctx.eta),
        eta: ctx.eta,
    })
}

/// Re-evaluate an existing plan under a possibly different context.
pub fn evaluate_plan(
    plan: &SchedulePlan,
    flowline: &Flowline,
    profile: &TaskProfile,
    ctx: &PlanContext,
) -> Result<Predictions, SchedError> {
    let violations = check_qualification(plan, flowline);
    if !violations.is_empty() {
        return Err(SchedError::Unqualified(violations));
    }
    evaluate(flowline, profile, &plan.vms, &plan.assignment, ctx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleOptions {
    /// Use this price to makespan curve instead of fitting one from warm-up
    /// estimates.
    pub fit: Option<MakespanPriceFit>,
    /// Rounds of move/swap improvement after greedy partitioning; 0 keeps
    /// the greedy result as is.
    pub refine_rounds: usize,
}

impl Default for ScheduleOptions {
    fn default() -> Self {
        ScheduleOptions {
            fit: None,
            refine_rounds: 50,
        }
    }
}

impl ScheduleOptions {
    pub fn with_fit(fit: MakespanPriceFit) -> Self {
        ScheduleOptions {
            fit: Some(fit),
            ..Self::default()
        }
    }
}

/// Multiples of the cheapest feasible price searched during warm-up, tried in
/// order until the enumeration stays small enough.
const WARMUP_BOUNDS: [f64; 4] = [4.0, 3.0, 2.0, 1.5];
const WARMUP_VISITS: usize = 200_000;
const WARMUP_MAX: usize = 2_000;
/// The target price is capped at this multiple of the cheapest feasible price.
const PRICE_CAP: f64 = 4.0;

/// Longest path from each vertex to the exit, counting vertex weights and
/// the cost of cutting every edge on the way.
pub fn upward_rank(
    flowline: &Flowline,
    profile: &TaskProfile,
    net: NetworkParams,
) -> Result<BTreeMap<String, f64>, SchedError> {
    let order = flowline
        .topo_order()
        .ok_or_else(|| FlowlineError::Invalid(crate::flowline::validate(flowline)))?;
    let idx = flowline.index_of();
    let mut succs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); flowline.vertices.len()];
    for e in &flowline.edges {
        let cut = net.transfer(profile.payload(&e.from, &e.to));
        succs[idx[e.from.as_str()]].push((idx[e.to.as_str()], cut));
    }
    let mut rank = vec![0.0f64; flowline.vertices.len()];
    for &v in order.iter().rev() {
        let tail = succs[v].iter().map(|&(s, c)| c + rank[s]).fold(0.0, f64::max);
        rank[v] = profile.weight(&flowline.vertices[v])? + tail;
    }
    Ok(flowline
        .vertices
        .iter()
        .zip(rank)
        .map(|(v, r)| (v.id.clone(), r))
        .collect())
}

/// Reorder compounds so the one whose anchor lies on the longest remaining
/// path goes first. This is still a topological order of the anchors, and
/// heavy branches claim the large VMs before light ones.
pub fn rank_compounds(
    flowline: &Flowline,
    profile: &TaskProfile,
    net: NetworkParams,
    mut compounding: Compounding,
) -> Result<Compounding, SchedError> {
    let rank = upward_rank(flowline, profile, net)?;
    let key = |c: &Compound| rank[c.anchor.as_ref().unwrap_or(&c.members[0])];
    // Stable sort keeps the topological order on ties.
    compounding
        .compounds
        .sort_by(|a, b| key(b).total_cmp(&key(a)));
    Ok(compounding)
}

/// Greedy partition on `vms` (sorted by GPU count, largest first), 1-based.
fn partition_on(
    flowline: &Flowline,
    compounding: &Compounding,
    vms: &[VmType],
) -> Result<BTreeMap<String, usize>, SchedError> {
    Ok(greedy_partition(flowline, compounding, vms)?
        .into_iter()
        .map(|(t, v)| (t, v + 1))
        .collect())
}

/// Run the improvement pass on a 1-based assignment.
fn polish(
    flowline: &Flowline,
    profile: &TaskProfile,
    ctx: &PlanContext,
    compounding: &Compounding,
    vms: &[VmType],
    assignment: BTreeMap<String, usize>,
    rounds: usize,
) -> Result<BTreeMap<String, usize>, SchedError> {
    if rounds == 0 {
        return Ok(assignment);
    }
    let zero_based = assignment.into_iter().map(|(t, v)| (t, v - 1)).collect();
    Ok(refine_partition(flowline, profile, ctx.net, compounding, vms, zero_based, rounds)?
        .into_iter()
        .map(|(t, v)| (t, v + 1))
        .collect())
}

/// Price and per-slice makespan of every procurement up to a multiple of the
/// cheapest feasible price. Procurements that cannot host the flowline are
/// infeasible observations.
pub fn warmup_observations(
    flowline: &Flowline,
    profile: &TaskProfile,
    catalog: &[VmType],
    net: NetworkParams,
) -> Result<Vec<(Observation, Option<ProcurementPlan>)>, SchedError> {
    let demand = demand_of(flowline);
    let floor = cheapest_feasible(catalog, demand)?;
    let compounding = rank_compounds(flowline, profile, net, compound(flowline))?;
    let mut sets = None;
    for k in WARMUP_BOUNDS {
        match multisets_within(catalog, k * floor.unit_price, WARMUP_VISITS) {
            Ok(s) => {
                sets = Some(s);
                break;
            }
            Err(CostError::SearchLimit(_)) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    let sets = sets.ok_or(CostError::SearchLimit(WARMUP_VISITS))?;
    let mut out = Vec::new();
    for counts in sets.into_iter().take(WARMUP_MAX) {
        let plan = ProcurementPlan::from_counts(catalog, &counts);
        let mut obs = Observation::infeasible(plan.unit_price);
        obs.plan = Some(plan.describe());
        let feasible = if plan.satisfies(demand) {
            partition_on(flowline, &compounding, &plan.instances()).ok()
        } else {
            None
        };
        match feasible {
            Some(assignment) => {
                let graph = apply_partition(flowline, profile, &assignment, net)?;
                obs.makespan = Some(makespan(&graph)?);
                out.push((obs, Some(plan)));
            }
            None => out.push((obs, None)),
        }
    }
    Ok(out)
}

/// Compound, pick a target price from the price to makespan curve, procure
/// the closest feasible multiset and partition greedily.
pub fn schedule(
    flowline: &Flowline,
    profile: &TaskProfile,
    catalog: &[VmType],
    ctx: &PlanContext,
    options: &ScheduleOptions,
) -> Result<SchedulePlan, SchedError> {
    crate::cost::check_eta(ctx.eta)?;
    ctx.net.check()?;
    let demand = demand_of(flowline);

    if demand.gpus == 0 {
        let vm = catalog
            .iter()
            .filter(|v| v.cpu_headroom() >= demand.cpus)
            .min_by(|a, b| a.unit_price.total_cmp(&b.unit_price).then(a.name.cmp(&b.name)))
            .ok_or(CostError::Infeasible {
                gpus: 0,
                cpus: demand.cpus,
            })?
            .clone();
        let assignment = flowline.vertices.iter().map(|v| (v.id.clone(), 1)).collect();
        return SchedulePlan::build(flowline, profile, vec![vm], assignment, ctx);
    }

    let compounding = rank_compounds(flowline, profile, ctx.net, compound(flowline))?;
    let floor = cheapest_feasible(catalog, demand)?;

    let (fit, candidates) = match &options.fit {
        Some(fit) => (Ok(fit.clone()), Vec::new()),
        None => {
            let warm = warmup_observations(flowline, profile, catalog, ctx.net)?;
            let obs: Vec<Observation> = warm.iter().map(|(o, _)| o.clone()).collect();
            (fit_price_makespan(&obs), warm)
        }
    };

    let x0 = fit
        .as_ref()
        .ok()
        .and_then(|f| optimal_unit_price(f, ctx.eta).ok())
        .filter(|x| x.is_finite());

    let mut plan = match x0 {
        Some(x0) => {
            let target = x0.min(PRICE_CAP * floor.unit_price);
            let ranked = ranked_procurements(
                catalog,
                target,
                demand,
                ProcureOptions {
                    bound: Some((2.0 * target).max(floor.unit_price)),
                    ..ProcureOptions::default()
                },
            )?;
            let mut chosen = None;
            for p in ranked {
                let vms = p.instances();
                if let Ok(a) = partition_on(flowline, &compounding, &vms) {
                    chosen = Some((vms, a));
                    break;
                }
            }
            let (vms, a) = chosen.ok_or(SchedError::NoFeasiblePlan)?;
            let a = polish(flowline, profile, ctx, &compounding, &vms, a, options.refine_rounds)?;
            let mut plan = compact(flowline, profile, vms, a, ctx)?;
            plan.x0 = Some(x0);
            plan
        }
        None => {
            // No usable curve: pick the warm-up candidate with the lowest
            // normalized objective.
            let feasible: Vec<&ProcurementPlan> = candidates.iter().filter_map(|(_, p)| p.as_ref()).collect();
            let mut evaluated = Vec::new();
            for p in feasible {
                let vms = p.instances();
                let a = partition_on(flowline, &compounding, &vms)?;
                let pred = evaluate(flowline, profile, &vms, &a, ctx)?;
                evaluated.push((vms, a, pred));
            }
            if evaluated.is_empty() {
                return Err(SchedError::NoFeasiblePlan);
            }
            let points: Vec<(f64, f64)> = evaluated.iter().map(|(_, _, p)| (p.cost_com_s, p.cost_mon)).collect();
            let j = normalized_objectives(&points, ctx.eta);
            let best = (0..j.len())
                .min_by(|&a, &b| j[a].total_cmp(&j[b]).then(a.cmp(&b)))
                .expect("non-empty");
            let (vms, a, _) = evaluated.swap_remove(best);
            let a = polish(flowline, profile, ctx, &compounding, &vms, a, options.refine_rounds)?;
            compact(flowline, profile, vms, a, ctx)?
        }
    };
    plan.fit = fit.ok();
    Ok(plan)
}

/// Drop VMs that received no task and renumber the rest.
fn compact(
    flowline: &Flowline,
    profile: &TaskProfile,
    vms: Vec<VmType>,
    assignment: BTreeMap<String, usize>,
    ctx: &PlanContext,
) -> Result<SchedulePlan, SchedError> {
    let used: Vec<usize> = (1..=vms.len())
        .filter(|i| assignment.values().any(|v| v == i))
        .collect();
    let renumber: BTreeMap<usize, usize> = used.iter().enumerate().map(|(n, &old)| (old, n + 1)).collect();
    let kept = used.iter().map(|&i| vms[i - 1].clone()).collect();
    let assignment = assignment
        .into_iter()
        .map(|(t, v)| (t, renumber[&v]))
        .collect();
    SchedulePlan::build(flowline, profile, kept, assignment, ctx)
}
