use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Compounding, SchedError};
use crate::cost::VmType;
use crate::flowline::{apply_partition, makespan, Flowline, NetworkParams, TaskNode, TaskProfile};

/// Whether a task occupies a spare CPU core. Start and end controllers are
/// bookkeeping vertices and take no core.
pub fn uses_core(node: &TaskNode) -> bool {
    !node.is_gpu() && !node.is_controller()
}

/// Place compounds, then orphans, each on the VM already holding most of its
/// neighbours among those with room left. Ties go to the lowest VM index.
///
/// `vms` should be sorted by GPU count, largest first. The result maps task
/// ids to 0-based VM indices.
pub fn greedy_partition(
    flowline: &Flowline,
    compounding: &Compounding,
    vms: &[VmType],
) -> Result<BTreeMap<String, usize>, SchedError> {
    let mut gpu_left: Vec<u32> = vms.iter().map(|v| v.gpu_cards).collect();
    let mut cpu_left: Vec<u32> = vms.iter().map(|v| v.cpu_headroom()).collect();
    let mut groups: Vec<HashSet<String>> = vec![HashSet::new(); vms.len()];
    let mut assignment = BTreeMap::new();

    let neighbours = |members: &[String]| -> HashSet<String> {
        let inside: HashSet<&str> = members.iter().map(String::as_str).collect();
        let mut out = HashSet::new();
        for e in &flowline.edges {
            if inside.contains(e.from.as_str()) && !inside.contains(e.to.as_str()) {
                out.insert(e.to.clone());
            }
            if inside.contains(e.to.as_str()) && !inside.contains(e.from.as_str()) {
                out.insert(e.from.clone());
            }
        }
        out
    };

    let units = compounding
        .compounds
        .iter()
        .map(|c| (c.anchor.clone().unwrap_or_else(|| c.members[0].clone()), c.members.clone()))
        .chain(
            compounding
                .orphans
                .iter()
                .map(|o| (o.clone(), vec![o.clone()])),
        );

    for (name, members) in units {
        let mut gpus = 0u32;
        let mut cpus = 0u32;
        for m in &members {
            let node = flowline
                .vertex(m)
                .ok_or_else(|| SchedError::UnknownTask(m.clone()))?;
            if node.is_gpu() {
                gpus += 1;
            } else if uses_core(node) {
                cpus += 1;
            }
        }
        let near = neighbours(&members);
        let mut best: Option<(usize, usize)> = None;
        for n in 0..vms.len() {
            if gpu_left[n] < gpus || cpu_left[n] < cpus {
                continue;
            }
            let overlap = groups[n].iter().filter(|t| near.contains(*t)).count();
            if best.is_none_or(|(_, o)| overlap > o) {
                best = Some((n, overlap));
            }
        }
        let Some((n, _)) = best else {
            return Err(SchedError::NoCapacity { unit: name });
        };
        gpu_left[n] -= gpus;
        cpu_left[n] -= cpus;
        for m in members {
            groups[n].insert(m.clone());
            assignment.insert(m, n);
        }
    }
    Ok(assignment)
}

/// Placement units with their GPU and core needs.
fn units(flowline: &Flowline, compounding: &Compounding) -> Result<Vec<(Vec<String>, u32, u32)>, SchedError> {
    let mut out = Vec::new();
    let groups = compounding
        .compounds
        .iter()
        .map(|c| c.members.clone())
        .chain(compounding.orphans.iter().map(|o| vec![o.clone()]));
    for members in groups {
        let (mut gpus, mut cpus) = (0, 0);
        for m in &members {
            let node = flowline
                .vertex(m)
                .ok_or_else(|| SchedError::UnknownTask(m.clone()))?;
            if node.is_gpu() {
                gpus += 1;
            } else if uses_core(node) {
                cpus += 1;
            }
        }
        out.push((members, gpus, cpus));
    }
    Ok(out)
}

/// Improve a partition by moving single units to another VM or swapping two
/// units between VMs, taking the best strict makespan gain each round.
/// Compounds stay whole and capacities stay respected. Indices are 0-based.
pub fn refine_partition(
    flowline: &Flowline,
    profile: &TaskProfile,
    net: NetworkParams,
    compounding: &Compounding,
    vms: &[VmType],
    assignment: BTreeMap<String, usize>,
    max_rounds: usize,
) -> Result<BTreeMap<String, usize>, SchedError> {
    let units = units(flowline, compounding)?;
    let mut at: Vec<usize> = units.iter().map(|(m, _, _)| assignment[&m[0]]).collect();
    let score = |at: &[usize]| -> Result<f64, SchedError> {
        let a: BTreeMap<String, usize> = units
            .iter()
            .zip(at)
            .flat_map(|((m, _, _), &vm)| m.iter().map(move |t| (t.clone(), vm)))
            .collect();
        Ok(makespan(&apply_partition(flowline, profile, &a, net)?)?)
    };
    let fits = |at: &[usize]| -> bool {
        let mut g = vec![0u32; vms.len()];
        let mut c = vec![0u32; vms.len()];
        for ((_, ug, uc), &vm) in units.iter().zip(at) {
            g[vm] += ug;
            c[vm] += uc;
        }
        vms.iter()
            .enumerate()
            .all(|(i, vm)| g[i] <= vm.gpu_cards && c[i] <= vm.cpu_headroom())
    };

    let mut best = score(&at)?;
    for _ in 0..max_rounds {
        let mut improved: Option<(Vec<usize>, f64)> = None;
        let consider = |cand: Vec<usize>, improved: &mut Option<(Vec<usize>, f64)>| -> Result<(), SchedError> {
            if !fits(&cand) {
                return Ok(());
            }
            let m = score(&cand)?;
            let bar = improved.as_ref().map_or(best, |(_, s)| *s);
            if m < bar - 1e-12 {
                *improved = Some((cand, m));
            }
            Ok(())
        };
        for u in 0..units.len() {
            for vm in 0..vms.len() {
                if vm != at[u] {
                    let mut cand = at.clone();
                    cand[u] = vm;
                    consider(cand, &mut improved)?;
                }
            }
            for w in u + 1..units.len() {
                if at[w] != at[u] {
                    let mut cand = at.clone();
                    cand.swap(u, w);
                    consider(cand, &mut improved)?;
                }
            }
        }
        match improved {
            Some((cand, m)) => {
                at = cand;
                best = m;
            }
            None => break,
        }
    }
    Ok(units
        .iter()
        .zip(&at)
        .flat_map(|((m, _, _), &vm)| m.iter().map(move |t| (t.clone(), vm)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum QualificationViolation {
    GpuOvercommit { vm: usize, used: u32, capacity: u32 },
    CpuOvercommit { vm: usize, used: u32, capacity: u32 },
    UncoveredTask { task: String },
    UnknownTask { task: String },
    UnknownVm { task: String, vm: usize },
}

impl std::fmt::Display for QualificationViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QualificationViolation::GpuOvercommit { vm, used, capacity } => {
                write!(f, "vm {vm} hosts {used} gpu tasks but has {capacity} gpus")
            }
            QualificationViolation::CpuOvercommit { vm, used, capacity } => {
                write!(f, "vm {vm} hosts {used} cpu tasks but has {capacity} spare cores")
            }
            QualificationViolation::UncoveredTask { task } => write!(f, "uncovered task `{task}`"),
            QualificationViolation::UnknownTask { task } => write!(f, "unknown task `{task}`"),
            QualificationViolation::UnknownVm { task, vm } => {
                write!(f, "task `{task}` assigned to missing vm {vm}")
            }
        }
    }
}

/// Per-VM resource feasibility and full coverage. `assignment` holds
/// 1-based VM indices into `vms`.
pub fn check_assignment(
    flowline: &Flowline,
    vms: &[VmType],
    assignment: &BTreeMap<String, usize>,
) -> Vec<QualificationViolation> {
    let mut out = Vec::new();
    let mut gpu_used = vec![0u32; vms.len()];
    let mut cpu_used = vec![0u32; vms.len()];
    for v in &flowline.vertices {
        match assignment.get(&v.id) {
            None => out.push(QualificationViolation::UncoveredTask { task: v.id.clone() }),
            Some(&vm) if vm == 0 || vm > vms.len() => out.push(QualificationViolation::UnknownVm {
                task: v.id.clone(),
                vm,
            }),
            Some(&vm) => {
                if v.is_gpu() {
                    gpu_used[vm - 1] += 1;
                } else if uses_core(v) {
                    cpu_used[vm - 1] += 1;
                }
            }
        }
    }
    for task in assignment.keys() {
        if flowline.vertex(task).is_none() {
            out.push(QualificationViolation::UnknownTask { task: task.clone() });
        }
    }
    for (i, vm) in vms.iter().enumerate() {
        if gpu_used[i] > vm.gpu_cards {
            out.push(QualificationViolation::GpuOvercommit {
                vm: i + 1,
                used: gpu_used[i],
                capacity: vm.gpu_cards,
            });
        }
        if cpu_used[i] > vm.cpu_headroom() {
            out.push(QualificationViolation::CpuOvercommit {
                vm: i + 1,
                used: cpu_used[i],
                capacity: vm.cpu_headroom(),
            });
        }
    }
    out
}
