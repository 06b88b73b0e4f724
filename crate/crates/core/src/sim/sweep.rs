use serde::{Deserialize, Serialize};

use super::{baseline_list, baseline_random, simulate, SimConfig, SimError};
use crate::cost::{normalized_objectives, objective, VmType};
use crate::flowline::{Flowline, TaskProfile};
use crate::scheduler::{schedule, PlanContext, ScheduleOptions, SchedulePlan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub sim: SimConfig,
    /// Seed of the random baseline.
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            sim: SimConfig::default(),
            seed: 0,
        }
    }
}

/// One simulated trade-off point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eta: f64,
    pub scheduler: String,
    pub plan: String,
    pub unit_price: f64,
    pub makespan: f64,
    pub total_time: f64,
    pub cost: f64,
    #[serde(rename = "J")]
    pub j: f64,
    /// Objective after min-max normalizing both costs over the rows of the
    /// same eta.
    #[serde(rename = "J_norm")]
    pub j_norm: f64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "eta,scheduler,plan,unit_price,makespan,total_time,cost,J,J_norm";

    pub fn csv(&self) -> String {
        format!(
            "{},{},\"{}\",{},{},{},{},{},{}",
            self.eta, self.scheduler, self.plan, self.unit_price, self.makespan, self.total_time, self.cost, self.j, self.j_norm
        )
    }
}

fn context(config: &SweepConfig, eta: f64) -> PlanContext {
    PlanContext {
        net: config.sim.net(),
        corpus_size: config.sim.corpus_size,
        slice_size: config.sim.slice_size,
        eta,
    }
}

/// Schedule with the heuristic and both baselines for every eta, simulate
/// each plan and report the resulting time and money.
pub fn sweep_eta(
    flowline: &Flowline,
    profile: &TaskProfile,
    catalog: &[VmType],
    etas: &[f64],
    config: &SweepConfig,
) -> Result<Vec<SweepRow>, SimError> {
    if etas.is_empty() {
        return Err(SimError::Config("empty eta list".into()));
    }
    let mut rows = Vec::with_capacity(3 * etas.len());
    for &eta in etas {
        let ctx = context(config, eta);
        let plans: [(&str, SchedulePlan); 3] = [
            ("heuristic", schedule(flowline, profile, catalog, &ctx, &ScheduleOptions::default())?),
            ("random", baseline_random(flowline, profile, catalog, &ctx, config.seed)?),
            ("list", baseline_list(flowline, profile, catalog, &ctx)?),
        ];
        let mut cell = Vec::new();
        for (name, plan) in plans {
            let r = simulate(&plan, flowline, profile, &config.sim)?;
            cell.push(SweepRow {
                eta,
                scheduler: name.to_string(),
                plan: plan.describe(),
                unit_price: plan.unit_price(),
                makespan: plan.predictions.makespan_s,
                total_time: r.total_time,
                cost: r.monetary_cost,
                j: objective(r.total_time, r.monetary_cost, eta),
                j_norm: 0.0,
            });
        }
        let points: Vec<(f64, f64)> = cell.iter().map(|r| (r.total_time, r.cost)).collect();
        for (row, j) in cell.iter_mut().zip(normalized_objectives(&points, eta)) {
            row.j_norm = j;
        }
        rows.extend(cell);
    }
    Ok(rows)
}

/// Normalized objectives of the heuristic, the list baseline and a batch of
/// random baselines for one flowline and eta. Both costs are min-max scaled
/// over the whole batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityCell {
    pub eta: f64,
    pub heuristic: f64,
    pub list: f64,
    pub random: Vec<f64>,
}

impl QualityCell {
    pub fn random_median(&self) -> f64 {
        let mut v = self.random.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n == 0 {
            return f64::NAN;
        }
        if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        }
    }
}

pub fn quality_cell(
    flowline: &Flowline,
    profile: &TaskProfile,
    catalog: &[VmType],
    ctx: &PlanContext,
    random_plans: usize,
    seed: u64,
) -> Result<QualityCell, SimError> {
    let mut points = vec![
        schedule(flowline, profile, catalog, ctx, &ScheduleOptions::default())?.predictions,
        baseline_list(flowline, profile, catalog, ctx)?.predictions,
    ];
    for k in 0..random_plans as u64 {
        points.push(baseline_random(flowline, profile, catalog, ctx, seed.wrapping_add(k))?.predictions);
    }
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.cost_com_s, p.cost_mon)).collect();
    let j = normalized_objectives(&pairs, ctx.eta);
    Ok(QualityCell {
        eta: ctx.eta,
        heuristic: j[0],
        list: j[1],
        random: j[2..].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{example_flowline, example_profile, qcloud, synthetic_flowline};
    use crate::flowline::{Edge, TaskNode};

    #[test]
    fn three_rows_per_eta() {
        let (f, p) = synthetic_flowline(3, 6, 1);
        let rows = sweep_eta(&f, &p, &qcloud(), &[0.2, 0.5, 0.8], &SweepConfig::default()).unwrap();
        assert_eq!(rows.len(), 9);
        let rows = sweep_eta(&example_flowline(), &example_profile(), &qcloud(), &[0.5], &SweepConfig::default()).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(sweep_eta(&f, &p, &qcloud(), &[], &SweepConfig::default()).is_err());
    }

    #[test]
    fn cpu_only_collapses() {
        let ids = ["a", "b", "c"];
        let f = Flowline::build(
            ids.iter().map(|i| TaskNode::operator(*i, "merge")).collect(),
            vec![Edge::new("a", "b"), Edge::new("b", "c")],
        )
        .unwrap();
        let p = TaskProfile::default()
            .with_weight("a", 0.2)
            .with_weight("b", 0.3)
            .with_weight("c", 0.1)
            .with_payload("a", "b", 1e6);
        let rows = sweep_eta(&f, &p, &qcloud(), &[0.5], &SweepConfig::default()).unwrap();
        assert!(rows.iter().all(|r| !r.plan.contains('+') && r.plan.ends_with("x1")));
        assert!(rows.windows(2).all(|w| w[0].total_time == w[1].total_time));
    }

    #[test]
    fn median() {
        let c = QualityCell {
            eta: 0.5,
            heuristic: 0.0,
            list: 0.0,
            random: vec![3.0, 1.0, 2.0, 10.0],
        };
        assert_eq!(c.random_median(), 2.5);
    }
}
