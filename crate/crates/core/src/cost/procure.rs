use std::cmp::Reverse;

use serde::{Deserialize, Serialize};

use super::{CostError, VmType};

/// Resources a flowline needs: one GPU card per model and one spare core per
/// CPU-only operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Demand {
    pub gpus: u32,
    pub cpus: u32,
}

/// A multiset of VM types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcurementPlan {
    /// `(type, count)` with positive counts, most GPUs first.
    pub items: Vec<(VmType, u32)>,
    /// Combined hourly price.
    pub unit_price: f64,
}

impl ProcurementPlan {
    pub fn from_counts(catalog: &[VmType], counts: &[u32]) -> Self {
        let mut items: Vec<(VmType, u32)> = catalog
            .iter()
            .zip(counts)
            .filter(|(_, &n)| n > 0)
            .map(|(vm, &n)| (vm.clone(), n))
            .collect();
        items.sort_by(|a, b| {
            b.0.gpu_cards
                .cmp(&a.0.gpu_cards)
                .then(b.0.cpu_cores.cmp(&a.0.cpu_cores))
                .then(a.0.unit_price.total_cmp(&b.0.unit_price))
                .then(a.0.name.cmp(&b.0.name))
        });
        let unit_price = items
            .iter()
            .map(|(vm, n)| vm.unit_price * *n as f64)
            .sum();
        ProcurementPlan { items, unit_price }
    }

    /// One entry per purchased instance, most GPUs first.
    pub fn instances(&self) -> Vec<VmType> {
        self.items
            .iter()
            .flat_map(|(vm, n)| std::iter::repeat(vm.clone()).take(*n as usize))
            .collect()
    }

    pub fn instance_count(&self) -> u32 {
        self.items.iter().map(|(_, n)| n).sum()
    }

    pub fn total_gpus(&self) -> u32 {
        self.items.iter().map(|(vm, n)| vm.gpu_cards * n).sum()
    }

    pub fn total_headroom(&self) -> u32 {
        self.items.iter().map(|(vm, n)| vm.cpu_headroom() * n).sum()
    }

    pub fn max_gpu(&self) -> u32 {
        self.items.iter().map(|(vm, _)| vm.gpu_cards).max().unwrap_or(0)
    }

    pub fn satisfies(&self, demand: Demand) -> bool {
        self.instance_count() > 0
            && self.total_gpus() >= demand.gpus
            && self.total_headroom() >= demand.cpus
    }

    /// Short description such as `5XLARGE80 x1 + 2XLARGE40 x1`.
    pub fn describe(&self) -> String {
        self.items
            .iter()
            .map(|(vm, n)| format!("{} x{n}", vm.name))
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcureOptions {
    /// Upper price bound for the search; defaults to
    /// `max(2 * x0, cheapest feasible price)`.
    pub bound: Option<f64>,
    /// Abort when the enumeration visits more multisets than this.
    pub max_visits: usize,
}

impl Default for ProcureOptions {
    fn default() -> Self {
        ProcureOptions {
            bound: None,
            max_visits: 5_000_000,
        }
    }
}

const PRICE_EPS: f64 = 1e-6;

fn check_catalog(catalog: &[VmType]) -> Result<(), CostError> {
    if catalog.is_empty() {
        return Err(CostError::EmptyCatalog);
    }
    catalog.iter().try_for_each(VmType::check)
}

/// Instances of `vm` beyond which adding more cannot help cover a demand.
fn useful_count(vm: &VmType, gpus: u32, cpus: u32) -> u32 {
    let g = if vm.gpu_cards > 0 { gpus.div_ceil(vm.gpu_cards) } else { 0 };
    let c = if vm.cpu_headroom() > 0 { cpus.div_ceil(vm.cpu_headroom()) } else { 0 };
    g.max(c)
}

/// The cheapest multiset meeting the demand; ties prefer fewer instances.
pub fn cheapest_feasible(catalog: &[VmType], demand: Demand) -> Result<ProcurementPlan, CostError> {
    check_catalog(catalog)?;
    let infeasible = CostError::Infeasible {
        gpus: demand.gpus,
        cpus: demand.cpus,
    };
    if (demand.gpus > 0 && catalog.iter().all(|vm| vm.gpu_cards == 0))
        || (demand.cpus > 0 && catalog.iter().all(|vm| vm.cpu_headroom() == 0))
    {
        return Err(infeasible);
    }

    struct Search<'a> {
        catalog: &'a [VmType],
        best: Option<(f64, u32, Vec<u32>)>,
        counts: Vec<u32>,
    }
    impl Search<'_> {
        fn go(&mut self, i: usize, gpus: u32, cpus: u32, price: f64, n: u32) {
            if let Some((bp, bn, _)) = &self.best {
                if price > *bp + PRICE_EPS || (price > *bp - PRICE_EPS && n >= *bn) {
                    return;
                }
            }
            if gpus == 0 && cpus == 0 && n > 0 {
                self.best = Some((price, n, self.counts.clone()));
                return;
            }
            if i == self.catalog.len() {
                return;
            }
            let vm = &self.catalog[i];
            let max = useful_count(vm, gpus, cpus).max(u32::from(n == 0 && gpus == 0 && cpus == 0));
            for k in (0..=max).rev() {
                self.counts[i] = k;
                self.go(
                    i + 1,
                    gpus.saturating_sub(k * vm.gpu_cards),
                    cpus.saturating_sub(k * vm.cpu_headroom()),
                    price + k as f64 * vm.unit_price,
                    n + k,
                );
            }
            self.counts[i] = 0;
        }
    }
    let mut search = Search {
        catalog,
        best: None,
        counts: vec![0; catalog.len()],
    };
    search.go(0, demand.gpus, demand.cpus, 0.0, 0);
    search
        .best
        .map(|(_, _, counts)| ProcurementPlan::from_counts(catalog, &counts))
        .ok_or(infeasible)
}

/// Every feasible multiset priced within the search bound, ranked by
/// closeness to `x0`, then fewer instances, then the larger single GPU count.
pub fn ranked_procurements(
    catalog: &[VmType],
    x0: f64,
    demand: Demand,
    options: ProcureOptions,
) -> Result<Vec<ProcurementPlan>, CostError> {
    let floor = cheapest_feasible(catalog, demand)?;
    let bound = options
        .bound
        .unwrap_or_else(|| (2.0 * x0).max(floor.unit_price))
        + PRICE_EPS;

    let mut found: Vec<Vec<u32>> = Vec::new();
    let mut counts = vec![0u32; catalog.len()];
    let mut visits = 0usize;
    enumerate(catalog, 0, 0.0, bound, &mut counts, &mut visits, options.max_visits, &mut |c| {
        let plan_ok = {
            let gpus: u32 = catalog.iter().zip(c).map(|(vm, n)| vm.gpu_cards * n).sum();
            let cpus: u32 = catalog.iter().zip(c).map(|(vm, n)| vm.cpu_headroom() * n).sum();
            let n: u32 = c.iter().sum();
            n > 0 && gpus >= demand.gpus && cpus >= demand.cpus
        };
        if plan_ok {
            found.push(c.to_vec());
        }
    })?;

    let mut plans: Vec<ProcurementPlan> = found
        .iter()
        .map(|c| ProcurementPlan::from_counts(catalog, c))
        .collect();
    plans.sort_by_cached_key(|p| {
        (
            ((p.unit_price - x0).abs() / PRICE_EPS).round() as i64,
            p.instance_count(),
            Reverse(p.max_gpu()),
            p.describe(),
        )
    });
    Ok(plans)
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    catalog: &[VmType],
    i: usize,
    price: f64,
    bound: f64,
    counts: &mut Vec<u32>,
    visits: &mut usize,
    max_visits: usize,
    emit: &mut dyn FnMut(&[u32]),
) -> Result<(), CostError> {
    *visits += 1;
    if *visits > max_visits {
        return Err(CostError::SearchLimit(max_visits));
    }
    if i == catalog.len() {
        emit(counts);
        return Ok(());
    }
    let mut k = 0u32;
    loop {
        let p = price + k as f64 * catalog[i].unit_price;
        if p > bound {
            break;
        }
        counts[i] = k;
        enumerate(catalog, i + 1, p, bound, counts, visits, max_visits, emit)?;
        k += 1;
    }
    counts[i] = 0;
    Ok(())
}

/// Count vectors (aligned with `catalog`) of every non-empty multiset priced
/// at most `bound`, cheapest first.
pub fn multisets_within(
    catalog: &[VmType],
    bound: f64,
    max_visits: usize,
) -> Result<Vec<Vec<u32>>, CostError> {
    check_catalog(catalog)?;
    let mut found = Vec::new();
    let mut counts = vec![0u32; catalog.len()];
    let mut visits = 0usize;
    enumerate(catalog, 0, 0.0, bound + PRICE_EPS, &mut counts, &mut visits, max_visits, &mut |c| {
        if c.iter().any(|&n| n > 0) {
            found.push(c.to_vec());
        }
    })?;
    let price = |c: &Vec<u32>| -> f64 {
        catalog.iter().zip(c).map(|(vm, n)| vm.unit_price * *n as f64).sum()
    };
    found.sort_by(|a, b| price(a).total_cmp(&price(b)).then_with(|| b.cmp(a)));
    Ok(found)
}

/// The multiset whose price is closest to `x0`.
pub fn procure(catalog: &[VmType], x0: f64, demand: Demand) -> Result<ProcurementPlan, CostError> {
    ranked_procurements(catalog, x0, demand, ProcureOptions::default())?
        .into_iter()
        .next()
        .ok_or(CostError::Infeasible {
            gpus: demand.gpus,
            cpus: demand.cpus,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qcloud() -> Vec<VmType> {
        vec![
            VmType::new("2XLARGE40", 10, 1, 11.98),
            VmType::new("5XLARGE80", 20, 2, 23.96),
            VmType::new("10XLARGE160", 40, 4, 47.92),
            VmType::new("20XLARGE320", 80, 8, 95.84),
        ]
    }

    #[test]
    fn plan_two_wins_the_tie() {
        let plan = procure(&qcloud(), 25.08, Demand { gpus: 3, cpus: 0 }).unwrap();
        assert_eq!(plan.describe(), "5XLARGE80 x1 + 2XLARGE40 x1");
        assert!((plan.unit_price - 35.94).abs() < 1e-9);
    }

    #[test]
    fn cpu_only_demand_buys_the_cheapest_instance() {
        let plan = procure(&qcloud(), 0.0, Demand { gpus: 0, cpus: 1 }).unwrap();
        assert_eq!(plan.describe(), "2XLARGE40 x1");
    }

    #[test]
    fn closest_feasible_price() {
        let catalog = vec![VmType::new("one", 4, 1, 10.0), VmType::new("two", 8, 2, 19.0)];
        let plan = procure(&catalog, 25.0, Demand { gpus: 2, cpus: 0 }).unwrap();
        assert_eq!(plan.describe(), "two x1 + one x1");
        assert_eq!(plan.unit_price, 29.0);
    }

    #[test]
    fn infeasible_demand() {
        let catalog = vec![VmType::new("cpu", 4, 0, 1.0)];
        assert!(matches!(
            procure(&catalog, 5.0, Demand { gpus: 1, cpus: 0 }),
            Err(CostError::Infeasible { .. })
        ));
    }

    #[test]
    fn cheapest_floor() {
        let plan = cheapest_feasible(&qcloud(), Demand { gpus: 3, cpus: 6 }).unwrap();
        assert!((plan.unit_price - 35.94).abs() < 1e-9);
        assert_eq!(plan.instance_count(), 2);
    }
}
