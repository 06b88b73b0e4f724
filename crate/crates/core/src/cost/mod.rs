//! Instance pricing, the price to makespan curve, procurement and the
//! time/money objective.

mod curve;
mod price;
mod procure;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use curve::{
    fit_price_makespan, fit_price_makespan_with, optimal_unit_price, pareto_frontier,
    CurveFitOptions, MakespanPriceFit, Observation,
};
pub use price::{fit_price_linear, fit_price_linear_with, vm_price, FitMethod, PriceFit, PriceResidual};
pub use procure::{
    cheapest_feasible, multisets_within, procure, ranked_procurements, Demand, ProcurementPlan, ProcureOptions,
};

#[derive(Debug, Error)]
pub enum CostError {
    #[error("at least {needed} catalog rows are required, got {got}")]
    Underdetermined { needed: usize, got: usize },
    #[error("rank-deficient design: cpu and gpu counts are collinear")]
    RankDeficient,
    #[error("at least 3 frontier points are required, got {0}")]
    FewFrontierPoints(usize),
    #[error("curve fit diverged: {0}")]
    Divergent(String),
    #[error("eta out of range: {0} (expected 0 <= eta < 1)")]
    EtaOutOfRange(f64),
    #[error("empty catalog")]
    EmptyCatalog,
    #[error("invalid vm type `{name}`: {reason}")]
    BadVmType { name: String, reason: String },
    #[error("infeasible demand: {gpus} gpus and {cpus} cpu cores cannot be met by the catalog")]
    Infeasible { gpus: u32, cpus: u32 },
    #[error("procurement search exceeded {0} candidates")]
    SearchLimit(usize),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

/// A priced machine shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmType {
    pub name: String,
    pub cpu_cores: u32,
    pub gpu_cards: u32,
    /// Currency per hour.
    pub unit_price: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub currency: String,
}

impl VmType {
    pub fn new(name: &str, cpu_cores: u32, gpu_cards: u32, unit_price: f64) -> Self {
        VmType {
            name: name.to_string(),
            cpu_cores,
            gpu_cards,
            unit_price,
            currency: String::new(),
        }
    }

    /// Cores left for CPU-only tasks once each GPU keeps one core for loading.
    pub fn cpu_headroom(&self) -> u32 {
        self.cpu_cores.saturating_sub(self.gpu_cards)
    }

    pub fn check(&self) -> Result<(), CostError> {
        let bad = |reason: &str| {
            Err(CostError::BadVmType {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if self.cpu_cores < 1 {
            return bad("cpu_cores must be at least 1");
        }
        if !(self.unit_price > 0.0) || !self.unit_price.is_finite() {
            return bad("unit_price must be positive");
        }
        Ok(())
    }
}

/// Parse and check a catalog JSON array.
pub fn load_catalog(text: &str) -> Result<Vec<VmType>, CostError> {
    let catalog: Vec<VmType> = serde_json::from_str(text)?;
    if catalog.is_empty() {
        return Err(CostError::EmptyCatalog);
    }
    for vm in &catalog {
        vm.check()?;
    }
    Ok(catalog)
}

pub fn check_eta(eta: f64) -> Result<f64, CostError> {
    if (0.0..1.0).contains(&eta) {
        Ok(eta)
    } else {
        Err(CostError::EtaOutOfRange(eta))
    }
}

/// Weighted aggregation of processing time and money.
pub fn objective(cost_com: f64, cost_mon: f64, eta: f64) -> f64 {
    eta * cost_com + (1.0 - eta) * cost_mon
}

/// Money spent running VMs with a combined hourly price for `seconds`.
pub fn monetary_cost(unit_price_per_hour: f64, seconds: f64) -> f64 {
    unit_price_per_hour * seconds / 3600.0
}

/// Objective over a candidate set after min-max normalizing each cost
/// coordinate across the set. A coordinate that is constant across the set
/// normalizes to 0.
pub fn normalized_objectives(candidates: &[(f64, f64)], eta: f64) -> Vec<f64> {
    let scale = |values: Vec<f64>| -> Vec<f64> {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        values
            .into_iter()
            .map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 })
            .collect()
    };
    let com = scale(candidates.iter().map(|c| c.0).collect());
    let mon = scale(candidates.iter().map(|c| c.1).collect());
    com.into_iter()
        .zip(mon)
        .map(|(c, m)| objective(c, m, eta))
        .collect()
}
