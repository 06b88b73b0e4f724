use serde::{Deserialize, Serialize};

use super::{CostError, VmType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    /// Least trimmed squares over the best-fitting half of the rows plus one.
    #[default]
    Trimmed,
    /// Ordinary least squares over every row.
    Ordinary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceResidual {
    pub name: String,
    pub quoted: f64,
    pub estimated: f64,
    /// |estimated - quoted| / quoted.
    pub relative_error: f64,
}

/// Linear hourly price in CPU cores and GPU cards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceFit {
    pub theta1: f64,
    pub theta2: f64,
    #[serde(default)]
    pub residuals: Vec<PriceResidual>,
    #[serde(default)]
    pub method: FitMethod,
    /// Rows the coefficients were fitted on.
    #[serde(default)]
    pub support: Vec<String>,
}

impl PriceFit {
    pub fn new(theta1: f64, theta2: f64) -> Self {
        PriceFit {
            theta1,
            theta2,
            residuals: Vec::new(),
            method: FitMethod::Ordinary,
            support: Vec::new(),
        }
    }

    pub fn price(&self, cpu: u32, gpu: u32) -> f64 {
        vm_price(cpu, gpu, self)
    }

    /// Per-row comparison of the fitted price with the quote.
    pub fn residuals_for(&self, catalog: &[VmType]) -> Vec<PriceResidual> {
        catalog
            .iter()
            .map(|vm| {
                let estimated = self.price(vm.cpu_cores, vm.gpu_cards);
                PriceResidual {
                    name: vm.name.clone(),
                    quoted: vm.unit_price,
                    estimated,
                    relative_error: (estimated - vm.unit_price).abs() / vm.unit_price,
                }
            })
            .collect()
    }
}

pub fn vm_price(cpu: u32, gpu: u32, fit: &PriceFit) -> f64 {
    fit.theta1 * cpu as f64 + fit.theta2 * gpu as f64
}

/// Non-negative least squares for `price ~ t1*cpu + t2*gpu` on a row subset.
fn nnls2(rows: &[(f64, f64, f64)]) -> Option<(f64, f64)> {
    let (mut sxx, mut sxy, mut syy, mut sxp, mut syp) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y, p) in rows {
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        sxp += x * p;
        syp += y * p;
    }
    let det = sxx * syy - sxy * sxy;
    let scale = (sxx * syy).max(f64::MIN_POSITIVE);
    if det.abs() <= 1e-12 * scale {
        return None;
    }
    let t1 = (sxp * syy - syp * sxy) / det;
    let t2 = (syp * sxx - sxp * sxy) / det;
    if t1 >= 0.0 && t2 >= 0.0 {
        return Some((t1, t2));
    }
    // Best boundary solution.
    let only1 = if sxx > 0.0 { (sxp / sxx).max(0.0) } else { 0.0 };
    let only2 = if syy > 0.0 { (syp / syy).max(0.0) } else { 0.0 };
    let sse = |a: f64, b: f64| {
        rows.iter()
            .map(|&(x, y, p)| (a * x + b * y - p).powi(2))
            .sum::<f64>()
    };
    if sse(only1, 0.0) <= sse(0.0, only2) {
        Some((only1, 0.0))
    } else {
        Some((0.0, only2))
    }
}

pub fn fit_price_linear(catalog: &[VmType]) -> Result<PriceFit, CostError> {
    fit_price_linear_with(catalog, FitMethod::default())
}

/// Fit hourly price coefficients to a catalog.
///
/// The trimmed fit keeps the `h = ceil((n + 3) / 2)` rows with the smallest
/// squared residuals, so a few rows quoted well above the linear trend (as is
/// common for CPU-heavy shapes) do not drag the coefficients.
pub fn fit_price_linear_with(catalog: &[VmType], method: FitMethod) -> Result<PriceFit, CostError> {
    if catalog.len() < 2 {
        return Err(CostError::Underdetermined {
            needed: 2,
            got: catalog.len(),
        });
    }
    let rows: Vec<(f64, f64, f64)> = catalog
        .iter()
        .map(|vm| (vm.cpu_cores as f64, vm.gpu_cards as f64, vm.unit_price))
        .collect();
    let all = nnls2(&rows).ok_or(CostError::RankDeficient)?;

    let n = rows.len();
    let h = ((n + 3).div_ceil(2)).min(n);
    let (theta, support): ((f64, f64), Vec<usize>) = match method {
        FitMethod::Ordinary => (all, (0..n).collect()),
        FitMethod::Trimmed if h == n => (all, (0..n).collect()),
        FitMethod::Trimmed => trimmed(&rows, h, all),
    };
    let mut fit = PriceFit {
        theta1: theta.0,
        theta2: theta.1,
        residuals: Vec::new(),
        method,
        support: support.iter().map(|&i| catalog[i].name.clone()).collect(),
    };
    fit.residuals = fit.residuals_for(catalog);
    Ok(fit)
}

/// Concentration steps started from every exact two-row fit and from the
/// full fit; returns the best h-subset fit found.
fn trimmed(rows: &[(f64, f64, f64)], h: usize, all: (f64, f64)) -> ((f64, f64), Vec<usize>) {
    let n = rows.len();
    let mut starts = vec![all];
    for i in 0..n {
        for j in i + 1..n {
            if let Some(t) = nnls2(&[rows[i], rows[j]]) {
                starts.push(t);
            }
        }
    }
    let subset_for = |t: (f64, f64)| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        let r = |i: usize| (t.0 * rows[i].0 + t.1 * rows[i].1 - rows[i].2).powi(2);
        idx.sort_by(|&a, &b| r(a).total_cmp(&r(b)).then(a.cmp(&b)));
        idx.truncate(h);
        idx.sort_unstable();
        idx
    };
    let objective = |t: (f64, f64), subset: &[usize]| -> f64 {
        subset
            .iter()
            .map(|&i| (t.0 * rows[i].0 + t.1 * rows[i].1 - rows[i].2).powi(2))
            .sum()
    };

    let mut best: Option<(f64, (f64, f64), Vec<usize>)> = None;
    for start in starts {
        let mut t = start;
        let mut subset = subset_for(t);
        for _ in 0..50 {
            let sub: Vec<_> = subset.iter().map(|&i| rows[i]).collect();
            let Some(next) = nnls2(&sub) else { break };
            t = next;
            let again = subset_for(t);
            if again == subset {
                break;
            }
            subset = again;
        }
        let sub: Vec<_> = subset.iter().map(|&i| rows[i]).collect();
        if nnls2(&sub).is_none() {
            continue;
        }
        let score = objective(t, &subset);
        let better = match &best {
            None => true,
            Some((s, _, _)) => score < *s - 1e-15,
        };
        if better {
            best = Some((score, t, subset));
        }
    }
    match best {
        Some((_, t, s)) => (t, s),
        None => (all, (0..n).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eq_four_examples() {
        let fit = PriceFit::new(0.0565, 0.3);
        assert!((vm_price(4, 1, &fit) - 0.526).abs() < 1e-12);
        assert!((vm_price(48, 4, &fit) - 3.912).abs() < 1e-12);
        assert_eq!(vm_price(0, 0, &fit), 0.0);
    }

    #[test]
    fn two_rows_are_solved_exactly() {
        let catalog = [VmType::new("a", 4, 1, 0.526), VmType::new("b", 8, 1, 0.752)];
        for method in [FitMethod::Trimmed, FitMethod::Ordinary] {
            let fit = fit_price_linear_with(&catalog, method).unwrap();
            assert!((fit.theta1 - 0.0565).abs() < 1e-12);
            assert!((fit.theta2 - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_catalogs() {
        assert!(matches!(
            fit_price_linear(&[VmType::new("a", 4, 1, 0.5)]),
            Err(CostError::Underdetermined { .. })
        ));
        let collinear = [VmType::new("a", 4, 1, 0.5), VmType::new("b", 8, 2, 1.0)];
        assert!(matches!(fit_price_linear(&collinear), Err(CostError::RankDeficient)));
    }

    #[test]
    fn trimmed_ignores_outliers() {
        let truth = PriceFit::new(0.05, 0.4);
        let mut catalog: Vec<VmType> = [(4, 1), (8, 1), (16, 2), (24, 2), (48, 4), (96, 8)]
            .iter()
            .map(|&(c, g)| VmType::new("r", c, g, truth.price(c, g)))
            .collect();
        catalog.push(VmType::new("outlier", 64, 1, 9.0));
        let fit = fit_price_linear(&catalog).unwrap();
        assert!((fit.theta1 - 0.05).abs() < 1e-9);
        assert!((fit.theta2 - 0.4).abs() < 1e-9);
        let ols = fit_price_linear_with(&catalog, FitMethod::Ordinary).unwrap();
        assert!((ols.theta1 - 0.05).abs() > 1e-3);
    }
}
