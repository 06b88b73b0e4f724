use serde::{Deserialize, Serialize};

use super::{check_eta, CostError};

/// One measured (or estimated) run: hourly price and makespan. A missing or
/// non-finite makespan marks an infeasible procurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub price: f64,
    pub makespan: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
}

impl Observation {
    pub fn new(price: f64, makespan: f64) -> Self {
        Observation {
            price,
            makespan: Some(makespan),
            plan: None,
        }
    }

    pub fn infeasible(price: f64) -> Self {
        Observation {
            price,
            makespan: None,
            plan: None,
        }
    }

    fn feasible_makespan(&self) -> Option<f64> {
        self.makespan.filter(|m| m.is_finite())
    }
}

/// `g(x) = a + b / (x - c)` fitted on the frontier of observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MakespanPriceFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    #[serde(default)]
    pub frontier: Vec<(f64, f64)>,
    /// Fitted minus observed makespan per frontier point.
    #[serde(default)]
    pub residuals: Vec<f64>,
}

impl MakespanPriceFit {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        MakespanPriceFit {
            a,
            b,
            c,
            frontier: Vec::new(),
            residuals: Vec::new(),
        }
    }

    pub fn eval(&self, price: f64) -> f64 {
        self.a + self.b / (price - self.c)
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CurveFitOptions {
    /// Pin the infeasibility threshold instead of deriving or fitting it.
    pub c: Option<f64>,
    /// Ignore infeasible observations and fit all three parameters.
    pub free: bool,
}

/// Cheapest-first boundary of the feasible observations: the lowest makespan
/// at each price, kept only if no cheaper point is strictly faster.
pub fn pareto_frontier(observations: &[Observation]) -> Vec<(f64, f64)> {
    let mut points: Vec<(f64, f64)> = observations
        .iter()
        .filter_map(|o| o.feasible_makespan().map(|m| (o.price, m)))
        .filter(|(p, _)| p.is_finite())
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    points.dedup_by(|later, first| later.0 == first.0);
    let mut frontier = Vec::new();
    let mut best = f64::INFINITY;
    for (p, m) in points {
        if m <= best {
            frontier.push((p, m));
            best = m;
        }
    }
    frontier
}

pub fn fit_price_makespan(observations: &[Observation]) -> Result<MakespanPriceFit, CostError> {
    fit_price_makespan_with(observations, CurveFitOptions::default())
}

/// Fit `g` on the Pareto frontier.
///
/// When infeasible observations exist below the cheapest feasible price, the
/// most expensive of them fixes `c` and `(a, b)` follow from linear least
/// squares. Otherwise all three parameters are fitted by damped least squares
/// started from a sweep of `c` over `(0, min price)`.
pub fn fit_price_makespan_with(
    observations: &[Observation],
    options: CurveFitOptions,
) -> Result<MakespanPriceFit, CostError> {
    let frontier = pareto_frontier(observations);
    if frontier.len() < 3 {
        return Err(CostError::FewFrontierPoints(frontier.len()));
    }
    let xmin = frontier[0].0;
    let pinned = options.c.or_else(|| {
        if options.free {
            return None;
        }
        observations
            .iter()
            .filter(|o| o.feasible_makespan().is_none() && o.price < xmin && o.price > 0.0)
            .map(|o| o.price)
            .reduce(f64::max)
    });

    let (a, b, c) = match pinned {
        Some(c) => {
            if !(c > 0.0 && c < xmin) {
                return Err(CostError::Divergent(format!(
                    "c = {c} must lie in (0, {xmin})"
                )));
            }
            let (a, b, _) = linear_ab(&frontier, c)
                .ok_or_else(|| CostError::Divergent("singular linear system".into()))?;
            (a, b, c)
        }
        None => multistart(&frontier)?,
    };
    if !(a > 0.0 && b > 0.0 && c > 0.0) {
        return Err(CostError::Divergent(format!(
            "fitted (a, b, c) = ({a:.6}, {b:.6}, {c:.6}) is not positive"
        )));
    }
    let mut fit = MakespanPriceFit::new(a, b, c);
    fit.residuals = frontier.iter().map(|&(x, y)| fit.eval(x) - y).collect();
    fit.frontier = frontier;
    Ok(fit)
}

/// Least squares `(a, b)` for a fixed `c`, with the residual sum of squares.
fn linear_ab(points: &[(f64, f64)], c: f64) -> Option<(f64, f64, f64)> {
    let n = points.len() as f64;
    let (mut su, mut suu, mut sy, mut suy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let u = 1.0 / (x - c);
        su += u;
        suu += u * u;
        sy += y;
        suy += u * y;
    }
    let det = n * suu - su * su;
    if det.abs() <= 1e-300 {
        return None;
    }
    let b = (n * suy - su * sy) / det;
    let a = (sy - b * su) / n;
    let sse = sse(points, a, b, c);
    Some((a, b, sse))
}

fn sse(points: &[(f64, f64)], a: f64, b: f64, c: f64) -> f64 {
    points
        .iter()
        .map(|&(x, y)| (a + b / (x - c) - y).powi(2))
        .sum()
}

fn multistart(points: &[(f64, f64)]) -> Result<(f64, f64, f64), CostError> {
    const STARTS: usize = 64;
    let xmin = points[0].0;
    let mut best: Option<(f64, (f64, f64, f64))> = None;
    for k in 1..=STARTS {
        // Denser sampling near xmin where the curve bends.
        let t = k as f64 / (STARTS + 1) as f64;
        let c0 = xmin * (1.0 - (1.0 - t).powi(2));
        let Some((a0, b0, _)) = linear_ab(points, c0) else {
            continue;
        };
        let (p, s) = levenberg_marquardt(points, (a0, b0, c0), xmin);
        if p.0 > 0.0 && p.1 > 0.0 && p.2 > 0.0 && s.is_finite() {
            if best.as_ref().is_none_or(|(bs, _)| s < *bs) {
                best = Some((s, p));
            }
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| CostError::Divergent("no start converged to positive parameters".into()))
}

fn levenberg_marquardt(
    points: &[(f64, f64)],
    start: (f64, f64, f64),
    xmin: f64,
) -> ((f64, f64, f64), f64) {
    let mut p = [start.0, start.1, start.2];
    let mut cost = sse(points, p[0], p[1], p[2]);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        if cost < 1e-30 {
            break;
        }
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for &(x, y) in points {
            let d = x - p[2];
            let r = p[0] + p[1] / d - y;
            let j = [1.0, 1.0 / d, p[1] / (d * d)];
            for a in 0..3 {
                jtr[a] += j[a] * r;
                for b in 0..3 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut m = jtj;
            for (d, row) in m.iter_mut().enumerate() {
                row[d] += lambda * jtj[d][d].max(1e-12);
            }
            let Some(step) = solve3(m, [-jtr[0], -jtr[1], -jtr[2]]) else {
                lambda *= 10.0;
                continue;
            };
            let cand = [p[0] + step[0], p[1] + step[1], p[2] + step[2]];
            if cand[2] >= xmin || !cand.iter().all(|v| v.is_finite()) {
                lambda *= 10.0;
                continue;
            }
            let c = sse(points, cand[0], cand[1], cand[2]);
            if c < cost {
                let rel = (cost - c) / cost.max(1e-300);
                p = cand;
                cost = c;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                if rel < 1e-14 {
                    return ((p[0], p[1], p[2]), cost);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    ((p[0], p[1], p[2]), cost)
}

fn solve3(mut m: [[f64; 3]; 3], mut v: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        v.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            v[row] -= f * v[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (v[row] - s) / m[row][row];
    }
    Some(x)
}

/// Hourly price minimizing the weighted objective along `g`:
/// `x0 = sqrt((b / a) * eta / (1 - eta)) + c`.
pub fn optimal_unit_price(fit: &MakespanPriceFit, eta: f64) -> Result<f64, CostError> {
    check_eta(eta)?;
    Ok(((fit.b / fit.a) * (eta / (1.0 - eta))).sqrt() + fit.c)
}
