use imex_peer::integrator::{integrate, IntegrationConfig};
use imex_peer::problems::SplitProblem;
use imex_peer::tableau::PeerTableau;

use crate::reference::Reference;
use crate::{scaled_error, HarnessError};

/// Newton tolerance used for prescribed-step runs.
pub const STUDY_NEWTON_TOL: f64 = 1e-12;

/// Step sequence averaging `dt` over `span`: `dt_1 = 2 dt / (1 + σ)`, then
/// alternately `×σ` and `×1/σ`. Returns `(dt_0, steps)` where `dt_0 = σ dt_1`
/// is the step of the initial block.
pub fn sigma_pattern(dt: f64, sigma: f64, span: f64) -> Result<(f64, Vec<f64>), HarnessError> {
    if !(dt > 0.0 && sigma > 0.0 && span > 0.0) {
        return Err(HarnessError::Config(format!("need dt, σ, span > 0 (got {dt}, {sigma}, {span})")));
    }
    let n = (span / dt).round() as usize;
    if n == 0 || ((n as f64) * dt - span).abs() > 1e-9 * span {
        return Err(HarnessError::Config(format!("dt = {dt} does not divide the interval {span}")));
    }
    if sigma != 1.0 && n % 2 == 1 {
        return Err(HarnessError::Config(format!("σ ≠ 1 needs an even step count (got {n})")));
    }
    let dt1 = 2.0 * dt / (1.0 + sigma);
    let steps = (0..n).map(|i| if i % 2 == 0 { dt1 } else { dt1 * sigma }).collect();
    Ok((sigma * dt1, steps))
}

/// Least-squares slope of `log err` against `log dt`.
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|&(h, e)| (h.ln(), e.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub method: String,
    pub problem: String,
    pub sigma: f64,
    /// `(dt, global error)` in the order run.
    pub points: Vec<(f64, f64)>,
    /// Slope over the points whose error exceeds 100× the reference accuracy.
    pub slope: f64,
    pub points_fitted: usize,
    /// Observed order between consecutive points.
    pub pair_orders: Vec<f64>,
}

impl ConvergenceReport {
    pub const CSV_HEADER: &'static str = "method,problem,sigma,dt,error,observed_order";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for (k, &(dt, err)) in self.points.iter().enumerate() {
            let order = if k == 0 { String::new() } else { format!("{:.4}", self.pair_orders[k - 1]) };
            out.push_str(&format!("{},{},{},{dt:.6e},{err:.6e},{order}\n", self.method, self.problem, self.sigma));
        }
        out
    }
}

/// Runs the σ pattern for each `dt` and measures the scaled error at the end
/// time against the exact solution, or `reference` when the problem has none.
pub fn run_sigma_study(
    tableau: &PeerTableau,
    problem: &dyn SplitProblem,
    sigma: f64,
    dt_list: &[f64],
    reference: Option<&Reference>,
) -> Result<ConvergenceReport, HarnessError> {
    let (t0, t_end) = problem.t_span();
    let (target, accuracy) = match (problem.exact(t_end), reference) {
        (Some(y), _) => (y, f64::EPSILON),
        (None, Some(r)) => (r.y.clone(), r.tol),
        (None, None) => {
            return Err(HarnessError::Reference(format!("'{}' has no exact solution and no reference was given", problem.name())))
        }
    };
    let mut points = Vec::with_capacity(dt_list.len());
    for &dt in dt_list {
        let (dt0, steps) = sigma_pattern(dt, sigma, t_end - t0)?;
        let r = integrate(problem, tableau, &IntegrationConfig::prescribed(dt0, steps, STUDY_NEWTON_TOL))?;
        points.push((dt, scaled_error(&r.y, &target)));
    }
    let pair_orders = points.windows(2).map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln()).collect();
    let fitted: Vec<(f64, f64)> = points.iter().copied().filter(|&(_, e)| e > 100.0 * accuracy).collect();
    let slope = if fitted.len() >= 2 { fit_slope(&fitted) } else { f64::NAN };
    Ok(ConvergenceReport {
        method: tableau.name().to_string(),
        problem: problem.name().to_string(),
        sigma,
        points_fitted: fitted.len(),
        points,
        slope,
        pair_orders,
    })
}
