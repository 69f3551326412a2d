use rayon::prelude::*;

use imex_peer::integrator::{integrate, IntegrationConfig, IntegrationStats, STATS_CSV_HEADER};
use imex_peer::problems::SplitProblem;
use imex_peer::tableau::PeerTableau;

use crate::reference::Reference;
use crate::scaled_error;

/// Initial step `τ` of the start as a function of `atol`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauRule {
    Atol,
    SqrtAtol,
    Fixed(f64),
}

impl TauRule {
    pub fn tau(self, atol: f64) -> f64 {
        match self {
            TauRule::Atol => atol,
            TauRule::SqrtAtol => atol.sqrt(),
            TauRule::Fixed(t) => t,
        }
    }

    /// Default rule of each benchmark problem.
    pub fn for_problem(name: &str) -> TauRule {
        match name {
            "burgers" => TauRule::SqrtAtol,
            "advection-reaction" => TauRule::Fixed(1e-3),
            _ => TauRule::Atol,
        }
    }
}

/// `10^{-first-i}` for `i = 0..count`.
pub fn tolerance_list(first: i32, count: usize) -> Vec<f64> {
    (0..count).map(|i| 10f64.powi(-first - i as i32)).collect()
}

/// Default desk-scale tolerance sweep of each benchmark problem.
pub fn default_tolerances(problem: &str) -> Vec<f64> {
    match problem {
        "burgers" => tolerance_list(2, 5),
        _ => tolerance_list(3, 5),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WpRecord {
    pub tol: f64,
    pub result: Result<(f64, IntegrationStats), String>,
}

impl WpRecord {
    pub fn error(&self) -> Option<f64> {
        self.result.as_ref().ok().map(|(e, _)| *e)
    }

    pub fn stats(&self) -> Option<&IntegrationStats> {
        self.result.as_ref().ok().map(|(_, s)| s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkPrecision {
    pub method: String,
    pub problem: String,
    pub records: Vec<WpRecord>,
}

impl WorkPrecision {
    pub fn all_completed(&self) -> bool {
        self.records.iter().all(|r| r.result.is_ok())
    }

    /// Adjacent tolerance pairs `(loose, tight)` where the error at the
    /// tighter tolerance exceeds `allowance ×` the error at the looser one.
    pub fn non_monotone(&self, allowance: f64) -> Vec<(f64, f64)> {
        let mut sorted: Vec<&WpRecord> = self.records.iter().collect();
        sorted.sort_by(|a, b| b.tol.total_cmp(&a.tol));
        sorted
            .windows(2)
            .filter(|w| match (w[0].error(), w[1].error()) {
                (Some(a), Some(b)) => b > allowance * a,
                _ => true,
            })
            .map(|w| (w[0].tol, w[1].tol))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{STATS_CSV_HEADER},status\n");
        for r in &self.records {
            match &r.result {
                Ok((err, stats)) => out.push_str(&format!("{},ok\n", stats.csv_row(&self.method, r.tol, *err))),
                Err(e) => out.push_str(&format!(
                    "{},{:e},,,,,,,,,,failed: {}\n",
                    self.method,
                    r.tol,
                    e.replace(',', ";")
                )),
            }
        }
        out
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

/// Adaptive runs at `atol = rtol = tol` for every tolerance, in parallel
/// over tolerances. Each run is repeated `repeats` times and the median
/// integration time is reported.
pub fn run_work_precision(
    tableau: &PeerTableau,
    problem: &dyn SplitProblem,
    tols: &[f64],
    tau: TauRule,
    reference: &Reference,
    repeats: usize,
) -> WorkPrecision {
    let records = tols
        .par_iter()
        .map(|&tol| {
            let cfg = IntegrationConfig::adaptive(tol, tau.tau(tol));
            let mut times = Vec::with_capacity(repeats.max(1));
            let mut last = None;
            for _ in 0..repeats.max(1) {
                match integrate(problem, tableau, &cfg) {
                    Ok(r) => {
                        times.push(r.stats.cpu_time);
                        last = Some(r);
                    }
                    Err(e) => {
                        return WpRecord {
                            tol,
                            result: Err(e.to_string()),
                        }
                    }
                }
            }
            let r = last.expect("at least one run");
            let mut stats = r.stats;
            stats.cpu_time = median(times);
            WpRecord {
                tol,
                result: Ok((scaled_error(&r.y, &reference.y), stats)),
            }
        })
        .collect();
    WorkPrecision {
        method: tableau.name().to_string(),
        problem: problem.name().to_string(),
        records,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use imex_peer::problems::prothero_robinson;
    use imex_peer::tableau::builtin_tableau;

    #[test]
    fn tau_rules() {
        assert_eq!(TauRule::for_problem("van-der-pol").tau(1e-4), 1e-4);
        assert!((TauRule::for_problem("burgers").tau(1e-4) - 1e-2).abs() < 1e-17);
        assert_eq!(TauRule::for_problem("advection-reaction").tau(1e-7), 1e-3);
        assert_eq!(tolerance_list(3, 6).last().copied(), Some(1e-8));
    }

    #[test]
    fn sweep_against_exact_solution() {
        let p = prothero_robinson();
        let t = builtin_tableau("IMEX-Peer3sv").unwrap();
        let reference = Reference {
            problem: "prothero-robinson".into(),
            method: "exact".into(),
            tol: 0.0,
            t: 5.0,
            y: p.exact(5.0).unwrap(),
        };
        let wp = run_work_precision(&t, &p, &[1e-4, 1e-6, 1e-8], TauRule::Atol, &reference, 3);
        assert!(wp.all_completed());
        assert!(wp.non_monotone(1.0).is_empty(), "{}", wp.to_csv());
        let csv = wp.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().skip(1).all(|l| l.ends_with(",ok")));
    }

    #[test]
    fn flags_increasing_errors() {
        let rec = |tol: f64, e: f64| WpRecord {
            tol,
            result: Ok((e, IntegrationStats::default())),
        };
        let wp = WorkPrecision {
            method: "m".into(),
            problem: "p".into(),
            records: vec![rec(1e-3, 1e-4), rec(1e-4, 2e-4), rec(1e-5, 1e-6)],
        };
        assert_eq!(wp.non_monotone(1.0), vec![(1e-3, 1e-4)]);
        assert!(wp.non_monotone(3.0).is_empty());
    }
}
