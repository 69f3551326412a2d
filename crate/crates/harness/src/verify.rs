use std::fmt::Write as _;

use imex_peer::coeffs::{
    check_superconvergence, defect_with, error_constants, extrapolation_defect_with, ConditionMode, VandermondeSet,
};
use imex_peer::stability::{check_a_stability, damping_radius, stability_report, ScanConfig, StabilityReport};
use imex_peer::tableau::{check_zero_stability, PeerTableau, TableauData, PRECONSISTENCY_TOL};

use crate::table1::{published, COLUMN_TOLERANCES};

/// Bound on the stage and extrapolation defects of the order conditions.
pub const STAGE_ORDER_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    /// Failing makes the whole verification fail.
    Hard,
    Info,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub severity: Severity,
    pub passed: bool,
    pub detail: String,
}

/// A computed quantity next to its published value.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub column: &'static str,
    pub computed: f64,
    pub published: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub method: String,
    pub checks: Vec<Check>,
    pub comparisons: Vec<Comparison>,
    pub stability: Option<StabilityReport>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || c.severity == Severity::Info)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn render(&self) -> String {
        let mut out = format!("method {}\n", self.method);
        for c in &self.checks {
            let tag = match (c.passed, c.severity) {
                (true, _) => "PASS",
                (false, Severity::Hard) => "FAIL",
                (false, Severity::Info) => "fail",
            };
            let _ = writeln!(out, "{tag:<5}{:<28}{}", c.name, c.detail);
        }
        if !self.comparisons.is_empty() {
            let _ = writeln!(out, "published comparison:");
            for c in &self.comparisons {
                let delta = c.computed - c.published;
                let _ = writeln!(
                    out,
                    "  {:<10}{:>13.4e}{:>13.4e}  delta {:+.3e}{}",
                    c.column,
                    c.computed,
                    c.published,
                    delta,
                    if c.within_tolerance { "" } else { "  (outside tolerance)" }
                );
            }
        }
        let _ = writeln!(out, "verdict: {}", if self.passed() { "PASS" } else { "FAIL" });
        out
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Step ratios at which the stage order is checked.
    pub sigmas: Vec<f64>,
    /// Region scan settings; `None` skips the region columns.
    pub regions: Option<ScanConfig>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            sigmas: stage_order_sigmas(20),
            regions: None,
        }
    }
}

/// `n` ratios spread geometrically over `[0.2, 5]`.
pub fn stage_order_sigmas(n: usize) -> Vec<f64> {
    let (a, b) = (0.2f64.ln(), 5f64.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

fn push(checks: &mut Vec<Check>, name: &str, severity: Severity, passed: bool, detail: String) {
    checks.push(Check {
        name: name.to_string(),
        severity,
        passed,
        detail,
    });
}

/// Largest `‖d_j(σ)‖∞` (j = 1..s) and `‖l_j(σ)‖∞` (j = 0..s-1) over `sigmas`.
pub fn stage_order_defects(t: &PeerTableau, sigmas: &[f64]) -> Result<(f64, f64), String> {
    let v = VandermondeSet::for_tableau(t).map_err(|e| e.to_string())?;
    let s = t.stages();
    let (mut d_max, mut l_max) = (0.0f64, 0.0f64);
    for &sigma in sigmas {
        let coef = v.assemble(t, sigma).map_err(|e| e.to_string())?;
        for j in 1..=s {
            d_max = d_max.max(defect_with(t, &coef.q, sigma, j).amax());
        }
        for j in 0..s {
            l_max = l_max.max(extrapolation_defect_with(t, &coef.e1, sigma, j).amax());
        }
    }
    Ok((d_max, l_max))
}

/// Structural validity, zero- and A-stability, stage order, the
/// super-convergence condition sets and a comparison with published values.
pub fn verify_method(data: &TableauData, opts: &VerifyOptions) -> VerifyReport {
    let mut checks = Vec::new();
    let mut report = VerifyReport {
        method: data.name.clone(),
        checks: Vec::new(),
        comparisons: Vec::new(),
        stability: None,
    };
    let violations = data.violations();
    let detail = if violations.is_empty() {
        "all structural invariants hold".to_string()
    } else {
        violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
    };
    push(&mut checks, "tableau", Severity::Hard, violations.is_empty(), detail);
    let t = match PeerTableau::try_from(data.clone()) {
        Ok(t) => t,
        Err(_) => {
            report.checks = checks;
            return report;
        }
    };
    let res = t.preconsistency_residual();
    push(
        &mut checks,
        "preconsistency",
        Severity::Hard,
        res <= PRECONSISTENCY_TOL,
        format!("‖Pe - e‖∞ = {res:.2e}"),
    );
    let zs = check_zero_stability(&t);
    push(
        &mut checks,
        "zero-stability",
        Severity::Hard,
        zs.zero_stable,
        format!("max non-unit |λ(P)| = {:.3e}", zs.max_nonunit_modulus()),
    );
    push(
        &mut checks,
        "optimal-zero-stability",
        Severity::Info,
        zs.optimal,
        format!("non-unit eigenvalues of P vanish: {}", zs.optimal),
    );
    match stage_order_defects(&t, &opts.sigmas) {
        Ok((d, l)) => {
            push(&mut checks, "stage-order", Severity::Hard, d <= STAGE_ORDER_TOL, format!("max ‖d_j(σ)‖∞ = {d:.2e}"));
            push(&mut checks, "extrapolation-order", Severity::Hard, l <= STAGE_ORDER_TOL, format!("max ‖l_j(σ)‖∞ = {l:.2e}"));
        }
        Err(e) => push(&mut checks, "stage-order", Severity::Hard, false, e),
    }
    for mode in ConditionMode::ALL {
        match check_superconvergence(&t, mode) {
            Ok(r) => push(
                &mut checks,
                &format!("conditions:{}", mode.as_str()),
                Severity::Info,
                r.passed(),
                format!("max residual {:.2e}", r.max_residual()),
            ),
            Err(e) => push(&mut checks, &format!("conditions:{}", mode.as_str()), Severity::Info, false, e.to_string()),
        }
    }
    match check_a_stability(&t) {
        Ok(a) => push(
            &mut checks,
            "a-stability",
            Severity::Hard,
            a.a_stable,
            format!("max ρ on iR = {:.6}, ρ at ∞ = {:.4}", a.max_rho, a.rho_infinity),
        ),
        Err(e) => push(&mut checks, "a-stability", Severity::Hard, false, e.to_string()),
    }
    if let Some(row) = published(t.name()) {
        let mut computed: Vec<(&'static str, f64)> = Vec::new();
        if let Ok(rho) = damping_radius(&t, 1.0) {
            computed.push(("rho_damp", rho));
        }
        if let Ok(ec) = error_constants(&t) {
            computed.push(("c_im", ec.c_im));
            computed.push(("c_ex", ec.c_ex));
        }
        if let Some(cfg) = &opts.regions {
            if let Ok(sr) = stability_report(&t, cfg) {
                computed.extend([("area_s90", sr.s90.area), ("x_max", sr.x_max), ("area_s0", sr.s0.area), ("y_max", sr.y_max)]);
                report.stability = Some(sr);
            }
        }
        for (column, tol) in COLUMN_TOLERANCES {
            if let (Some(&(_, value)), Some(expected)) = (computed.iter().find(|(c, _)| *c == column), row.column(column)) {
                report.comparisons.push(Comparison {
                    column,
                    computed: value,
                    published: expected,
                    within_tolerance: tol.accepts(value, expected),
                });
            }
        }
    }
    report.checks = checks;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use imex_peer::tableau::builtin_tableau;

    #[test]
    fn sigma_samples_cover_the_range() {
        let s = stage_order_sigmas(20);
        assert_eq!(s.len(), 20);
        assert!((s[0] - 0.2).abs() < 1e-15 && (s[19] - 5.0).abs() < 1e-14);
        assert!(s.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn corrupted_gamma_is_reported() {
        let mut data = builtin_tableau("IMEX-Peer3sv").unwrap().to_data();
        for i in 0..3 {
            data.r[(i, i)] = 0.0;
        }
        let r = verify_method(&data, &VerifyOptions::default());
        assert!(!r.passed());
        let c = r.check("tableau").unwrap();
        assert!(!c.passed && c.detail.contains("R diagonal not positive"), "{}", c.detail);
    }

    #[test]
    fn two_stage_method_fails_full_set_only() {
        let data = builtin_tableau("IMEX-Peer2sve").unwrap().to_data();
        let r = verify_method(&data, &VerifyOptions::default());
        assert!(r.passed(), "{}", r.render());
        assert!(!r.check("conditions:imex-variable").unwrap().passed);
        assert!(r.check("conditions:imex-relaxed").unwrap().passed);
        assert_eq!(r.comparisons.len(), 3);
        assert!(r.comparisons.iter().all(|c| c.within_tolerance), "{}", r.render());
    }
}
