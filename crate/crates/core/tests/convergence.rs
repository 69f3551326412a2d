use imex_peer::integrator::{integrate, IntegrationConfig};
use imex_peer::problems::{prothero_robinson, van_der_pol, SplitProblem};
use imex_peer::tableau::{builtin_tableau, BUILTIN_METHODS};

fn relative_error(y: &[f64], exact: &[f64]) -> f64 {
    y.iter().zip(exact).map(|(a, b)| (a - b).abs() / (1.0 + b.abs())).fold(0.0, f64::max)
}

/// `dt_1 = 2 dt / (1 + σ)`, then alternately `×σ` and `×1/σ`; block 0 has step `σ dt_1`.
fn alternating(dt: f64, sigma: f64, t_end: f64) -> (f64, Vec<f64>) {
    let n = (t_end / dt).round() as usize;
    let dt1 = 2.0 * dt / (1.0 + sigma);
    let steps = (0..n).map(|i| if i % 2 == 0 { dt1 } else { sigma * dt1 }).collect();
    (sigma * dt1, steps)
}

fn pr_error(method: &str, dt: f64, sigma: f64) -> f64 {
    let p = prothero_robinson();
    let t = builtin_tableau(method).unwrap();
    let (dt0, steps) = alternating(dt, sigma, 5.0);
    let r = integrate(&p, &t, &IntegrationConfig::prescribed(dt0, steps, 1e-12)).unwrap();
    assert!((r.t - 5.0).abs() < 1e-12);
    relative_error(&r.y, &p.exact(r.t).unwrap())
}

#[test]
fn fourth_order_at_constant_steps() {
    let e1 = pr_error("IMEX-Peer3sv", 0.05 / 4.0, 1.0);
    let e2 = pr_error("IMEX-Peer3sv", 0.05 / 8.0, 1.0);
    let ratio = e1 / e2;
    assert!((10.0..26.0).contains(&ratio), "ratio {ratio} ({e1:e}, {e2:e})");
}

#[test]
fn superconvergence_survives_alternating_steps() {
    for method in BUILTIN_METHODS {
        let s = builtin_tableau(method).unwrap().stages() as f64;
        let (e1, e2) = (pr_error(method, 0.05 / 2.0, 1.1), pr_error(method, 0.05 / 4.0, 1.1));
        let order = (e1 / e2).log2();
        assert!(order >= s + 0.6, "{method}: order {order} ({e1:e}, {e2:e})");
    }
}

fn vdp_run(method: &str, tol: f64, acceptance: f64) -> imex_peer::integrator::IntegrationResult {
    let p = van_der_pol();
    let t = builtin_tableau(method).unwrap();
    let mut cfg = IntegrationConfig::adaptive(tol, tol);
    cfg.tol = acceptance;
    cfg.record_steps = true;
    integrate(&p, &t, &cfg).unwrap()
}

#[test]
fn van_der_pol_steps_span_three_decades() {
    for method in ["IMEX-Peer3sv", "IMEX-Peer4sv"] {
        let r = vdp_run(method, 1e-5, 1.0);
        assert!((r.t - 2.0).abs() < 1e-12);
        let decades = (r.stats.dt_max / r.stats.dt_min).log10();
        assert!(decades >= 3.0, "{method}: {decades} decades");
        let (lo, hi) = r.steps.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &(_, h)| (a.min(h), b.max(h)));
        assert_eq!((lo, hi), (r.stats.dt_min, r.stats.dt_max));
    }
}

#[test]
fn rejections_do_not_grow_with_acceptance_threshold() {
    for method in ["IMEX-Peer3sv", "IMEX-Peer4sv"] {
        let rejects: Vec<usize> = [0.5, 1.0, 2.0, 4.0].iter().map(|&a| vdp_run(method, 1e-5, a).stats.n_reject).collect();
        for w in rejects.windows(2) {
            assert!(w[1] <= w[0], "{method}: {rejects:?}");
        }
    }
}
