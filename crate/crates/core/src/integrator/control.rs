use nalgebra::DVector;

use crate::coeffs::VandermondeSet;

use super::StageBlock;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Weights `(α, β)` of the estimate `Δt Σ (α_i F(w_{n,i}) + β_i F(w_{n-1,i}))`
/// of `Δt^s u^{(s)}`.
pub fn estimator_weights(vset: &VandermondeSet, sigma: f64, delta: f64) -> (DVector<f64>, DVector<f64>) {
    let s = vset.stages();
    let fs = factorial(s - 1);
    let alpha = vset.v0_inv().row(s - 1).transpose() * (delta * fs);
    let beta = vset.v1_inv().row(s - 1).transpose() * ((1.0 - delta) * sigma.powi(s as i32 - 1) * fs);
    (alpha, beta)
}

pub fn error_estimate(prev: &StageBlock, curr: &StageBlock, alpha: &DVector<f64>, beta: &DVector<f64>, out: &mut [f64]) {
    out.fill(0.0);
    let dt = curr.dt;
    for i in 0..alpha.len() {
        let (a, b) = (dt * alpha[i], dt * beta[i]);
        if a != 0.0 {
            for k in 0..out.len() {
                out[k] += a * (curr.f0[i][k] + curr.f1[i][k]);
            }
        }
        if b != 0.0 {
            for k in 0..out.len() {
                out[k] += b * (prev.f0[i][k] + prev.f1[i][k]);
            }
        }
    }
}

/// Weighted max norm of the estimate against the last stages.
pub fn weighted_error(est: &[f64], curr_last: &[f64], prev_last: &[f64], atol: f64, rtol: f64, delta: f64) -> f64 {
    est.iter()
        .zip(curr_last.iter().zip(prev_last))
        .map(|(e, (c, p))| e.abs() / (atol + rtol * (delta * c.abs() + (1.0 - delta) * p.abs())))
        .fold(0.0, f64::max)
}

/// `min(1.2, max(0.8, 0.9 err^{-1/s}))`
pub fn step_factor(err: f64, s: usize) -> f64 {
    if err.is_nan() {
        return 0.8;
    }
    (0.9 * err.powf(-1.0 / s as f64)).clamp(0.8, 1.2)
}

/// Shrinks `dt` so that the remaining interval splits into whole steps.
pub fn endpoint_adjust(dt: f64, remaining: f64) -> f64 {
    if remaining <= 0.0 {
        return 0.0;
    }
    remaining / (1.0 + remaining / dt).floor()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlDecision {
    Accept { dt_next: f64 },
    Reject { dt_retry: f64 },
}

#[derive(Debug, Clone)]
pub struct ControllerState {
    pub atol: f64,
    pub rtol: f64,
    pub delta: f64,
    pub tol: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub accepted: usize,
    pub rejected: usize,
}

impl ControllerState {
    pub fn new(atol: f64, rtol: f64, delta: f64, tol: f64, dt_min: f64, dt_max: f64) -> Self {
        assert!((0.0..=1.0).contains(&delta), "delta must lie in [0, 1]");
        assert!(dt_min > 0.0, "dt_min must be positive");
        ControllerState {
            atol,
            rtol,
            delta,
            tol,
            dt_min,
            dt_max,
            accepted: 0,
            rejected: 0,
        }
    }

    pub fn error(&self, est: &[f64], curr: &StageBlock, prev: &StageBlock) -> f64 {
        weighted_error(est, curr.last_stage(), prev.last_stage(), self.atol, self.rtol, self.delta)
    }

    /// Decision for a step of size `dt` starting at `t_n`, integrating to `t_end`.
    pub fn decide(&mut self, err: f64, s: usize, dt: f64, t_n: f64, t_end: f64) -> ControlDecision {
        let dt_new = (step_factor(err, s) * dt).min(self.dt_max);
        if err <= self.tol {
            self.accepted += 1;
            ControlDecision::Accept {
                dt_next: endpoint_adjust(dt_new, t_end - (t_n + dt)),
            }
        } else {
            self.rejected += 1;
            // With TOL < 1 the formula can exceed 1 on rejection.
            ControlDecision::Reject {
                dt_retry: endpoint_adjust(dt_new.min(0.9 * dt), t_end - t_n),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tableau::{builtin_tableau, BUILTIN_METHODS};

    #[test]
    fn controller_examples() {
        assert!((step_factor(1.0, 3) * 0.1 - 0.09).abs() < 1e-15);
        assert_eq!(step_factor(1e-6, 3), 1.2);
        assert_eq!(step_factor(0.0, 2), 1.2);
        assert_eq!(step_factor(1e10, 4), 0.8);
        assert!((endpoint_adjust(0.1, 0.95) - 0.095).abs() < 1e-15);
        assert_eq!(endpoint_adjust(0.5, 0.3), 0.3);
    }

    #[test]
    fn decisions() {
        let mut c = ControllerState::new(1e-6, 1e-6, 0.0, 1.0, 1e-14, 1.0);
        match c.decide(1.0, 3, 0.1, 0.0, 10.05) {
            ControlDecision::Accept { dt_next } => assert!((dt_next - 9.95 / 111.0).abs() < 1e-16),
            d => panic!("{d:?}"),
        }
        match c.decide(2.0, 3, 0.1, 0.0, 10.0) {
            ControlDecision::Reject { dt_retry } => assert!(dt_retry < 0.1 && dt_retry >= 0.08 * (1.0 - 1e-3)),
            d => panic!("{d:?}"),
        }
        assert_eq!((c.accepted, c.rejected), (1, 1));
        let mut c = ControllerState::new(1e-6, 1e-6, 0.0, 0.5, 1e-14, 1.0);
        match c.decide(0.6, 3, 0.1, 0.0, 10.0) {
            ControlDecision::Reject { dt_retry } => assert!(dt_retry <= 0.09),
            d => panic!("{d:?}"),
        }
        let mut c = ControllerState::new(1e-6, 1e-6, 0.0, 1.0, 1e-14, 0.01);
        match c.decide(0.0, 3, 0.01, 0.0, 10.005) {
            ControlDecision::Accept { dt_next } => assert!((dt_next - 9.995 / 1000.0).abs() < 1e-16),
            d => panic!("{d:?}"),
        }
    }

    #[test]
    fn weights_without_new_values() {
        for name in BUILTIN_METHODS {
            let t = builtin_tableau(name).unwrap();
            let v = VandermondeSet::for_tableau(&t).unwrap();
            let (a, b) = estimator_weights(&v, 1.3, 0.0);
            assert_eq!(a.amax(), 0.0);
            assert!(b.amax() > 0.0);
            let (a, b) = estimator_weights(&v, 1.3, 1.0);
            assert_eq!(b.amax(), 0.0);
            assert!(a.amax() > 0.0);
        }
    }

    #[test]
    fn weighted_error_uses_delta_mix() {
        let e = weighted_error(&[1e-6, -2e-6], &[1.0, 0.0], &[3.0, 1.0], 1e-6, 1e-6, 0.0);
        assert!((e - 1.0).abs() < 1e-12);
        let e = weighted_error(&[1e-6, -2e-6], &[1.0, 0.0], &[3.0, 1.0], 1e-6, 1e-6, 1.0);
        assert!((e - 2.0).abs() < 1e-12);
    }
}
