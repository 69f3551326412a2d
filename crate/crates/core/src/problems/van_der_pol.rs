use crate::linalg::BandMatrix;

use super::{SplitProblem, Structure};

/// Stiff van der Pol oscillator on `[0, 2]`, `y(0) = (2, 0)`, with the
/// stiff relaxation term `μ((1 - y1²) y2 - y1)` treated implicitly.
#[derive(Debug, Clone)]
pub struct VanDerPol {
    mu: f64,
    t_end: f64,
}

pub fn van_der_pol() -> VanDerPol {
    VanDerPol { mu: 1e6, t_end: 2.0 }
}

impl VanDerPol {
    pub fn new(mu: f64, t_end: f64) -> Self {
        VanDerPol { mu, t_end }
    }
}

impl SplitProblem for VanDerPol {
    fn name(&self) -> &str {
        "van-der-pol"
    }

    fn dim(&self) -> usize {
        2
    }

    fn t_span(&self) -> (f64, f64) {
        (0.0, self.t_end)
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![2.0, 0.0]
    }

    fn f0(&self, _t: f64, u: &[f64], out: &mut [f64]) {
        out[0] = u[1];
        out[1] = 0.0;
    }

    fn f1(&self, _t: f64, u: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
        out[1] = self.mu * ((1.0 - u[0] * u[0]) * u[1] - u[0]);
    }

    fn f1_structure(&self) -> Structure {
        Structure::Dense
    }

    fn f1_jacobian(&self, _t: f64, u: &[f64]) -> Option<BandMatrix> {
        let mut j = BandMatrix::zeros(2, 1, 1);
        j.set(1, 0, self.mu * (-2.0 * u[0] * u[1] - 1.0));
        j.set(1, 1, self.mu * (1.0 - u[0] * u[0]));
        Some(j)
    }

    fn f0_jacobian(&self, _t: f64, _u: &[f64]) -> Option<BandMatrix> {
        let mut j = BandMatrix::zeros(2, 1, 1);
        j.set(0, 1, 1.0);
        Some(j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{fd_jacobian, testing::jacobian_mismatch};
    use proptest::prelude::*;

    #[test]
    fn plug_in() {
        let p = van_der_pol();
        let mut out = [0.0; 2];
        p.f1(0.0, &[2.0, 0.0], &mut out);
        assert_eq!(out, [0.0, -2e6]);
        for k in [-3.0, 0.0, 7.5] {
            p.f1(0.0, &[1.0, k], &mut out);
            assert_eq!(out[1], -1e6);
        }
    }

    proptest! {
        #[test]
        fn analytic_jacobian_matches_differences(y1 in -7.0f64..7.0, y2 in -7.0f64..7.0) {
            let p = van_der_pol();
            let u = [y1, y2];
            let j = p.f1_jacobian(0.0, &u).unwrap();
            let fd = fd_jacobian(|x, o| p.f1(0.0, x, o), &u, 1, 1);
            prop_assert!(jacobian_mismatch(&j, &fd) < 1e-6);
        }
    }
}
