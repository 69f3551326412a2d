use crate::linalg::BandMatrix;

use super::{SplitProblem, Structure};

/// Stiff Prothero-Robinson type system on `[0, 5]` with exact solution
/// `(cos t, sin t)`.
#[derive(Debug, Clone)]
pub struct ProtheroRobinson {
    t_end: f64,
}

pub fn prothero_robinson() -> ProtheroRobinson {
    ProtheroRobinson { t_end: 5.0 }
}

impl ProtheroRobinson {
    pub fn with_end_time(t_end: f64) -> Self {
        ProtheroRobinson { t_end }
    }
}

impl SplitProblem for ProtheroRobinson {
    fn name(&self) -> &str {
        "prothero-robinson"
    }

    fn dim(&self) -> usize {
        2
    }

    fn t_span(&self) -> (f64, f64) {
        (0.0, self.t_end)
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![1.0, 0.0]
    }

    fn f0(&self, t: f64, u: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
        out[1] = u[0] + u[1] - t.sin();
    }

    fn f1(&self, t: f64, u: &[f64], out: &mut [f64]) {
        out[0] = -1e6 * (u[0] - t.cos()) + 1e3 * (u[1] - t.sin()) - t.sin();
        out[1] = 0.0;
    }

    fn f1_structure(&self) -> Structure {
        Structure::Dense
    }

    fn f1_jacobian(&self, _t: f64, _u: &[f64]) -> Option<BandMatrix> {
        let mut j = BandMatrix::zeros(2, 1, 1);
        j.set(0, 0, -1e6);
        j.set(0, 1, 1e3);
        Some(j)
    }

    fn f0_jacobian(&self, _t: f64, _u: &[f64]) -> Option<BandMatrix> {
        let mut j = BandMatrix::zeros(2, 1, 1);
        j.set(1, 0, 1.0);
        j.set(1, 1, 1.0);
        Some(j)
    }

    fn exact(&self, t: f64) -> Option<Vec<f64>> {
        Some(vec![t.cos(), t.sin()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{fd_jacobian, testing::jacobian_mismatch};

    #[test]
    fn plug_in_at_start() {
        let p = prothero_robinson();
        let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
        p.f0(0.0, &[1.0, 0.0], &mut a);
        p.f1(0.0, &[1.0, 0.0], &mut b);
        assert_eq!(a, [0.0, 1.0]);
        assert_eq!(b, [0.0, 0.0]);
    }

    #[test]
    fn exact_solution_satisfies_the_ode() {
        let p = prothero_robinson();
        for t in [0.3, 1.7, 4.2] {
            let u = p.exact(t).unwrap();
            let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
            p.f0(t, &u, &mut a);
            p.f1(t, &u, &mut b);
            assert!((a[0] + b[0] + t.sin()).abs() < 1e-9);
            assert!((a[1] + b[1] - t.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobians() {
        let p = prothero_robinson();
        let u = [0.4, -2.0];
        let j = p.f1_jacobian(0.0, &u).unwrap();
        assert_eq!(j.to_dense().as_slice(), &[-1e6, 0.0, 1e3, 0.0]);
        let fd = fd_jacobian(|x, o| p.f1(0.3, x, o), &u, 1, 1);
        assert!(jacobian_mismatch(&j, &fd) < 1e-6);
        let fd = fd_jacobian(|x, o| p.f0(0.3, x, o), &u, 1, 1);
        assert!(jacobian_mismatch(&p.f0_jacobian(0.3, &u).unwrap(), &fd) < 1e-6);
    }
}
