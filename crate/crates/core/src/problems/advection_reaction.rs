use crate::linalg::BandMatrix;

use super::{ProblemError, SplitProblem, Structure};

pub const K1: f64 = 1e6;
pub const K2: f64 = 2e6;
pub const S2: f64 = 1.0;

/// Linear advection-reaction system on `(0, 1]`:
/// `u_t + u_x = -k1 u + k2 v`, `v_t = k1 u - k2 v + s2`, inflow
/// `u(0, t) = 1 - sin(12t)⁴`. Nodes `x_j = j/m`, `j = 1..m`, state stored
/// interleaved as `(u_1, v_1, u_2, v_2, ...)`. The reaction is implicit.
#[derive(Debug, Clone)]
pub struct AdvectionReaction {
    m: usize,
}

pub fn advection_reaction(m: usize) -> Result<AdvectionReaction, ProblemError> {
    if m < 4 {
        return Err(ProblemError::Parameter(format!("need at least 4 nodes, got {m}")));
    }
    Ok(AdvectionReaction { m })
}

pub fn inflow(t: f64) -> f64 {
    1.0 - (12.0 * t).sin().powi(4)
}

impl AdvectionReaction {
    pub fn nodes(&self) -> usize {
        self.m
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 / self.m as f64
    }

    /// Weights of `∂x u` at node `j` (1-based) on `u_{j-3}..u_{j+1}`; `u_0`
    /// is the inflow value.
    fn stencil(&self, j: usize) -> (usize, [f64; 5]) {
        let h = 1.0 / self.m as f64;
        let (a, b) = (1.0 / (6.0 * h), 1.0 / (12.0 * h));
        match j {
            1 => (0, [-2.0 * a, -3.0 * a, 6.0 * a, -a, 0.0]),
            2 => (0, [a, -6.0 * a, 3.0 * a, 2.0 * a, 0.0]),
            _ if j == self.m => (j - 3, [-2.0 * a, 9.0 * a, -18.0 * a, 11.0 * a, 0.0]),
            _ => (j - 3, [-b, 6.0 * b, -18.0 * b, 10.0 * b, 3.0 * b]),
        }
    }
}

impl SplitProblem for AdvectionReaction {
    fn name(&self) -> &str {
        "advection-reaction"
    }

    fn dim(&self) -> usize {
        2 * self.m
    }

    fn t_span(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn initial_state(&self) -> Vec<f64> {
        let mut y = vec![0.0; 2 * self.m];
        for j in 1..=self.m {
            let u = 1.0 + S2 * self.x(j);
            y[2 * j - 2] = u;
            y[2 * j - 1] = K1 / K2 * u + S2 / K2;
        }
        y
    }

    fn f0(&self, t: f64, y: &[f64], out: &mut [f64]) {
        let u0 = inflow(t);
        let u = |k: usize| if k == 0 { u0 } else { y[2 * k - 2] };
        for j in 1..=self.m {
            let (first, w) = self.stencil(j);
            let dx: f64 = w.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(k, c)| c * u(first + k)).sum();
            out[2 * j - 2] = -dx;
            out[2 * j - 1] = S2;
        }
    }

    fn f1(&self, _t: f64, y: &[f64], out: &mut [f64]) {
        for k in 0..self.m {
            let r = -K1 * y[2 * k] + K2 * y[2 * k + 1];
            out[2 * k] = r;
            out[2 * k + 1] = -r;
        }
    }

    fn f1_structure(&self) -> Structure {
        Structure::BlockDiagonal2
    }

    fn f1_jacobian(&self, _t: f64, _y: &[f64]) -> Option<BandMatrix> {
        let mut jac = BandMatrix::zeros(2 * self.m, 1, 1);
        for k in 0..self.m {
            jac.set(2 * k, 2 * k, -K1);
            jac.set(2 * k, 2 * k + 1, K2);
            jac.set(2 * k + 1, 2 * k, K1);
            jac.set(2 * k + 1, 2 * k + 1, -K2);
        }
        Some(jac)
    }

    fn f0_structure(&self) -> Structure {
        Structure::Banded { lower: 6, upper: 4 }
    }

    fn f0_jacobian(&self, _t: f64, _y: &[f64]) -> Option<BandMatrix> {
        let mut jac = BandMatrix::zeros(2 * self.m, 6, 4);
        for j in 1..=self.m {
            let (first, w) = self.stencil(j);
            for (k, c) in w.iter().enumerate() {
                let node = first + k;
                if *c != 0.0 && node >= 1 {
                    jac.add(2 * j - 2, 2 * node - 2, -c);
                }
            }
        }
        Some(jac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::real_matrix_eigenvalues;
    use crate::problems::{fd_jacobian, testing::jacobian_mismatch};

    #[test]
    fn reaction_at_initial_data() {
        let p = advection_reaction(40).unwrap();
        let y = p.initial_state();
        let mut out = vec![0.0; y.len()];
        p.f1(0.0, &y, &mut out);
        for k in 0..40 {
            assert!((out[2 * k] - S2).abs() < 1e-8);
            assert_eq!(out[2 * k] + out[2 * k + 1], 0.0);
        }
    }

    #[test]
    fn reaction_block_eigenvalues() {
        let p = advection_reaction(4).unwrap();
        let jac = p.f1_jacobian(0.0, &p.initial_state()).unwrap().to_dense();
        let block = jac.view((2, 2), (2, 2)).clone_owned();
        let mut ev: Vec<f64> = real_matrix_eigenvalues(&block).iter().map(|z| z.re).collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] + 3e6).abs() < 1e-6);
        assert!(ev[1].abs() < 1e-6);
        assert_eq!(jac[(1, 2)], 0.0);
    }

    #[test]
    fn stencils_are_exact_for_cubics() {
        let m = 20;
        let p = advection_reaction(m).unwrap();
        let h = 1.0 / m as f64;
        for deg in 0..=3 {
            let g = |x: f64| x.powi(deg) + 0.5;
            for j in 1..=m {
                let (first, w) = p.stencil(j);
                let approx: f64 = w.iter().enumerate().map(|(k, c)| c * g((first + k) as f64 * h)).sum();
                let exact = if deg == 0 { 0.0 } else { deg as f64 * (j as f64 * h).powi(deg - 1) };
                assert!((approx - exact).abs() < 1e-9, "deg {deg} node {j}");
            }
        }
        let g = |x: f64| x.powi(4);
        for j in 3..m {
            let (first, w) = p.stencil(j);
            let approx: f64 = w.iter().enumerate().map(|(k, c)| c * g((first + k) as f64 * h)).sum();
            assert!((approx - 4.0 * (j as f64 * h).powi(3)).abs() < 1e-9);
        }
    }

    #[test]
    fn advection_jacobian_matches_differences() {
        let p = advection_reaction(16).unwrap();
        let y: Vec<f64> = (0..32).map(|k| (0.37 * k as f64).sin() * 4.0).collect();
        let fd = fd_jacobian(|x, o| p.f0(0.2, x, o), &y, 6, 4);
        assert!(jacobian_mismatch(&p.f0_jacobian(0.2, &y).unwrap(), &fd) < 1e-6);
        let fd = fd_jacobian(|x, o| p.f1(0.2, x, o), &y, 1, 1);
        assert!(jacobian_mismatch(&p.f1_jacobian(0.2, &y).unwrap(), &fd) < 1e-6);
    }

    #[test]
    fn inflow_values() {
        assert_eq!(inflow(0.0), 1.0);
        assert!(inflow(std::f64::consts::PI / 24.0).abs() < 1e-14);
        assert!(advection_reaction(3).is_err());
    }
}
