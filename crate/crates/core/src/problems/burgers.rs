use std::f64::consts::PI;

use crate::linalg::BandMatrix;

use super::{ProblemError, SplitProblem, Structure};

/// Viscous Burgers equation `u_t = 0.1 u_xx + u u_x + r(x) sin t` on
/// `[-1, 1]`, homogeneous Dirichlet data, central differences on the interior
/// nodes `x_i = -1 + i Δx`. Diffusion is the implicit part.
#[derive(Debug, Clone)]
pub struct Burgers {
    dx: f64,
    x: Vec<f64>,
    r: Vec<f64>,
    source: bool,
    advection: bool,
}

pub const BURGERS_VISCOSITY: f64 = 0.1;

/// Piecewise linear source profile.
pub fn burgers_source_profile(x: f64) -> f64 {
    if x <= -1.0 / 3.0 {
        0.0
    } else if x <= 0.0 {
        3.0 * (x + 1.0 / 3.0)
    } else if x <= 2.0 / 3.0 {
        1.5 * (2.0 / 3.0 - x)
    } else {
        0.0
    }
}

pub fn burgers(dx: f64) -> Result<Burgers, ProblemError> {
    if !(dx > 0.0 && dx.is_finite()) {
        return Err(ProblemError::Parameter(format!("Δx must be positive, got {dx}")));
    }
    let intervals = 2.0 / dx;
    let n = intervals.round();
    if n < 2.0 || (intervals - n).abs() > 1e-9 * n {
        return Err(ProblemError::Parameter(format!(
            "Δx = {dx} does not divide [-1, 1] into at least two intervals"
        )));
    }
    let m = n as usize - 1;
    let dx = 2.0 / n;
    let x: Vec<f64> = (1..=m).map(|i| -1.0 + i as f64 * dx).collect();
    let r = x.iter().map(|&xi| burgers_source_profile(xi)).collect();
    Ok(Burgers { dx, x, r, source: true, advection: true })
}

impl Burgers {
    pub fn without_source(mut self) -> Self {
        self.source = false;
        self
    }

    pub fn without_advection(mut self) -> Self {
        self.advection = false;
        self
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }
}

impl SplitProblem for Burgers {
    fn name(&self) -> &str {
        "burgers"
    }

    fn dim(&self) -> usize {
        self.x.len()
    }

    fn t_span(&self) -> (f64, f64) {
        (0.0, 2.0)
    }

    fn initial_state(&self) -> Vec<f64> {
        self.x.iter().map(|&x| (PI * (x + 1.0)).sin()).collect()
    }

    fn f0(&self, t: f64, u: &[f64], out: &mut [f64]) {
        let m = u.len();
        let s = if self.source { t.sin() } else { 0.0 };
        let c = if self.advection { 0.5 / self.dx } else { 0.0 };
        for i in 0..m {
            let left = if i > 0 { u[i - 1] } else { 0.0 };
            let right = if i + 1 < m { u[i + 1] } else { 0.0 };
            out[i] = c * u[i] * (right - left) + self.r[i] * s;
        }
    }

    fn f1(&self, _t: f64, u: &[f64], out: &mut [f64]) {
        let m = u.len();
        let c = BURGERS_VISCOSITY / (self.dx * self.dx);
        for i in 0..m {
            let left = if i > 0 { u[i - 1] } else { 0.0 };
            let right = if i + 1 < m { u[i + 1] } else { 0.0 };
            out[i] = c * (left - 2.0 * u[i] + right);
        }
    }

    fn f1_structure(&self) -> Structure {
        Structure::Tridiagonal
    }

    fn f1_jacobian(&self, _t: f64, u: &[f64]) -> Option<BandMatrix> {
        let m = u.len();
        let c = BURGERS_VISCOSITY / (self.dx * self.dx);
        let mut j = BandMatrix::zeros(m, 1, 1);
        for i in 0..m {
            j.set(i, i, -2.0 * c);
            if i > 0 {
                j.set(i, i - 1, c);
            }
            if i + 1 < m {
                j.set(i, i + 1, c);
            }
        }
        Some(j)
    }

    fn f0_structure(&self) -> Structure {
        Structure::Tridiagonal
    }

    fn f0_jacobian(&self, _t: f64, u: &[f64]) -> Option<BandMatrix> {
        let m = u.len();
        let c = if self.advection { 0.5 / self.dx } else { 0.0 };
        let mut j = BandMatrix::zeros(m, 1, 1);
        for i in 0..m {
            let left = if i > 0 { u[i - 1] } else { 0.0 };
            let right = if i + 1 < m { u[i + 1] } else { 0.0 };
            j.set(i, i, c * (right - left));
            if i > 0 {
                j.set(i, i - 1, -c * u[i]);
            }
            if i + 1 < m {
                j.set(i, i + 1, c * u[i]);
            }
        }
        Some(j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{fd_jacobian, testing::jacobian_mismatch};

    #[test]
    fn source_profile() {
        for (x, r) in [(-1.0, 0.0), (-1.0 / 3.0, 0.0), (0.0, 1.0), (2.0 / 3.0, 0.0), (-1.0 / 6.0, 0.5), (0.9, 0.0)] {
            assert!((burgers_source_profile(x) - r).abs() < 1e-15, "r({x})");
        }
        assert!((burgers_source_profile(-1e-12) - burgers_source_profile(1e-12)).abs() < 1e-10);
    }

    #[test]
    fn resolution_must_divide_interval() {
        assert_eq!(burgers(1.0 / 400.0).unwrap().dim(), 799);
        assert_eq!(burgers(0.5).unwrap().dim(), 3);
        assert!(burgers(0.3).is_err());
        assert!(burgers(0.0).is_err());
        assert!(burgers(-0.1).is_err());
        assert!(burgers(3.0).is_err());
    }

    #[test]
    fn laplacian_row() {
        let p = burgers(0.1).unwrap();
        let j = p.f1_jacobian(0.0, &p.initial_state()).unwrap();
        let c = 0.1 / 0.01;
        for (col, v) in [(4, c), (5, -2.0 * c), (6, c), (7, 0.0)] {
            assert!((j.get(5, col) - v).abs() < 1e-9 * c);
        }
    }

    #[test]
    fn jacobians_match_differences() {
        let p = burgers(0.05).unwrap();
        let u: Vec<f64> = p.nodes().iter().map(|x| 3.0 * (2.0 * x).cos() + x).collect();
        let fd = fd_jacobian(|x, o| p.f0(0.7, x, o), &u, 1, 1);
        assert!(jacobian_mismatch(&p.f0_jacobian(0.7, &u).unwrap(), &fd) < 1e-6);
        let fd = fd_jacobian(|x, o| p.f1(0.7, x, o), &u, 1, 1);
        assert!(jacobian_mismatch(&p.f1_jacobian(0.7, &u).unwrap(), &fd) < 1e-6);
    }

    #[test]
    fn heat_mode_decays_at_continuous_rate() {
        let p = burgers(1.0 / 400.0).unwrap().without_source().without_advection();
        let u = p.initial_state();
        let mut out = vec![0.0; u.len()];
        p.f1(0.0, &u, &mut out);
        let rate = out.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() / u.iter().map(|b| b * b).sum::<f64>();
        let expected = -BURGERS_VISCOSITY * PI * PI;
        assert!(((rate - expected) / expected).abs() < 0.01, "{rate} vs {expected}");
        let residual = out.iter().zip(&u).map(|(a, b)| (a - rate * b).abs()).fold(0.0, f64::max);
        assert!(residual < 1e-10);
        let mut f0 = vec![0.0; u.len()];
        p.f0(1.3, &u, &mut f0);
        assert!(f0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn diffusion_dissipates_energy() {
        let p = burgers(0.02).unwrap();
        let mut out = vec![0.0; p.dim()];
        for k in 0..20 {
            let u: Vec<f64> = p.nodes().iter().map(|x| ((k as f64 + 1.0) * x).sin() + 0.1 * k as f64 * x * x).collect();
            p.f1(0.0, &u, &mut out);
            let d: f64 = out.iter().zip(&u).map(|(a, b)| a * b).sum();
            assert!(d <= 0.0);
        }
    }
}
