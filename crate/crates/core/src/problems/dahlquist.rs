use num_complex::Complex64;

use crate::linalg::BandMatrix;

use super::{SplitProblem, Structure};

/// `y' = λ0 y + λ1 y` for complex `y`, stored as `(Re y, Im y)`.
#[derive(Debug, Clone)]
pub struct DahlquistSplit {
    lambda0: Complex64,
    lambda1: Complex64,
    y0: Complex64,
    t_end: f64,
}

pub fn dahlquist_split(lambda0: Complex64, lambda1: Complex64) -> DahlquistSplit {
    DahlquistSplit {
        lambda0,
        lambda1,
        y0: Complex64::new(1.0, 0.0),
        t_end: 1.0,
    }
}

impl DahlquistSplit {
    pub fn with_initial(mut self, y0: Complex64) -> Self {
        self.y0 = y0;
        self
    }

    pub fn with_end_time(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    fn times(lambda: Complex64, u: &[f64], out: &mut [f64]) {
        let y = lambda * Complex64::new(u[0], u[1]);
        out[0] = y.re;
        out[1] = y.im;
    }

    fn matrix(lambda: Complex64) -> BandMatrix {
        let mut j = BandMatrix::zeros(2, 1, 1);
        j.set(0, 0, lambda.re);
        j.set(0, 1, -lambda.im);
        j.set(1, 0, lambda.im);
        j.set(1, 1, lambda.re);
        j
    }
}

impl SplitProblem for DahlquistSplit {
    fn name(&self) -> &str {
        "dahlquist"
    }

    fn dim(&self) -> usize {
        2
    }

    fn t_span(&self) -> (f64, f64) {
        (0.0, self.t_end)
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![self.y0.re, self.y0.im]
    }

    fn f0(&self, _t: f64, u: &[f64], out: &mut [f64]) {
        Self::times(self.lambda0, u, out);
    }

    fn f1(&self, _t: f64, u: &[f64], out: &mut [f64]) {
        Self::times(self.lambda1, u, out);
    }

    fn f1_structure(&self) -> Structure {
        Structure::Dense
    }

    fn f1_jacobian(&self, _t: f64, _u: &[f64]) -> Option<BandMatrix> {
        Some(Self::matrix(self.lambda1))
    }

    fn f0_jacobian(&self, _t: f64, _u: &[f64]) -> Option<BandMatrix> {
        Some(Self::matrix(self.lambda0))
    }

    fn exact(&self, t: f64) -> Option<Vec<f64>> {
        let y = ((self.lambda0 + self.lambda1) * t).exp() * self.y0;
        Some(vec![y.re, y.im])
    }
}
