use crate::linalg::BandMatrix;
use crate::problems::{f0_jacobian, f1_jacobian, SplitProblem};

use super::newton::{Newton, NewtonError, Tally};

/// Alexander's three-stage, L-stable, stiffly accurate SDIRK of order 3.
const GAMMA: f64 = 0.435_866_521_508_459;

fn sdirk_tableau() -> ([[f64; 3]; 3], [f64; 3]) {
    let g = GAMMA;
    let c2 = 0.5 * (1.0 + g);
    let b1 = -(6.0 * g * g - 16.0 * g + 1.0) / 4.0;
    let b2 = (6.0 * g * g - 20.0 * g + 5.0) / 4.0;
    ([[g, 0.0, 0.0], [c2 - g, g, 0.0], [b1, b2, g]], [g, c2, 1.0])
}

/// Piecewise cubic Hermite interpolant through `(t_k, u_k, u'_k)`.
#[derive(Debug, Clone)]
pub struct DenseOutput {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    derivs: Vec<Vec<f64>>,
}

impl DenseOutput {
    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let n = self.times.len();
        let k = match self.times.iter().position(|&tk| tk > t) {
            Some(0) => 0,
            Some(k) => k - 1,
            None => n - 2,
        };
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let h = t1 - t0;
        let th = (t - t0) / h;
        let (y0, y1, f0, f1) = (&self.values[k], &self.values[k + 1], &self.derivs[k], &self.derivs[k + 1]);
        for i in 0..out.len() {
            out[i] = (1.0 - th) * y0[i]
                + th * y1[i]
                + th * (th - 1.0) * ((1.0 - 2.0 * th) * (y1[i] - y0[i]) + (th - 1.0) * h * f0[i] + th * h * f1[i]);
        }
    }
}

fn full_rhs(p: &dyn SplitProblem, t: f64, u: &[f64], out: &mut [f64], tmp: &mut [f64]) {
    p.f0(t, u, out);
    p.f1(t, u, tmp);
    for (o, x) in out.iter_mut().zip(tmp.iter()) {
        *o += x;
    }
}

/// Work counters of a starter run.
#[derive(Debug, Default, Clone, Copy)]
pub struct StarterWork {
    pub steps: usize,
    pub evals: usize,
    pub newton: usize,
    pub jacobians: usize,
    pub factorizations: usize,
}

/// Integrates the whole right-hand side implicitly from `t0` to the last of
/// the increasing `breakpoints`, hitting each of them. The interval between
/// consecutive breakpoints gets its share of `substeps` equal steps (at
/// least one).
pub fn sdirk3_dense(
    p: &dyn SplitProblem,
    t0: f64,
    u0: &[f64],
    breakpoints: &[f64],
    substeps: usize,
    atol: f64,
    rtol: f64,
    work: &mut StarterWork,
) -> Result<DenseOutput, NewtonError> {
    let m = u0.len();
    let (a, c) = sdirk_tableau();
    let tau = breakpoints.last().expect("at least one breakpoint") - t0;
    let mut grid = Vec::new();
    let mut left = t0;
    for &b in breakpoints {
        if b <= left {
            continue;
        }
        let n = ((substeps as f64 * (b - left) / tau).ceil() as usize).max(1);
        for k in 1..n {
            grid.push(left + (b - left) * k as f64 / n as f64);
        }
        grid.push(b);
        left = b;
    }
    let mut newton = Newton::new(m, 10, 0.01, atol, rtol);
    let mut tally = Tally::default();
    let mut tmp = vec![0.0; m];
    let mut f = vec![0.0; m];
    full_rhs(p, t0, u0, &mut f, &mut tmp);
    work.evals += 1;
    let mut out = DenseOutput {
        times: vec![t0],
        values: vec![u0.to_vec()],
        derivs: vec![f],
    };
    let jac = |t: f64, u: &[f64]| -> BandMatrix { f0_jacobian(p, t, u).add_scaled(1.0, &f1_jacobian(p, t, u)) };
    let mut k_stage = vec![vec![0.0; m]; 3];
    let mut rhs = vec![0.0; m];
    let mut w = vec![0.0; m];
    let mut result = Ok(());
    for (n, &t_next) in grid.iter().enumerate() {
        let tn = out.times[n];
        let h = t_next - tn;
        let un = out.values[n].clone();
        newton.begin_step();
        for i in 0..3 {
            rhs.copy_from_slice(&un);
            for j in 0..i {
                for (r, kj) in rhs.iter_mut().zip(&k_stage[j]) {
                    *r += h * a[i][j] * kj;
                }
            }
            let ti = tn + c[i] * h;
            let pred = if i == 0 { un.clone() } else { w.clone() };
            let solved = newton.solve(
                h * GAMMA,
                &rhs,
                &pred,
                &mut w,
                &mut k_stage[i],
                |x, y| full_rhs(p, ti, x, y, &mut tmp),
                |x| jac(ti, x),
                &mut tally,
            );
            if let Err(e) = solved {
                result = Err(e);
                break;
            }
        }
        if result.is_err() {
            break;
        }
        out.times.push(t_next);
        out.values.push(w.clone());
        out.derivs.push(k_stage[2].clone());
        work.steps += 1;
    }
    work.evals += tally.evals;
    work.newton += tally.iters;
    work.jacobians += tally.jacobians;
    work.factorizations += tally.factorizations;
    result.map(|_| out)
}
