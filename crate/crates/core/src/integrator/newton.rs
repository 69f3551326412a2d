use thiserror::Error;

use crate::linalg::{BandLu, BandMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum NewtonError {
    #[error("Newton iteration diverged")]
    Diverged,
    #[error("Newton iteration did not converge within the iteration limit")]
    MaxIter,
    #[error("iteration matrix is singular")]
    Singular,
}

/// Work done by one call, reported even when the iteration fails.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Tally {
    pub evals: usize,
    pub iters: usize,
    pub jacobians: usize,
    pub factorizations: usize,
}

/// Simplified Newton for `w - rhs - h F(w) = 0` with a frozen Jacobian and
/// a cached factorization of `I - h J`.
pub(crate) struct Newton {
    jac: Option<BandMatrix>,
    row_abs: Vec<f64>,
    lu: Option<(f64, BandLu)>,
    fresh: bool,
    stale: bool,
    max_iter: usize,
    tol_factor: f64,
    atol: f64,
    rtol: f64,
    g: Vec<f64>,
}

impl Newton {
    pub fn new(m: usize, max_iter: usize, tol_factor: f64, atol: f64, rtol: f64) -> Self {
        Newton {
            jac: None,
            row_abs: vec![0.0; m],
            lu: None,
            fresh: false,
            stale: false,
            max_iter,
            tol_factor,
            atol,
            rtol,
            g: vec![0.0; m],
        }
    }

    /// Marks the start of a step; a Jacobian kept from earlier steps is no
    /// longer "fresh".
    pub fn begin_step(&mut self) {
        self.fresh = false;
    }

    pub fn invalidate(&mut self) {
        self.stale = true;
    }

    fn prepare(&mut self, h: f64, jac: impl FnOnce() -> BandMatrix, tally: &mut Tally) -> Result<(), NewtonError> {
        if self.jac.is_none() || self.stale {
            let j = jac();
            for (i, r) in self.row_abs.iter_mut().enumerate() {
                let (lo, hi) = j.row_range(i);
                *r = (lo..hi).map(|k| j.get(i, k).abs()).sum();
            }
            self.jac = Some(j);
            self.fresh = true;
            self.stale = false;
            self.lu = None;
            tally.jacobians += 1;
        }
        if !matches!(self.lu, Some((hl, _)) if hl == h) {
            let jac = self.jac.as_ref().expect("Jacobian prepared above");
            let lu = jac.shifted_identity(h).lu().map_err(|_| NewtonError::Singular)?;
            self.lu = Some((h, lu));
            tally.factorizations += 1;
        }
        Ok(())
    }

    fn iterate(
        &mut self,
        h: f64,
        rhs: &[f64],
        w: &mut [f64],
        f: &mut [f64],
        eval: &mut impl FnMut(&[f64], &mut [f64]),
        tally: &mut Tally,
    ) -> Result<(), NewtonError> {
        let mut prev_norm = f64::INFINITY;
        for k in 0..=self.max_iter {
            eval(w, f);
            tally.evals += 1;
            let wn = w.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            let thr = self.tol_factor * self.atol.min(self.rtol * wn);
            let mut norm = 0.0f64;
            let mut converged = true;
            for j in 0..w.len() {
                let g = w[j] - rhs[j] - h * f[j];
                let floor = 64.0 * f64::EPSILON * (w[j].abs() + rhs[j].abs() + h * (f[j].abs() + self.row_abs[j] * wn))
                    + f64::MIN_POSITIVE;
                if !(g.abs() <= thr + floor) {
                    converged = false;
                }
                norm = norm.max(g.abs());
                self.g[j] = -g;
            }
            if converged && k > 0 {
                return Ok(());
            }
            if k == self.max_iter || !norm.is_finite() {
                break;
            }
            if k >= 1 {
                let rate = norm / prev_norm;
                if rate >= 1.0 {
                    return Err(NewtonError::Diverged);
                }
                if rate > 0.5 {
                    self.stale = true;
                }
            }
            prev_norm = norm;
            let (_, lu) = self.lu.as_ref().expect("factorization prepared");
            lu.solve_in_place(&mut self.g);
            for (x, d) in w.iter_mut().zip(&self.g) {
                *x += d;
            }
            tally.iters += 1;
        }
        if prev_norm.is_finite() {
            Err(NewtonError::MaxIter)
        } else {
            Err(NewtonError::Diverged)
        }
    }

    /// Solves starting from `pred` with at least one correction. On failure
    /// with a Jacobian inherited from an earlier step, refreshes it once and
    /// retries.
    #[allow(clippy::too_many_arguments)]
    pub fn solve(
        &mut self,
        h: f64,
        rhs: &[f64],
        pred: &[f64],
        w: &mut [f64],
        f: &mut [f64],
        mut eval: impl FnMut(&[f64], &mut [f64]),
        jac: impl Fn(&[f64]) -> BandMatrix,
        tally: &mut Tally,
    ) -> Result<(), NewtonError> {
        self.prepare(h, || jac(pred), tally)?;
        w.copy_from_slice(pred);
        match self.iterate(h, rhs, w, f, &mut eval, tally) {
            Ok(()) => Ok(()),
            Err(_) if !self.fresh => {
                self.stale = true;
                self.prepare(h, || jac(pred), tally)?;
                w.copy_from_slice(pred);
                self.iterate(h, rhs, w, f, &mut eval, tally)
            }
            Err(e) => Err(e),
        }
    }
}
