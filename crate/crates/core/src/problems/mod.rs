//! Split right-hand sides `u' = F0(t, u) + F1(t, u)`: `F0` is integrated
//! explicitly, `F1` implicitly.

mod advection_reaction;
mod burgers;
mod dahlquist;
mod prothero_robinson;
mod van_der_pol;

use std::sync::Arc;

use thiserror::Error;

use crate::linalg::BandMatrix;

pub use advection_reaction::{advection_reaction, AdvectionReaction};
pub use burgers::{burgers, Burgers};
pub use dahlquist::{dahlquist_split, DahlquistSplit};
pub use prothero_robinson::{prothero_robinson, ProtheroRobinson};
pub use van_der_pol::{van_der_pol, VanDerPol};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("unknown problem '{0}'; available: prothero-robinson, van-der-pol, burgers, advection-reaction")]
    Unknown(String),
}

/// Sparsity of a Jacobian, used to size banded storage and to group columns
/// in finite differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Structure {
    Dense,
    Tridiagonal,
    /// 2×2 blocks on the diagonal, coupling components `2k` and `2k + 1`.
    BlockDiagonal2,
    Banded { lower: usize, upper: usize },
}

impl Structure {
    /// `(lower, upper)` bandwidths for a system of dimension `m`.
    pub fn bandwidths(self, m: usize) -> (usize, usize) {
        let full = m.saturating_sub(1);
        match self {
            Structure::Dense => (full, full),
            Structure::Tridiagonal | Structure::BlockDiagonal2 => (1.min(full), 1.min(full)),
            Structure::Banded { lower, upper } => (lower.min(full), upper.min(full)),
        }
    }

    /// Smallest band containing both.
    pub fn union(self, other: Structure, m: usize) -> Structure {
        let (a, b) = (self.bandwidths(m), other.bandwidths(m));
        let (lower, upper) = (a.0.max(b.0), a.1.max(b.1));
        if lower + 1 >= m && upper + 1 >= m {
            Structure::Dense
        } else {
            Structure::Banded { lower, upper }
        }
    }
}

pub trait SplitProblem: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn t_span(&self) -> (f64, f64);

    fn initial_state(&self) -> Vec<f64>;

    /// Explicit part.
    fn f0(&self, t: f64, u: &[f64], out: &mut [f64]);

    /// Implicit part.
    fn f1(&self, t: f64, u: &[f64], out: &mut [f64]);

    fn f1_structure(&self) -> Structure;

    /// Analytic Jacobian of `F1`, if available.
    fn f1_jacobian(&self, _t: f64, _u: &[f64]) -> Option<BandMatrix> {
        None
    }

    fn f0_structure(&self) -> Structure {
        Structure::Dense
    }

    /// Analytic Jacobian of `F0`, if available.
    fn f0_jacobian(&self, _t: f64, _u: &[f64]) -> Option<BandMatrix> {
        None
    }

    /// Exact solution, when known.
    fn exact(&self, _t: f64) -> Option<Vec<f64>> {
        None
    }
}

/// Forward-difference Jacobian restricted to a band; columns that cannot
/// share a row are perturbed together, with increment `√ε (1 + |u_j|)`.
pub fn fd_jacobian(f: impl Fn(&[f64], &mut [f64]), u: &[f64], lower: usize, upper: usize) -> BandMatrix {
    let m = u.len();
    let mut jac = BandMatrix::zeros(m, lower, upper);
    let (lower, upper) = (jac.lower_bandwidth(), jac.upper_bandwidth());
    let stride = lower + upper + 1;
    let mut f_base = vec![0.0; m];
    f(u, &mut f_base);
    let mut shifted = u.to_vec();
    let mut f_shift = vec![0.0; m];
    let sqrt_eps = f64::EPSILON.sqrt();
    for group in 0..stride.min(m) {
        let cols = (group..m).step_by(stride);
        for j in cols.clone() {
            shifted[j] = u[j] + sqrt_eps * (1.0 + u[j].abs());
        }
        f(&shifted, &mut f_shift);
        for j in cols {
            let h = shifted[j] - u[j];
            for i in j.saturating_sub(upper)..(j + lower + 1).min(m) {
                jac.set(i, j, (f_shift[i] - f_base[i]) / h);
            }
            shifted[j] = u[j];
        }
    }
    jac
}

/// Jacobian of `F1`, analytic when the problem provides one.
pub fn f1_jacobian(p: &dyn SplitProblem, t: f64, u: &[f64]) -> BandMatrix {
    p.f1_jacobian(t, u).unwrap_or_else(|| {
        let (lo, up) = p.f1_structure().bandwidths(p.dim());
        fd_jacobian(|x, out| p.f1(t, x, out), u, lo, up)
    })
}

/// Jacobian of `F0`, analytic when the problem provides one.
pub fn f0_jacobian(p: &dyn SplitProblem, t: f64, u: &[f64]) -> BandMatrix {
    p.f0_jacobian(t, u).unwrap_or_else(|| {
        let (lo, up) = p.f0_structure().bandwidths(p.dim());
        fd_jacobian(|x, out| p.f0(t, x, out), u, lo, up)
    })
}

/// Treats the whole right-hand side implicitly: `F0 = 0`, `F1 = F0 + F1` of
/// the wrapped problem. Used for reference solutions.
pub struct Folded {
    inner: Arc<dyn SplitProblem>,
    name: String,
}

impl Folded {
    pub fn new(inner: Arc<dyn SplitProblem>) -> Self {
        let name = format!("{}-folded", inner.name());
        Folded { inner, name }
    }

    pub fn inner(&self) -> &dyn SplitProblem {
        self.inner.as_ref()
    }
}

impl SplitProblem for Folded {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn t_span(&self) -> (f64, f64) {
        self.inner.t_span()
    }

    fn initial_state(&self) -> Vec<f64> {
        self.inner.initial_state()
    }

    fn f0(&self, _t: f64, _u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn f1(&self, t: f64, u: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; u.len()];
        self.inner.f0(t, u, out);
        self.inner.f1(t, u, &mut tmp);
        out.iter_mut().zip(&tmp).for_each(|(o, x)| *o += x);
    }

    fn f1_structure(&self) -> Structure {
        self.inner.f0_structure().union(self.inner.f1_structure(), self.dim())
    }

    fn f1_jacobian(&self, t: f64, u: &[f64]) -> Option<BandMatrix> {
        Some(f0_jacobian(self.inner(), t, u).add_scaled(1.0, &f1_jacobian(self.inner(), t, u)))
    }

    fn f0_structure(&self) -> Structure {
        Structure::Banded { lower: 0, upper: 0 }
    }

    fn f0_jacobian(&self, _t: f64, u: &[f64]) -> Option<BandMatrix> {
        Some(BandMatrix::zeros(u.len(), 0, 0))
    }

    fn exact(&self, t: f64) -> Option<Vec<f64>> {
        self.inner.exact(t)
    }
}

/// Names accepted by [`problem_by_name`].
pub const PROBLEM_NAMES: [&str; 4] = ["prothero-robinson", "van-der-pol", "burgers", "advection-reaction"];

/// A benchmark problem at its default (desk-scale) size.
pub fn problem_by_name(name: &str) -> Result<Arc<dyn SplitProblem>, ProblemError> {
    Ok(match name {
        "prothero-robinson" => Arc::new(prothero_robinson()),
        "van-der-pol" => Arc::new(van_der_pol()),
        "burgers" => Arc::new(burgers(1.0 / 400.0)?),
        "advection-reaction" => Arc::new(advection_reaction(400)?),
        _ => return Err(ProblemError::Unknown(name.into())),
    })
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Max relative deviation between analytic and difference Jacobians,
    /// entries scaled by the largest magnitude in their row.
    pub fn jacobian_mismatch(analytic: &BandMatrix, fd: &BandMatrix) -> f64 {
        let a = analytic.to_dense();
        let b = fd.to_dense();
        let mut worst: f64 = 0.0;
        for i in 0..a.nrows() {
            let scale = a.row(i).amax().max(1.0);
            for j in 0..a.ncols() {
                worst = worst.max((a[(i, j)] - b[(i, j)]).abs() / scale);
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grouped_differences_match_dense_differences() {
        let f = |u: &[f64], out: &mut [f64]| {
            let m = u.len();
            for i in 0..m {
                let l = if i > 0 { u[i - 1] } else { 0.0 };
                let r = if i + 2 < m { u[i + 2] } else { 0.0 };
                out[i] = l * u[i] + r.sin() - 2.0 * u[i];
            }
        };
        let u: Vec<f64> = (0..11).map(|k| 0.3 * k as f64 - 1.0).collect();
        let banded = fd_jacobian(f, &u, 1, 2);
        let dense = fd_jacobian(f, &u, 10, 10);
        assert!((banded.to_dense() - dense.to_dense()).amax() < 1e-12);
        for i in 0..11 {
            let l = if i > 0 { u[i - 1] } else { 0.0 };
            assert!((banded.get(i, i) - (l - 2.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn structure_bandwidths() {
        assert_eq!(Structure::Dense.bandwidths(5), (4, 4));
        assert_eq!(Structure::BlockDiagonal2.bandwidths(6), (1, 1));
        assert_eq!(Structure::Banded { lower: 6, upper: 4 }.bandwidths(3), (2, 2));
        assert_eq!(
            Structure::Tridiagonal.union(Structure::Banded { lower: 6, upper: 4 }, 100),
            Structure::Banded { lower: 6, upper: 4 }
        );
    }

    #[test]
    fn folded_sums_both_parts() {
        let p: Arc<dyn SplitProblem> = Arc::new(prothero_robinson());
        let folded = Folded::new(p.clone());
        let u = [0.7, -0.2];
        let (mut a, mut b, mut c) = ([0.0; 2], [0.0; 2], [0.0; 2]);
        p.f0(0.4, &u, &mut a);
        p.f1(0.4, &u, &mut b);
        folded.f1(0.4, &u, &mut c);
        for k in 0..2 {
            assert_eq!(c[k], a[k] + b[k]);
        }
        folded.f0(0.4, &u, &mut c);
        assert_eq!(c, [0.0, 0.0]);
        let jac = folded.f1_jacobian(0.4, &u).unwrap();
        assert_eq!(jac.get(1, 0), 1.0);
        assert_eq!(jac.get(0, 0), -1e6);
    }

    #[test]
    fn lookup_by_name() {
        for name in PROBLEM_NAMES {
            assert_eq!(problem_by_name(name).unwrap().name(), name);
        }
        assert!(problem_by_name("brusselator").is_err());
    }
}
