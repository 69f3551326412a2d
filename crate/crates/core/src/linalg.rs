//! Small dense helpers and a banded LU used by the stage solver.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular (zero pivot at row {0})")]
    Singular(usize),
    #[error("matrix contains non-finite entries")]
    NonFinite,
}

/// Square matrix stored by rows inside a band `[i - kl, i + ku]`.
///
/// The storage reserves `kl` extra super-diagonals so the LU factorization
/// with partial pivoting can be done in place.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let kl = kl.min(n.saturating_sub(1));
        let ku = ku.min(n.saturating_sub(1));
        let width = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn identity(n: usize, kl: usize, ku: usize) -> Self {
        let mut m = Self::zeros(n, kl, ku);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let mut m = Self::zeros(n, n.saturating_sub(1), n.saturating_sub(1));
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, a[(i, j)]);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    #[inline]
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            0.0
        }
    }

    /// Panics when `(i, j)` lies outside the declared band.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            self.in_band(i, j),
            "entry ({i}, {j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// Column range `[lo, hi)` of row `i` inside the declared band.
    #[inline]
    pub fn row_range(&self, i: usize) -> (usize, usize) {
        (i.saturating_sub(self.kl), (i + self.ku + 1).min(self.n))
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|x| *x *= a);
    }

    /// `self + a * other`, widening the band if needed.
    pub fn add_scaled(&self, a: f64, other: &BandMatrix) -> BandMatrix {
        assert_eq!(self.n, other.n);
        let mut out = BandMatrix::zeros(self.n, self.kl.max(other.kl), self.ku.max(other.ku));
        for (f, m) in [(1.0, self), (a, other)] {
            for i in 0..m.n {
                let (lo, hi) = m.row_range(i);
                for j in lo..hi {
                    out.add(i, j, f * m.get(i, j));
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (lo, hi) = self.row_range(i);
            *yi = (lo..hi).map(|j| self.get(i, j) * x[j]).sum();
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// `I - h * self`, the simplified-Newton iteration matrix.
    pub fn shifted_identity(&self, h: f64) -> BandMatrix {
        let mut out = self.clone();
        out.scale(-h);
        for i in 0..self.n {
            out.add(i, i, 1.0);
        }
        out
    }

    /// LU factorization with partial pivoting inside the band.
    pub fn lu(mut self) -> Result<BandLu, LinalgError> {
        if self.data.iter().any(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        let n = self.n;
        let kl = self.kl;
        // Upper bandwidth of U after fill-in.
        let ku_fill = self.ku + kl;
        let mut pivots = vec![0usize; n];
        let mut lower = vec![0.0; n * kl.max(1)];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.raw(k, k).abs();
            for i in k + 1..=last_row {
                let v = self.raw(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(LinalgError::Singular(k));
            }
            pivots[k] = p;
            let last_col = (k + ku_fill).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = self.raw(k, j);
                    let b = self.raw(p, j);
                    self.set_raw(k, j, b);
                    self.set_raw(p, j, a);
                }
            }
            let pivot = self.raw(k, k);
            for i in k + 1..=last_row {
                let l = self.raw(i, k) / pivot;
                lower[k * kl + (i - k - 1)] = l;
                self.set_raw(i, k, 0.0);
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let v = self.raw(i, j) - l * self.raw(k, j);
                        self.set_raw(i, j, v);
                    }
                }
            }
        }
        Ok(BandLu {
            factors: self,
            lower,
            pivots,
        })
    }

    // Access including the fill-in super-diagonals.
    #[inline]
    fn raw(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku + self.kl {
            return 0.0;
        }
        self.data[self.idx(i, j)]
    }

    #[inline]
    fn set_raw(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }
}

/// Factors produced by [`BandMatrix::lu`].
#[derive(Debug, Clone)]
pub struct BandLu {
    factors: BandMatrix,
    lower: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn dim(&self) -> usize {
        self.factors.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.factors.n;
        let kl = self.factors.kl;
        let ku_fill = self.factors.ku + kl;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                let last_row = (k + kl).min(n - 1);
                for i in k + 1..=last_row {
                    b[i] -= self.lower[k * kl + (i - k - 1)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + ku_fill).min(n - 1);
            let mut acc = b[k];
            for j in k + 1..=last_col {
                acc -= self.factors.raw(k, j) * b[j];
            }
            b[k] = acc / self.factors.raw(k, k);
        }
    }
}

/// Spectral radius of a complex square matrix via its Schur form.
pub fn spectral_radius(m: &DMatrix<Complex64>) -> f64 {
    match m.nrows() {
        0 => 0.0,
        1 => m[(0, 0)].norm(),
        2 => {
            // Closed form; avoids iterating on the most common small case.
            let tr = m[(0, 0)] + m[(1, 1)];
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            let disc = (tr * tr - 4.0 * det).sqrt();
            let a = (tr + disc) * 0.5;
            let b = (tr - disc) * 0.5;
            a.norm().max(b.norm())
        }
        _ => complex_eigenvalues(m).iter().map(|z| z.norm()).fold(0.0, f64::max),
    }
}

pub fn complex_eigenvalues(m: &DMatrix<Complex64>) -> Vec<Complex64> {
    if strictly_lower_is_zero(m.nrows(), |i, j| m[(i, j)] == Complex64::new(0.0, 0.0)) {
        return (0..m.nrows()).map(|i| m[(i, i)]).collect();
    }
    let schur = nalgebra::Schur::new(m.clone());
    let (_, t) = schur.unpack();
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

/// Eigenvalues of a real matrix; triangular inputs return their diagonal exactly.
pub fn real_matrix_eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    if strictly_lower_is_zero(m.nrows(), |i, j| m[(i, j)] == 0.0) {
        return (0..m.nrows()).map(|i| Complex64::new(m[(i, i)], 0.0)).collect();
    }
    m.complex_eigenvalues().iter().copied().collect()
}

fn strictly_lower_is_zero(n: usize, is_zero: impl Fn(usize, usize) -> bool) -> bool {
    (0..n).all(|i| (0..i).all(|j| is_zero(i, j)))
}

/// Promotes a real matrix to complex.
pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Solves `L x = b` for lower-triangular complex `L` by forward substitution.
pub fn forward_substitute(
    l: &DMatrix<Complex64>,
    b: &DMatrix<Complex64>,
) -> Result<DMatrix<Complex64>, LinalgError> {
    let n = l.nrows();
    let mut x = b.clone();
    for col in 0..b.ncols() {
        for i in 0..n {
            let mut acc = x[(i, col)];
            for j in 0..i {
                acc -= l[(i, j)] * x[(j, col)];
            }
            let d = l[(i, i)];
            if d.norm() == 0.0 || !d.is_finite() {
                return Err(LinalgError::Singular(i));
            }
            x[(i, col)] = acc / d;
        }
    }
    Ok(x)
}

/// Pointwise power of a vector.
pub fn pow_vec(v: &DVector<f64>, k: usize) -> DVector<f64> {
    v.map(|x| x.powi(k as i32))
}

/// Largest dimension handled without heap allocation by [`small_spectral_radius`].
pub const SMALL_DIM: usize = 8;

const CZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Monic characteristic polynomial of a row-major `n × n` matrix
/// (Faddeev-LeVerrier); `coef[k]` multiplies `λ^k`, `coef.len() == n + 1`.
pub fn characteristic_polynomial(a: &[Complex64], n: usize, coef: &mut [Complex64]) {
    assert!(n <= SMALL_DIM && a.len() >= n * n && coef.len() == n + 1);
    let mut m = [CZERO; SMALL_DIM * SMALL_DIM];
    let mut next = [CZERO; SMALL_DIM * SMALL_DIM];
    for i in 0..n {
        m[i * n + i] = Complex64::new(1.0, 0.0);
    }
    coef[n] = Complex64::new(1.0, 0.0);
    for k in 1..=n {
        // c_{n-k} = -tr(A M_k) / k
        let mut tr = CZERO;
        for i in 0..n {
            for j in 0..n {
                tr += a[i * n + j] * m[j * n + i];
            }
        }
        coef[n - k] = -tr / k as f64;
        if k == n {
            break;
        }
        // M_{k+1} = A M_k + c_{n-k} I
        for i in 0..n {
            for j in 0..n {
                let mut acc = CZERO;
                for l in 0..n {
                    acc += a[i * n + l] * m[l * n + j];
                }
                next[i * n + j] = acc;
            }
            next[i * n + i] += coef[n - k];
        }
        m[..n * n].copy_from_slice(&next[..n * n]);
    }
}

/// Roots of the monic polynomial `coef` (lowest degree first) by Aberth iteration.
pub fn polynomial_roots(coef: &[Complex64], roots: &mut [Complex64]) {
    let n = coef.len() - 1;
    assert_eq!(roots.len(), n);
    let radius = (1..=n)
        .map(|k| coef[n - k].norm().powf(1.0 / k as f64))
        .fold(0.0, f64::max);
    if radius == 0.0 {
        roots.fill(CZERO);
        return;
    }
    for (k, z) in roots.iter_mut().enumerate() {
        *z = Complex64::from_polar(radius, 0.4 + 2.0 * std::f64::consts::PI * k as f64 / n as f64);
    }
    for _ in 0..500 {
        let mut max_step: f64 = 0.0;
        for i in 0..n {
            let z = roots[i];
            let (mut p, mut dp) = (coef[n], CZERO);
            for k in (0..n).rev() {
                dp = dp * z + p;
                p = p * z + coef[k];
            }
            if p == CZERO {
                continue;
            }
            let ratio = p / dp;
            let mut sum = CZERO;
            for (j, &w) in roots.iter().enumerate() {
                if j != i {
                    sum += (z - w).inv();
                }
            }
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * sum);
            if !step.is_finite() {
                continue;
            }
            roots[i] = z - step;
            max_step = max_step.max(step.norm() / z.norm().max(1.0));
        }
        if max_step <= 4.0 * f64::EPSILON {
            break;
        }
    }
}

/// Spectral radius of a row-major `n × n` complex matrix, `n ≤ SMALL_DIM`.
pub fn small_spectral_radius(a: &[Complex64], n: usize) -> f64 {
    match n {
        0 => 0.0,
        1 => a[0].norm(),
        2 => {
            let tr = a[0] + a[3];
            let det = a[0] * a[3] - a[1] * a[2];
            let disc = (tr * tr - 4.0 * det).sqrt();
            ((tr + disc) * 0.5).norm().max(((tr - disc) * 0.5).norm())
        }
        _ => {
            let mut coef = [CZERO; SMALL_DIM + 1];
            let mut roots = [CZERO; SMALL_DIM];
            characteristic_polynomial(a, n, &mut coef[..=n]);
            polynomial_roots(&coef[..=n], &mut roots[..n]);
            roots[..n].iter().map(|z| z.norm()).fold(0.0, f64::max)
        }
    }
}

/// Schur-Cohn test: are all roots of `coef` (lowest degree first) strictly
/// inside the disk of the given radius?
pub fn roots_inside_disk(coef: &[Complex64], radius: f64) -> bool {
    let n = coef.len() - 1;
    let mut a = [CZERO; SMALL_DIM + 1];
    let mut scale = 1.0;
    for (k, &c) in coef.iter().enumerate() {
        a[k] = c * scale;
        scale *= radius;
    }
    for deg in (1..=n).rev() {
        let (lead, constant) = (a[deg], a[0]);
        if lead.norm() <= constant.norm() {
            return false;
        }
        // (conj(a_n) p(z) - a_0 p*(z)) / z
        let prev = a;
        for j in 0..deg {
            a[j] = lead.conj() * prev[j + 1] - constant * prev[deg - 1 - j].conj();
        }
    }
    true
}

/// `ρ(A) < bound` for a row-major `n × n` matrix, `n ≤ SMALL_DIM`.
pub fn small_spectral_radius_below(a: &[Complex64], n: usize, bound: f64) -> bool {
    if n <= 2 {
        return small_spectral_radius(a, n) < bound;
    }
    let mut coef = [CZERO; SMALL_DIM + 1];
    characteristic_polynomial(a, n, &mut coef[..=n]);
    roots_inside_disk(&coef[..=n], bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn band_lu_matches_dense_solve() {
        let n = 9;
        let mut a = BandMatrix::zeros(n, 2, 1);
        for i in 0..n {
            let (lo, hi) = a.row_range(i);
            for j in lo..hi {
                // Small diagonal forces pivoting.
                let v = if i == j { 0.1 } else { 1.0 + (i * 7 + j * 3) as f64 % 5.0 };
                a.set(i, j, v);
            }
        }
        let dense = a.to_dense();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 1.0).collect();
        let expected = dense.clone().lu().solve(&DVector::from_vec(b.clone())).unwrap();
        let lu = a.lu().unwrap();
        let mut x = b;
        lu.solve_in_place(&mut x);
        for i in 0..n {
            assert_relative_eq!(x[i], expected[i], max_relative = 1e-10);
        }
    }

    #[test]
    fn singular_band_is_reported() {
        let a = BandMatrix::zeros(3, 1, 1);
        assert_eq!(a.lu().unwrap_err(), LinalgError::Singular(0));
    }

    #[test]
    fn tridiagonal_shifted_identity() {
        let mut j = BandMatrix::zeros(4, 1, 1);
        for i in 0..4 {
            j.set(i, i, -2.0);
            if i > 0 {
                j.set(i, i - 1, 1.0);
            }
            if i < 3 {
                j.set(i, i + 1, 1.0);
            }
        }
        let m = j.shifted_identity(0.5);
        assert_eq!(m.get(1, 1), 2.0);
        assert_eq!(m.get(1, 0), -0.5);
        assert_eq!(m.get(0, 3), 0.0);
    }

    #[test]
    fn spectral_radius_of_rotation() {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        let m = DMatrix::from_row_slice(3, 3, &[
            c(0.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0),
            c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0),
            c(0.3, 0.0), c(0.2, 0.0), c(0.5, 0.1),
        ]);
        assert_relative_eq!(spectral_radius(&m), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn triangular_eigenvalues_are_exact() {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 0.3, 1.1, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let ev = real_matrix_eigenvalues(&m);
        assert_eq!(ev[0].norm(), 0.0);
        assert_eq!(ev[2].norm(), 1.0);
    }

    #[test]
    fn small_path_matches_schur() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for n in 1..=6 {
            for _ in 0..200 {
                let data: Vec<Complex64> = (0..n * n)
                    .map(|_| Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
                    .collect();
                let m = DMatrix::from_row_slice(n, n, &data);
                let schur = complex_eigenvalues(&m).iter().map(|z| z.norm()).fold(0.0, f64::max);
                assert_relative_eq!(small_spectral_radius(&data, n), schur, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn small_path_handles_repeated_zero_eigenvalues() {
        let c = |x: f64| Complex64::new(x, 0.0);
        #[rustfmt::skip]
        let p = [
            c(0.0), c(0.3), c(1.1), c(-0.4),
            c(0.0), c(0.0), c(-0.02), c(1.02),
            c(0.0), c(0.0), c(0.0), c(1.0),
            c(0.0), c(0.0), c(0.0), c(1.0),
        ];
        assert_relative_eq!(small_spectral_radius(&p, 4), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn disk_test_agrees_with_spectral_radius() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for n in 1..=5 {
            for _ in 0..300 {
                let data: Vec<Complex64> = (0..n * n)
                    .map(|_| Complex64::new(rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8)))
                    .collect();
                let rho = small_spectral_radius(&data, n);
                for bound in [0.5, 1.0, 1.5] {
                    if (rho - bound).abs() > 1e-9 {
                        assert_eq!(small_spectral_radius_below(&data, n, bound), rho < bound, "n={n} rho={rho}");
                    }
                }
            }
        }
    }
}
