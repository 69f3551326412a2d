//! Step-ratio dependent coefficients and the order conditions of a tableau.
//!
//! For a ratio `σ = dt_n / dt_{n-1}` the matrices
//!
//! ```text
//! Q(σ)  = ((C V0 - R V0 D) S - σ⁻¹ P (C - I) V1) (V1 D)⁻¹
//! E1(σ) = (I - E2) V0 S V1⁻¹
//! ```
//!
//! give stage order `s` for the implicit part and exact extrapolation of
//! degree `s - 1` for the explicit part, with `S = diag(1, σ, …, σ^{s-1})`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::pow_vec;
use crate::tableau::PeerTableau;

/// Residual bound used by [`check_superconvergence`].
pub const CONDITION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoeffError {
    #[error("step ratio must be positive and finite (got {0})")]
    InvalidSigma(f64),
    #[error("{0} is singular")]
    Singular(&'static str),
    #[error("null space of I - Pᵀ has dimension {0}, expected 1")]
    NullSpaceDimension(usize),
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn check_sigma(sigma: f64) -> Result<(), CoeffError> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(CoeffError::InvalidSigma(sigma))
    }
}

/// Vandermonde data of the nodes, factorized once per tableau.
#[derive(Debug, Clone)]
pub struct VandermondeSet {
    c: DVector<f64>,
    v0: DMatrix<f64>,
    v1: DMatrix<f64>,
    v0_inv: DMatrix<f64>,
    v1_inv: DMatrix<f64>,
}

impl VandermondeSet {
    pub fn new(nodes: &DVector<f64>) -> Result<Self, CoeffError> {
        let s = nodes.len();
        let v0 = DMatrix::from_fn(s, s, |i, j| nodes[i].powi(j as i32));
        let v1 = DMatrix::from_fn(s, s, |i, j| (nodes[i] - 1.0).powi(j as i32));
        let v0_inv = v0.clone().lu().try_inverse().ok_or(CoeffError::Singular("V0"))?;
        let v1_inv = v1.clone().lu().try_inverse().ok_or(CoeffError::Singular("V1"))?;
        Ok(VandermondeSet {
            c: nodes.clone(),
            v0,
            v1,
            v0_inv,
            v1_inv,
        })
    }

    pub fn for_tableau(t: &PeerTableau) -> Result<Self, CoeffError> {
        Self::new(t.nodes())
    }

    pub fn stages(&self) -> usize {
        self.c.len()
    }

    /// `(c_i^{j-1})`
    pub fn v0(&self) -> &DMatrix<f64> {
        &self.v0
    }

    /// `((c_i - 1)^{j-1})`
    pub fn v1(&self) -> &DMatrix<f64> {
        &self.v1
    }

    pub fn v0_inv(&self) -> &DMatrix<f64> {
        &self.v0_inv
    }

    pub fn v1_inv(&self) -> &DMatrix<f64> {
        &self.v1_inv
    }

    pub fn c_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.c)
    }

    /// `diag(1, …, s)`
    pub fn d_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.stages(), self.stages(), |i, j| if i == j { (i + 1) as f64 } else { 0.0 })
    }

    /// `(s + 1) D⁻¹ - I`
    pub fn d_tilde(&self) -> DMatrix<f64> {
        let s = self.stages();
        DMatrix::from_fn(s, s, |i, j| {
            if i == j {
                (s + 1) as f64 / (i + 1) as f64 - 1.0
            } else {
                0.0
            }
        })
    }

    /// `diag(1, σ, …, σ^{s-1})`
    pub fn s_matrix(&self, sigma: f64) -> DMatrix<f64> {
        let s = self.stages();
        DMatrix::from_fn(s, s, |i, j| if i == j { sigma.powi(i as i32) } else { 0.0 })
    }

    /// 2-norm condition number of `V1`.
    pub fn cond_v1(&self) -> f64 {
        let sv = self.v1.singular_values();
        sv.max() / sv.min()
    }

    pub fn q(&self, t: &PeerTableau, sigma: f64) -> Result<DMatrix<f64>, CoeffError> {
        check_sigma(sigma)?;
        let s = self.stages();
        let c = self.c_matrix();
        let d = self.d_matrix();
        let shifted = &c - DMatrix::identity(s, s);
        let lhs = (&c * &self.v0 - t.r() * &self.v0 * &d) * self.s_matrix(sigma)
            - t.p() * shifted * &self.v1 / sigma;
        let d_inv = DMatrix::from_fn(s, s, |i, j| if i == j { 1.0 / (i + 1) as f64 } else { 0.0 });
        Ok(lhs * d_inv * &self.v1_inv)
    }

    pub fn e1(&self, t: &PeerTableau, sigma: f64) -> Result<DMatrix<f64>, CoeffError> {
        check_sigma(sigma)?;
        let s = self.stages();
        Ok((DMatrix::identity(s, s) - t.e2()) * &self.v0 * self.s_matrix(sigma) * &self.v1_inv)
    }

    pub fn assemble(&self, t: &PeerTableau, sigma: f64) -> Result<SigmaCoefficients, CoeffError> {
        let q = self.q(t, sigma)?;
        let e1 = self.e1(t, sigma)?;
        let qhat = &q + t.r() * &e1;
        Ok(SigmaCoefficients {
            sigma,
            q,
            e1,
            qhat,
            rhat: rhat(t),
        })
    }
}

/// `R E2` with its structural zeros kept exact.
pub fn rhat(t: &PeerTableau) -> DMatrix<f64> {
    let s = t.stages();
    let mut m = DMatrix::zeros(s, s);
    for i in 1..s {
        for j in 0..i {
            m[(i, j)] = (j + 1..=i).map(|k| t.r()[(i, k)] * t.e2()[(k, j)]).sum();
        }
    }
    m
}

/// Coefficient matrices of one step with ratio `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaCoefficients {
    pub sigma: f64,
    pub q: DMatrix<f64>,
    pub e1: DMatrix<f64>,
    /// `Q + R E1`
    pub qhat: DMatrix<f64>,
    /// `R E2`, strictly lower triangular
    pub rhat: DMatrix<f64>,
}

pub fn compute_q(t: &PeerTableau, sigma: f64) -> Result<DMatrix<f64>, CoeffError> {
    VandermondeSet::for_tableau(t)?.q(t, sigma)
}

pub fn compute_e1(t: &PeerTableau, sigma: f64) -> Result<DMatrix<f64>, CoeffError> {
    VandermondeSet::for_tableau(t)?.e1(t, sigma)
}

pub fn assemble(t: &PeerTableau, sigma: f64) -> Result<SigmaCoefficients, CoeffError> {
    VandermondeSet::for_tableau(t)?.assemble(t, sigma)
}

/// Stage defect `d_j(σ)` of the implicit method.
pub fn defect(t: &PeerTableau, sigma: f64, j: usize) -> Result<DVector<f64>, CoeffError> {
    assert!(j >= 1, "defect index starts at 1");
    let q = compute_q(t, sigma)?;
    Ok(defect_with(t, &q, sigma, j))
}

/// `d_j(σ)` for a given `Q(σ)`.
pub fn defect_with(t: &PeerTableau, q: &DMatrix<f64>, sigma: f64, j: usize) -> DVector<f64> {
    let c = t.nodes();
    let cm = c.add_scalar(-1.0);
    let jf = j as f64;
    (pow_vec(c, j)
        - t.p() * pow_vec(&cm, j) * sigma.powi(-(j as i32))
        - q * pow_vec(&cm, j - 1) * (jf * sigma.powi(1 - j as i32))
        - t.r() * pow_vec(c, j - 1) * jf)
        / factorial(j)
}

/// Extrapolation defect `l_j(σ)`.
pub fn extrapolation_defect(t: &PeerTableau, sigma: f64, j: usize) -> Result<DVector<f64>, CoeffError> {
    let e1 = compute_e1(t, sigma)?;
    Ok(extrapolation_defect_with(t, &e1, sigma, j))
}

pub fn extrapolation_defect_with(t: &PeerTableau, e1: &DMatrix<f64>, sigma: f64, j: usize) -> DVector<f64> {
    let s = t.stages();
    let c = t.nodes();
    let cm = c.add_scalar(-1.0);
    ((DMatrix::identity(s, s) - t.e2()) * pow_vec(c, j) - e1 * pow_vec(&cm, j) * sigma.powi(-(j as i32)))
        / factorial(j)
}

/// Unit vector spanning the null space of `I - Pᵀ`, first nonzero entry positive.
pub fn left_null_vector(t: &PeerTableau) -> Result<DVector<f64>, CoeffError> {
    null_vector_of_transpose(t.p())
}

pub fn null_vector_of_transpose(p: &DMatrix<f64>) -> Result<DVector<f64>, CoeffError> {
    let s = p.nrows();
    let a = DMatrix::identity(s, s) - p.transpose();
    let svd = a.svd(false, true);
    let vt = svd.v_t.as_ref().expect("requested V");
    let scale = svd.singular_values.max().max(1.0);
    let null_dim = svd.singular_values.iter().filter(|&&x| x <= 1e-10 * scale).count();
    if null_dim != 1 {
        return Err(CoeffError::NullSpaceDimension(null_dim));
    }
    let k = svd.singular_values.imin();
    let mut v: DVector<f64> = vt.row(k).transpose();
    v /= v.norm();
    let first = v.iter().copied().find(|x| x.abs() > 1e-12).unwrap_or(1.0);
    if first < 0.0 {
        v = -v;
    }
    Ok(v)
}

/// `V1⁻¹ (c - e)^s`
pub fn tilde_c(t: &PeerTableau) -> Result<DVector<f64>, CoeffError> {
    let vm = VandermondeSet::for_tableau(t)?;
    Ok(tilde_c_with(t, &vm))
}

fn tilde_c_with(t: &PeerTableau, vm: &VandermondeSet) -> DVector<f64> {
    vm.v1_inv() * pow_vec(&t.nodes().add_scalar(-1.0), t.stages())
}

/// Coefficients of `vᵀ d_{s+1}(σ)` as a polynomial in `1/σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HCoefficients {
    /// `h[k]` multiplies `σ^{-k}`, `k = 0..=s+1`.
    pub h: Vec<f64>,
}

impl HCoefficients {
    pub fn eval(&self, sigma: f64) -> f64 {
        let x = 1.0 / sigma;
        self.h.iter().rev().fold(0.0, |acc, &h| acc * x + h)
    }
}

pub fn h_coefficients(t: &PeerTableau, v: &DVector<f64>) -> Result<HCoefficients, CoeffError> {
    let vm = VandermondeSet::for_tableau(t)?;
    let s = t.stages();
    let c = t.nodes();
    let mut h = vec![0.0; s + 2];
    h[0] = v.dot(&(pow_vec(c, s + 1) - t.r() * pow_vec(c, s) * (s + 1) as f64)) / factorial(s + 1);
    let d_inv = DMatrix::from_fn(s, s, |i, j| if i == j { 1.0 / (i + 1) as f64 } else { 0.0 });
    let v_tilde = (t.r() * vm.v0() - vm.c_matrix() * vm.v0() * d_inv).tr_mul(v) / factorial(s);
    let c_tilde = tilde_c_with(t, &vm);
    for j in 1..=s {
        h[j] = v_tilde[s - j] * c_tilde[s - j];
    }
    h[s + 1] = node_condition(t, &vm, v) / factorial(s + 1);
    Ok(HCoefficients { h })
}

/// `vᵀ (C - I) V1 D̃ V1⁻¹ (c - e)^s`
fn node_condition(t: &PeerTableau, vm: &VandermondeSet, v: &DVector<f64>) -> f64 {
    let s = t.stages();
    let ci = vm.c_matrix() - DMatrix::identity(s, s);
    v.dot(&(ci * vm.v1() * vm.d_tilde() * tilde_c_with(t, vm)))
}

/// Which super-convergence condition set to verify.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConditionMode {
    /// Implicit method, variable steps.
    ImplicitVariable,
    /// Explicit method, variable steps.
    ExplicitVariable,
    /// Full IMEX set for variable steps.
    ImexVariable,
    /// Explicit part variable, implicit part constant steps.
    ImexRelaxed,
}

impl ConditionMode {
    pub const ALL: [ConditionMode; 4] = [
        ConditionMode::ImplicitVariable,
        ConditionMode::ExplicitVariable,
        ConditionMode::ImexVariable,
        ConditionMode::ImexRelaxed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConditionMode::ImplicitVariable => "implicit-variable",
            ConditionMode::ExplicitVariable => "explicit-variable",
            ConditionMode::ImexVariable => "imex-variable",
            ConditionMode::ImexRelaxed => "imex-relaxed",
        }
    }
}

impl std::str::FromStr for ConditionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ConditionMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown condition mode '{s}'"))
    }
}

/// A group of related scalar conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConditionGroup {
    /// `vᵀ (C - I) V1 D̃ V1⁻¹ (c - e)^s`
    Nodes,
    /// `vᵀ (c^j - j R c^{j-1})`
    Implicit,
    /// `vᵀ R (E2 - I) c^{j-1}`
    Coupling,
    /// `vᵀ (c^j - j R E2 c^{j-1})`
    Explicit,
    /// `vᵀ R (I - E2)(c^s - V0 V1⁻¹ (c - e)^s)`
    Extrapolation,
}

impl ConditionGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            ConditionGroup::Nodes => "nodes",
            ConditionGroup::Implicit => "implicit",
            ConditionGroup::Coupling => "coupling",
            ConditionGroup::Explicit => "explicit",
            ConditionGroup::Extrapolation => "extrapolation",
        }
    }

    fn groups(mode: ConditionMode) -> &'static [ConditionGroup] {
        use ConditionGroup::*;
        match mode {
            ConditionMode::ImplicitVariable => &[Nodes, Implicit],
            ConditionMode::ExplicitVariable => &[Nodes, Explicit],
            ConditionMode::ImexVariable => &[Nodes, Implicit, Coupling],
            ConditionMode::ImexRelaxed => &[Extrapolation, Nodes, Explicit],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionResidual {
    pub group: ConditionGroup,
    /// `j` for the indexed families.
    pub index: Option<usize>,
    pub value: f64,
}

impl ConditionResidual {
    pub fn id(&self) -> String {
        match self.index {
            Some(j) => format!("{}-{j}", self.group.as_str()),
            None => self.group.as_str().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub mode: ConditionMode,
    pub v: DVector<f64>,
    pub residuals: Vec<ConditionResidual>,
    pub tolerance: f64,
}

impl ConditionReport {
    /// Largest residual magnitude of each group, in evaluation order.
    pub fn group_maxima(&self) -> Vec<(ConditionGroup, f64)> {
        let mut out: Vec<(ConditionGroup, f64)> = Vec::new();
        for r in &self.residuals {
            match out.iter_mut().find(|(g, _)| *g == r.group) {
                Some((_, m)) => *m = m.max(r.value.abs()),
                None => out.push((r.group, r.value.abs())),
            }
        }
        out
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.value.abs()).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.residuals.iter().all(|r| r.value.abs() <= self.tolerance)
    }

    /// `condition,residual` rows with header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("condition,residual\n");
        for r in &self.residuals {
            out.push_str(&format!("{},{:.6e}\n", r.id(), r.value));
        }
        out
    }
}

/// Evaluates every scalar condition of `mode` with the left null vector of `I - Pᵀ`.
pub fn check_superconvergence(t: &PeerTableau, mode: ConditionMode) -> Result<ConditionReport, CoeffError> {
    let v = left_null_vector(t)?;
    let vm = VandermondeSet::for_tableau(t)?;
    let s = t.stages();
    let c = t.nodes();
    let re2 = rhat(t);
    let i_minus_e2 = DMatrix::identity(s, s) - t.e2();
    let mut residuals = Vec::new();
    for &group in ConditionGroup::groups(mode) {
        match group {
            ConditionGroup::Nodes => residuals.push(ConditionResidual {
                group,
                index: None,
                value: node_condition(t, &vm, &v),
            }),
            ConditionGroup::Extrapolation => {
                let x = pow_vec(c, s) - vm.v0() * tilde_c_with(t, &vm);
                residuals.push(ConditionResidual {
                    group,
                    index: None,
                    value: v.dot(&(t.r() * &i_minus_e2 * x)),
                });
            }
            ConditionGroup::Implicit | ConditionGroup::Coupling | ConditionGroup::Explicit => {
                for j in 2..=s + 1 {
                    let cj1 = pow_vec(c, j - 1);
                    let w = match group {
                        ConditionGroup::Implicit => pow_vec(c, j) - t.r() * &cj1 * j as f64,
                        ConditionGroup::Coupling => -(t.r() * &i_minus_e2 * &cj1),
                        _ => pow_vec(c, j) - &re2 * &cj1 * j as f64,
                    };
                    residuals.push(ConditionResidual {
                        group,
                        index: Some(j),
                        value: v.dot(&w),
                    });
                }
            }
        }
    }
    Ok(ConditionReport {
        mode,
        v,
        residuals,
        tolerance: CONDITION_TOL,
    })
}

/// Leading error constants at constant steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorConstants {
    /// `‖d_{s+1}(1)‖₂`
    pub c_im: f64,
    /// `‖R l_s(1)‖₂`
    pub c_ex: f64,
}

pub fn error_constants(t: &PeerTableau) -> Result<ErrorConstants, CoeffError> {
    let s = t.stages();
    Ok(ErrorConstants {
        c_im: defect(t, 1.0, s + 1)?.norm(),
        c_ex: (t.r() * extrapolation_defect(t, 1.0, s)?).norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tableau::{builtin_tableau, builtin_tableaus, BUILTIN_METHODS};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn inf_norm(v: &DVector<f64>) -> f64 {
        v.amax()
    }

    /// Solves the moment equations `d_j(σ) = 0`, `j = 1..s`, for `Q` directly.
    fn q_from_moments(t: &PeerTableau, sigma: f64) -> DMatrix<f64> {
        let s = t.stages();
        let c: Vec<f64> = t.nodes().iter().copied().collect();
        let mut w = DMatrix::zeros(s, s);
        let mut b = DMatrix::zeros(s, s);
        for j in 1..=s {
            let jf = j as f64;
            for i in 0..s {
                w[(i, j - 1)] = jf * sigma.powi(1 - j as i32) * (c[i] - 1.0).powi(j as i32 - 1);
            }
            for i in 0..s {
                let p_term: f64 = (0..s).map(|k| t.p()[(i, k)] * (c[k] - 1.0).powi(j as i32)).sum();
                let r_term: f64 = (0..s).map(|k| t.r()[(i, k)] * c[k].powi(j as i32 - 1)).sum();
                b[(i, j - 1)] = c[i].powi(j as i32) - p_term * sigma.powi(-(j as i32)) - jf * r_term;
            }
        }
        // Q W = B
        b * w.try_inverse().unwrap()
    }

    #[test]
    fn q_matches_moment_solve() {
        for t in builtin_tableaus() {
            for sigma in [0.5, 1.0, 2.0] {
                let q = compute_q(&t, sigma).unwrap();
                let oracle = q_from_moments(&t, sigma);
                assert!((q - oracle).amax() < 1e-10, "{}", t.name());
            }
        }
    }

    #[test]
    fn q_row_sums_and_stage_order_identity() {
        for t in builtin_tableaus() {
            let vm = VandermondeSet::for_tableau(&t).unwrap();
            let s = t.stages();
            for sigma in [0.5, 1.0, 2.0] {
                let q = vm.q(&t, sigma).unwrap();
                let e = DVector::from_element(s, 1.0);
                let rows = &q * &e;
                let expected = t.nodes() - t.p() * t.nodes().add_scalar(-1.0) / sigma - t.r() * &e;
                assert!((rows - expected).amax() < 1e-12);

                let c = vm.c_matrix();
                let d = vm.d_matrix();
                let s_inv = vm.s_matrix(1.0 / sigma);
                let ident = &c * vm.v0()
                    - t.p() * (&c - DMatrix::identity(s, s)) * vm.v1() * &s_inv / sigma
                    - &q * vm.v1() * &d * &s_inv
                    - t.r() * vm.v0() * &d;
                assert!(ident.amax() < 1e-11, "{} σ={sigma}", t.name());
            }
        }
    }

    #[test]
    fn q_depends_on_sigma_for_2sve() {
        let t = builtin_tableau("IMEX-Peer2sve").unwrap();
        let q1 = compute_q(&t, 1.0).unwrap();
        let q2 = compute_q(&t, 2.0).unwrap();
        assert!((&q1 - &q2).amax() > 1e-3);
        assert!((q2 - q_from_moments(&t, 2.0)).amax() < 1e-13);
    }

    #[test]
    fn e1_is_lagrange_extrapolation() {
        let base = builtin_tableau("IMEX-Peer2sve").unwrap();
        let t = PeerTableau::new(
            "no-e2",
            vec![2.0 / 3.0, 1.0],
            base.p().clone(),
            base.r().clone(),
            DMatrix::zeros(2, 2),
        )
        .unwrap();
        let e1 = compute_e1(&t, 1.0).unwrap();
        // Linear interpolant through x = -1/3, 0 evaluated at 2/3 and 1.
        let old = [-1.0 / 3.0, 0.0];
        let lagrange = |x: f64, k: usize| {
            let other = old[1 - k];
            (x - other) / (old[k] - other)
        };
        for (i, x) in [2.0 / 3.0, 1.0].into_iter().enumerate() {
            for k in 0..2 {
                assert_abs_diff_eq!(e1[(i, k)], lagrange(x, k), epsilon = 1e-13);
            }
        }
        let expected = DMatrix::from_row_slice(2, 2, &[-2.0, 3.0, -3.0, 4.0]);
        assert!((e1 - expected).amax() < 1e-13);
    }

    #[test]
    fn constant_functions_extrapolate_exactly() {
        for t in builtin_tableaus() {
            for sigma in [0.3, 1.0, 3.0] {
                let l0 = extrapolation_defect(&t, sigma, 0).unwrap();
                assert!(inf_norm(&l0) < 1e-12);
            }
        }
    }

    #[test]
    fn assemble_composes() {
        let t = builtin_tableau("IMEX-Peer2sve").unwrap();
        let coef = assemble(&t, 1.0).unwrap();
        assert_eq!(coef.q, compute_q(&t, 1.0).unwrap());
        assert_abs_diff_eq!(coef.rhat[(1, 0)], 0.75, epsilon = 1e-15);
        assert_eq!(coef.rhat[(0, 0)], 0.0);
        assert_eq!(coef.rhat[(0, 1)], 0.0);
        assert_eq!(coef.rhat[(1, 1)], 0.0);
        for t in builtin_tableaus() {
            let coef = assemble(&t, 1.3).unwrap();
            for i in 0..t.stages() {
                for j in i..t.stages() {
                    assert_eq!(coef.rhat[(i, j)], 0.0);
                }
            }
            let qhat = &coef.q + t.r() * &coef.e1;
            assert!((qhat - &coef.qhat).amax() == 0.0);
        }
    }

    #[test]
    fn invalid_sigma_is_rejected() {
        let t = builtin_tableau("IMEX-Peer3sv").unwrap();
        assert_eq!(compute_q(&t, 0.0), Err(CoeffError::InvalidSigma(0.0)));
        assert!(compute_e1(&t, -1.0).is_err());
    }

    #[test]
    fn stage_order_defects_vanish() {
        for t in builtin_tableaus() {
            for sigma in [0.5, 1.0, 1.7] {
                for j in 1..=t.stages() {
                    assert!(inf_norm(&defect(&t, sigma, j).unwrap()) <= 1e-11);
                }
                for j in 0..t.stages() {
                    assert!(inf_norm(&extrapolation_defect(&t, sigma, j).unwrap()) <= 1e-11);
                }
            }
        }
    }

    #[test]
    fn table_error_constants() {
        let expected = [(0.194, 0.283), (0.229, 0.143), (0.0747, 0.0675), (0.0202, 0.0337)];
        for (name, (c_im, c_ex)) in BUILTIN_METHODS.iter().zip(expected) {
            let ec = error_constants(&builtin_tableau(name).unwrap()).unwrap();
            assert!((ec.c_im / c_im - 1.0).abs() < 0.02, "{name} c_im {}", ec.c_im);
            assert!((ec.c_ex / c_ex - 1.0).abs() < 0.02, "{name} c_ex {}", ec.c_ex);
        }
    }

    #[test]
    fn null_vectors() {
        let v = left_null_vector(&builtin_tableau("IMEX-Peer3sv").unwrap()).unwrap();
        assert!((v - DVector::from_vec(vec![1.0, 0.0, 0.0])).amax() < 1e-12);
        let v = left_null_vector(&builtin_tableau("IMEX-Peer4sve").unwrap()).unwrap();
        assert!((v - DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0])).amax() < 1e-12);
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.5]);
        let v = null_vector_of_transpose(&p).unwrap();
        assert!((v - DVector::from_vec(vec![1.0, 0.0])).amax() < 1e-14);
        assert_eq!(
            null_vector_of_transpose(&DMatrix::identity(2, 2)),
            Err(CoeffError::NullSpaceDimension(2))
        );
        for t in builtin_tableaus() {
            let v = left_null_vector(&t).unwrap();
            let r = (DMatrix::identity(t.stages(), t.stages()) - t.p().transpose()) * &v;
            assert!(r.amax() <= 1e-12);
        }
    }

    #[test]
    fn tilde_c_structure() {
        let c = tilde_c(&builtin_tableau("IMEX-Peer2sve").unwrap()).unwrap();
        assert_abs_diff_eq!(c[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c[1], -1.0 / 3.0, epsilon = 1e-14);
        for t in builtin_tableaus() {
            let c = tilde_c(&t).unwrap();
            assert!(c[0].abs() <= 1e-12);
            for k in 1..t.stages() {
                assert!(c[k] < -1e-10, "{} c̃_{}", t.name(), k + 1);
            }
        }
    }

    #[test]
    fn condition_sets() {
        for name in ["IMEX-Peer3sv", "IMEX-Peer4sv"] {
            let t = builtin_tableau(name).unwrap();
            let rep = check_superconvergence(&t, ConditionMode::ImexVariable).unwrap();
            assert!(rep.passed(), "{name} {:?}", rep.group_maxima());
        }
        for name in ["IMEX-Peer2sve", "IMEX-Peer4sve"] {
            let t = builtin_tableau(name).unwrap();
            let rep = check_superconvergence(&t, ConditionMode::ImexRelaxed).unwrap();
            assert!(rep.passed(), "{name} {:?}", rep.group_maxima());
            assert!(!check_superconvergence(&t, ConditionMode::ImexVariable).unwrap().passed());
        }
        let t = builtin_tableau("IMEX-Peer4sve").unwrap();
        let v = left_null_vector(&t).unwrap();
        let ci = DMatrix::from_diagonal(&t.nodes().add_scalar(-1.0));
        assert!(ci.tr_mul(&v).amax() < 1e-15);
    }

    #[test]
    fn csv_lists_every_condition() {
        let t = builtin_tableau("IMEX-Peer3sv").unwrap();
        let rep = check_superconvergence(&t, ConditionMode::ImexVariable).unwrap();
        let csv = rep.to_csv();
        assert_eq!(csv.lines().count(), 1 + 1 + 3 + 3);
        assert!(csv.contains("coupling-4,"));
    }

    #[test]
    fn direct_defects_agree_with_condition_verdicts() {
        for t in builtin_tableaus() {
            let s = t.stages();
            let v = left_null_vector(&t).unwrap();
            let full = check_superconvergence(&t, ConditionMode::ImexVariable).unwrap().passed();
            let relaxed = check_superconvergence(&t, ConditionMode::ImexRelaxed).unwrap().passed();
            let mut worst_d: f64 = 0.0;
            let mut worst_sum: f64 = 0.0;
            for sigma in [0.3, 0.9, 1.5, 3.0] {
                let d = defect(&t, sigma, s + 1).unwrap();
                let rl = t.r() * extrapolation_defect(&t, sigma, s).unwrap();
                worst_d = worst_d.max(v.dot(&d).abs());
                worst_sum = worst_sum.max(v.dot(&(d + rl)).abs());
            }
            assert_eq!(full, worst_d <= 1e-9, "{}", t.name());
            assert!(relaxed);
            assert!(worst_sum <= 1e-9, "{}", t.name());
        }
    }

    fn random_tableau() -> impl Strategy<Value = PeerTableau> {
        (2usize..=4).prop_flat_map(|s| {
            (
                proptest::collection::vec(-1.5f64..0.9, s - 1),
                proptest::collection::vec(-1.0f64..1.0, s * s),
                proptest::collection::vec(-1.0f64..1.0, s * s),
                0.2f64..1.0,
            )
                .prop_filter_map("nodes too close", move |(mut nodes, pv, rv, gamma)| {
                    nodes.push(1.0);
                    let mut sorted = nodes.clone();
                    sorted.sort_by(f64::total_cmp);
                    if sorted.windows(2).any(|w| w[1] - w[0] < 0.1) {
                        return None;
                    }
                    let mut p = DMatrix::from_row_slice(s, s, &pv);
                    for i in 0..s {
                        let sum: f64 = (0..s - 1).map(|j| p[(i, j)]).sum();
                        p[(i, s - 1)] = 1.0 - sum;
                    }
                    let r = DMatrix::from_fn(s, s, |i, j| match i.cmp(&j) {
                        std::cmp::Ordering::Greater => rv[i * s + j],
                        std::cmp::Ordering::Equal => gamma,
                        std::cmp::Ordering::Less => 0.0,
                    });
                    let e2 = DMatrix::from_fn(s, s, |i, j| if i > j { rv[j * s + i] } else { 0.0 });
                    PeerTableau::new("random", nodes, p, r, e2).ok()
                })
        })
    }

    proptest! {
        #[test]
        fn h_polynomial_matches_direct_defect(t in random_tableau(), sigma in 0.2f64..5.0) {
            let v = match left_null_vector(&t) {
                Ok(v) => v,
                Err(_) => return Ok(()),
            };
            let h = h_coefficients(&t, &v).unwrap();
            let direct = v.dot(&defect(&t, sigma, t.stages() + 1).unwrap());
            let scale = 1.0 + h.h.iter().map(|x| x.abs()).sum::<f64>() * sigma.powi(-(t.stages() as i32 + 1)).max(1.0);
            prop_assert!((h.eval(sigma) - direct).abs() <= 1e-12 * scale,
                "h={} direct={}", h.eval(sigma), direct);
        }

        #[test]
        fn builtin_defects_vanish_over_sigma(k in 0usize..4, log_sigma in (0.2f64).ln()..(5.0f64).ln()) {
            let t = builtin_tableau(BUILTIN_METHODS[k]).unwrap();
            let sigma = log_sigma.exp();
            let vm = VandermondeSet::for_tableau(&t).unwrap();
            let q = vm.q(&t, sigma).unwrap();
            let e1 = vm.e1(&t, sigma).unwrap();
            for j in 1..=t.stages() {
                prop_assert!(defect_with(&t, &q, sigma, j).amax() <= 1e-11);
            }
            for j in 0..t.stages() {
                prop_assert!(extrapolation_defect_with(&t, &e1, sigma, j).amax() <= 1e-11);
            }
        }
    }
}
