//! Peer method tableaus: the constant data `(c, P, R, E2)` of one method.
//!
//! `R` is lower triangular with constant diagonal `gamma > 0`, `E2` strictly
//! lower triangular, `c_s = 1` with pairwise distinct nodes, and `P e = e`.
//! The step-ratio dependent matrices are derived from these in [`crate::coeffs`].

use std::fmt::{self, Write as _};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::real_matrix_eigenvalues;

/// Names accepted by [`builtin_tableau`].
pub const BUILTIN_METHODS: [&str; 4] = ["IMEX-Peer2sve", "IMEX-Peer3sv", "IMEX-Peer4sv", "IMEX-Peer4sve"];

/// Tolerance on `|(P e)_i - 1|` for a tableau to count as pre-consistent.
pub const PRECONSISTENCY_TOL: f64 = 1e-13;
/// Loaded rows of `P` further than this from summing to one are rejected.
pub const RENORMALIZE_TOL: f64 = 1e-12;

const FILE_HEADER: &str = "peer-tableau v1";

/// A structural property a tableau failed.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("s must be at least 2 (got {0})")]
    TooFewStages(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("c_s ≠ 1 (c_s = {0})")]
    LastNodeNotOne(f64),
    #[error("nodes not distinct (c_{i} = c_{j})", i = .0 + 1, j = .1 + 1)]
    NodesNotDistinct(usize, usize),
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("R not lower triangular (R_{i}{j} = {v})", i = .0 + 1, j = .1 + 1, v = .2)]
    RNotLowerTriangular(usize, usize, f64),
    #[error("diagonal of R not constant (R_{i}{i} = {v}, R_11 = {g})", i = .0 + 1, v = .1, g = .2)]
    DiagonalNotConstant(usize, f64, f64),
    #[error("R diagonal not positive (gamma = {0})")]
    GammaNotPositive(f64),
    #[error("E2 not strictly lower triangular (E2_{i}{j} = {v})", i = .0 + 1, j = .1 + 1, v = .2)]
    E2NotStrictlyLower(usize, usize, f64),
    #[error("P e ≠ e: row {row} sums to {sum}", row = .0 + 1, sum = .1)]
    NotPreconsistent(usize, f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TableauError {
    #[error("unknown method '{name}'; available: {}", BUILTIN_METHODS.join(", "))]
    UnknownMethod { name: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid tableau: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(Violation::to_string).collect::<Vec<_>>().join("; ")
}

/// Unvalidated tableau fields, as read from a file or assembled by hand.
#[derive(Debug, Clone, PartialEq)]
pub struct TableauData {
    pub name: String,
    pub c: Vec<f64>,
    pub p: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub e2: DMatrix<f64>,
}

impl TableauData {
    /// Every violated invariant, in a fixed order. Zero-stability is not
    /// part of this list; see [`check_zero_stability`].
    pub fn violations(&self) -> Vec<Violation> {
        let s = self.c.len();
        let mut out = Vec::new();
        if s < 2 {
            out.push(Violation::TooFewStages(s));
            return out;
        }
        for (what, m) in [("P", &self.p), ("R", &self.r), ("E2", &self.e2)] {
            if m.nrows() != s || m.ncols() != s {
                out.push(Violation::Dimension(format!(
                    "{what} is {}x{}, expected {s}x{s}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        if !out.is_empty() {
            return out;
        }
        if self.c.iter().any(|x| !x.is_finite()) {
            out.push(Violation::NonFinite("c"));
        }
        for (what, m) in [("P", &self.p), ("R", &self.r), ("E2", &self.e2)] {
            if m.iter().any(|x| !x.is_finite()) {
                out.push(Violation::NonFinite(what));
            }
        }
        if !out.is_empty() {
            return out;
        }
        if self.c[s - 1] != 1.0 {
            out.push(Violation::LastNodeNotOne(self.c[s - 1]));
        }
        'nodes: for i in 0..s {
            for j in i + 1..s {
                if self.c[i] == self.c[j] {
                    out.push(Violation::NodesNotDistinct(i, j));
                    break 'nodes;
                }
            }
        }
        'upper: for i in 0..s {
            for j in i + 1..s {
                if self.r[(i, j)] != 0.0 {
                    out.push(Violation::RNotLowerTriangular(i, j, self.r[(i, j)]));
                    break 'upper;
                }
            }
        }
        let gamma = self.r[(0, 0)];
        if let Some(i) = (1..s).find(|&i| self.r[(i, i)] != gamma) {
            out.push(Violation::DiagonalNotConstant(i, self.r[(i, i)], gamma));
        }
        if gamma <= 0.0 {
            out.push(Violation::GammaNotPositive(gamma));
        }
        'e2: for i in 0..s {
            for j in i..s {
                if self.e2[(i, j)] != 0.0 {
                    out.push(Violation::E2NotStrictlyLower(i, j, self.e2[(i, j)]));
                    break 'e2;
                }
            }
        }
        for i in 0..s {
            let sum: f64 = self.p.row(i).sum();
            if (sum - 1.0).abs() > PRECONSISTENCY_TOL {
                out.push(Violation::NotPreconsistent(i, sum));
            }
        }
        out
    }
}

/// A validated, immutable Peer method tableau.
#[derive(Debug, Clone, PartialEq)]
pub struct PeerTableau {
    name: String,
    c: DVector<f64>,
    p: DMatrix<f64>,
    r: DMatrix<f64>,
    e2: DMatrix<f64>,
    gamma: f64,
}

impl PeerTableau {
    pub fn new(
        name: impl Into<String>,
        c: Vec<f64>,
        p: DMatrix<f64>,
        r: DMatrix<f64>,
        e2: DMatrix<f64>,
    ) -> Result<Self, TableauError> {
        Self::try_from(TableauData {
            name: name.into(),
            c,
            p,
            r,
            e2,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of stages `s`.
    pub fn stages(&self) -> usize {
        self.c.len()
    }

    pub fn nodes(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn e2(&self) -> &DMatrix<f64> {
        &self.e2
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn c_min(&self) -> f64 {
        self.c.min()
    }

    pub fn c_max(&self) -> f64 {
        self.c.max()
    }

    /// `max_i |(P e)_i - 1|`.
    pub fn preconsistency_residual(&self) -> f64 {
        self.p
            .row_iter()
            .map(|row| (row.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_data(&self) -> TableauData {
        TableauData {
            name: self.name.clone(),
            c: self.c.iter().copied().collect(),
            p: self.p.clone(),
            r: self.r.clone(),
            e2: self.e2.clone(),
        }
    }

    /// Same method under another name.
    pub fn renamed(&self, name: impl Into<String>) -> Self {
        PeerTableau {
            name: name.into(),
            ..self.clone()
        }
    }
}

impl TryFrom<TableauData> for PeerTableau {
    type Error = TableauError;

    fn try_from(d: TableauData) -> Result<Self, TableauError> {
        let violations = d.violations();
        if !violations.is_empty() {
            return Err(TableauError::Invalid(violations));
        }
        let gamma = d.r[(0, 0)];
        Ok(PeerTableau {
            name: d.name,
            c: DVector::from_vec(d.c),
            p: d.p,
            r: d.r,
            e2: d.e2,
            gamma,
        })
    }
}

impl fmt::Display for PeerTableau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&save_tableau(self))
    }
}

fn lower(s: usize, gamma: f64, below: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(s, s);
    let mut k = 0;
    for i in 0..s {
        for j in 0..i {
            m[(i, j)] = below[k];
            k += 1;
        }
        m[(i, i)] = gamma;
    }
    m
}

fn builtin_data(name: &str) -> Option<TableauData> {
    let data = match name {
        "IMEX-Peer2sve" => TableauData {
            name: name.into(),
            c: vec![2.0 / 3.0, 1.0],
            p: DMatrix::from_row_slice(2, 2, &[-19.0 / 20.0, 39.0 / 20.0, 0.0, 1.0]),
            r: lower(2, 17.0 / 20.0, &[-19.0 / 20.0]),
            e2: lower(2, 0.0, &[15.0 / 17.0]),
        },
        "IMEX-Peer3sv" => TableauData {
            name: name.into(),
            c: vec![0.0, 0.5, 1.0],
            #[rustfmt::skip]
            p: DMatrix::from_row_slice(3, 3, &[
                1.000000000000000, 0.000000000000000, 0.000000000000000,
                1.009534846612963, -0.000125189884283, -0.009409656728680,
                0.927244072163109, -0.000247968521087, 0.073003896357977,
            ]),
            r: lower(
                3,
                0.690969692535085,
                &[0.351562922857064, 0.346024253990984, 0.328884660689640],
            ),
            e2: lower(
                3,
                0.0,
                &[1.454929231059714, -6.099201725139450, 3.157746208382228],
            ),
        },
        "IMEX-Peer4sv" => TableauData {
            name: name.into(),
            c: vec![0.0, -1.598239239549169, 0.523829503832339, 1.0],
            #[rustfmt::skip]
            p: DMatrix::from_row_slice(4, 4, &[
                1.000000000000000, 0.000000000000000, 0.000000000000000, 0.000000000000000,
                1.000204745561481, -0.000195233457439, -0.000009518220959, 0.000000006116916,
                1.169763235411655, -0.169740581681421, -0.000025123517333, 0.000002469787099,
                1.915153835547942, -0.244331567248295, -0.671042624270695, 0.000220355971049,
            ]),
            r: lower(
                4,
                0.681884472048995,
                &[
                    1.292744499701930,
                    1.074957286644128,
                    -0.054028162784565,
                    4.064480810437903,
                    1.031994574173631,
                    -0.534558192336057,
                ],
            ),
            e2: lower(
                4,
                0.0,
                &[
                    -0.153830152235951,
                    0.065444441626366,
                    -0.976514386415223,
                    -0.234155732816782,
                    -2.535629358626096,
                    1.477107513945526,
                ],
            ),
        },
        "IMEX-Peer4sve" => TableauData {
            name: name.into(),
            c: vec![-0.868838855210029, -0.253884413463736, 0.754504864110948, 1.0],
            #[rustfmt::skip]
            p: DMatrix::from_row_slice(4, 4, &[
                0.000000000000000, 0.316402904545681, 1.127642509582261, -0.444045414127942,
                0.000000000000000, 0.000000000000000, -0.017465269321373, 1.017465269321373,
                0.000000000000000, 0.000000000000000, 0.000000000000000, 1.000000000000000,
                0.000000000000000, 0.000000000000000, 0.000000000000000, 1.000000000000000,
            ]),
            r: lower(
                4,
                0.473861788489939,
                &[
                    0.732961380396538,
                    -2.472299983846101,
                    0.077358285702625,
                    -1.603925020256191,
                    -2.797576519478004,
                    -0.278164642408456,
                ],
            ),
            e2: lower(
                4,
                0.0,
                &[
                    -0.183287385063759,
                    5.974911797174020,
                    -2.556627399170977,
                    2.456065798975378,
                    -2.032396276261657,
                    1.255044479285407,
                ],
            ),
        },
        _ => return None,
    };
    Some(data)
}

/// One of the four shipped methods, by name.
pub fn builtin_tableau(name: &str) -> Result<PeerTableau, TableauError> {
    let data = builtin_data(name).ok_or_else(|| TableauError::UnknownMethod { name: name.into() })?;
    PeerTableau::try_from(data)
}

/// All shipped methods in [`BUILTIN_METHODS`] order.
pub fn builtin_tableaus() -> Vec<PeerTableau> {
    BUILTIN_METHODS
        .iter()
        .map(|n| builtin_tableau(n).expect("shipped tableau is valid"))
        .collect()
}

/// Serializes to the `peer-tableau v1` text format with 17 significant digits.
pub fn save_tableau(t: &PeerTableau) -> String {
    let mut out = String::new();
    let s = t.stages();
    let num = |x: f64| format!("{x:.16e}");
    let _ = writeln!(out, "{FILE_HEADER}");
    let _ = writeln!(out, "name {}", t.name());
    let _ = writeln!(out, "s {s}");
    let nodes: Vec<String> = t.nodes().iter().map(|&x| num(x)).collect();
    let _ = writeln!(out, "c {}", nodes.join(" "));
    for (label, m) in [("P", t.p()), ("R", t.r()), ("E2", t.e2())] {
        let _ = writeln!(out, "{label}");
        for i in 0..s {
            let row: Vec<String> = (0..s).map(|j| num(m[(i, j)])).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    out
}

/// Parses the text format without checking invariants.
pub fn parse_tableau(source: &str) -> Result<TableauData, TableauError> {
    let err = |line: usize, message: String| TableauError::Parse { line, message };
    let mut lines = source
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| err(source.lines().count().max(1), format!("unexpected end of input, expected {what}")))
    };
    let parse_reals = |line: usize, fields: &[&str]| -> Result<Vec<f64>, TableauError> {
        fields
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| err(line, format!("invalid number '{f}'")))
            })
            .collect()
    };

    let (n, header) = next("header")?;
    if header != FILE_HEADER {
        return Err(err(n, format!("expected header '{FILE_HEADER}', found '{header}'")));
    }
    let (n, l) = next("name")?;
    let name = l
        .strip_prefix("name")
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| err(n, "expected 'name <id>'".into()))?
        .to_string();
    let (n, l) = next("stage count")?;
    let s: usize = l
        .strip_prefix('s')
        .and_then(|r| r.trim().parse().ok())
        .ok_or_else(|| err(n, "expected 's <int>'".into()))?;
    if s < 2 {
        return Err(err(n, format!("s must be at least 2, got {s}")));
    }
    let (n, l) = next("nodes")?;
    let fields: Vec<&str> = l.split_whitespace().collect();
    if fields.first() != Some(&"c") {
        return Err(err(n, "expected 'c <s reals>'".into()));
    }
    let c = parse_reals(n, &fields[1..])?;
    if c.len() != s {
        return Err(err(n, format!("expected {s} nodes, found {}", c.len())));
    }

    let mut blocks = Vec::with_capacity(3);
    for label in ["P", "R", "E2"] {
        let (n, l) = next(label)?;
        if l != label {
            return Err(err(n, format!("expected block label '{label}', found '{l}'")));
        }
        let mut m = DMatrix::zeros(s, s);
        for i in 0..s {
            let (n, l) = next(&format!("row {} of {label}", i + 1))?;
            let fields: Vec<&str> = l.split_whitespace().collect();
            let row = parse_reals(n, &fields)?;
            if row.len() != s {
                return Err(err(n, format!("row {} of {label} has {} entries, expected {s}", i + 1, row.len())));
            }
            for (j, v) in row.into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        blocks.push(m);
    }
    if let Some((n, l)) = lines.next() {
        return Err(err(n, format!("unexpected trailing content '{l}'")));
    }
    let e2 = blocks.pop().unwrap();
    let r = blocks.pop().unwrap();
    let p = blocks.pop().unwrap();
    Ok(TableauData { name, c, p, r, e2 })
}

/// Parses and validates a tableau file.
///
/// Rows of `P` summing to one within [`PRECONSISTENCY_TOL`] are kept as is;
/// rows within [`RENORMALIZE_TOL`] are divided by their sum; anything further
/// off is rejected.
pub fn load_tableau(source: &str) -> Result<PeerTableau, TableauError> {
    let mut data = parse_tableau(source)?;
    for i in 0..data.p.nrows() {
        let sum: f64 = data.p.row(i).sum();
        let dev = (sum - 1.0).abs();
        if dev > PRECONSISTENCY_TOL && dev <= RENORMALIZE_TOL {
            data.p.row_mut(i).unscale_mut(sum);
        }
    }
    PeerTableau::try_from(data)
}

/// Eigenvalue summary of `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroStabilityReport {
    pub eigenvalues: Vec<Complex64>,
    /// Moduli sorted in decreasing order.
    pub moduli: Vec<f64>,
    /// Number of eigenvalues within `1e-10` of one.
    pub unit_count: usize,
    pub zero_stable: bool,
    /// All non-unit eigenvalues vanish (to `1e-8`).
    pub optimal: bool,
}

impl ZeroStabilityReport {
    /// Largest modulus among the eigenvalues other than the unit one.
    pub fn max_nonunit_modulus(&self) -> f64 {
        let mut skipped = false;
        let mut best: f64 = 0.0;
        for z in &self.eigenvalues {
            if !skipped && (z - Complex64::new(1.0, 0.0)).norm() <= UNIT_EIGEN_TOL {
                skipped = true;
                continue;
            }
            best = best.max(z.norm());
        }
        best
    }
}

const UNIT_EIGEN_TOL: f64 = 1e-10;
const STRICT_MARGIN: f64 = 1e-12;
const OPTIMAL_TOL: f64 = 1e-8;

/// Zero-stability of a matrix `P`: exactly one eigenvalue at one, all others
/// strictly inside the unit disk.
pub fn zero_stability_of(p: &DMatrix<f64>) -> ZeroStabilityReport {
    let eigenvalues = real_matrix_eigenvalues(p);
    let one = Complex64::new(1.0, 0.0);
    let unit_count = eigenvalues
        .iter()
        .filter(|z| (**z - one).norm() <= UNIT_EIGEN_TOL)
        .count();
    let mut moduli: Vec<f64> = eigenvalues.iter().map(|z| z.norm()).collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    let mut report = ZeroStabilityReport {
        eigenvalues,
        moduli,
        unit_count,
        zero_stable: false,
        optimal: false,
    };
    if unit_count == 1 {
        let rest = report.max_nonunit_modulus();
        report.optimal = rest <= OPTIMAL_TOL;
        report.zero_stable = rest < 1.0 - STRICT_MARGIN || report.optimal;
    }
    report
}

pub fn check_zero_stability(t: &PeerTableau) -> ZeroStabilityReport {
    zero_stability_of(t.p())
}
