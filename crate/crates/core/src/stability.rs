//! Linear stability of IMEX-Peer methods on the split test equation
//! `y' = λ0 y + λ1 y`, with `z0 = dt λ0` (explicit) and `z1 = dt λ1` (implicit).
//!
//! One step multiplies the stage vector by
//!
//! ```text
//! M(z0, z1) = (I - z0 Rhat - z1 R)⁻¹ (P + z0 Qhat + z1 Q)
//! ```
//!
//! `S_α` is the set of `z0` for which `ρ(M(z0, z1)) ≤ 1` for every `z1` in the
//! wedge `|arg(-z1)| ≤ α`. Regions are scanned on the upper half plane and
//! doubled by conjugate symmetry.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::coeffs::{CoeffError, SigmaCoefficients, VandermondeSet};
use crate::linalg::{forward_substitute, small_spectral_radius, small_spectral_radius_below, spectral_radius, to_complex, SMALL_DIM};
use crate::tableau::PeerTableau;

/// Slack on `ρ ≤ 1` when testing region membership.
pub const REGION_SLACK: f64 = 1e-10;
/// Slack on `ρ ≤ 1` for the A-stability verdict.
pub const A_STABILITY_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StabilityError {
    #[error(transparent)]
    Coeff(#[from] CoeffError),
    #[error("I - z0 Rhat - z1 R is singular (z1 γ = 1)")]
    Singular,
}

/// Complex copies of the matrices entering `M(z0, z1)` at a fixed step ratio.
#[derive(Debug, Clone)]
pub struct StabilityContext {
    sigma: f64,
    p: DMatrix<Complex64>,
    q: DMatrix<Complex64>,
    qhat: DMatrix<Complex64>,
    r: DMatrix<Complex64>,
    rhat: DMatrix<Complex64>,
    damping: f64,
    /// Row-major copies of `P, Q, Qhat, R, Rhat` for the allocation-free path.
    flat: [Vec<Complex64>; 5],
}

impl StabilityContext {
    pub fn new(t: &PeerTableau, sigma: f64) -> Result<Self, StabilityError> {
        let coef = VandermondeSet::for_tableau(t)?.assemble(t, sigma)?;
        Self::from_coefficients(t, &coef)
    }

    pub fn from_coefficients(t: &PeerTableau, coef: &SigmaCoefficients) -> Result<Self, StabilityError> {
        let damping = spectral_radius(&to_complex(&damping_matrix_with(t, &coef.q)?));
        let flat = [t.p(), &coef.q, &coef.qhat, t.r(), &coef.rhat].map(|m| {
            let (n, k) = m.shape();
            (0..n * k).map(|idx| Complex64::new(m[(idx / k, idx % k)], 0.0)).collect()
        });
        Ok(StabilityContext {
            flat,
            sigma: coef.sigma,
            p: to_complex(t.p()),
            q: to_complex(&coef.q),
            qhat: to_complex(&coef.qhat),
            r: to_complex(t.r()),
            rhat: to_complex(&coef.rhat),
            damping,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `ρ(R⁻¹ Q(σ))`, the limit of `ρ(M(z0, z1))` as `|z1| → ∞`.
    pub fn damping_radius(&self) -> f64 {
        self.damping
    }

    pub fn imex_matrix(&self, z0: Complex64, z1: Complex64) -> Result<DMatrix<Complex64>, StabilityError> {
        let s = self.p.nrows();
        let a = DMatrix::identity(s, s) - &self.rhat * z0 - &self.r * z1;
        let b = &self.p + &self.qhat * z0 + &self.q * z1;
        forward_substitute(&a, &b).map_err(|_| StabilityError::Singular)
    }

    pub fn rho(&self, z0: Complex64, z1: Complex64) -> Result<f64, StabilityError> {
        let s = self.p.nrows();
        if s > SMALL_DIM {
            return Ok(spectral_radius(&self.imex_matrix(z0, z1)?));
        }
        let mut m = [Complex64::new(0.0, 0.0); SMALL_DIM * SMALL_DIM];
        self.fill_matrix(z0, z1, &mut m)?;
        Ok(small_spectral_radius(&m[..s * s], s))
    }

    /// `ρ(M(z0, z1)) ≤ 1 + REGION_SLACK`, decided without computing eigenvalues.
    pub fn is_stable(&self, z0: Complex64, z1: Complex64) -> bool {
        let s = self.p.nrows();
        if s > SMALL_DIM {
            return matches!(self.rho(z0, z1), Ok(r) if r <= 1.0 + REGION_SLACK);
        }
        let mut m = [Complex64::new(0.0, 0.0); SMALL_DIM * SMALL_DIM];
        self.fill_matrix(z0, z1, &mut m).is_ok() && small_spectral_radius_below(&m[..s * s], s, 1.0 + REGION_SLACK)
    }

    /// Writes `M(z0, z1)` row-major into `out`.
    fn fill_matrix(&self, z0: Complex64, z1: Complex64, out: &mut [Complex64]) -> Result<(), StabilityError> {
        let s = self.p.nrows();
        let [p, q, qhat, r, rhat] = &self.flat;
        let mut a = [Complex64::new(0.0, 0.0); SMALL_DIM * SMALL_DIM];
        for k in 0..s * s {
            a[k] = -rhat[k] * z0 - r[k] * z1;
            out[k] = p[k] + qhat[k] * z0 + q[k] * z1;
        }
        for i in 0..s {
            a[i * s + i] += 1.0;
        }
        // A is lower triangular: forward substitution, column by column.
        for i in 0..s {
            let d = a[i * s + i];
            if d.norm() == 0.0 {
                return Err(StabilityError::Singular);
            }
            for col in 0..s {
                let mut acc = out[i * s + col];
                for j in 0..i {
                    acc -= a[i * s + j] * out[j * s + col];
                }
                out[i * s + col] = acc / d;
            }
        }
        Ok(())
    }

    /// `M_im(z) = (I - z R)⁻¹ (P + z Q)`
    pub fn implicit_matrix(&self, z: Complex64) -> Result<DMatrix<Complex64>, StabilityError> {
        let s = self.p.nrows();
        let a = DMatrix::identity(s, s) - &self.r * z;
        let b = &self.p + &self.q * z;
        forward_substitute(&a, &b).map_err(|_| StabilityError::Singular)
    }

    fn stable_for_wedge(&self, z0: Complex64, z1_samples: &[Complex64]) -> bool {
        z1_samples.iter().all(|&z1| self.is_stable(z0, z1))
    }
}

pub fn imex_stability_matrix(
    t: &PeerTableau,
    coef: &SigmaCoefficients,
    z0: Complex64,
    z1: Complex64,
) -> Result<DMatrix<Complex64>, StabilityError> {
    StabilityContext::from_coefficients(t, coef)?.imex_matrix(z0, z1)
}

pub fn implicit_stability_matrix(t: &PeerTableau, z: Complex64, sigma: f64) -> Result<DMatrix<Complex64>, StabilityError> {
    StabilityContext::new(t, sigma)?.implicit_matrix(z)
}

fn damping_matrix_with(t: &PeerTableau, q: &DMatrix<f64>) -> Result<DMatrix<f64>, StabilityError> {
    let r = to_complex(t.r());
    let x = forward_substitute(&r, &to_complex(q)).map_err(|_| StabilityError::Singular)?;
    Ok(x.map(|z| z.re))
}

/// `R⁻¹ Q(σ)`
pub fn damping_matrix(t: &PeerTableau, sigma: f64) -> Result<DMatrix<f64>, StabilityError> {
    let q = VandermondeSet::for_tableau(t)?.q(t, sigma)?;
    damping_matrix_with(t, &q)
}

pub fn damping_radius(t: &PeerTableau, sigma: f64) -> Result<f64, StabilityError> {
    Ok(spectral_radius(&to_complex(&damping_matrix(t, sigma)?)))
}

/// `(σ, ρ(R⁻¹Q(σ)))` on the given ratios.
pub fn damping_profile(t: &PeerTableau, sigmas: &[f64]) -> Result<Vec<(f64, f64)>, StabilityError> {
    let vm = VandermondeSet::for_tableau(t)?;
    sigmas
        .iter()
        .map(|&sigma| {
            let q = vm.q(t, sigma)?;
            Ok((sigma, spectral_radius(&to_complex(&damping_matrix_with(t, &q)?))))
        })
        .collect()
}

fn logspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(move |k| 10f64.powf(a + (b - a) * k as f64 / (n - 1).max(1) as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AStabilityReport {
    pub max_rho: f64,
    /// Imaginary part of the sample attaining `max_rho`.
    pub worst_y: f64,
    pub rho_infinity: f64,
    pub samples: usize,
    pub a_stable: bool,
}

/// Samples `ρ(M_im(iy, 1))` on `|y| ≤ 1e6` and the limit at infinity.
pub fn check_a_stability(t: &PeerTableau) -> Result<AStabilityReport, StabilityError> {
    let ctx = StabilityContext::new(t, 1.0)?;
    let mut ys: Vec<f64> = (0..=2000).map(|k| 10.0 * k as f64 / 2000.0).collect();
    ys.extend(logspace(10.0, 1e6, 500).skip(1));
    let mut max_rho: f64 = 0.0;
    let mut worst_y = 0.0;
    let mut samples = 0;
    for &y in &ys {
        for y in [y, -y] {
            let rho = spectral_radius(&ctx.implicit_matrix(Complex64::new(0.0, y))?);
            samples += 1;
            if rho > max_rho {
                max_rho = rho;
                worst_y = y;
            }
        }
    }
    let rho_infinity = ctx.damping_radius();
    Ok(AStabilityReport {
        max_rho,
        worst_y,
        rho_infinity,
        samples,
        a_stable: max_rho <= 1.0 + A_STABILITY_SLACK && rho_infinity <= 1.0 + A_STABILITY_SLACK,
    })
}

/// Radii sampled on each boundary ray of the `z1` wedge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaySampling {
    pub r_min: f64,
    pub r_max: f64,
    pub per_ray: usize,
}

impl Default for RaySampling {
    fn default() -> Self {
        RaySampling {
            r_min: 1e-3,
            r_max: 1e6,
            per_ray: 60,
        }
    }
}

impl RaySampling {
    /// `z1 = 0` followed by the rays at angles `π - α`, `π`, `π + α`.
    pub fn wedge_samples(&self, alpha_deg: f64) -> Vec<Complex64> {
        let a = alpha_deg.to_radians();
        let mut angles = vec![PI];
        if a > 0.0 {
            angles.extend([PI - a, PI + a]);
        }
        let mut out = vec![Complex64::new(0.0, 0.0)];
        for r in logspace(self.r_min, self.r_max, self.per_ray) {
            for &th in &angles {
                out.push(Complex64::from_polar(r, th));
            }
        }
        out
    }
}

/// Rectangular cell grid on the upper half plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::with_resolution(-7.0, 1.0, 0.0, 3.0, 1.0 / 200.0)
    }
}

impl GridSpec {
    pub fn with_resolution(x_min: f64, x_max: f64, y_min: f64, y_max: f64, h: f64) -> Self {
        GridSpec {
            x_min,
            x_max,
            y_min,
            y_max,
            nx: ((x_max - x_min) / h).round().max(1.0) as usize,
            ny: ((y_max - y_min) / h).round().max(1.0) as usize,
        }
    }

    pub fn hx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y_max - self.y_min) / self.ny as f64
    }

    /// Center of cell `(ix, iy)`.
    pub fn center(&self, ix: usize, iy: usize) -> Complex64 {
        Complex64::new(
            self.x_min + (ix as f64 + 0.5) * self.hx(),
            self.y_min + (iy as f64 + 0.5) * self.hy(),
        )
    }
}

/// Cells of a [`GridSpec`] classified as stable.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub grid: GridSpec,
    /// Row-major, row 0 at `y_min`.
    pub cells: Vec<bool>,
}

impl RegionMask {
    pub fn get(&self, ix: usize, iy: usize) -> bool {
        self.cells[iy * self.grid.nx + ix]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Area including the mirror image below the real axis.
    pub fn area(&self) -> f64 {
        2.0 * self.count() as f64 * self.grid.hx() * self.grid.hy()
    }

    pub fn is_subset_of(&self, other: &RegionMask) -> bool {
        assert_eq!(self.grid, other.grid, "masks on different grids");
        self.cells.iter().zip(&other.cells).all(|(&a, &b)| !a || b)
    }

    fn any_in_column(&self, ix: usize) -> bool {
        (0..self.grid.ny).any(|iy| self.get(ix, iy))
    }

    fn any_in_row(&self, iy: usize) -> bool {
        (0..self.grid.nx).any(|ix| self.get(ix, iy))
    }

    /// `(x_lo, x_hi, y_hi)` of the stable cells, cell edges included.
    pub fn bounding_box(&self) -> Option<(f64, f64, f64)> {
        let g = &self.grid;
        let first = (0..g.nx).find(|&ix| self.any_in_column(ix))?;
        let last = (0..g.nx).rev().find(|&ix| self.any_in_column(ix))?;
        let top = (0..g.ny).rev().find(|&iy| self.any_in_row(iy))?;
        Some((
            g.x_min + first as f64 * g.hx(),
            g.x_min + (last + 1) as f64 * g.hx(),
            g.y_min + (top + 1) as f64 * g.hy(),
        ))
    }

    /// Closed outline of the region (upper envelope and its mirror image).
    pub fn boundary_polyline(&self) -> Vec<(f64, f64)> {
        let g = &self.grid;
        let mut upper = Vec::new();
        for ix in 0..g.nx {
            if let Some(iy) = (0..g.ny).rev().find(|&iy| self.get(ix, iy)) {
                upper.push((g.center(ix, 0).re, g.y_min + (iy + 1) as f64 * g.hy()));
            }
        }
        let mut out = upper.clone();
        out.extend(upper.iter().rev().map(|&(x, y)| (x, -y)));
        if let Some(&p) = upper.first() {
            out.push(p);
        }
        out
    }

    pub fn boundary_csv(&self) -> String {
        let mut out = String::from("x,y\n");
        for (x, y) in self.boundary_polyline() {
            out.push_str(&format!("{x:.8e},{y:.8e}\n"));
        }
        out
    }
}

/// Classifies every cell of `grid` for `S_α` at the context's step ratio.
pub fn scan_mask(ctx: &StabilityContext, alpha_deg: f64, grid: GridSpec, rays: &RaySampling) -> RegionMask {
    let samples = rays.wedge_samples(alpha_deg);
    let damped = ctx.damping_radius() <= 1.0 + REGION_SLACK;
    let cells = (0..grid.nx * grid.ny)
        .into_par_iter()
        .map(|k| damped && ctx.stable_for_wedge(grid.center(k % grid.nx, k / grid.nx), &samples))
        .collect();
    RegionMask { grid, cells }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    /// First grid; later passes move the box and use `zoom_cells`.
    pub grid: GridSpec,
    pub rays: RaySampling,
    pub zoom_cells: (usize, usize),
    pub max_passes: usize,
    pub sigma: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            grid: GridSpec::default(),
            rays: RaySampling::default(),
            zoom_cells: (400, 300),
            max_passes: 8,
            sigma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionScan {
    pub alpha: f64,
    pub area: f64,
    /// Mask of the last pass.
    pub mask: RegionMask,
    /// Grids of every pass, in order.
    pub passes: Vec<GridSpec>,
}

/// Area of `S_α`, refining the box until it frames the region.
///
/// The box grows where the region touches its left, right or top edge and
/// shrinks to the bounding box when the region fills less than 70% of it.
/// An empty first pass falls back to a box scaled by the real-axis extent.
pub fn scan_region(t: &PeerTableau, alpha_deg: f64, config: &ScanConfig) -> Result<RegionScan, StabilityError> {
    let ctx = StabilityContext::new(t, config.sigma)?;
    Ok(scan_region_with(&ctx, alpha_deg, config))
}

pub fn scan_region_with(ctx: &StabilityContext, alpha_deg: f64, config: &ScanConfig) -> RegionScan {
    let (zx, zy) = config.zoom_cells;
    let mut grid = config.grid;
    let mut mask = scan_mask(ctx, alpha_deg, grid, &config.rays);
    let mut passes = vec![grid];
    for _ in 1..config.max_passes {
        let next = match mask.bounding_box() {
            None => {
                let l = real_axis_extent_with(ctx, alpha_deg, &config.rays).abs();
                if l == 0.0 || passes.len() > 1 {
                    break;
                }
                GridSpec {
                    x_min: -1.5 * l,
                    x_max: 0.2 * l,
                    y_min: 0.0,
                    y_max: 1.5 * l,
                    nx: zx,
                    ny: zy,
                }
            }
            Some((lo, hi, top)) => {
                let mut g = GridSpec { nx: zx, ny: zy, ..grid };
                let width = grid.x_max - grid.x_min;
                let mut moved = false;
                if mask.any_in_column(0) {
                    g.x_min -= 0.5 * width;
                    moved = true;
                }
                if mask.any_in_column(grid.nx - 1) {
                    g.x_max += 0.5 * width;
                    moved = true;
                }
                if mask.any_in_row(grid.ny - 1) {
                    g.y_max = grid.y_min + 1.6 * (grid.y_max - grid.y_min);
                    moved = true;
                }
                if !moved {
                    let (hx, hy) = (grid.hx(), grid.hy());
                    let (lo, hi, top) = (lo - 2.0 * hx, hi + 2.0 * hx, top + 2.0 * hy);
                    if hi - lo < 0.7 * width || top - grid.y_min < 0.7 * (grid.y_max - grid.y_min) {
                        g.x_min = lo;
                        g.x_max = hi;
                        g.y_max = top;
                        moved = true;
                    }
                }
                if !moved {
                    break;
                }
                g
            }
        };
        grid = next;
        mask = scan_mask(ctx, alpha_deg, grid, &config.rays);
        passes.push(grid);
    }
    RegionScan {
        alpha: alpha_deg,
        area: mask.area(),
        mask,
        passes,
    }
}

/// Largest `t` on a ray `t ↦ z(t)` such that all sampled points up to `t` are
/// stable, refined by bisection at the first unstable sample.
fn extent_along(inside: impl Fn(f64) -> bool, samples: &[f64]) -> f64 {
    let mut last_in = 0.0;
    for &t in samples {
        if inside(t) {
            last_in = t;
        } else {
            return bisect(&inside, last_in, t);
        }
    }
    last_in
}

fn bisect(inside: &impl Fn(f64) -> bool, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Most negative `x` such that `[x, 0]` lies in `S_α` (sampled and bisected).
pub fn real_axis_extent(t: &PeerTableau, alpha_deg: f64, rays: &RaySampling) -> Result<f64, StabilityError> {
    Ok(real_axis_extent_with(&StabilityContext::new(t, 1.0)?, alpha_deg, rays))
}

pub fn real_axis_extent_with(ctx: &StabilityContext, alpha_deg: f64, rays: &RaySampling) -> f64 {
    if ctx.damping_radius() > 1.0 + REGION_SLACK {
        return 0.0;
    }
    let z1 = rays.wedge_samples(alpha_deg);
    let samples: Vec<f64> = logspace(1e-8, 20.0, 600).collect();
    -extent_along(|r| ctx.stable_for_wedge(Complex64::new(-r, 0.0), &z1), &samples)
}

/// Largest `y ≤ y_limit` with `iy ∈ S_α`, from a uniform scan refined by
/// bisection towards the next unstable sample.
pub fn imaginary_axis_extent(t: &PeerTableau, alpha_deg: f64, rays: &RaySampling, y_limit: f64) -> Result<f64, StabilityError> {
    Ok(imaginary_axis_extent_with(&StabilityContext::new(t, 1.0)?, alpha_deg, rays, y_limit))
}

pub fn imaginary_axis_extent_with(ctx: &StabilityContext, alpha_deg: f64, rays: &RaySampling, y_limit: f64) -> f64 {
    if ctx.damping_radius() > 1.0 + REGION_SLACK {
        return 0.0;
    }
    let z1 = rays.wedge_samples(alpha_deg);
    let inside = |y: f64| ctx.stable_for_wedge(Complex64::new(0.0, y), &z1);
    let n = 4000;
    let ys: Vec<f64> = (1..=n).map(|k| y_limit * k as f64 / n as f64).collect();
    let flags: Vec<bool> = ys.par_iter().map(|&y| inside(y)).collect();
    match flags.iter().rposition(|&f| f) {
        None => 0.0,
        Some(k) if k + 1 == n => ys[k],
        Some(k) => bisect(&inside, ys[k], ys[k + 1]),
    }
}

/// Summary of the constant-step stability of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub method: String,
    pub s90: RegionScan,
    pub s0: RegionScan,
    /// Real-axis extent of `S_90`.
    pub x_max: f64,
    /// Imaginary-axis extent of `S_0`.
    pub y_max: f64,
    /// `ρ(R⁻¹ Q(1))`
    pub rho_damp: f64,
    pub damping_profile: Vec<(f64, f64)>,
    pub a_stability: AStabilityReport,
    pub config: ScanConfig,
}

impl StabilityReport {
    pub const CSV_HEADER: &'static str = "method,area_s90,x_max,area_s0,y_max,rho_damp,a_stable";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{}",
            self.method, self.s90.area, self.x_max, self.s0.area, self.y_max, self.rho_damp, self.a_stability.a_stable
        )
    }

    /// Monotone in the wedge angle and nonnegative extents.
    pub fn is_consistent(&self) -> bool {
        self.s90.area >= 0.0 && self.s0.area >= 0.0 && self.x_max <= 0.0 && self.y_max >= 0.0
    }
}

/// Ratios used for the damping profile.
pub fn default_sigma_grid() -> Vec<f64> {
    (0..=30).map(|k| 0.5 + 1.5 * k as f64 / 30.0).collect()
}

pub fn stability_report(t: &PeerTableau, config: &ScanConfig) -> Result<StabilityReport, StabilityError> {
    let ctx = StabilityContext::new(t, config.sigma)?;
    let s90 = scan_region_with(&ctx, 90.0, config);
    let s0 = scan_region_with(&ctx, 0.0, config);
    let x_max = real_axis_extent_with(&ctx, 90.0, &config.rays);
    let y_limit = s0.mask.grid.y_max.max(config.grid.y_max);
    let y_max = imaginary_axis_extent_with(&ctx, 0.0, &config.rays, y_limit);
    Ok(StabilityReport {
        method: t.name().to_string(),
        x_max,
        y_max,
        rho_damp: ctx.damping_radius(),
        damping_profile: damping_profile(t, &default_sigma_grid())?,
        a_stability: check_a_stability(t)?,
        s90,
        s0,
        config: config.clone(),
    })
}
