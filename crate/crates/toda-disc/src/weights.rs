//! Subharmonic weight models and their mollifications.
//!
//! A weight φ enters the PDE only through the nonnegative density
//! E = e^{rφ}·σ_X^{−r}; for an r-differential q(z) this is |q(z)|² exactly,
//! so zeros of q are exact zeros of a smooth field and no −∞ arithmetic ever
//! reaches the solver.  φ itself is exposed for diagnostics, with −∞
//! represented by an IEEE -inf sentinel that is flagged, never computed with.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TodaError};
use crate::geometry::{laplacian_interior, BackgroundGeometry, PolarGrid, ScalarField};

/// Smooth polynomial term c·x^a·y^b of the LogAtoms kind.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SmoothTerm {
    pub px: u32,
    pub py: u32,
    pub coeff: f64,
}

#[derive(Clone, Debug)]
pub enum WeightKind {
    /// φ = (1/r)·log|q|² for the polynomial r-differential q(z) = Σ c_k z^k.
    Differential { coeffs: Vec<Complex64> },
    /// φ = Σ m_k log|z - a_k| + smooth(x, y), masses m_k > 0.
    LogAtoms { atoms: Vec<(Complex64, f64)>, smooth: Vec<SmoothTerm> },
    /// φ ≡ -∞ (E ≡ 0).
    Zero,
    /// φ given by grid samples (e.g. a mollified weight).
    Samples { phi: ScalarField },
}

#[derive(Clone, Debug)]
pub struct WeightModel {
    pub kind: WeightKind,
    pub r: usize,
}

#[derive(Clone, Debug)]
pub struct MollifierSchedule {
    pub radii: Vec<f64>,
}

impl MollifierSchedule {
    pub fn new(radii: Vec<f64>) -> Result<MollifierSchedule> {
        if radii.is_empty() || radii.iter().any(|&d| d <= 0.0) {
            return Err(TodaError::InvalidArgument("mollifier radii must be positive".into()));
        }
        if radii.windows(2).any(|w| w[1] >= w[0]) {
            return Err(TodaError::InvalidArgument(
                "mollifier radii must be strictly decreasing".into(),
            ));
        }
        Ok(MollifierSchedule { radii })
    }
}

fn horner(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        acc = acc * z + c;
    }
    acc
}

fn smooth_eval(terms: &[SmoothTerm], x: f64, y: f64) -> f64 {
    terms.iter().map(|t| t.coeff * x.powi(t.px as i32) * y.powi(t.py as i32)).sum()
}

impl WeightModel {
    pub fn is_zero(&self) -> bool {
        match &self.kind {
            WeightKind::Zero => true,
            WeightKind::Differential { coeffs } => {
                coeffs.iter().all(|c| c.norm_sqr() == 0.0)
            }
            _ => false,
        }
    }

    /// φ at an arbitrary point, for the analytic kinds (None for Samples).
    pub fn phi_at(&self, rho: f64, theta: f64) -> Option<f64> {
        let z = Complex64::from_polar(rho, theta);
        match &self.kind {
            WeightKind::Zero => Some(f64::NEG_INFINITY),
            WeightKind::Differential { coeffs } => {
                let e = horner(coeffs, z).norm_sqr();
                let sig = crate::geometry::sigma_x(rho);
                if e == 0.0 {
                    Some(f64::NEG_INFINITY)
                } else {
                    Some(e.ln() / self.r as f64 + sig.ln())
                }
            }
            WeightKind::LogAtoms { atoms, smooth } => {
                let mut phi = smooth_eval(smooth, z.re, z.im);
                for &(a, m) in atoms {
                    let d = (z - a).norm();
                    if d == 0.0 {
                        return Some(f64::NEG_INFINITY);
                    }
                    phi += m * d.ln();
                }
                Some(phi)
            }
            WeightKind::Samples { .. } => None,
        }
    }
}

/// E = e^{rφ}·σ_X^{−r} at every node; |q(z)|² exactly for Differential.
pub fn eval_e(
    weight: &WeightModel,
    grid: &PolarGrid,
    bg: &BackgroundGeometry,
) -> Result<ScalarField> {
    let r = weight.r as f64;
    match &weight.kind {
        WeightKind::Zero => Ok(ScalarField::constant(*grid, 0.0)),
        WeightKind::Differential { coeffs } => Ok(ScalarField::from_fn(*grid, |rho, th| {
            horner(coeffs, Complex64::from_polar(rho, th)).norm_sqr()
        })),
        WeightKind::LogAtoms { .. } => Ok(ScalarField::from_fn(*grid, |rho, th| {
            let phi = weight.phi_at(rho, th).unwrap();
            if phi == f64::NEG_INFINITY {
                0.0
            } else {
                (r * (phi - crate::geometry::sigma_x(rho).ln())).exp()
            }
        })),
        WeightKind::Samples { phi } => {
            if phi.grid != *grid {
                return Err(TodaError::GridMismatch {
                    expected: grid.describe(),
                    got: phi.grid.describe(),
                });
            }
            let mut vals = Vec::with_capacity(grid.n_nodes());
            for i in 0..grid.n_r {
                let ls = crate::geometry::sigma_x(grid.rho(i)).ln();
                for k in 0..grid.n_theta {
                    let p = phi.at(i, k);
                    vals.push(if p == f64::NEG_INFINITY { 0.0 } else { (r * (p - ls)).exp() });
                }
            }
            let _ = bg;
            Ok(ScalarField { grid: *grid, values: vals })
        }
    }
}

/// φ at every node; nodes with E = 0 carry the -inf sentinel.
pub fn eval_phi(
    weight: &WeightModel,
    grid: &PolarGrid,
    bg: &BackgroundGeometry,
) -> Result<ScalarField> {
    match &weight.kind {
        WeightKind::Samples { phi } => {
            if phi.grid != *grid {
                return Err(TodaError::GridMismatch {
                    expected: grid.describe(),
                    got: phi.grid.describe(),
                });
            }
            Ok(phi.clone())
        }
        _ => {
            let _ = bg;
            Ok(ScalarField::from_fn(*grid, |rho, th| weight.phi_at(rho, th).unwrap()))
        }
    }
}

/// Degree of the polynomial after trimming trailing zero coefficients.
fn trim(coeffs: &[Complex64]) -> &[Complex64] {
    let mut deg = coeffs.len();
    while deg > 0 && coeffs[deg - 1].norm_sqr() == 0.0 {
        deg -= 1;
    }
    &coeffs[..deg]
}

/// All complex roots of Σ c_k z^k by the Durand–Kerner iteration
/// (deterministic start, tolerance 1e-13).
pub fn poly_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let c = trim(coeffs);
    if c.len() <= 1 {
        return Vec::new();
    }
    let deg = c.len() - 1;
    let lead = c[deg];
    let monic: Vec<Complex64> = c.iter().map(|&x| x / lead).collect();
    let seed = Complex64::new(0.4, 0.9);
    let mut z: Vec<Complex64> = (0..deg).map(|k| seed.powu(k as u32 + 1)).collect();
    for _ in 0..500 {
        let mut worst = 0.0_f64;
        for i in 0..deg {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..deg {
                if j != i {
                    denom *= z[i] - z[j];
                }
            }
            let step = horner(&monic, z[i]) / denom;
            z[i] -= step;
            worst = worst.max(step.norm() / (1.0 + z[i].norm()));
        }
        if worst < 1e-13 {
            break;
        }
    }
    // deterministic order
    z.sort_by(|a, b| {
        (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap_or(std::cmp::Ordering::Equal)
    });
    z
}

/// Midpoint quadrature of the normalized radial bump t·exp(1/(t²-1)) on
/// (0,1).  `mol_log(d, δ)` is the exact area convolution of log|z| against
/// the bump of radius δ, evaluated at distance d from the singularity: by the
/// mean value property the circle average of log|·| at radius s about a point
/// at distance d is log max(d, s), so the 2-D convolution collapses to this
/// 1-D integral.  It equals log d identically for d ≥ δ, is ≥ log d, and is
/// nondecreasing in δ term by term — so the mollification monotonicity holds
/// exactly at the quadrature level, not merely up to tolerance.
pub struct RadialBump {
    t: Vec<f64>,
    w: Vec<f64>,
}

impl RadialBump {
    pub fn new() -> RadialBump {
        let n = 4096;
        let mut t = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        let mut total = 0.0;
        for i in 0..n {
            let ti = (i as f64 + 0.5) / n as f64;
            let wi = ti * (1.0 / (ti * ti - 1.0)).exp();
            t.push(ti);
            w.push(wi);
            total += wi;
        }
        for wi in &mut w {
            *wi /= total;
        }
        RadialBump { t, w }
    }

    pub fn mol_log(&self, d: f64, delta: f64) -> f64 {
        if d >= delta {
            return d.ln();
        }
        let mut acc = 0.0;
        for i in 0..self.t.len() {
            acc += self.w[i] * d.max(delta * self.t[i]).ln();
        }
        acc
    }
}

impl Default for RadialBump {
    fn default() -> Self {
        RadialBump::new()
    }
}

/// Mollify the weight with radius `delta`, returning a Samples-kind model on
/// `grid`.  Polynomial differentials are factored into their roots first so
/// each log-atom is mollified by the exact radial formula; smooth parts
/// (leading coefficient, LogAtoms smooth polynomial) pass through unchanged,
/// which is exact whenever they are harmonic.
pub fn mollify(
    weight: &WeightModel,
    delta: f64,
    grid: &PolarGrid,
    bg: &BackgroundGeometry,
) -> Result<WeightModel> {
    if delta <= 0.0 {
        return Err(TodaError::InvalidArgument(format!("mollifier radius {delta} <= 0")));
    }
    if grid.outer_radius + delta >= 1.0 {
        return Err(TodaError::MollifierDomain { delta, outer: grid.outer_radius });
    }
    let _ = bg;
    let bump = RadialBump::new();
    let r = weight.r as f64;
    let phi = match &weight.kind {
        WeightKind::Zero => ScalarField::constant(*grid, f64::NEG_INFINITY),
        WeightKind::Differential { coeffs } => {
            let c = trim(coeffs);
            if c.is_empty() {
                ScalarField::constant(*grid, f64::NEG_INFINITY)
            } else {
                let roots = poly_roots(c);
                let lead = c[c.len() - 1];
                let base = 2.0 * lead.norm().ln() / r;
                // φ = (1/r)log|q|² + log σ_X: only the subharmonic |q| part
                // is mollified; the smooth σ_X factor passes through, so the
                // ordering φ_δ ≥ φ, φ_δ' ≤ φ_δ holds exactly
                ScalarField::from_fn(*grid, |rho, th| {
                    let z = Complex64::from_polar(rho, th);
                    let mut phi = base + crate::geometry::sigma_x(rho).ln();
                    for &a in &roots {
                        phi += (2.0 / r) * bump.mol_log((z - a).norm(), delta);
                    }
                    phi
                })
            }
        }
        WeightKind::LogAtoms { atoms, smooth } => ScalarField::from_fn(*grid, |rho, th| {
            let z = Complex64::from_polar(rho, th);
            let mut phi = smooth_eval(smooth, z.re, z.im);
            for &(a, m) in atoms {
                phi += m * bump.mol_log((z - a).norm(), delta);
            }
            phi
        }),
        WeightKind::Samples { .. } => {
            return Err(TodaError::InvalidWeight(
                "sampled weights carry no off-grid data and cannot be mollified".into(),
            ))
        }
    };
    Ok(WeightModel { kind: WeightKind::Samples { phi }, r: weight.r })
}

#[derive(Clone, Debug, Serialize)]
pub struct SemipositivityReport {
    pub tol: f64,
    pub checked_nodes: usize,
    pub violations: Vec<(usize, usize, f64)>,
    pub pass: bool,
}

/// Check the curvature density Δφ/4 + ω ≥ -tol of the weighted metric at
/// every checkable node (tol = 1e-8·max ω).
///
/// For the analytic kinds the density is evaluated in closed form — the
/// background part Δ log σ_X/4 + ω cancels identically and log|z-a| is
/// harmonic off its atom — so the check is exact: polynomial differentials
/// contribute 0 off their zeros, atoms contribute their (positive) masses,
/// and only the smooth polynomial part can go negative.  Sampled weights
/// fall back to the discrete Laplacian with the tolerance widened by the
/// measured background truncation on the same grid.
pub fn validate_semipositivity(
    weight: &WeightModel,
    grid: &PolarGrid,
    bg: &BackgroundGeometry,
) -> Result<SemipositivityReport> {
    let base_tol = 1e-8 * bg.omega_field.max();
    let nt = grid.n_theta;
    let mut violations = Vec::new();
    let mut checked = 0;
    let mut tol = base_tol;
    match &weight.kind {
        // Δφ/4 + ω = (1/r)Δ log|q|²/4 = 0 off the zeros of q, ≥ 0 at them
        WeightKind::Zero | WeightKind::Differential { .. } => {
            checked = grid.n_nodes();
        }
        WeightKind::LogAtoms { atoms, smooth } => {
            for i in 0..grid.n_r {
                let rho = grid.rho(i);
                for k in 0..nt {
                    let (x, y) = grid.xy(i, k);
                    let z = num_complex::Complex64::new(x, y);
                    if atoms.iter().any(|&(a, _)| (z - a).norm() == 0.0) {
                        continue; // atom node: distributional mass ≥ 0
                    }
                    checked += 1;
                    // Δ(x^a y^b) in closed form
                    let mut lap = 0.0;
                    for t in smooth {
                        let (a, b) = (t.px as i32, t.py as i32);
                        if a >= 2 {
                            lap += t.coeff * (a * (a - 1)) as f64 * x.powi(a - 2) * y.powi(b);
                        }
                        if b >= 2 {
                            lap += t.coeff * (b * (b - 1)) as f64 * x.powi(a) * y.powi(b - 2);
                        }
                    }
                    let val = lap / 4.0 + crate::geometry::omega_density(rho);
                    if val < -tol {
                        violations.push((i, k, val));
                    }
                }
            }
        }
        WeightKind::Samples { .. } => {
            let phi = eval_phi(weight, grid, bg)?;
            // calibrate the discretization allowance on the background part
            let logsig = bg.sigma_field.map(f64::ln);
            let lap_sig = laplacian_interior(&logsig);
            let mut trunc = 0.0_f64;
            for i in 0..grid.n_r - 1 {
                for k in 0..nt {
                    trunc = trunc
                        .max((lap_sig[i * nt + k] / 4.0 + bg.omega_field.at(i, k)).abs());
                }
            }
            tol = base_tol + 2.0 * trunc;
            let lap = laplacian_interior(&phi);
            let half = nt / 2;
            for i in 0..grid.n_r - 1 {
                for k in 0..nt {
                    let stencil = [
                        phi.at(i, k),
                        if i == 0 { phi.at(0, (k + half) % nt) } else { phi.at(i - 1, k) },
                        phi.at(i + 1, k),
                        phi.at(i, (k + nt - 1) % nt),
                        phi.at(i, (k + 1) % nt),
                    ];
                    if stencil.iter().any(|v| !v.is_finite()) {
                        continue;
                    }
                    checked += 1;
                    let val = lap[i * nt + k] / 4.0 + bg.omega_field.at(i, k);
                    if val < -tol {
                        violations.push((i, k, val));
                    }
                }
            }
        }
    }
    let pass = violations.is_empty();
    Ok(SemipositivityReport { tol, checked_nodes: checked, violations, pass })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MPhiReport {
    pub value: f64,
    pub possibly_infinite: bool,
}

/// M_φ = sup e^φ over the grid (e^φ = E^{1/r}·σ_X, avoiding -∞ arithmetic),
/// with a two-outermost-ring growth heuristic flagging unbounded weights.
pub fn m_phi(weight: &WeightModel, grid: &PolarGrid, bg: &BackgroundGeometry) -> Result<MPhiReport> {
    let e = eval_e(weight, grid, bg)?;
    let r = weight.r as f64;
    let ring_max = |i: usize| -> f64 {
        let sig = crate::geometry::sigma_x(grid.rho(i));
        let mut m = 0.0_f64;
        for k in 0..grid.n_theta {
            m = m.max(e.at(i, k).powf(1.0 / r) * sig);
        }
        m
    };
    let mut value = 0.0_f64;
    for i in 0..grid.n_r {
        value = value.max(ring_max(i));
    }
    let a = ring_max(grid.n_r - 2);
    let b = ring_max(grid.n_r - 1);
    // growing faster than the Poincaré density itself near the rim suggests
    // an unbounded e^φ
    let growth = crate::geometry::omega_density(grid.rho(grid.n_r - 1))
        / crate::geometry::omega_density(grid.rho(grid.n_r - 2));
    let possibly_infinite = a > 0.0 && b / a > growth;
    Ok(MPhiReport { value, possibly_infinite })
}
