//! Offset polar grids on subdiscs of the unit disc, the Poincaré background
//! data, and a second-order discrete Laplacian.
//!
//! Radial nodes sit at ρ_i = (i + ½)Δρ so no node lands on the coordinate
//! singularity at the origin; the innermost ring couples across the center by
//! pairing θ_k with θ_{k+π}.  Two grids with equal Δρ and n_theta are nested:
//! the smaller one's nodes are an index prefix of the larger one's.
//!
//! ```
//! use toda_disc::geometry::{make_grid, background, omega_density, sigma_x};
//!
//! let grid = make_grid(32, 16, 0.5).unwrap();
//! let bg = background(&grid);
//! let rho = grid.rho(10);
//! // the background volume density is 2/(1-ρ²)² and σ_X = (1-ρ²)²/2
//! assert!((omega_density(rho) * sigma_x(rho) - 1.0).abs() < 1e-14);
//! assert_eq!(bg.sigma_field.values.len(), grid.n_nodes());
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Result, TodaError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    pub n_r: usize,
    pub n_theta: usize,
    pub outer_radius: f64,
}

impl PolarGrid {
    pub fn d_rho(&self) -> f64 {
        self.outer_radius / self.n_r as f64
    }

    pub fn d_theta(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.n_theta as f64
    }

    pub fn rho(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.d_rho()
    }

    pub fn theta(&self, k: usize) -> f64 {
        k as f64 * self.d_theta()
    }

    pub fn idx(&self, i: usize, k: usize) -> usize {
        i * self.n_theta + k
    }

    pub fn n_nodes(&self) -> usize {
        self.n_r * self.n_theta
    }

    /// Cartesian coordinates of node (i, k).
    pub fn xy(&self, i: usize, k: usize) -> (f64, f64) {
        let rho = self.rho(i);
        let th = self.theta(k);
        (rho * th.cos(), rho * th.sin())
    }

    /// True if `self` and `other` share Δρ and n_theta, so the smaller grid's
    /// nodes are a radial index prefix of the larger one's.
    pub fn nests_with(&self, other: &PolarGrid) -> bool {
        self.n_theta == other.n_theta && (self.d_rho() - other.d_rho()).abs() < 1e-15
    }

    pub fn describe(&self) -> String {
        format!("{}x{} grid on D_{}", self.n_r, self.n_theta, self.outer_radius)
    }
}

pub fn make_grid(n_r: usize, n_theta: usize, outer_radius: f64) -> Result<PolarGrid> {
    if !(outer_radius > 0.0 && outer_radius < 1.0) {
        return Err(TodaError::InvalidGrid(format!(
            "outer_radius {outer_radius} not in (0,1): domain must be a proper subdisc"
        )));
    }
    if n_r < 2 {
        return Err(TodaError::InvalidGrid(format!("n_r = {n_r}, need at least 2")));
    }
    if n_theta < 8 || n_theta % 2 != 0 {
        return Err(TodaError::InvalidGrid(format!(
            "n_theta = {n_theta}, need an even count >= 8"
        )));
    }
    Ok(PolarGrid { n_r, n_theta, outer_radius })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: PolarGrid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn constant(grid: PolarGrid, c: f64) -> ScalarField {
        ScalarField { grid, values: vec![c; grid.n_nodes()] }
    }

    pub fn from_fn(grid: PolarGrid, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let mut values = Vec::with_capacity(grid.n_nodes());
        for i in 0..grid.n_r {
            let rho = grid.rho(i);
            for k in 0..grid.n_theta {
                values.push(f(rho, grid.theta(k)));
            }
        }
        ScalarField { grid, values }
    }

    pub fn at(&self, i: usize, k: usize) -> f64 {
        self.values[self.grid.idx(i, k)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        assert_eq!(self.grid, other.grid, "field grids differ");
        let values =
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        ScalarField { grid: self.grid, values }
    }

    /// Fixed-order max-norm reduction (determinism contract).
    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0_f64;
        for &v in &self.values {
            let a = v.abs();
            if a > m {
                m = a;
            }
        }
        m
    }

    pub fn max(&self) -> f64 {
        let mut m = f64::NEG_INFINITY;
        for &v in &self.values {
            if v > m {
                m = v;
            }
        }
        m
    }

    pub fn min(&self) -> f64 {
        let mut m = f64::INFINITY;
        for &v in &self.values {
            if v < m {
                m = v;
            }
        }
        m
    }

    /// Restrict to a nested subgrid (radial index prefix); bit-exact copy.
    pub fn restrict(&self, sub: &PolarGrid) -> Result<ScalarField> {
        if !sub.nests_with(&self.grid) || sub.n_r > self.grid.n_r {
            return Err(TodaError::GridMismatch {
                expected: self.grid.describe(),
                got: sub.describe(),
            });
        }
        Ok(ScalarField { grid: *sub, values: self.values[..sub.n_nodes()].to_vec() })
    }
}

/// Poincaré background on the disc: σ_X = (1-|z|²)²/2 is the weight of h_X,
/// the density of ω_X relative to i dz∧dz̄ is 2(1-|z|²)^{-2}, and
/// log f = log(1-|z|²).  The discrete curvature identity -Δ(log σ_X)/4 ≈ ω
/// realizes iF_{h_X} = ω_X and pins the factor conventions.
#[derive(Clone, Debug)]
pub struct BackgroundGeometry {
    pub sigma_field: ScalarField,
    pub omega_field: ScalarField,
    pub log_f_field: ScalarField,
}

pub fn sigma_x(rho: f64) -> f64 {
    let f = 1.0 - rho * rho;
    0.5 * f * f
}

pub fn omega_density(rho: f64) -> f64 {
    let f = 1.0 - rho * rho;
    2.0 / (f * f)
}

pub fn background(grid: &PolarGrid) -> BackgroundGeometry {
    BackgroundGeometry {
        sigma_field: ScalarField::from_fn(*grid, |rho, _| sigma_x(rho)),
        omega_field: ScalarField::from_fn(*grid, |rho, _| omega_density(rho)),
        log_f_field: ScalarField::from_fn(*grid, |rho, _| (1.0 - rho * rho).ln()),
    }
}

/// Five-point polar Laplacian Δ = ∂ρρ + (1/ρ)∂ρ + (1/ρ²)∂θθ at every node.
///
/// `boundary_values` (length n_theta) prescribe the Dirichlet trace g at
/// ρ = outer_radius; the ghost ring is eliminated via u_ghost = 2g - u_last,
/// which keeps the stencil second order.  The innermost ring's inward
/// neighbor is the across-center node (i=0, k+n_theta/2); on the offset grid
/// its coefficient 1/Δρ² - 1/(2Δρ·ρ_0) vanishes identically.
pub fn laplacian(field: &ScalarField, boundary_values: &[f64]) -> Result<ScalarField> {
    let grid = field.grid;
    if boundary_values.len() != grid.n_theta {
        return Err(TodaError::BoundaryLength {
            expected: grid.n_theta,
            got: boundary_values.len(),
        });
    }
    let h = grid.d_rho();
    let dth = grid.d_theta();
    let nt = grid.n_theta;
    let half = nt / 2;
    let mut out = vec![0.0; grid.n_nodes()];
    for i in 0..grid.n_r {
        let rho = grid.rho(i);
        let cin = 1.0 / (h * h) - 1.0 / (2.0 * h * rho);
        let cout = 1.0 / (h * h) + 1.0 / (2.0 * h * rho);
        let ca = 1.0 / (rho * rho * dth * dth);
        for k in 0..nt {
            let c = field.at(i, k);
            let inward = if i == 0 { field.at(0, (k + half) % nt) } else { field.at(i - 1, k) };
            let outward = if i + 1 < grid.n_r {
                field.at(i + 1, k)
            } else {
                2.0 * boundary_values[k] - c
            };
            let left = field.at(i, (k + nt - 1) % nt);
            let right = field.at(i, (k + 1) % nt);
            out[grid.idx(i, k)] = cin * inward + cout * outward - 2.0 / (h * h) * c
                + ca * (left + right - 2.0 * c);
        }
    }
    Ok(ScalarField { grid, values: out })
}

/// Laplacian restricted to rings 0..n_r-2 (no ghost data needed); used by the
/// inequality checks, which only probe interior nodes.
pub fn laplacian_interior(field: &ScalarField) -> Vec<f64> {
    let grid = field.grid;
    let h = grid.d_rho();
    let dth = grid.d_theta();
    let nt = grid.n_theta;
    let half = nt / 2;
    let mut out = vec![0.0; (grid.n_r - 1) * nt];
    for i in 0..grid.n_r - 1 {
        let rho = grid.rho(i);
        let cin = 1.0 / (h * h) - 1.0 / (2.0 * h * rho);
        let cout = 1.0 / (h * h) + 1.0 / (2.0 * h * rho);
        let ca = 1.0 / (rho * rho * dth * dth);
        for k in 0..nt {
            let c = field.at(i, k);
            let inward = if i == 0 { field.at(0, (k + half) % nt) } else { field.at(i - 1, k) };
            let outward = field.at(i + 1, k);
            let left = field.at(i, (k + nt - 1) % nt);
            let right = field.at(i, (k + 1) % nt);
            out[i * nt + k] = cin * inward + cout * outward - 2.0 / (h * h) * c
                + ca * (left + right - 2.0 * c);
        }
    }
    out
}
