//! The discrete coupled system: residuals, Jacobians, exact reference
//! solutions and the h ↔ H changes of variables.
//!
//! Unknowns are the log-densities u_j = log H_j (j = 1..r-1); the degenerate
//! end density e^{u_0} = e^{u_r} = E·exp(-Σu_j) is derived, never stored.
//! The residual of the j-th equation is
//!
//! ```text
//! R_j = Δu_j - 4 (2 e^{u_j} - e^{u_{j-1}} - e^{u_{j+1}}).
//! ```
//!
//! The closed-form states satisfy the discrete equations up to truncation
//! error at interior nodes:
//!
//! ```
//! use toda_disc::geometry::{make_grid, background};
//! use toda_disc::toda_core::{exact_hyperbolic, residual};
//!
//! let grid = make_grid(64, 8, 0.5).unwrap();
//! let bg = background(&grid);
//! let exact = exact_hyperbolic(3, &grid, &bg).unwrap();
//! let res = residual(&exact).unwrap();
//! assert!(res[0].at(10, 0).abs() < 1e-2);
//! ```

use crate::error::{Result, TodaError};
use crate::geometry::{laplacian, BackgroundGeometry, PolarGrid, ScalarField};
use crate::sparse::{Csr, CsrBuilder};
use crate::weights::{eval_e, WeightModel};

#[derive(Clone, Debug)]
pub struct TodaState {
    pub r: usize,
    pub grid: PolarGrid,
    /// u[j] holds u_{j+1}, j = 0..r-2.
    pub u: Vec<ScalarField>,
    pub e_field: ScalarField,
    /// Dirichlet trace per unknown at the ghost ring, each of length n_theta.
    pub boundary: Vec<Vec<f64>>,
}

impl TodaState {
    pub fn m(&self) -> usize {
        self.r - 1
    }

    /// n = floor(r/2), the last index on the "first half" of the h-chain.
    pub fn n_half(&self) -> usize {
        self.r / 2
    }

    /// Derived density e^{u_0} = E·exp(-Σ u_j) at every node.
    pub fn u0_density(&self) -> ScalarField {
        let mut sum = vec![0.0; self.grid.n_nodes()];
        for uj in &self.u {
            for (s, &v) in sum.iter_mut().zip(&uj.values) {
                *s += v;
            }
        }
        let values = self
            .e_field
            .values
            .iter()
            .zip(&sum)
            .map(|(&e, &s)| e * (-s).exp())
            .collect();
        ScalarField { grid: self.grid, values }
    }
}

/// λ_j = j(r-j), the scaling constants of the hyperbolic solution (twice the
/// row sums of the inverse Cartan matrix of type A_{r-1}).
pub fn lambda_vector(r: usize) -> Result<Vec<f64>> {
    if r < 2 {
        return Err(TodaError::InvalidRank(r));
    }
    Ok((1..r).map(|j| (j * (r - j)) as f64).collect())
}

/// u_j = log λ_j - 2 log(1-ρ²), E ≡ 0: the exact solution for the zero
/// weight, built from the Liouville metric of curvature -1.
pub fn exact_hyperbolic(r: usize, grid: &PolarGrid, bg: &BackgroundGeometry) -> Result<TodaState> {
    let lam = lambda_vector(r)?;
    let _ = bg;
    let u = lam
        .iter()
        .map(|&l| ScalarField::from_fn(*grid, |rho, _| l.ln() - 2.0 * (1.0 - rho * rho).ln()))
        .collect::<Vec<_>>();
    let rr = grid.outer_radius;
    let gb = -2.0 * (1.0 - rr * rr).ln();
    let boundary = lam.iter().map(|&l| vec![l.ln() + gb; grid.n_theta]).collect();
    Ok(TodaState {
        r,
        grid: *grid,
        u,
        e_field: ScalarField::constant(*grid, 0.0),
        boundary,
    })
}

/// u_j = (1/r)·log E for a nowhere-vanishing E: the exact solution when the
/// weighted metric is flat (q without zeros).
pub fn exact_flat(
    weight: &WeightModel,
    r: usize,
    grid: &PolarGrid,
    bg: &BackgroundGeometry,
) -> Result<TodaState> {
    let e = eval_e(weight, grid, bg)?;
    if e.values.iter().any(|&v| v <= 0.0) {
        return Err(TodaError::InvalidWeight(
            "exact_flat needs E > 0 on the whole grid (q without zeros)".into(),
        ));
    }
    let rf = r as f64;
    let u: Vec<ScalarField> = (1..r).map(|_| e.map(|v| v.ln() / rf)).collect();
    let boundary = (1..r)
        .map(|_| {
            // trace of (1/r) log E at the ghost ring
            (0..grid.n_theta)
                .map(|k| {
                    let rho = grid.outer_radius;
                    let th = grid.theta(k);
                    match weight.phi_at(rho, th) {
                        // E = e^{rφ}σ^{-r} ⇒ (1/r)log E = φ - log σ
                        Some(p) => p - crate::geometry::sigma_x(rho).ln(),
                        // Samples kind: extrapolate the outermost ring
                        None => e.at(grid.n_r - 1, k).ln() / rf,
                    }
                })
                .collect()
        })
        .collect();
    Ok(TodaState { r, grid: *grid, u, e_field: e, boundary })
}

/// R_j = Δu_j - 4(2e^{u_j} - e^{u_{j-1}} - e^{u_{j+1}}), j = 1..r-1.
pub fn residual(state: &TodaState) -> Result<Vec<ScalarField>> {
    let m = state.m();
    let v0 = state.u0_density();
    let mut out = Vec::with_capacity(m);
    for j in 0..m {
        let lap = laplacian(&state.u[j], &state.boundary[j])?;
        let mut vals = lap.values;
        for idx in 0..state.grid.n_nodes() {
            let vj = state.u[j].values[idx].exp();
            let lo = if j == 0 { v0.values[idx] } else { state.u[j - 1].values[idx].exp() };
            let hi = if j + 1 == m { v0.values[idx] } else { state.u[j + 1].values[idx].exp() };
            vals[idx] -= 4.0 * (2.0 * vj - lo - hi);
        }
        out.push(ScalarField { grid: state.grid, values: vals });
    }
    Ok(out)
}

/// Max-norm of the residual over all equations (fixed reduction order).
pub fn residual_norm(res: &[ScalarField]) -> f64 {
    let mut m = 0.0_f64;
    for f in res {
        let a = f.max_abs();
        if a > m {
            m = a;
        }
    }
    m
}

/// Exact Jacobian of `residual` in CSR form.  Unknown ordering is
/// node-major: index = node·(r-1) + j, so the reaction coupling of all j at
/// one node forms a dense (r-1)×(r-1) block on the diagonal.
pub fn jacobian(state: &TodaState) -> Csr {
    let grid = state.grid;
    let m = state.m();
    let nt = grid.n_theta;
    let half = nt / 2;
    let h = grid.d_rho();
    let dth = grid.d_theta();
    let n_unknowns = grid.n_nodes() * m;
    let v0 = state.u0_density();
    let mut b = CsrBuilder::new(n_unknowns);
    for i in 0..grid.n_r {
        let rho = grid.rho(i);
        let cin = 1.0 / (h * h) - 1.0 / (2.0 * h * rho);
        let cout = 1.0 / (h * h) + 1.0 / (2.0 * h * rho);
        let ca = 1.0 / (rho * rho * dth * dth);
        for k in 0..nt {
            let node = grid.idx(i, k);
            for j in 0..m {
                // Laplacian part (couples the same j across nodes)
                let inward_node =
                    if i == 0 { grid.idx(0, (k + half) % nt) } else { grid.idx(i - 1, k) };
                b.add(inward_node * m + j, cin);
                let mut diag_lap = -2.0 / (h * h) - 2.0 * ca;
                if i + 1 < grid.n_r {
                    b.add(grid.idx(i + 1, k) * m + j, cout);
                } else {
                    // ghost elimination u_ghost = 2g - u: constant goes to the
                    // residual, -cout stays on the diagonal
                    diag_lap -= cout;
                }
                b.add(grid.idx(i, (k + nt - 1) % nt) * m + j, ca);
                b.add(grid.idx(i, (k + 1) % nt) * m + j, ca);

                // reaction block at this node
                let vj = state.u[j].values[node].exp();
                b.add(node * m + j, diag_lap - 8.0 * vj);
                if j >= 1 {
                    b.add(node * m + (j - 1), 4.0 * state.u[j - 1].values[node].exp());
                }
                if j + 1 < m {
                    b.add(node * m + (j + 1), 4.0 * state.u[j + 1].values[node].exp());
                }
                // e^{u_0} = E e^{-Σu} depends on every u_k: each appearance of
                // +4e^{u_0} in R_j contributes -4e^{u_0} to every column
                if j == 0 {
                    for kk in 0..m {
                        b.add(node * m + kk, -4.0 * v0.values[node]);
                    }
                }
                if j + 1 == m {
                    for kk in 0..m {
                        b.add(node * m + kk, -4.0 * v0.values[node]);
                    }
                }
                b.finish_row();
            }
        }
    }
    b.build()
}

#[derive(Clone, Debug)]
pub struct HWeights {
    /// w[j] holds w_{j+1}, j = 0..r-1; Σ w_j = 0 and w_{j+1} - w_j = u_j.
    pub w: Vec<ScalarField>,
}

/// Solve w_{j+1} - w_j = u_j with Σ w_j = 0 (the det h = 1 normalization).
pub fn reconstruct_h(state: &TodaState) -> HWeights {
    let r = state.r;
    let grid = state.grid;
    let n = grid.n_nodes();
    // w_1 = -(1/r) Σ_{k=1}^{r-1} (r-k) u_k
    let mut w1 = vec![0.0; n];
    for (k, uk) in state.u.iter().enumerate() {
        let c = (r - (k + 1)) as f64 / r as f64;
        for (acc, &v) in w1.iter_mut().zip(&uk.values) {
            *acc -= c * v;
        }
    }
    let mut w = vec![ScalarField { grid, values: w1 }];
    for j in 0..r - 1 {
        let next = w[j].zip_map(&state.u[j], |a, b| a + b);
        w.push(next);
    }
    HWeights { w }
}

impl HWeights {
    /// Round trip back to the u-differences.
    pub fn to_u(&self) -> Vec<ScalarField> {
        (0..self.w.len() - 1)
            .map(|j| self.w[j + 1].zip_map(&self.w[j], |a, b| a - b))
            .collect()
    }
}

/// max over j, nodes of |u_j - u_{r-j}|: zero iff the state is real
/// (h_j = h_{r-j+1}, equivalently H_j = H_{r-j}).
pub fn reality_defect(state: &TodaState) -> f64 {
    let m = state.m();
    let mut worst = 0.0_f64;
    for j in 0..m {
        let jr = m - 1 - j; // u_{r-j} in 0-based indexing
        for idx in 0..state.grid.n_nodes() {
            let d = (state.u[j].values[idx] - state.u[jr].values[idx]).abs();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}
