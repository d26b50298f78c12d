//! Dirichlet solvers on subdiscs and the drivers for disc exhaustion,
//! mollification and uniqueness probing.
//!
//! Two schemes solve the same discrete system: a damped Newton iteration on
//! the full coupled residual, and a monotone sub/supersolution sweep that
//! trades speed for pointwise bracket certificates.
//!
//! Newton recovers the flat state of a zero-free differential essentially
//! instantly:
//!
//! ```
//! use num_complex::Complex64;
//! use toda_disc::geometry::{make_grid, background};
//! use toda_disc::solver::{solve_dirichlet, SolveOptions};
//! use toda_disc::toda_core::exact_flat;
//! use toda_disc::weights::{WeightKind, WeightModel};
//!
//! let grid = make_grid(24, 8, 0.5).unwrap();
//! let bg = background(&grid);
//! let weight = WeightModel {
//!     kind: WeightKind::Differential { coeffs: vec![Complex64::new(1.0, 0.0)] },
//!     r: 2,
//! };
//! let flat = exact_flat(&weight, 2, &grid, &bg).unwrap();
//! let (_, report) =
//!     solve_dirichlet(&weight, &grid, &bg, &flat.boundary, &SolveOptions::default()).unwrap();
//! assert!(report.converged && report.iterations <= 3);
//! ```

use serde::Serialize;
use std::time::Instant;

use crate::error::{Result, TodaError};
use crate::geometry::{background, BackgroundGeometry, PolarGrid, ScalarField};
use crate::sparse::{bicgstab, Csr, CsrBuilder};
use crate::toda_core::{
    jacobian, lambda_vector, reconstruct_h, residual, residual_norm, HWeights, TodaState,
};
use crate::weights::{eval_e, mollify, MollifierSchedule, WeightModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Scheme {
    Newton,
    Monotone,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveOptions {
    pub newton_tol: f64,
    pub max_newton: usize,
    pub linear_tol: f64,
    pub max_linear: usize,
    /// Armijo backtracking halves the step down to this floor.
    pub min_step: f64,
    pub max_monotone: usize,
    pub scheme: Scheme,
}

impl Default for SolveOptions {
    fn default() -> SolveOptions {
        SolveOptions {
            newton_tol: 1e-10,
            max_newton: 50,
            linear_tol: 1e-12,
            max_linear: 200_000,
            min_step: (2.0_f64).powi(-20),
            max_monotone: 5000,
            scheme: Scheme::Newton,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BracketCertificate {
    /// worst sub-side margin min(u - sub) seen over all iterations (≥ 0 good)
    pub min_sub_margin: f64,
    /// worst super-side margin min(super - u)
    pub min_super_margin: f64,
    /// worst pointwise monotonicity violation between successive iterates
    pub max_monotonicity_violation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub bracket_certificate: Option<BracketCertificate>,
    #[serde(skip)]
    pub wall_time: f64,
}

/// The boundary condition H_j = ½h_X^{-1} used by every exhaustion stage:
/// u_j = -2 log(1-R²) at radius R, identical for all j and all angles.
pub fn boundary_lm(grid: &PolarGrid, r: usize) -> Vec<Vec<f64>> {
    let rr = grid.outer_radius;
    let g = -2.0 * (1.0 - rr * rr).ln();
    (1..r).map(|_| vec![g; grid.n_theta]).collect()
}

/// Discrete Laplacian minus a constant shift as a CSR operator, plus the
/// additive boundary vector: laplacian(u, g) = A·u + b where b carries the
/// ghost-ring contribution 2·cout·g on the outermost ring.
fn assemble_scalar(grid: &PolarGrid, shift: f64, boundary: &[f64]) -> (Csr, Vec<f64>) {
    let nt = grid.n_theta;
    let half = nt / 2;
    let h = grid.d_rho();
    let dth = grid.d_theta();
    let mut b = CsrBuilder::new(grid.n_nodes());
    let mut bvec = vec![0.0; grid.n_nodes()];
    for i in 0..grid.n_r {
        let rho = grid.rho(i);
        let cin = 1.0 / (h * h) - 1.0 / (2.0 * h * rho);
        let cout = 1.0 / (h * h) + 1.0 / (2.0 * h * rho);
        let ca = 1.0 / (rho * rho * dth * dth);
        for k in 0..nt {
            let inward = if i == 0 { grid.idx(0, (k + half) % nt) } else { grid.idx(i - 1, k) };
            b.add(inward, cin);
            let mut diag = -2.0 / (h * h) - 2.0 * ca - shift;
            if i + 1 < grid.n_r {
                b.add(grid.idx(i + 1, k), cout);
            } else {
                diag -= cout;
                bvec[grid.idx(i, k)] = 2.0 * cout * boundary[k];
            }
            b.add(grid.idx(i, (k + nt - 1) % nt), ca);
            b.add(grid.idx(i, (k + 1) % nt), ca);
            b.add(grid.idx(i, k), diag);
            b.finish_row();
        }
    }
    (b.build(), bvec)
}

/// Solve Δu = 0 with the given Dirichlet trace.
pub fn harmonic_extension(grid: &PolarGrid, boundary: &[f64]) -> Result<ScalarField> {
    let (a, bvec) = assemble_scalar(grid, 0.0, boundary);
    let rhs: Vec<f64> = bvec.iter().map(|&v| -v).collect();
    let mean = boundary.iter().sum::<f64>() / boundary.len() as f64;
    let x0 = vec![mean; grid.n_nodes()];
    let (x, _) = bicgstab(&a, &rhs, Some(&x0), 1e-12, 200_000)?;
    Ok(ScalarField { grid: *grid, values: x })
}

/// Shifted hyperbolic subsolution u_j = log λ_j - 2log(1-ρ²) - d, with d
/// chosen so the trace sits below the prescribed boundary data.  The floor
/// d ≥ 0.5 absorbs the O(1) pointwise truncation of the ghost closure at the
/// outermost ring, keeping the shifted field a *discrete* subsolution:
/// its residual is ≥ (1-e^{-d})Δu_hyp - Δu_hyp/4 > 0 for d > log(4/3).
fn subsolution(grid: &PolarGrid, r: usize, boundary: &[Vec<f64>]) -> Vec<ScalarField> {
    let lam = lambda_vector(r).expect("rank checked upstream");
    let rr = grid.outer_radius;
    let trace = -2.0 * (1.0 - rr * rr).ln();
    let mut d = 0.5_f64;
    for (j, l) in lam.iter().enumerate() {
        for &g in &boundary[j] {
            d = d.max(l.ln() + trace - g);
        }
    }
    lam.iter()
        .map(|&l| ScalarField::from_fn(*grid, |rho, _| l.ln() - 2.0 * (1.0 - rho * rho).ln() - d))
        .collect()
}

fn initial_guess(
    grid: &PolarGrid,
    r: usize,
    boundary: &[Vec<f64>],
) -> Result<Vec<ScalarField>> {
    let sub = subsolution(grid, r, boundary);
    let mut out = Vec::with_capacity(r - 1);
    for j in 0..r - 1 {
        let ext = harmonic_extension(grid, &boundary[j])?;
        out.push(sub[j].zip_map(&ext, f64::max));
    }
    Ok(out)
}

fn flatten_residual(res: &[ScalarField], m: usize, n_nodes: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n_nodes];
    for (j, f) in res.iter().enumerate() {
        for (node, &v) in f.values.iter().enumerate() {
            out[node * m + j] = v;
        }
    }
    out
}

fn newton(state: &mut TodaState, opts: &SolveOptions) -> Result<SolveReport> {
    let start = Instant::now();
    let m = state.m();
    let n_nodes = state.grid.n_nodes();
    let mut history = Vec::new();
    let mut res = residual(state)?;
    let mut rn = residual_norm(&res);
    history.push(rn);
    let mut iterations = 0;
    while rn > opts.newton_tol {
        if iterations >= opts.max_newton {
            return Err(TodaError::NonConvergence { iterations, residual: rn });
        }
        let jac = jacobian(state);
        let rhs: Vec<f64> =
            flatten_residual(&res, m, n_nodes).iter().map(|&v| -v).collect();
        let (dir, _) = bicgstab(&jac, &rhs, None, opts.linear_tol, opts.max_linear)?;
        // Armijo backtracking on the residual max-norm
        let mut lambda = 1.0_f64;
        loop {
            let mut trial = state.clone();
            for j in 0..m {
                for node in 0..n_nodes {
                    trial.u[j].values[node] += lambda * dir[node * m + j];
                }
            }
            let tres = residual(&trial)?;
            let trn = residual_norm(&tres);
            if trn < rn * (1.0 - 1e-4 * lambda) {
                *state = trial;
                res = tres;
                rn = trn;
                break;
            }
            lambda *= 0.5;
            if lambda < opts.min_step {
                return Err(TodaError::NonConvergence { iterations, residual: rn });
            }
        }
        iterations += 1;
        history.push(rn);
    }
    Ok(SolveReport {
        converged: true,
        iterations,
        residual_history: history,
        bracket_certificate: None,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

fn monotone(state: &mut TodaState, opts: &SolveOptions) -> Result<SolveReport> {
    let start = Instant::now();
    let grid = state.grid;
    let m = state.m();
    let n_nodes = grid.n_nodes();
    let sub = subsolution(&grid, state.r, &state.boundary);
    // constant supersolution: c ≥ boundary and e^{rc} ≥ max E
    let mut sup = f64::NEG_INFINITY;
    for b in &state.boundary {
        for &g in b {
            sup = sup.max(g);
        }
    }
    let emax = state.e_field.max();
    if emax > 0.0 {
        sup = sup.max(emax.ln() / state.r as f64);
    }
    // start at the supersolution; the sweep decreases toward the solution
    for u in &mut state.u {
        for v in &mut u.values {
            *v = sup;
        }
    }
    let mut cert = BracketCertificate {
        min_sub_margin: f64::INFINITY,
        min_super_margin: f64::INFINITY,
        max_monotonicity_violation: 0.0,
    };
    let slack = 1e-8;
    // the e^{u_0} = E·e^{-Σu} channel has its Lipschitz maximum at the
    // *bottom* of the bracket, so that part of the shift is fixed from the
    // subsolution once and for all
    let mut v0_cap = 0.0_f64;
    {
        let n_nodes = grid.n_nodes();
        for node in 0..n_nodes {
            let sum: f64 = sub.iter().map(|s| s.values[node]).sum();
            v0_cap = v0_cap.max(state.e_field.values[node] * (-sum).exp());
        }
    }
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        if iterations >= opts.max_monotone {
            return Err(TodaError::NonConvergence {
                iterations,
                residual: *history.last().unwrap_or(&f64::NAN),
            });
        }
        // reaction RHS f_j(u^k); direct channels take their Lipschitz bound
        // from the current (decreasing) iterate
        let v0 = state.u0_density();
        let mut vmax = 0.0_f64;
        for u in &state.u {
            for &v in &u.values {
                vmax = vmax.max(v.exp());
            }
        }
        let shift = 8.0 * vmax + 4.0 * v0_cap;
        let mut next = Vec::with_capacity(m);
        for j in 0..m {
            let (a, bvec) = assemble_scalar(&grid, shift, &state.boundary[j]);
            let mut rhs = vec![0.0; n_nodes];
            for node in 0..n_nodes {
                let vj = state.u[j].values[node].exp();
                let lo = if j == 0 { v0.values[node] } else { state.u[j - 1].values[node].exp() };
                let hi =
                    if j + 1 == m { v0.values[node] } else { state.u[j + 1].values[node].exp() };
                let f = 4.0 * (2.0 * vj - lo - hi);
                rhs[node] = f - shift * state.u[j].values[node] - bvec[node];
            }
            let (x, _) =
                bicgstab(&a, &rhs, Some(&state.u[j].values), opts.linear_tol, opts.max_linear)?;
            next.push(ScalarField { grid, values: x });
        }
        let mut diff = 0.0_f64;
        for j in 0..m {
            for node in 0..n_nodes {
                let newv = next[j].values[node];
                let oldv = state.u[j].values[node];
                diff = diff.max((newv - oldv).abs());
                // started at the supersolution: iterates must decrease
                cert.max_monotonicity_violation =
                    cert.max_monotonicity_violation.max(newv - oldv);
                cert.min_sub_margin = cert.min_sub_margin.min(newv - sub[j].values[node]);
                cert.min_super_margin = cert.min_super_margin.min(sup - newv);
            }
        }
        if cert.min_sub_margin < -slack || cert.min_super_margin < -slack {
            return Err(TodaError::BracketViolation {
                iteration: iterations,
                defect: cert.min_sub_margin.min(cert.min_super_margin),
            });
        }
        for j in 0..m {
            state.u[j] = next[j].clone();
        }
        history.push(diff);
        iterations += 1;
        if diff <= opts.newton_tol {
            break;
        }
    }
    Ok(SolveReport {
        converged: true,
        iterations,
        residual_history: history,
        bracket_certificate: Some(cert),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Solve the Dirichlet problem for the coupled system on `grid` with the
/// given per-j boundary traces.
pub fn solve_dirichlet(
    weight: &WeightModel,
    grid: &PolarGrid,
    bg: &BackgroundGeometry,
    boundary: &[Vec<f64>],
    opts: &SolveOptions,
) -> Result<(TodaState, SolveReport)> {
    let r = weight.r;
    if r < 2 {
        return Err(TodaError::InvalidRank(r));
    }
    if boundary.len() != r - 1 {
        return Err(TodaError::BoundaryLength { expected: r - 1, got: boundary.len() });
    }
    for b in boundary {
        if b.len() != grid.n_theta {
            return Err(TodaError::BoundaryLength { expected: grid.n_theta, got: b.len() });
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(TodaError::InvalidArgument("non-finite boundary data".into()));
        }
    }
    let e = eval_e(weight, grid, bg)?;
    let mut state = TodaState {
        r,
        grid: *grid,
        u: initial_guess(grid, r, boundary)?,
        e_field: e,
        boundary: boundary.to_vec(),
    };
    let report = match opts.scheme {
        Scheme::Newton => newton(&mut state, opts)?,
        Scheme::Monotone => monotone(&mut state, opts)?,
    };
    Ok((state, report))
}

/// Monotone-scheme entry point (same contract as `solve_dirichlet`).
pub fn solve_monotone(
    weight: &WeightModel,
    grid: &PolarGrid,
    bg: &BackgroundGeometry,
    boundary: &[Vec<f64>],
    opts: &SolveOptions,
) -> Result<(TodaState, SolveReport)> {
    let mut o = opts.clone();
    o.scheme = Scheme::Monotone;
    solve_dirichlet(weight, grid, bg, boundary, &o)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MasterLattice {
    /// radial rings per unit radius: Δρ = 1/rings_per_unit
    pub rings_per_unit: usize,
    pub n_theta: usize,
}

impl MasterLattice {
    /// Grid for the exhaustion stage of radius s/(s+1); errors unless the
    /// stage boundary lies exactly on a lattice ring.
    pub fn stage_grid(&self, stage: usize) -> Result<PolarGrid> {
        let den = stage + 1;
        if self.rings_per_unit % den != 0 {
            return Err(TodaError::InvalidGrid(format!(
                "stage radius {stage}/{den} is not on a lattice ring: rings_per_unit {} not divisible by {den}",
                self.rings_per_unit
            )));
        }
        let n_r = stage * (self.rings_per_unit / den);
        crate::geometry::make_grid(n_r, self.n_theta, stage as f64 / den as f64)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityCert {
    /// +1 if the tracked w_j increase with the run parameter, -1 if they
    /// decrease; the sign is measured, then enforced across all steps
    pub direction: i8,
    pub max_violation: f64,
    pub slack: f64,
    pub pass: bool,
}

/// Certify a common monotone direction for w_j (j ≤ n) across an ordered
/// sequence of states; later states may live on larger nested grids.
fn certify_monotone(states: &[&TodaState], n_half: usize, slack: f64) -> MonotonicityCert {
    let ws: Vec<HWeights> = states.iter().map(|s| reconstruct_h(s)).collect();
    let mut pos = 0.0_f64; // worst violation if direction is "increasing"
    let mut neg = 0.0_f64; // worst violation if direction is "decreasing"
    let mut mean = 0.0_f64;
    for pair in 0..states.len() - 1 {
        let small = states[pair].grid;
        for j in 0..n_half {
            let a = &ws[pair].w[j];
            let b = ws[pair + 1].w[j].restrict(&small).expect("stage grids nest");
            for idx in 0..small.n_nodes() {
                let d = b.values[idx] - a.values[idx];
                mean += d;
                pos = pos.max(-d);
                neg = neg.max(d);
            }
        }
    }
    let direction: i8 = if mean >= 0.0 { 1 } else { -1 };
    let max_violation = if direction == 1 { pos } else { neg };
    MonotonicityCert { direction, max_violation, slack, pass: max_violation <= slack }
}

#[derive(Clone, Debug)]
pub struct StageResult {
    pub radius: f64,
    pub state: TodaState,
    pub report: SolveReport,
}

#[derive(Clone, Debug)]
pub struct ExhaustionRun {
    pub r: usize,
    pub stages: Vec<StageResult>,
    pub monotonicity: MonotonicityCert,
    /// max |w^{(s+1)} - w^{(s)}| over all j on the fixed subgrid D_0.5
    pub succ_diffs: Vec<f64>,
}

fn w_diff_on_subgrid(a: &TodaState, b: &TodaState, sub: &PolarGrid) -> f64 {
    let wa = reconstruct_h(a);
    let wb = reconstruct_h(b);
    let mut worst = 0.0_f64;
    for j in 0..a.r {
        let fa = wa.w[j].restrict(sub).expect("nested");
        let fb = wb.w[j].restrict(sub).expect("nested");
        for idx in 0..sub.n_nodes() {
            worst = worst.max((fa.values[idx] - fb.values[idx]).abs());
        }
    }
    worst
}

/// Subgrid of the master lattice covering D_0.5 (used as the fixed
/// comparison window for Cauchy and uniqueness diagnostics).
fn half_disc_grid(master: &MasterLattice) -> Result<PolarGrid> {
    crate::geometry::make_grid(master.rings_per_unit / 2, master.n_theta, 0.5)
}

/// Solve the stages R_s = s/(s+1), s = 1..stages, with the LM boundary data,
/// and certify stage monotonicity plus Cauchy decay on D_0.5.
pub fn run_exhaustion(
    weight: &WeightModel,
    stages: usize,
    master: &MasterLattice,
    opts: &SolveOptions,
) -> Result<ExhaustionRun> {
    if stages < 1 {
        return Err(TodaError::InvalidArgument("need at least one stage".into()));
    }
    let mut results = Vec::with_capacity(stages);
    for s in 1..=stages {
        let grid = master.stage_grid(s)?;
        let bg = background(&grid);
        let boundary = boundary_lm(&grid, weight.r);
        let (state, report) = solve_dirichlet(weight, &grid, &bg, &boundary, opts)?;
        results.push(StageResult { radius: grid.outer_radius, state, report });
    }
    let refs: Vec<&TodaState> = results.iter().map(|s| &s.state).collect();
    let monotonicity = certify_monotone(&refs, results[0].state.n_half(), 1e-9);
    let sub = half_disc_grid(master)?;
    let succ_diffs = (0..results.len().saturating_sub(1))
        .map(|i| w_diff_on_subgrid(&results[i].state, &results[i + 1].state, &sub))
        .collect();
    Ok(ExhaustionRun { r: weight.r, stages: results, monotonicity, succ_diffs })
}

#[derive(Clone, Debug)]
pub struct MollificationRun {
    pub deltas: Vec<f64>,
    pub states: Vec<TodaState>,
    pub monotonicity: MonotonicityCert,
    pub direct_state: TodaState,
    /// max |w_direct - w_finest| over all j on D_0.5
    pub final_diff: f64,
}

/// Solve with each mollified weight on a fixed grid (LM boundary), certify
/// the monotone ordering of the solutions along the δ schedule, and compare
/// the finest stage against the direct solve with the singular density.
pub fn run_mollification(
    weight: &WeightModel,
    schedule: &MollifierSchedule,
    grid: &PolarGrid,
    opts: &SolveOptions,
) -> Result<MollificationRun> {
    let bg = background(grid);
    let boundary = boundary_lm(grid, weight.r);
    let mut states = Vec::with_capacity(schedule.radii.len());
    for &delta in &schedule.radii {
        let molded = mollify(weight, delta, grid, &bg)?;
        let (state, _) = solve_dirichlet(&molded, grid, &bg, &boundary, opts)?;
        states.push(state);
    }
    let (direct_state, _) = solve_dirichlet(weight, grid, &bg, &boundary, opts)?;
    let refs: Vec<&TodaState> = states.iter().collect();
    let monotonicity = certify_monotone(&refs, states[0].n_half(), 1e-9);
    let sub = crate::geometry::make_grid(
        ((0.5 / grid.d_rho()).floor() as usize).min(grid.n_r),
        grid.n_theta,
        ((0.5 / grid.d_rho()).floor()) * grid.d_rho(),
    )?;
    let final_diff = w_diff_on_subgrid(states.last().unwrap(), &direct_state, &sub);
    Ok(MollificationRun {
        deltas: schedule.radii.clone(),
        states,
        monotonicity,
        direct_state,
        final_diff,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct UniquenessRun {
    pub stage_diffs: Vec<f64>,
    pub strictly_decreasing: bool,
    pub final_ratio: f64,
}

/// Exhaustion from two boundary seeds (LM data and `factor`×-density LM
/// data); reports the per-stage w-discrepancy on D_0.5.
pub fn run_uniqueness_probe(
    weight: &WeightModel,
    stages: usize,
    master: &MasterLattice,
    factor: f64,
    opts: &SolveOptions,
) -> Result<UniquenessRun> {
    if factor <= 0.0 {
        return Err(TodaError::InvalidArgument("seed density factor must be positive".into()));
    }
    let sub = half_disc_grid(master)?;
    let mut stage_diffs = Vec::with_capacity(stages);
    for s in 1..=stages {
        let grid = master.stage_grid(s)?;
        let bg = background(&grid);
        let ba = boundary_lm(&grid, weight.r);
        let bb: Vec<Vec<f64>> = ba
            .iter()
            .map(|row| row.iter().map(|&g| g + factor.ln()).collect())
            .collect();
        let (sa, _) = solve_dirichlet(weight, &grid, &bg, &ba, opts)?;
        let (sb, _) = solve_dirichlet(weight, &grid, &bg, &bb, opts)?;
        stage_diffs.push(w_diff_on_subgrid(&sa, &sb, &sub));
    }
    let strictly_decreasing = stage_diffs.windows(2).all(|w| w[1] < w[0]);
    let final_ratio = stage_diffs.last().unwrap() / stage_diffs[0];
    Ok(UniquenessRun { stage_diffs, strictly_decreasing, final_ratio })
}
