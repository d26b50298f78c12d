//! Minimal CSR sparse matrix and a BiCGSTAB solver preconditioned by
//! symmetric Gauss-Seidel.
//!
//! The Jacobians here are block 9-point stencils (at most ~12 entries per
//! row); a hand-rolled CSR with a Krylov solver is all the linear algebra the
//! crate needs, and it keeps reductions in a fixed order (determinism).

use crate::error::{Result, TodaError};

#[derive(Clone, Debug)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

/// Row-by-row CSR builder; rows must be pushed in order.
pub struct CsrBuilder {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    scratch: Vec<(usize, f64)>,
}

impl CsrBuilder {
    pub fn new(n: usize) -> CsrBuilder {
        CsrBuilder {
            n,
            row_ptr: vec![0],
            cols: Vec::with_capacity(12 * n),
            vals: Vec::with_capacity(12 * n),
            scratch: Vec::with_capacity(16),
        }
    }

    /// Accumulate an entry for the row currently being built.
    pub fn add(&mut self, col: usize, val: f64) {
        self.scratch.push((col, val));
    }

    /// Finish the current row: sort by column, merge duplicates.
    pub fn finish_row(&mut self) {
        self.scratch.sort_by_key(|e| e.0);
        let mut i = 0;
        while i < self.scratch.len() {
            let (c, mut v) = self.scratch[i];
            let mut j = i + 1;
            while j < self.scratch.len() && self.scratch[j].0 == c {
                v += self.scratch[j].1;
                j += 1;
            }
            self.cols.push(c);
            self.vals.push(v);
            i = j;
        }
        self.row_ptr.push(self.cols.len());
        self.scratch.clear();
    }

    pub fn build(self) -> Csr {
        assert_eq!(self.row_ptr.len(), self.n + 1, "not all rows finished");
        Csr { n: self.n, row_ptr: self.row_ptr, cols: self.cols, vals: self.vals }
    }
}

impl Csr {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for row in 0..self.n {
            let mut acc = 0.0;
            for e in self.row_ptr[row]..self.row_ptr[row + 1] {
                acc += self.vals[e] * x[self.cols[e]];
            }
            y[row] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for row in 0..self.n {
            for e in self.row_ptr[row]..self.row_ptr[row + 1] {
                if self.cols[e] == row {
                    d[row] = self.vals[e];
                }
            }
        }
        d
    }

    /// Apply the symmetric Gauss-Seidel preconditioner
    /// M = (D+L)·D⁻¹·(D+U): solve M z = r via one forward and one backward
    /// triangular sweep (rows are column-sorted by construction).
    fn sgs_apply(&self, diag: &[f64], r: &[f64], z: &mut [f64], y: &mut [f64]) {
        for row in 0..self.n {
            let mut acc = r[row];
            for e in self.row_ptr[row]..self.row_ptr[row + 1] {
                let c = self.cols[e];
                if c >= row {
                    break;
                }
                acc -= self.vals[e] * y[c];
            }
            y[row] = acc / diag[row];
        }
        for row in (0..self.n).rev() {
            let mut acc = diag[row] * y[row];
            for e in (self.row_ptr[row]..self.row_ptr[row + 1]).rev() {
                let c = self.cols[e];
                if c <= row {
                    break;
                }
                acc -= self.vals[e] * z[c];
            }
            z[row] = acc / diag[row];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve A x = b by BiCGSTAB with symmetric Gauss-Seidel preconditioning.
/// Converges when ||r||₂ ≤ rel_tol·||b||₂ (with a tiny absolute floor).
/// Returns the solution and the iteration count.
pub fn bicgstab(
    a: &Csr,
    b: &[f64],
    x0: Option<&[f64]>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = a.n;
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let tol = rel_tol * bnorm + 1e-300;
    let diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d.abs() > 1e-300 { d } else { 1.0 })
        .collect();
    let mut sweep = vec![0.0; n];

    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];

    let mut it = 0usize;
    // near-breakdown of the Lanczos coefficients (rho, r0·v, omega ≈ 0)
    // restarts the Krylov space from the current iterate instead of failing
    'restart: loop {
        a.matvec(&x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        if norm2(&r) <= tol {
            return Ok((x, it));
        }
        if it >= max_iter {
            return Err(TodaError::LinearSolveFailure(format!(
                "BiCGSTAB did not reach tolerance in {max_iter} iterations"
            )));
        }
        let r0 = r.clone();
        let r0norm = norm2(&r0);
        let mut rho = 1.0;
        let mut alpha = 1.0;
        let mut omega = 1.0;
        v.iter_mut().for_each(|e| *e = 0.0);
        p.iter_mut().for_each(|e| *e = 0.0);

        while it < max_iter {
            it += 1;
            let rho_new = dot(&r0, &r);
            if rho_new.abs() < 1e-30 * r0norm * norm2(&r) + 1e-300 {
                continue 'restart;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            a.sgs_apply(&diag, &p, &mut phat, &mut sweep);
            a.matvec(&phat, &mut v);
            let denom = dot(&r0, &v);
            if denom.abs() < 1e-300 {
                continue 'restart;
            }
            alpha = rho / denom;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if norm2(&s) <= tol {
                for i in 0..n {
                    x[i] += alpha * phat[i];
                }
                return Ok((x, it));
            }
            a.sgs_apply(&diag, &s, &mut shat, &mut sweep);
            a.matvec(&shat, &mut t);
            let tt = dot(&t, &t);
            if tt.abs() < 1e-300 {
                continue 'restart;
            }
            omega = dot(&t, &s) / tt;
            for i in 0..n {
                x[i] += alpha * phat[i] + omega * shat[i];
                r[i] = s[i] - omega * t[i];
            }
            if norm2(&r) <= tol {
                return Ok((x, it));
            }
            if omega.abs() < 1e-300 {
                continue 'restart;
            }
        }
        continue 'restart; // final true-residual check, then fail
    }
}
