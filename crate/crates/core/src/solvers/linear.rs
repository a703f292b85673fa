//! Linear solves: sparse LU (default) or restarted GMRES with ILU(0).

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use super::sparse::{norm2, CsrMatrix, TripletBuilder};
use crate::error::{Error, Result};

/// Relative residual every successful solve meets.
pub const LINEAR_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearMethod {
    Direct,
    Gmres { restart: usize, max_iters: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearOptions {
    pub method: LinearMethod,
    pub tolerance: f64,
}

impl Default for LinearOptions {
    fn default() -> Self {
        LinearOptions { method: LinearMethod::Direct, tolerance: LINEAR_TOLERANCE }
    }
}

impl LinearOptions {
    pub fn gmres() -> Self {
        LinearOptions { method: LinearMethod::Gmres { restart: 100, max_iters: 5000 }, ..Default::default() }
    }
}

fn check_structure(a: &CsrMatrix) -> Result<()> {
    if a.n_rows() != a.n_cols() {
        return Err(Error::Solver(format!("matrix is {}x{}, not square", a.n_rows(), a.n_cols())));
    }
    if let Some(&i) = a.empty_rows().first() {
        return Err(Error::Solver(format!("structurally singular matrix: zero pivot at row {i}")));
    }
    let mut col_used = vec![false; a.n_cols()];
    for (_, j, v) in a.triplets() {
        if v != 0.0 {
            col_used[j] = true;
        }
    }
    if let Some(j) = col_used.iter().position(|u| !u) {
        return Err(Error::Solver(format!("structurally singular matrix: zero pivot at column {j}")));
    }
    Ok(())
}

/// Solve `A x = b`.
pub fn linear_solve(a: &CsrMatrix, b: &[f64], opts: &LinearOptions) -> Result<Vec<f64>> {
    solve_impl(a, b, opts, false)
}

/// Solve `A^T x = b`.
pub fn linear_solve_transpose(a: &CsrMatrix, b: &[f64], opts: &LinearOptions) -> Result<Vec<f64>> {
    solve_impl(a, b, opts, true)
}

fn solve_impl(a: &CsrMatrix, b: &[f64], opts: &LinearOptions, transpose: bool) -> Result<Vec<f64>> {
    check_structure(a)?;
    let n = a.n_rows();
    if b.len() != n {
        return Err(Error::Usage(format!("right-hand side has length {}, matrix has {n} rows", b.len())));
    }
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let owned;
    let op = if transpose {
        owned = a.transpose();
        &owned
    } else {
        a
    };
    let x = match opts.method {
        LinearMethod::Direct => direct(op, b, opts.tolerance)?,
        LinearMethod::Gmres { restart, max_iters } => gmres(op, b, restart, max_iters, opts.tolerance)?,
    };
    let r = residual(op, &x, b);
    let rel = norm2(&r) / bnorm;
    if !(rel <= opts.tolerance) {
        return Err(Error::Solver(format!("relative residual {rel:e} exceeds {:e}", opts.tolerance)));
    }
    Ok(x)
}

fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let ax = a.mul_vec(x);
    b.iter().zip(&ax).map(|(b, ax)| b - ax).collect()
}

fn direct(a: &CsrMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = a.n_rows();
    let trip: Vec<Triplet<usize, usize, f64>> = a.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
    let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip)
        .map_err(|e| Error::Solver(format!("cannot build sparse matrix: {e:?}")))?;
    let lu = m.sp_lu().map_err(|e| Error::Solver(format!("LU factorization failed: {e:?}")))?;
    let solve = |rhs: &[f64]| -> Result<Vec<f64>> {
        let bm = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
        let xm = lu.solve(&bm);
        let x: Vec<f64> = (0..n).map(|i| xm[(i, 0)]).collect();
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Solver(format!("singular matrix: non-finite solution at index {i}")));
        }
        Ok(x)
    };
    let mut x = solve(b)?;
    let bnorm = norm2(b);
    // A few sweeps of iterative refinement.
    for _ in 0..3 {
        let r = residual(a, &x, b);
        if norm2(&r) <= 0.01 * tol * bnorm {
            break;
        }
        let dx = solve(&r)?;
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
    }
    Ok(x)
}

/// ILU(0) factors stored on the matrix pattern.
struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    fn new(a: &CsrMatrix) -> Result<Ilu0> {
        let mut lu = a.clone();
        let n = a.n_rows();
        let mut diag = vec![usize::MAX; n];
        for i in 0..n {
            for k in lu.row_ptr[i]..lu.row_ptr[i + 1] {
                if lu.col_idx[k] == i {
                    diag[i] = k;
                }
            }
            if diag[i] == usize::MAX {
                return Err(Error::Solver(format!("ILU(0): zero pivot at row {i}")));
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for k in start..end {
                pos[lu.col_idx[k]] = k;
            }
            for k in start..end {
                let j = lu.col_idx[k];
                if j >= i {
                    break;
                }
                let pivot = lu.values[diag[j]];
                if pivot == 0.0 {
                    return Err(Error::Solver(format!("ILU(0): zero pivot at row {j}")));
                }
                let f = lu.values[k] / pivot;
                lu.values[k] = f;
                for kk in diag[j] + 1..lu.row_ptr[j + 1] {
                    let p = pos[lu.col_idx[kk]];
                    if p != usize::MAX {
                        lu.values[p] -= f * lu.values[kk];
                    }
                }
            }
            for k in start..end {
                pos[lu.col_idx[k]] = usize::MAX;
            }
            if lu.values[diag[i]] == 0.0 {
                return Err(Error::Solver(format!("ILU(0): zero pivot at row {i}")));
            }
        }
        Ok(Ilu0 { lu, diag })
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let n = r.len();
        let a = &self.lu;
        let mut y = r.to_vec();
        for i in 0..n {
            for k in a.row_ptr[i]..self.diag[i] {
                y[i] -= a.values[k] * y[a.col_idx[k]];
            }
        }
        for i in (0..n).rev() {
            for k in self.diag[i] + 1..a.row_ptr[i + 1] {
                y[i] -= a.values[k] * y[a.col_idx[k]];
            }
            y[i] /= a.values[self.diag[i]];
        }
        y
    }
}

/// Right-preconditioned restarted GMRES.
fn gmres(a: &CsrMatrix, b: &[f64], restart: usize, max_iters: usize, tol: f64) -> Result<Vec<f64>> {
    let n = b.len();
    // Saddle-point blocks have no stored diagonal; give ILU a place to fill in.
    let mut padded = TripletBuilder::new(n);
    for (i, j, v) in a.triplets() {
        padded.add(i, j, v);
    }
    for i in 0..n {
        padded.add(i, i, 0.0);
    }
    let pc = Ilu0::new(&padded.build())?;
    let bnorm = norm2(b);
    let target = 0.1 * tol * bnorm;
    let mut x = vec![0.0; n];
    let mut total = 0;
    let m = restart.max(1);
    loop {
        let r = residual(a, &x, b);
        let beta = norm2(&r);
        if beta <= target {
            return Ok(x);
        }
        if total >= max_iters {
            return Err(Error::Solver(format!(
                "GMRES reached {max_iters} iterations with relative residual {:e}",
                beta / bnorm
            )));
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::new();
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            total += 1;
            let zk = pc.apply(&v[k]);
            let mut w = a.mul_vec(&zk);
            z.push(zk);
            for j in 0..=k {
                let hj = w.iter().zip(&v[j]).map(|(a, b)| a * b).sum::<f64>();
                h[j][k] = hj;
                for (wi, vi) in w.iter_mut().zip(&v[j]) {
                    *wi -= hj * vi;
                }
            }
            let hn = norm2(&w);
            h[k + 1][k] = hn;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if g[k + 1].abs() <= target || hn == 0.0 || total >= max_iters {
                break;
            }
            v.push(w.iter().map(|x| x / hn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, zi) in x.iter_mut().zip(&z[j]) {
                *xi += yj * zi;
            }
        }
    }
}
