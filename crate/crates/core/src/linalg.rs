//! Dense and sparse symmetric eigensolvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigen-decomposition of a real symmetric matrix with eigenvalues in
/// ascending order; column `k` of the returned matrix belongs to value `k`.
pub fn sym_eigen(mat: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = mat.nrows();
    let eig = SymmetricEigen::new(mat);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Eigenvalues and vectors of a symmetric tridiagonal matrix.
pub fn tridiag_eigen(diag: &[f64], off: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let n = diag.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = diag[i];
        if i + 1 < n {
            m[(i, i + 1)] = off[i];
            m[(i + 1, i)] = off[i];
        }
    }
    sym_eigen(m)
}

/// Compressed sparse row storage for a real square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Builds from row-sorted triplets, summing duplicates and dropping
    /// entries with magnitude below `threshold` (only when `threshold > 0`).
    pub fn from_rows(dim: usize, rows: Vec<Vec<(usize, f64)>>, threshold: f64) -> Self {
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut i = 0;
            while i < row.len() {
                let c = row[i].0;
                let mut v = 0.0;
                while i < row.len() && row[i].0 == c {
                    v += row[i].1;
                    i += 1;
                }
                let keep = if threshold > 0.0 { v.abs() >= threshold } else { v != 0.0 };
                if keep {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Csr {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *out = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.cols[k])] = self.vals[k];
            }
        }
        m
    }

    /// Largest absolute row sum, an upper bound of the spectral radius.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|k| self.vals[k].abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn start_vector(n: usize, salt: usize) -> Vec<f64> {
    // deterministic, non-degenerate start with components along every axis
    let mut v: Vec<f64> = (0..n)
        .map(|i| {
            let t = (i + 1) as f64 * (0.618_033_988_749_895 + salt as f64 * 0.414_213_562_373_095);
            1.0 + 0.5 * (t.fract() - 0.5)
        })
        .collect();
    let nrm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= nrm);
    v
}

/// Lowest `k` eigenpairs of a sparse symmetric matrix by Lanczos iteration
/// with full reorthogonalization. The Krylov space is enlarged until every
/// requested Ritz pair has residual below `tol · ‖A‖`.
pub fn lanczos_lowest(a: &Csr, k: usize, tol: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.dim;
    if k == 0 || k > n {
        return Err(Error::config(
            "n_stop",
            format!("requested {k} eigenpairs of a {n}-dimensional matrix"),
        ));
    }
    let scale = a.norm_inf().max(f64::MIN_POSITIVE);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new(); // beta[j] couples basis j and j+1
    let mut q = start_vector(n, 0);
    let mut w = vec![0.0; n];
    let mut target = (2 * k + 20).min(n);
    let mut restarts = 0;
    loop {
        while basis.len() < target {
            a.matvec(&q, &mut w);
            let aj = dot(&q, &w);
            basis.push(q.clone());
            alpha.push(aj);
            // full reorthogonalization, applied twice for stability
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(b, &w);
                    w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
            }
            if basis.len() == n {
                break;
            }
            let mut bj = dot(&w, &w).sqrt();
            if bj < 1e-12 * scale {
                // invariant subspace: continue with a fresh orthogonal direction
                restarts += 1;
                w = start_vector(n, restarts);
                for _ in 0..2 {
                    for b in &basis {
                        let c = dot(b, &w);
                        w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                    }
                }
                let nw = dot(&w, &w).sqrt();
                if nw < 1e-12 {
                    break;
                }
                w.iter_mut().for_each(|x| *x /= nw);
                bj = 0.0;
                beta.push(bj);
                q = w.clone();
                continue;
            }
            beta.push(bj);
            q = w.iter().map(|x| x / bj).collect();
        }
        let m = basis.len();
        let (theta, s) = tridiag_eigen(&alpha, &beta[..m.saturating_sub(1)]);
        let last_beta = if beta.len() >= m { beta[m - 1] } else { 0.0 };
        let kk = k.min(m);
        let converged = m == n || (0..kk).all(|i| (last_beta * s[(m - 1, i)]).abs() < tol * scale);
        if converged && kk == k {
            let mut vecs = DMatrix::zeros(n, k);
            for i in 0..k {
                let mut v = DVector::<f64>::zeros(n);
                for (j, b) in basis.iter().enumerate() {
                    let c = s[(j, i)];
                    for r in 0..n {
                        v[r] += c * b[r];
                    }
                }
                let nv = v.norm();
                vecs.set_column(i, &(v / nv));
            }
            return Ok((theta[..k].to_vec(), vecs));
        }
        if m >= n || target >= n {
            return Err(Error::Numeric(format!(
                "Lanczos iteration did not converge for {k} eigenpairs (dimension {n}); use the dense method"
            )));
        }
        target = (2 * target).min(n);
    }
}
