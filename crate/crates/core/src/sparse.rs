//! Sparse-matrix assembly helpers and the symmetric solvers used across the crate.

use nalgebra::DVector;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix, CsrMatrix};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("Cholesky factorization failed: matrix not positive definite")]
    NotPositiveDefinite,
    #[error("conjugate gradient stalled at relative residual {residual:.3e} after {iters} iterations")]
    CgStalled { residual: f64, iters: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Builds a CSR matrix from triplets, summing duplicates. Assembly order is
/// deterministic: entries are accumulated through a sorted COO pass.
pub fn csr_from_triplets(
    nrows: usize,
    ncols: usize,
    triplets: &[(usize, usize, f64)],
) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(nrows, ncols);
    let mut sorted: Vec<&(usize, usize, f64)> = triplets.iter().collect();
    sorted.sort_by_key(|&&(r, c, _)| (r, c));
    for &&(r, c, v) in &sorted {
        coo.push(r, c, v);
    }
    CsrMatrix::from(&coo)
}

/// y = A x for a CSR matrix and flat slices.
pub fn matvec(a: &CsrMatrix<f64>, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.ncols(), x.len());
    let mut y = vec![0.0; a.nrows()];
    for (row, ri) in y.iter_mut().enumerate() {
        let r = a.row(row);
        let mut acc = 0.0;
        for (col, val) in r.col_indices().iter().zip(r.values()) {
            acc += val * x[*col];
        }
        *ri = acc;
    }
    y
}

/// y += s * A x
pub fn matvec_acc(a: &CsrMatrix<f64>, x: &[f64], s: f64, y: &mut [f64]) {
    debug_assert_eq!(a.ncols(), x.len());
    debug_assert_eq!(a.nrows(), y.len());
    for (row, yi) in y.iter_mut().enumerate() {
        let r = a.row(row);
        let mut acc = 0.0;
        for (col, val) in r.col_indices().iter().zip(r.values()) {
            acc += val * x[*col];
        }
        *yi += s * acc;
    }
}

/// Restriction of a CSR matrix to given row and column subsets.
/// `rows[i]` is the global index of local row `i`; columns likewise.
pub fn restrict(a: &CsrMatrix<f64>, rows: &[usize], cols: &[usize]) -> CsrMatrix<f64> {
    let mut col_map = vec![usize::MAX; a.ncols()];
    for (local, &global) in cols.iter().enumerate() {
        col_map[global] = local;
    }
    let mut triplets = Vec::new();
    for (local_r, &global_r) in rows.iter().enumerate() {
        let r = a.row(global_r);
        for (col, val) in r.col_indices().iter().zip(r.values()) {
            let lc = col_map[*col];
            if lc != usize::MAX && *val != 0.0 {
                triplets.push((local_r, lc, *val));
            }
        }
    }
    csr_from_triplets(rows.len(), cols.len(), &triplets)
}

/// Scales every stored entry.
pub fn scaled(a: &CsrMatrix<f64>, s: f64) -> CsrMatrix<f64> {
    let mut b = a.clone();
    for v in b.values_mut() {
        *v *= s;
    }
    b
}

/// Dot product of flat vectors.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cached Cholesky factorization of a symmetric positive definite CSR matrix.
pub struct SpdFactor {
    chol: CscCholesky<f64>,
    n: usize,
}

impl SpdFactor {
    pub fn new(a: &CsrMatrix<f64>) -> Result<Self, SolveError> {
        let csc = CscMatrix::from(a);
        let chol = CscCholesky::factor(&csc).map_err(|_| SolveError::NotPositiveDefinite)?;
        Ok(Self { chol, n: a.nrows() })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.n);
        if self.n == 0 {
            return Vec::new();
        }
        let rhs = DVector::from_column_slice(b);
        let x = self.chol.solve(&rhs);
        x.column(0).iter().copied().collect()
    }

    pub fn dim(&self) -> usize {
        self.n
    }
}

/// Jacobi-preconditioned conjugate gradient for SPD systems given as matrices.
pub fn pcg(
    a: &CsrMatrix<f64>,
    b: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>, SolveError> {
    let n = b.len();
    let mut diag = vec![1.0; n];
    for i in 0..n {
        let r = a.row(i);
        for (c, v) in r.col_indices().iter().zip(r.values()) {
            if *c == i && *v > 0.0 {
                diag[i] = 1.0 / v;
            }
        }
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 0..max_iters {
        let ap = matvec(a, &p);
        let alpha = rz / dot(&p, &ap);
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        if norm(&r) <= tol * bnorm {
            return Ok(x);
        }
        z = r.iter().zip(&diag).map(|(ri, di)| ri * di).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        if it == max_iters - 1 {
            return Err(SolveError::CgStalled {
                residual: norm(&r) / bnorm,
                iters: max_iters,
            });
        }
    }
    Ok(x)
}

/// Conjugate gradient in a weighted inner product for an abstract self-adjoint
/// positive definite operator. `apply_op` computes N x; `ip` computes the
/// inner product in which N is self-adjoint.
pub fn cg_operator<F, G>(
    apply_op: F,
    ip: G,
    b: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>, SolveError>
where
    F: Fn(&[f64]) -> Vec<f64>,
    G: Fn(&[f64], &[f64]) -> f64,
{
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let bnorm = ip(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut p = r.clone();
    let mut rr = ip(&r, &r);
    for _ in 0..max_iters {
        let ap = apply_op(&p);
        let alpha = rr / ip(&p, &ap);
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = ip(&r, &r);
        if rr_new.sqrt() <= tol * bnorm {
            return Ok(x);
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(SolveError::CgStalled {
        residual: ip(&r, &r).sqrt() / bnorm,
        iters: max_iters,
    })
}

/// Writes a CSR matrix in MatrixMarket coordinate format.
pub fn to_matrix_market(a: &CsrMatrix<f64>) -> String {
    let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
    out.push_str(&format!("{} {} {}\n", a.nrows(), a.ncols(), a.nnz()));
    for row in 0..a.nrows() {
        let r = a.row(row);
        for (col, val) in r.col_indices().iter().zip(r.values()) {
            out.push_str(&format!("{} {} {:.17e}\n", row + 1, col + 1, val));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_small_spd() {
        let t = vec![
            (0, 0, 4.0),
            (0, 1, 1.0),
            (1, 0, 1.0),
            (1, 1, 3.0),
            (2, 2, 2.0),
        ];
        let a = csr_from_triplets(3, 3, &t);
        let f = SpdFactor::new(&a).unwrap();
        let x = f.solve(&[1.0, 2.0, 3.0]);
        let ax = matvec(&a, &x);
        for (ai, bi) in ax.iter().zip([1.0, 2.0, 3.0]) {
            assert!((ai - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn pcg_matches_cholesky() {
        let t = vec![
            (0, 0, 4.0),
            (0, 1, 1.0),
            (1, 0, 1.0),
            (1, 1, 3.0),
            (1, 2, 0.5),
            (2, 1, 0.5),
            (2, 2, 2.0),
        ];
        let a = csr_from_triplets(3, 3, &t);
        let x = pcg(&a, &[1.0, -1.0, 0.5], 1e-14, 200).unwrap();
        let f = SpdFactor::new(&a).unwrap();
        let y = f.solve(&[1.0, -1.0, 0.5]);
        for (xi, yi) in x.iter().zip(&y) {
            assert!((xi - yi).abs() < 1e-10);
        }
    }

    #[test]
    fn restriction_picks_submatrix() {
        let t = vec![(0, 0, 1.0), (1, 1, 2.0), (2, 2, 3.0), (0, 2, 5.0)];
        let a = csr_from_triplets(3, 3, &t);
        let b = restrict(&a, &[0, 2], &[0, 2]);
        assert_eq!(b.nrows(), 2);
        let y = matvec(&b, &[1.0, 1.0]);
        assert_eq!(y, vec![6.0, 3.0]);
    }
}
