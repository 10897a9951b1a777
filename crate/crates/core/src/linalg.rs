//! Dense factorizations shared by the network model and the settlement code.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};

/// Pivots smaller than this fraction of the largest matrix entry are treated
/// as zero.
pub const PIVOT_THRESHOLD: f64 = 1e-10;

/// LU factorization with partial pivoting that refuses near-singular input.
#[derive(Debug, Clone)]
pub struct DenseLu {
    lu: LU<f64, Dyn, Dyn>,
    dim: usize,
}

impl DenseLu {
    pub fn new(matrix: &DMatrix<f64>, context: &str) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Numerical(format!(
                "{context}: expected a square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let dim = matrix.nrows();
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        let lu = matrix.clone().lu();
        if dim > 0 {
            let u = lu.u();
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for i in 0..dim {
                let p = u[(i, i)].abs();
                lo = lo.min(p);
                hi = hi.max(p);
            }
            if !(lo > PIVOT_THRESHOLD * scale) {
                return Err(Error::Singular {
                    context: context.to_string(),
                    condition: if lo > 0.0 { hi / lo } else { f64::INFINITY },
                });
            }
        }
        Ok(DenseLu { lu, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        if self.dim == 0 {
            return DVector::zeros(0);
        }
        // Pivots were checked at construction, so the solve cannot fail.
        self.lu.solve(rhs).expect("factorization checked nonsingular")
    }

    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        if self.dim == 0 {
            return DMatrix::zeros(0, rhs.ncols());
        }
        self.lu.solve(rhs).expect("factorization checked nonsingular")
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.solve_matrix(&DMatrix::identity(self.dim, self.dim))
    }
}

/// Copy the sub-matrix selected by `rows` x `cols`.
pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn max_abs_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Numerical rank by Gaussian elimination with partial pivoting.
pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let mut a = m.clone();
    let (rows, cols) = a.shape();
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let (mut best, mut best_val) = (rank, 0.0);
        for r in rank..rows {
            if a[(r, col)].abs() > best_val {
                best_val = a[(r, col)].abs();
                best = r;
            }
        }
        if best_val <= tol {
            continue;
        }
        a.swap_rows(rank, best);
        for r in (rank + 1)..rows {
            let factor = a[(r, col)] / a[(rank, col)];
            if factor != 0.0 {
                for c in col..cols {
                    a[(r, c)] -= factor * a[(rank, c)];
                }
            }
        }
        rank += 1;
    }
    rank
}
