use super::{DenseMatrix, DenseVector};
use crate::error::{Error, Result};

/// LU factorisation with partial pivoting, `P A = L U`.
///
/// `L` (unit lower) and `U` share one buffer.
#[derive(Debug, Clone)]
pub struct LuFactorization {
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl LuFactorization {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        let n = a.require_square()?;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        // Pivots below this are treated as exact zeros.
        let tol = n as f64 * f64::EPSILON * a.max_abs();

        for k in 0..n {
            let (p, pivot) =
                (k..n).map(|i| (i, lu[(i, k)])).fold(
                    (k, 0.0_f64),
                    |best, (i, v)| {
                        if v.abs() > best.1.abs() {
                            (i, v)
                        } else {
                            best
                        }
                    },
                );
            if pivot.abs() <= tol || pivot == 0.0 {
                return Err(Error::Singular { column: k, pivot });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
            }
            for i in k + 1..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                if factor != 0.0 {
                    for j in k + 1..n {
                        let ukj = lu[(k, j)];
                        lu[(i, j)] -= factor * ukj;
                    }
                }
            }
        }
        Ok(LuFactorization { lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &[f64]) -> Result<DenseVector> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::Dimension {
                context: "LU solve",
                expected: n,
                found: b.len(),
            });
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s: f64 = row[..i].iter().zip(&x[..i]).map(|(l, y)| l * y).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s: f64 = row[i + 1..].iter().zip(&x[i + 1..]).map(|(u, y)| u * y).sum();
            x[i] = (x[i] - s) / row[i];
        }
        Ok(DenseVector::from_vec(x))
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if b.rows() != self.dim() {
            return Err(Error::Dimension {
                context: "LU solve (matrix right-hand side)",
                expected: self.dim(),
                found: b.rows(),
            });
        }
        let mut out = DenseMatrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let x = self.solve(&b.column(j))?;
            for (i, v) in x.iter().enumerate() {
                out[(i, j)] = *v;
            }
        }
        Ok(out)
    }
}

/// Solves `A x = b` by LU with partial pivoting.
pub fn lu_solve(a: &DenseMatrix, b: &DenseVector) -> Result<DenseVector> {
    b.check_len("LU solve", a.rows())?;
    LuFactorization::new(a)?.solve(b)
}
