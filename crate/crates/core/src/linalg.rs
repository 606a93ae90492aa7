//! Small dense kernels for the (J+1)×(J+1) moment matrix.
//!
//! Matrices are row-major `&[f64]` slices. Sizes never exceed a few dozen, so
//! everything here is plain loops without blocking.

use crate::error::{Error, Result};

/// Relative pivot threshold: a pivot smaller than this times `max |a_ij|`
/// marks the matrix as singular.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-12;

/// LU factorization with partial (row) pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    // unit-lower L below the diagonal, U on and above it
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &[f64], n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n, "matrix must be n×n");
        let scale = a.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
        let threshold = SINGULAR_PIVOT_RATIO * scale;
        let mut lu = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();

        for col in 0..n {
            let (pivot_row, pivot_abs) = (col..n)
                .map(|r| (r, lu[r * n + col].abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pivot_abs > threshold) {
                return Err(Error::SingularMomentMatrix {
                    column: col,
                    pivot: pivot_abs.max(0.0),
                });
            }
            if pivot_row != col {
                for c in 0..n {
                    lu.swap(col * n + c, pivot_row * n + c);
                }
                perm.swap(col, pivot_row);
            }
            let pivot = lu[col * n + col];
            for r in col + 1..n {
                let factor = lu[r * n + col] / pivot;
                lu[r * n + col] = factor;
                if factor != 0.0 {
                    for c in col + 1..n {
                        lu[r * n + c] -= factor * lu[col * n + c];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut acc = x[r];
            for c in 0..r {
                acc -= self.lu[r * n + c] * x[c];
            }
            x[r] = acc;
        }
        for r in (0..n).rev() {
            let mut acc = x[r];
            for c in r + 1..n {
                acc -= self.lu[r * n + c] * x[c];
            }
            x[r] = acc / self.lu[r * n + r];
        }
        x
    }

    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut unit = vec![0.0; n];
        for c in 0..n {
            unit.iter_mut().for_each(|u| *u = 0.0);
            unit[c] = 1.0;
            let col = self.solve(&unit);
            for r in 0..n {
                inv[r * n + c] = col[r];
            }
        }
        inv
    }

    pub fn determinant(&self) -> f64 {
        let n = self.n;
        let mut det: f64 = (0..n).map(|i| self.lu[i * n + i]).product();
        // parity of the permutation
        let mut seen = vec![false; n];
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut i = start;
            while !seen[i] {
                seen[i] = true;
                i = self.perm[i];
                len += 1;
            }
            if len % 2 == 0 {
                det = -det;
            }
        }
        det
    }
}

pub fn invert(a: &[f64], n: usize) -> Result<Vec<f64>> {
    Ok(Lu::factor(a, n)?.inverse())
}

/// Row-major product of an `r×k` and a `k×c` matrix.
pub fn matmul(a: &[f64], b: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for l in 0..k {
            let a_il = a[i * k + l];
            for j in 0..c {
                out[i * c + j] += a_il * b[l * c + j];
            }
        }
    }
    out
}

/// Numerical rank of a `rows×cols` matrix by Gaussian elimination with
/// full pivoting.
pub fn rank(a: &[f64], rows: usize, cols: usize) -> usize {
    let mut m = a.to_vec();
    let scale = m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    if scale == 0.0 {
        return 0;
    }
    let threshold = SINGULAR_PIVOT_RATIO * scale;
    let mut rank = 0;
    let mut col_done = vec![false; cols];
    for r in 0..rows {
        let mut best = (0, 0, 0.0_f64);
        for i in r..rows {
            for (j, done) in col_done.iter().enumerate() {
                if !done && m[i * cols + j].abs() > best.2 {
                    best = (i, j, m[i * cols + j].abs());
                }
            }
        }
        if best.2 <= threshold {
            break;
        }
        let (pi, pj, _) = best;
        for j in 0..cols {
            m.swap(r * cols + j, pi * cols + j);
        }
        col_done[pj] = true;
        let pivot = m[r * cols + pj];
        for i in r + 1..rows {
            let factor = m[i * cols + pj] / pivot;
            for j in 0..cols {
                m[i * cols + j] -= factor * m[r * cols + j];
            }
        }
        rank += 1;
    }
    rank
}
