//! Minimal dense linear algebra for the exposure fit: a row-major matrix
//! and a Householder QR factorization. Sizes here are small (hundreds of
//! rows), so clarity wins over blocking tricks.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    pub rows: usize,
    pub cols: usize,
    data: Vec<F>,
}

impl<F: Real> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c));
        Matrix {
            rows: r,
            cols: c,
            data: rows.iter().flatten().cloned().collect(),
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: F) {
        self.data[r * self.cols + c] = v;
    }

    /// `self^T * x` for a vector `x` of length `rows`.
    pub fn t_mul_vec(&self, x: &[F]) -> Vec<F> {
        assert_eq!(x.len(), self.rows);
        let mut out = vec![F::zero(); self.cols];
        for r in 0..self.rows {
            let xr = x[r];
            for c in 0..self.cols {
                out[c] = out[c] + self.get(r, c) * xr;
            }
        }
        out
    }

    /// `self * x` for a vector `x` of length `cols`.
    pub fn mul_vec(&self, x: &[F]) -> Vec<F> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                (0..self.cols)
                    .map(|c| self.get(r, c) * x[c])
                    .sum::<F>()
            })
            .collect()
    }
}

/// Householder QR of a tall matrix A (rows >= cols): A = Q R.
pub struct Qr<F> {
    /// Reflector vectors, one per column, each of length `rows - k`.
    reflectors: Vec<Vec<F>>,
    /// Upper-triangular factor, cols x cols.
    r: Matrix<F>,
    rows: usize,
    cols: usize,
}

impl<F: Real> Qr<F> {
    pub fn factor(mut a: Matrix<F>) -> Result<Self> {
        let (rows, cols) = (a.rows, a.cols);
        if rows < cols {
            return Err(Error::Underdetermined { p: rows, n: cols });
        }
        let mut reflectors = Vec::with_capacity(cols);
        for k in 0..cols {
            let norm_sq: F = (k..rows)
                .map(|r| {
                    let v = a.get(r, k);
                    v * v
                })
                .sum();
            let norm = norm_sq.sqrt();
            let akk = a.get(k, k);
            let alpha = if akk >= F::zero() { -norm } else { norm };
            let mut v: Vec<F> = (k..rows).map(|r| a.get(r, k)).collect();
            v[0] = v[0] - alpha;
            let vnorm_sq: F = v.iter().map(|&x| x * x).sum();
            if vnorm_sq > F::zero() {
                // Apply H = I - 2 v v^T / (v^T v) to the trailing block.
                for c in k..cols {
                    let dot: F = (k..rows).map(|r| v[r - k] * a.get(r, c)).sum();
                    let scale = (dot + dot) / vnorm_sq;
                    for r in k..rows {
                        let cur = a.get(r, c);
                        a.set(r, c, cur - scale * v[r - k]);
                    }
                }
            }
            reflectors.push(v);
        }
        let mut r = Matrix::zeros(cols, cols);
        for i in 0..cols {
            for j in i..cols {
                r.set(i, j, a.get(i, j));
            }
        }
        Ok(Qr {
            reflectors,
            r,
            rows,
            cols,
        })
    }

    /// Ratio of the largest to the smallest |R_ii| — a cheap estimate of the
    /// condition number of A.
    pub fn diag_condition(&self) -> F {
        let mut lo = F::infinity();
        let mut hi = F::zero();
        for i in 0..self.cols {
            let d = self.r.get(i, i).abs();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if lo == F::zero() {
            F::infinity()
        } else {
            hi / lo
        }
    }

    /// Apply Q^T to a vector of length `rows`.
    pub fn qt_mul(&self, b: &[F]) -> Vec<F> {
        assert_eq!(b.len(), self.rows);
        let mut y = b.to_vec();
        for (k, v) in self.reflectors.iter().enumerate() {
            let vnorm_sq: F = v.iter().map(|&x| x * x).sum();
            if vnorm_sq == F::zero() {
                continue;
            }
            let dot: F = (k..self.rows).map(|r| v[r - k] * y[r]).sum();
            let scale = (dot + dot) / vnorm_sq;
            for r in k..self.rows {
                y[r] = y[r] - scale * v[r - k];
            }
        }
        y
    }

    /// Least-squares solution of A x = b.
    pub fn solve(&self, b: &[F]) -> Vec<F> {
        let y = self.qt_mul(b);
        let mut x = vec![F::zero(); self.cols];
        for i in (0..self.cols).rev() {
            let mut s = y[i];
            for j in i + 1..self.cols {
                s = s - self.r.get(i, j) * x[j];
            }
            x[i] = s / self.r.get(i, i);
        }
        x
    }

    /// Diagonal of (A^T A)^{-1} = R^{-1} R^{-T}, computed from the factor.
    pub fn normal_inverse_diag(&self) -> Vec<F> {
        let n = self.cols;
        // Invert the upper-triangular R column by column.
        let mut inv = Matrix::zeros(n, n);
        for j in 0..n {
            let mut col = vec![F::zero(); n];
            col[j] = F::one();
            for i in (0..=j).rev() {
                let mut s = col[i];
                for k in i + 1..=j {
                    s = s - self.r.get(i, k) * inv.get(k, j);
                }
                inv.set(i, j, s / self.r.get(i, i));
            }
        }
        (0..n)
            .map(|i| (i..n).map(|j| inv.get(i, j) * inv.get(i, j)).sum())
            .collect()
    }
}
