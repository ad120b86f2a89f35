//! Dense complex matrices and vectors.
//!
//! Row-major storage, sized for link-level work (tens of rows, a handful of
//! columns), so everything is written as straightforward loops rather than
//! pulling in a BLAS.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexVector = Vec<Complex64>;

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape(format!("matrix must be non-empty, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_columns(cols: &[ComplexVector]) -> Result<Self> {
        let n = cols.first().map(|c| c.len()).unwrap_or(0);
        if n == 0 || cols.iter().any(|c| c.len() != n) {
            return Err(Error::shape("from_columns: ragged or empty columns"));
        }
        let mut m = Self::zeros(n, cols.len());
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                m.data[i * cols.len() + j] = v;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn column(&self, c: usize) -> ComplexVector {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> ComplexMatrix {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.get(r, c).conj();
            }
        }
        out
    }

    pub fn scale(&self, s: Complex64) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::shape("add: dimension mismatch"));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn sub(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::shape("sub: dimension mismatch"));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn matvec(&self, x: &[Complex64]) -> Result<ComplexVector> {
        if x.len() != self.cols {
            return Err(Error::shape(format!(
                "matvec: matrix is {}x{}, vector has {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows];
        for r in 0..self.rows {
            let mut acc = Complex64::new(0.0, 0.0);
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            out[r] = acc;
        }
        Ok(out)
    }

    /// Solve `self * X = B` for square `self` via LU with partial pivoting.
    pub fn solve(&self, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.rows != self.cols {
            return Err(Error::shape("solve: coefficient matrix must be square"));
        }
        if b.rows != self.rows {
            return Err(Error::shape("solve: rhs row count mismatch"));
        }
        let n = self.rows;
        let mut a = self.data.clone();
        let mut x = b.data.clone();
        let bc = b.cols;
        for col in 0..n {
            // Pivot on the largest remaining magnitude in this column.
            let mut pivot = col;
            let mut best = a[col * n + col].norm_sqr();
            for r in (col + 1)..n {
                let m = a[r * n + col].norm_sqr();
                if m > best {
                    best = m;
                    pivot = r;
                }
            }
            if best == 0.0 {
                return Err(Error::LinAlg("singular matrix in solve".into()));
            }
            if pivot != col {
                for c in 0..n {
                    a.swap(col * n + c, pivot * n + c);
                }
                for c in 0..bc {
                    x.swap(col * bc + c, pivot * bc + c);
                }
            }
            let diag = a[col * n + col];
            for r in (col + 1)..n {
                let factor = a[r * n + col] / diag;
                if factor.norm_sqr() == 0.0 {
                    continue;
                }
                for c in col..n {
                    let v = a[col * n + c];
                    a[r * n + c] -= factor * v;
                }
                for c in 0..bc {
                    let v = x[col * bc + c];
                    x[r * bc + c] -= factor * v;
                }
            }
        }
        for col in (0..n).rev() {
            let diag = a[col * n + col];
            for c in 0..bc {
                x[col * bc + c] /= diag;
            }
            for r in 0..col {
                let factor = a[r * n + col];
                for c in 0..bc {
                    let v = x[col * bc + c];
                    x[r * bc + c] -= factor * v;
                }
            }
        }
        ComplexMatrix::new(n, bc, x)
    }
}

/// Complex matrix product.
pub fn cmatmul(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.cols != b.rows {
        return Err(Error::shape(format!(
            "cmatmul: {}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = ComplexMatrix::zeros(a.rows, b.cols);
    for r in 0..a.rows {
        for k in 0..a.cols {
            let av = a.get(r, k);
            if av.norm_sqr() == 0.0 {
                continue;
            }
            for c in 0..b.cols {
                let v = out.get(r, c) + av * b.get(k, c);
                out.set(r, c, v);
            }
        }
    }
    Ok(out)
}

pub fn dot_hermitian(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sq(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}
