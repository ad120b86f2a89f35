//! Stacked-real representation of complex vectors.
//!
//! A complex vector of dimension `d` becomes a real vector of dimension `2d`
//! with all real parts first, then all imaginary parts. This is the carrier
//! for encoder inputs and Gaussian posteriors.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

/// Real vector of even dimension holding `[re_0..re_d, im_0..im_d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedRealVector {
    values: Vec<f64>,
}

impl StackedRealVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() % 2 != 0 {
            return Err(Error::domain(format!(
                "stacked vector needs a positive even dimension, got {}",
                values.len()
            )));
        }
        Ok(StackedRealVector { values })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    pub fn from_complex(v: &[Complex64]) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::domain("stacked vector from empty complex vector"));
        }
        let mut values = Vec::with_capacity(2 * v.len());
        values.extend(v.iter().map(|c| c.re));
        values.extend(v.iter().map(|c| c.im));
        Ok(StackedRealVector { values })
    }

    /// Row-major flattening of a matrix, then stacked.
    pub fn from_matrix(m: &ComplexMatrix) -> Result<Self> {
        Self::from_complex(m.data())
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        let d = self.complex_dim();
        (0..d)
            .map(|i| Complex64::new(self.values[i], self.values[d + i]))
            .collect()
    }

    pub fn to_matrix(&self, rows: usize, cols: usize) -> Result<ComplexMatrix> {
        ComplexMatrix::new(rows, cols, self.to_complex())
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn complex_dim(&self) -> usize {
        self.values.len() / 2
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_reals_then_imags() {
        let v = vec![Complex64::new(1.0, 2.0), Complex64::new(3.0, 4.0)];
        let s = StackedRealVector::from_complex(&v).unwrap();
        assert_eq!(s.values(), &[1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn roundtrip_is_exact() {
        let v = vec![
            Complex64::new(0.123456789, -9.87),
            Complex64::new(1e-300, 1e300),
            Complex64::new(-0.0, 3.5),
        ];
        let s = StackedRealVector::from_complex(&v).unwrap();
        let back = s.to_complex();
        for (a, b) in v.iter().zip(&back) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn odd_dimension_rejected() {
        assert!(StackedRealVector::new(vec![1.0, 2.0, 3.0]).is_err());
        assert!(StackedRealVector::new(vec![]).is_err());
    }
}
