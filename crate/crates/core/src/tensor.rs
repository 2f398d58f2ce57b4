//! Dense row-major `f32` tensors.

use std::fmt;

use thiserror::Error;

/// Errors raised by tensor construction and the kernels in [`crate::kernels`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("expected rank {expected}, got shape {shape:?}")]
    Rank { expected: usize, shape: Vec<usize> },
    #[error("invalid shape {0:?}: rank must be 1..=4 and every extent >= 1")]
    InvalidShape(Vec<usize>),
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { len: usize, shape: Vec<usize> },
}

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f32>) -> Result<Self, TensorError> {
        check_shape(shape)?;
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(TensorError::DataLength {
                len: data.len(),
                shape: shape.to_vec(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self, TensorError> {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Result<Self, TensorError> {
        check_shape(shape)?;
        let numel = shape.iter().product();
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; numel],
        })
    }

    /// Rank-1 tensor over `data`. Panics on an empty vector.
    pub fn from_vec(data: Vec<f32>) -> Self {
        assert!(!data.is_empty(), "tensor extents must be >= 1");
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Same data under a new shape with equal element count.
    pub fn reshape(self, shape: &[usize]) -> Result<Self, TensorError> {
        Self::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0` and comparing NaN payloads.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub(crate) fn expect_rank(&self, rank: usize) -> Result<(), TensorError> {
        if self.rank() != rank {
            return Err(TensorError::Rank {
                expected: rank,
                shape: self.shape.clone(),
            });
        }
        Ok(())
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const PREVIEW: usize = 8;
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &&self.data[..self.data.len().min(PREVIEW)])
            .finish()
    }
}

fn check_shape(shape: &[usize]) -> Result<(), TensorError> {
    if shape.is_empty() || shape.len() > 4 || shape.contains(&0) {
        return Err(TensorError::InvalidShape(shape.to_vec()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(
            Tensor::zeros(&[]),
            Err(TensorError::InvalidShape(_))
        ));
        assert!(Tensor::zeros(&[1, 0]).is_err());
        assert!(Tensor::zeros(&[1, 1, 1, 1, 1]).is_err());
        assert!(matches!(
            Tensor::new(&[2, 2], vec![0.0; 3]),
            Err(TensorError::DataLength { len: 3, .. })
        ));
    }

    #[test]
    fn bit_eq_sees_signed_zero() {
        let a = Tensor::from_vec(vec![0.0]);
        let b = Tensor::from_vec(vec![-0.0]);
        assert_eq!(a, b);
        assert!(!a.bit_eq(&b));
    }
}
