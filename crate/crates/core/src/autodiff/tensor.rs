use std::fmt::{Debug, Display};

use num_traits::Float;

use crate::error::{Error, Result};

/// Element type for tensors. 64-bit is the default everywhere; 32-bit is
/// available for storage/throughput-sensitive callers.
pub trait Scalar:
    Float + Debug + Display + Default + Send + Sync + std::iter::Sum + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

/// Dense n-dimensional array in row-major layout. The universal value type
/// for images, activations, parameters and gradients.
///
/// Tensors are immutable in all measurement paths; mutation is reserved for
/// construction and the optimizer's parameter updates.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorOf<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

/// The default 64-bit tensor.
pub type Tensor = TensorOf<f64>;

impl<S: Scalar> TensorOf<S> {
    /// Builds a tensor, validating that the extents are positive and their
    /// product matches the data length. A rank-0 tensor holds one scalar.
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::ShapeMismatch(format!(
                "zero extent in shape {shape:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} implies {numel} elements, got {}",
                data.len()
            )));
        }
        Ok(TensorOf { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        TensorOf {
            shape: shape.to_vec(),
            data: vec![S::zero(); numel],
        }
    }

    pub fn filled(shape: &[usize], value: S) -> Self {
        let numel: usize = shape.iter().product();
        TensorOf {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    /// Rank-0 tensor holding a single value.
    pub fn scalar(value: S) -> Self {
        TensorOf {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_vec(data: Vec<S>) -> Self {
        TensorOf {
            shape: vec![data.len()],
            data,
        }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<S> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::ShapeMismatch(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )))
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> S {
        self.data
            .iter()
            .map(|&v| v * v)
            .fold(S::zero(), |a, b| a + b)
            .sqrt()
    }

    /// Euclidean distance to another tensor of the same shape.
    pub fn distance(&self, other: &Self) -> Result<S> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "distance between {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let sum = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| {
                let d = a - b;
                d * d
            })
            .fold(S::zero(), |a, b| a + b);
        Ok(sum.sqrt())
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        TensorOf {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise sum; shapes must agree.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "add {:?} to {:?}",
                other.shape, self.shape
            )));
        }
        Ok(TensorOf {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "subtract {:?} from {:?}",
                other.shape, self.shape
            )));
        }
        Ok(TensorOf {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        })
    }

    pub fn scale(&self, factor: S) -> Self {
        self.map(|v| v * factor)
    }

    /// Index of the largest element (first occurrence on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }

    pub fn to_f64(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| v.to_f64()).collect(),
        }
    }
}

impl Tensor {
    pub fn to_f32(&self) -> TensorOf<f32> {
        TensorOf {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| v as f32).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_validates_shape_product() {
        assert!(TensorOf::<f64>::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(TensorOf::<f64>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(TensorOf::<f64>::new(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn scalar_tensor_is_rank_zero() {
        let t = Tensor::scalar(4.25);
        assert_eq!(t.shape(), &[] as &[usize]);
        assert_eq!(t.item().unwrap(), 4.25);
        assert!(t.is_scalar());
    }

    #[test]
    fn frobenius_norm_matches_hand_value() {
        let t = Tensor::new(vec![2], vec![3.0, 4.0]).unwrap();
        assert_eq!(t.frobenius_norm(), 5.0);
    }

    #[test]
    fn argmax_first_on_ties() {
        let t = Tensor::from_vec(vec![1.0, 5.0, 5.0, 2.0]);
        assert_eq!(t.argmax(), 1);
    }

    #[test]
    fn finiteness_check_catches_nan_and_inf() {
        let t = Tensor::from_vec(vec![1.0, f64::NAN]);
        assert!(!t.all_finite());
        let t = Tensor::from_vec(vec![1.0, f64::INFINITY]);
        assert!(!t.all_finite());
        let t = Tensor::from_vec(vec![1.0, -2.0]);
        assert!(t.all_finite());
    }

    #[test]
    fn f32_round_trip() {
        let t = Tensor::from_vec(vec![0.5, -1.25]);
        let t32 = t.to_f32();
        assert_eq!(t32.data(), &[0.5f32, -1.25f32]);
        assert_eq!(t32.to_f64().data(), t.data());
    }
}
