//! Dense rank-3 tensors over f32 or f64.

use std::fmt;

use super::NnError;

/// Scalar element type for tensors and parameters.
pub trait Element:
    num_traits::Float + fmt::Debug + fmt::Display + Default + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn into_f64(self) -> f64;
}

impl Element for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn into_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Element for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn into_f64(self) -> f64 {
        self
    }
}

/// Tensor extent: batch x channels x length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub batch: usize,
    pub channels: usize,
    pub len: usize,
}

impl Shape {
    pub fn new(batch: usize, channels: usize, len: usize) -> Self {
        Self {
            batch,
            channels,
            len,
        }
    }

    pub fn numel(&self) -> usize {
        self.batch * self.channels * self.len
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.batch, self.channels, self.len)
    }
}

/// Dense `batch x channels x length` array with an optional gradient slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Shape,
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Element> Tensor<T> {
    pub fn zeros(shape: Shape) -> Self {
        Self {
            data: vec![T::zero(); shape.numel()],
            shape,
            grad: None,
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self, NnError> {
        if data.len() != shape.numel() {
            return Err(NnError::ShapeMismatch(format!(
                "data length {} does not fill shape {shape}",
                data.len()
            )));
        }
        Ok(Self {
            shape,
            data,
            grad: None,
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Contiguous samples of one channel of one batch item.
    pub fn channel(&self, n: usize, c: usize) -> &[T] {
        let l = self.shape.len;
        let start = (n * self.shape.channels + c) * l;
        &self.data[start..start + l]
    }

    pub fn at(&self, n: usize, c: usize, t: usize) -> T {
        self.data[(n * self.shape.channels + c) * self.shape.len + t]
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    /// Gradient slot, allocated to zeros on first use.
    pub fn grad_mut(&mut self) -> &mut [T] {
        let n = self.shape.numel();
        self.grad.get_or_insert_with(|| vec![T::zero(); n])
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Converts elementwise to another scalar type.
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|&v| U::from_f64(v.into_f64()))
                .collect(),
            grad: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::<f32>::from_vec(Shape::new(1, 2, 3), vec![0.0; 6]).is_ok());
        assert!(Tensor::<f32>::from_vec(Shape::new(1, 2, 3), vec![0.0; 5]).is_err());
    }

    #[test]
    fn channel_slices_are_contiguous() {
        let t = Tensor::from_vec(
            Shape::new(2, 2, 2),
            vec![0.0f32, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0],
        )
        .unwrap();
        assert_eq!(t.channel(0, 1), &[2.0, 3.0]);
        assert_eq!(t.channel(1, 0), &[4.0, 5.0]);
        assert_eq!(t.at(1, 1, 0), 6.0);
    }

    #[test]
    fn grad_slot_is_lazy() {
        let mut t = Tensor::<f64>::zeros(Shape::new(1, 1, 4));
        assert!(t.grad().is_none());
        t.grad_mut()[2] = 5.0;
        assert_eq!(t.grad().unwrap(), &[0.0, 0.0, 5.0, 0.0]);
        t.clear_grad();
        assert!(t.grad().is_none());
    }
}
