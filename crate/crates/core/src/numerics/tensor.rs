use std::fmt;

use super::NumericsError;

/// Channel-major blob dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape { channels, height, width }
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat offset of `(c, y, x)`.
    #[inline]
    pub const fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// A blob: real values laid out channel-major, then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self, NumericsError> {
        if data.len() != shape.len() {
            return Err(NumericsError::ShapeMismatch {
                shape,
                len: data.len(),
                expected: shape.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite { index });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor { shape, data: vec![0.0; shape.len()] }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Tensor { shape, data: vec![value; shape.len()] }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.shape.index(c, y, x)]
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length() {
        let err = Tensor::new(Shape::new(1, 2, 2), vec![0.0; 3]).unwrap_err();
        assert!(matches!(err, NumericsError::ShapeMismatch { expected: 4, len: 3, .. }));
    }

    #[test]
    fn rejects_non_finite() {
        let err = Tensor::new(Shape::new(1, 1, 2), vec![0.0, f64::NAN]).unwrap_err();
        assert_eq!(err, NumericsError::NonFinite { index: 1 });
    }

    #[test]
    fn indexing_is_channel_then_row_major() {
        let shape = Shape::new(2, 2, 3);
        let t = Tensor::new(shape, (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(t.get(0, 0, 2), 2.0);
        assert_eq!(t.get(0, 1, 0), 3.0);
        assert_eq!(t.get(1, 0, 0), 6.0);
        assert_eq!(t.get(1, 1, 2), 11.0);
    }
}
