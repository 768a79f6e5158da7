use ndarray::{Array2, ArrayView2, ArrayViewMut2};

use super::DiffError;

/// Dense row-major matrix of finite 64-bit reals.
///
/// The shape is fixed at construction; values can be updated in place
/// through [`Tensor::values_mut`] but never resized.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    data: Array2<f64>,
}

impl Tensor {
    /// Wraps an array, rejecting NaN or infinite entries.
    pub fn new(data: Array2<f64>) -> Result<Self, DiffError> {
        if !all_finite(&data.view()) {
            return Err(DiffError::NonFinite { op: "tensor" });
        }
        Ok(Self { data })
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, DiffError> {
        let got = values.len();
        let data = Array2::from_shape_vec((rows, cols), values).map_err(|_| DiffError::Shape {
            op: "tensor",
            lhs: (rows, cols),
            rhs: (got, 1),
        })?;
        Self::new(data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            data: Array2::zeros((rows, cols)),
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(value.is_finite());
        Self {
            data: Array2::from_elem((rows, cols), value),
        }
    }

    pub fn scalar(value: f64) -> Result<Self, DiffError> {
        Self::from_vec(1, 1, vec![value])
    }

    /// A 1 × n row vector.
    pub fn row(values: &[f64]) -> Result<Self, DiffError> {
        Self::from_vec(1, values.len(), values.to_vec())
    }

    /// Widens 32-bit storage values into a training tensor.
    pub fn from_f32(rows: usize, cols: usize, values: &[f32]) -> Result<Self, DiffError> {
        Self::from_vec(rows, cols, values.iter().map(|&v| f64::from(v)).collect())
    }

    /// Narrows to 32-bit storage, row-major.
    pub fn to_f32_vec(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[[row, col]]
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    /// Mutable view; the shape cannot change through it.
    pub fn values_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        self.data.view_mut()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    /// Row-major copy of all entries.
    pub fn to_vec(&self) -> Vec<f64> {
        self.data.iter().copied().collect()
    }

    /// Single value of a 1 × 1 tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.shape(), (1, 1));
        self.data[[0, 0]]
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn is_all_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }
}

impl TryFrom<Array2<f64>> for Tensor {
    type Error = DiffError;

    fn try_from(data: Array2<f64>) -> Result<Self, Self::Error> {
        Self::new(data)
    }
}

pub(crate) fn all_finite(a: &ArrayView2<'_, f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(Tensor::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::from_vec(1, 1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn rejects_bad_length() {
        assert!(matches!(
            Tensor::from_vec(2, 2, vec![1.0; 3]),
            Err(DiffError::Shape { .. })
        ));
    }

    #[test]
    fn f32_storage_round_trip() {
        let t = Tensor::from_vec(2, 2, vec![0.25, 0.5, 1.0, 0.125]).unwrap();
        let back = Tensor::from_f32(2, 2, &t.to_f32_vec()).unwrap();
        assert_eq!(t, back);
    }
}
