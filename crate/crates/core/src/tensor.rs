use crate::error::{Error, Result};

/// Dense row-major `f64` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} need {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Tensor {
            dims,
            data: vec![0.0; n],
        }
    }

    pub fn filled(dims: Vec<usize>, value: f64) -> Self {
        let n = dims.iter().product();
        Tensor {
            dims,
            data: vec![value; n],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Flat offset of a multi-index. Panics on rank mismatch.
    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.dims.len(), "rank mismatch");
        index.iter().zip(&self.dims).fold(0, |acc, (&i, &d)| {
            debug_assert!(i < d);
            acc * d + i
        })
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    /// Checks rank and returns the dims as a fixed array.
    pub fn dims4(&self) -> Result<[usize; 4]> {
        match self.dims.as_slice() {
            &[a, b, c, d] => Ok([a, b, c, d]),
            other => Err(Error::Shape(format!("expected a rank-4 tensor, got {other:?}"))),
        }
    }

    pub fn dims2(&self) -> Result<[usize; 2]> {
        match self.dims.as_slice() {
            &[a, b] => Ok([a, b]),
            other => Err(Error::Shape(format!("expected a rank-2 tensor, got {other:?}"))),
        }
    }

    /// Copies the sub-tensors at the given leading indices into a new tensor.
    pub fn select_leading(&self, indices: &[usize]) -> Result<Tensor> {
        let lead = *self.dims.first().ok_or_else(|| Error::Shape("scalar tensor".into()))?;
        let stride: usize = self.dims[1..].iter().product();
        let mut data = Vec::with_capacity(indices.len() * stride);
        for &i in indices {
            if i >= lead {
                return Err(Error::Shape(format!("index {i} out of range for leading dim {lead}")));
            }
            data.extend_from_slice(&self.data[i * stride..(i + 1) * stride]);
        }
        let mut dims = self.dims.clone();
        dims[0] = indices.len();
        Tensor::new(dims, data)
    }
}
