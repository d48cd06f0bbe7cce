use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{context}: expected shape {expected:?}, got {found:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{0} backward pass called without a matching forward cache")]
    MissingForwardCache(&'static str),
}

/// Dense row-major `f64` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::ShapeMismatch {
                context: "tensor data",
                expected: shape.to_vec(),
                found: vec![data.len()],
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, TensorError> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(TensorError::ShapeMismatch {
                context: "reshape",
                expected: shape.to_vec(),
                found: self.shape,
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn expect_rank(&self, rank: usize, context: &'static str) -> Result<(), TensorError> {
        if self.shape.len() == rank {
            Ok(())
        } else {
            Err(TensorError::ShapeMismatch {
                context,
                expected: vec![0; rank],
                found: self.shape.clone(),
            })
        }
    }

    pub fn expect_shape(&self, shape: &[usize], context: &'static str) -> Result<(), TensorError> {
        if self.shape == shape {
            Ok(())
        } else {
            Err(TensorError::ShapeMismatch {
                context,
                expected: shape.to_vec(),
                found: self.shape.clone(),
            })
        }
    }

    /// Fails on any NaN or infinity.
    pub fn ensure_finite(&self, context: &'static str) -> Result<(), TensorError> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(TensorError::NonFinite(context))
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    /// `self += other`, element-wise.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<(), TensorError> {
        other.expect_shape(&self.shape, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }
}
