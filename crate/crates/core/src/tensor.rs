use crate::error::{Error, Result};
use crate::raster::ImageGrid;

/// Dense n-dimensional array of `f64`, row-major over `shape`.
///
/// Image-like tensors use `[channels, height, width]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: impl Into<Vec<usize>>, value: f64) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    /// A single-channel `[1, H, W]` tensor holding the grid values.
    pub fn from_grid(grid: &ImageGrid) -> Self {
        Self {
            shape: vec![1, grid.height(), grid.width()],
            data: grid.data().to_vec(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    /// `(channels, height, width)` of a rank-3 tensor.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::ShapeMismatch(format!(
                "expected [C, H, W], got {:?}",
                self.shape
            ))),
        }
    }

    /// One channel of a `[C, H, W]` tensor as a grid.
    pub fn channel(&self, index: usize) -> Result<ImageGrid> {
        let (c, h, w) = self.chw()?;
        if index >= c {
            return Err(Error::ShapeMismatch(format!(
                "channel {index} out of range for {c} channels"
            )));
        }
        ImageGrid::new(w, h, self.data[index * h * w..(index + 1) * h * w].to_vec())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
