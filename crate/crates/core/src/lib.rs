//! Multi-task segmentation supervision and evaluation.
//!
//! * [`raster`]: masks, connected components, boundaries, disk dilation and
//!   exact euclidean / signed distance transforms.
//! * [`targets`]: contour and distance-map targets derived from a mask.
//! * [`loss`]: head configuration and the weighted NLL + MSE loss.
//! * [`autograd`], [`model`], [`train`]: a small reverse-mode engine, the
//!   three-headed convolution module on a toy encoder-decoder, and training.
//! * [`gradcheck`]: finite-difference verification of every op.
//! * [`metrics`]: Dice, Jaccard, Hausdorff, trimap error curves and the
//!   maximum boundary F-score.

pub mod autograd;
mod error;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod raster;
pub mod synth;
pub mod targets;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use raster::{BinaryMask, ImageGrid, PixelSet};
pub use tensor::Tensor;
