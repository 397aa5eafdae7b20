//! Seeded synthetic disks and squares for the toy training runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ImageGrid};

const FOREGROUND_LEVEL: f64 = 0.75;
const BACKGROUND_LEVEL: f64 = 0.25;
const NOISE: f64 = 0.05;

/// One synthetic sample: a noisy intensity image and its exact mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSample {
    pub image: ImageGrid,
    pub mask: BinaryMask,
}

/// `count` images of side `size`, alternating disks and axis-aligned squares
/// with random centres and sizes. Identical seeds give identical samples.
pub fn synthetic_shapes(seed: u64, count: usize, size: usize) -> Result<Vec<ShapeSample>> {
    if size < 16 {
        return Err(Error::InvalidArgument(format!(
            "synthetic images need side >= 16, got {size}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;
    (0..count)
        .map(|i| {
            let radius = rng.random_range(0.15 * s..0.3 * s);
            let margin = radius + 1.0;
            let cy = rng.random_range(margin..s - margin);
            let cx = rng.random_range(margin..s - margin);
            let disk = i % 2 == 0;
            let mask = BinaryMask::from_fn(size, size, |r, c| {
                let (dy, dx) = (r as f64 + 0.5 - cy, c as f64 + 0.5 - cx);
                if disk {
                    dy * dy + dx * dx <= radius * radius
                } else {
                    dy.abs() <= radius && dx.abs() <= radius
                }
            })?;
            let mut image = mask.to_grid().map(|v| {
                BACKGROUND_LEVEL + v * (FOREGROUND_LEVEL - BACKGROUND_LEVEL)
            });
            for v in image.data_mut() {
                *v += rng.random_range(-NOISE..NOISE);
            }
            Ok(ShapeSample { image, mask })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_nonempty() {
        let a = synthetic_shapes(11, 4, 32).unwrap();
        let b = synthetic_shapes(11, 4, 32).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synthetic_shapes(12, 4, 32).unwrap());
        for s in &a {
            let n = s.mask.count();
            assert!(n > 0 && n < 32 * 32);
            assert_eq!(s.image.dims(), (32, 32));
        }
    }

    #[test]
    fn rejects_tiny_images() {
        assert!(synthetic_shapes(0, 1, 8).is_err());
    }
}
