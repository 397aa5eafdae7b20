//! 8-bit grayscale PNG masks. Pixels above 127 are foreground.

use std::path::Path;

use convmcd::{BinaryMask, ImageGrid};
use image::{ColorType, GrayImage, ImageFormat, ImageReader};

pub const FOREGROUND_THRESHOLD: u8 = 127;

#[derive(Debug, thiserror::Error)]
pub enum PngError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("{path}: {source}")]
    Write {
        path: String,
        source: image::ImageError,
    },
}

fn read_err(path: &Path, message: impl ToString) -> PngError {
    PngError::Read {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

/// Reads an 8-bit grayscale PNG as a mask.
pub fn read_mask(path: &Path) -> Result<BinaryMask, PngError> {
    let img = ImageReader::open(path)
        .map_err(|e| read_err(path, e))?
        .with_guessed_format()
        .map_err(|e| read_err(path, e))?;
    if img.format() != Some(ImageFormat::Png) {
        return Err(read_err(path, "not a PNG file"));
    }
    let img = img.decode().map_err(|e| read_err(path, e))?;
    if img.color() != ColorType::L8 {
        return Err(read_err(
            path,
            format!("expected 8-bit grayscale, found {:?}", img.color()),
        ));
    }
    let gray = img.into_luma8();
    let (w, h) = gray.dimensions();
    let data = gray.into_raw().into_iter().map(|v| v > FOREGROUND_THRESHOLD).collect();
    BinaryMask::new(w as usize, h as usize, data).map_err(|e| read_err(path, e))
}

/// Writes a mask as 0/255 grayscale.
pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<(), PngError> {
    let data = mask.data().iter().map(|&b| if b { 255 } else { 0 }).collect();
    save(path, mask.width(), mask.height(), data)
}

/// Writes values in `[0, 1]` as grayscale, clamping outside values.
pub fn write_gray(path: &Path, grid: &ImageGrid) -> Result<(), PngError> {
    let data = grid
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    save(path, grid.width(), grid.height(), data)
}

fn save(path: &Path, w: usize, h: usize, data: Vec<u8>) -> Result<(), PngError> {
    let img = GrayImage::from_raw(w as u32, h as u32, data).expect("buffer matches dimensions");
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|source| PngError::Write {
            path: path.display().to_string(),
            source,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_round_trip_and_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let m = BinaryMask::from_fn(5, 3, |r, c| (r + c) % 2 == 0).unwrap();
        let p = dir.path().join("m.png");
        write_mask(&p, &m).unwrap();
        assert_eq!(read_mask(&p).unwrap(), m);

        let g = ImageGrid::new(3, 1, vec![127.0 / 255.0, 128.0 / 255.0, 1.0]).unwrap();
        let p = dir.path().join("g.png");
        write_gray(&p, &g).unwrap();
        assert_eq!(read_mask(&p).unwrap().data(), &[false, true, true]);
    }

    #[test]
    fn rejects_garbage_and_color() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        std::fs::write(&p, b"not an image").unwrap();
        assert!(read_mask(&p).unwrap_err().to_string().contains("bad.png"));
        let rgb = image::RgbImage::new(2, 2);
        let p = dir.path().join("rgb.png");
        rgb.save(&p).unwrap();
        assert!(read_mask(&p).unwrap_err().to_string().contains("grayscale"));
    }
}
