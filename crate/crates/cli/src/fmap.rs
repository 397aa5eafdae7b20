//! The FMAP float-map container.
//!
//! Layout, all little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4 | magic `FMAP` |
//! | 1 | version, always 1 |
//! | 1 | channel count `C` |
//! | 4 | width `W` (u32) |
//! | 4 | height `H` (u32) |
//! | 4·C·W·H | f32 payload, channel-major, each channel row-major |

use std::io::{Read, Write};
use std::path::Path;

use convmcd::ImageGrid;

pub const MAGIC: &[u8; 4] = b"FMAP";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 14;

#[derive(Debug, thiserror::Error)]
pub enum FmapError {
    #[error("bad magic {0:?}, expected \"FMAP\"")]
    BadMagic([u8; 4]),
    #[error("unsupported FMAP version {0}, expected 1")]
    BadVersion(u8),
    #[error("truncated file: header needs {HEADER_LEN} bytes, got {0}")]
    TruncatedHeader(usize),
    #[error("payload is {actual} bytes, header implies {expected}")]
    PayloadLength { expected: usize, actual: usize },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An in-memory FMAP: `channels` planes of `height × width` f32 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Fmap {
    channels: u8,
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl Fmap {
    pub fn new(channels: u8, width: u32, height: u32, data: Vec<f32>) -> Result<Self, FmapError> {
        let expected = usize::from(channels) * width as usize * height as usize;
        if data.len() != expected {
            return Err(FmapError::Invalid(format!(
                "{channels}x{width}x{height} map needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            width,
            height,
            data,
        })
    }

    /// One channel per grid. Values are rounded to f32.
    pub fn from_grids(grids: &[&ImageGrid]) -> Result<Self, FmapError> {
        let Some(first) = grids.first() else {
            return Err(FmapError::Invalid("at least one channel is required".into()));
        };
        let channels = u8::try_from(grids.len())
            .map_err(|_| FmapError::Invalid(format!("{} channels exceed 255", grids.len())))?;
        let (w, h) = first.dims();
        if grids.iter().any(|g| g.dims() != (w, h)) {
            return Err(FmapError::Invalid("channels differ in size".into()));
        }
        let dim = |v: usize| {
            u32::try_from(v).map_err(|_| FmapError::Invalid(format!("dimension {v} exceeds u32")))
        };
        let data = grids
            .iter()
            .flat_map(|g| g.data().iter().map(|&v| v as f32))
            .collect();
        Self::new(channels, dim(w)?, dim(h)?, data)
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Channel `c` widened back to f64.
    pub fn channel(&self, c: usize) -> Result<ImageGrid, FmapError> {
        if c >= usize::from(self.channels) {
            return Err(FmapError::Invalid(format!(
                "channel {c} out of range for {} channels",
                self.channels
            )));
        }
        let plane = self.width as usize * self.height as usize;
        let values = self.data[c * plane..(c + 1) * plane]
            .iter()
            .map(|&v| f64::from(v))
            .collect();
        ImageGrid::new(self.width as usize, self.height as usize, values)
            .map_err(|e| FmapError::Invalid(e.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.channels);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FmapError> {
        if bytes.len() < HEADER_LEN {
            if bytes.len() >= 4 && &bytes[..4] != MAGIC {
                return Err(FmapError::BadMagic(bytes[..4].try_into().unwrap()));
            }
            return Err(FmapError::TruncatedHeader(bytes.len()));
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if &magic != MAGIC {
            return Err(FmapError::BadMagic(magic));
        }
        if bytes[4] != VERSION {
            return Err(FmapError::BadVersion(bytes[4]));
        }
        let channels = bytes[5];
        let width = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
        let height = u32::from_le_bytes(bytes[10..14].try_into().unwrap());
        let payload = &bytes[HEADER_LEN..];
        let expected = 4 * usize::from(channels) * width as usize * height as usize;
        if payload.len() != expected {
            return Err(FmapError::PayloadLength {
                expected,
                actual: payload.len(),
            });
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Self::new(channels, width, height, data)
    }

    pub fn read(mut reader: impl Read) -> Result<Self, FmapError> {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, mut writer: impl Write) -> Result<(), FmapError> {
        writer.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self, FmapError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<(), FmapError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }
}
