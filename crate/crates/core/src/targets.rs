//! Auxiliary supervision derived from a ground-truth mask: a dilated contour
//! map and one of three distance maps, normalized for a sigmoid output.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::raster::{
    self, dilate_disk, euclidean_distance_transform, label_components,
    signed_distance_transform, BinaryMask, Connectivity, ImageGrid,
};

/// Contour radius that works well at 256×256.
pub const REFERENCE_RADIUS: u32 = 5;
/// Image side length the reference radius was tuned for.
pub const REFERENCE_SIZE: u32 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistanceMapKind {
    /// Distance transform of the mask.
    D1,
    /// Distance transform of the contour.
    D2,
    /// Signed distance transform of the contour.
    D3,
}

impl fmt::Display for DistanceMapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::D1 => "d1",
            Self::D2 => "d2",
            Self::D3 => "d3",
        })
    }
}

impl FromStr for DistanceMapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "d1" => Ok(Self::D1),
            "d2" => Ok(Self::D2),
            "d3" => Ok(Self::D3),
            _ => Err(Error::InvalidArgument(format!(
                "unknown distance map kind {s:?} (expected d1, d2 or d3)"
            ))),
        }
    }
}

/// Which way D1 measures distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum D1Direction {
    /// Distance to the nearest object pixel: zero inside, growing outside.
    #[default]
    ToForeground,
    /// Distance to the nearest background pixel: zero outside, growing
    /// towards the object's interior.
    ToBackground,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContourRadius {
    /// Scale the reference radius with the image size.
    #[default]
    Auto,
    Fixed(u32),
}

impl ContourRadius {
    pub fn resolve(self, width: usize, height: usize) -> u32 {
        match self {
            Self::Auto => auto_radius(width, height),
            Self::Fixed(r) => r,
        }
    }
}

impl fmt::Display for ContourRadius {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Auto => f.write_str("AUTO"),
            Self::Fixed(r) => write!(f, "{r}"),
        }
    }
}

impl FromStr for ContourRadius {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Self::Auto);
        }
        match s.parse::<u32>() {
            Ok(r) if r >= 1 => Ok(Self::Fixed(r)),
            _ => Err(Error::InvalidArgument(format!(
                "contour radius must be AUTO or an integer >= 1, got {s:?}"
            ))),
        }
    }
}

/// `max(1, round(5 * min(W, H) / 256))`.
pub fn auto_radius(width: usize, height: usize) -> u32 {
    let side = width.min(height) as f64;
    let r = (REFERENCE_RADIUS as f64 * side / REFERENCE_SIZE as f64).round();
    (r as u32).max(1)
}

/// A distance target with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    pub grid: ImageGrid,
    pub kind: DistanceMapKind,
    pub normalized: bool,
    /// The set the distances were measured to was empty; the unnormalized
    /// grid holds the `f64::MAX` sentinel.
    pub source_empty: bool,
}

/// Mask, contour and distance targets sharing one set of dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetBundle {
    pub mask: BinaryMask,
    pub contour: BinaryMask,
    pub distance: DistanceMap,
}

/// Boundaries of every 8-connected component, dilated by a closed disk.
///
/// An explicit radius of 0 is rejected; use [`ContourRadius::Auto`] or a
/// positive value.
pub fn make_contour(mask: &BinaryMask, radius: ContourRadius) -> Result<BinaryMask> {
    if radius == ContourRadius::Fixed(0) {
        return Err(Error::InvalidArgument("contour radius must be >= 1".into()));
    }
    let r = radius.resolve(mask.width(), mask.height());
    Ok(dilate_disk(&component_boundaries(mask), r))
}

/// Union of the inner boundaries of each component, each taken on its own.
pub fn component_boundaries(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = mask.dims();
    let labels = label_components(mask, Connectivity::Eight);
    BinaryMask::from_fn(w, h, |r, c| {
        let Some(l) = labels[r * w + c] else {
            return false;
        };
        [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)]
            .iter()
            .any(|&(dr, dc)| {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                    return true;
                }
                labels[nr as usize * w + nc as usize] != Some(l)
            })
    })
    .expect("dimensions come from a valid mask")
}

pub fn make_distance(
    mask: &BinaryMask,
    contour: &BinaryMask,
    kind: DistanceMapKind,
) -> Result<DistanceMap> {
    make_distance_with(mask, contour, kind, D1Direction::default())
}

/// Unnormalized distance map of the requested kind.
pub fn make_distance_with(
    mask: &BinaryMask,
    contour: &BinaryMask,
    kind: DistanceMapKind,
    d1: D1Direction,
) -> Result<DistanceMap> {
    raster::ensure_same_dims(mask.dims(), contour.dims(), "mask vs contour")?;
    let (grid, source_empty) = match kind {
        DistanceMapKind::D1 => {
            let field = match d1 {
                D1Direction::ToForeground => euclidean_distance_transform(mask),
                D1Direction::ToBackground => euclidean_distance_transform(&mask.invert()),
            };
            (field.grid, field.source_empty)
        }
        DistanceMapKind::D2 => {
            let field = euclidean_distance_transform(contour);
            (field.grid, field.source_empty)
        }
        DistanceMapKind::D3 => (signed_distance_transform(mask, contour)?, false),
    };
    Ok(DistanceMap {
        grid,
        kind,
        normalized: false,
        source_empty,
    })
}

/// Maps a distance map into `[0, 1]`.
///
/// D1/D2 are divided by their maximum (all zeros when the maximum is 0 or
/// the source set was empty). D3 goes through `v -> 0.5 + 0.5 * v / max|v|`,
/// putting the contour at exactly 0.5. Already-normalized maps are returned
/// unchanged.
pub fn normalize_distance(d: &DistanceMap) -> DistanceMap {
    if d.normalized {
        return d.clone();
    }
    let grid = if d.source_empty {
        d.grid.map(|_| 0.0)
    } else {
        match d.kind {
            DistanceMapKind::D1 | DistanceMapKind::D2 => {
                let max = d.grid.data().iter().fold(0.0f64, |m, &v| m.max(v));
                if max > 0.0 {
                    d.grid.map(|v| v / max)
                } else {
                    d.grid.map(|_| 0.0)
                }
            }
            DistanceMapKind::D3 => {
                let max = d.grid.data().iter().fold(0.0f64, |m, &v| m.max(v.abs()));
                if max > 0.0 {
                    d.grid.map(|v| 0.5 + 0.5 * (v / max))
                } else {
                    d.grid.map(|_| 0.5)
                }
            }
        }
    };
    DistanceMap {
        grid,
        kind: d.kind,
        normalized: true,
        source_empty: d.source_empty,
    }
}

pub fn make_targets(
    mask: &BinaryMask,
    kind: DistanceMapKind,
    radius: ContourRadius,
) -> Result<TargetBundle> {
    make_targets_with(mask, kind, radius, D1Direction::default())
}

/// Contour plus normalized distance map for one mask.
pub fn make_targets_with(
    mask: &BinaryMask,
    kind: DistanceMapKind,
    radius: ContourRadius,
    d1: D1Direction,
) -> Result<TargetBundle> {
    let contour = make_contour(mask, radius)?;
    let distance = normalize_distance(&make_distance_with(mask, &contour, kind, d1)?);
    Ok(TargetBundle {
        mask: mask.clone(),
        contour,
        distance,
    })
}
