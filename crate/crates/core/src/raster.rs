//! Raster primitives: dense grids, binary masks, connected components,
//! inner boundaries, disk dilation and exact euclidean distance transforms.
//!
//! All grids are row-major; `(row, col)` addresses `data[row * width + col]`.

use crate::error::{Error, Result};

/// Dense 2-D raster of `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::DataLength {
                width,
                height,
                expected: width * height,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: vec![value; width * height],
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
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

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Foreground wherever `value >= threshold`.
    pub fn threshold(&self, threshold: f64) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v >= threshold).collect(),
        }
    }
}

/// A raster whose pixels are either background (0) or foreground (1).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::DataLength {
                width,
                height,
                expected: width * height,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn full(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![true; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds a mask from a grid holding only exact 0.0 and 1.0 values.
    pub fn from_grid(grid: &ImageGrid) -> Result<Self> {
        let data = grid
            .data()
            .iter()
            .enumerate()
            .map(|(index, &value)| {
                if value == 0.0 {
                    Ok(false)
                } else if value == 1.0 {
                    Ok(true)
                } else {
                    Err(Error::NotBinary { index, value })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid.width(), grid.height(), data)
    }

    /// Mask with the given pixels set. Coordinates must be in bounds.
    pub fn from_pixels(
        width: usize,
        height: usize,
        pixels: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut mask = Self::empty(width, height)?;
        for (row, col) in pixels {
            if row >= height || col >= width {
                return Err(Error::OutOfBounds {
                    row,
                    col,
                    width,
                    height,
                });
            }
            mask.set(row, col, true);
        }
        Ok(mask)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    /// Foreground coordinates in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(move |(i, _)| (i / w, i % w))
    }

    pub fn to_grid(&self) -> ImageGrid {
        ImageGrid {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|&v| if v { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    pub fn invert(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| !v).collect(),
        }
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        ensure_same_dims(self.dims(), other.dims(), "mask union")?;
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a || b)
                .collect(),
        })
    }

    /// True when every foreground pixel of `self` is also foreground in `other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }
}

/// Deduplicated, in-bounds set of pixel coordinates kept in row-major order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PixelSet {
    coords: Vec<(usize, usize)>,
}

impl PixelSet {
    pub fn new(mut coords: Vec<(usize, usize)>, width: usize, height: usize) -> Result<Self> {
        if let Some(&(row, col)) = coords.iter().find(|&&(r, c)| r >= height || c >= width) {
            return Err(Error::OutOfBounds {
                row,
                col,
                width,
                height,
            });
        }
        coords.sort_unstable();
        coords.dedup();
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &[(usize, usize)] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn contains(&self, p: (usize, usize)) -> bool {
        self.coords.binary_search(&p).is_ok()
    }

    pub fn to_mask(&self, width: usize, height: usize) -> Result<BinaryMask> {
        BinaryMask::from_pixels(width, height, self.coords.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

/// Maximal connected foreground regions, ordered by the row-major position
/// of each region's first pixel.
///
/// Two-pass labeling over a union-find forest.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<PixelSet> {
    let labels = label_components(mask, connectivity);
    let count = labels.iter().flatten().max().map_or(0, |&m| m + 1);
    let mut comps = vec![Vec::new(); count];
    for (i, label) in labels.iter().enumerate() {
        if let Some(l) = label {
            comps[*l].push((i / mask.width, i % mask.width));
        }
    }
    comps.into_iter().map(|coords| PixelSet { coords }).collect()
}

/// Per-pixel component index (`None` for background). Indices follow the
/// row-major order of each component's first pixel.
pub fn label_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<Option<usize>> {
    let (w, h) = mask.dims();
    let mut uf = UnionFind::new(w * h);
    // Already-visited neighbours in scan order.
    let back: &[(isize, isize)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (0, -1)],
        Connectivity::Eight => &[(-1, -1), (-1, 0), (-1, 1), (0, -1)],
    };
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            for &(dr, dc) in back {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nc >= w as isize {
                    continue;
                }
                let (nr, nc) = (nr as usize, nc as usize);
                if mask.get(nr, nc) {
                    uf.union(r * w + c, nr * w + nc);
                }
            }
        }
    }

    let mut root_label = vec![usize::MAX; w * h];
    let mut next = 0;
    let mut labels = vec![None; w * h];
    for (i, &fg) in mask.data.iter().enumerate() {
        if !fg {
            continue;
        }
        let root = uf.find(i);
        if root_label[root] == usize::MAX {
            root_label[root] = next;
            next += 1;
        }
        labels[i] = Some(root_label[root]);
    }
    labels
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

const FOUR_NEIGHBOURS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

/// Inner boundary: foreground pixels with at least one 4-neighbour that is
/// background or outside the image.
pub fn boundary(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = mask.dims();
    let mut out = vec![false; w * h];
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            out[r * w + c] = FOUR_NEIGHBOURS.iter().any(|&(dr, dc)| {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                nr < 0
                    || nc < 0
                    || nr >= h as isize
                    || nc >= w as isize
                    || !mask.get(nr as usize, nc as usize)
            });
        }
    }
    BinaryMask {
        width: w,
        height: h,
        data: out,
    }
}

/// Integer offsets of the closed disk `dr² + dc² <= radius²`.
pub fn disk_offsets(radius: u32) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let r2 = r * r;
    let mut offsets = Vec::new();
    for dr in -r..=r {
        for dc in -r..=r {
            if dr * dr + dc * dc <= r2 {
                offsets.push((dr, dc));
            }
        }
    }
    offsets
}

/// Binary dilation by a closed disk. Radius 0 is the identity.
pub fn dilate_disk(mask: &BinaryMask, radius: u32) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    let offsets = disk_offsets(radius);
    let mut out = mask.clone();
    for (r, c) in mask.pixels() {
        for &(dr, dc) in &offsets {
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            if nr >= 0 && nc >= 0 && nr < h as isize && nc < w as isize {
                out.data[nr as usize * w + nc as usize] = true;
            }
        }
    }
    out
}

/// Output of a distance transform over a possibly empty source set.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub grid: ImageGrid,
    /// The source set had no foreground; every pixel holds [`f64::MAX`].
    pub source_empty: bool,
}

/// Exact squared euclidean distance from every pixel to the nearest
/// foreground pixel, or `None` when the mask is empty.
///
/// Separable two-pass algorithm: a 1-D nearest-site scan along each row,
/// then a lower envelope of parabolas down each column.
pub fn squared_distance_transform(mask: &BinaryMask) -> Option<Vec<f64>> {
    let (w, h) = mask.dims();
    if mask.is_empty() {
        return None;
    }
    // Row pass: horizontal distance to the nearest foreground pixel in the row.
    let mut row_dist: Vec<Option<usize>> = vec![None; w * h];
    for r in 0..h {
        let row = &mask.data[r * w..(r + 1) * w];
        let out = &mut row_dist[r * w..(r + 1) * w];
        let mut last: Option<usize> = None;
        for c in 0..w {
            if row[c] {
                last = Some(c);
            }
            out[c] = last.map(|l| c - l);
        }
        let mut next: Option<usize> = None;
        for c in (0..w).rev() {
            if row[c] {
                next = Some(c);
            }
            if let Some(n) = next {
                let d = n - c;
                out[c] = Some(out[c].map_or(d, |e| e.min(d)));
            }
        }
    }

    // Column pass: lower envelope of parabolas (q - site)² + g(site)².
    let mut result = vec![0.0; w * h];
    let mut f = vec![0.0f64; h];
    let mut sites = Vec::with_capacity(h);
    let mut bounds = Vec::with_capacity(h + 1);
    for c in 0..w {
        sites.clear();
        bounds.clear();
        for r in 0..h {
            let Some(g) = row_dist[r * w + c] else {
                continue;
            };
            let g = g as f64;
            f[r] = g * g;
            let q = r as f64;
            // Pop parabolas hidden by the new one.
            loop {
                let Some(&v) = sites.last() else {
                    sites.push(r);
                    bounds.push(f64::NEG_INFINITY);
                    break;
                };
                let vf = v as f64;
                let s = ((f[r] + q * q) - (f[v] + vf * vf)) / (2.0 * (q - vf));
                if s <= *bounds.last().unwrap() {
                    sites.pop();
                    bounds.pop();
                } else {
                    sites.push(r);
                    bounds.push(s);
                    break;
                }
            }
        }
        // Every column has a finite site because the mask is non-empty and
        // the row pass fills whole rows that contain foreground.
        let mut k = 0;
        for r in 0..h {
            let q = r as f64;
            while k + 1 < sites.len() && bounds[k + 1] < q {
                k += 1;
            }
            let v = sites[k];
            let dq = (r as isize - v as isize) as f64;
            result[r * w + c] = dq * dq + f[v];
        }
    }
    Some(result)
}

/// Exact euclidean distance from each pixel to the nearest foreground pixel.
///
/// An empty mask yields a grid of [`f64::MAX`] with `source_empty` set.
pub fn euclidean_distance_transform(mask: &BinaryMask) -> DistanceField {
    let (w, h) = mask.dims();
    match squared_distance_transform(mask) {
        Some(sq) => DistanceField {
            grid: ImageGrid {
                width: w,
                height: h,
                data: sq.into_iter().map(f64::sqrt).collect(),
            },
            source_empty: false,
        },
        None => DistanceField {
            grid: ImageGrid {
                width: w,
                height: h,
                data: vec![f64::MAX; w * h],
            },
            source_empty: true,
        },
    }
}

/// Distance to the nearest contour pixel, positive inside `mask`, negative
/// outside, and exactly `+0.0` on the contour.
pub fn signed_distance_transform(mask: &BinaryMask, contour: &BinaryMask) -> Result<ImageGrid> {
    ensure_same_dims(mask.dims(), contour.dims(), "signed distance transform")?;
    let field = euclidean_distance_transform(contour);
    if field.source_empty {
        return Err(Error::EmptyContour);
    }
    let mut grid = field.grid;
    for (v, &inside) in grid.data.iter_mut().zip(&mask.data) {
        if !inside && *v > 0.0 {
            *v = -*v;
        }
    }
    Ok(grid)
}

pub(crate) fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::EmptyDimensions { width, height });
    }
    Ok(())
}

pub(crate) fn ensure_same_dims(a: (usize, usize), b: (usize, usize), what: &str) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!(
            "{what}: {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}
