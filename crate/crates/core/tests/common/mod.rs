//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use convmcd::BinaryMask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random mask mixing salt noise with a few filled disks, so both scattered
/// pixels and solid regions with real boundaries show up.
pub fn random_mask(seed: u64, w: usize, h: usize) -> BinaryMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let density = [0.0, 0.01, 0.05, 0.2, 0.5][rng.random_range(0..5)];
    let disks: Vec<(f64, f64, f64)> = (0..rng.random_range(0..4))
        .map(|_| {
            (
                rng.random_range(0.0..h as f64),
                rng.random_range(0.0..w as f64),
                rng.random_range(1.0..8.0),
            )
        })
        .collect();
    let mut m = BinaryMask::empty(w, h).unwrap();
    for r in 0..h {
        for c in 0..w {
            let in_disk = disks.iter().any(|&(cy, cx, rad)| {
                let (dy, dx) = (r as f64 - cy, c as f64 - cx);
                dy * dy + dx * dx <= rad * rad
            });
            m.set(r, c, in_disk || rng.random_bool(density));
        }
    }
    m
}

pub fn points(m: &BinaryMask) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for r in 0..m.height() {
        for c in 0..m.width() {
            if m.get(r, c) {
                out.push((r as i64, c as i64));
            }
        }
    }
    out
}

fn sq(a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - b.0).pow(2) + (a.1 - b.1).pow(2)
}

/// Minimum squared distance from `p` to any point of `set`, `None` if empty.
pub fn nearest_sq(p: (i64, i64), set: &[(i64, i64)]) -> Option<i64> {
    set.iter().map(|&q| sq(p, q)).min()
}

/// Exact EDT by scanning every foreground pixel for every pixel.
pub fn edt(m: &BinaryMask) -> Vec<f64> {
    let fg = points(m);
    let mut out = Vec::with_capacity(m.width() * m.height());
    for r in 0..m.height() as i64 {
        for c in 0..m.width() as i64 {
            out.push(nearest_sq((r, c), &fg).map_or(f64::MAX, |d| (d as f64).sqrt()));
        }
    }
    out
}

pub fn signed_dt(mask: &BinaryMask, contour: &BinaryMask) -> Vec<f64> {
    let ct = points(contour);
    let mut out = Vec::new();
    for r in 0..mask.height() {
        for c in 0..mask.width() {
            let d = (nearest_sq((r as i64, c as i64), &ct).unwrap() as f64).sqrt();
            out.push(if d == 0.0 || mask.get(r, c) { d } else { -d });
        }
    }
    out
}

/// Foreground pixels with a background or out-of-bounds 4-neighbour.
pub fn boundary(m: &BinaryMask) -> BinaryMask {
    let (w, h) = (m.width() as i64, m.height() as i64);
    let fg = |r: i64, c: i64| r >= 0 && c >= 0 && r < h && c < w && m.get(r as usize, c as usize);
    BinaryMask::from_fn(m.width(), m.height(), |r, c| {
        let (r, c) = (r as i64, c as i64);
        fg(r, c) && !(fg(r - 1, c) && fg(r + 1, c) && fg(r, c - 1) && fg(r, c + 1))
    })
    .unwrap()
}

pub fn dilate(m: &BinaryMask, radius: u32) -> BinaryMask {
    let fg = points(m);
    let r2 = i64::from(radius).pow(2);
    BinaryMask::from_fn(m.width(), m.height(), |r, c| {
        fg.iter().any(|&q| sq((r as i64, c as i64), q) <= r2)
    })
    .unwrap()
}

/// Symmetric Hausdorff distance between the boundary sets, by double loop.
pub fn hausdorff(a: &BinaryMask, b: &BinaryMask) -> Option<f64> {
    let (pa, pb) = (points(&boundary(a)), points(&boundary(b)));
    match (pa.is_empty(), pb.is_empty()) {
        (true, true) => return Some(0.0),
        (true, false) | (false, true) => return None,
        _ => {}
    }
    let directed = |x: &[(i64, i64)], y: &[(i64, i64)]| {
        x.iter()
            .map(|&p| (nearest_sq(p, y).unwrap() as f64).sqrt())
            .fold(0.0f64, f64::max)
    };
    Some(directed(&pa, &pb).max(directed(&pb, &pa)))
}

/// Band membership and the per-width error, counted pixel by pixel.
pub fn trimap(pred: &BinaryMask, gt: &BinaryMask, width: u32) -> (usize, f64) {
    let gb = points(&boundary(gt));
    let (mut band, mut wrong) = (0usize, 0usize);
    for r in 0..gt.height() {
        for c in 0..gt.width() {
            let d = (nearest_sq((r as i64, c as i64), &gb).unwrap() as f64).sqrt();
            if d <= f64::from(width) {
                band += 1;
                if pred.get(r, c) != gt.get(r, c) {
                    wrong += 1;
                }
            }
        }
    }
    (band, wrong as f64 / band as f64)
}
