//! Seeded synthetic blocks and images for tests, examples and training.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::GrayImage;
use crate::model::PixelBlock;

/// Vertical step: columns left of `B/2` at `low`, the rest at `high`.
pub fn step_block(size: usize, low: f64, high: f64) -> PixelBlock {
    PixelBlock::from_fn(size, |_, c| if c < size / 2 { low } else { high })
        .expect("values in [0, 1]")
}

/// Straight edge through the block at `angle` (radians), offset from the
/// center by `offset` pixels.
pub fn edge_block(size: usize, angle: f64, offset: f64, low: f64, high: f64) -> PixelBlock {
    let mid = (size as f64 - 1.0) / 2.0;
    let (s, c) = angle.sin_cos();
    PixelBlock::from_fn(size, |r, col| {
        let d = (r as f64 - mid) * s + (col as f64 - mid) * c - offset;
        if d < 0.0 {
            low
        } else {
            high
        }
    })
    .expect("values in [0, 1]")
}

/// Linear ramp from `from` to `to` along direction `angle`.
pub fn gradient_block(size: usize, angle: f64, from: f64, to: f64) -> PixelBlock {
    let mid = (size as f64 - 1.0) / 2.0;
    let (s, c) = angle.sin_cos();
    let span = mid.max(1.0) * 2.0f64.sqrt();
    PixelBlock::from_fn(size, |r, col| {
        let t = (((r as f64 - mid) * s + (col as f64 - mid) * c) / span + 1.0) / 2.0;
        (from + (to - from) * t.clamp(0.0, 1.0)).clamp(0.0, 1.0)
    })
    .expect("values in [0, 1]")
}

/// One random block: an edge, a ramp, or an edge over a ramp.
pub fn random_block(size: usize, rng: &mut impl Rng) -> PixelBlock {
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let offset = rng.random_range(-(size as f64) / 4.0..=size as f64 / 4.0);
    let a = rng.random_range(0.05..0.95);
    let b = rng.random_range(0.05..0.95);
    match rng.random_range(0..3) {
        0 => edge_block(size, angle, offset, a, b),
        1 => gradient_block(size, angle, a, b),
        _ => {
            let ramp = gradient_block(size, rng.random_range(0.0..std::f64::consts::TAU), 0.0, 0.3);
            let edge = edge_block(size, angle, offset, a * 0.7, b * 0.7);
            let pixels = edge
                .pixels()
                .iter()
                .zip(ramp.pixels())
                .map(|(e, r)| (e + r).min(1.0))
                .collect();
            PixelBlock::new(size, pixels, (0, 0)).expect("values in [0, 1]")
        }
    }
}

/// `count` blocks drawn with [`random_block`] from a seeded generator and
/// rounded to 8-bit levels, like blocks cut from a PGM file.
pub fn block_dataset(count: usize, size: usize, seed: u64) -> Vec<PixelBlock> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let block = random_block(size, &mut rng);
            let pixels = block
                .pixels()
                .iter()
                .map(|p| (p * 255.0).round() / 255.0)
                .collect();
            PixelBlock::new(size, pixels, (0, 0)).expect("values in [0, 1]")
        })
        .collect()
}

/// Smooth background with discs, a bar and a few edges; has both flat and
/// textured regions.
pub fn synthetic_image(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = width.max(1) as f64;
    let h = height.max(1) as f64;
    let discs: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.random_range(0.0..h),
                rng.random_range(0.0..w),
                rng.random_range(0.05..0.2) * w.min(h),
                rng.random_range(0.1..0.9),
            )
        })
        .collect();
    let bar = (
        rng.random_range(0.2..0.8) * h,
        rng.random_range(0.03..0.08) * h,
        rng.random_range(0.1..0.9),
    );
    GrayImage::from_fn(width, height, |r, c| {
        let (y, x) = (r as f64, c as f64);
        let mut v = 0.35 + 0.3 * (x / w) + 0.1 * (y / h);
        if (y - bar.0).abs() < bar.1 && x > 0.1 * w && x < 0.6 * w {
            v = bar.2;
        }
        for &(cy, cx, rad, val) in &discs {
            if (y - cy).powi(2) + (x - cx).powi(2) < rad * rad {
                v = val;
            }
        }
        if x > 0.75 * w && y > 0.6 * h {
            v = if ((x / 12.0).floor() as i64 + (y / 12.0).floor() as i64) % 2 == 0 {
                0.15
            } else {
                0.85
            };
        }
        v
    })
}
