use crate::codec::{DecodedBlock, DecodedStream};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::model::Grid;

/// Samples per block edge at `scale`: `ceil(scale * B)`.
pub fn samples_per_block(block_size: usize, scale: f64) -> usize {
    let n = scale * block_size as f64;
    // tolerate representation error in products such as 0.1 * 30
    let rounded = n.round();
    let n = if (n - rounded).abs() < 1e-9 {
        rounded
    } else {
        n.ceil()
    };
    (n as usize).max(1)
}

/// Positions `j (B-1) / (n-1)` for `j` in `0..n`, as a row-major grid.
pub fn resample_grid(block_size: usize, scale: f64) -> Result<Grid> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::config(format!(
            "scale must be positive, got {scale}"
        )));
    }
    if block_size == 0 {
        return Err(Error::config("block size must be positive"));
    }
    let n = samples_per_block(block_size, scale);
    let hi = (block_size - 1) as f64;
    let coord = |j: usize| {
        if n == 1 {
            0.0
        } else {
            j as f64 * hi / (n - 1) as f64
        }
    };
    let mut positions = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            positions.push([coord(r), coord(c)]);
        }
    }
    Grid::new(block_size, positions)
}

/// Evaluates one block model on the resampling grid; returns `n x n` values.
pub fn resample_block(block: &DecodedBlock, block_size: usize, scale: f64) -> Result<Vec<f64>> {
    Ok(block.render(&resample_grid(block_size, scale)?))
}

/// Renders a decoded stream at `scale` times its resolution. Blocks are
/// evaluated independently; the result is cropped to
/// `ceil(scale * width) x ceil(scale * height)`.
pub fn resample(stream: &DecodedStream, scale: f64) -> Result<GrayImage> {
    let b = stream.header.block_size as usize;
    let grid = resample_grid(b, scale)?;
    let n = samples_per_block(b, scale);
    let bx = stream.header.blocks_x();
    let by = stream.header.blocks_y();
    let mut out = GrayImage::constant(bx * n, by * n, 0.0)?;
    for (i, block) in stream.blocks.iter().enumerate() {
        out.paste(((i / bx) * n, (i % bx) * n), n, n, &block.render(&grid));
    }
    let w = samples_per_block(stream.header.width as usize, scale).min(bx * n);
    let h = samples_per_block(stream.header.height as usize, scale).min(by * n);
    Ok(out.crop(w, h))
}
