//! Grayscale images in `[0, 1]` and binary PGM (P5) I/O.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::PixelBlock;

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::input(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(p) = data.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::input(format!("pixel value {p} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image from `f(row, col)`; values are clamped into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c).clamp(0.0, 1.0));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    /// Pads right and bottom to multiples of `block` by edge replication.
    pub fn pad_to_multiple(&self, block: usize) -> GrayImage {
        let w = self.width.div_ceil(block) * block;
        let h = self.height.div_ceil(block) * block;
        if w == self.width && h == self.height {
            return self.clone();
        }
        GrayImage::from_fn(w, h, |r, c| {
            self.get(
                r.min(self.height.saturating_sub(1)),
                c.min(self.width.saturating_sub(1)),
            )
        })
    }

    /// Top-left `width x height` region.
    pub fn crop(&self, width: usize, height: usize) -> GrayImage {
        let width = width.min(self.width);
        let height = height.min(self.height);
        GrayImage::from_fn(width, height, |r, c| self.get(r, c))
    }

    /// The `B x B` block at block coordinates `(block_row, block_col)`.
    pub fn block(&self, block_row: usize, block_col: usize, size: usize) -> PixelBlock {
        let (r0, c0) = (block_row * size, block_col * size);
        PixelBlock::from_fn(size, |r, c| self.get(r0 + r, c0 + c))
            .expect("image pixels are in range")
            .with_origin((r0, c0))
    }

    /// All blocks in raster order. Dimensions must be multiples of `size`.
    pub fn blocks(&self, size: usize) -> Result<Vec<PixelBlock>> {
        if size == 0 || !self.width.is_multiple_of(size) || !self.height.is_multiple_of(size) {
            return Err(Error::input(format!(
                "{}x{} image is not a multiple of block size {size}",
                self.width, self.height
            )));
        }
        let mut out = Vec::with_capacity((self.width / size) * (self.height / size));
        for br in 0..self.height / size {
            for bc in 0..self.width / size {
                out.push(self.block(br, bc, size));
            }
        }
        Ok(out)
    }

    /// Writes `pixels` (row-major `size x size`) at pixel offset `origin`,
    /// skipping anything outside the image.
    pub fn paste(
        &mut self,
        origin: (usize, usize),
        size_rows: usize,
        size_cols: usize,
        pixels: &[f64],
    ) {
        for r in 0..size_rows {
            let y = origin.0 + r;
            if y >= self.height {
                break;
            }
            for c in 0..size_cols {
                let x = origin.1 + c;
                if x >= self.width {
                    break;
                }
                self.data[y * self.width + x] = pixels[r * size_cols + c];
            }
        }
    }

    /// Pixels quantized to 8 bits.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}

fn skip_space_and_comments(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() {
        match bytes[*pos] {
            b'#' => {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            }
            b if b.is_ascii_whitespace() => *pos += 1,
            _ => break,
        }
    }
}

fn read_header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    skip_space_and_comments(bytes, pos);
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::input(format!("PGM header: missing or invalid {what}")))
}

/// Parses an 8-bit binary PGM (`P5`).
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::input("not a binary PGM (expected P5 magic)"));
    }
    let mut pos = 2;
    let width = read_header_number(bytes, &mut pos, "width")?;
    let height = read_header_number(bytes, &mut pos, "height")?;
    let maxval = read_header_number(bytes, &mut pos, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::input(format!(
            "unsupported PGM maxval {maxval} (8-bit only)"
        )));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::input("PGM header: missing separator before raster"));
    }
    pos += 1;
    let raster = &bytes[pos..];
    if raster.len() < width * height {
        return Err(Error::input(format!(
            "PGM raster truncated: need {} bytes, have {}",
            width * height,
            raster.len()
        )));
    }
    let scale = maxval as f64;
    let data = raster[..width * height]
        .iter()
        .map(|&p| (p as f64 / scale).min(1.0))
        .collect();
    GrayImage::new(width, height, data)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    parse_pgm(&bytes)
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.to_u8());
    out
}

pub fn write_pgm(path: impl AsRef<Path>, image: &GrayImage) -> Result<()> {
    fs::write(path, encode_pgm(image))?;
    Ok(())
}
