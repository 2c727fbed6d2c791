//! `.smae` model files and `.smbk` block packs.
//!
//! Model file layout (all integers little-endian):
//!
//! ```text
//! "SMAE" | version u8 | mode u8 | block_size u16 | seed u64 | bandwidth f64
//! encoder network
//! decoder network (C-AE only)
//! ```
//!
//! A network is `layer_count u16`, then per layer `tag u8, arg u32`, then
//! `weight_count u32` and the weights as `f32`. Layer tags: 0 dense, 1 conv
//! 3x3, 2 flatten, 3 ReLU, 4 sigmoid.
//!
//! Block pack layout: `"SMBK" | count u32 | block_size u8 | count * B^2 bytes`.

use std::fs;
use std::path::Path;

use crate::error::{Error, ModelFileError, Result};
use crate::image::read_pgm;
use crate::model::PixelBlock;
use crate::neural::layers::{Architecture, LayerSpec, Shape};
use crate::neural::net::{AeMode, AeModel, EncoderNet, Network};

pub const MODEL_MAGIC: [u8; 4] = *b"SMAE";
pub const MODEL_VERSION: u8 = 1;
pub const PACK_MAGIC: [u8; 4] = *b"SMBK";

pub fn model_to_bytes(model: &AeModel) -> Vec<u8> {
    let enc = model.encoder();
    let mut out = Vec::with_capacity(32 + 4 * model.param_count());
    out.extend_from_slice(&MODEL_MAGIC);
    out.push(MODEL_VERSION);
    out.push(match model.mode() {
        AeMode::SmoeAe => 0,
        AeMode::CAe => 1,
    });
    out.extend_from_slice(&(enc.block_size() as u16).to_le_bytes());
    out.extend_from_slice(&enc.seed().to_le_bytes());
    out.extend_from_slice(&model.bandwidth().to_le_bytes());
    write_network(&mut out, enc.layers(), enc.weights());
    if let Some(dec) = model.decoder() {
        write_network(&mut out, dec.architecture().layers(), dec.weights());
    }
    out
}

fn write_network(out: &mut Vec<u8>, layers: &[LayerSpec], weights: &[f32]) {
    out.extend_from_slice(&(layers.len() as u16).to_le_bytes());
    for layer in layers {
        let (tag, arg) = match *layer {
            LayerSpec::Dense { outputs } => (0u8, outputs as u32),
            LayerSpec::Conv3x3 { filters } => (1, filters as u32),
            LayerSpec::Flatten => (2, 0),
            LayerSpec::Relu => (3, 0),
            LayerSpec::Sigmoid => (4, 0),
        };
        out.push(tag);
        out.extend_from_slice(&arg.to_le_bytes());
    }
    out.extend_from_slice(&(weights.len() as u32).to_le_bytes());
    for w in weights {
        out.extend_from_slice(&w.to_le_bytes());
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], ModelFileError> {
        let end = self.pos + n;
        if end > self.data.len() {
            return Err(ModelFileError::Length {
                expected: end,
                found: self.data.len(),
            });
        }
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> std::result::Result<[u8; N], ModelFileError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> std::result::Result<u8, ModelFileError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> std::result::Result<u16, ModelFileError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> std::result::Result<u32, ModelFileError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
}

fn read_network(
    cur: &mut Cursor<'_>,
) -> std::result::Result<(Vec<LayerSpec>, Vec<f32>), ModelFileError> {
    let count = cur.u16()? as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let tag = cur.u8()?;
        let arg = cur.u32()? as usize;
        layers.push(match tag {
            0 => LayerSpec::Dense { outputs: arg },
            1 => LayerSpec::Conv3x3 { filters: arg },
            2 => LayerSpec::Flatten,
            3 => LayerSpec::Relu,
            4 => LayerSpec::Sigmoid,
            t => {
                return Err(ModelFileError::InvalidLayer(format!(
                    "unknown layer tag {t}"
                )))
            }
        });
    }
    let n = cur.u32()? as usize;
    let bytes = cur.take(n.checked_mul(4).ok_or(ModelFileError::Length {
        expected: usize::MAX,
        found: cur.data.len(),
    })?)?;
    let weights = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect();
    Ok((layers, weights))
}

fn invalid_layer(e: Error) -> Error {
    ModelFileError::InvalidLayer(e.to_string()).into()
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<AeModel> {
    let mut cur = Cursor {
        data: bytes,
        pos: 0,
    };
    let magic: [u8; 4] = cur.array()?;
    if magic != MODEL_MAGIC {
        return Err(ModelFileError::BadMagic(magic).into());
    }
    let version = cur.u8()?;
    if version != MODEL_VERSION {
        return Err(ModelFileError::UnsupportedVersion(version).into());
    }
    let mode = match cur.u8()? {
        0 => AeMode::SmoeAe,
        1 => AeMode::CAe,
        m => return Err(ModelFileError::InvalidLayer(format!("unknown mode {m}")).into()),
    };
    let block_size = cur.u16()? as usize;
    let seed = u64::from_le_bytes(cur.array()?);
    let bandwidth = f64::from_le_bytes(cur.array()?);
    let (layers, weights) = read_network(&mut cur)?;
    let encoder =
        EncoderNet::from_weights(block_size, layers, weights, seed).map_err(invalid_layer)?;
    let decoder = match mode {
        AeMode::SmoeAe => None,
        AeMode::CAe => {
            let (layers, weights) = read_network(&mut cur)?;
            let arch = Architecture::new(Shape::Flat(3 * encoder.kernels()), layers)
                .map_err(invalid_layer)?;
            Some(Network::from_weights(arch, weights).map_err(invalid_layer)?)
        }
    };
    if cur.pos != bytes.len() {
        return Err(ModelFileError::Length {
            expected: cur.pos,
            found: bytes.len(),
        }
        .into());
    }
    AeModel::from_parts(mode, bandwidth, encoder, decoder).map_err(invalid_layer)
}

pub fn save_model(model: &AeModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<AeModel> {
    model_from_bytes(&fs::read(path)?)
}

/// Packs blocks with pixels rounded to 8 bits.
pub fn pack_blocks(blocks: &[PixelBlock]) -> Result<Vec<u8>> {
    let size = blocks.first().map_or(0, |b| b.size());
    if size == 0 || size > 255 || blocks.iter().any(|b| b.size() != size) {
        return Err(Error::input(
            "block pack needs non-empty blocks of one size up to 255",
        ));
    }
    let mut out = Vec::with_capacity(9 + blocks.len() * size * size);
    out.extend_from_slice(&PACK_MAGIC);
    out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    out.push(size as u8);
    for b in blocks {
        out.extend(b.pixels().iter().map(|p| (p * 255.0).round() as u8));
    }
    Ok(out)
}

pub fn unpack_blocks(bytes: &[u8]) -> Result<Vec<PixelBlock>> {
    let mut cur = Cursor {
        data: bytes,
        pos: 0,
    };
    let magic: [u8; 4] = cur.array()?;
    if magic != PACK_MAGIC {
        return Err(ModelFileError::BadMagic(magic).into());
    }
    let count = cur.u32()? as usize;
    let size = cur.u8()? as usize;
    let expected = 9 + count * size * size;
    if bytes.len() != expected {
        return Err(ModelFileError::Length {
            expected,
            found: bytes.len(),
        }
        .into());
    }
    bytes[9..]
        .chunks_exact(size * size)
        .map(|c| PixelBlock::new(size, c.iter().map(|&v| v as f64 / 255.0).collect(), (0, 0)))
        .collect()
}

/// Training blocks from an `.smbk` file or from every `.pgm` in a directory
/// (sorted by name, partial edge blocks dropped).
pub fn load_dataset(path: impl AsRef<Path>, block_size: usize) -> Result<Vec<PixelBlock>> {
    let path = path.as_ref();
    if path.is_file() {
        let blocks = unpack_blocks(&fs::read(path)?)?;
        if let Some(b) = blocks.iter().find(|b| b.size() != block_size) {
            return Err(Error::input(format!(
                "pack holds {0}x{0} blocks, expected {block_size}",
                b.size()
            )));
        }
        return Ok(blocks);
    }
    let mut files: Vec<_> = fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
        .collect();
    files.sort();
    let mut blocks = Vec::new();
    for file in files {
        let img = read_pgm(&file)?;
        let w = img.width() / block_size * block_size;
        let h = img.height() / block_size * block_size;
        if w > 0 && h > 0 {
            blocks.extend(img.crop(w, h).blocks(block_size)?);
        }
    }
    if blocks.is_empty() {
        return Err(Error::input(format!(
            "no {block_size}x{block_size} blocks found in {}",
            path.display()
        )));
    }
    Ok(blocks)
}
