//! Image-level encoding and decoding.
//!
//! Encoding pads the image to whole blocks, classifies each block as textured
//! or flat, fits (or predicts) a [`BlockModel`] for textured blocks, quantizes
//! the parameters and packs everything into the `.smoe` container described in
//! [`bitstream`].

pub mod bitstream;
pub mod quant;

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result, StreamError};
use crate::gd::{fit_block, GdConfig};
use crate::image::GrayImage;
use crate::model::{
    clamp_unit, reconstruct, BlockModel, Grid, PixelBlock, DEFAULT_BANDWIDTH, DEFAULT_BLOCK_SIZE,
    DEFAULT_KERNELS,
};
use crate::neural::{predict_block_model, EncoderNet};
use crate::ols::bounded_experts;

pub use bitstream::{deserialize, payload_bits, serialize, StreamHeader};
pub use quant::{dequantize_uniform, quantize_uniform, QuantSpec};

/// Variance above which a block is coded with kernels.
pub const DEFAULT_VARIANCE_THRESHOLD: f64 = 0.0009;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Textured,
    NonTextured,
}

/// Textured iff the pixel variance is strictly above `variance_threshold`.
pub fn classify_block(block: &PixelBlock, variance_threshold: f64) -> BlockKind {
    if block.variance() > variance_threshold {
        BlockKind::Textured
    } else {
        BlockKind::NonTextured
    }
}

/// Quantized payload of one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CodedBlock {
    /// `K` center-row codes, `K` center-column codes, then `K` expert codes.
    Textured { codes: Vec<u32> },
    /// Quantized block mean.
    Flat { mean: u32 },
}

impl CodedBlock {
    pub fn kind(&self) -> BlockKind {
        match self {
            CodedBlock::Textured { .. } => BlockKind::Textured,
            CodedBlock::Flat { .. } => BlockKind::NonTextured,
        }
    }

    pub(crate) fn check(
        &self,
        spec: &QuantSpec,
        kernels: usize,
    ) -> std::result::Result<(), StreamError> {
        let fits = |code: u32, bits: u8| {
            if (code as u64) < (1u64 << bits) {
                Ok(())
            } else {
                Err(StreamError::CodeOutOfRange { code, bits })
            }
        };
        match self {
            CodedBlock::Textured { codes } => {
                if codes.len() != 3 * kernels {
                    return Err(StreamError::BlockMismatch(format!(
                        "textured block has {} codes, expected {}",
                        codes.len(),
                        3 * kernels
                    )));
                }
                for (i, &code) in codes.iter().enumerate() {
                    fits(
                        code,
                        if i < 2 * kernels {
                            spec.center_bits
                        } else {
                            spec.expert_bits
                        },
                    )?;
                }
                Ok(())
            }
            CodedBlock::Flat { mean } => fits(*mean, spec.mean_bits),
        }
    }
}

/// How experts are chosen after the centers have been quantized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpertRefit {
    /// Least-squares experts for the dequantized centers.
    Ols,
    /// Quantize the incoming experts unchanged.
    Keep,
}

#[derive(Debug, Clone, Copy)]
pub enum BlockPayload<'a> {
    Model(&'a BlockModel),
    Mean,
}

pub fn encode_block(
    block: &PixelBlock,
    payload: BlockPayload<'_>,
    spec: &QuantSpec,
) -> Result<CodedBlock> {
    encode_block_with(block, payload, spec, ExpertRefit::Ols)
}

pub fn encode_block_with(
    block: &PixelBlock,
    payload: BlockPayload<'_>,
    spec: &QuantSpec,
    refit: ExpertRefit,
) -> Result<CodedBlock> {
    let model = match payload {
        BlockPayload::Mean => {
            return Ok(CodedBlock::Flat {
                mean: quantize_uniform(block.mean(), spec.mean_bits)?,
            });
        }
        BlockPayload::Model(model) => model,
    };
    let k = model.kernel_count();
    let mut codes = Vec::with_capacity(3 * k);
    for axis in 0..2 {
        for c in model.centers() {
            codes.push(quantize_uniform(c[axis], spec.center_bits)?);
        }
    }
    let experts = match refit {
        ExpertRefit::Keep => model.experts().to_vec(),
        ExpertRefit::Ols => {
            let centers = (0..k)
                .map(|i| {
                    [
                        dequantize_uniform(codes[i], spec.center_bits),
                        dequantize_uniform(codes[k + i], spec.center_bits),
                    ]
                })
                .collect();
            let quantized = BlockModel::new(centers, model.experts().to_vec(), model.bandwidth())?;
            bounded_experts(block, &quantized)
        }
    };
    for m in experts {
        codes.push(quantize_uniform(m, spec.expert_bits)?);
    }
    Ok(CodedBlock::Textured { codes })
}

/// Everything needed to turn codes back into parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeParams {
    pub block_size: usize,
    pub kernels: usize,
    pub bandwidth: f64,
    pub spec: QuantSpec,
}

impl DecodeParams {
    pub fn from_header(header: &StreamHeader) -> Result<Self> {
        Ok(Self {
            block_size: header.block_size as usize,
            kernels: header.kernels as usize,
            bandwidth: header.bandwidth as f64,
            spec: header.quant_spec()?,
        })
    }
}

/// Dequantized parameters of one block.
#[derive(Debug, Clone, PartialEq)]
pub enum DecodedBlock {
    Textured(BlockModel),
    Flat(f64),
}

impl DecodedBlock {
    /// Evaluates the block at every grid position.
    pub fn render(&self, grid: &Grid) -> Vec<f64> {
        match self {
            DecodedBlock::Textured(model) => reconstruct(model, grid)
                .into_iter()
                .map(clamp_unit)
                .collect(),
            DecodedBlock::Flat(v) => vec![*v; grid.len()],
        }
    }
}

pub fn dequantize_block(coded: &CodedBlock, params: &DecodeParams) -> Result<DecodedBlock> {
    coded.check(&params.spec, params.kernels)?;
    match coded {
        CodedBlock::Flat { mean } => Ok(DecodedBlock::Flat(dequantize_uniform(
            *mean,
            params.spec.mean_bits,
        ))),
        CodedBlock::Textured { codes } => {
            let k = params.kernels;
            let cb = params.spec.center_bits;
            let centers = (0..k)
                .map(|i| {
                    [
                        dequantize_uniform(codes[i], cb),
                        dequantize_uniform(codes[k + i], cb),
                    ]
                })
                .collect();
            let experts = codes[2 * k..]
                .iter()
                .map(|&c| dequantize_uniform(c, params.spec.expert_bits))
                .collect();
            Ok(DecodedBlock::Textured(BlockModel::new(
                centers,
                experts,
                params.bandwidth,
            )?))
        }
    }
}

pub fn decode_block(coded: &CodedBlock, params: &DecodeParams) -> Result<PixelBlock> {
    let decoded = dequantize_block(coded, params)?;
    let pixels = decoded.render(&Grid::canonical(params.block_size));
    PixelBlock::new(params.block_size, pixels, (0, 0))
}

/// Source of block models for textured blocks.
#[derive(Debug, Clone)]
pub enum BlockEncoder<'a> {
    Gd(GdConfig),
    /// Autoencoder prediction followed by least-squares experts.
    Neural(&'a EncoderNet),
}

#[derive(Debug, Clone)]
pub struct EncodeConfig<'a> {
    pub block_size: usize,
    pub kernels: usize,
    pub bandwidth: f64,
    pub quant: QuantSpec,
    /// Negative values force every block to be textured.
    pub variance_threshold: f64,
    pub encoder: BlockEncoder<'a>,
    pub refit: ExpertRefit,
}

impl<'a> EncodeConfig<'a> {
    pub fn new(encoder: BlockEncoder<'a>) -> Self {
        Self {
            block_size: DEFAULT_BLOCK_SIZE,
            kernels: DEFAULT_KERNELS,
            bandwidth: DEFAULT_BANDWIDTH,
            quant: QuantSpec::default(),
            variance_threshold: DEFAULT_VARIANCE_THRESHOLD,
            encoder,
            refit: ExpertRefit::Ols,
        }
    }

    fn validate(&self, image: &GrayImage) -> Result<()> {
        if !(1..=255).contains(&self.block_size) {
            return Err(Error::config(format!(
                "block size {} must be in 1..=255",
                self.block_size
            )));
        }
        if !(1..=255).contains(&self.kernels) {
            return Err(Error::config(format!(
                "kernel count {} must be in 1..=255",
                self.kernels
            )));
        }
        if !(self.bandwidth > 0.0
            && (self.bandwidth as f32).is_finite()
            && self.bandwidth as f32 > 0.0)
        {
            return Err(Error::config(format!(
                "bandwidth {} is not a positive f32",
                self.bandwidth
            )));
        }
        self.quant.validate()?;
        if image.width() > u16::MAX as usize || image.height() > u16::MAX as usize {
            return Err(Error::input("image dimensions exceed 65535"));
        }
        match self.encoder {
            BlockEncoder::Gd(ref cfg) => cfg.validate(),
            BlockEncoder::Neural(net) => {
                if net.block_size() != self.block_size || net.kernels() != self.kernels {
                    return Err(Error::config(format!(
                        "network expects {}x{} blocks with {} kernels, encoder configured for {}x{} with {}",
                        net.block_size(),
                        net.block_size(),
                        net.kernels(),
                        self.block_size,
                        self.block_size,
                        self.kernels
                    )));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockPlan {
    Textured(BlockModel),
    Flat,
}

/// Classified and fitted blocks of one image, before quantization.
#[derive(Debug, Clone)]
pub struct ImageAnalysis {
    pub width: usize,
    pub height: usize,
    pub block_size: usize,
    pub kernels: usize,
    /// Bandwidth after rounding to the `f32` stored in the stream header.
    pub bandwidth: f64,
    pub blocks: Vec<PixelBlock>,
    pub plans: Vec<BlockPlan>,
    pub elapsed: Duration,
}

impl ImageAnalysis {
    pub fn textured_count(&self) -> usize {
        self.plans
            .iter()
            .filter(|p| matches!(p, BlockPlan::Textured(_)))
            .count()
    }

    /// Unquantized reconstruction (flat blocks at their exact mean).
    pub fn reconstruct(&self) -> GrayImage {
        let b = self.block_size;
        let grid = Grid::canonical(b);
        let mut out = GrayImage::constant(self.width, self.height, 0.0).expect("valid dims");
        for (block, plan) in self.blocks.iter().zip(&self.plans) {
            let pixels = match plan {
                BlockPlan::Textured(m) => {
                    reconstruct(m, &grid).into_iter().map(clamp_unit).collect()
                }
                BlockPlan::Flat => vec![block.mean(); b * b],
            };
            out.paste(block.origin(), b, b, &pixels);
        }
        out
    }
}

fn block_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Classifies every block and fits or predicts models for textured ones.
pub fn analyze_image(image: &GrayImage, cfg: &EncodeConfig<'_>) -> Result<ImageAnalysis> {
    cfg.validate(image)?;
    let start = Instant::now();
    let bandwidth = cfg.bandwidth as f32 as f64;
    let padded = image.pad_to_multiple(cfg.block_size);
    let blocks = padded.blocks(cfg.block_size)?;
    let plans = blocks
        .par_iter()
        .enumerate()
        .map(|(index, block)| {
            if classify_block(block, cfg.variance_threshold) == BlockKind::NonTextured {
                return Ok(BlockPlan::Flat);
            }
            let model = match cfg.encoder {
                BlockEncoder::Gd(ref gd) => {
                    let gd = GdConfig {
                        seed: block_seed(gd.seed, index),
                        ..gd.clone()
                    };
                    fit_block(block, &gd, cfg.kernels, bandwidth)?.model
                }
                BlockEncoder::Neural(net) => {
                    predict_block_model(net, block, cfg.kernels, bandwidth, true)?
                }
            };
            Ok(BlockPlan::Textured(model))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ImageAnalysis {
        width: image.width(),
        height: image.height(),
        block_size: cfg.block_size,
        kernels: cfg.kernels,
        bandwidth,
        blocks,
        plans,
        elapsed: start.elapsed(),
    })
}

#[derive(Debug, Clone)]
pub struct EncodedImage {
    pub bytes: Vec<u8>,
    /// Block payload size, header excluded.
    pub payload_bits: u64,
    /// `payload_bits / (width * height)`.
    pub bpp: f64,
    pub textured_blocks: usize,
    pub flat_blocks: usize,
    pub elapsed: Duration,
}

/// Quantizes an analysis and serializes it.
pub fn code_analysis(
    analysis: &ImageAnalysis,
    quant: &QuantSpec,
    refit: ExpertRefit,
) -> Result<EncodedImage> {
    let start = Instant::now();
    let coded = analysis
        .blocks
        .par_iter()
        .zip(&analysis.plans)
        .map(|(block, plan)| {
            let payload = match plan {
                BlockPlan::Textured(m) => BlockPayload::Model(m),
                BlockPlan::Flat => BlockPayload::Mean,
            };
            encode_block_with(block, payload, quant, refit)
        })
        .collect::<Result<Vec<_>>>()?;
    let header = StreamHeader {
        width: analysis.width as u16,
        height: analysis.height as u16,
        block_size: analysis.block_size as u8,
        kernels: analysis.kernels as u8,
        bandwidth: analysis.bandwidth as f32,
        center_bits: quant.center_bits,
        expert_bits: quant.expert_bits,
    };
    let bytes = serialize(&header, &coded)?;
    let bits = payload_bits(&coded, quant, analysis.kernels);
    let pixels = analysis.width * analysis.height;
    let textured_blocks = coded
        .iter()
        .filter(|b| b.kind() == BlockKind::Textured)
        .count();
    Ok(EncodedImage {
        bytes,
        payload_bits: bits,
        bpp: if pixels == 0 {
            0.0
        } else {
            bits as f64 / pixels as f64
        },
        textured_blocks,
        flat_blocks: coded.len() - textured_blocks,
        elapsed: start.elapsed(),
    })
}

pub fn encode_image(image: &GrayImage, cfg: &EncodeConfig<'_>) -> Result<EncodedImage> {
    let analysis = analyze_image(image, cfg)?;
    let mut encoded = code_analysis(&analysis, &cfg.quant, cfg.refit)?;
    encoded.elapsed += analysis.elapsed;
    Ok(encoded)
}

/// Parsed and dequantized stream.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedStream {
    pub header: StreamHeader,
    /// Raster order over the padded block grid.
    pub blocks: Vec<DecodedBlock>,
}

impl DecodedStream {
    pub fn render(&self) -> GrayImage {
        let b = self.header.block_size as usize;
        let bx = self.header.blocks_x();
        let grid = Grid::canonical(b);
        let mut out =
            GrayImage::constant(self.header.width as usize, self.header.height as usize, 0.0)
                .expect("valid dims");
        for (i, block) in self.blocks.iter().enumerate() {
            let origin = ((i / bx) * b, (i % bx) * b);
            out.paste(origin, b, b, &block.render(&grid));
        }
        out
    }
}

pub fn decode_stream(bytes: &[u8]) -> Result<DecodedStream> {
    let (header, coded) = deserialize(bytes)?;
    let params = DecodeParams::from_header(&header)?;
    let blocks = coded
        .iter()
        .map(|c| dequantize_block(c, &params))
        .collect::<Result<Vec<_>>>()?;
    Ok(DecodedStream { header, blocks })
}

pub fn decode_image(bytes: &[u8]) -> Result<GrayImage> {
    Ok(decode_stream(bytes)?.render())
}
