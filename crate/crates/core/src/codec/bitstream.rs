//! The `.smoe` container: a fixed 16-byte header followed by bit-packed blocks.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "SMOE"
//!      4     1  version (1)
//!      5     2  image width, u16 little-endian
//!      7     2  image height, u16 little-endian
//!      9     1  block size B
//!     10     1  kernels per block K
//!     11     4  bandwidth S, f32 little-endian
//!     15     1  center bits (high nibble) | expert bits (low nibble)
//! ```
//!
//! Blocks follow in raster order over the padded block grid. Each block is a
//! 1-bit flag (1 = textured) and then either `K` center-row codes, `K`
//! center-column codes and `K` expert codes, or one 8-bit mean code. Codes are
//! written MSB-first without padding; the last byte is zero-padded.

use crate::codec::quant::QuantSpec;
use crate::codec::CodedBlock;
use crate::error::{Result, StreamError};

pub const STREAM_MAGIC: [u8; 4] = *b"SMOE";
pub const STREAM_VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamHeader {
    /// Original (uncropped) image width.
    pub width: u16,
    pub height: u16,
    pub block_size: u8,
    pub kernels: u8,
    pub bandwidth: f32,
    pub center_bits: u8,
    pub expert_bits: u8,
}

impl StreamHeader {
    pub fn blocks_x(&self) -> usize {
        (self.width as usize).div_ceil(self.block_size as usize)
    }

    pub fn blocks_y(&self) -> usize {
        (self.height as usize).div_ceil(self.block_size as usize)
    }

    pub fn block_count(&self) -> usize {
        self.blocks_x() * self.blocks_y()
    }

    pub fn quant_spec(&self) -> std::result::Result<QuantSpec, StreamError> {
        QuantSpec::new(self.center_bits, self.expert_bits)
            .map_err(|e| StreamError::InvalidHeader(e.to_string()))
    }

    fn validate(&self) -> std::result::Result<(), StreamError> {
        if self.block_size == 0 {
            return Err(StreamError::InvalidHeader("block size is zero".into()));
        }
        if self.kernels == 0 {
            return Err(StreamError::InvalidHeader("kernel count is zero".into()));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(StreamError::InvalidHeader(format!(
                "bandwidth {}",
                self.bandwidth
            )));
        }
        self.quant_spec()?;
        Ok(())
    }

    fn to_bytes(self) -> [u8; HEADER_BYTES] {
        let mut out = [0u8; HEADER_BYTES];
        out[..4].copy_from_slice(&STREAM_MAGIC);
        out[4] = STREAM_VERSION;
        out[5..7].copy_from_slice(&self.width.to_le_bytes());
        out[7..9].copy_from_slice(&self.height.to_le_bytes());
        out[9] = self.block_size;
        out[10] = self.kernels;
        out[11..15].copy_from_slice(&self.bandwidth.to_le_bytes());
        out[15] = (self.center_bits << 4) | (self.expert_bits & 0x0f);
        out
    }

    fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, StreamError> {
        if bytes.len() < 4 {
            return Err(StreamError::Truncated("header"));
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("four bytes");
        if magic != STREAM_MAGIC {
            return Err(StreamError::BadMagic(magic));
        }
        if bytes.len() < 5 {
            return Err(StreamError::Truncated("header"));
        }
        if bytes[4] != STREAM_VERSION {
            return Err(StreamError::UnsupportedVersion(bytes[4]));
        }
        if bytes.len() < HEADER_BYTES {
            return Err(StreamError::Truncated("header"));
        }
        let header = Self {
            width: u16::from_le_bytes([bytes[5], bytes[6]]),
            height: u16::from_le_bytes([bytes[7], bytes[8]]),
            block_size: bytes[9],
            kernels: bytes[10],
            bandwidth: f32::from_le_bytes(bytes[11..15].try_into().expect("four bytes")),
            center_bits: bytes[15] >> 4,
            expert_bits: bytes[15] & 0x0f,
        };
        header.validate()?;
        Ok(header)
    }
}

/// MSB-first bit packer.
#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    acc: u64,
    pending: u32,
    written: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, value: u32, bits: u8) {
        debug_assert!(bits <= 32 && (value as u64) < (1u64 << bits));
        self.acc = (self.acc << bits) | (value as u64 & ((1u64 << bits) - 1));
        self.pending += bits as u32;
        self.written += bits as u64;
        while self.pending >= 8 {
            self.pending -= 8;
            self.bytes.push((self.acc >> self.pending) as u8);
        }
        self.acc &= (1u64 << self.pending) - 1;
    }

    pub fn bits_written(&self) -> u64 {
        self.written
    }

    pub fn finish(mut self) -> Vec<u8> {
        if self.pending > 0 {
            self.bytes.push((self.acc << (8 - self.pending)) as u8);
        }
        self.bytes
    }
}

#[derive(Debug)]
pub struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn read(&mut self, bits: u8) -> Option<u32> {
        let end = self.pos + bits as usize;
        if end > self.data.len() * 8 {
            return None;
        }
        let mut value = 0u32;
        for i in self.pos..end {
            let bit = (self.data[i / 8] >> (7 - i % 8)) & 1;
            value = (value << 1) | bit as u32;
        }
        self.pos = end;
        Some(value)
    }

    pub fn position(&self) -> usize {
        self.pos
    }
}

/// Closed-form payload size of a block list (header excluded).
pub fn payload_bits(blocks: &[CodedBlock], spec: &QuantSpec, kernels: usize) -> u64 {
    blocks
        .iter()
        .map(|b| match b {
            CodedBlock::Textured { .. } => spec.textured_bits(kernels),
            CodedBlock::Flat { .. } => spec.flat_bits(),
        })
        .sum()
}

pub fn serialize(header: &StreamHeader, blocks: &[CodedBlock]) -> Result<Vec<u8>> {
    header.validate()?;
    if blocks.len() != header.block_count() {
        return Err(StreamError::BlockMismatch(format!(
            "header implies {} blocks, got {}",
            header.block_count(),
            blocks.len()
        ))
        .into());
    }
    let spec = header.quant_spec()?;
    let k = header.kernels as usize;
    let mut writer = BitWriter::new();
    for block in blocks {
        block.check(&spec, k)?;
        match block {
            CodedBlock::Textured { codes } => {
                writer.write(1, spec.flag_bits);
                for (i, &code) in codes.iter().enumerate() {
                    let bits = if i < 2 * k {
                        spec.center_bits
                    } else {
                        spec.expert_bits
                    };
                    writer.write(code, bits);
                }
            }
            CodedBlock::Flat { mean } => {
                writer.write(0, spec.flag_bits);
                writer.write(*mean, spec.mean_bits);
            }
        }
    }
    let mut out = header.to_bytes().to_vec();
    out.extend(writer.finish());
    Ok(out)
}

pub fn deserialize(bytes: &[u8]) -> Result<(StreamHeader, Vec<CodedBlock>)> {
    let header = StreamHeader::from_bytes(bytes)?;
    let spec = header.quant_spec()?;
    let k = header.kernels as usize;
    let mut reader = BitReader::new(&bytes[HEADER_BYTES..]);
    let truncated = || StreamError::Truncated("block payload");
    let mut blocks = Vec::with_capacity(header.block_count());
    for _ in 0..header.block_count() {
        let flag = reader.read(spec.flag_bits).ok_or_else(truncated)?;
        if flag == 1 {
            let mut codes = Vec::with_capacity(3 * k);
            for i in 0..3 * k {
                let bits = if i < 2 * k {
                    spec.center_bits
                } else {
                    spec.expert_bits
                };
                codes.push(reader.read(bits).ok_or_else(truncated)?);
            }
            blocks.push(CodedBlock::Textured { codes });
        } else {
            blocks.push(CodedBlock::Flat {
                mean: reader.read(spec.mean_bits).ok_or_else(truncated)?,
            });
        }
    }
    Ok((header, blocks))
}
