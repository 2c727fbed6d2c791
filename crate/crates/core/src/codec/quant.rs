//! Uniform mid-tread quantization of `[0, 1]` parameters.

use crate::error::{Error, Result};

/// Bits per block-type flag.
pub const FLAG_BITS: u8 = 1;
/// Bits for the mean of a non-textured block.
pub const MEAN_BITS: u8 = 8;

/// Bit allocation for coded blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantSpec {
    pub center_bits: u8,
    pub expert_bits: u8,
    pub mean_bits: u8,
    pub flag_bits: u8,
}

impl QuantSpec {
    pub fn new(center_bits: u8, expert_bits: u8) -> Result<Self> {
        let spec = Self {
            center_bits,
            expert_bits,
            mean_bits: MEAN_BITS,
            flag_bits: FLAG_BITS,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, bits) in [("center", self.center_bits), ("expert", self.expert_bits)] {
            if !(1..=8).contains(&bits) {
                return Err(Error::config(format!(
                    "{name} bits must be in 1..=8, got {bits}"
                )));
            }
        }
        if self.mean_bits != MEAN_BITS || self.flag_bits != FLAG_BITS {
            return Err(Error::config("mean bits are fixed at 8 and flag bits at 1"));
        }
        Ok(())
    }

    /// Payload bits of one textured block with `kernels` kernels, flag included.
    pub fn textured_bits(&self, kernels: usize) -> u64 {
        self.flag_bits as u64
            + kernels as u64 * (2 * self.center_bits as u64 + self.expert_bits as u64)
    }

    /// Payload bits of one non-textured block, flag included.
    pub fn flat_bits(&self) -> u64 {
        (self.flag_bits + self.mean_bits) as u64
    }

    /// The four allocations swept in rate-distortion runs.
    pub fn sweep_grid() -> [QuantSpec; 4] {
        [(3, 4), (3, 5), (4, 4), (4, 5)].map(|(c, e)| QuantSpec::new(c, e).expect("valid grid"))
    }
}

impl Default for QuantSpec {
    fn default() -> Self {
        Self::new(3, 4).expect("valid default")
    }
}

fn levels(bits: u8) -> f64 {
    ((1u32 << bits) - 1) as f64
}

/// `round(value * (2^bits - 1))`, rounding halves away from zero.
pub fn quantize_uniform(value: f64, bits: u8) -> Result<u32> {
    if !(1..=16).contains(&bits) {
        return Err(Error::config(format!("unsupported bit width {bits}")));
    }
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::input(format!(
            "cannot quantize {value}: outside [0, 1]"
        )));
    }
    Ok((value * levels(bits)).round() as u32)
}

pub fn dequantize_uniform(code: u32, bits: u8) -> f64 {
    code as f64 / levels(bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantizer_examples() {
        for bits in 1..=8 {
            assert_eq!(quantize_uniform(0.0, bits).unwrap(), 0);
        }
        assert_eq!(quantize_uniform(1.0, 3).unwrap(), 7);
        assert_eq!(quantize_uniform(0.5, 3).unwrap(), 4);
        assert!((dequantize_uniform(4, 3) - 4.0 / 7.0).abs() < 1e-15);
        assert_eq!(quantize_uniform(0.5, 8).unwrap(), 128);
    }

    #[test]
    fn quantizer_rejects_out_of_range() {
        assert!(quantize_uniform(-0.01, 4).is_err());
        assert!(quantize_uniform(1.01, 4).is_err());
        assert!(quantize_uniform(f64::NAN, 4).is_err());
    }

    #[test]
    fn round_trip_error_bound() {
        for bits in 1..=8u8 {
            let bound = 0.5 / levels(bits) + 1e-15;
            for i in 0..=1000 {
                let v = i as f64 / 1000.0;
                let q = quantize_uniform(v, bits).unwrap();
                assert!(q < (1 << bits));
                assert!((dequantize_uniform(q, bits) - v).abs() <= bound);
            }
        }
    }

    #[test]
    fn spec_validation_and_bit_counts() {
        assert!(QuantSpec::new(0, 4).is_err());
        assert!(QuantSpec::new(3, 9).is_err());
        let spec = QuantSpec::new(3, 4).unwrap();
        assert_eq!(spec.textured_bits(4), 41);
        assert_eq!(spec.flat_bits(), 9);
        let bad = QuantSpec {
            mean_bits: 7,
            ..spec
        };
        assert!(bad.validate().is_err());
    }
}
