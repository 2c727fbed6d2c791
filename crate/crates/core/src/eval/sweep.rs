use std::io::Write;
use std::time::Instant;

use crate::codec::{analyze_image, code_analysis, decode_image, EncodeConfig, QuantSpec};
use crate::error::Result;
use crate::eval::metrics::{format_psnr, psnr, ssim};
use crate::image::GrayImage;

pub const CSV_HEADER: [&str; 6] = [
    "codec", "rate_bpp", "psnr_db", "ssim", "encode_s", "decode_s",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RdRecord {
    pub codec: String,
    pub rate_bpp: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub encode_s: f64,
    pub decode_s: f64,
}

/// One encoder in a sweep; its `quant` field is overridden by the sweep grid.
#[derive(Debug, Clone)]
pub struct SweepEntry<'a> {
    pub label: String,
    pub config: EncodeConfig<'a>,
}

/// Encodes and decodes `image` for every entry and quantizer setting.
///
/// Each entry fits its blocks once; the grid only changes quantization. With
/// `record_times` off both time columns are zero, which makes the CSV
/// reproducible byte for byte.
pub fn rd_sweep(
    image: &GrayImage,
    entries: &[SweepEntry<'_>],
    grid: &[QuantSpec],
    record_times: bool,
) -> Result<Vec<RdRecord>> {
    let mut records = Vec::with_capacity(entries.len() * grid.len());
    for entry in entries {
        let analysis = analyze_image(image, &entry.config)?;
        for spec in grid {
            let encoded = code_analysis(&analysis, spec, entry.config.refit)?;
            let start = Instant::now();
            let decoded = decode_image(&encoded.bytes)?;
            let decode_s = start.elapsed().as_secs_f64();
            let (encode_s, decode_s) = if record_times {
                ((analysis.elapsed + encoded.elapsed).as_secs_f64(), decode_s)
            } else {
                (0.0, 0.0)
            };
            records.push(RdRecord {
                codec: format!("{}/c{}e{}", entry.label, spec.center_bits, spec.expert_bits),
                rate_bpp: encoded.bpp,
                psnr_db: psnr(image, &decoded)?,
                ssim: ssim(image, &decoded)?,
                encode_s,
                decode_s,
            });
        }
    }
    Ok(records)
}

/// Header plus one row per record, numbers with six decimals.
pub fn write_rd_csv<W: Write>(records: &[RdRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.codec.clone(),
            format!("{:.6}", r.rate_bpp),
            format_psnr(r.psnr_db),
            format!("{:.6}", r.ssim),
            format!("{:.6}", r.encode_s),
            format!("{:.6}", r.decode_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}
