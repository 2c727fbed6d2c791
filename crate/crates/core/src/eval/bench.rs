use std::time::{Duration, Instant};

use crate::codec::{decode_image, encode_image, EncodeConfig};
use crate::error::{Error, Result};
use crate::image::GrayImage;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub label: String,
    /// Median wall-clock seconds.
    pub encode_s: f64,
    pub decode_s: f64,
    pub bpp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub repetitions: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, label: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Encode-time ratio `slow / fast`.
    pub fn speedup(&self, slow: &str, fast: &str) -> Option<f64> {
        Some(self.row(slow)?.encode_s / self.row(fast)?.encode_s)
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Times full encodes and decodes of `image`, one configuration at a time.
pub fn benchmark(
    image: &GrayImage,
    entries: &[(String, EncodeConfig<'_>)],
    repetitions: usize,
) -> Result<BenchReport> {
    if repetitions < 3 {
        return Err(Error::config(format!(
            "benchmark needs at least 3 repetitions, got {repetitions}"
        )));
    }
    let mut rows = Vec::with_capacity(entries.len());
    for (label, cfg) in entries {
        let mut enc = Vec::with_capacity(repetitions);
        let mut dec = Vec::with_capacity(repetitions);
        let mut bpp = 0.0;
        for _ in 0..repetitions {
            let start = Instant::now();
            let encoded = encode_image(image, cfg)?;
            enc.push(start.elapsed());
            bpp = encoded.bpp;
            let start = Instant::now();
            decode_image(&encoded.bytes)?;
            dec.push(start.elapsed());
        }
        let secs = |v: Vec<Duration>| v.iter().map(Duration::as_secs_f64).collect::<Vec<_>>();
        rows.push(BenchRow {
            label: label.clone(),
            encode_s: median(&mut secs(enc)),
            decode_s: median(&mut secs(dec)),
            bpp,
        });
    }
    Ok(BenchReport { repetitions, rows })
}
