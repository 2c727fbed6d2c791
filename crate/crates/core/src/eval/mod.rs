//! Quality metrics, rate-distortion sweeps, timing and resampling.

pub mod bench;
pub mod metrics;
pub mod resample;
pub mod sweep;

pub use bench::{benchmark, median, BenchReport, BenchRow};
pub use metrics::{format_psnr, mse, psnr, psnr_from_mse, ssim};
pub use resample::{resample, resample_block, resample_grid, samples_per_block};
pub use sweep::{rd_sweep, write_rd_csv, RdRecord, SweepEntry};
