//! Rate-distortion sweep over the four quantizer settings, written as CSV to
//! stdout.

use smoe::codec::{BlockEncoder, EncodeConfig, QuantSpec};
use smoe::eval::{rd_sweep, write_rd_csv, SweepEntry};
use smoe::gd::GdConfig;
use smoe::synth::synthetic_image;

fn main() -> smoe::Result<()> {
    let image = synthetic_image(128, 128, 3);
    let entries = [SweepEntry {
        label: "smoe-gd".into(),
        config: EncodeConfig::new(BlockEncoder::Gd(GdConfig::default().with_iterations(300))),
    }];
    let records = rd_sweep(&image, &entries, &QuantSpec::sweep_grid(), true)?;
    write_rd_csv(&records, std::io::stdout().lock())
}
