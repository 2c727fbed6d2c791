//! Median encode and decode times of gradient descent against an untrained
//! desk-scale network; network speed does not depend on its weights.

use smoe::codec::{BlockEncoder, EncodeConfig};
use smoe::eval::benchmark;
use smoe::gd::GdConfig;
use smoe::neural::EncoderNet;
use smoe::synth::synthetic_image;

fn main() -> smoe::Result<()> {
    let image = synthetic_image(128, 128, 6);
    let net = EncoderNet::desk_default(16, 4, 0)?;
    let entries = [
        (
            "smoe-gd".to_string(),
            EncodeConfig::new(BlockEncoder::Gd(GdConfig::default().with_iterations(1000))),
        ),
        (
            "smoe-ae".to_string(),
            EncodeConfig::new(BlockEncoder::Neural(&net)),
        ),
    ];
    let report = benchmark(&image, &entries, 3)?;
    for row in &report.rows {
        println!(
            "{:8} encode {:.4} s  decode {:.4} s  {:.4} bpp",
            row.label, row.encode_s, row.decode_s, row.bpp
        );
    }
    if let Some(x) = report.speedup("smoe-gd", "smoe-ae") {
        println!("speedup {x:.0}x");
    }
    Ok(())
}
