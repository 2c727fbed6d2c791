//! Decodes a stream at 1x and at a larger scale by sampling the continuous
//! block models on a denser grid.

use smoe::codec::{decode_stream, encode_image, BlockEncoder, EncodeConfig};
use smoe::eval::resample;
use smoe::gd::GdConfig;
use smoe::synth::synthetic_image;
use smoe::write_pgm;

fn main() -> smoe::Result<()> {
    let scale: f64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(3.0);
    let image = synthetic_image(96, 64, 4);
    let cfg = EncodeConfig::new(BlockEncoder::Gd(GdConfig::default().with_iterations(400)));
    let stream = decode_stream(&encode_image(&image, &cfg)?.bytes)?;

    let dir = std::env::temp_dir();
    for s in [1.0, scale] {
        let out = resample(&stream, s)?;
        let path = dir.join(format!("super_resolve_x{s}.pgm"));
        write_pgm(&path, &out)?;
        println!(
            "scale {s}: {}x{} -> {}",
            out.width(),
            out.height(),
            path.display()
        );
    }
    Ok(())
}
