//! Encodes a PGM (or a synthetic image) with SMoE-GD and writes the stream
//! and the decoded image next to the system temp directory.
//!
//! `cargo run --release --example compress_image -- [input.pgm] [iterations]`

use smoe::codec::{decode_image, encode_image, BlockEncoder, EncodeConfig};
use smoe::eval::{format_psnr, psnr, ssim};
use smoe::gd::GdConfig;
use smoe::synth::synthetic_image;
use smoe::{read_pgm, write_pgm};

fn main() -> smoe::Result<()> {
    let mut args = std::env::args().skip(1);
    let image = match args.next() {
        Some(path) => read_pgm(path)?,
        None => synthetic_image(128, 96, 1),
    };
    let iterations = args.next().and_then(|s| s.parse().ok()).unwrap_or(500);

    let cfg = EncodeConfig::new(BlockEncoder::Gd(
        GdConfig::default().with_iterations(iterations),
    ));
    let encoded = encode_image(&image, &cfg)?;
    let decoded = decode_image(&encoded.bytes)?;

    let dir = std::env::temp_dir();
    std::fs::write(dir.join("compress_image.smoe"), &encoded.bytes)?;
    write_pgm(dir.join("compress_image.pgm"), &decoded)?;
    println!(
        "{} textured / {} flat blocks, {} bytes, {:.4} bpp, psnr {} dB, ssim {:.4}, encode {:.2} s",
        encoded.textured_blocks,
        encoded.flat_blocks,
        encoded.bytes.len(),
        encoded.bpp,
        format_psnr(psnr(&image, &decoded)?),
        ssim(&image, &decoded)?,
        encoded.elapsed.as_secs_f64()
    );
    println!("wrote {}", dir.join("compress_image.smoe").display());
    Ok(())
}
