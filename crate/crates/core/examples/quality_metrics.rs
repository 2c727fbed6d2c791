//! PSNR and SSIM of two PGM files, or of a synthetic image against noisy
//! copies of itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smoe::eval::{format_psnr, psnr, ssim};
use smoe::synth::synthetic_image;
use smoe::{read_pgm, GrayImage};

fn main() -> smoe::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let [reference, test] = args.as_slice() {
        let (a, b) = (read_pgm(reference)?, read_pgm(test)?);
        println!(
            "psnr={} ssim={:.6}",
            format_psnr(psnr(&a, &b)?),
            ssim(&a, &b)?
        );
        return Ok(());
    }
    let clean = synthetic_image(64, 64, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for amplitude in [0.0, 0.01, 0.03, 0.1] {
        let noisy = GrayImage::from_fn(64, 64, |r, c| {
            (clean.get(r, c) + amplitude * rng.random_range(-1.0..1.0)).clamp(0.0, 1.0)
        });
        println!(
            "noise {amplitude:<5} psnr {:>9} dB  ssim {:.4}",
            format_psnr(psnr(&clean, &noisy)?),
            ssim(&clean, &noisy)?
        );
    }
    Ok(())
}
