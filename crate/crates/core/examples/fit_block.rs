//! Fits four kernels to a synthetic ramp and a synthetic edge and prints the
//! fitted models.

use smoe::eval::psnr_from_mse;
use smoe::gd::{fit_block, GdConfig};
use smoe::model::mse_loss;
use smoe::synth::{edge_block, gradient_block};
use smoe::DEFAULT_BANDWIDTH;

fn main() -> smoe::Result<()> {
    let blocks = [
        ("ramp", gradient_block(16, 0.6, 0.2, 0.7)),
        ("edge", edge_block(16, 0.6, 1.5, 0.25, 0.75)),
    ];
    for (name, block) in blocks {
        let fit = fit_block(&block, &GdConfig::default(), 4, DEFAULT_BANDWIDTH)?;
        println!(
            "{name}: best iteration {} of {}, psnr {:.2} dB",
            fit.best_iteration,
            fit.loss_trace.len() - 1,
            psnr_from_mse(mse_loss(&fit.model, &block))
        );
        for (c, m) in fit.model.centers().iter().zip(fit.model.experts()) {
            println!("  center ({:.3}, {:.3})  expert {:.3}", c[0], c[1], m);
        }
    }
    Ok(())
}
