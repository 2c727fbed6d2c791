//! Trains the desk-scale SMoE autoencoder on synthetic blocks, saves it and
//! compares it with per-block gradient descent on held-out blocks.

use smoe::eval::psnr_from_mse;
use smoe::gd::{fit_block, GdConfig};
use smoe::model::mse_loss;
use smoe::neural::{desk_layers, load_model, predict_block_model, save_model, train, TrainConfig};
use smoe::synth::block_dataset;
use smoe::DEFAULT_BANDWIDTH;

fn main() -> smoe::Result<()> {
    let train_set = block_dataset(2000, 16, 1);
    let held_out = block_dataset(50, 16, 2);
    let cfg = TrainConfig {
        epochs: 15,
        learning_rate: 1e-3,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let outcome = train(&train_set, &cfg, desk_layers(4))?;
    for (epoch, loss) in outcome.history.iter().enumerate() {
        println!("epoch {epoch:2}  loss {loss:.6}");
    }

    let path = std::env::temp_dir().join("train_autoencoder.smae");
    save_model(&outcome.model, &path)?;
    let net = load_model(&path)?.into_encoder();
    println!(
        "saved {} parameters to {}",
        net.param_count(),
        path.display()
    );

    let gd = GdConfig::default().with_iterations(1000);
    let (mut ae, mut fitted) = (0.0, 0.0);
    for block in &held_out {
        let predicted = predict_block_model(&net, block, 4, DEFAULT_BANDWIDTH, true)?;
        ae += psnr_from_mse(mse_loss(&predicted, block)).min(100.0);
        let model = fit_block(block, &gd, 4, DEFAULT_BANDWIDTH)?.model;
        fitted += psnr_from_mse(mse_loss(&model, block)).min(100.0);
    }
    let n = held_out.len() as f64;
    println!(
        "held-out mean psnr: autoencoder {:.2} dB, gradient descent {:.2} dB",
        ae / n,
        fitted / n
    );
    Ok(())
}
