//! Feed-forward encoders that predict SMoE parameters in one pass.

pub mod file;
pub mod layers;
pub mod net;
pub mod train;

pub use file::{
    load_dataset, load_model, model_from_bytes, model_to_bytes, pack_blocks, save_model,
    unpack_blocks,
};
pub use layers::{Activations, Architecture, LayerSpec, Shape};
pub use net::{
    backward, bottleneck_gradient, bottleneck_to_model, desk_layers, full_layers,
    mirrored_decoder_layers, predict_block_model, AeMode, AeModel, EncoderNet, Network,
};
pub use train::{train, train_model, TrainConfig, TrainOutcome};
