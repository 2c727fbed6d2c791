use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{loss_and_gradients_raw, BlockModel, PixelBlock};
use crate::neural::layers::{Activations, Architecture, LayerSpec, Shape};
use crate::ols::refit_experts;

/// Which decoder sits behind the bottleneck during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AeMode {
    /// Fixed SMoE reconstruction of the bottleneck parameters.
    SmoeAe,
    /// Trainable dense decoder mirroring the encoder.
    CAe,
}

/// Layer stack plus `f32` weights. An `f64` copy of the weights is kept for
/// evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    weights: Vec<f32>,
    params: Vec<f64>,
}

impl Network {
    pub fn from_weights(arch: Architecture, weights: Vec<f32>) -> Result<Self> {
        if weights.len() != arch.param_count() {
            return Err(Error::config(format!(
                "architecture needs {} weights, got {}",
                arch.param_count(),
                weights.len()
            )));
        }
        let params = weights.iter().map(|w| *w as f64).collect();
        Ok(Self {
            arch,
            weights,
            params,
        })
    }

    /// Rounds `params` to `f32` storage.
    pub fn from_params(arch: Architecture, params: &[f64]) -> Result<Self> {
        Self::from_weights(arch, params.iter().map(|p| *p as f32).collect())
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.arch
            .forward(&self.params, input)
            .values
            .pop()
            .expect("output")
    }
}

/// Feed-forward encoder mapping a `B x B` block to `3K` bottleneck values in
/// `[0, 1]`, ordered as all center rows, all center columns, then all experts.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderNet {
    net: Network,
    block_size: usize,
    kernels: usize,
    seed: u64,
}

/// Desk-scale encoder: `B^2 -> 128 -> 64 -> 32 -> 3K` with ReLU and a final sigmoid.
pub fn desk_layers(kernels: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Flatten,
        LayerSpec::Dense { outputs: 128 },
        LayerSpec::Relu,
        LayerSpec::Dense { outputs: 64 },
        LayerSpec::Relu,
        LayerSpec::Dense { outputs: 32 },
        LayerSpec::Relu,
        LayerSpec::Dense {
            outputs: 3 * kernels,
        },
        LayerSpec::Sigmoid,
    ]
}

/// Full-size encoder: six same-padded 3x3 convolutions (16 to 512 filters)
/// followed by dense layers of 512, 256, 128, 64 and `3K` outputs.
pub fn full_layers(kernels: usize) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    for filters in [16, 32, 64, 128, 256, 512] {
        layers.push(LayerSpec::Conv3x3 { filters });
        layers.push(LayerSpec::Relu);
    }
    layers.push(LayerSpec::Flatten);
    for outputs in [512, 256, 128, 64] {
        layers.push(LayerSpec::Dense { outputs });
        layers.push(LayerSpec::Relu);
    }
    layers.push(LayerSpec::Dense {
        outputs: 3 * kernels,
    });
    layers.push(LayerSpec::Sigmoid);
    layers
}

/// Dense decoder mirroring the dense part of `encoder`, ending in `B^2`
/// sigmoid outputs.
pub fn mirrored_decoder_layers(encoder: &[LayerSpec], block_size: usize) -> Vec<LayerSpec> {
    let dense: Vec<usize> = encoder
        .iter()
        .filter_map(|l| match l {
            LayerSpec::Dense { outputs } => Some(*outputs),
            _ => None,
        })
        .collect();
    let mut layers = Vec::new();
    for &outputs in dense.iter().rev().skip(1) {
        layers.push(LayerSpec::Dense { outputs });
        layers.push(LayerSpec::Relu);
    }
    layers.push(LayerSpec::Dense {
        outputs: block_size * block_size,
    });
    layers.push(LayerSpec::Sigmoid);
    layers
}

fn encoder_arch(block_size: usize, layers: Vec<LayerSpec>) -> Result<(Architecture, usize)> {
    if block_size == 0 {
        return Err(Error::config("block size must be positive"));
    }
    if layers.last() != Some(&LayerSpec::Sigmoid) {
        return Err(Error::config("encoder must end with a sigmoid"));
    }
    let arch = Architecture::new(
        Shape::Spatial {
            channels: 1,
            height: block_size,
            width: block_size,
        },
        layers,
    )?;
    let out = arch.output_shape();
    match out {
        Shape::Flat(n) if n > 0 && n % 3 == 0 => Ok((arch, n / 3)),
        _ => Err(Error::config(format!(
            "encoder output {out:?} is not 3K values"
        ))),
    }
}

impl EncoderNet {
    /// Freshly initialized network.
    pub fn new(block_size: usize, layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let (arch, kernels) = encoder_arch(block_size, layers)?;
        let params = arch.init_params(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self {
            net: Network::from_params(arch, &params)?,
            block_size,
            kernels,
            seed,
        })
    }

    pub fn desk_default(block_size: usize, kernels: usize, seed: u64) -> Result<Self> {
        Self::new(block_size, desk_layers(kernels), seed)
    }

    pub fn from_weights(
        block_size: usize,
        layers: Vec<LayerSpec>,
        weights: Vec<f32>,
        seed: u64,
    ) -> Result<Self> {
        let (arch, kernels) = encoder_arch(block_size, layers)?;
        Ok(Self {
            net: Network::from_weights(arch, weights)?,
            block_size,
            kernels,
            seed,
        })
    }

    pub(crate) fn with_params(&self, params: &[f64]) -> Result<Self> {
        Ok(Self {
            net: Network::from_params(self.net.arch.clone(), params)?,
            ..self.clone()
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn layers(&self) -> &[LayerSpec] {
        self.net.arch.layers()
    }

    pub fn weights(&self) -> &[f32] {
        self.net.weights()
    }

    pub fn param_count(&self) -> usize {
        self.net.arch.param_count()
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn kernels(&self) -> usize {
        self.kernels
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn check_block(&self, block: &PixelBlock) -> Result<()> {
        if block.size() != self.block_size {
            return Err(Error::config(format!(
                "network expects {0}x{0} blocks, got {1}x{1}",
                self.block_size,
                block.size()
            )));
        }
        Ok(())
    }

    /// Bottleneck values for `block`.
    pub fn forward(&self, block: &PixelBlock) -> Result<Vec<f64>> {
        self.check_block(block)?;
        Ok(self.net.forward(block.pixels()))
    }
}

/// Interprets `3K` bottleneck values as a block model.
pub fn bottleneck_to_model(values: &[f64], bandwidth: f64) -> Result<BlockModel> {
    if values.is_empty() || !values.len().is_multiple_of(3) {
        return Err(Error::config(format!(
            "bottleneck of {} values is not 3K",
            values.len()
        )));
    }
    let k = values.len() / 3;
    let centers = (0..k).map(|i| [values[i], values[k + i]]).collect();
    BlockModel::clamped(centers, values[2 * k..].to_vec(), bandwidth)
}

/// Block loss and its gradient with respect to the bottleneck values, treating
/// them as free variables.
pub fn bottleneck_gradient(values: &[f64], target: &PixelBlock, bandwidth: f64) -> (f64, Vec<f64>) {
    let k = values.len() / 3;
    let centers: Vec<[f64; 2]> = (0..k).map(|i| [values[i], values[k + i]]).collect();
    let mut scratch = vec![0.0; k];
    let mut gc = vec![[0.0; 2]; k];
    let mut ge = vec![0.0; k];
    let loss = loss_and_gradients_raw(
        &centers,
        &values[2 * k..],
        bandwidth,
        target,
        &mut scratch,
        &mut gc,
        &mut ge,
    );
    let mut grad = vec![0.0; 3 * k];
    for i in 0..k {
        grad[i] = gc[i][0];
        grad[k + i] = gc[i][1];
        grad[2 * k + i] = ge[i];
    }
    (loss, grad)
}

/// Maps a block to SMoE parameters with a trained encoder, optionally
/// replacing the predicted experts by least-squares experts.
pub fn predict_block_model(
    net: &EncoderNet,
    block: &PixelBlock,
    kernels: usize,
    bandwidth: f64,
    use_ols: bool,
) -> Result<BlockModel> {
    if kernels != net.kernels() {
        return Err(Error::config(format!(
            "network predicts {} kernels, {kernels} requested",
            net.kernels()
        )));
    }
    let model = bottleneck_to_model(&net.forward(block)?, bandwidth)?;
    if use_ols {
        refit_experts(block, &model)
    } else {
        Ok(model)
    }
}

/// An encoder together with the decoder it is trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct AeModel {
    mode: AeMode,
    bandwidth: f64,
    encoder: EncoderNet,
    decoder: Option<Network>,
}

impl AeModel {
    /// Wraps `encoder`; C-AE mode adds a mirrored decoder initialized from `seed`.
    pub fn new(mode: AeMode, encoder: EncoderNet, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::config(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        let decoder = match mode {
            AeMode::SmoeAe => None,
            AeMode::CAe => {
                let layers = mirrored_decoder_layers(encoder.layers(), encoder.block_size());
                let arch = Architecture::new(Shape::Flat(3 * encoder.kernels()), layers)?;
                let seed = encoder.seed().wrapping_add(1);
                let params = arch.init_params(&mut ChaCha8Rng::seed_from_u64(seed));
                Some(Network::from_params(arch, &params)?)
            }
        };
        Ok(Self {
            mode,
            bandwidth,
            encoder,
            decoder,
        })
    }

    pub(crate) fn from_parts(
        mode: AeMode,
        bandwidth: f64,
        encoder: EncoderNet,
        decoder: Option<Network>,
    ) -> Result<Self> {
        match (mode, &decoder) {
            (AeMode::SmoeAe, None) => {}
            (AeMode::CAe, Some(d)) => {
                let arch = d.architecture();
                if arch.input_shape() != Shape::Flat(3 * encoder.kernels())
                    || arch.output_shape()
                        != Shape::Flat(encoder.block_size() * encoder.block_size())
                {
                    return Err(Error::config("decoder shape does not match encoder"));
                }
            }
            _ => return Err(Error::config("decoder presence does not match mode")),
        }
        Ok(Self {
            mode,
            bandwidth,
            encoder,
            decoder,
        })
    }

    pub fn mode(&self) -> AeMode {
        self.mode
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn encoder(&self) -> &EncoderNet {
        &self.encoder
    }

    pub fn decoder(&self) -> Option<&Network> {
        self.decoder.as_ref()
    }

    pub fn into_encoder(self) -> EncoderNet {
        self.encoder
    }

    /// Trainable parameters: encoder, then decoder (C-AE only).
    pub fn param_count(&self) -> usize {
        self.encoder.param_count()
            + self
                .decoder
                .as_ref()
                .map_or(0, |d| d.architecture().param_count())
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.encoder.network().params().to_vec();
        if let Some(d) = &self.decoder {
            p.extend_from_slice(d.params());
        }
        p
    }

    /// Copy of the model with `params` (rounded to `f32`).
    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        if params.len() != self.param_count() {
            return Err(Error::config("parameter vector length mismatch"));
        }
        let n = self.encoder.param_count();
        let encoder = self.encoder.with_params(&params[..n])?;
        let decoder = match &self.decoder {
            Some(d) => Some(Network::from_params(
                d.architecture().clone(),
                &params[n..],
            )?),
            None => None,
        };
        Ok(Self {
            encoder,
            decoder,
            ..self.clone()
        })
    }

    /// Decoded `B x B` reconstruction of `block`.
    pub fn reconstruct(&self, block: &PixelBlock) -> Result<Vec<f64>> {
        let z = self.encoder.forward(block)?;
        match &self.decoder {
            None => {
                let model = bottleneck_to_model(&z, self.bandwidth)?;
                Ok(crate::model::reconstruct(
                    &model,
                    &crate::model::Grid::canonical(block.size()),
                ))
            }
            Some(d) => Ok(d.forward(&z)),
        }
    }

    /// Reconstruction loss of `block` against `target` under `params`.
    pub fn loss(&self, params: &[f64], block: &PixelBlock, target: &PixelBlock) -> f64 {
        self.evaluate(params, block, target, false).0
    }

    /// Reconstruction loss and its gradient over all trainable parameters.
    pub fn loss_and_gradient(
        &self,
        params: &[f64],
        block: &PixelBlock,
        target: &PixelBlock,
    ) -> (f64, Vec<f64>) {
        self.evaluate(params, block, target, true)
    }

    fn evaluate(
        &self,
        params: &[f64],
        block: &PixelBlock,
        target: &PixelBlock,
        with_grad: bool,
    ) -> (f64, Vec<f64>) {
        let n_enc = self.encoder.param_count();
        let enc_arch = self.encoder.network().architecture();
        let (enc_params, dec_params) = params.split_at(n_enc);
        let acts: Activations = enc_arch.forward(enc_params, block.pixels());
        let z = acts.output();
        let mut grad = if with_grad {
            vec![0.0; params.len()]
        } else {
            Vec::new()
        };
        let (loss, head) = match &self.decoder {
            None => bottleneck_gradient(z, target, self.bandwidth),
            Some(dec) => {
                let arch = dec.architecture();
                let dacts = arch.forward(dec_params, z);
                let out = dacts.output();
                let n = out.len() as f64;
                let loss = out
                    .iter()
                    .zip(target.pixels())
                    .map(|(y, t)| (y - t) * (y - t))
                    .sum::<f64>()
                    / n;
                if !with_grad {
                    return (loss, grad);
                }
                let gout: Vec<f64> = out
                    .iter()
                    .zip(target.pixels())
                    .map(|(y, t)| 2.0 * (y - t) / n)
                    .collect();
                let gz = arch.backward(dec_params, &dacts, &gout, &mut grad[n_enc..]);
                (loss, gz)
            }
        };
        if with_grad {
            enc_arch.backward(enc_params, &acts, &head, &mut grad[..n_enc]);
        }
        (loss, grad)
    }
}

/// Gradient of the reconstruction loss of `block` against `target` with
/// respect to every trainable weight of `model`.
pub fn backward(model: &AeModel, block: &PixelBlock, target: &PixelBlock) -> Result<Vec<f64>> {
    model.encoder.check_block(block)?;
    model.encoder.check_block(target)?;
    Ok(model.loss_and_gradient(&model.params(), block, target).1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_network_size() {
        let net = encoder_arch(16, full_layers(4)).unwrap().0;
        assert_eq!(net.param_count(), 68_855_116);
    }

    #[test]
    fn zero_weights_give_half() {
        let layers = desk_layers(4);
        let arch = encoder_arch(16, layers.clone()).unwrap().0;
        let net = EncoderNet::from_weights(16, layers, vec![0.0; arch.param_count()], 0).unwrap();
        let block = PixelBlock::from_fn(16, |r, c| ((r + c) % 5) as f64 / 4.0).unwrap();
        assert_eq!(net.forward(&block).unwrap(), vec![0.5; 12]);
    }

    #[test]
    fn forward_is_deterministic_and_bounded() {
        let net = EncoderNet::desk_default(16, 4, 11).unwrap();
        let block = PixelBlock::from_fn(16, |r, _| r as f64 / 15.0).unwrap();
        let a = net.forward(&block).unwrap();
        assert_eq!(a, net.forward(&block).unwrap());
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(net.forward(&PixelBlock::constant(8, 0.5).unwrap()).is_err());
    }

    #[test]
    fn encoder_validation() {
        assert!(EncoderNet::new(
            16,
            vec![LayerSpec::Flatten, LayerSpec::Dense { outputs: 12 }],
            0
        )
        .is_err());
        assert!(EncoderNet::new(
            16,
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { outputs: 10 },
                LayerSpec::Sigmoid
            ],
            0
        )
        .is_err());
        assert!(EncoderNet::from_weights(16, desk_layers(4), vec![0.0; 3], 0).is_err());
    }

    #[test]
    fn modes_share_encoder_size() {
        let enc = EncoderNet::desk_default(16, 4, 1).unwrap();
        let smoe = AeModel::new(AeMode::SmoeAe, enc.clone(), 0.0035).unwrap();
        let cae = AeModel::new(AeMode::CAe, enc, 0.0035).unwrap();
        assert_eq!(smoe.encoder().param_count(), cae.encoder().param_count());
        let dec = cae.decoder().unwrap().architecture();
        assert_eq!(dec.input_shape(), Shape::Flat(12));
        assert_eq!(dec.output_shape(), Shape::Flat(256));
        assert_eq!(
            dec.layers()
                .iter()
                .filter(|l| matches!(l, LayerSpec::Dense { .. }))
                .count(),
            4
        );
    }

    #[test]
    fn frozen_bottleneck_matches_core_gradients() {
        let target = PixelBlock::from_fn(16, |r, c| if r > c { 0.9 } else { 0.2 }).unwrap();
        let z = [
            0.1, 0.4, 0.7, 0.9, 0.2, 0.8, 0.3, 0.6, 0.15, 0.55, 0.35, 0.95,
        ];
        let (_, grad) = bottleneck_gradient(&z, &target, 0.0035);
        let model = bottleneck_to_model(&z, 0.0035).unwrap();
        let core = crate::model::loss_gradients(&model, &target);
        for i in 0..4 {
            assert_eq!(grad[i], core.centers[i][0]);
            assert_eq!(grad[4 + i], core.centers[i][1]);
            assert_eq!(grad[8 + i], core.experts[i]);
        }
    }

    #[test]
    fn untrained_net_prediction_is_finite() {
        let layers = desk_layers(4);
        let arch = encoder_arch(16, layers.clone()).unwrap().0;
        let net = EncoderNet::from_weights(16, layers, vec![0.0; arch.param_count()], 0).unwrap();
        let block = PixelBlock::from_fn(16, |r, c| (r * c) as f64 / 225.0).unwrap();
        let m = predict_block_model(&net, &block, 4, 0.0035, true).unwrap();
        assert!(m.centers().iter().all(|c| *c == [0.5, 0.5]));
        assert!(m.experts().iter().all(|e| e.is_finite()));
        assert!(predict_block_model(&net, &block, 3, 0.0035, true).is_err());
    }

    #[test]
    fn ols_prediction_on_constant_block() {
        let net = EncoderNet::desk_default(16, 4, 5).unwrap();
        let block = PixelBlock::constant(16, 0.3).unwrap();
        let m = predict_block_model(&net, &block, 4, 0.0035, true).unwrap();
        assert!(m.experts().iter().all(|e| (e - 0.3).abs() < 1e-6));
    }
}
