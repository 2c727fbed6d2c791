//! Per-block iterative fitting of SMoE parameters by gradient descent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{clamp_unit, loss_and_gradients_raw, BlockModel, PixelBlock};
use crate::optim::Adam;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    GradientDescent,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    /// Centers on a centered `sqrt(K) x sqrt(K)` lattice.
    UniformGrid,
    /// Centers drawn uniformly from `[0, 1]^2`.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub init: InitStrategy,
    pub seed: u64,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            learning_rate: 1e-2,
            optimizer: OptimizerKind::Adam,
            init: InitStrategy::UniformGrid,
            seed: 0,
        }
    }
}

impl GdConfig {
    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("iterations must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Initial model for `block`: centers from `strategy`, experts set to the mean
/// of the pixels nearest to each center.
pub fn init_model(
    block: &PixelBlock,
    kernels: usize,
    bandwidth: f64,
    strategy: InitStrategy,
    seed: u64,
) -> Result<BlockModel> {
    if kernels == 0 {
        return Err(Error::config("kernel count must be at least 1"));
    }
    let centers = match strategy {
        InitStrategy::UniformGrid => {
            let side = (kernels as f64).sqrt().round() as usize;
            if side * side != kernels {
                return Err(Error::config(format!(
                    "uniform-grid initialization needs a square kernel count, got {kernels}"
                )));
            }
            let mut centers = Vec::with_capacity(kernels);
            for r in 0..side {
                for c in 0..side {
                    centers.push([
                        (r as f64 + 0.5) / side as f64,
                        (c as f64 + 0.5) / side as f64,
                    ]);
                }
            }
            centers
        }
        InitStrategy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..kernels)
                .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
                .collect()
        }
    };
    let experts = partition_means(block, &centers);
    BlockModel::new(centers, experts, bandwidth)
}

/// Mean luminance of the pixels closest to each center (normalized
/// coordinates). Empty cells fall back to the block mean.
fn partition_means(block: &PixelBlock, centers: &[[f64; 2]]) -> Vec<f64> {
    let b = block.size();
    let scale = if b > 1 { 1.0 / (b - 1) as f64 } else { 0.0 };
    let mut sums = vec![0.0; centers.len()];
    let mut counts = vec![0usize; centers.len()];
    for r in 0..b {
        for c in 0..b {
            let x = [r as f64 * scale, c as f64 * scale];
            let nearest = centers
                .iter()
                .map(|mu| (x[0] - mu[0]).powi(2) + (x[1] - mu[1]).powi(2))
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |best, (i, d)| if d < best.1 { (i, d) } else { best },
                )
                .0;
            sums[nearest] += block.get(r, c);
            counts[nearest] += 1;
        }
    }
    let mean = block.mean();
    sums.iter()
        .zip(&counts)
        .map(|(s, &n)| {
            if n == 0 {
                mean
            } else {
                clamp_unit(s / n as f64)
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Lowest-loss iterate seen during the run.
    pub model: BlockModel,
    /// Loss of the initial model followed by the loss after every step
    /// (`iterations + 1` entries).
    pub loss_trace: Vec<f64>,
    pub best_iteration: usize,
}

impl FitResult {
    pub fn best_loss(&self) -> f64 {
        self.loss_trace[self.best_iteration]
    }
}

/// Fits `K` kernels to `block` by minimizing the block MSE.
///
/// Parameters are clamped to `[0, 1]` after every step and the lowest-loss
/// iterate is returned.
pub fn fit_block(
    block: &PixelBlock,
    config: &GdConfig,
    kernels: usize,
    bandwidth: f64,
) -> Result<FitResult> {
    config.validate()?;
    let init = init_model(block, kernels, bandwidth, config.init, config.seed)?;
    Ok(fit_from(block, config, init))
}

/// Runs the optimizer from an explicit starting model.
pub fn fit_from(block: &PixelBlock, config: &GdConfig, init: BlockModel) -> FitResult {
    let k = init.kernel_count();
    let s = init.bandwidth();
    // layout: [row_1, col_1, ..., row_K, col_K, m_1, ..., m_K]
    let mut params: Vec<f64> = init
        .centers()
        .iter()
        .flatten()
        .copied()
        .chain(init.experts().iter().copied())
        .collect();
    let mut grads = vec![0.0; 3 * k];
    let mut grad_centers = vec![[0.0; 2]; k];
    let mut grad_experts = vec![0.0; k];
    let mut scratch = vec![0.0; k];
    let mut centers = vec![[0.0; 2]; k];

    let mut adam = Adam::new(3 * k);
    let mut trace = Vec::with_capacity(config.iterations + 1);
    let mut best = (f64::INFINITY, 0usize, params.clone());

    for step in 0..=config.iterations {
        for (i, c) in centers.iter_mut().enumerate() {
            *c = [params[2 * i], params[2 * i + 1]];
        }
        let loss = loss_and_gradients_raw(
            &centers,
            &params[2 * k..],
            s,
            block,
            &mut scratch,
            &mut grad_centers,
            &mut grad_experts,
        );
        trace.push(loss);
        if loss < best.0 {
            best = (loss, step, params.clone());
        }
        if step == config.iterations {
            break;
        }
        for (i, g) in grad_centers.iter().enumerate() {
            grads[2 * i] = g[0];
            grads[2 * i + 1] = g[1];
        }
        grads[2 * k..].copy_from_slice(&grad_experts);
        match config.optimizer {
            OptimizerKind::Adam => adam.step(&mut params, &grads, config.learning_rate),
            OptimizerKind::GradientDescent => {
                for (p, g) in params.iter_mut().zip(&grads) {
                    *p -= config.learning_rate * g;
                }
            }
        }
        params.iter_mut().for_each(|p| *p = clamp_unit(*p));
    }

    let (_, best_iteration, p) = best;
    let model = BlockModel::new(
        (0..k).map(|i| [p[2 * i], p[2 * i + 1]]).collect(),
        p[2 * k..].to_vec(),
        s,
    )
    .expect("clamped parameters form a valid model");
    FitResult {
        model,
        loss_trace: trace,
        best_iteration,
    }
}
