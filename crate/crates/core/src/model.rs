//! The continuous SMoE regression model for a single block.
//!
//! A block is reconstructed as a soft-max gated blend of `K` constant experts.
//! Every kernel is an isotropic Gaussian with the same covariance `S I` over
//! block coordinates normalized to `[0, 1]^2`, so the gate of kernel `i` at
//! normalized position `x` is
//!
//! ```text
//! w_i(x) = exp(-|x - mu_i|^2 / 2S) / sum_j exp(-|x - mu_j|^2 / 2S)
//! ```
//!
//! Grid positions are pixel units `0..B-1` and centers are stored normalized;
//! evaluation maps centers to pixels as `mu_px = mu * (B - 1)` and uses the
//! equivalent pixel-unit rate from [`pixel_rate`]. Gradients are reported with
//! respect to the stored (normalized) parameters.

use crate::error::{Error, Result};

/// Default edge length of a coded block.
pub const DEFAULT_BLOCK_SIZE: usize = 16;
/// Default number of kernels per block.
pub const DEFAULT_KERNELS: usize = 4;
/// Default kernel bandwidth `S`, a variance in normalized block coordinates.
pub const DEFAULT_BANDWIDTH: f64 = 0.0035;

/// Coefficient `a` of the pixel-unit logit `-a |x_px - mu_px|^2` for bandwidth
/// `S` on blocks of edge `B`: `a = 1 / (2 S (B - 1)^2)`.
pub fn pixel_rate(bandwidth: f64, block_size: usize) -> f64 {
    let span = block_size.saturating_sub(1).max(1) as f64;
    1.0 / (2.0 * bandwidth * span * span)
}

/// A `B x B` grayscale block with luminance in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelBlock {
    pixels: Vec<f64>,
    size: usize,
    origin: (usize, usize),
}

impl PixelBlock {
    pub fn new(size: usize, pixels: Vec<f64>, origin: (usize, usize)) -> Result<Self> {
        if size == 0 {
            return Err(Error::input("block size must be positive"));
        }
        if pixels.len() != size * size {
            return Err(Error::input(format!(
                "block of size {size} needs {} pixels, got {}",
                size * size,
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::input(format!("pixel value {p} outside [0, 1]")));
        }
        Ok(Self {
            pixels,
            size,
            origin,
        })
    }

    pub fn constant(size: usize, value: f64) -> Result<Self> {
        Self::new(size, vec![value; size * size], (0, 0))
    }

    /// Builds a block by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(size * size);
        for r in 0..size {
            for c in 0..size {
                pixels.push(f(r, c));
            }
        }
        Self::new(size, pixels, (0, 0))
    }

    pub fn with_origin(mut self, origin: (usize, usize)) -> Self {
        self.origin = origin;
        self
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn origin(&self) -> (usize, usize) {
        self.origin
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.size + col]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// Population variance of the pixel values.
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.pixels
            .iter()
            .map(|p| (p - mean) * (p - mean))
            .sum::<f64>()
            / self.pixels.len() as f64
    }
}

/// Sample positions `(row, col)` in pixel units for a block of edge length `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    positions: Vec<[f64; 2]>,
    block_size: usize,
}

impl Grid {
    /// All integer positions of a `B x B` block in row-major order.
    pub fn canonical(block_size: usize) -> Self {
        let mut positions = Vec::with_capacity(block_size * block_size);
        for r in 0..block_size {
            for c in 0..block_size {
                positions.push([r as f64, c as f64]);
            }
        }
        Self {
            positions,
            block_size,
        }
    }

    /// An arbitrary set of positions inside `[0, B-1]^2`.
    pub fn new(block_size: usize, positions: Vec<[f64; 2]>) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::input("block size must be positive"));
        }
        let hi = (block_size - 1) as f64;
        if let Some(p) = positions
            .iter()
            .find(|p| !(0.0..=hi).contains(&p[0]) || !(0.0..=hi).contains(&p[1]))
        {
            return Err(Error::input(format!(
                "grid position {p:?} outside [0, {hi}]"
            )));
        }
        Ok(Self {
            positions,
            block_size,
        })
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }
}

/// Parameters of one block: `K` normalized centers, `K` experts and the
/// shared bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockModel {
    centers: Vec<[f64; 2]>,
    experts: Vec<f64>,
    bandwidth: f64,
}

impl BlockModel {
    pub fn new(centers: Vec<[f64; 2]>, experts: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::input("a block model needs at least one kernel"));
        }
        if centers.len() != experts.len() {
            return Err(Error::input(format!(
                "{} centers but {} experts",
                centers.len(),
                experts.len()
            )));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::input(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if let Some(c) = centers.iter().find(|c| !in_unit(c[0]) || !in_unit(c[1])) {
            return Err(Error::input(format!("center {c:?} outside [0, 1]^2")));
        }
        if let Some(m) = experts.iter().find(|m| !in_unit(**m)) {
            return Err(Error::input(format!("expert {m} outside [0, 1]")));
        }
        Ok(Self {
            centers,
            experts,
            bandwidth,
        })
    }

    /// Same as [`BlockModel::new`] but clamps centers and experts into `[0, 1]`.
    pub fn clamped(centers: Vec<[f64; 2]>, experts: Vec<f64>, bandwidth: f64) -> Result<Self> {
        let centers = centers
            .into_iter()
            .map(|[r, c]| [clamp_unit(r), clamp_unit(c)])
            .collect();
        let experts = experts.into_iter().map(clamp_unit).collect();
        Self::new(centers, experts, bandwidth)
    }

    pub fn kernel_count(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[[f64; 2]] {
        &self.centers
    }

    pub fn experts(&self) -> &[f64] {
        &self.experts
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Replaces the experts, clamping them into `[0, 1]`.
    pub fn with_experts(&self, experts: &[f64]) -> Result<Self> {
        Self::clamped(self.centers.clone(), experts.to_vec(), self.bandwidth)
    }

    /// Centers in pixel units for a block of edge length `block_size`.
    pub fn pixel_centers(&self, block_size: usize) -> Vec<[f64; 2]> {
        let scale = block_size.saturating_sub(1) as f64;
        self.centers
            .iter()
            .map(|[r, c]| [r * scale, c * scale])
            .collect()
    }
}

pub(crate) fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// A general (steered) Gaussian kernel in pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullKernel {
    pub center: [f64; 2],
    pub covariance: [[f64; 2]; 2],
}

impl FullKernel {
    /// Isotropic kernel with covariance `sigma2 * I`.
    pub fn isotropic(center: [f64; 2], sigma2: f64) -> Self {
        Self {
            center,
            covariance: [[sigma2, 0.0], [0.0, sigma2]],
        }
    }

    fn precision(&self) -> Result<[[f64; 2]; 2]> {
        let [[a, b], [c, d]] = self.covariance;
        if [a, b, c, d].iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidKernel(
                "covariance has non-finite entries".into(),
            ));
        }
        if (b - c).abs() > 1e-12 * (1.0 + b.abs().max(c.abs())) {
            return Err(Error::InvalidKernel("covariance is not symmetric".into()));
        }
        let det = a * d - b * c;
        // Both eigenvalues of a symmetric 2x2 matrix are positive iff a > 0 and det > 0.
        if !(a > 0.0 && det > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "covariance is not positive-definite (det = {det})"
            )));
        }
        Ok([[d / det, -b / det], [-c / det, a / det]])
    }
}

/// `exp(-1/2 (x - mu)^T Sigma^-1 (x - mu))` for a general Gaussian kernel.
pub fn gaussian_kernel(x: [f64; 2], kernel: &FullKernel) -> Result<f64> {
    let p = kernel.precision()?;
    let dx = [x[0] - kernel.center[0], x[1] - kernel.center[1]];
    let q =
        dx[0] * (p[0][0] * dx[0] + p[0][1] * dx[1]) + dx[1] * (p[1][0] * dx[0] + p[1][1] * dx[1]);
    Ok((-0.5 * q).exp())
}

/// Row-major `N x K` matrix of gate values.
#[derive(Debug, Clone, PartialEq)]
pub struct GatingMatrix {
    kernels: usize,
    weights: Vec<f64>,
}

impl GatingMatrix {
    pub fn positions(&self) -> usize {
        self.weights.len() / self.kernels
    }

    pub fn kernel_count(&self) -> usize {
        self.kernels
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.weights[n * self.kernels..(n + 1) * self.kernels]
    }

    pub fn get(&self, n: usize, i: usize) -> f64 {
        self.weights[n * self.kernels + i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }
}

/// Writes the soft-max gates of one position into `out`.
#[inline]
fn gates_at(x: [f64; 2], centers_px: &[[f64; 2]], rate: f64, out: &mut [f64]) {
    let mut max_logit = f64::NEG_INFINITY;
    for (o, mu) in out.iter_mut().zip(centers_px) {
        let dr = x[0] - mu[0];
        let dc = x[1] - mu[1];
        let logit = -rate * (dr * dr + dc * dc);
        *o = logit;
        max_logit = max_logit.max(logit);
    }
    let mut sum = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max_logit).exp();
        sum += *o;
    }
    let inv = 1.0 / sum;
    for o in out.iter_mut() {
        *o *= inv;
    }
}

/// Soft-max gate of every kernel at every grid position.
pub fn gating_weights(model: &BlockModel, grid: &Grid) -> GatingMatrix {
    let k = model.kernel_count();
    let centers = model.pixel_centers(grid.block_size());
    let rate = pixel_rate(model.bandwidth(), grid.block_size());
    let mut weights = vec![0.0; grid.len() * k];
    for (row, x) in weights.chunks_exact_mut(k).zip(grid.positions()) {
        gates_at(*x, &centers, rate, row);
    }
    GatingMatrix {
        kernels: k,
        weights,
    }
}

/// Evaluates the model at every grid position.
pub fn reconstruct(model: &BlockModel, grid: &Grid) -> Vec<f64> {
    let k = model.kernel_count();
    let centers = model.pixel_centers(grid.block_size());
    let rate = pixel_rate(model.bandwidth(), grid.block_size());
    let mut gates = vec![0.0; k];
    grid.positions()
        .iter()
        .map(|x| {
            gates_at(*x, &centers, rate, &mut gates);
            gates.iter().zip(model.experts()).map(|(w, m)| w * m).sum()
        })
        .collect()
}

/// Reconstruction on the canonical grid of `block_size`, as a block.
pub fn reconstruct_block(model: &BlockModel, block_size: usize) -> PixelBlock {
    let pixels = reconstruct(model, &Grid::canonical(block_size))
        .into_iter()
        .map(clamp_unit)
        .collect();
    PixelBlock {
        pixels,
        size: block_size,
        origin: (0, 0),
    }
}

/// Mean squared reconstruction error over all pixels of `block`.
pub fn mse_loss(model: &BlockModel, block: &PixelBlock) -> f64 {
    let recon = reconstruct(model, &Grid::canonical(block.size()));
    recon
        .iter()
        .zip(block.pixels())
        .map(|(y, t)| (y - t) * (y - t))
        .sum::<f64>()
        / block.len() as f64
}

/// Partial derivatives of the block loss with respect to the stored
/// parameters: normalized centers `(row, col)` and experts.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients {
    pub centers: Vec<[f64; 2]>,
    pub experts: Vec<f64>,
}

pub fn loss_gradients(model: &BlockModel, block: &PixelBlock) -> LossGradients {
    let k = model.kernel_count();
    let mut grads = LossGradients {
        centers: vec![[0.0; 2]; k],
        experts: vec![0.0; k],
    };
    let mut scratch = vec![0.0; k];
    loss_and_gradients_raw(
        model.centers(),
        model.experts(),
        model.bandwidth(),
        block,
        &mut scratch,
        &mut grads.centers,
        &mut grads.experts,
    );
    grads
}

/// Loss and gradients for raw parameter slices; the inner loop of both the
/// gradient-descent fitter and the autoencoder head.
///
/// `scratch` must hold `K` values. Gradients are written (not accumulated)
/// into `grad_centers` and `grad_experts`.
pub fn loss_and_gradients_raw(
    centers: &[[f64; 2]],
    experts: &[f64],
    bandwidth: f64,
    block: &PixelBlock,
    scratch: &mut [f64],
    grad_centers: &mut [[f64; 2]],
    grad_experts: &mut [f64],
) -> f64 {
    let k = centers.len();
    debug_assert_eq!(experts.len(), k);
    debug_assert_eq!(scratch.len(), k);
    let b = block.size();
    let scale = b.saturating_sub(1) as f64;
    let rate = pixel_rate(bandwidth, b);
    let centers_px: Vec<[f64; 2]> = centers
        .iter()
        .map(|c| [c[0] * scale, c[1] * scale])
        .collect();

    grad_centers.iter_mut().for_each(|g| *g = [0.0; 2]);
    grad_experts.iter_mut().for_each(|g| *g = 0.0);

    let mut loss = 0.0;
    let pixels = block.pixels();
    for r in 0..b {
        for c in 0..b {
            let x = [r as f64, c as f64];
            gates_at(x, &centers_px, rate, scratch);
            let y: f64 = scratch.iter().zip(experts).map(|(w, m)| w * m).sum();
            let resid = y - pixels[r * b + c];
            loss += resid * resid;
            for i in 0..k {
                let w = scratch[i];
                grad_experts[i] += resid * w;
                // d y / d mu_px_i = w_i (m_i - y) * 2 a (x - mu_px_i)
                let coef = resid * w * (experts[i] - y);
                grad_centers[i][0] += coef * (x[0] - centers_px[i][0]);
                grad_centers[i][1] += coef * (x[1] - centers_px[i][1]);
            }
        }
    }
    let n = pixels.len() as f64;
    let center_factor = 2.0 / n * 2.0 * rate * scale;
    for g in grad_centers.iter_mut() {
        g[0] *= center_factor;
        g[1] *= center_factor;
    }
    for g in grad_experts.iter_mut() {
        *g *= 2.0 / n;
    }
    loss / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn model(centers: Vec<[f64; 2]>, experts: Vec<f64>, s: f64) -> BlockModel {
        BlockModel::new(centers, experts, s).unwrap()
    }

    #[test]
    fn kernel_is_one_at_center() {
        let k = FullKernel {
            center: [3.0, 4.0],
            covariance: [[2.0, 0.5], [0.5, 1.0]],
        };
        assert_eq!(gaussian_kernel([3.0, 4.0], &k).unwrap(), 1.0);
    }

    #[test]
    fn kernel_scalar_values() {
        let unit = FullKernel::isotropic([0.0, 0.0], 1.0);
        assert_relative_eq!(
            gaussian_kernel([1.0, 0.0], &unit).unwrap(),
            (-0.5f64).exp(),
            epsilon = 1e-15
        );
        let wide = FullKernel::isotropic([1.0, 1.0], 4.0);
        assert_relative_eq!(
            gaussian_kernel([3.0, 1.0], &wide).unwrap(),
            (-0.5f64).exp(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn kernel_rejects_bad_covariance() {
        let singular = FullKernel {
            center: [0.0, 0.0],
            covariance: [[1.0, 1.0], [1.0, 1.0]],
        };
        assert!(matches!(
            gaussian_kernel([0.0, 0.0], &singular),
            Err(Error::InvalidKernel(_))
        ));
        let indefinite = FullKernel {
            center: [0.0, 0.0],
            covariance: [[1.0, 0.0], [0.0, -1.0]],
        };
        assert!(gaussian_kernel([0.0, 0.0], &indefinite).is_err());
        let asym = FullKernel {
            center: [0.0, 0.0],
            covariance: [[1.0, 0.2], [0.0, 1.0]],
        };
        assert!(gaussian_kernel([0.0, 0.0], &asym).is_err());
    }

    #[test]
    fn single_kernel_gates_are_one() {
        let m = model(vec![[0.3, 0.9]], vec![0.4], 0.0035);
        let g = gating_weights(&m, &Grid::canonical(16));
        assert!(g.as_slice().iter().all(|w| *w == 1.0));
    }

    #[test]
    fn equidistant_centers_split_evenly() {
        // position (0, 0); centers at pixel (0, 15) and (15, 0)
        let m = model(vec![[0.0, 1.0], [1.0, 0.0]], vec![0.0, 1.0], 0.0035);
        let grid = Grid::new(16, vec![[0.0, 0.0]]).unwrap();
        let g = gating_weights(&m, &grid);
        assert_relative_eq!(g.get(0, 0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(g.get(0, 1), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn pixel_rate_values() {
        assert_relative_eq!(
            pixel_rate(0.0035, 16),
            1.0 / (2.0 * 0.0035 * 225.0),
            epsilon = 1e-15
        );
        assert_relative_eq!(pixel_rate(0.5, 2), 1.0, epsilon = 1e-15);
        assert!(pixel_rate(0.1, 1).is_finite());
    }

    #[test]
    fn two_kernel_softmax_oracle() {
        // normalized distance^2 = 0.5^2 + 0.5^2 = 0.5; logit gap 0.5 / (2 * 0.25) = 1
        let m = model(vec![[0.0, 0.0], [0.5, 0.5]], vec![1.0, 0.0], 0.25);
        let grid = Grid::new(17, vec![[0.0, 0.0]]).unwrap();
        let g = gating_weights(&m, &grid);
        let w1 = 1.0 / (1.0 + (-1.0f64).exp());
        assert_relative_eq!(g.get(0, 0), w1, epsilon = 1e-14);
        assert_relative_eq!(g.get(0, 0), 0.731, epsilon = 1e-3);
        assert_relative_eq!(g.get(0, 1), 1.0 - w1, epsilon = 1e-14);
        let y = reconstruct(&m, &grid);
        assert_relative_eq!(y[0], w1, epsilon = 1e-14);
    }

    #[test]
    fn constant_experts_give_constant_output() {
        let m = model(
            vec![[0.1, 0.2], [0.9, 0.4], [0.5, 0.5]],
            vec![0.37; 3],
            0.01,
        );
        for y in reconstruct(&m, &Grid::canonical(16)) {
            assert_relative_eq!(y, 0.37, epsilon = 1e-15);
        }
        let single = model(vec![[0.2, 0.2]], vec![0.5], 0.0035);
        assert!(reconstruct(&single, &Grid::canonical(8))
            .iter()
            .all(|y| *y == 0.5));
    }

    #[test]
    fn loss_closed_forms() {
        let m = model(vec![[0.5, 0.5]], vec![0.5], 0.0035);
        let ones = PixelBlock::constant(16, 1.0).unwrap();
        assert_relative_eq!(mse_loss(&m, &ones), 0.25, epsilon = 1e-15);
        let half = PixelBlock::constant(16, 0.5).unwrap();
        assert_eq!(mse_loss(&m, &half), 0.0);
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let m = model(
            vec![[0.1, 0.3], [0.7, 0.2], [0.4, 0.9]],
            vec![0.6; 3],
            0.0035,
        );
        let block = PixelBlock::constant(16, 0.6).unwrap();
        let g = loss_gradients(&m, &block);
        assert!(g.experts.iter().all(|v| v.abs() < 1e-15));
        assert!(g.centers.iter().flatten().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn single_kernel_gradient_closed_form() {
        let block = PixelBlock::from_fn(16, |r, c| ((r * 16 + c) % 7) as f64 / 7.0).unwrap();
        let m = model(vec![[0.4, 0.6]], vec![0.3], 0.0035);
        let g = loss_gradients(&m, &block);
        assert_relative_eq!(g.experts[0], 2.0 * (0.3 - block.mean()), epsilon = 1e-12);
        assert!(g.centers[0].iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn raw_loss_matches_mse_loss() {
        let block =
            PixelBlock::from_fn(16, |r, c| (r as f64 * 0.05 + c as f64 * 0.01).min(1.0)).unwrap();
        let m = model(
            vec![[0.1, 0.3], [0.7, 0.2], [0.4, 0.9], [0.8, 0.8]],
            vec![0.1, 0.5, 0.9, 0.2],
            0.0035,
        );
        let mut scratch = vec![0.0; 4];
        let mut gc = vec![[0.0; 2]; 4];
        let mut ge = vec![0.0; 4];
        let l = loss_and_gradients_raw(
            m.centers(),
            m.experts(),
            m.bandwidth(),
            &block,
            &mut scratch,
            &mut gc,
            &mut ge,
        );
        assert_relative_eq!(l, mse_loss(&m, &block), epsilon = 1e-15);
    }

    #[test]
    fn extreme_bandwidths_stay_finite() {
        for s in [1e-9, 50.0] {
            let m = model(vec![[0.0, 0.0], [1.0, 1.0]], vec![0.0, 1.0], s);
            let g = gating_weights(&m, &Grid::canonical(16));
            assert!(g
                .as_slice()
                .iter()
                .all(|w| w.is_finite() && (0.0..=1.0).contains(w)));
        }
    }

    #[test]
    fn model_validation() {
        assert!(BlockModel::new(vec![], vec![], 0.1).is_err());
        assert!(BlockModel::new(vec![[0.0, 0.0]], vec![0.1, 0.2], 0.1).is_err());
        assert!(BlockModel::new(vec![[0.0, 1.2]], vec![0.1], 0.1).is_err());
        assert!(BlockModel::new(vec![[0.0, 1.0]], vec![0.1], 0.0).is_err());
        let m = BlockModel::clamped(vec![[-0.5, 1.5]], vec![2.0], 0.1).unwrap();
        assert_eq!(m.centers(), &[[0.0, 1.0]]);
        assert_eq!(m.experts(), &[1.0]);
        assert!(PixelBlock::new(2, vec![0.0, 0.5, 1.0], (0, 0)).is_err());
        assert!(PixelBlock::new(2, vec![0.0, 0.5, 1.0, 1.1], (0, 0)).is_err());
    }
}
