//! Closed-form least-squares re-estimation of the experts for fixed gates.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::model::{clamp_unit, gating_weights, BlockModel, Grid, PixelBlock};

/// Diagonal damping added to the normal equations.
pub const TIKHONOV_DAMPING: f64 = 1e-8;
/// Iterated-Tikhonov refinement passes after the first damped solve. Each
/// pass shrinks the damping bias on well-determined directions while leaving
/// null-space components at zero.
pub const REFINEMENT_STEPS: usize = 2;
/// Condition number of the Gram matrix above which a fit is flagged.
pub const CONDITION_WARNING: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    /// Unclamped least-squares experts.
    pub experts: Vec<f64>,
    /// Condition number of the undamped Gram matrix `W^T W`.
    pub condition: f64,
    pub ill_conditioned: bool,
}

/// Experts minimizing `|W m - y|^2` for the gates `W` of `model` on `block`.
pub fn ols_experts(block: &PixelBlock, model: &BlockModel) -> OlsFit {
    let (gram, rhs) = normal_equations(block, model);
    let eig = gram.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| {
        (lo.min(e), hi.max(e))
    });
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let ill_conditioned = condition > CONDITION_WARNING;
    if ill_conditioned {
        log::debug!("ill-conditioned expert fit (cond = {condition:.3e})");
    }
    let experts =
        damped_solve(&gram, &rhs).unwrap_or_else(|| DVector::from_element(rhs.len(), block.mean()));
    OlsFit {
        experts: experts.iter().copied().collect(),
        condition,
        ill_conditioned,
    }
}

fn normal_equations(block: &PixelBlock, model: &BlockModel) -> (DMatrix<f64>, DVector<f64>) {
    let k = model.kernel_count();
    let gates = gating_weights(model, &Grid::canonical(block.size()));
    let w = DMatrix::from_row_slice(gates.positions(), k, gates.as_slice());
    let y = DVector::from_column_slice(block.pixels());
    (w.transpose() * &w, w.transpose() * y)
}

fn damped_solve(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let k = rhs.len();
    let damped = gram + DMatrix::identity(k, k) * TIKHONOV_DAMPING;
    match damped.clone().cholesky() {
        Some(chol) => {
            let mut m = chol.solve(rhs);
            for _ in 0..REFINEMENT_STEPS {
                m = chol.solve(&(rhs + &m * TIKHONOV_DAMPING));
            }
            Some(m)
        }
        // Only reachable with non-finite gates.
        None => damped.lu().solve(rhs),
    }
}

/// Largest kernel count solved exactly by visiting every face of the box.
pub const MAX_ENUMERATED_KERNELS: usize = 8;
/// Projected-gradient iterations used above [`MAX_ENUMERATED_KERNELS`].
pub const PROJECTED_GRADIENT_STEPS: usize = 2000;

/// Experts minimizing `|W m - y|^2` subject to `0 <= m <= 1`.
///
/// Equals [`ols_experts`] whenever that solution is already in range, and is
/// never worse than any in-range expert vector, `model`'s own included.
pub fn bounded_experts(block: &PixelBlock, model: &BlockModel) -> Vec<f64> {
    let (gram, rhs) = normal_equations(block, model);
    let k = rhs.len();
    if let Some(m) = damped_solve(&gram, &rhs) {
        if m.iter().all(|v| (0.0..=1.0).contains(v)) {
            return m.iter().copied().collect();
        }
    }
    log::debug!("least-squares experts out of range, solving with bounds");
    // q(m) = m'Gm - 2 b'm differs from the squared error by a constant.
    let objective = |m: &DVector<f64>| m.dot(&(&gram * m)) - 2.0 * rhs.dot(m);
    let start = DVector::from_iterator(k, model.experts().iter().copied().map(clamp_unit));
    let mut best = (objective(&start), start);

    if k <= MAX_ENUMERATED_KERNELS {
        // Each index is free, held at 0 or held at 1.
        for code in 0..3usize.pow(k as u32) {
            let state: Vec<usize> = (0..k).map(|i| code / 3usize.pow(i as u32) % 3).collect();
            let free: Vec<usize> = (0..k).filter(|&i| state[i] == 0).collect();
            let mut m =
                DVector::from_iterator(k, state.iter().map(|&s| if s == 2 { 1.0 } else { 0.0 }));
            if !free.is_empty() {
                let g = gram.select_rows(&free).select_columns(&free);
                let b = DVector::from_iterator(
                    free.len(),
                    free.iter()
                        .map(|&i| rhs[i] - gram.row(i).dot(&m.transpose())),
                );
                let Some(x) = damped_solve(&g, &b) else {
                    continue;
                };
                if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    continue;
                }
                for (&i, &v) in free.iter().zip(x.iter()) {
                    m[i] = v;
                }
            }
            let q = objective(&m);
            if q < best.0 {
                best = (q, m);
            }
        }
    } else {
        let lipschitz = gram
            .clone()
            .symmetric_eigenvalues()
            .max()
            .max(f64::MIN_POSITIVE);
        let mut m = best.1.clone();
        for _ in 0..PROJECTED_GRADIENT_STEPS {
            let grad = &gram * &m - &rhs;
            m = (&m - grad / lipschitz).map(clamp_unit);
        }
        let q = objective(&m);
        if q < best.0 {
            best = (q, m);
        }
    }
    best.1.iter().copied().collect()
}

/// Componentwise clamp into `[0, 1]`.
pub fn clamp_experts(experts: &[f64]) -> Vec<f64> {
    experts.iter().copied().map(clamp_unit).collect()
}

/// `model` with its experts replaced by the best experts in `[0, 1]`.
pub fn refit_experts(block: &PixelBlock, model: &BlockModel) -> Result<BlockModel> {
    model.with_experts(&bounded_experts(block, model))
}
