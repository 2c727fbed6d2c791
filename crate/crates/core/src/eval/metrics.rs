use crate::error::{Error, Result};
use crate::image::GrayImage;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn check_dims(a: &GrayImage, b: &GrayImage) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::input(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Mean squared error over `[0, 1]` pixels.
pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    check_dims(a, b)?;
    let n = a.data().len();
    if n == 0 {
        return Err(Error::input("empty image"));
    }
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n as f64)
}

/// `10 log10(1 / MSE)`; `f64::INFINITY` for identical images.
pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Six decimals, or `inf`.
pub fn format_psnr(psnr: f64) -> String {
    if psnr.is_infinite() {
        "inf".to_string()
    } else {
        format!("{psnr:.6}")
    }
}

fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mid = (SSIM_WINDOW / 2) as f64;
    let mut taps = [0.0; SSIM_WINDOW];
    for (k, t) in taps.iter_mut().enumerate() {
        *t = (-(k as f64 - mid).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Gaussian-weighted window means at every fully covered position.
fn filter_valid(data: &[f64], width: usize, height: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = width - SSIM_WINDOW + 1;
    let oh = height - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; height * ow];
    for r in 0..height {
        let line = &data[r * width..(r + 1) * width];
        for c in 0..ow {
            rows[r * ow + c] = taps
                .iter()
                .zip(&line[c..c + SSIM_WINDOW])
                .map(|(t, v)| t * v)
                .sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * rows[(r + k) * ow + c])
                .sum();
        }
    }
    out
}

/// Mean SSIM over all 11x11 Gaussian windows (sigma 1.5) lying inside the
/// image, with population statistics and unit dynamic range.
pub fn ssim(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    check_dims(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::input(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let taps = gaussian_taps();
    let (x, y) = (a.data(), b.data());
    let prod =
        |f: &dyn Fn(f64, f64) -> f64| x.iter().zip(y).map(|(p, q)| f(*p, *q)).collect::<Vec<_>>();
    let mu_x = filter_valid(x, w, h, &taps);
    let mu_y = filter_valid(y, w, h, &taps);
    let xx = filter_valid(&prod(&|p, _| p * p), w, h, &taps);
    let yy = filter_valid(&prod(&|_, q| q * q), w, h, &taps);
    let xy = filter_valid(&prod(&|p, q| p * q), w, h, &taps);
    let mut total = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = xx[i] - mx * mx;
        let vy = yy[i] - my * my;
        let cov = xy[i] - mx * my;
        total += ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
            / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
    }
    Ok(total / mu_x.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_closed_forms() {
        let a = GrayImage::constant(8, 8, 0.5).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = GrayImage::constant(8, 8, 0.5 + 16.0 / 255.0).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0 * (255.0f64 / 16.0).log10()).abs() < 1e-6);
        let z = GrayImage::constant(8, 8, 0.0).unwrap();
        assert!((psnr(&z, &a).unwrap() - 10.0 * 4.0f64.log10()).abs() < 1e-9);
        assert_eq!(format_psnr(f64::INFINITY), "inf");
    }

    #[test]
    fn ssim_of_constants() {
        let (c, d) = (0.3, 0.7);
        let a = GrayImage::constant(16, 16, c).unwrap();
        let b = GrayImage::constant(16, 16, d).unwrap();
        let expect = (2.0 * c * d + SSIM_C1) / (c * c + d * d + SSIM_C1);
        assert!((ssim(&a, &b).unwrap() - expect).abs() < 1e-9);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn errors() {
        let a = GrayImage::constant(10, 10, 0.1).unwrap();
        assert!(matches!(ssim(&a, &a), Err(Error::Input(_))));
        let b = GrayImage::constant(12, 10, 0.1).unwrap();
        assert!(psnr(&a, &b).is_err());
    }
}
