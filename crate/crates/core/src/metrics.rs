//! Image-quality metrics: MSE, BCE, PSNR and SSIM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Image;

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;
pub const BCE_CLAMP: f64 = 1e-7;
pub const SSIM_WINDOW: usize = 8;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub mse: f64,
    pub bce: f64,
    pub psnr: f64,
    pub ssim: f64,
}

fn check_shapes(a: &Image, b: &Image) -> Result<()> {
    if a.size() != b.size() {
        return Err(Error::structural(format!(
            "shape mismatch: {0}x{0} vs {1}x{1}",
            a.size(),
            b.size()
        )));
    }
    Ok(())
}

pub fn mse(reference: &Image, test: &Image) -> Result<f64> {
    check_shapes(reference, test)?;
    let n = reference.pixels().len() as f64;
    Ok(reference.pixels().iter().zip(test.pixels()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

/// Peak-1 PSNR of a given MSE, capped at [`PSNR_CAP`].
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse > 0.0 {
        (-10.0 * mse.log10()).min(PSNR_CAP)
    } else {
        PSNR_CAP
    }
}

pub fn psnr(reference: &Image, test: &Image) -> Result<f64> {
    Ok(psnr_from_mse(mse(reference, test)?))
}

/// Binary cross-entropy with `reference` as labels and `test` as
/// predictions clamped to `[1e-7, 1 − 1e-7]`.
pub fn bce(reference: &Image, test: &Image) -> Result<f64> {
    check_shapes(reference, test)?;
    let n = reference.pixels().len() as f64;
    let total: f64 = reference
        .pixels()
        .iter()
        .zip(test.pixels())
        .map(|(&y, &x)| {
            let x = x.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            y * x.ln() + (1.0 - y) * (1.0 - x).ln()
        })
        .sum();
    Ok(-total / n)
}

/// Mean SSIM over all `8×8` windows at stride 1 (the whole image when it is
/// smaller), with uniform weights and sample (co)variances.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_shapes(a, b)?;
    let s = a.size();
    let w = SSIM_WINDOW.min(s);
    let n = (w * w) as f64;
    let denom = if w * w > 1 { n - 1.0 } else { 1.0 };
    let (pa, pb) = (a.pixels(), b.pixels());
    let mut total = 0.0;
    let mut count = 0usize;
    for x0 in 0..=s - w {
        for y0 in 0..=s - w {
            let (mut sa, mut sb) = (0.0, 0.0);
            for x in x0..x0 + w {
                for y in y0..y0 + w {
                    sa += pa[x * s + y];
                    sb += pb[x * s + y];
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for x in x0..x0 + w {
                for y in y0..y0 + w {
                    let da = pa[x * s + y] - ma;
                    let db = pb[x * s + y] - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            }
            let (va, vb, cov) = (va / denom, vb / denom, cov / denom);
            total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

fn clamped(img: &Image, name: &str) -> Result<Image> {
    if img.pixels().iter().any(|v| !(0.0..=1.0).contains(v)) {
        log::warn!("{name} image has values outside [0, 1]; clamping");
        return Image::new(img.size(), img.pixels().iter().map(|v| v.clamp(0.0, 1.0)).collect());
    }
    Ok(img.clone())
}

/// All four metrics; inputs are clamped to `[0, 1]` first.
pub fn evaluate(reference: &Image, test: &Image) -> Result<QualityReport> {
    check_shapes(reference, test)?;
    let r = clamped(reference, "reference")?;
    let t = clamped(test, "test")?;
    let mse = mse(&r, &t)?;
    Ok(QualityReport { mse, bce: bce(&r, &t)?, psnr: psnr_from_mse(mse), ssim: ssim(&r, &t)? })
}
