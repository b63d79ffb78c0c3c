//! Image similarity metrics on the 0 to 255 scale.
//!
//! Inputs are `[0, 1]` float rasters; every reported value is converted to
//! the conventional 8-bit scale so numbers are comparable across tools. All
//! accumulation runs in f64.

use serde::Serialize;
use thiserror::Error;

use crate::raster::{ImageBuffer, Mask};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("image dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize, usize), b: (usize, usize, usize) },
    #[error("no valid pixels to compare")]
    EmptyMask,
}

/// The four scores reported per image pair. `psnr` and `sd` use `+inf` as
/// the sentinel for an exact match (zero error, zero gradient difference).
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub rmse: f64,
    pub ssim: f64,
    pub psnr: f64,
    pub sd: f64,
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 6.5025; // (0.01 * 255)^2
const SSIM_C2: f64 = 58.5225; // (0.03 * 255)^2

fn check_dims(
    a: &ImageBuffer,
    b: &ImageBuffer,
    mask: Option<&Mask>,
) -> Result<(), MetricsError> {
    if a.dims() != b.dims() {
        return Err(MetricsError::DimensionMismatch { a: a.dims(), b: b.dims() });
    }
    if let Some(m) = mask {
        if (m.width(), m.height()) != (a.width(), a.height()) {
            return Err(MetricsError::DimensionMismatch {
                a: a.dims(),
                b: (m.width(), m.height(), a.channels()),
            });
        }
    }
    Ok(())
}

fn included(mask: Option<&Mask>, row: usize, col: usize) -> bool {
    mask.map_or(true, |m| m.get(row, col))
}

/// Root-mean-square error over the masked pixels and all channels.
pub fn rmse(a: &ImageBuffer, b: &ImageBuffer, mask: Option<&Mask>) -> Result<f64, MetricsError> {
    check_dims(a, b, mask)?;
    let ch = a.channels();
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for row in 0..a.height() {
        for col in 0..a.width() {
            if !included(mask, row, col) {
                continue;
            }
            for c in 0..ch {
                let d = 255.0 * (f64::from(a.get(row, col, c)) - f64::from(b.get(row, col, c)));
                sum += d * d;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(MetricsError::EmptyMask);
    }
    Ok((sum / (count * ch) as f64).sqrt())
}

/// Peak signal-to-noise ratio in dB; `+inf` when the images match exactly.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer, mask: Option<&Mask>) -> Result<f64, MetricsError> {
    let e = rmse(a, b, mask)?;
    if e == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(20.0 * (255.0 / e).log10())
    }
}

/// Luma on the 0 to 255 scale; RGB uses Rec. 601 weights.
pub(crate) fn luma_255(img: &ImageBuffer) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            let p = img.pixel(row, col);
            let y = if img.channels() == 1 {
                f64::from(p[0])
            } else {
                0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])
            };
            out.push(255.0 * y);
        }
    }
    out
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let mid = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = (i as f64 - mid) / SSIM_SIGMA;
        *v = (-0.5 * d * d).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable Gaussian blur; windows truncated at the border are
/// renormalized so constants stay constant everywhere.
fn gaussian_blur(field: &[f64], width: usize, height: usize) -> Vec<f64> {
    let kernel = gaussian_kernel();
    let r = (SSIM_WINDOW / 2) as isize;
    let mut tmp = vec![0.0f64; field.len()];
    for row in 0..height {
        for col in 0..width {
            let mut s = 0.0;
            let mut wsum = 0.0;
            for (k, &wk) in kernel.iter().enumerate() {
                let jj = col as isize + k as isize - r;
                if jj >= 0 && (jj as usize) < width {
                    s += wk * field[row * width + jj as usize];
                    wsum += wk;
                }
            }
            tmp[row * width + col] = s / wsum;
        }
    }
    let mut out = vec![0.0f64; field.len()];
    for row in 0..height {
        for col in 0..width {
            let mut s = 0.0;
            let mut wsum = 0.0;
            for (k, &wk) in kernel.iter().enumerate() {
                let ii = row as isize + k as isize - r;
                if ii >= 0 && (ii as usize) < height {
                    s += wk * tmp[ii as usize * width + col];
                    wsum += wk;
                }
            }
            out[row * width + col] = s / wsum;
        }
    }
    out
}

/// Precomputed single-image half of the SSIM statistics, so a search that
/// compares many candidates against one reference blurs the reference once.
pub(crate) struct SsimHalf {
    width: usize,
    height: usize,
    luma: Vec<f64>,
    mu: Vec<f64>,
    /// blur(luma^2); the variance is recovered as this minus mu^2.
    mu_sq: Vec<f64>,
}

pub(crate) fn ssim_half(luma: Vec<f64>, width: usize, height: usize) -> SsimHalf {
    debug_assert_eq!(luma.len(), width * height);
    let mu = gaussian_blur(&luma, width, height);
    let sq: Vec<f64> = luma.iter().map(|&v| v * v).collect();
    let mu_sq = gaussian_blur(&sq, width, height);
    SsimHalf { width, height, luma, mu, mu_sq }
}

/// Mean local SSIM of `la` against the precomputed half, skipping masked
/// pixels in the mean only (their values still feed neighboring windows).
/// `None` when the mask leaves nothing.
pub(crate) fn ssim_mean_against_half(
    la: &[f64],
    half: &SsimHalf,
    mask: Option<&[bool]>,
) -> Option<f64> {
    let (w, h) = (half.width, half.height);
    debug_assert_eq!(la.len(), w * h);
    let mu_a = gaussian_blur(la, w, h);
    let sq: Vec<f64> = la.iter().map(|&v| v * v).collect();
    let mu_a_sq = gaussian_blur(&sq, w, h);
    let cross: Vec<f64> = la.iter().zip(&half.luma).map(|(&x, &y)| x * y).collect();
    let mu_ab = gaussian_blur(&cross, w, h);

    let mut sum = 0.0f64;
    let mut count = 0usize;
    for i in 0..w * h {
        if let Some(m) = mask {
            if !m[i] {
                continue;
            }
        }
        let (ma, mb) = (mu_a[i], half.mu[i]);
        let va = mu_a_sq[i] - ma * ma;
        let vb = half.mu_sq[i] - mb * mb;
        let cov = mu_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
        let den = (ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2);
        sum += num / den;
        count += 1;
    }
    if count == 0 {
        None
    } else {
        Some(sum / count as f64)
    }
}

/// Mean structural similarity on luma: 11x11 Gaussian windows (sigma 1.5),
/// K1 = 0.01, K2 = 0.03 on the 255 scale. Masked pixels are excluded from
/// the final mean only.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer, mask: Option<&Mask>) -> Result<f64, MetricsError> {
    check_dims(a, b, mask)?;
    let la = luma_255(a);
    let half = ssim_half(luma_255(b), b.width(), b.height());
    let flat = mask.map(|m| m.data());
    ssim_mean_against_half(&la, &half, flat).ok_or(MetricsError::EmptyMask)
}

/// Gradient-magnitude sharpness difference in dB:
/// `10*log10(255^2 / mean |g_a - g_b|)` where `g = |du| + |dv|` from forward
/// differences, averaged per channel over the pixels where both differences
/// exist (the last row and column are excluded). A masked sample counts only
/// when the pixel and both forward neighbors are valid. `+inf` when the
/// gradient fields agree exactly.
pub fn sharpness_difference(
    a: &ImageBuffer,
    b: &ImageBuffer,
    mask: Option<&Mask>,
) -> Result<f64, MetricsError> {
    check_dims(a, b, mask)?;
    let (w, h, ch) = a.dims();
    if w < 2 || h < 2 {
        return Err(MetricsError::EmptyMask);
    }
    let grad = |img: &ImageBuffer, row: usize, col: usize, c: usize| -> f64 {
        let here = f64::from(img.get(row, col, c));
        let du = f64::from(img.get(row, col + 1, c)) - here;
        let dv = f64::from(img.get(row + 1, col, c)) - here;
        255.0 * (du.abs() + dv.abs())
    };
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for row in 0..h - 1 {
        for col in 0..w - 1 {
            let ok = included(mask, row, col)
                && included(mask, row, col + 1)
                && included(mask, row + 1, col);
            if !ok {
                continue;
            }
            for c in 0..ch {
                sum += (grad(a, row, col, c) - grad(b, row, col, c)).abs();
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(MetricsError::EmptyMask);
    }
    let mean = sum / (count * ch) as f64;
    if mean == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (255.0 * 255.0 / mean).log10())
    }
}

/// Computes all four metrics for one pair.
pub fn evaluate(
    a: &ImageBuffer,
    b: &ImageBuffer,
    mask: Option<&Mask>,
) -> Result<MetricReport, MetricsError> {
    Ok(MetricReport {
        rmse: rmse(a, b, mask)?,
        ssim: ssim(a, b, mask)?,
        psnr: psnr(a, b, mask)?,
        sd: sharpness_difference(a, b, mask)?,
    })
}
