//! MSE, PSNR and SSIM between two grids.

use crate::error::{Result, TdsError};
use crate::grid::Grid;

/// Side of the square SSIM window.
pub const SSIM_WINDOW: usize = 8;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub mse: f64,
    /// `f64::INFINITY` when `mse == 0`.
    pub psnr: f64,
    pub ssim: f64,
    pub peak: f64,
}

pub fn mse(a: &Grid, b: &Grid) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let sum: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.len() as f64)
}

/// PSNR in dB for a given mean squared error.
pub fn psnr_from_mse(mse: f64, peak: f64) -> Result<f64> {
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(TdsError::Parameter(format!("peak must be finite and > 0, got {peak}")));
    }
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

pub fn psnr(a: &Grid, b: &Grid, peak: f64) -> Result<f64> {
    let e = mse(a, b)?;
    psnr_from_mse(e, peak)
}

/// Mean SSIM over all 8x8 window positions with uniform weights.
pub fn ssim(a: &Grid, b: &Grid, peak: f64) -> Result<f64> {
    ssim_with_window(a, b, peak, SSIM_WINDOW)
}

pub fn ssim_with_window(a: &Grid, b: &Grid, peak: f64, window: usize) -> Result<f64> {
    a.ensure_same_shape(b)?;
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(TdsError::Parameter(format!("peak must be finite and > 0, got {peak}")));
    }
    let (m, n) = a.shape();
    if window == 0 || m < window || n < window {
        return Err(TdsError::Config(format!(
            "SSIM window {window}x{window} does not fit a {m}x{n} grid"
        )));
    }
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let count = (window * window) as f64;
    let (xa, xb) = (a.as_slice(), b.as_slice());
    let mut total = 0.0;
    let mut positions = 0usize;
    for top in 0..=m - window {
        for left in 0..=n - window {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in top..top + window {
                let row = i * n;
                for j in left..left + window {
                    let (x, y) = (xa[row + j], xb[row + j]);
                    sa += x;
                    sb += y;
                    saa += x * x;
                    sbb += y * y;
                    sab += x * y;
                }
            }
            let (mu_a, mu_b) = (sa / count, sb / count);
            let var_a = (saa / count - mu_a * mu_a).max(0.0);
            let var_b = (sbb / count - mu_b * mu_b).max(0.0);
            let cov = sab / count - mu_a * mu_b;
            let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
            positions += 1;
        }
    }
    Ok(total / positions as f64)
}

/// All three metrics of `estimate` against `reference`.
pub fn report(estimate: &Grid, reference: &Grid, peak: f64) -> Result<MetricReport> {
    let e = mse(estimate, reference)?;
    Ok(MetricReport {
        mse: e,
        psnr: psnr_from_mse(e, peak)?,
        ssim: ssim(estimate, reference, peak)?,
        peak,
    })
}
