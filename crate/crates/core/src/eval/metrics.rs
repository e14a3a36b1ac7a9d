use crate::error::{Error, Result};
use crate::imgcore::{ImageBuffer, Plane};

/// Returned for identical images.
pub const PSNR_CAP: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Peak signal-to-noise ratio for peak 1, over all channels.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    Error::check_dims(a.dims(), b.dims())?;
    let n = a.data().len() as f64;
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let raw: Vec<f64> = (0..size).map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Separable weighted sum over every full window position.
fn filter_valid(p: &[f64], w: usize, h: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = taps.len();
    let (ow, oh) = (w + 1 - k, h + 1 - k);
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            horiz[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * p[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * horiz[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// Mean structural similarity of the channel-mean gray images, 11×11
/// Gaussian window (σ = 1.5) over valid positions. Images smaller than the
/// window use the largest odd window that fits.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    Error::check_dims(a.dims(), b.dims())?;
    let (w, h) = a.dims();
    let mut size = SSIM_WINDOW.min(w).min(h);
    if size % 2 == 0 {
        size -= 1;
    }
    let taps = gaussian_taps(size, SSIM_SIGMA);
    let x: Plane = a.luma_mean();
    let y: Plane = b.luma_mean();
    let xx: Vec<f64> = x.data().iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.data().iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
    let (mx, _, _) = filter_valid(x.data(), w, h, &taps);
    let (my, _, _) = filter_valid(y.data(), w, h, &taps);
    let (exx, _, _) = filter_valid(&xx, w, h, &taps);
    let (eyy, _, _) = filter_valid(&yy, w, h, &taps);
    let (exy, _, _) = filter_valid(&xy, w, h, &taps);
    let n = mx.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = exx[i] - ux * ux;
            let vy = eyy[i] - uy * uy;
            let cov = exy[i] - ux * uy;
            ((2.0 * ux * uy + C1) * (2.0 * cov + C2)) / ((ux * ux + uy * uy + C1) * (vx + vy + C2))
        })
        .sum();
    Ok(total / n as f64)
}
