//! Distortion metrics on `[0, 1]` images.

use crate::image::{ImageBuffer, Mask};
use crate::math;
use crate::{Error, Result};

/// Side of the square SSIM window.
pub const SSIM_WINDOW: usize = 8;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn same_shape(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if a.dims() != b.dims() || a.channels() != b.channels() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            actual: b.dims(),
        });
    }
    Ok(())
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * math::log10(1.0 / mse)
    }
}

/// Peak signal-to-noise ratio in dB with peak 1. Identical inputs give
/// `f64::INFINITY`.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    same_shape(a, b)?;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data().len() as f64;
    Ok(psnr_from_mse(mse))
}

/// PSNR restricted to the hole pixels of `m`. `None` when there are none.
pub fn psnr_masked(a: &ImageBuffer, b: &ImageBuffer, m: &Mask) -> Result<Option<f64>> {
    same_shape(a, b)?;
    if m.dims() != a.dims() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            actual: m.dims(),
        });
    }
    let c = a.channels();
    let mut acc = 0.0;
    let mut n = 0usize;
    for (x, y) in m.holes() {
        for ch in 0..c {
            let d = a.get(x, y, ch) - b.get(x, y, ch);
            acc += d * d;
        }
        n += c;
    }
    Ok((n > 0).then(|| psnr_from_mse(acc / n as f64)))
}

/// SSIM of one window (population statistics).
fn window_ssim(a: &ImageBuffer, b: &ImageBuffer, c: usize, x0: usize, y0: usize, wx: usize, wy: usize) -> f64 {
    let n = (wx * wy) as f64;
    let (mut sa, mut sb) = (0.0, 0.0);
    for y in y0..y0 + wy {
        for x in x0..x0 + wx {
            sa += a.get(x, y, c);
            sb += b.get(x, y, c);
        }
    }
    let (ma, mb) = (sa / n, sb / n);
    let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
    for y in y0..y0 + wy {
        for x in x0..x0 + wx {
            let da = a.get(x, y, c) - ma;
            let db = b.get(x, y, c) - mb;
            vaa += da * da;
            vbb += db * db;
            vab += da * db;
        }
    }
    let (vaa, vbb, vab) = (vaa / n, vbb / n, vab / n);
    ((2.0 * ma * mb + C1) * (2.0 * vab + C2)) / ((ma * ma + mb * mb + C1) * (vaa + vbb + C2))
}

fn ssim_impl(a: &ImageBuffer, b: &ImageBuffer, keep: impl Fn(usize, usize, usize, usize) -> bool) -> Option<f64> {
    let (w, h) = a.dims();
    let wx = SSIM_WINDOW.min(w);
    let wy = SSIM_WINDOW.min(h);
    let mut acc = 0.0;
    let mut n = 0usize;
    for y0 in 0..=h - wy {
        for x0 in 0..=w - wx {
            if !keep(x0, y0, wx, wy) {
                continue;
            }
            for c in 0..a.channels() {
                acc += window_ssim(a, b, c, x0, y0, wx, wy);
                n += 1;
            }
        }
    }
    (n > 0).then(|| acc / n as f64)
}

/// Mean SSIM over all 8×8 windows (stride 1) and channels, with
/// `c1 = 0.01²`, `c2 = 0.03²`. Windows shrink to the image for images
/// smaller than 8 pixels on a side.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    same_shape(a, b)?;
    Ok(ssim_impl(a, b, |_, _, _, _| true).expect("at least one window"))
}

/// Mean SSIM over the windows that contain at least one hole pixel.
pub fn ssim_masked(a: &ImageBuffer, b: &ImageBuffer, m: &Mask) -> Result<Option<f64>> {
    same_shape(a, b)?;
    if m.dims() != a.dims() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            actual: m.dims(),
        });
    }
    Ok(ssim_impl(a, b, |x0, y0, wx, wy| {
        (y0..y0 + wy).any(|y| (x0..x0 + wx).any(|x| m.is_hole(x, y)))
    }))
}
