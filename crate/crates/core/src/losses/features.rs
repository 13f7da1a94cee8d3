//! Hand-crafted per-pixel descriptors.

use crate::image::{FeatureMap, ImageBuffer};
use crate::math;

/// Channels per location.
pub const FEATURE_DEPTH: usize = 10;

/// Gain on the derivative and deviation channels. Without it the luminance,
/// mean and constant channels dominate and every cosine sits close to 1.
pub const DETAIL_GAIN: f64 = 8.0;

/// Builds the 10-channel descriptor of the image luminance at pyramid level
/// `scale` (the image is box-downsampled by `2^scale` first).
///
/// Channel layout: luminance, central x/y gradients, second differences
/// along 0°, 90°, 45° and 135°, 3×3 mean, 3×3 standard deviation, and a
/// constant 1 so every descriptor has non-zero norm. Borders replicate.
pub fn extract_features(img: &ImageBuffer, scale: usize) -> FeatureMap {
    let mut lum = img.luminance();
    if scale > 0 {
        let f = 1usize << scale;
        let w = (lum.width() / f).max(1);
        let h = (lum.height() / f).max(1);
        lum = lum.downsample(w, h);
    }
    let (w, h) = lum.dims();
    let at = |x: i64, y: i64| lum.get(math::clamp_int(x, w), math::clamp_int(y, h), 0);
    let mut out = FeatureMap::zeros(w, h, FEATURE_DEPTH);
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as i64, y as i64);
            let c = at(xi, yi);
            let mut sum = 0.0;
            let mut sq = 0.0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let v = at(xi + dx, yi + dy);
                    sum += v;
                    sq += v * v;
                }
            }
            let mean = sum / 9.0;
            let var = (sq / 9.0 - mean * mean).max(0.0);
            let f = out.at_mut(x, y);
            f[0] = c;
            let g = DETAIL_GAIN;
            f[1] = g * 0.5 * (at(xi + 1, yi) - at(xi - 1, yi));
            f[2] = g * 0.5 * (at(xi, yi + 1) - at(xi, yi - 1));
            f[3] = g * (at(xi + 1, yi) + at(xi - 1, yi) - 2.0 * c);
            f[4] = g * (at(xi, yi + 1) + at(xi, yi - 1) - 2.0 * c);
            f[5] = g * 0.5 * (at(xi + 1, yi + 1) + at(xi - 1, yi - 1) - 2.0 * c);
            f[6] = g * 0.5 * (at(xi + 1, yi - 1) + at(xi - 1, yi + 1) - 2.0 * c);
            f[7] = mean;
            f[8] = g * math::sqrt(var);
            f[9] = 1.0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_input() {
        let f = extract_features(&ImageBuffer::filled(7, 5, 3, 0.6).unwrap(), 0);
        for y in 0..5 {
            for x in 0..7 {
                let v = f.at(x, y);
                assert!((v[0] - 0.6).abs() < 1e-12);
                assert!(v[1..7].iter().all(|g| g.abs() < 1e-12));
                assert!((v[7] - 0.6).abs() < 1e-12);
                assert!(v[8].abs() < 1e-6);
                assert_eq!(v[9], 1.0);
            }
        }
    }

    #[test]
    fn deterministic_and_scaled() {
        let img = ImageBuffer::from_fn(16, 12, 1, |x, y, _| ((x * 5 + y * 3) % 11) as f64 / 10.0).unwrap();
        assert_eq!(extract_features(&img, 0), extract_features(&img, 0));
        let f1 = extract_features(&img, 1);
        assert_eq!((f1.width(), f1.height(), f1.depth()), (8, 6, 10));
    }

    #[test]
    fn circular_shift_equivariance_in_interior() {
        let (w, h) = (20, 14);
        let base = |x: usize, y: usize| ((x * 7 + y * 13 + x * y) % 17) as f64 / 16.0;
        let a = ImageBuffer::from_fn(w, h, 1, |x, y, _| base(x, y)).unwrap();
        let b = ImageBuffer::from_fn(w, h, 1, |x, y, _| base((x + w - 1) % w, y)).unwrap();
        let (fa, fb) = (extract_features(&a, 0), extract_features(&b, 0));
        for y in 1..h - 1 {
            for x in 2..w - 1 {
                assert_eq!(fa.at(x - 1, y), fb.at(x, y));
            }
        }
    }
}
