//! Independent scalar re-implementations used as test oracles, plus random
//! instance generators. Nothing here calls into the sampler or loss code it
//! is meant to check.

#![allow(dead_code)]

use flowfill_core::{FeatureMap, FlowField, ImageBuffer, Mask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_features(r: &mut ChaCha8Rng, w: usize, h: usize, d: usize) -> FeatureMap {
    let data = (0..w * h * d).map(|_| r.random_range(-1.0..1.0)).collect();
    FeatureMap::from_vec(w, h, d, data).unwrap()
}

/// Positive features, so every cosine is well defined.
pub fn random_positive_features(r: &mut ChaCha8Rng, w: usize, h: usize, d: usize) -> FeatureMap {
    let data = (0..w * h * d).map(|_| r.random_range(0.05..1.0)).collect();
    FeatureMap::from_vec(w, h, d, data).unwrap()
}

pub fn random_image(r: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> ImageBuffer {
    let data = (0..w * h * c).map(|_| r.random_range(0.0..=1.0)).collect();
    ImageBuffer::from_vec(w, h, c, data).unwrap()
}

/// Integer displacement in `[-span, span]` plus a fraction drawn from
/// `[lo, hi]`, per component.
pub fn random_flow(r: &mut ChaCha8Rng, w: usize, h: usize, span: i64, lo: f64, hi: f64) -> FlowField {
    let v = (0..w * h)
        .map(|_| {
            let mut c = || r.random_range(-span..=span) as f64 + r.random_range(lo..=hi);
            [c(), c()]
        })
        .collect();
    FlowField::from_vec(w, h, v).unwrap()
}

fn clamp(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

/// Gaussian blend of the `n × n` cells around `round(p)`, weights
/// `exp(-(dx² + dy²) / 2σ²)` normalized by their sum, clamped coordinates.
pub fn gauss_at(src: &FeatureMap, px: f64, py: f64, n: usize, sigma: f64) -> Vec<f64> {
    let r = (n / 2) as i64;
    let (cx, cy) = (px.round() as i64, py.round() as i64);
    let mut out = vec![0.0; src.depth()];
    let mut total = 0.0;
    for j in -r..=r {
        for i in -r..=r {
            let (gx, gy) = ((cx + i) as f64, (cy + j) as f64);
            let a = (-((gx - px).powi(2) + (gy - py).powi(2)) / (2.0 * sigma * sigma)).exp();
            total += a;
            let cell = src.at(clamp(cx + i, src.width()), clamp(cy + j, src.height()));
            for (o, v) in out.iter_mut().zip(cell) {
                *o += a * v;
            }
        }
    }
    out.iter_mut().for_each(|o| *o /= total);
    out
}

pub fn bilinear_at(src: &FeatureMap, px: f64, py: f64) -> Vec<f64> {
    let (x0, y0) = (px.floor(), py.floor());
    let (tx, ty) = (px - x0, py - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let mut out = vec![0.0; src.depth()];
    for (dy, wy) in [(0, 1.0 - ty), (1, ty)] {
        for (dx, wx) in [(0, 1.0 - tx), (1, tx)] {
            let cell = src.at(clamp(x0 + dx, src.width()), clamp(y0 + dy, src.height()));
            for (o, v) in out.iter_mut().zip(cell) {
                *o += wx * wy * v;
            }
        }
    }
    out
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Exhaustive double loop over every valid grid position.
pub fn brute_mu_max(vgt: &FeatureMap, vin: &FeatureMap, at: (usize, usize), valid: &Mask) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for y in 0..vin.height() {
        for x in 0..vin.width() {
            if !valid.is_hole(x, y) {
                best = best.max(cosine(vgt.at(at.0, at.1), vin.at(x, y)));
            }
        }
    }
    best
}

/// Correctness loss recomputed term by term: mean over hole pixels of
/// `exp(-μ(sampled) / max(μ_max, 1e-6))`.
pub fn scalar_lc(
    vgt: &FeatureMap,
    vin: &FeatureMap,
    flow: &FlowField,
    m: &Mask,
    sample: impl Fn(&FeatureMap, f64, f64) -> Vec<f64>,
) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for y in 0..m.height() {
        for x in 0..m.width() {
            if !m.is_hole(x, y) {
                continue;
            }
            let v = flow.get(x, y);
            let s = sample(vin, x as f64 + v[0], y as f64 + v[1]);
            let mu_max = brute_mu_max(vgt, vin, (x, y), m).max(1e-6);
            total += (-cosine(vgt.at(x, y), &s) / mu_max).exp();
            n += 1;
        }
    }
    total / n as f64
}

/// Relative error of `analytic` against `reference`, scaled by the largest
/// reference magnitude of the instance.
pub fn relative_error(analytic: &[f64], reference: &[f64]) -> f64 {
    let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    analytic
        .iter()
        .zip(reference)
        .fold(0.0f64, |m, (a, r)| m.max((a - r).abs()))
        / scale
}

pub fn scalar_psnr(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let d = a.data();
    let e = b.data();
    let mut mse = 0.0;
    for i in 0..d.len() {
        mse += (d[i] - e[i]) * (d[i] - e[i]);
    }
    mse /= d.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// 8×8 windows at stride 1, population statistics, averaged over windows
/// and channels.
pub fn scalar_ssim(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let (c1, c2) = (1e-4, 9e-4);
    let (w, h) = a.dims();
    let (ww, wh) = (w.min(8), h.min(8));
    let mut acc = 0.0;
    let mut count = 0.0;
    for c in 0..a.channels() {
        for y0 in 0..=h - wh {
            for x0 in 0..=w - ww {
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for y in y0..y0 + wh {
                    for x in x0..x0 + ww {
                        xs.push(a.get(x, y, c));
                        ys.push(b.get(x, y, c));
                    }
                }
                let n = xs.len() as f64;
                let mx = xs.iter().sum::<f64>() / n;
                let my = ys.iter().sum::<f64>() / n;
                let vx = xs.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / n;
                let vy = ys.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n;
                let cov = xs.iter().zip(&ys).map(|(p, q)| (p - mx) * (q - my)).sum::<f64>() / n;
                acc += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1.0;
            }
        }
    }
    acc / count
}

/// Hole PSNR against ground truth, computed directly.
pub fn hole_psnr(a: &ImageBuffer, b: &ImageBuffer, m: &Mask) -> f64 {
    let mut acc = 0.0;
    let mut n = 0.0;
    for y in 0..m.height() {
        for x in 0..m.width() {
            if m.is_hole(x, y) {
                for c in 0..a.channels() {
                    acc += (a.get(x, y, c) - b.get(x, y, c)).powi(2);
                    n += 1.0;
                }
            }
        }
    }
    if acc == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * (acc / n).log10()
    }
}

/// Step-edge smoothing measurements on a `w × h` image with the edge at
/// column `edge`: amplitude retained across the edge (fraction of `step`)
/// and the ratio of input to output variance inside the flat regions.
pub fn step_retention(input: &ImageBuffer, output: &ImageBuffer, edge: usize, step: f64) -> (f64, f64) {
    let (w, h) = input.dims();
    let band = |img: &ImageBuffer, x0: usize, x1: usize| -> Vec<f64> {
        (0..h).flat_map(|y| (x0..x1).map(move |x| (x, y))).map(|(x, y)| img.get(x, y, 0)).collect()
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64]| {
        let m = mean(v);
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
    };
    let amplitude = mean(&band(output, edge, edge + 2)) - mean(&band(output, edge - 2, edge));
    // Flat regions stay a few pixels clear of the edge and the border.
    let regions = [(4, edge - 6), (edge + 6, w - 4)];
    let mut before = 0.0;
    let mut after = 0.0;
    for (a, b) in regions {
        before += var(&band(input, a, b));
        after += var(&band(output, a, b));
    }
    (amplitude / step, before / after.max(1e-300))
}
