//! Relative-total-variation smoothing.
//!
//! Texture is told apart from structure by comparing, in a Gaussian window of
//! scale `sigma`, the accumulated gradient magnitude (windowed total
//! variation `D`) against the magnitude of the accumulated signed gradient
//! (windowed inherent variation `L`). Inside texture the signed gradients
//! cancel and `L` is small; along a real edge they add up.
//!
//! The smoother runs iteratively reweighted least squares: every outer pass
//! recomputes per-edge weights `1 / ((|L| + eps) (|∂s| + eps))` from the
//! current luminance and solves the screened Poisson system
//! `(I + lambda · L_w) s = input` for each channel with preconditioned
//! conjugate gradients.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cg;
use crate::image::{FeatureMap, ImageBuffer};
use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RtvParams {
    /// Window scale in pixels; `0` disables smoothing.
    pub sigma: f64,
    pub lambda: f64,
    /// IRLS outer iterations.
    pub iterations: usize,
    pub eps: f64,
    /// Relative residual target of each inner solve.
    pub cg_tol: f64,
    pub cg_max_iters: usize,
}

impl Default for RtvParams {
    fn default() -> Self {
        Self {
            sigma: 3.0,
            lambda: 0.01,
            iterations: 4,
            eps: 1e-3,
            cg_tol: 1e-6,
            cg_max_iters: 1000,
        }
    }
}

impl RtvParams {
    pub fn with_sigma(sigma: f64) -> Self {
        Self {
            sigma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidParameter("rtv sigma must be >= 0"));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter("rtv lambda must be > 0"));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("rtv needs at least one iteration"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParameter("rtv eps must be > 0"));
        }
        if !(self.cg_tol > 0.0) || self.cg_max_iters == 0 {
            return Err(Error::InvalidParameter("invalid conjugate-gradient settings"));
        }
        Ok(())
    }
}

/// Windowed variations of a single-channel image.
#[derive(Debug, Clone, PartialEq)]
pub struct Variations {
    /// Windowed total variation along x (non-negative).
    pub dx: FeatureMap,
    pub dy: FeatureMap,
    /// Windowed inherent variation along x (signed; `|lx| <= dx`).
    pub lx: FeatureMap,
    pub ly: FeatureMap,
}

/// Sampled Gaussian, truncated at `ceil(3 sigma)` and normalized.
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = math::ceil(3.0 * sigma) as i64;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| math::exp(-((i * i) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with replicate padding; identity for `sigma == 0`.
pub(crate) fn blur(plane: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return plane.to_vec();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let sx = math::clamp_int(x as i64 + i as i64 - r, w);
                acc += kv * plane[y * w + sx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let sy = math::clamp_int(y as i64 + i as i64 - r, h);
                acc += kv * tmp[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Forward differences with replicate padding (zero on the last column/row).
fn gradients(plane: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                gx[i] = plane[i + 1] - plane[i];
            }
            if y + 1 < h {
                gy[i] = plane[i + w] - plane[i];
            }
        }
    }
    (gx, gy)
}

/// Windowed total (`D`) and inherent (`L`) variations of the image luminance
/// under a Gaussian window of scale `sigma`.
pub fn windowed_variations(gray: &ImageBuffer, sigma: f64) -> Variations {
    let (w, h) = gray.dims();
    let plane = gray.luminance().plane(0);
    let (gx, gy) = gradients(&plane, w, h);
    let abs = |v: &[f64]| v.iter().map(|g| math::abs(*g)).collect::<Vec<_>>();
    let fm = |v: Vec<f64>| FeatureMap::from_vec(w, h, 1, v).expect("finite plane");
    Variations {
        dx: fm(blur(&abs(&gx), w, h, sigma)),
        dy: fm(blur(&abs(&gy), w, h, sigma)),
        lx: fm(blur(&gx, w, h, sigma)),
        ly: fm(blur(&gy, w, h, sigma)),
    }
}

/// Per-edge weights of the weighted Laplacian: `x[i]` couples pixel `i` with
/// its right neighbour, `y[i]` with the one below. Entries on the last
/// column (resp. row) are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights {
    pub width: usize,
    pub height: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl EdgeWeights {
    pub fn uniform(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            x: vec![value; width * height],
            y: vec![value; width * height],
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.width * self.height;
        if self.x.len() != n || self.y.len() != n {
            return Err(Error::InvalidData("edge weight length does not match dimensions"));
        }
        if self.x.iter().chain(&self.y).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidData("edge weights must be finite and non-negative"));
        }
        Ok(())
    }

    /// `out = (I + lambda · L_w) s`.
    fn apply(&self, lambda: f64, s: &[f64], out: &mut [f64]) {
        let (w, h) = (self.width, self.height);
        out.copy_from_slice(s);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if x + 1 < w {
                    let f = lambda * self.x[i] * (s[i] - s[i + 1]);
                    out[i] += f;
                    out[i + 1] -= f;
                }
                if y + 1 < h {
                    let f = lambda * self.y[i] * (s[i] - s[i + w]);
                    out[i] += f;
                    out[i + w] -= f;
                }
            }
        }
    }

    fn diagonal(&self, lambda: f64) -> Vec<f64> {
        let (w, h) = (self.width, self.height);
        let mut d = vec![1.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if x + 1 < w {
                    d[i] += lambda * self.x[i];
                    d[i + 1] += lambda * self.x[i];
                }
                if y + 1 < h {
                    d[i] += lambda * self.y[i];
                    d[i + w] += lambda * self.y[i];
                }
            }
        }
        d
    }
}

/// Result of one conjugate-gradient solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final `‖b − A x‖ / ‖b‖`.
    pub relative_residual: f64,
}

/// Zero-fill incomplete Cholesky factor of `I + lambda · L_w`: the pivots of
/// `(D + L) D⁻¹ (D + L)ᵀ`, where `L` keeps the matrix's own off-diagonals.
struct IncompleteCholesky<'a> {
    weights: &'a EdgeWeights,
    lambda: f64,
    pivots: Vec<f64>,
}

impl<'a> IncompleteCholesky<'a> {
    fn new(weights: &'a EdgeWeights, lambda: f64) -> Self {
        let (w, h) = (weights.width, weights.height);
        let mut pivots = weights.diagonal(lambda);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if x > 0 {
                    let b = lambda * weights.x[i - 1];
                    pivots[i] -= b * b / pivots[i - 1];
                }
                if y > 0 {
                    let c = lambda * weights.y[i - w];
                    pivots[i] -= c * c / pivots[i - w];
                }
            }
        }
        Self { weights, lambda, pivots }
    }

    fn solve(&self, r: &[f64], z: &mut [f64]) {
        let (w, h) = (self.weights.width, self.weights.height);
        let (wx, wy, d) = (&self.weights.x, &self.weights.y, &self.pivots);
        // Forward: (D + L) u = r, with off-diagonals −λ·w.
        for i in 0..w * h {
            let mut acc = r[i];
            if i % w > 0 {
                acc += self.lambda * wx[i - 1] * z[i - 1];
            }
            if i >= w {
                acc += self.lambda * wy[i - w] * z[i - w];
            }
            z[i] = acc / d[i];
        }
        // Backward: (D + L)ᵀ z = D u.
        for i in (0..w * h).rev() {
            let mut acc = d[i] * z[i];
            if i % w + 1 < w {
                acc += self.lambda * wx[i] * z[i + 1];
            }
            if i + w < w * h {
                acc += self.lambda * wy[i] * z[i + w];
            }
            z[i] = acc / d[i];
        }
    }
}

/// Incomplete-Cholesky preconditioned CG on `(I + lambda · L_w) x = rhs`, warm-started at
/// `x0` (or `rhs`). Fails with `SolverDivergence` when the relative residual
/// stays above `tol` after `max_iters` iterations.
pub fn solve_plane(
    weights: &EdgeWeights,
    rhs: &[f64],
    lambda: f64,
    tol: f64,
    max_iters: usize,
    x0: Option<&[f64]>,
) -> Result<CgSolution> {
    weights.validate()?;
    let n = weights.width * weights.height;
    if rhs.len() != n || x0.is_some_and(|v| v.len() != n) {
        return Err(Error::InvalidData("right-hand side length does not match weights"));
    }
    let ic = IncompleteCholesky::new(weights, lambda);
    let s = cg::pcg(
        |v, out| weights.apply(lambda, v, out),
        |r, z| ic.solve(r, z),
        rhs,
        x0.unwrap_or(rhs).to_vec(),
        tol,
        max_iters,
    )?;
    Ok(CgSolution {
        x: s.x,
        iterations: s.iterations,
        relative_residual: s.relative_residual,
    })
}

/// Solves `(I + lambda · L_w) s = rhs` channel by channel (iteration cap
/// 1000) and clamps the result to `[0, 1]`.
pub fn solve_screened_poisson(
    weights: &EdgeWeights,
    rhs: &ImageBuffer,
    lambda: f64,
    tol: f64,
) -> Result<ImageBuffer> {
    if (weights.width, weights.height) != rhs.dims() {
        return Err(Error::DimensionMismatch {
            expected: rhs.dims(),
            actual: (weights.width, weights.height),
        });
    }
    let planes = (0..rhs.channels())
        .map(|c| solve_plane(weights, &rhs.plane(c), lambda, tol, 1000, None).map(|s| s.x))
        .collect::<Result<Vec<_>>>()?;
    ImageBuffer::from_planes(rhs.width(), rhs.height(), &planes)
}

/// IRLS edge weights from the current luminance plane.
fn rtv_weights(guide: &[f64], w: usize, h: usize, sigma: f64, eps: f64) -> EdgeWeights {
    let (gx, gy) = gradients(guide, w, h);
    let lx = blur(&gx, w, h, sigma);
    let ly = blur(&gy, w, h, sigma);
    let weight = |l: f64, g: f64| 1.0 / ((math::abs(l) + eps) * (math::abs(g) + eps));
    EdgeWeights {
        width: w,
        height: h,
        x: lx.iter().zip(&gx).map(|(l, g)| weight(*l, *g)).collect(),
        y: ly.iter().zip(&gy).map(|(l, g)| weight(*l, *g)).collect(),
    }
}

fn luminance_plane(planes: &[Vec<f64>]) -> Vec<f64> {
    if planes.len() == 1 {
        return planes[0].clone();
    }
    (0..planes[0].len())
        .map(|i| 0.299 * planes[0][i] + 0.587 * planes[1][i] + 0.114 * planes[2][i])
        .collect()
}

/// Edge-preserving smoothing. `sigma == 0` returns the input unchanged.
///
/// Colour channels share weights derived from the luminance of the current
/// estimate, so edges stay aligned across channels.
pub fn rtv_smooth(img: &ImageBuffer, p: &RtvParams) -> Result<ImageBuffer> {
    p.validate()?;
    if p.sigma == 0.0 {
        return Ok(img.clone());
    }
    let (w, h) = img.dims();
    let input: Vec<Vec<f64>> = (0..img.channels()).map(|c| img.plane(c)).collect();
    let mut s = input.clone();
    for _ in 0..p.iterations {
        let weights = rtv_weights(&luminance_plane(&s), w, h, p.sigma, p.eps);
        for (sc, ic) in s.iter_mut().zip(&input) {
            *sc = solve_plane(&weights, ic, p.lambda, p.cg_tol, p.cg_max_iters, Some(sc))?.x;
        }
    }
    ImageBuffer::from_planes(w, h, &s)
}

/// Sum of absolute forward differences over all channels.
pub fn total_variation(img: &ImageBuffer) -> f64 {
    let (w, h) = img.dims();
    (0..img.channels())
        .map(|c| {
            let (gx, gy) = gradients(&img.plane(c), w, h);
            gx.iter().chain(&gy).map(|g| math::abs(*g)).sum::<f64>()
        })
        .sum()
}
