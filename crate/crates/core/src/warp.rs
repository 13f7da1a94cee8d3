//! Differentiable resampling of feature grids along a flow field.
//!
//! Two samplers share one interface: the normalized Gaussian blend over an
//! `n × n` neighbourhood and the classic 4-tap bilinear interpolation. Both
//! provide hand-derived backward passes with respect to the source values and
//! the flow vectors.
//!
//! Neighbour indices are clamped to the grid, but weights are always computed
//! from unclamped distances, so weights stay normalized and derivatives stay
//! defined at the borders.
//!
//! The Gaussian window is centred on the grid cell nearest to the sampling
//! position. The blend is therefore smooth inside each cell and jumps where
//! the nearest cell changes (half-integer positions).

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::image::{FeatureMap, FlowField};
use crate::math;
use crate::{Error, Result};

/// Kernel size and width of the Gaussian sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingKernel {
    /// Odd window side.
    pub n: usize,
    /// Standard deviation of the weights, in pixels.
    pub sigma: f64,
}

impl Default for SamplingKernel {
    fn default() -> Self {
        Self { n: 3, sigma: 1.0 }
    }
}

impl SamplingKernel {
    pub fn new(n: usize, sigma: f64) -> Result<Self> {
        let k = Self { n, sigma };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n % 2 == 0 {
            return Err(Error::InvalidParameter("kernel size must be odd"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidParameter("kernel sigma must be positive"));
        }
        Ok(())
    }

    #[inline]
    fn radius(&self) -> i64 {
        (self.n / 2) as i64
    }
}

/// 1-D normalized weights for offsets `-r..=r` around the centre cell, with
/// `frac` the sampling position minus the centre. Optionally writes
/// `d weight / d position`.
fn axis_weights(frac: f64, k: &SamplingKernel, w: &mut [f64], dw: Option<&mut [f64]>) {
    let r = k.radius();
    let inv_var = 1.0 / (k.sigma * k.sigma);
    let mut sum = 0.0;
    for (i, wi) in w.iter_mut().enumerate() {
        let d = (i as i64 - r) as f64 - frac;
        *wi = math::exp(-0.5 * d * d * inv_var);
        sum += *wi;
    }
    for wi in w.iter_mut() {
        *wi /= sum;
    }
    if let Some(dw) = dw {
        // d a_i / d p = a_i (g_i - p) / sigma^2; quotient rule gives
        // d w_i / d p = w_i (u_i - sum_j w_j u_j).
        let mut mean_u = 0.0;
        for (i, wi) in w.iter().enumerate() {
            let u = ((i as i64 - r) as f64 - frac) * inv_var;
            mean_u += wi * u;
        }
        for (i, (dwi, wi)) in dw.iter_mut().zip(w.iter()).enumerate() {
            let u = ((i as i64 - r) as f64 - frac) * inv_var;
            *dwi = wi * (u - mean_u);
        }
    }
}

/// Normalized `n × n` Gaussian weights (row-major, vertical index outer) for a
/// sampling centre offset `(frac_dx, frac_dy)` from the middle cell.
pub fn gaussian_weights(frac_dx: f64, frac_dy: f64, k: &SamplingKernel) -> Vec<f64> {
    let n = k.n;
    let mut wx = vec![0.0; n];
    let mut wy = vec![0.0; n];
    axis_weights(frac_dx, k, &mut wx, None);
    axis_weights(frac_dy, k, &mut wy, None);
    let mut out = Vec::with_capacity(n * n);
    for &b in &wy {
        for &a in &wx {
            out.push(a * b);
        }
    }
    out
}

/// Gradients of a scalar `Σ upstream · output` with respect to the sampler inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGradients {
    pub grad_source: FeatureMap,
    pub grad_flow: FlowField,
}

/// Interpolation rule used to read a feature grid at a real position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Sampler {
    Gaussian(SamplingKernel),
    Bilinear,
}

impl Sampler {
    /// Reads `src` at `(px, py)` into `out` (length = depth).
    pub fn sample_at(&self, src: &FeatureMap, px: f64, py: f64, out: &mut [f64]) {
        out.fill(0.0);
        self.for_each_tap(src, px, py, false, |idx, w, _| {
            for (o, s) in out.iter_mut().zip(&src.data()[idx..idx + src.depth()]) {
                *o += w * s;
            }
        });
    }

    /// Backward pass at one position: adds `w · upstream` into `grad_source`
    /// (when given) and returns `d(upstream · out) / d(px, py)`.
    pub fn backward_at(
        &self,
        src: &FeatureMap,
        px: f64,
        py: f64,
        upstream: &[f64],
        mut grad_source: Option<&mut FeatureMap>,
    ) -> [f64; 2] {
        let depth = src.depth();
        let mut g = [0.0; 2];
        self.for_each_tap(src, px, py, true, |idx, w, dw| {
            let mut dot = 0.0;
            for (u, s) in upstream.iter().zip(&src.data()[idx..idx + depth]) {
                dot += u * s;
            }
            g[0] += dw[0] * dot;
            g[1] += dw[1] * dot;
            if let Some(gs) = grad_source.as_deref_mut() {
                for (acc, u) in gs.data_mut()[idx..idx + depth].iter_mut().zip(upstream) {
                    *acc += w * u;
                }
            }
        });
        g
    }

    /// Visits every tap: flat data index of the (clamped) source cell, its
    /// weight, and the weight's derivative w.r.t. the position (zero unless
    /// `derivs` is set).
    fn for_each_tap(
        &self,
        src: &FeatureMap,
        px: f64,
        py: f64,
        derivs: bool,
        mut f: impl FnMut(usize, f64, [f64; 2]),
    ) {
        let (w, h, depth) = (src.width(), src.height(), src.depth());
        match self {
            Sampler::Gaussian(k) => {
                let n = k.n;
                let r = k.radius();
                let cx = math::round(px);
                let cy = math::round(py);
                let mut stack = [0.0f64; 4 * 15];
                let mut heap = Vec::new();
                let buf: &mut [f64] = if n <= 15 {
                    &mut stack[..4 * n]
                } else {
                    heap.resize(4 * n, 0.0);
                    &mut heap
                };
                let (wx, rest) = buf.split_at_mut(n);
                let (wy, rest) = rest.split_at_mut(n);
                let (dwx, dwy) = rest.split_at_mut(n);
                axis_weights(px - cx, k, wx, derivs.then_some(&mut *dwx));
                axis_weights(py - cy, k, wy, derivs.then_some(&mut *dwy));
                let (cx, cy) = (cx as i64, cy as i64);
                for j in 0..n {
                    let sy = math::clamp_int(cy + j as i64 - r, h);
                    for i in 0..n {
                        let sx = math::clamp_int(cx + i as i64 - r, w);
                        let weight = wx[i] * wy[j];
                        let dw = if derivs {
                            [dwx[i] * wy[j], wx[i] * dwy[j]]
                        } else {
                            [0.0; 2]
                        };
                        f((sy * w + sx) * depth, weight, dw);
                    }
                }
            }
            Sampler::Bilinear => {
                let fx0 = math::floor(px);
                let fy0 = math::floor(py);
                let tx = px - fx0;
                let ty = py - fy0;
                let (x0, y0) = (fx0 as i64, fy0 as i64);
                let xs = [math::clamp_int(x0, w), math::clamp_int(x0 + 1, w)];
                let ys = [math::clamp_int(y0, h), math::clamp_int(y0 + 1, h)];
                let wxs = [1.0 - tx, tx];
                let wys = [1.0 - ty, ty];
                let dws = [-1.0, 1.0];
                for j in 0..2 {
                    for i in 0..2 {
                        f(
                            (ys[j] * w + xs[i]) * depth,
                            wxs[i] * wys[j],
                            [dws[i] * wys[j], wxs[i] * dws[j]],
                        );
                    }
                }
            }
        }
    }

    pub fn sample(&self, src: &FeatureMap, flow: &FlowField) -> Result<FeatureMap> {
        check(src, flow)?;
        let (w, h) = src.dims();
        let mut out = FeatureMap::zeros(w, h, src.depth());
        for y in 0..h {
            for x in 0..w {
                let (px, py) = flow.position(x, y);
                self.sample_at(src, px, py, out.at_mut(x, y));
            }
        }
        Ok(out)
    }

    pub fn backward(
        &self,
        src: &FeatureMap,
        flow: &FlowField,
        upstream: &FeatureMap,
    ) -> Result<SampleGradients> {
        check(src, flow)?;
        if upstream.dims() != src.dims() || upstream.depth() != src.depth() {
            return Err(Error::DimensionMismatch {
                expected: src.dims(),
                actual: upstream.dims(),
            });
        }
        let (w, h) = src.dims();
        let mut grad_source = FeatureMap::zeros(w, h, src.depth());
        let mut grad_flow = FlowField::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let (px, py) = flow.position(x, y);
                let g = self.backward_at(src, px, py, upstream.at(x, y), Some(&mut grad_source));
                grad_flow.set(x, y, g);
            }
        }
        Ok(SampleGradients {
            grad_source,
            grad_flow,
        })
    }
}

fn check(src: &FeatureMap, flow: &FlowField) -> Result<()> {
    if src.dims() != flow.dims() {
        return Err(Error::DimensionMismatch {
            expected: src.dims(),
            actual: flow.dims(),
        });
    }
    Ok(())
}

/// Normalized Gaussian blend of the `n × n` cells around each `(x+dx, y+dy)`.
pub fn gaussian_sample(src: &FeatureMap, flow: &FlowField, k: &SamplingKernel) -> Result<FeatureMap> {
    k.validate()?;
    Sampler::Gaussian(*k).sample(src, flow)
}

/// 4-tap bilinear interpolation at each `(x+dx, y+dy)`, clamp-to-edge.
pub fn bilinear_sample(src: &FeatureMap, flow: &FlowField) -> Result<FeatureMap> {
    Sampler::Bilinear.sample(src, flow)
}

pub fn gaussian_sample_backward(
    src: &FeatureMap,
    flow: &FlowField,
    k: &SamplingKernel,
    upstream: &FeatureMap,
) -> Result<SampleGradients> {
    k.validate()?;
    Sampler::Gaussian(*k).backward(src, flow, upstream)
}

/// Bilinear backward pass. At integer positions the derivative is taken from
/// the cell to the right/below (the one `floor` selects).
pub fn bilinear_sample_backward(
    src: &FeatureMap,
    flow: &FlowField,
    upstream: &FeatureMap,
) -> Result<SampleGradients> {
    Sampler::Bilinear.backward(src, flow, upstream)
}
