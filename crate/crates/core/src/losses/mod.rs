//! Loss formulas, descriptors and quality metrics.
//!
//! The sampling-correctness loss scores a flow field by how well the
//! features it samples from the valid region agree, in cosine similarity,
//! with the target features at each hole pixel, relative to the best
//! agreement any valid position could offer:
//!
//! ```text
//! L_c = 1/N Σ_{(x,y) ∈ holes} exp(−μ(V_gt(x,y), sample(V_in, x+dx, y+dy)) / μ_max(x,y))
//! μ_max(x,y) = max_{(x',y') valid} μ(V_gt(x,y), V_in(x',y'))
//! ```

mod features;
mod metrics;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use features::{extract_features, FEATURE_DEPTH};
pub use metrics::{psnr, psnr_masked, ssim, ssim_masked, SSIM_WINDOW};

use crate::image::{FeatureMap, FlowField, ImageBuffer, Mask};
use crate::math;
use crate::warp::{Sampler, SamplingKernel};
use crate::{Error, Result};

/// Lower clamp applied to `μ_max` before it is used as a divisor.
pub const MU_MAX_FLOOR: f64 = 1e-6;

/// Weights of the structure and texture objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub l1_s: f64,
    pub adv_s: f64,
    pub l1_t: f64,
    pub corr_t: f64,
    pub adv_t: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            l1_s: 4.0,
            adv_s: 1.0,
            l1_t: 5.0,
            corr_t: 0.25,
            adv_t: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.l1_s, self.adv_s, self.l1_t, self.corr_t, self.adv_t];
        if all.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter("loss weights must be positive"));
        }
        Ok(())
    }
}

/// Grid coordinates of the missing pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoleCoords {
    width: usize,
    height: usize,
    coords: Vec<(usize, usize)>,
}

impl HoleCoords {
    pub fn new(width: usize, height: usize, coords: Vec<(usize, usize)>) -> Result<Self> {
        if coords.iter().any(|&(x, y)| x >= width || y >= height) {
            return Err(Error::InvalidData("hole coordinate out of bounds"));
        }
        Ok(Self {
            width,
            height,
            coords,
        })
    }

    /// Row-major list of the mask's hole pixels.
    pub fn from_mask(m: &Mask) -> Self {
        Self {
            width: m.width(),
            height: m.height(),
            coords: m.holes().collect(),
        }
    }

    pub fn coords(&self) -> &[(usize, usize)] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

fn norm(a: &[f64]) -> f64 {
    math::sqrt(a.iter().map(|v| v * v).sum())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine of the angle between two equal-length vectors, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidData("vector lengths differ"));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(cos_with_norms(a, b, na, nb))
}

#[inline]
fn cos_with_norms(a: &[f64], b: &[f64], na: f64, nb: f64) -> f64 {
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

fn check_feature_shapes(a: &FeatureMap, b: &FeatureMap) -> Result<()> {
    if a.dims() != b.dims() || a.depth() != b.depth() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            actual: b.dims(),
        });
    }
    Ok(())
}

/// Highest cosine similarity between `vgt` at `at` and `vin` at any valid
/// (unmasked) position.
pub fn best_match_similarity(
    vgt: &FeatureMap,
    vin: &FeatureMap,
    at: (usize, usize),
    valid: &Mask,
) -> Result<f64> {
    check_feature_shapes(vgt, vin)?;
    if valid.dims() != vin.dims() {
        return Err(Error::DimensionMismatch {
            expected: vin.dims(),
            actual: valid.dims(),
        });
    }
    if at.0 >= vgt.width() || at.1 >= vgt.height() {
        return Err(Error::InvalidData("position out of bounds"));
    }
    let g = vgt.at(at.0, at.1);
    let ng = norm(g);
    if ng == 0.0 {
        return Err(Error::ZeroVector);
    }
    let mut best: Option<f64> = None;
    for (x, y) in valid.valid() {
        let v = vin.at(x, y);
        let nv = norm(v);
        if nv == 0.0 {
            continue;
        }
        let mu = cos_with_norms(g, v, ng, nv);
        best = Some(best.map_or(mu, |b: f64| b.max(mu)));
    }
    best.ok_or(Error::EmptyValidSet)
}

/// Best-match similarity for every hole coordinate (unclamped).
pub fn max_similarities(
    vgt: &FeatureMap,
    vin: &FeatureMap,
    holes: &HoleCoords,
    valid: &Mask,
) -> Result<Vec<f64>> {
    check_feature_shapes(vgt, vin)?;
    if valid.dims() != vin.dims() {
        return Err(Error::DimensionMismatch {
            expected: vin.dims(),
            actual: valid.dims(),
        });
    }
    let candidates: Vec<(&[f64], f64)> = valid
        .valid()
        .map(|(x, y)| {
            let v = vin.at(x, y);
            (v, norm(v))
        })
        .filter(|(_, n)| *n > 0.0)
        .collect();
    if candidates.is_empty() {
        return Err(Error::EmptyValidSet);
    }
    holes
        .coords()
        .iter()
        .map(|&(x, y)| {
            let g = vgt.at(x, y);
            let ng = norm(g);
            if ng == 0.0 {
                return Err(Error::ZeroVector);
            }
            Ok(candidates
                .iter()
                .map(|(v, nv)| cos_with_norms(g, v, ng, *nv))
                .fold(f64::NEG_INFINITY, f64::max))
        })
        .collect()
}

/// Value and flow gradient of the sampling-correctness loss.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectnessLoss {
    pub value: f64,
    /// Zero outside the hole coordinates.
    pub grad_flow: FlowField,
}

/// Sampling-correctness loss with `μ_max` precomputed, for repeated
/// evaluation along an optimization path. `μ_max` is held constant when
/// differentiating.
#[derive(Debug, Clone)]
pub struct CorrectnessObjective<'a> {
    vgt: &'a FeatureMap,
    vin: &'a FeatureMap,
    holes: &'a HoleCoords,
    mu_max: Vec<f64>,
    sampler: Sampler,
}

impl<'a> CorrectnessObjective<'a> {
    pub fn new(
        vgt: &'a FeatureMap,
        vin: &'a FeatureMap,
        holes: &'a HoleCoords,
        valid: &Mask,
        sampler: Sampler,
    ) -> Result<Self> {
        if holes.is_empty() {
            return Err(Error::EmptyValidSet);
        }
        if holes.dims() != vgt.dims() {
            return Err(Error::DimensionMismatch {
                expected: vgt.dims(),
                actual: holes.dims(),
            });
        }
        if let Sampler::Gaussian(k) = &sampler {
            k.validate()?;
        }
        let mu_max = max_similarities(vgt, vin, holes, valid)?
            .into_iter()
            .map(|m| m.max(MU_MAX_FLOOR))
            .collect();
        Ok(Self {
            vgt,
            vin,
            holes,
            mu_max,
            sampler,
        })
    }

    /// Clamped `μ_max` per hole coordinate.
    pub fn mu_max(&self) -> &[f64] {
        &self.mu_max
    }

    pub fn sampler(&self) -> Sampler {
        self.sampler
    }

    fn check_flow(&self, flow: &FlowField) -> Result<()> {
        if flow.dims() != self.vin.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.vin.dims(),
                actual: flow.dims(),
            });
        }
        Ok(())
    }

    /// Per-hole terms `exp(−μ/μ_max)`.
    pub fn terms(&self, flow: &FlowField) -> Result<Vec<f64>> {
        self.check_flow(flow)?;
        let mut buf = alloc::vec![0.0; self.vin.depth()];
        self.holes
            .coords()
            .iter()
            .zip(&self.mu_max)
            .map(|(&(x, y), &mmax)| {
                let (px, py) = flow.position(x, y);
                self.sampler.sample_at(self.vin, px, py, &mut buf);
                let mu = cosine_similarity(self.vgt.at(x, y), &buf)?;
                Ok(math::exp(-mu / mmax))
            })
            .collect()
    }

    pub fn value(&self, flow: &FlowField) -> Result<f64> {
        let terms = self.terms(flow)?;
        Ok(terms.iter().sum::<f64>() / terms.len() as f64)
    }

    pub fn evaluate(&self, flow: &FlowField) -> Result<CorrectnessLoss> {
        self.check_flow(flow)?;
        let n = self.holes.len() as f64;
        let depth = self.vin.depth();
        let mut buf = alloc::vec![0.0; depth];
        let mut upstream = alloc::vec![0.0; depth];
        let mut grad_flow = FlowField::zeros(flow.width(), flow.height());
        let mut value = 0.0;
        for (&(x, y), &mmax) in self.holes.coords().iter().zip(&self.mu_max) {
            let (px, py) = flow.position(x, y);
            self.sampler.sample_at(self.vin, px, py, &mut buf);
            let g = self.vgt.at(x, y);
            let (ng, nv) = (norm(g), norm(&buf));
            if ng == 0.0 || nv == 0.0 {
                return Err(Error::ZeroVector);
            }
            let mu = cos_with_norms(g, &buf, ng, nv);
            let term = math::exp(-mu / mmax);
            value += term;
            // dμ/dv = g / (|g||v|) − μ v / |v|²
            let scale = -term / (mmax * n);
            for ((u, gi), vi) in upstream.iter_mut().zip(g).zip(&buf) {
                *u = scale * (gi / (ng * nv) - mu * vi / (nv * nv));
            }
            let d = self.sampler.backward_at(self.vin, px, py, &upstream, None);
            grad_flow.set(x, y, d);
        }
        Ok(CorrectnessLoss {
            value: value / n,
            grad_flow,
        })
    }
}

/// Sampling-correctness loss of `flow` under Gaussian sampling with kernel `k`.
pub fn sampling_correctness_loss(
    vgt: &FeatureMap,
    vin: &FeatureMap,
    flow: &FlowField,
    holes: &HoleCoords,
    k: &SamplingKernel,
    valid: &Mask,
) -> Result<CorrectnessLoss> {
    check_feature_shapes(vgt, vin)?;
    CorrectnessObjective::new(vgt, vin, holes, valid, Sampler::Gaussian(*k))?.evaluate(flow)
}

fn same_image_shape(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if a.dims() != b.dims() || a.channels() != b.channels() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            actual: b.dims(),
        });
    }
    Ok(())
}

/// Mean absolute difference over all samples.
pub fn l1_loss(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    same_image_shape(a, b)?;
    let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| math::abs(x - y)).sum();
    Ok(s / a.data().len() as f64)
}

/// Mean absolute difference over the hole pixels of `m`; `None` without holes.
pub fn l1_loss_masked(a: &ImageBuffer, b: &ImageBuffer, m: &Mask) -> Result<Option<f64>> {
    same_image_shape(a, b)?;
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
            acc += math::abs(a.get(x, y, ch) - b.get(x, y, ch));
        }
        n += c;
    }
    Ok((n > 0).then(|| acc / n as f64))
}

fn check_scores(scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::InvalidData("empty score field"));
    }
    match scores.iter().find(|s| !(**s > 0.0 && **s < 1.0)) {
        Some(s) => Err(Error::ScoreOutOfRange(*s)),
        None => Ok(()),
    }
}

/// `mean(ln real) + mean(ln(1 − fake))` over discriminator probability fields.
pub fn adversarial_loss(real_scores: &[f64], fake_scores: &[f64]) -> Result<f64> {
    check_scores(real_scores)?;
    check_scores(fake_scores)?;
    let real = real_scores.iter().map(|s| math::ln(*s)).sum::<f64>() / real_scores.len() as f64;
    let fake = fake_scores.iter().map(|s| math::ln(1.0 - s)).sum::<f64>() / fake_scores.len() as f64;
    Ok(real + fake)
}

/// `l1_s · l1 + adv_s · adv` from precomputed components.
pub fn structure_total(l1: f64, adv: f64, w: &LossWeights) -> f64 {
    w.l1_s * l1 + w.adv_s * adv
}

/// `l1_t · l1 + corr_t · corr + adv_t · adv` from precomputed components.
pub fn texture_total(l1: f64, corr: f64, adv: f64, w: &LossWeights) -> f64 {
    w.l1_t * l1 + w.corr_t * corr + w.adv_t * adv
}

/// Weighted structure objective.
pub fn structure_objective(
    pred: &ImageBuffer,
    target: &ImageBuffer,
    real_scores: &[f64],
    fake_scores: &[f64],
    w: &LossWeights,
) -> Result<f64> {
    w.validate()?;
    let l1 = l1_loss(pred, target)?;
    let adv = adversarial_loss(real_scores, fake_scores)?;
    Ok(structure_total(l1, adv, w))
}

/// Weighted texture objective; `correctness` is a precomputed sampling-correctness value.
pub fn texture_objective(
    pred: &ImageBuffer,
    target: &ImageBuffer,
    correctness: f64,
    real_scores: &[f64],
    fake_scores: &[f64],
    w: &LossWeights,
) -> Result<f64> {
    w.validate()?;
    let l1 = l1_loss(pred, target)?;
    let adv = adversarial_loss(real_scores, fake_scores)?;
    Ok(texture_total(l1, correctness, adv, w))
}
