//! Texture generation through an appearance-flow field.
//!
//! Every hole pixel gets a flow vector pointing at a valid source location.
//! The field is initialized by a structure-guided nearest-neighbour search
//! (randomized propagation and search over structure patches), refined by
//! gradient descent on the sampling-correctness loss plus a smoothness
//! penalty, solved coarse to fine, and finally used to warp the valid
//! content into the hole.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::image::{apply_mask, build_pyramid, pyramid_sizes, FlowField, ImageBuffer, Mask};
use crate::losses::{extract_features, CorrectnessObjective, HoleCoords, LossWeights};
use crate::math;
use crate::rtv::{rtv_smooth, RtvParams};
use crate::structure::{complete_structure, composite_structure, StructureFillParams};
use crate::warp::{Sampler, SamplingKernel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowOptConfig {
    pub pyramid_levels: usize,
    pub steps_per_level: usize,
    /// Largest per-pixel displacement of one descent step, in pixels.
    pub step_size: f64,
    pub smoothness_weight: f64,
    pub kernel: SamplingKernel,
    /// Odd patch side used by the nearest-neighbour search.
    pub patch: usize,
    pub nnf_iters: usize,
    /// Match/re-render rounds per pyramid level before descent.
    pub em_rounds: usize,
    /// Weight of structure-patch distance relative to the current estimate.
    pub structure_guidance: f64,
}

impl Default for FlowOptConfig {
    fn default() -> Self {
        Self {
            pyramid_levels: 3,
            steps_per_level: 200,
            step_size: 0.5,
            smoothness_weight: 0.1,
            kernel: SamplingKernel::default(),
            patch: 13,
            nnf_iters: 5,
            em_rounds: 3,
            structure_guidance: 1.0,
        }
    }
}

impl FlowOptConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if self.pyramid_levels == 0 {
            return Err(Error::InvalidParameter("flow pyramid needs at least one level"));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::InvalidParameter("step size must be positive"));
        }
        if !(self.smoothness_weight >= 0.0) || !self.smoothness_weight.is_finite() {
            return Err(Error::InvalidParameter("smoothness weight must be non-negative"));
        }
        if !(self.structure_guidance >= 0.0) || !self.structure_guidance.is_finite() {
            return Err(Error::InvalidParameter("structure guidance must be non-negative"));
        }
        if self.patch < 3 || self.patch % 2 == 0 {
            return Err(Error::InvalidParameter("patch side must be odd and at least 3"));
        }
        Ok(())
    }
}

/// For every pixel, the closest valid pixel (itself when valid). Computed by
/// forward/backward sweeps that propagate nearest sites over 8-neighbours.
pub fn nearest_valid_map(m: &Mask) -> Result<Vec<(usize, usize)>> {
    if !m.has_valid() {
        return Err(Error::NoValidSource);
    }
    let (w, h) = m.dims();
    let mut site: Vec<Option<(usize, usize)>> = (0..w * h)
        .map(|i| (!m.bits()[i]).then_some((i % w, i / w)))
        .collect();
    let d2 = |x: usize, y: usize, s: (usize, usize)| {
        let dx = x as i64 - s.0 as i64;
        let dy = y as i64 - s.1 as i64;
        dx * dx + dy * dy
    };
    let relax = |x: usize, y: usize, nx: i64, ny: i64, site: &mut Vec<Option<(usize, usize)>>| {
        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
            return;
        }
        if let Some(s) = site[ny as usize * w + nx as usize] {
            let cur = site[y * w + x];
            if cur.is_none_or(|c| (d2(x, y, s), s.1, s.0) < (d2(x, y, c), c.1, c.0)) {
                site[y * w + x] = Some(s);
            }
        }
    };
    loop {
        let before = site.clone();
        for y in 0..h {
            for x in 0..w {
                let (xi, yi) = (x as i64, y as i64);
                for (dx, dy) in [(-1, 0), (-1, -1), (0, -1), (1, -1)] {
                    relax(x, y, xi + dx, yi + dy, &mut site);
                }
            }
        }
        for y in (0..h).rev() {
            for x in (0..w).rev() {
                let (xi, yi) = (x as i64, y as i64);
                for (dx, dy) in [(1, 0), (1, 1), (0, 1), (-1, 1)] {
                    relax(x, y, xi + dx, yi + dy, &mut site);
                }
            }
        }
        if site == before {
            break;
        }
    }
    Ok(site.into_iter().map(|s| s.expect("every pixel reached")).collect())
}

/// Makes a flow legal for `m`: zero on valid pixels; on hole pixels the
/// sampling position is kept inside the image and, when its nearest cell is
/// a hole, moved onto the closest valid pixel.
pub fn project_flow(flow: &mut FlowField, m: &Mask, nearest: &[(usize, usize)]) {
    let (w, h) = m.dims();
    for y in 0..h {
        for x in 0..w {
            if !m.is_hole(x, y) {
                flow.set(x, y, [0.0, 0.0]);
                continue;
            }
            let (px, py) = flow.position(x, y);
            let px = px.clamp(0.0, (w - 1) as f64);
            let py = py.clamp(0.0, (h - 1) as f64);
            let (tx, ty) = (math::clamp_index(px, w), math::clamp_index(py, h));
            let (px, py) = if m.is_hole(tx, ty) {
                let (vx, vy) = nearest[ty * w + tx];
                (vx as f64, vy as f64)
            } else {
                (px, py)
            };
            flow.set(x, y, [px - x as f64, py - y as f64]);
        }
    }
}

/// `true` when every hole pixel's clamped, rounded target is a valid pixel.
pub fn flow_is_legal(flow: &FlowField, m: &Mask) -> bool {
    m.holes().all(|(x, y)| {
        let (tx, ty) = flow.target(x, y);
        !m.is_hole(tx, ty)
    })
}

/// Weighted sum of squared differences between the patches centred at `a`
/// and `b` over every guide (clamp-to-edge), abandoning once it exceeds `bound`.
fn patch_ssd(guides: &[(&ImageBuffer, f64)], a: (usize, usize), b: (usize, usize), r: i64, bound: f64) -> f64 {
    let (w, h) = guides[0].0.dims();
    let mut acc = 0.0;
    for dy in -r..=r {
        let ay = math::clamp_int(a.1 as i64 + dy, h);
        let by = math::clamp_int(b.1 as i64 + dy, h);
        for dx in -r..=r {
            let ax = math::clamp_int(a.0 as i64 + dx, w);
            let bx = math::clamp_int(b.0 as i64 + dx, w);
            for (guide, weight) in guides {
                let pa = guide.pixel(ax, ay);
                let pb = guide.pixel(bx, by);
                let mut d2 = 0.0;
                for (u, v) in pa.iter().zip(pb) {
                    d2 += (u - v) * (u - v);
                }
                acc += weight * d2;
            }
        }
        if acc > bound {
            return acc;
        }
    }
    acc
}

/// Structure-guided nearest-neighbour field: each hole pixel is sent to the
/// valid pixel whose structure patch best matches its own, found by
/// randomized propagation and search. Equal costs go to the lowest
/// `(y, x)` source. Valid pixels get zero flow.
pub fn init_flow_nnf(s_hat: &ImageBuffer, m: &Mask, cfg: &FlowOptConfig, seed: u64) -> Result<FlowField> {
    init_flow_nnf_from(s_hat, m, cfg, seed, None)
}

/// As [`init_flow_nnf`], optionally starting from an existing field instead
/// of random valid targets.
pub fn init_flow_nnf_from(
    s_hat: &ImageBuffer,
    m: &Mask,
    cfg: &FlowOptConfig,
    seed: u64,
    initial: Option<&FlowField>,
) -> Result<FlowField> {
    nnf_search(&[(s_hat, 1.0)], m, cfg, seed, initial)
}

/// Randomized nearest-neighbour search over the weighted sum of patch
/// distances in several aligned guide images.
fn nnf_search(
    guides: &[(&ImageBuffer, f64)],
    m: &Mask,
    cfg: &FlowOptConfig,
    seed: u64,
    initial: Option<&FlowField>,
) -> Result<FlowField> {
    cfg.validate()?;
    for (g, _) in guides {
        if g.dims() != m.dims() {
            return Err(Error::DimensionMismatch {
                expected: g.dims(),
                actual: m.dims(),
            });
        }
    }
    let (w, h) = m.dims();
    if !m.has_holes() {
        return Ok(FlowField::zeros(w, h));
    }
    let valid: Vec<(usize, usize)> = m.valid().collect();
    if valid.is_empty() {
        return Err(Error::NoValidSource);
    }
    let holes: Vec<(usize, usize)> = m.holes().collect();
    let mut slot = vec![usize::MAX; w * h];
    for (k, &(x, y)) in holes.iter().enumerate() {
        slot[y * w + x] = k;
    }
    let r = (cfg.patch / 2) as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut target: Vec<(usize, usize)> = match initial {
        Some(f) => {
            let mut f = f.clone();
            project_flow(&mut f, m, &nearest_valid_map(m)?);
            holes.iter().map(|&(x, y)| f.target(x, y)).collect()
        }
        None => holes
            .iter()
            .map(|_| valid[rng.random_range(0..valid.len())])
            .collect(),
    };
    let mut cost: Vec<f64> = holes
        .iter()
        .zip(&target)
        .map(|(&p, &t)| patch_ssd(guides, p, t, r, f64::INFINITY))
        .collect();

    let better = |c: f64, t: (usize, usize), best: f64, bt: (usize, usize)| {
        c < best || (c == best && (t.1, t.0) < (bt.1, bt.0))
    };
    let max_radius = w.max(h) as i64;
    for iter in 0..cfg.nnf_iters {
        let forward = iter % 2 == 0;
        let step: i64 = if forward { 1 } else { -1 };
        for n in 0..holes.len() {
            let k = if forward { n } else { holes.len() - 1 - n };
            let (x, y) = holes[k];
            let try_candidate = |t: (usize, usize), target: &mut [(usize, usize)], cost: &mut [f64]| {
                if m.is_hole(t.0, t.1) {
                    return;
                }
                let c = patch_ssd(guides, (x, y), t, r, cost[k]);
                if better(c, t, cost[k], target[k]) {
                    cost[k] = c;
                    target[k] = t;
                }
            };
            // Propagation: reuse the offset of the previous neighbour in scan order.
            for (nx, ny) in [(x as i64 - step, y as i64), (x as i64, y as i64 - step)] {
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = slot[ny as usize * w + nx as usize];
                if j == usize::MAX {
                    continue;
                }
                let (tx, ty) = target[j];
                let cx = tx as i64 + (x as i64 - nx);
                let cy = ty as i64 + (y as i64 - ny);
                if cx >= 0 && cy >= 0 && cx < w as i64 && cy < h as i64 {
                    try_candidate((cx as usize, cy as usize), &mut target, &mut cost);
                }
            }
            // Random search in shrinking windows around the current best.
            let mut radius = max_radius;
            while radius >= 1 {
                let (bx, by) = target[k];
                let cx = math::clamp_int(bx as i64 + rng.random_range(-radius..=radius), w);
                let cy = math::clamp_int(by as i64 + rng.random_range(-radius..=radius), h);
                try_candidate((cx, cy), &mut target, &mut cost);
                radius /= 2;
            }
        }
    }

    let mut flow = FlowField::zeros(w, h);
    for (&(x, y), &(tx, ty)) in holes.iter().zip(&target) {
        flow.set(x, y, [tx as f64 - x as f64, ty as f64 - y as f64]);
    }
    Ok(flow)
}

/// Result of [`optimize_flow`].
#[derive(Debug, Clone, PartialEq)]
pub struct FlowOutcome {
    pub flow: FlowField,
    /// Objective before the first step followed by one value per accepted step.
    pub trace: Vec<f64>,
}

/// `(1/N) Σ ‖f_p − f_q‖²` over 4-neighbour pairs inside the hole, with its
/// gradient. Flow is measured in normalized `[-1, 1]` image coordinates so the
/// penalty does not grow with resolution.
fn smoothness(flow: &FlowField, m: &Mask, n: f64, grad: Option<&mut FlowField>) -> f64 {
    let (w, h) = m.dims();
    let (sx, sy) = (2.0 / w as f64, 2.0 / h as f64);
    let mut value = 0.0;
    let mut g = grad;
    for (x, y) in m.holes() {
        let f = flow.get(x, y);
        for (nx, ny) in [(x + 1, y), (x, y + 1)] {
            if nx >= w || ny >= h || !m.is_hole(nx, ny) {
                continue;
            }
            let q = flow.get(nx, ny);
            let d = [(f[0] - q[0]) * sx, (f[1] - q[1]) * sy];
            value += d[0] * d[0] + d[1] * d[1];
            if let Some(g) = g.as_deref_mut() {
                let (gx, gy) = (2.0 * d[0] * sx / n, 2.0 * d[1] * sy / n);
                let a = g.get(x, y);
                g.set(x, y, [a[0] + gx, a[1] + gy]);
                let b = g.get(nx, ny);
                g.set(nx, ny, [b[0] - gx, b[1] - gy]);
            }
        }
    }
    value / n
}

/// Smoothness energy of the pairs touching hole pixel `(x, y)` when it takes
/// flow `f` and its neighbours keep theirs.
fn local_smoothness(flow: &FlowField, m: &Mask, x: usize, y: usize, f: [f64; 2]) -> f64 {
    let (w, h) = m.dims();
    let (sx, sy) = (2.0 / w as f64, 2.0 / h as f64);
    let mut e = 0.0;
    for (nx, ny) in [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)] {
        if nx >= w || ny >= h || !m.is_hole(nx, ny) {
            continue;
        }
        let q = flow.get(nx, ny);
        let (dx, dy) = ((f[0] - q[0]) * sx, (f[1] - q[1]) * sy);
        e += dx * dx + dy * dy;
    }
    e
}

/// Smallest per-pixel step before a pixel is considered converged.
const MIN_STEP: f64 = 1e-3;

/// Descends `L_c + smooth · R` by normalized gradient steps.
///
/// Every hole pixel moves along its own gradient direction by its own step
/// length, which starts at `step_size` pixels, grows by half after an
/// accepted move (capped at `step_size`) and halves after a rejected one. A
/// pixel's move is accepted when it lowers that pixel's correctness term
/// plus the smoothness of its pairs. If the combined update would raise the
/// total objective, only the accepted moves of one checkerboard colour are
/// kept (those cannot interact); if even that fails, the update is dropped
/// and every step halves. The trace therefore never increases. Stops after `steps` updates or when every step
/// has shrunk below `1e-3` px.
pub fn descend(
    objective: &CorrectnessObjective<'_>,
    m: &Mask,
    flow0: &FlowField,
    steps: usize,
    step_size: f64,
    smooth: f64,
) -> Result<FlowOutcome> {
    let nearest = nearest_valid_map(m)?;
    let holes: Vec<(usize, usize)> = m.holes().collect();
    let n = holes.len().max(1) as f64;
    let mut flow = flow0.clone();
    project_flow(&mut flow, m, &nearest);
    let total = |terms: &[f64], f: &FlowField| -> f64 {
        let mut v = terms.iter().sum::<f64>() / n;
        if smooth > 0.0 {
            v += smooth * smoothness(f, m, n, None);
        }
        v
    };
    let mut terms = objective.terms(&flow)?;
    let mut current = total(&terms, &flow);
    if !current.is_finite() {
        return Err(Error::Divergence(0));
    }
    let mut trace = vec![current];
    let mut alpha = vec![step_size; holes.len()];
    for step in 1..=steps {
        if alpha.iter().all(|a| *a < MIN_STEP) {
            break;
        }
        let mut grad = objective.evaluate(&flow)?.grad_flow;
        if smooth > 0.0 {
            let mut gs = FlowField::zeros(flow.width(), flow.height());
            smoothness(&flow, m, n, Some(&mut gs));
            for &(x, y) in &holes {
                let (a, b) = (grad.get(x, y), gs.get(x, y));
                grad.set(x, y, [a[0] + smooth * b[0], a[1] + smooth * b[1]]);
            }
        }
        let mut cand = flow.clone();
        for (k, &(x, y)) in holes.iter().enumerate() {
            let g = grad.get(x, y);
            let norm = math::sqrt(g[0] * g[0] + g[1] * g[1]);
            if !norm.is_finite() {
                return Err(Error::Divergence(step));
            }
            if norm > 0.0 && alpha[k] >= MIN_STEP {
                let f = flow.get(x, y);
                cand.set(x, y, [f[0] - alpha[k] * g[0] / norm, f[1] - alpha[k] * g[1] / norm]);
            }
        }
        project_flow(&mut cand, m, &nearest);
        let cand_terms = objective.terms(&cand)?;
        let mut next = flow.clone();
        let mut next_terms = terms.clone();
        let mut moved = vec![false; holes.len()];
        for (k, &(x, y)) in holes.iter().enumerate() {
            let (old, new) = (flow.get(x, y), cand.get(x, y));
            if old == new {
                continue;
            }
            let mut before = terms[k];
            let mut after = cand_terms[k];
            if smooth > 0.0 {
                before += smooth * local_smoothness(&flow, m, x, y, old);
                after += smooth * local_smoothness(&flow, m, x, y, new);
            }
            if after < before {
                next.set(x, y, new);
                next_terms[k] = cand_terms[k];
                moved[k] = true;
            }
        }
        // Terms depend only on each pixel's own flow, so the kept entries are exact.
        let mut value = total(&next_terms, &next);
        let mut deferred = vec![false; holes.len()];
        if value > current {
            // Neighbours that both moved can undo each other's smoothness
            // gain. Keeping one checkerboard colour leaves no accepted pair
            // adjacent, so every kept move lowers the total by its own
            // local amount.
            next = flow.clone();
            next_terms = terms.clone();
            for (k, &(x, y)) in holes.iter().enumerate() {
                if moved[k] && (x + y + step) % 2 == 1 {
                    moved[k] = false;
                    deferred[k] = true;
                } else if moved[k] {
                    next.set(x, y, cand.get(x, y));
                    next_terms[k] = cand_terms[k];
                }
            }
            value = total(&next_terms, &next);
        }
        if !value.is_finite() {
            return Err(Error::Divergence(step));
        }
        if value <= current && moved.iter().any(|v| *v) {
            for (k, a) in alpha.iter_mut().enumerate() {
                if moved[k] {
                    *a = (*a * 1.5).min(step_size);
                } else if !deferred[k] {
                    *a *= 0.5;
                }
            }
            flow = next;
            terms = next_terms;
            current = value;
        } else {
            for a in alpha.iter_mut() {
                *a *= 0.5;
            }
        }
        trace.push(current);
    }
    Ok(FlowOutcome { flow, trace })
}

/// Feature grids for one level: targets from the structure image, sources
/// from the input with its hole filled by that structure.
fn level_features(
    i_in: &ImageBuffer,
    s_hat: &ImageBuffer,
    m: &Mask,
) -> Result<(crate::FeatureMap, crate::FeatureMap)> {
    let source = composite_structure(s_hat, i_in, m)?;
    Ok((extract_features(s_hat, 0), extract_features(&source, 0)))
}

/// Refines `flow0` on the hole of `m` by gradient descent on the
/// sampling-correctness loss (structure features of `s_hat` against features
/// of the valid input) plus `smoothness_weight` times the flow smoothness
/// penalty. Valid-region flow stays zero and every target stays on a valid
/// pixel.
///
/// At inference there are no ℓ1 or adversarial terms, and `corr_t` would only
/// scale the whole objective, which the normalized step ignores; `w` is
/// validated and the trace is reported in units of `L_c`.
pub fn optimize_flow(
    i_in: &ImageBuffer,
    s_hat: &ImageBuffer,
    m: &Mask,
    flow0: &FlowField,
    cfg: &FlowOptConfig,
    w: &LossWeights,
) -> Result<FlowOutcome> {
    cfg.validate()?;
    w.validate()?;
    for d in [s_hat.dims(), m.dims(), flow0.dims()] {
        if d != i_in.dims() {
            return Err(Error::DimensionMismatch {
                expected: i_in.dims(),
                actual: d,
            });
        }
    }
    if !m.has_holes() {
        return Ok(FlowOutcome {
            flow: FlowField::zeros(m.width(), m.height()),
            trace: Vec::new(),
        });
    }
    let (vgt, vin) = level_features(i_in, s_hat, m)?;
    let holes = HoleCoords::from_mask(m);
    let objective = CorrectnessObjective::new(&vgt, &vin, &holes, m, Sampler::Gaussian(cfg.kernel))?;
    descend(
        &objective,
        m,
        flow0,
        cfg.steps_per_level,
        cfg.step_size,
        cfg.smoothness_weight,
    )
}

/// `I_in ∘ (1 − M) + warp(I_in) ∘ M`, warping with Gaussian sampling.
pub fn render_fill(i_in: &ImageBuffer, flow: &FlowField, m: &Mask, k: &SamplingKernel) -> Result<ImageBuffer> {
    k.validate()?;
    for d in [flow.dims(), m.dims()] {
        if d != i_in.dims() {
            return Err(Error::DimensionMismatch {
                expected: i_in.dims(),
                actual: d,
            });
        }
    }
    let src = i_in.to_features();
    let sampler = Sampler::Gaussian(*k);
    let mut out = i_in.clone();
    let mut buf = vec![0.0; i_in.channels()];
    for (x, y) in m.holes() {
        let (px, py) = flow.position(x, y);
        sampler.sample_at(&src, px, py, &mut buf);
        for (c, v) in buf.iter().enumerate() {
            out.set(x, y, c, *v);
        }
    }
    Ok(out)
}

/// Every tunable of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InpaintConfig {
    pub rtv: RtvParams,
    pub fill: StructureFillParams,
    pub flowopt: FlowOptConfig,
    pub weights: LossWeights,
    /// Kernel used to warp pixels into the hole for the final image.
    pub render_kernel: SamplingKernel,
    pub seed: u64,
}

impl Default for InpaintConfig {
    fn default() -> Self {
        Self {
            rtv: RtvParams::default(),
            fill: StructureFillParams::default(),
            flowopt: FlowOptConfig::default(),
            weights: LossWeights::default(),
            render_kernel: SamplingKernel { n: 3, sigma: 0.05 },
            seed: 0,
        }
    }
}

impl InpaintConfig {
    pub fn validate(&self) -> Result<()> {
        self.rtv.validate()?;
        self.fill.validate()?;
        self.flowopt.validate()?;
        self.weights.validate()?;
        self.render_kernel.validate()
    }
}

/// Pipeline products.
#[derive(Debug, Clone, PartialEq)]
pub struct InpaintOutput {
    /// Completed structure image.
    pub s_hat: ImageBuffer,
    pub flow: FlowField,
    pub i_hat: ImageBuffer,
    /// Objective traces of every pyramid level, coarsest first.
    pub traces: Vec<Vec<f64>>,
}

/// Which stages run; used by the ablation harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Structure extraction and completion, then flow-based texture.
    Full,
    /// The texture stage is guided by the masked input itself instead of a
    /// completed structure image.
    NoStructure,
    /// Harmonic diffusion of the raw input; no flow.
    NoFlow,
}

/// Smoothed structure of the valid region, completed over the hole.
pub fn structure_of(i_in: &ImageBuffer, m: &Mask, cfg: &InpaintConfig) -> Result<ImageBuffer> {
    // Pre-fill so the smoother does not see an artificial edge at the hole border.
    let prefilled = complete_structure(i_in, m, &StructureFillParams::harmonic())?;
    let smooth = rtv_smooth(&prefilled, &cfg.rtv)?;
    let s_in = apply_mask(&smooth, m)?;
    complete_structure(&s_in, m, &cfg.fill)
}

/// Full pipeline: structure extraction of the valid region, structure
/// completion, nearest-neighbour flow initialization, coarse-to-fine flow
/// refinement, rendering. Valid pixels of the result equal the input exactly.
pub fn inpaint(img: &ImageBuffer, m: &Mask, cfg: &InpaintConfig) -> Result<InpaintOutput> {
    inpaint_variant(img, m, cfg, Variant::Full)
}

/// Supplies a caller-provided structure image (e.g. an edited one) and runs
/// only the texture stage.
pub fn inpaint_with_structure(
    img: &ImageBuffer,
    m: &Mask,
    s_hat: &ImageBuffer,
    cfg: &InpaintConfig,
) -> Result<InpaintOutput> {
    cfg.validate()?;
    check_inputs(img, m)?;
    if s_hat.dims() != img.dims() || s_hat.channels() != img.channels() {
        return Err(Error::DimensionMismatch {
            expected: img.dims(),
            actual: s_hat.dims(),
        });
    }
    let i_in = apply_mask(img, m)?;
    texture_stage(img, &i_in, m, s_hat.clone(), cfg)
}

fn check_inputs(img: &ImageBuffer, m: &Mask) -> Result<()> {
    if img.dims() != m.dims() {
        return Err(Error::DimensionMismatch {
            expected: img.dims(),
            actual: m.dims(),
        });
    }
    Ok(())
}

pub fn inpaint_variant(img: &ImageBuffer, m: &Mask, cfg: &InpaintConfig, variant: Variant) -> Result<InpaintOutput> {
    cfg.validate()?;
    check_inputs(img, m)?;
    let (w, h) = img.dims();
    if !m.has_holes() {
        return Ok(InpaintOutput {
            s_hat: rtv_smooth(img, &cfg.rtv)?,
            flow: FlowField::zeros(w, h),
            i_hat: img.clone(),
            traces: Vec::new(),
        });
    }
    let i_in = apply_mask(img, m)?;
    match variant {
        Variant::Full => {
            let s_hat = structure_of(&i_in, m, cfg)?;
            texture_stage(img, &i_in, m, s_hat, cfg)
        }
        Variant::NoStructure => texture_stage(img, &i_in, m, i_in.clone(), cfg),
        Variant::NoFlow => {
            let fill = complete_structure(&i_in, m, &StructureFillParams::harmonic())?;
            Ok(InpaintOutput {
                s_hat: fill.clone(),
                flow: FlowField::zeros(w, h),
                i_hat: composite_structure(&fill, img, m)?,
                traces: Vec::new(),
            })
        }
    }
}

/// Usable pyramid depth: the configured one, reduced while the coarsest
/// level would be too small or lose all valid pixels.
fn usable_levels(img: &ImageBuffer, m: &Mask, levels: usize) -> usize {
    let (w, h) = img.dims();
    (1..=levels)
        .rev()
        .find(|&l| {
            pyramid_sizes(w, h, l, 2.0).is_ok_and(|sizes| {
                let (cw, ch) = sizes[0];
                m.downsample(cw, ch).has_valid()
            })
        })
        .unwrap_or(1)
}

/// One pyramid level of the texture stage.
///
/// The hole estimate starts as `estimate` (the completed structure at the
/// coarsest level, the upsampled result of the previous level afterwards).
/// Each round matches patches of the estimate, weighted together with the
/// structure image, re-renders the hole from the matches and feeds the
/// result back as the next estimate; the final field is then refined by
/// [`optimize_flow`] against the features of the last estimate, once per
/// kernel of [`anneal_schedule`].
fn texture_level(
    i_in: &ImageBuffer,
    s_hat: &ImageBuffer,
    m: &Mask,
    estimate: &ImageBuffer,
    prior: Option<&FlowField>,
    cfg: &InpaintConfig,
    seed: u64,
) -> Result<(FlowField, ImageBuffer, Vec<f64>)> {
    let fo = &cfg.flowopt;
    let source = composite_structure(s_hat, i_in, m)?;
    let mut guess = composite_structure(estimate, i_in, m)?;
    let mut flow = prior.cloned();
    for round in 0..fo.em_rounds.max(1) {
        let guides = [(&guess, 1.0), (s_hat, fo.structure_guidance)];
        let f = nnf_search(&guides, m, fo, seed.wrapping_add(round as u64), flow.as_ref())?;
        guess = render_fill(&source, &f, m, &cfg.render_kernel)?;
        flow = Some(f);
    }
    let matched = flow.expect("at least one round");
    let mut flow = matched.clone();
    let schedule = anneal_schedule(fo.kernel);
    let mut trace = Vec::new();
    for kernel in &schedule {
        let stage = FlowOptConfig {
            kernel: *kernel,
            steps_per_level: fo.steps_per_level / schedule.len(),
            ..*fo
        };
        let out = optimize_flow(i_in, &guess, m, &flow, &stage, &cfg.weights)?;
        trace.extend(out.trace);
        flow = out.flow;
    }
    let flow = keep_better(&guess, m, &matched, &flow, &cfg.render_kernel)?;
    let rendered = render_fill(&source, &flow, m, &cfg.render_kernel)?;
    Ok((flow, rendered, trace))
}

/// Per hole pixel, the refined vector when it scores strictly better than the
/// matched one under the rendering kernel, otherwise the matched vector.
fn keep_better(
    guess: &ImageBuffer,
    m: &Mask,
    matched: &FlowField,
    refined: &FlowField,
    render: &SamplingKernel,
) -> Result<FlowField> {
    let features = extract_features(guess, 0);
    let holes = HoleCoords::from_mask(m);
    let judge = CorrectnessObjective::new(&features, &features, &holes, m, Sampler::Gaussian(*render))?;
    let (before, after) = (judge.terms(matched)?, judge.terms(refined)?);
    let mut out = matched.clone();
    for (k, &(x, y)) in holes.coords().iter().enumerate() {
        if after[k] < before[k] {
            out.set(x, y, refined.get(x, y));
        }
    }
    Ok(out)
}

fn texture_stage(
    img: &ImageBuffer,
    i_in: &ImageBuffer,
    m: &Mask,
    s_hat: ImageBuffer,
    cfg: &InpaintConfig,
) -> Result<InpaintOutput> {
    let levels = usable_levels(img, m, cfg.flowopt.pyramid_levels);
    let (flow, rendered, traces) = if levels == 1 {
        let (f, r, t) = texture_level(i_in, &s_hat, m, &s_hat, None, cfg, cfg.seed)?;
        (f, r, vec![t])
    } else {
        let s_pyr = build_pyramid(&s_hat, m, levels, 2.0)?;
        let i_pyr = build_pyramid(i_in, m, levels, 2.0)?;
        let mut prev: Option<(FlowField, ImageBuffer)> = None;
        let mut traces = Vec::with_capacity(levels);
        for (lvl, (sl, il)) in s_pyr.levels.iter().zip(&i_pyr.levels).enumerate() {
            let (lw, lh) = sl.image.dims();
            let (prior, estimate) = match &prev {
                None => (None, sl.image.clone()),
                Some((f, r)) => (Some(f.resize(lw, lh)), r.upsample(lw, lh)),
            };
            let seed = cfg.seed.wrapping_add(1000 * lvl as u64);
            let (f, r, t) = texture_level(&il.image, &sl.image, &sl.mask, &estimate, prior.as_ref(), cfg, seed)?;
            traces.push(t);
            prev = Some((f, r));
        }
        let (f, r) = prev.expect("at least one level");
        (f, r, traces)
    };
    Ok(InpaintOutput {
        s_hat,
        flow,
        i_hat: composite_structure(&rendered, img, m)?,
        traces,
    })
}

/// Outcome of one sampler-comparison trial: final correctness loss of each
/// run, both scored with the same bilinear evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerTrial {
    /// Distance of the initial flow from the exact copy offset, in pixels.
    pub initial_offset: f64,
    pub gaussian: f64,
    pub bilinear: f64,
    /// Mean distance of each final flow from the exact copy offset.
    pub gaussian_error: f64,
    pub bilinear_error: f64,
}

/// Kernels of a descent that starts at `k` and narrows geometrically to
/// σ = 0.35 over four stages (a constant schedule when `k` is already
/// narrower). Wide kernels see features a few pixels away but bias the
/// optimum; narrowing keeps the reach and removes the bias.
pub fn anneal_schedule(k: SamplingKernel) -> Vec<SamplingKernel> {
    let stages = ANNEAL_STAGES;
    let last = ANNEAL_FINAL.min(k.sigma);
    (0..stages)
        .map(|i| {
            let t = if stages == 1 { 0.0 } else { i as f64 / (stages - 1) as f64 };
            SamplingKernel {
                n: k.n,
                sigma: k.sigma * libm::pow(last / k.sigma, t),
            }
        })
        .collect()
}

const ANNEAL_STAGES: usize = 4;
const ANNEAL_FINAL: f64 = 0.35;

/// Side of the images used by [`sampler_trial`].
pub const TRIAL_SIDE: usize = 40;
const TRIAL_HOLE: usize = 6;
const TRIAL_NOISE: f64 = 0.05;

/// One seeded trial of flow descent with Gaussian versus bilinear sampling.
///
/// A smooth random image gets a hole whose content (plus a margin) also
/// appears elsewhere, so the exact copy offset reaches `μ = μ_max`. Both runs
/// start from the same constant flow, `init_offset` pixels away from that
/// offset in a random direction, and use no smoothness term. With `anneal`
/// the Gaussian run follows [`anneal_schedule`], splitting `steps` evenly.
pub fn sampler_trial(
    seed: u64,
    kernel: SamplingKernel,
    anneal: bool,
    init_offset: f64,
    steps: usize,
) -> Result<SamplerTrial> {
    kernel.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a_0f0f);
    let side = TRIAL_SIDE;
    let margin = 3;
    let span = TRIAL_HOLE + 2 * margin;
    // Smooth large-scale field plus pixel-scale noise: the noise creates
    // local minima one or two pixels apart, the field sets the true basin.
    let mut img = crate::corpus::waves(side, side, seed).luminance();
    for y in 0..side {
        for x in 0..side {
            let noise = rng.random_range(-TRIAL_NOISE..=TRIAL_NOISE);
            img.set(x, y, 0, img.get(x, y, 0) + noise);
        }
    }
    let (hx, hy, dx, dy) = loop {
        let hx = rng.random_range(margin..side - margin - TRIAL_HOLE);
        let hy = rng.random_range(margin..side - margin - TRIAL_HOLE);
        let sx = rng.random_range(0..side - span) as i64;
        let sy = rng.random_range(0..side - span) as i64;
        let (dx, dy) = (sx + margin as i64 - hx as i64, sy + margin as i64 - hy as i64);
        if dx.abs() >= span as i64 || dy.abs() >= span as i64 {
            break (hx, hy, dx, dy);
        }
    };
    for y in 0..span {
        for x in 0..span {
            let (tx, ty) = (hx - margin + x, hy - margin + y);
            let (sx, sy) = ((tx as i64 + dx) as usize, (ty as i64 + dy) as usize);
            img.set(tx, ty, 0, img.get(sx, sy, 0));
        }
    }
    let m = Mask::new(side, side).with_rect(hx, hy, TRIAL_HOLE, TRIAL_HOLE);
    let feats = extract_features(&img, 0);
    let holes = HoleCoords::from_mask(&m);
    let angle = rng.random_range(0.0..core::f64::consts::TAU);
    let start = [dx as f64 + init_offset * math::cos(angle), dy as f64 + init_offset * math::sin(angle)];
    let mut flow0 = FlowField::zeros(side, side);
    for (x, y) in m.holes() {
        flow0.set(x, y, start);
    }
    let run = |samplers: &[Sampler]| -> Result<FlowField> {
        let mut flow = flow0.clone();
        let per = steps / samplers.len();
        for sampler in samplers {
            let objective = CorrectnessObjective::new(&feats, &feats, &holes, &m, *sampler)?;
            flow = descend(&objective, &m, &flow, per, 0.5, 0.0)?.flow;
        }
        Ok(flow)
    };
    let kernels = if anneal { anneal_schedule(kernel) } else { vec![kernel] };
    let schedule: Vec<Sampler> = kernels.into_iter().map(Sampler::Gaussian).collect();
    let gaussian_flow = run(&schedule)?;
    let bilinear_flow = run(&[Sampler::Bilinear])?;
    let judge = CorrectnessObjective::new(&feats, &feats, &holes, &m, Sampler::Bilinear)?;
    let error = |f: &FlowField| {
        let total: f64 = m
            .holes()
            .map(|(x, y)| {
                let v = f.get(x, y);
                let (ex, ey) = (v[0] - dx as f64, v[1] - dy as f64);
                math::sqrt(ex * ex + ey * ey)
            })
            .sum();
        total / m.hole_count() as f64
    };
    Ok(SamplerTrial {
        initial_offset: init_offset,
        gaussian: judge.value(&gaussian_flow)?,
        bilinear: judge.value(&bilinear_flow)?,
        gaussian_error: error(&gaussian_flow),
        bilinear_error: error(&bilinear_flow),
    })
}
