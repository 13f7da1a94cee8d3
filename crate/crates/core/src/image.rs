//! Raster containers, masks, flow fields and multi-resolution pyramids.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Result};

/// Smallest side length accepted for any pyramid level.
pub const MIN_PYRAMID_SIDE: usize = 16;

/// Rec. 601 luma coefficients.
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

fn check_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Real-valued `width × height × channels` raster, row-major and
/// channel-interleaved, with every sample in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidData("image must have at least one pixel"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidData("channel count must be 1 or 3"));
        }
        if !value.is_finite() {
            return Err(Error::InvalidData("non-finite sample"));
        }
        Ok(Self {
            width,
            height,
            channels,
            data: vec![value.clamp(0.0, 1.0); width * height * channels],
        })
    }

    /// Wraps existing samples. Fails on a length mismatch or on samples that
    /// are non-finite or outside `[0, 1]`.
    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let mut img = Self::new(width, height, channels)?;
        if data.len() != width * height * channels {
            return Err(Error::InvalidData("sample count does not match dimensions"));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::InvalidData("samples must be finite and within [0, 1]"));
        }
        img.data = data;
        Ok(img)
    }

    /// Builds an image from a per-sample function; results are clamped to `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut img = Self::new(width, height, channels)?;
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    img.set(x, y, c, f(x, y, c));
                }
            }
        }
        Ok(img)
    }

    /// Stacks single-channel planes (1 or 3 of them) into an interleaved image.
    pub fn from_planes(width: usize, height: usize, planes: &[Vec<f64>]) -> Result<Self> {
        let channels = planes.len();
        let mut img = Self::new(width, height, channels)?;
        for (c, plane) in planes.iter().enumerate() {
            if plane.len() != width * height {
                return Err(Error::InvalidData("plane length does not match dimensions"));
            }
            for (i, &v) in plane.iter().enumerate() {
                img.data[i * channels + c] = sanitize(v);
            }
        }
        Ok(img)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Writes one sample, clamping to `[0, 1]` (non-finite input becomes 0).
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let idx = (y * self.width + x) * self.channels + c;
        self.data[idx] = sanitize(v);
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let base = (y * self.width + x) * self.channels;
        &self.data[base..base + self.channels]
    }

    /// One channel as a row-major plane.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }

    /// Single-channel luma image (identity for gray input).
    pub fn luminance(&self) -> ImageBuffer {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| (LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2]).clamp(0.0, 1.0))
            .collect();
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Channels as a feature grid of depth `channels`.
    pub fn to_features(&self) -> FeatureMap {
        FeatureMap {
            width: self.width,
            height: self.height,
            depth: self.channels,
            data: self.data.clone(),
        }
    }

    /// Converts a feature grid of depth 1 or 3 back to an image, clamping to `[0, 1]`.
    pub fn from_features(f: &FeatureMap) -> Result<Self> {
        let mut img = Self::new(f.width, f.height, f.depth)?;
        for (dst, &src) in img.data.iter_mut().zip(&f.data) {
            *dst = sanitize(src);
        }
        Ok(img)
    }

    /// Box-filter downsampling to `width × height`.
    pub fn downsample(&self, width: usize, height: usize) -> ImageBuffer {
        let mut out = ImageBuffer {
            width,
            height,
            channels: self.channels,
            data: vec![0.0; width * height * self.channels],
        };
        for cy in 0..height {
            let (y0, y1) = cover(cy, height, self.height);
            for cx in 0..width {
                let (x0, x1) = cover(cx, width, self.width);
                let n = ((y1 - y0) * (x1 - x0)) as f64;
                for c in 0..self.channels {
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        for x in x0..x1 {
                            acc += self.get(x, y, c);
                        }
                    }
                    out.set(cx, cy, c, acc / n);
                }
            }
        }
        out
    }

    /// Bilinear upsampling (pixel-center aligned, clamp-to-edge) to `width × height`.
    pub fn upsample(&self, width: usize, height: usize) -> ImageBuffer {
        let mut out = ImageBuffer {
            width,
            height,
            channels: self.channels,
            data: vec![0.0; width * height * self.channels],
        };
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        for y in 0..height {
            let fy = (y as f64 + 0.5) * sy - 0.5;
            for x in 0..width {
                let fx = (x as f64 + 0.5) * sx - 0.5;
                for c in 0..self.channels {
                    let v = bilerp(self.width, self.height, fx, fy, |xx, yy| self.get(xx, yy, c));
                    out.set(x, y, c, v);
                }
            }
        }
        out
    }
}

#[inline]
fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v.clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Fine-grid index range `[lo, hi)` covered by coarse cell `i`.
fn cover(i: usize, coarse: usize, fine: usize) -> (usize, usize) {
    let lo = i * fine / coarse;
    let hi = ((i + 1) * fine).div_ceil(coarse).min(fine);
    (lo, hi.max(lo + 1))
}

fn bilerp(w: usize, h: usize, fx: f64, fy: f64, at: impl Fn(usize, usize) -> f64) -> f64 {
    let fx = fx.clamp(0.0, (w - 1) as f64);
    let fy = fy.clamp(0.0, (h - 1) as f64);
    let x0 = math::floor(fx) as usize;
    let y0 = math::floor(fy) as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let tx = fx - x0 as f64;
    let ty = fy - y0 as f64;
    let top = at(x0, y0) * (1.0 - tx) + at(x1, y0) * tx;
    let bottom = at(x0, y1) * (1.0 - tx) + at(x1, y1) * tx;
    top * (1.0 - ty) + bottom * ty
}

/// Binary hole mask; a set bit marks a missing pixel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    /// All-valid mask.
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::InvalidData("mask length does not match dimensions"));
        }
        Ok(Self { width, height, bits })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.bits[y * width + x] = f(x, y);
            }
        }
        m
    }

    /// Marks the axis-aligned rectangle `[x0, x0+w) × [y0, y0+h)` (clipped) as hole.
    pub fn with_rect(mut self, x0: usize, y0: usize, w: usize, h: usize) -> Self {
        for y in y0..(y0 + h).min(self.height) {
            for x in x0..(x0 + w).min(self.width) {
                self.bits[y * self.width + x] = true;
            }
        }
        self
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn is_hole(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, hole: bool) {
        self.bits[y * self.width + x] = hole;
    }

    pub fn hole_count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Fraction of pixels marked as hole.
    pub fn ratio(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.hole_count() as f64 / self.bits.len() as f64
    }

    pub fn has_holes(&self) -> bool {
        self.bits.iter().any(|b| *b)
    }

    pub fn has_valid(&self) -> bool {
        self.bits.iter().any(|b| !*b)
    }

    pub fn holes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.positions(true)
    }

    pub fn valid(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.positions(false)
    }

    fn positions(&self, hole: bool) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(move |(_, b)| **b == hole)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// OR-pooled downsampling: a coarse pixel is a hole iff any covered fine pixel is.
    pub fn downsample(&self, width: usize, height: usize) -> Mask {
        Mask::from_fn(width, height, |cx, cy| {
            let (y0, y1) = cover(cy, height, self.height);
            let (x0, x1) = cover(cx, width, self.width);
            (y0..y1).any(|y| (x0..x1).any(|x| self.is_hole(x, y)))
        })
    }

    /// Morphological dilation by a square of the given radius.
    pub fn dilate(&self, radius: usize) -> Mask {
        Mask::from_fn(self.width, self.height, |x, y| {
            let x0 = x.saturating_sub(radius);
            let y0 = y.saturating_sub(radius);
            let x1 = (x + radius).min(self.width - 1);
            let y1 = (y + radius).min(self.height - 1);
            (y0..=y1).any(|yy| (x0..=x1).any(|xx| self.is_hole(xx, yy)))
        })
    }
}

/// Zeroes every hole pixel: `out = img ∘ (1 − m)`.
pub fn apply_mask(img: &ImageBuffer, m: &Mask) -> Result<ImageBuffer> {
    check_dims(img.dims(), m.dims())?;
    let mut out = img.clone();
    let c = img.channels;
    for (i, _) in m.bits.iter().enumerate().filter(|(_, b)| **b) {
        out.data[i * c..(i + 1) * c].fill(0.0);
    }
    Ok(out)
}

/// Random brush-stroke mask whose hole ratio lands within a few points of
/// `target_ratio`. Deterministic in `seed`.
///
/// Strokes are random walks stamping disks of slowly varying radius; the
/// walk stops as soon as the target pixel count is reached, so overshoot is
/// bounded by one disk.
pub fn generate_irregular_mask(
    width: usize,
    height: usize,
    target_ratio: f64,
    seed: u64,
) -> Result<Mask> {
    if !(target_ratio > 0.0 && target_ratio < 0.9) {
        return Err(Error::InvalidRatio(target_ratio));
    }
    if width == 0 || height == 0 {
        return Err(Error::InvalidData("mask must have at least one pixel"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = Mask::new(width, height);
    let target = math::ceil(target_ratio * (width * height) as f64) as usize;
    let side = width.min(height) as f64;
    let r_min = (side / 64.0).max(1.0);
    let r_max = (side / 16.0).max(r_min);
    let len_min = (side / 16.0).max(2.0);
    let len_max = (side / 4.0).max(len_min + 1.0);
    let (wf, hf) = ((width - 1) as f64, (height - 1) as f64);
    let mut count = 0usize;

    while count < target {
        let mut x = rng.random_range(0.0..=wf);
        let mut y = rng.random_range(0.0..=hf);
        let mut angle = rng.random_range(0.0..core::f64::consts::TAU);
        let mut radius = rng.random_range(r_min..=r_max);
        let vertices = rng.random_range(4..=12);
        'stroke: for _ in 0..vertices {
            angle += rng.random_range(-0.9..0.9);
            radius = (radius + rng.random_range(-0.75..=0.75)).clamp(r_min, r_max);
            let len = rng.random_range(len_min..len_max);
            let (dx, dy) = (math::cos(angle), math::sin(angle));
            for _ in 0..math::ceil(len) as usize {
                count += stamp_disk(&mut mask, x, y, radius);
                if count >= target {
                    break 'stroke;
                }
                x += dx;
                y += dy;
                if x < 0.0 || x > wf {
                    x = x.clamp(0.0, wf);
                    angle = core::f64::consts::PI - angle;
                }
                if y < 0.0 || y > hf {
                    y = y.clamp(0.0, hf);
                    angle = -angle;
                }
            }
        }
    }
    Ok(mask)
}

/// Sets all pixels within `r` of `(cx, cy)`; returns how many were newly set.
fn stamp_disk(mask: &mut Mask, cx: f64, cy: f64, r: f64) -> usize {
    let x0 = math::floor(cx - r).max(0.0) as usize;
    let y0 = math::floor(cy - r).max(0.0) as usize;
    let x1 = (math::ceil(cx + r) as usize).min(mask.width - 1);
    let y1 = (math::ceil(cy + r) as usize).min(mask.height - 1);
    let mut added = 0;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (ddx, ddy) = (x as f64 - cx, y as f64 - cy);
            if ddx * ddx + ddy * ddy <= r * r && !mask.is_hole(x, y) {
                mask.set(x, y, true);
                added += 1;
            }
        }
    }
    added
}

/// Per-pixel 2-D displacement `(dx, dy)` in pixels. Stored at target pixels
/// and pointing at the source location that is sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowField {
    width: usize,
    height: usize,
    vectors: Vec<[f64; 2]>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            vectors: vec![[0.0; 2]; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, vectors: Vec<[f64; 2]>) -> Result<Self> {
        if vectors.len() != width * height {
            return Err(Error::InvalidData("flow length does not match dimensions"));
        }
        if vectors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("flow vectors must be finite"));
        }
        Ok(Self {
            width,
            height,
            vectors,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn vectors(&self) -> &[[f64; 2]] {
        &self.vectors
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 2] {
        self.vectors[y * self.width + x]
    }

    /// # Panics
    /// On non-finite components.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: [f64; 2]) {
        assert!(v[0].is_finite() && v[1].is_finite(), "flow vectors must be finite");
        self.vectors[y * self.width + x] = v;
    }

    /// Continuous sampling position `(x + dx, y + dy)`.
    #[inline]
    pub fn position(&self, x: usize, y: usize) -> (f64, f64) {
        let [dx, dy] = self.get(x, y);
        (x as f64 + dx, y as f64 + dy)
    }

    /// Grid cell hit by the flow at `(x, y)` after clamping into the image and rounding.
    #[inline]
    pub fn target(&self, x: usize, y: usize) -> (usize, usize) {
        let (px, py) = self.position(x, y);
        (
            math::clamp_index(px, self.width),
            math::clamp_index(py, self.height),
        )
    }

    pub fn max_magnitude(&self) -> f64 {
        self.vectors
            .iter()
            .map(|[a, b]| math::sqrt(a * a + b * b))
            .fold(0.0, f64::max)
    }

    /// Bilinear resampling to `width × height`; vectors are multiplied by the
    /// per-axis scale ratio so displacements stay in target-grid pixels.
    pub fn resize(&self, width: usize, height: usize) -> FlowField {
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut out = FlowField::zeros(width, height);
        for y in 0..height {
            let fy = (y as f64 + 0.5) * sy - 0.5;
            for x in 0..width {
                let fx = (x as f64 + 0.5) * sx - 0.5;
                let dx = bilerp(self.width, self.height, fx, fy, |a, b| self.get(a, b)[0]);
                let dy = bilerp(self.width, self.height, fx, fy, |a, b| self.get(a, b)[1]);
                out.set(x, y, [dx / sx, dy / sy]);
            }
        }
        out
    }
}

/// `width × height × depth` grid of real descriptors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    width: usize,
    height: usize,
    depth: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(width: usize, height: usize, depth: usize) -> Self {
        Self {
            width,
            height,
            depth,
            data: vec![0.0; width * height * depth],
        }
    }

    pub fn from_vec(width: usize, height: usize, depth: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * depth {
            return Err(Error::InvalidData("feature length does not match dimensions"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("features must be finite"));
        }
        Ok(Self {
            width,
            height,
            depth,
            data,
        })
    }

    /// Single-channel map from a row-major plane.
    pub fn from_plane(width: usize, height: usize, plane: Vec<f64>) -> Result<Self> {
        Self::from_vec(width, height, 1, plane)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn depth(&self) -> usize {
        self.depth
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> &[f64] {
        let base = (y * self.width + x) * self.depth;
        &self.data[base..base + self.depth]
    }

    #[inline]
    pub fn at_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let base = (y * self.width + x) * self.depth;
        &mut self.data[base..base + self.depth]
    }
}

/// One pyramid level.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidLevel {
    pub image: ImageBuffer,
    pub mask: Mask,
    /// Downsampling factor relative to the finest level.
    pub scale: f64,
}

/// Image/mask pairs ordered coarsest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    pub levels: Vec<PyramidLevel>,
}

impl Pyramid {
    pub fn coarsest(&self) -> &PyramidLevel {
        &self.levels[0]
    }

    pub fn finest(&self) -> &PyramidLevel {
        self.levels.last().expect("pyramid has at least one level")
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Side lengths of every level, coarsest first.
pub fn pyramid_sizes(
    width: usize,
    height: usize,
    levels: usize,
    factor: f64,
) -> Result<Vec<(usize, usize)>> {
    if levels == 0 {
        return Err(Error::InvalidParameter("pyramid needs at least one level"));
    }
    if !(factor > 1.0) || !factor.is_finite() {
        return Err(Error::InvalidParameter("pyramid factor must exceed 1"));
    }
    let mut sizes = Vec::with_capacity(levels);
    let mut scale = 1.0;
    for _ in 0..levels {
        let w = math::round(width as f64 / scale) as usize;
        let h = math::round(height as f64 / scale) as usize;
        if w < MIN_PYRAMID_SIDE || h < MIN_PYRAMID_SIDE {
            return Err(Error::TooSmall {
                width: w,
                height: h,
            });
        }
        sizes.push((w, h));
        scale *= factor;
    }
    sizes.reverse();
    Ok(sizes)
}

/// Builds a `levels`-deep pyramid shrinking by `factor` per level. Images are
/// box filtered, masks OR-pooled, both directly from the finest grid.
pub fn build_pyramid(img: &ImageBuffer, mask: &Mask, levels: usize, factor: f64) -> Result<Pyramid> {
    check_dims(img.dims(), mask.dims())?;
    let sizes = pyramid_sizes(img.width, img.height, levels, factor)?;
    let finest = sizes.len() - 1;
    let levels = sizes
        .into_iter()
        .enumerate()
        .map(|(i, (w, h))| {
            let scale = libm::pow(factor, (finest - i) as f64);
            if i == finest {
                PyramidLevel {
                    image: img.clone(),
                    mask: mask.clone(),
                    scale,
                }
            } else {
                PyramidLevel {
                    image: img.downsample(w, h),
                    mask: mask.downsample(w, h),
                    scale,
                }
            }
        })
        .collect();
    Ok(Pyramid { levels })
}
