//! Variational completion of structure images inside the hole.
//!
//! Valid pixels act as Dirichlet data. `Harmonic` solves the discrete Laplace
//! equation over the hole; `Tv` minimizes isotropic total variation with
//! lagged diffusivity, which keeps straight edges sharp where the harmonic
//! fill smears them.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cg;
use crate::image::{ImageBuffer, Mask};
use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FillMethod {
    Harmonic,
    Tv,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StructureFillParams {
    pub method: FillMethod,
    /// Relative residual target of every linear solve.
    pub tol: f64,
    /// Iteration cap of every linear solve.
    pub max_iters: usize,
    /// Lagged-diffusivity outer iterations (TV only).
    pub tv_iters: usize,
    /// Gradient regularization of the TV weights.
    pub tv_eps: f64,
}

impl Default for StructureFillParams {
    fn default() -> Self {
        Self {
            method: FillMethod::Tv,
            tol: 1e-8,
            max_iters: 5000,
            tv_iters: 200,
            tv_eps: 1e-3,
        }
    }
}

impl StructureFillParams {
    pub fn harmonic() -> Self {
        Self {
            method: FillMethod::Harmonic,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidParameter("fill tolerance and iteration cap must be positive"));
        }
        if self.method == FillMethod::Tv && (self.tv_iters == 0 || !(self.tv_eps > 0.0)) {
            return Err(Error::InvalidParameter("invalid TV settings"));
        }
        Ok(())
    }
}

/// Outcome of a structure fill, with solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FillReport {
    pub image: ImageBuffer,
    /// Largest final relative residual over channels and linear solves.
    pub residual: f64,
    /// Total inner iterations over channels and outer passes.
    pub iterations: usize,
}

/// Index of every hole pixel in the unknown vector, plus 4-neighbour lists.
struct HoleSystem {
    width: usize,
    pixels: Vec<(usize, usize)>,
    /// `usize::MAX` for valid pixels.
    index: Vec<usize>,
}

impl HoleSystem {
    fn new(m: &Mask) -> Result<Self> {
        let (w, h) = m.dims();
        let mut index = vec![usize::MAX; w * h];
        let pixels: Vec<_> = m.holes().collect();
        for (k, &(x, y)) in pixels.iter().enumerate() {
            index[y * w + x] = k;
        }
        let sys = Self {
            width: w,
            pixels,
            index,
        };
        sys.check_anchored(m)?;
        Ok(sys)
    }

    fn neighbours(&self, x: usize, y: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
        let w = self.width;
        [
            (x > 0).then(|| (x - 1, y)),
            (x + 1 < w).then(|| (x + 1, y)),
            (y > 0).then(|| (x, y - 1)),
            (y + 1 < h).then(|| (x, y + 1)),
        ]
        .into_iter()
        .flatten()
    }

    /// Every 4-connected hole component must touch a valid pixel.
    fn check_anchored(&self, m: &Mask) -> Result<()> {
        let h = m.height();
        let mut seen = vec![false; self.pixels.len()];
        let mut stack = Vec::new();
        for start in 0..self.pixels.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            stack.push(start);
            let mut anchored = false;
            while let Some(k) = stack.pop() {
                let (x, y) = self.pixels[k];
                for (nx, ny) in self.neighbours(x, y, h) {
                    let j = self.index[ny * self.width + nx];
                    if j == usize::MAX {
                        anchored = true;
                    } else if !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            if !anchored {
                let (x, y) = self.pixels[start];
                return Err(Error::IsolatedHole { x, y });
            }
        }
        Ok(())
    }
}

/// Edge weights over the whole grid, indexed like `rtv::EdgeWeights`.
struct Conductance {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Conductance {
    fn edge(&self, w: usize, (ax, ay): (usize, usize), (bx, by): (usize, usize)) -> f64 {
        if ay == by {
            self.x[ay * w + ax.min(bx)]
        } else {
            self.y[ay.min(by) * w + ax]
        }
    }
}

/// Solves the weighted Laplace equation over the hole for one plane; valid
/// values are untouched.
fn solve_weighted(
    sys: &HoleSystem,
    plane: &mut [f64],
    height: usize,
    cond: &Conductance,
    tol: f64,
    max_iters: usize,
) -> Result<(usize, f64)> {
    let w = sys.width;
    let n = sys.pixels.len();
    let mut diag = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    // Neighbour list: (unknown index, weight) for hole neighbours.
    let mut links: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (k, &(x, y)) in sys.pixels.iter().enumerate() {
        for (nx, ny) in sys.neighbours(x, y, height) {
            let wt = cond.edge(w, (x, y), (nx, ny));
            diag[k] += wt;
            let j = sys.index[ny * w + nx];
            if j == usize::MAX {
                rhs[k] += wt * plane[ny * w + nx];
            } else {
                links[k].push((j, wt));
            }
        }
    }
    let x0: Vec<f64> = sys.pixels.iter().map(|&(x, y)| plane[y * w + x]).collect();
    let apply = |v: &[f64], out: &mut [f64]| {
        for k in 0..n {
            let mut acc = diag[k] * v[k];
            for &(j, wt) in &links[k] {
                acc -= wt * v[j];
            }
            out[k] = acc;
        }
    };
    let s = cg::pcg(apply, cg::jacobi(&diag), &rhs, x0, tol, max_iters)?;
    for (&(x, y), v) in sys.pixels.iter().zip(&s.x) {
        plane[y * w + x] = *v;
    }
    Ok((s.iterations, s.relative_residual))
}

/// Fills the hole of `s_in` with the configured solver and reports solver
/// statistics. Valid pixels are copied bit-exactly.
pub fn complete_structure_report(s_in: &ImageBuffer, m: &Mask, p: &StructureFillParams) -> Result<FillReport> {
    p.validate()?;
    if s_in.dims() != m.dims() {
        return Err(Error::DimensionMismatch {
            expected: s_in.dims(),
            actual: m.dims(),
        });
    }
    if !m.has_holes() {
        return Ok(FillReport {
            image: s_in.clone(),
            residual: 0.0,
            iterations: 0,
        });
    }
    let sys = HoleSystem::new(m)?;
    let (w, h) = s_in.dims();
    let unit = Conductance {
        x: vec![1.0; w * h],
        y: vec![1.0; w * h],
    };
    let mut planes = Vec::with_capacity(s_in.channels());
    let mut residual: f64 = 0.0;
    let mut iterations = 0;
    for c in 0..s_in.channels() {
        let mut plane = s_in.plane(c);
        // Start the unknowns at the mean of the valid boundary.
        let boundary = boundary_values(&sys, &plane, h);
        let start = boundary.iter().sum::<f64>() / boundary.len() as f64;
        for &(x, y) in &sys.pixels {
            plane[y * w + x] = start;
        }
        let (it, res) = solve_weighted(&sys, &mut plane, h, &unit, p.tol, p.max_iters)?;
        iterations += it;
        residual = residual.max(res);
        if p.method == FillMethod::Tv {
            for _ in 0..p.tv_iters {
                let before: Vec<f64> = sys.pixels.iter().map(|&(x, y)| plane[y * w + x]).collect();
                let cond = tv_conductance(&plane, w, h, p.tv_eps);
                let (it, res) = solve_weighted(&sys, &mut plane, h, &cond, p.tol, p.max_iters)?;
                iterations += it;
                residual = residual.max(res);
                let change = sys
                    .pixels
                    .iter()
                    .zip(&before)
                    .map(|(&(x, y), b)| math::abs(plane[y * w + x] - b))
                    .fold(0.0, f64::max);
                if change < 1e-6 {
                    break;
                }
            }
        }
        planes.push(plane);
    }
    let filled = ImageBuffer::from_planes(w, h, &planes)?;
    Ok(FillReport {
        image: composite_structure(&filled, s_in, m)?,
        residual,
        iterations,
    })
}

/// Fills the hole of `s_in`; see [`complete_structure_report`].
pub fn complete_structure(s_in: &ImageBuffer, m: &Mask, p: &StructureFillParams) -> Result<ImageBuffer> {
    complete_structure_report(s_in, m, p).map(|r| r.image)
}

fn boundary_values(sys: &HoleSystem, plane: &[f64], h: usize) -> Vec<f64> {
    let w = sys.width;
    let mut out = Vec::new();
    for &(x, y) in &sys.pixels {
        for (nx, ny) in sys.neighbours(x, y, h) {
            if sys.index[ny * w + nx] == usize::MAX {
                out.push(plane[ny * w + nx]);
            }
        }
    }
    out
}

/// Lagged-diffusivity weights `1 / sqrt(|∇u|² + eps²)` of each pixel,
/// assigned to the pixel's right and lower edges.
fn tv_conductance(plane: &[f64], w: usize, h: usize, eps: f64) -> Conductance {
    let mut c = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let gx = if x + 1 < w { plane[i + 1] - plane[i] } else { 0.0 };
            let gy = if y + 1 < h { plane[i + w] - plane[i] } else { 0.0 };
            c[i] = 1.0 / math::sqrt(gx * gx + gy * gy + eps * eps);
        }
    }
    Conductance { x: c.clone(), y: c }
}

/// Pixelwise select: `s_hat` inside the hole, `s_in` elsewhere.
pub fn composite_structure(s_hat: &ImageBuffer, s_in: &ImageBuffer, m: &Mask) -> Result<ImageBuffer> {
    if s_hat.dims() != s_in.dims() || s_hat.channels() != s_in.channels() {
        return Err(Error::DimensionMismatch {
            expected: s_in.dims(),
            actual: s_hat.dims(),
        });
    }
    if m.dims() != s_in.dims() {
        return Err(Error::DimensionMismatch {
            expected: s_in.dims(),
            actual: m.dims(),
        });
    }
    let mut out = s_in.clone();
    for (x, y) in m.holes() {
        for c in 0..s_in.channels() {
            out.set(x, y, c, s_hat.get(x, y, c));
        }
    }
    Ok(out)
}
