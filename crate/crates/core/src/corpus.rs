//! Deterministic synthetic images and masks for tests and benchmarks.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::image::{generate_irregular_mask, ImageBuffer, Mask};
use crate::math;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    /// Running-bond bricks with alternating shades and thin mortar lines.
    Brick,
    Checker,
    Stripes,
    /// Vertical step edge.
    Step,
    /// Step edge plus uniform noise.
    StepNoise,
    Ramp,
    /// Sum of a few low-frequency sinusoids.
    Waves,
}

impl Pattern {
    pub fn is_periodic(self) -> bool {
        matches!(self, Pattern::Brick | Pattern::Checker | Pattern::Stripes)
    }
}

/// Running-bond brick wall: bricks of `bw × bh` separated by one-pixel mortar,
/// every other course offset by half a brick, shades alternating per brick.
pub fn brick(width: usize, height: usize, bw: usize, bh: usize) -> ImageBuffer {
    let shades = [[0.72, 0.38, 0.28], [0.55, 0.25, 0.2]];
    let mortar = [0.85, 0.84, 0.8];
    ImageBuffer::from_fn(width, height, 3, |x, y, c| {
        let course = y / bh;
        let shifted = x + (course % 2) * (bw / 2);
        if y % bh == bh - 1 || shifted % bw == bw - 1 {
            mortar[c]
        } else {
            shades[(shifted / bw + course) % 2][c]
        }
    })
    .expect("valid brick dims")
}

pub fn checker(width: usize, height: usize, cell: usize, lo: f64, hi: f64) -> ImageBuffer {
    ImageBuffer::from_fn(width, height, 1, |x, y, _| if (x / cell + y / cell) % 2 == 0 { lo } else { hi })
        .expect("valid checker dims")
}

/// Vertical stripes, `period` pixels per cycle.
pub fn stripes(width: usize, height: usize, period: usize, lo: f64, hi: f64) -> ImageBuffer {
    ImageBuffer::from_fn(width, height, 1, |x, _, _| if x % period < period / 2 { lo } else { hi })
        .expect("valid stripe dims")
}

/// `lo` left of column `edge`, `hi` from it onward.
pub fn step(width: usize, height: usize, edge: usize, lo: f64, hi: f64) -> ImageBuffer {
    ImageBuffer::from_fn(width, height, 1, |x, _, _| if x < edge { lo } else { hi }).expect("valid step dims")
}

/// Step edge with additive uniform noise in `[-amplitude, amplitude]`.
pub fn step_noise(width: usize, height: usize, edge: usize, lo: f64, hi: f64, amplitude: f64, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..width * height)
        .map(|_| rng.random_range(-amplitude..=amplitude))
        .collect();
    ImageBuffer::from_fn(width, height, 1, |x, y, _| {
        let base = if x < edge { lo } else { hi };
        base + noise[y * width + x]
    })
    .expect("valid step dims")
}

pub fn ramp(width: usize, height: usize) -> ImageBuffer {
    let span = (width + height - 2).max(1) as f64;
    ImageBuffer::from_fn(width, height, 1, |x, y, _| 0.1 + 0.8 * (x + y) as f64 / span).expect("valid ramp dims")
}

pub fn waves(width: usize, height: usize, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<[f64; 4]> = (0..3)
        .map(|_| {
            [
                rng.random_range(0.02..0.12),
                rng.random_range(0.02..0.12),
                rng.random_range(0.0..6.28),
                rng.random_range(0.05..0.12),
            ]
        })
        .collect();
    ImageBuffer::from_fn(width, height, 3, |x, y, c| {
        let mut v = 0.5;
        for (k, t) in terms.iter().enumerate() {
            let phase = t[2] + c as f64 * 0.7 * (k + 1) as f64;
            v += t[3] * math::sin(6.283185307179586 * (t[0] * x as f64 + t[1] * y as f64) + phase);
        }
        v
    })
    .expect("valid wave dims")
}

/// One image of the corpus with its hole.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub name: String,
    pub pattern: Pattern,
    pub image: ImageBuffer,
    pub mask: Mask,
}

pub const SIDE: usize = 64;

fn render(pattern: Pattern, variant: u64) -> ImageBuffer {
    let v = variant as usize;
    match pattern {
        Pattern::Brick => brick(SIDE, SIDE, 16 + 4 * (v % 2), 8),
        Pattern::Checker => checker(SIDE, SIDE, 8, 0.2 + 0.05 * (v % 3) as f64, 0.8),
        Pattern::Stripes => stripes(SIDE, SIDE, 8 + 4 * (v % 2), 0.25, 0.75),
        Pattern::Step => step(SIDE, SIDE, 28 + 4 * (v % 3), 0.2, 0.8),
        Pattern::StepNoise => step_noise(SIDE, SIDE, 32, 0.2, 0.8, 0.1, variant),
        Pattern::Ramp => ramp(SIDE, SIDE),
        Pattern::Waves => waves(SIDE, SIDE, variant),
    }
}

/// Central square hole of side `side`.
pub fn central_hole(width: usize, height: usize, side: usize) -> Mask {
    Mask::new(width, height).with_rect((width - side) / 2, (height - side) / 2, side, side)
}

/// The standard corpus: 24 images of 64×64 with hole ratios from 0 to 60%.
///
/// Periodic patterns get square holes; the rest cycle through irregular
/// brush masks at 10% .. 60% plus one hole-free image per pattern family.
pub fn standard() -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    let periodic = [Pattern::Brick, Pattern::Checker, Pattern::Stripes];
    for (i, &p) in periodic.iter().enumerate() {
        for v in 0..2u64 {
            let side = 12 + 4 * v as usize;
            out.push(Sample {
                name: format!("{p:?}-{v}").to_lowercase(),
                pattern: p,
                image: render(p, v + i as u64),
                mask: central_hole(SIDE, SIDE, side),
            });
        }
    }
    let ratios = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
    let others = [
        Pattern::Step,
        Pattern::StepNoise,
        Pattern::Ramp,
        Pattern::Waves,
        Pattern::Brick,
        Pattern::Checker,
    ];
    let mut k = 0u64;
    for &p in &others {
        for v in 0..3u64 {
            if out.len() >= 24 {
                break;
            }
            let ratio = ratios[(k as usize) % ratios.len()];
            let mask = if ratio == 0.0 {
                Mask::new(SIDE, SIDE)
            } else {
                generate_irregular_mask(SIDE, SIDE, ratio, 100 + k)?
            };
            out.push(Sample {
                name: format!("{p:?}-m{v}").to_lowercase(),
                pattern: p,
                image: render(p, v + 10),
                mask,
            });
            k += 1;
        }
    }
    Ok(out)
}
