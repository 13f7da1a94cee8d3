//! Benchmark suites over the synthetic corpus: the smoothing-scale sweep,
//! the stage ablation and the sampler comparison.

use std::thread;

use flowfill_core::corpus::{self, Sample};
use flowfill_core::losses::{psnr_masked, ssim_masked};
use flowfill_core::texture::{inpaint_variant, sampler_trial, Variant};
use flowfill_core::{ImageBuffer, InpaintConfig, Mask, SamplingKernel};
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Exact fills have infinite PSNR; means use this ceiling instead.
pub const PSNR_CAP: f64 = 100.0;

pub const SIGMAS: [f64; 5] = [0.0, 1.0, 3.0, 6.0, 9.0];

pub const SAMPLER_TRIALS: u64 = 50;
pub const SAMPLER_OFFSET: f64 = 3.0;
pub const SAMPLER_STEPS: usize = 200;
pub const SAMPLER_PASS_FRACTION: f64 = 0.8;

/// Required margin of the full pipeline over diffusion on periodic textures.
pub const PERIODIC_MARGIN_DB: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    SigmaSweep,
    Ablation,
    Sampler,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SigmaRow {
    pub sigma: f64,
    pub mean_hole_psnr: f64,
    pub mean_hole_ssim: f64,
    pub images: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SigmaSweepReport {
    pub rows: Vec<SigmaRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantScores {
    pub full: f64,
    pub no_structure: f64,
    pub no_flow: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationImage {
    pub name: String,
    pub periodic: bool,
    pub hole_ratio: f64,
    /// Capped hole PSNR per variant.
    pub psnr: VariantScores,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Invariant {
    pub name: String,
    pub detail: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    pub images: Vec<AblationImage>,
    pub mean: VariantScores,
    pub periodic_mean: VariantScores,
    pub invariants: Vec<Invariant>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerRow {
    pub seed: u64,
    pub initial_offset: f64,
    pub gaussian: f64,
    pub bilinear: f64,
    pub gaussian_error: f64,
    pub bilinear_error: f64,
    pub gaussian_wins: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerReport {
    pub trials: Vec<SamplerRow>,
    pub wins: usize,
    pub win_fraction: f64,
    pub pass: bool,
}

/// Order-preserving parallel map over a slice.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    let chunk = items.len().div_ceil(workers).max(1);
    thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(|| part.iter().map(&f).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("bench worker panicked")).collect()
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Hole PSNR capped at [`PSNR_CAP`]; `None` for hole-free masks.
pub fn capped_hole_psnr(out: &ImageBuffer, truth: &ImageBuffer, m: &Mask) -> Result<Option<f64>> {
    Ok(psnr_masked(out, truth, m)?.map(|p| p.min(PSNR_CAP)))
}

fn with_holes(samples: Vec<Sample>) -> Vec<Sample> {
    samples.into_iter().filter(|s| s.mask.has_holes()).collect()
}

pub fn sigma_sweep(base: &InpaintConfig) -> Result<SigmaSweepReport> {
    let samples = with_holes(corpus::standard()?);
    let mut rows = Vec::new();
    for sigma in SIGMAS {
        let mut cfg = *base;
        cfg.rtv.sigma = sigma;
        let scores = par_map(&samples, |s| -> Result<(f64, f64)> {
            let out = inpaint_variant(&s.image, &s.mask, &cfg, Variant::Full)?;
            let p = capped_hole_psnr(&out.i_hat, &s.image, &s.mask)?.unwrap_or(PSNR_CAP);
            let q = ssim_masked(&out.i_hat, &s.image, &s.mask)?.unwrap_or(1.0);
            Ok((p, q))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        rows.push(SigmaRow {
            sigma,
            mean_hole_psnr: mean(scores.iter().map(|s| s.0)),
            mean_hole_ssim: mean(scores.iter().map(|s| s.1)),
            images: scores.len(),
        });
    }
    Ok(SigmaSweepReport { rows })
}

pub fn ablation(cfg: &InpaintConfig) -> Result<AblationReport> {
    let samples = corpus::standard()?;
    let runs = par_map(&samples, |s| -> Result<(Option<VariantScores>, bool)> {
        let run = |v| inpaint_variant(&s.image, &s.mask, cfg, v);
        let full = run(Variant::Full)?;
        let preserved = s.mask.valid().all(|(x, y)| full.i_hat.pixel(x, y) == s.image.pixel(x, y));
        if !s.mask.has_holes() {
            return Ok((None, preserved && full.i_hat == s.image));
        }
        let score = |out: &ImageBuffer| capped_hole_psnr(out, &s.image, &s.mask).map(|p| p.unwrap_or(PSNR_CAP));
        let scores = VariantScores {
            full: score(&full.i_hat)?,
            no_structure: score(&run(Variant::NoStructure)?.i_hat)?,
            no_flow: score(&run(Variant::NoFlow)?.i_hat)?,
        };
        Ok((Some(scores), preserved))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let preserved = runs.iter().all(|r| r.1);
    let images: Vec<AblationImage> = samples
        .iter()
        .zip(runs)
        .filter_map(|(s, (scores, _))| {
            scores.map(|psnr| AblationImage {
                name: s.name.clone(),
                periodic: s.pattern.is_periodic(),
                hole_ratio: s.mask.ratio(),
                psnr,
            })
        })
        .collect();
    let means = |keep: &dyn Fn(&AblationImage) -> bool| {
        let sel: Vec<&AblationImage> = images.iter().filter(|i| keep(i)).collect();
        VariantScores {
            full: mean(sel.iter().map(|i| i.psnr.full)),
            no_structure: mean(sel.iter().map(|i| i.psnr.no_structure)),
            no_flow: mean(sel.iter().map(|i| i.psnr.no_flow)),
        }
    };
    let mean_all = means(&|_| true);
    let periodic = means(&|i| i.periodic);
    let invariants = vec![
        Invariant {
            name: "full >= no-structure".into(),
            detail: format!("{:.2} dB vs {:.2} dB", mean_all.full, mean_all.no_structure),
            pass: mean_all.full >= mean_all.no_structure,
        },
        Invariant {
            name: "full >= no-flow".into(),
            detail: format!("{:.2} dB vs {:.2} dB", mean_all.full, mean_all.no_flow),
            pass: mean_all.full >= mean_all.no_flow,
        },
        Invariant {
            name: "periodic: full - no-flow >= 3 dB".into(),
            detail: format!("{:.2} dB margin", periodic.full - periodic.no_flow),
            pass: periodic.full - periodic.no_flow >= PERIODIC_MARGIN_DB,
        },
        Invariant {
            name: "valid pixels unchanged".into(),
            detail: format!("{} images, bit-exact comparison", samples.len()),
            pass: preserved,
        },
    ];
    let pass = invariants.iter().all(|i| i.pass);
    Ok(AblationReport {
        images,
        mean: mean_all,
        periodic_mean: periodic,
        invariants,
        pass,
    })
}

pub fn sampler(kernel: SamplingKernel) -> Result<SamplerReport> {
    let seeds: Vec<u64> = (0..SAMPLER_TRIALS).collect();
    let trials = par_map(&seeds, |&seed| -> Result<SamplerRow> {
        let t = sampler_trial(seed, kernel, true, SAMPLER_OFFSET, SAMPLER_STEPS)?;
        Ok(SamplerRow {
            seed,
            initial_offset: t.initial_offset,
            gaussian: t.gaussian,
            bilinear: t.bilinear,
            gaussian_error: t.gaussian_error,
            bilinear_error: t.bilinear_error,
            gaussian_wins: t.gaussian < t.bilinear,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let wins = trials.iter().filter(|t| t.gaussian_wins).count();
    let win_fraction = wins as f64 / trials.len() as f64;
    Ok(SamplerReport {
        trials,
        wins,
        win_fraction,
        pass: win_fraction >= SAMPLER_PASS_FRACTION,
    })
}

/// Runs one suite and returns its report as JSON.
pub fn run_suite(suite: Suite, cfg: &InpaintConfig) -> Result<serde_json::Value> {
    let value = match suite {
        Suite::SigmaSweep => serde_json::to_value(sigma_sweep(cfg)?),
        Suite::Ablation => serde_json::to_value(ablation(cfg)?),
        Suite::Sampler => serde_json::to_value(sampler(cfg.flowopt.kernel)?),
    };
    Ok(value.expect("reports serialize"))
}
