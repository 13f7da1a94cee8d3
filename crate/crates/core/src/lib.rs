//! Structure-guided appearance-flow inpainting.
//!
//! The crate is split along the pipeline:
//!
//! - [`image`]: rasters, masks, flow fields, feature grids and pyramids.
//! - [`rtv`]: relative-total-variation smoothing that produces structure images.
//! - [`warp`]: Gaussian and bilinear sampling with analytic backward passes.
//! - [`losses`]: feature extraction, the sampling-correctness loss, objective
//!   formulas and the PSNR/SSIM metrics.
//! - [`structure`]: harmonic and total-variation hole filling.
//! - [`texture`]: flow initialization, flow optimization, rendering and the
//!   end-to-end [`texture::inpaint`] pipeline.
//! - [`corpus`]: deterministic synthetic test images.
//!
//! Everything here is `no_std` + `alloc`; file formats, the CLI and the HTTP
//! service live in the companion `flowfill-app` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod cg;
mod error;
mod math;

pub mod corpus;
pub mod image;
pub mod losses;
pub mod rtv;
pub mod structure;
pub mod texture;
pub mod warp;

pub use error::{Error, Result};
pub use image::{FeatureMap, FlowField, ImageBuffer, Mask, Pyramid};
pub use losses::{HoleCoords, LossWeights};
pub use rtv::RtvParams;
pub use structure::{FillMethod, StructureFillParams};
pub use texture::{FlowOptConfig, InpaintConfig, InpaintOutput};
pub use warp::SamplingKernel;
