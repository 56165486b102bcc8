//! Texture-guided industrial anomaly synthesis.
//!
//! The crate is organised around the stages of the synthesis pipeline:
//!
//! * [`imageops`] - classical kernels (Canny, binary morphology, SSIM maps).
//! * [`backends`] - every learned model behind a narrow trait, each with a
//!   deterministic mock so the whole pipeline runs without a GPU.
//! * [`texlib`] - the curated texture library, its manifest, decision log and
//!   embedding cache.
//! * [`descmatch`] - anomaly description generation and texture matching.
//! * [`maskgen`] - inpainting-mask rejection sampling and adaptive texture
//!   extraction.
//! * [`synthpipe`] - noise schedule, latent blending, the DDIM loop and mask
//!   refinement.
//! * [`metrics`] - Inception Score, intra-cluster perceptual distance, k-means
//!   reduction and projection export.

pub mod backends;
pub mod descmatch;
mod error;
pub mod imageops;
pub mod maskgen;
pub mod metrics;
pub mod synthpipe;
pub mod texlib;

pub use error::{Error, Result};
