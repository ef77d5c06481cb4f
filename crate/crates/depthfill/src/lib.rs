//! Single-step latent-diffusion depth completion on synthetic RGB-D scenes.
//!
//! The library predicts a dense depth map from an RGB image plus a handful of
//! sparse depth measurements. A tiny autoencoder compresses images into a
//! 4-channel latent space, a timestep-conditioned denoiser predicts the clean
//! depth latent in a single step (`t = T`, zero input latent), and a
//! *late-fusion conditional decoder* injects the sparse measurements at five
//! feature levels of the decoder through zero-initialized 1x1 convolutions.
//! A closed-form least-squares scale/shift alignment against the metric
//! measurements turns the relative prediction into metric depth.
//!
//! Alongside the main model the crate ships the baselines needed to see when
//! the learned machinery actually pays off: two early-fusion ablation
//! variants, an unconditional single-step estimator aligned with least
//! squares, a multi-step DDIM sampler, and barycentric interpolation over a
//! Delaunay triangulation of the sparse points.
//!
//! Everything runs on the CPU in `f64`; no GPU, no external model weights.
//! See the `examples/` directory for runnable entry points per capability and
//! the `depthfill` binary for batch experimentation.
//!
//! Module map:
//! - [`scheduler`] — variance schedules, forward noising, v-targets, DDIM.
//! - [`nn`] — minimal deterministic layers with hand-written backprop.
//! - [`models`] — autoencoder, denoiser, conditional decoder, ablations.
//! - [`geometry`] — depth containers, normalization, least squares,
//!   Delaunay/barycentric completion.
//! - [`synthdata`] — procedural RGB-D scenes, sparsity sampling, file I/O.
//! - [`training`] — AdamW fine-tuning loop and autoencoder pretraining.
//! - [`eval`] — MAE/RMSE, sparsity sweeps, timing harness, reports.
//! - [`cli`] — command implementations behind the `depthfill` binary.

pub mod cli;
pub mod eval;
pub mod geometry;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod scheduler;
pub mod synthdata;
pub mod training;

mod rng;

pub use rng::{derive_seed, seeded_rng};
