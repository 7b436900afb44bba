//! Radar + acoustic drone detection and classification pipeline.
//!
//! The crate covers the full chain at desk scale:
//!
//! - [`radar`]: FMCW capture parsing, zero-Doppler filtering, range-Doppler
//!   maps and 2-D CA-CFAR detection.
//! - [`audio`]: WAV ingestion, mono conversion, peak normalization,
//!   segmentation and SNR-controlled noise injection.
//! - [`nn`]: a minimal reverse-mode autodiff core (conv, attention, norm,
//!   dropout, Adam) verified against central finite differences.
//! - [`model`]: the dual-kernel acoustic encoder, SE-residual range-Doppler
//!   encoder, transformer-encoder fusion, MLP heads and the joint masked loss.
//! - [`train`]: stratified splits, class balancing by upsampling, the Adam
//!   training loop with early stopping, metrics, modality ablations and SNR
//!   sweeps.
//! - [`synth`]: a deterministic synthetic scene generator emitting radar
//!   captures and WAV clips in the on-disk formats the loaders consume.

pub mod audio;
pub mod model;
pub mod nn;
pub mod radar;
pub mod rng;
pub mod synth;
pub mod train;
