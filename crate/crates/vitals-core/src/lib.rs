//! Core math for camera-based vital-sign estimation.
//!
//! Everything in this crate is pure computation over in-memory buffers:
//! spectral utilities, a reverse-mode autodiff tape, a synthetic scene
//! generator, classical pulse estimators, the attention/transformer model,
//! its frequency-domain training loss, and the per-frame evaluation metrics.
//! File formats, logging, and the command-line tool live in the companion
//! `vitals-cli` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod baselines;
pub mod fft;
pub mod frames;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod sigproc;
pub mod synth;
pub mod train;
