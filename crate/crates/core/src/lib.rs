//! Spectral-spatial motor-imagery decoding with a multi-task autoencoder.
//!
//! The crate is organised as a pipeline:
//!
//! * [`trialdata`] holds raw trials, the on-disk dataset format, a seeded
//!   synthetic EEG generator and the cross-validation split plans.
//! * [`filterbank`] designs Butterworth bandpass filters as second-order
//!   sections and applies them forward-backward.
//! * [`csp`] and [`fbcsp`] fit per-band common spatial patterns and turn a
//!   trial into a channels-last `(1, t, U * N_b)` tensor.
//! * [`nn`] and [`model`] implement the encoder / decoder / classifier with
//!   hand-written reverse-mode gradients.
//! * [`losses`], [`blend`] and [`trainer`] implement the joint objective and
//!   the tangent-based adaptive task weighting.
//! * [`metrics`] and [`protocol`] evaluate models under subject-dependent and
//!   leave-one-subject-out protocols.
//! * [`config`] and [`cli`] expose everything through JSON run configs.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN

pub mod blend;
pub mod cli;
pub mod config;
pub mod csp;
pub mod error;
pub mod fbcsp;
pub mod filterbank;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod protocol;
pub mod store;
pub mod trainer;
pub mod trialdata;

pub use error::{Error, Result};
