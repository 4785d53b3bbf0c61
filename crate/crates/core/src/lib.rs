//! Reverberant-condition synthesis and robust speech front-ends.
//!
//! The crate is organised bottom-up:
//!
//! - [`signal`]: waveforms, STFT/ISTFT, gammatone analysis and resynthesis,
//!   convolution and WAV I/O.
//! - [`rir`]: randomized rectangular rooms, image-method impulse responses and
//!   RT60 estimation.
//! - [`ssf`], [`nmf`], [`wpe`]: the three dereverberation front-ends.
//! - [`features`]: log-Mel (MelFB) and locally-normalized (LNFB) filterbank
//!   features with context splicing.
//! - [`harness`]: the reverberation-time x distance evaluation grid.

// parameter checks are written as `!(x > 0.0)` so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod features;
pub mod harness;
pub mod nmf;
pub mod rir;
pub mod signal;
pub mod ssf;
pub mod wpe;

pub use error::{Error, Result};
pub use signal::Waveform;

/// Sample rate used throughout unless a caller says otherwise.
pub const DEFAULT_SAMPLE_RATE_HZ: u32 = 16_000;
