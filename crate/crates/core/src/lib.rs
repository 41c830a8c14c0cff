//! Keyword spotting by way of image classification.
//!
//! One-second 16 kHz clips are turned into small grayscale feature images
//! (log spectrograms, MFCC maps, or waveform rasters) and classified into
//! twelve labels by compact convolutional networks trained with a
//! tape-based reverse-mode autodiff engine.
//!
//! The pipeline, end to end:
//!
//! ```no_run
//! use kws_core::dataset::{build_manifest, ManifestOptions};
//! use kws_core::features::{FeatureConfig, Featurizer};
//!
//! let manifest = build_manifest("data/speech_commands".as_ref(), &ManifestOptions::default())?;
//! let featurizer = Featurizer::new(FeatureConfig::default())?;
//! # Ok::<(), kws_core::Error>(())
//! ```

pub mod adversarial;
pub mod dataset;
mod error;
pub mod features;
pub mod harness;
pub mod model;
pub mod optim;
pub mod rng;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};

/// Sample rate of every clip handled by the pipeline.
pub const SAMPLE_RATE: u32 = 16_000;

/// Number of samples in a one-second clip.
pub const CLIP_LEN: usize = 16_000;
