//! Speech Commands style dataset handling: WAV decoding, labels,
//! train/validation manifests, silence synthesis and noise mixing.

mod label;
mod manifest;
mod noise;
mod wav;

use std::path::Path;

pub use label::{assign_label, Label, BACKGROUND_NOISE_DIR, COMMAND_WORDS};
pub use manifest::{
    build_manifest, load_manifest_clips, load_noise_dir, read_manifest, write_manifest,
    DatasetManifest, ManifestEntry, ManifestOptions, Partition, SilenceRef,
};
pub use noise::{make_silence, mix_noise, mix_noise_dataset, plan_silence};
pub use wav::{encode_wav, read_wav_samples, write_wav};

use crate::{Error, Result, CLIP_LEN, SAMPLE_RATE};

/// Exactly one second of mono audio, samples in [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    source: String,
    label: Option<Label>,
}

impl AudioClip {
    /// Validating constructor: length must be [`CLIP_LEN`] and every
    /// sample finite and inside [-1, 1].
    pub fn new(samples: Vec<f32>, source: impl Into<String>) -> Result<Self> {
        if samples.len() != CLIP_LEN {
            return Err(Error::param(
                "samples",
                format!("clip must hold {CLIP_LEN} samples, got {}", samples.len()),
            ));
        }
        if let Some(bad) = samples.iter().find(|s| !(-1.0..=1.0).contains(*s)) {
            return Err(Error::param(
                "samples",
                format!("sample {bad} outside [-1, 1]"),
            ));
        }
        Ok(AudioClip {
            samples,
            source: source.into(),
            label: None,
        })
    }

    /// Right-pads with zeros or truncates the tail to one second.
    pub fn fitted(mut samples: Vec<f32>, source: impl Into<String>) -> Result<Self> {
        samples.resize(CLIP_LEN, 0.0);
        Self::new(samples, source)
    }

    pub fn silent(source: impl Into<String>) -> Self {
        AudioClip {
            samples: vec![0.0; CLIP_LEN],
            source: source.into(),
            label: None,
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn label(&self) -> Option<Label> {
        self.label
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }
}

/// A noise recording of arbitrary length (the background-noise files run
/// for about a minute).
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub samples: Vec<f32>,
    pub source: String,
}

/// Loads a WAV file as a one-second clip.
pub fn load_wav(path: &Path) -> Result<AudioClip> {
    let samples = read_wav_samples(path)?;
    AudioClip::fitted(samples, path.display().to_string())
}
