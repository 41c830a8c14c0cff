//! Audio to image conversion: log spectrograms, MFCC maps and waveform
//! rasters, plus the binary feature cache and PGM dumps.

mod cache;
mod dsp;
mod image;

use std::fmt;
use std::str::FromStr;

pub use cache::{read_feature_cache, write_feature_cache, write_pgm, FeatureCache, Provenance};
pub use dsp::{
    bucketize, dct_ii, dft_magnitude, frame_count, frame_signal, hann_window, log_compress,
    mean_pool, Bucketizer, MelFilterbank, SpectrumAnalyzer, NUM_MEL,
};
pub use image::{amplitude_plot, assemble_image, normalize_min_max, resample_area, FeatureImage};

use crate::dataset::AudioClip;
use crate::{Error, Result, CLIP_LEN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FeatureMode {
    Spectrogram,
    Mfcc,
    AmplitudePlot,
}

impl FeatureMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::Spectrogram => "spectrogram",
            FeatureMode::Mfcc => "mfcc",
            FeatureMode::AmplitudePlot => "amplitude",
        }
    }

    pub(crate) fn code(self) -> u32 {
        match self {
            FeatureMode::Spectrogram => 0,
            FeatureMode::Mfcc => 1,
            FeatureMode::AmplitudePlot => 2,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        [
            FeatureMode::Spectrogram,
            FeatureMode::Mfcc,
            FeatureMode::AmplitudePlot,
        ]
        .get(code as usize)
        .copied()
    }

    /// Output geometry used unless overridden: 28x28 for spectral images,
    /// 100x100 for waveform plots.
    pub fn default_size(self) -> (usize, usize) {
        match self {
            FeatureMode::AmplitudePlot => (100, 100),
            _ => (28, 28),
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectrogram" => Ok(FeatureMode::Spectrogram),
            "mfcc" => Ok(FeatureMode::Mfcc),
            "amplitude" => Ok(FeatureMode::AmplitudePlot),
            other => Err(Error::param(
                "mode",
                format!("unknown feature mode `{other}` (spectrogram|mfcc|amplitude)"),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowFunction {
    Hann,
    Rectangular,
}

/// Featurization settings. Window and stride are in samples.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureConfig {
    pub mode: FeatureMode,
    pub window_size: usize,
    pub window_stride: usize,
    pub num_buckets: usize,
    pub log_offset: f64,
    pub window_fn: WindowFunction,
    pub output_height: usize,
    pub output_width: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig::for_mode(FeatureMode::Spectrogram)
    }
}

impl FeatureConfig {
    pub fn for_mode(mode: FeatureMode) -> Self {
        let (output_height, output_width) = mode.default_size();
        FeatureConfig {
            mode,
            window_size: 480,
            window_stride: 160,
            num_buckets: 40,
            log_offset: 1e-6,
            window_fn: WindowFunction::Hann,
            output_height,
            output_width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.output_height == 0 || self.output_width == 0 {
            return Err(Error::param("output size", "must be positive"));
        }
        if self.mode == FeatureMode::AmplitudePlot {
            return Ok(());
        }
        if self.window_size < 2 || self.window_size > CLIP_LEN {
            return Err(Error::param(
                "window_size",
                format!("must be in 2..={CLIP_LEN}, got {}", self.window_size),
            ));
        }
        if self.window_stride == 0 {
            return Err(Error::param("window_stride", "must be positive"));
        }
        if self.log_offset.is_nan() || self.log_offset <= 0.0 {
            return Err(Error::param("log_offset", "must be positive"));
        }
        Bucketizer::new(
            self.mode,
            self.window_size / 2 + 1,
            self.num_buckets,
            self.log_offset,
        )
        .map(|_| ())
    }
}

/// Validated featurization pipeline. Cheap to clone; each clone owns its
/// FFT buffers, so give each worker thread its own.
#[derive(Clone)]
pub struct Featurizer {
    config: FeatureConfig,
    window: Vec<f64>,
    bucketizer: Option<Bucketizer>,
    analyzer: Option<SpectrumAnalyzer>,
}

impl Featurizer {
    pub fn new(config: FeatureConfig) -> Result<Self> {
        config.validate()?;
        let (window, bucketizer, analyzer) = if config.mode == FeatureMode::AmplitudePlot {
            (Vec::new(), None, None)
        } else {
            let window = match config.window_fn {
                WindowFunction::Hann => hann_window(config.window_size)?,
                WindowFunction::Rectangular => vec![1.0; config.window_size],
            };
            let bins = config.window_size / 2 + 1;
            (
                window,
                Some(Bucketizer::new(
                    config.mode,
                    bins,
                    config.num_buckets,
                    config.log_offset,
                )?),
                Some(SpectrumAnalyzer::new(config.window_size)),
            )
        };
        Ok(Featurizer {
            config,
            window,
            bucketizer,
            analyzer,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    /// Per-frame bucket vectors before image assembly.
    pub fn frame_features(&mut self, clip: &AudioClip) -> Result<Vec<Vec<f64>>> {
        let (Some(bucketizer), Some(analyzer)) = (&self.bucketizer, &mut self.analyzer) else {
            return Err(Error::param(
                "mode",
                "amplitude plots have no frame features",
            ));
        };
        let mut windowed = vec![0.0; self.config.window_size];
        Ok(frame_signal(
            clip.samples(),
            self.config.window_size,
            self.config.window_stride,
        )?
        .into_iter()
        .map(|frame| {
            for ((w, x), c) in windowed.iter_mut().zip(frame).zip(&self.window) {
                *w = *x as f64 * c;
            }
            bucketizer.apply(&analyzer.magnitudes(&windowed))
        })
        .collect())
    }

    pub fn featurize(&mut self, clip: &AudioClip) -> Result<FeatureImage> {
        let c = &self.config;
        let (h, w, mode) = (c.output_height, c.output_width, c.mode);
        let img = match mode {
            FeatureMode::AmplitudePlot => amplitude_plot(clip, h, w)?,
            _ => assemble_image(&self.frame_features(clip)?, h, w, mode)?,
        };
        Ok(img.with_label(clip.label()))
    }

    pub fn featurize_all(&mut self, clips: &[AudioClip]) -> Result<Vec<FeatureImage>> {
        clips.iter().map(|c| self.featurize(c)).collect()
    }
}
