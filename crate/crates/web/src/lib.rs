//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Everything here is a thin shell over `kws-core`: render a synthetic
//! utterance, featurize it with slider-controlled settings, and show the
//! sign and std perturbations used for adversarial augmentation.

use kws_core::adversarial::{sign_perturb, std_perturb_with};
use kws_core::dataset::{AudioClip, COMMAND_WORDS};
use kws_core::features::{amplitude_plot, FeatureConfig, FeatureImage, FeatureMode, Featurizer};
use kws_core::synth::{render_word, Speaker, WordTemplate, FILLER_WORDS};
use kws_core::{rng, Result, SAMPLE_RATE};
use wasm_bindgen::prelude::*;

const HISS: f32 = 0.01;

pub fn vocabulary() -> Vec<&'static str> {
    COMMAND_WORDS
        .iter()
        .chain(FILLER_WORDS.iter())
        .copied()
        .collect()
}

pub fn render(word: &str, speaker: u32, take: u64) -> Result<AudioClip> {
    let template = WordTemplate::for_word(word);
    let voice = Speaker::sample(speaker, 0);
    let mut r = rng::stream(take, &[u64::from(speaker), 0x3EB]);
    AudioClip::fitted(render_word(&template, &voice, HISS, &mut r), word)
}

pub fn parse_mode(mode: &str) -> FeatureMode {
    match mode {
        "mfcc" => FeatureMode::Mfcc,
        "amplitude" => FeatureMode::AmplitudePlot,
        _ => FeatureMode::Spectrogram,
    }
}

/// Feature image for `clip`; window and stride are in milliseconds.
pub fn featurize(
    clip: &AudioClip,
    mode: FeatureMode,
    window_ms: usize,
    stride_ms: usize,
    buckets: usize,
) -> Result<FeatureImage> {
    let per_ms = SAMPLE_RATE as usize / 1000;
    let mut cfg = FeatureConfig::for_mode(mode);
    cfg.window_size = window_ms * per_ms;
    cfg.window_stride = stride_ms * per_ms;
    cfg.num_buckets = buckets;
    Featurizer::new(cfg)?.featurize(clip)
}

/// Original, sign-perturbed and std-perturbed images, concatenated.
pub fn perturbations(img: &FeatureImage, epsilon: f32, coefficient: f32) -> Vec<f32> {
    let mut out = img.pixels.clone();
    out.extend(sign_perturb(img, epsilon).pixels);
    out.extend(std_perturb_with(img, coefficient).pixels);
    out
}

fn js(e: kws_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn words() -> String {
    vocabulary().join(",")
}

/// One synthetic utterance plus the views the page draws from it.
#[wasm_bindgen]
pub struct Demo {
    clip: AudioClip,
    image: Option<FeatureImage>,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(word: &str, speaker: u32, take: u32) -> std::result::Result<Demo, JsError> {
        Ok(Demo {
            clip: render(word, speaker, u64::from(take)).map_err(js)?,
            image: None,
        })
    }

    pub fn samples(&self) -> Vec<f32> {
        self.clip.samples().to_vec()
    }

    /// Recomputes the feature image and returns its pixels (row-major).
    pub fn features(
        &mut self,
        mode: &str,
        window_ms: usize,
        stride_ms: usize,
        buckets: usize,
    ) -> std::result::Result<Vec<f32>, JsError> {
        let img =
            featurize(&self.clip, parse_mode(mode), window_ms, stride_ms, buckets).map_err(js)?;
        let px = img.pixels.clone();
        self.image = Some(img);
        Ok(px)
    }

    pub fn height(&self) -> usize {
        self.image.as_ref().map_or(0, |i| i.height)
    }

    pub fn width(&self) -> usize {
        self.image.as_ref().map_or(0, |i| i.width)
    }

    pub fn amplitude(&self, size: usize) -> std::result::Result<Vec<f32>, JsError> {
        Ok(amplitude_plot(&self.clip, size, size).map_err(js)?.pixels)
    }

    /// Perturbations of the last computed feature image.
    pub fn perturbed(
        &self,
        epsilon: f32,
        coefficient: f32,
    ) -> std::result::Result<Vec<f32>, JsError> {
        let img = self
            .image
            .as_ref()
            .ok_or_else(|| JsError::new("compute features first"))?;
        Ok(perturbations(img, epsilon, coefficient))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_every_word() {
        for w in vocabulary() {
            assert_eq!(render(w, 1, 0).unwrap().samples().len(), 16_000);
        }
        assert_eq!(words().split(',').count(), 20);
    }

    #[test]
    fn slider_settings_keep_output_size() {
        let clip = render("yes", 2, 3).unwrap();
        for (mode, win, stride, buckets) in [
            ("spectrogram", 30, 10, 40),
            ("mfcc", 20, 5, 13),
            ("spectrogram", 64, 32, 10),
        ] {
            let img = featurize(&clip, parse_mode(mode), win, stride, buckets).unwrap();
            assert_eq!((img.height, img.width), (28, 28));
        }
        assert!(featurize(&clip, FeatureMode::Spectrogram, 0, 10, 40).is_err());
    }

    #[test]
    fn perturbation_views_stack_three_images() {
        let clip = render("stop", 0, 0).unwrap();
        let img = featurize(&clip, FeatureMode::Spectrogram, 30, 10, 40).unwrap();
        let v = perturbations(&img, 0.05, 0.5);
        assert_eq!(v.len(), 3 * 28 * 28);
        assert!(v.iter().all(|p| (0.0..=1.0).contains(p)));
        assert!(v[..784].iter().zip(&v[784..1568]).any(|(a, b)| a != b));
    }
}
