//! Training-set augmentation with small additive perturbations.
//!
//! Two perturbations are applied to already normalized images: a shift by
//! `epsilon * sign(x)` (or, in FGSM mode, by `epsilon * sign(dLoss/dx)`)
//! and a uniform shift by a fraction of the image's standard deviation.
//! The perturbed copies keep their source labels and are appended to the
//! originals.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::features::{FeatureImage, FeatureMode, Provenance};
use crate::model::{batch_from_images, Network};
use crate::rng;
use crate::tensor::Tape;
use crate::{Error, Result};

/// How the sign block is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignSource {
    /// Sign of the pixel values themselves.
    Input,
    /// Sign of the loss gradient with respect to the input.
    Gradient,
}

impl SignSource {
    pub fn as_str(self) -> &'static str {
        match self {
            SignSource::Input => "input",
            SignSource::Gradient => "fgsm",
        }
    }
}

impl fmt::Display for SignSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SignSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "input" | "sign" => Ok(SignSource::Input),
            "fgsm" | "gradient" => Ok(SignSource::Gradient),
            other => Err(Error::param(
                "sign_source",
                format!("unknown sign source `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub sign_epsilon: f32,
    pub std_coefficient: f32,
    pub sign: bool,
    pub std: bool,
    pub sign_source: SignSource,
    /// Subsample the augmented set back down to the original size.
    pub equal_budget: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            sign_epsilon: 0.001,
            std_coefficient: 0.001,
            sign: true,
            std: true,
            sign_source: SignSource::Input,
            equal_budget: false,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sign_epsilon >= 0.0 && self.sign_epsilon.is_finite()) {
            return Err(Error::param(
                "sign_epsilon",
                format!("must be >= 0, got {}", self.sign_epsilon),
            ));
        }
        if !(self.std_coefficient >= 0.0 && self.std_coefficient.is_finite()) {
            return Err(Error::param(
                "std_coefficient",
                format!("must be >= 0, got {}", self.std_coefficient),
            ));
        }
        Ok(())
    }
}

/// Maps raw 0..=255 intensities into [0, 1].
pub fn normalize_pixels(
    height: usize,
    width: usize,
    raw: &[f32],
    mode: FeatureMode,
) -> Result<FeatureImage> {
    if let Some(bad) = raw.iter().find(|v| !(0.0..=255.0).contains(*v)) {
        return Err(Error::param(
            "pixels",
            format!("raw intensity {bad} outside [0, 255]"),
        ));
    }
    FeatureImage::new(height, width, raw.iter().map(|v| v / 255.0).collect(), mode)
}

fn shifted(img: &FeatureImage, shift: impl Fn(usize, f32) -> f32) -> FeatureImage {
    let pixels = img
        .pixels
        .iter()
        .enumerate()
        .map(|(i, &x)| (x + shift(i, x)).clamp(0.0, 1.0))
        .collect();
    FeatureImage {
        pixels,
        ..img.clone()
    }
}

fn signum(x: f32) -> f32 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `clamp(x + epsilon * sign(x), 0, 1)` with `sign(0) = 0`.
pub fn sign_perturb(img: &FeatureImage, epsilon: f32) -> FeatureImage {
    shifted(img, |_, x| epsilon * signum(x))
}

/// Population standard deviation over every pixel.
pub fn pixel_std(img: &FeatureImage) -> f32 {
    let n = img.pixels.len() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let mean = img.pixels.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = img
        .pixels
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    var.sqrt() as f32
}

/// Uniform shift by `coefficient * std(img)`, clamped to [0, 1].
pub fn std_perturb_with(img: &FeatureImage, coefficient: f32) -> FeatureImage {
    let shift = coefficient * pixel_std(img);
    shifted(img, |_, _| shift)
}

pub fn std_perturb(img: &FeatureImage) -> FeatureImage {
    std_perturb_with(img, 0.001)
}

/// Fast gradient sign perturbation against `network`: each image moves by
/// `epsilon` along the sign of the cross-entropy gradient for its label.
pub fn fgsm_perturb(
    network: &Network,
    images: &[FeatureImage],
    epsilon: f32,
) -> Result<Vec<FeatureImage>> {
    const CHUNK: usize = 64;
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(CHUNK) {
        let labels = chunk
            .iter()
            .map(|img| {
                img.label
                    .map(|l| l.index())
                    .ok_or_else(|| Error::param("images", "fgsm needs labelled images"))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut tape = Tape::new();
        let x = tape.param(batch_from_images(chunk)?);
        let pass = network.forward(&mut tape, x, None)?;
        let loss = tape.softmax_cross_entropy(pass.logits, &labels)?;
        tape.backward(loss)?;
        let grad = tape.grad(x).expect("input requires grad");
        let mut offset = 0;
        for img in chunk {
            let g = &grad[offset..offset + img.pixels.len()];
            out.push(shifted(img, |i, _| epsilon * signum(g[i])));
            offset += img.pixels.len();
        }
    }
    Ok(out)
}

/// An augmented training set with the origin of every example.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub images: Vec<FeatureImage>,
    pub provenance: Vec<Provenance>,
}

/// Originals, then the sign block, then the std block. `network` is only
/// consulted in FGSM mode. With `equal_budget`, a seeded subsample of the
/// original size is drawn from the full augmented set (block order kept).
pub fn augment_dataset(
    train: &[FeatureImage],
    cfg: &AugmentConfig,
    network: Option<&Network>,
    seed: u64,
) -> Result<Augmented> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::param(
            "train",
            "cannot augment an empty training set",
        ));
    }
    let mut images = train.to_vec();
    let mut provenance = vec![Provenance::Original; train.len()];
    if cfg.sign {
        match cfg.sign_source {
            SignSource::Input => {
                images.extend(train.iter().map(|img| sign_perturb(img, cfg.sign_epsilon)));
                provenance.extend(std::iter::repeat_n(Provenance::Sign, train.len()));
            }
            SignSource::Gradient => {
                let net = network
                    .ok_or_else(|| Error::param("network", "fgsm augmentation needs a model"))?;
                images.extend(fgsm_perturb(net, train, cfg.sign_epsilon)?);
                provenance.extend(std::iter::repeat_n(Provenance::Fgsm, train.len()));
            }
        }
    }
    if cfg.std {
        images.extend(
            train
                .iter()
                .map(|img| std_perturb_with(img, cfg.std_coefficient)),
        );
        provenance.extend(std::iter::repeat_n(Provenance::Std, train.len()));
    }
    if cfg.equal_budget && images.len() > train.len() {
        let mut idx: Vec<usize> = (0..images.len()).collect();
        idx.shuffle(&mut rng::stream(seed, &[0xA06]));
        idx.truncate(train.len());
        idx.sort_unstable();
        images = idx.iter().map(|&i| images[i].clone()).collect();
        provenance = idx.iter().map(|&i| provenance[i]).collect();
    }
    Ok(Augmented { images, provenance })
}
