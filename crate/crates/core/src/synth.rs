//! Synthetic stand-in for the Speech Commands corpus.
//!
//! Each word gets a fixed template of voiced segments (harmonics of a
//! pitch shaped by two formants), fricative noise bursts and gaps. Every
//! utterance re-renders the template for a speaker with its own pitch,
//! vocal tract scale, speaking rate and loudness, places it at a random
//! onset and adds a little hiss. Output uses the real corpus layout:
//! `<word>/<speaker>_nohash_<n>.wav` plus `_background_noise_/*.wav`.

use std::f32::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{write_wav, BACKGROUND_NOISE_DIR, COMMAND_WORDS};
use crate::rng::{self, Rng};
use crate::{Error, Result, CLIP_LEN, SAMPLE_RATE};

/// Non-command words rendered into the UNKNOWN pool.
pub const FILLER_WORDS: [&str; 10] = [
    "bed", "bird", "cat", "dog", "happy", "house", "marvin", "sheila", "tree", "wow",
];

const SR: f32 = SAMPLE_RATE as f32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    Voiced {
        f1: f32,
        f2: f32,
        seconds: f32,
        glide: f32,
    },
    Fricative {
        center: f32,
        seconds: f32,
    },
    Gap {
        seconds: f32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordTemplate {
    pub word: String,
    pub segments: Vec<Segment>,
}

fn word_seed(word: &str) -> u64 {
    // FNV-1a
    word.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100_0000_01b3)
    })
}

impl WordTemplate {
    /// Deterministic template for `word`.
    pub fn for_word(word: &str) -> Self {
        let mut r = rng::stream(word_seed(word), &[0x5E6]);
        let n = r.random_range(2..=3);
        let mut segments = Vec::with_capacity(n + 1);
        for i in 0..n {
            if i > 0 && r.random_bool(0.25) {
                segments.push(Segment::Gap {
                    seconds: r.random_range(0.03..0.08),
                });
            }
            if r.random_bool(0.25) {
                segments.push(Segment::Fricative {
                    center: r.random_range(3000.0..6500.0),
                    seconds: r.random_range(0.06..0.14),
                });
            } else {
                segments.push(Segment::Voiced {
                    f1: r.random_range(280.0..900.0),
                    f2: r.random_range(900.0..2600.0),
                    seconds: r.random_range(0.10..0.24),
                    glide: r.random_range(0.85..1.15),
                });
            }
        }
        WordTemplate {
            word: word.to_string(),
            segments,
        }
    }

    pub fn seconds(&self) -> f32 {
        self.segments
            .iter()
            .map(|s| match *s {
                Segment::Voiced { seconds, .. }
                | Segment::Fricative { seconds, .. }
                | Segment::Gap { seconds } => seconds,
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Speaker {
    pub id: u32,
    pub pitch: f32,
    pub formant_scale: f32,
    pub rate: f32,
    pub loudness: f32,
}

impl Speaker {
    pub fn sample(id: u32, seed: u64) -> Self {
        let mut r = rng::stream(seed, &[0x5BEA, id as u64]);
        Speaker {
            id,
            pitch: r.random_range(90.0..260.0),
            formant_scale: r.random_range(0.88..1.15),
            rate: r.random_range(0.85..1.15),
            loudness: r.random_range(0.25..0.7),
        }
    }
}

fn envelope(i: usize, n: usize) -> f32 {
    let ramp = (0.012 * SR) as usize;
    let ramp = ramp.min(n / 2).max(1);
    let w = if i < ramp {
        i as f32 / ramp as f32
    } else if i >= n - ramp {
        (n - 1 - i) as f32 / ramp as f32
    } else {
        1.0
    };
    0.5 - 0.5 * (PI * w).cos()
}

fn voiced(out: &mut Vec<f32>, n: usize, pitch: f32, glide: f32, f1: f32, f2: f32) {
    let start = out.len();
    out.resize(start + n, 0.0);
    let bw = 160.0;
    let mut h = 1;
    loop {
        let f = pitch * h as f32;
        if f > 4000.0 {
            break;
        }
        let gain = (-((f - f1) / bw).powi(2)).exp() + 0.6 * (-((f - f2) / bw).powi(2)).exp();
        if gain > 0.02 {
            let mut phase = 0.0f32;
            for i in 0..n {
                let k = 1.0 + (glide - 1.0) * i as f32 / n as f32;
                phase += 2.0 * PI * f * k / SR;
                if phase > 2.0 * PI {
                    phase -= 2.0 * PI;
                }
                out[start + i] += gain * phase.sin() * envelope(i, n);
            }
        }
        h += 1;
    }
    let peak = out[start..]
        .iter()
        .fold(0f32, |a, v| a.max(v.abs()))
        .max(1e-6);
    out[start..].iter_mut().for_each(|v| *v /= peak);
}

fn fricative(out: &mut Vec<f32>, n: usize, center: f32, r: &mut Rng) {
    // noise through a two-pole resonator
    let bw = 1200.0;
    let radius = (-PI * bw / SR).exp();
    let theta = 2.0 * PI * center.min(SR / 2.0 - 200.0) / SR;
    let (a1, a2) = (2.0 * radius * theta.cos(), -radius * radius);
    let (mut y1, mut y2) = (0.0f32, 0.0f32);
    let start = out.len();
    for i in 0..n {
        let x: f32 = StandardNormal.sample(r);
        let y = x + a1 * y1 + a2 * y2;
        y2 = y1;
        y1 = y;
        out.push(y * envelope(i, n));
    }
    let peak = out[start..]
        .iter()
        .fold(0f32, |a, v| a.max(v.abs()))
        .max(1e-6);
    out[start..].iter_mut().for_each(|v| *v *= 0.45 / peak);
}

/// Renders one utterance of `template` as a one-second clip.
pub fn render_word(template: &WordTemplate, speaker: &Speaker, hiss: f32, r: &mut Rng) -> Vec<f32> {
    let rate = speaker.rate * r.random_range(0.95..1.05);
    let pitch = speaker.pitch * r.random_range(0.94..1.06);
    let scale = speaker.formant_scale * r.random_range(0.97..1.03);
    let mut word = Vec::new();
    for seg in &template.segments {
        match *seg {
            Segment::Voiced {
                f1,
                f2,
                seconds,
                glide,
            } => {
                let n = (seconds / rate * SR) as usize;
                voiced(&mut word, n, pitch, glide, f1 * scale, f2 * scale);
            }
            Segment::Fricative { center, seconds } => {
                let n = (seconds / rate * SR) as usize;
                fricative(&mut word, n, center * scale, r);
            }
            Segment::Gap { seconds } => {
                let n = (seconds / rate * SR) as usize;
                word.extend(std::iter::repeat_n(0.0, n));
            }
        }
    }
    word.truncate(CLIP_LEN);
    let mut clip = vec![0.0f32; CLIP_LEN];
    let slack = CLIP_LEN - word.len();
    let onset = if slack > 0 {
        r.random_range(0..=slack)
    } else {
        0
    };
    let gain = speaker.loudness * r.random_range(0.8..1.2);
    for (c, w) in clip[onset..].iter_mut().zip(&word) {
        *c = gain * w;
    }
    for c in clip.iter_mut() {
        let n: f32 = StandardNormal.sample(r);
        *c = (*c + hiss * n).clamp(-1.0, 1.0);
    }
    clip
}

/// Long background recordings: white, pink and brown noise, mains hum, a
/// running tap and clattering dishes.
pub fn background_noise(kind: usize, seconds: usize, r: &mut Rng) -> Vec<f32> {
    let n = seconds * SAMPLE_RATE as usize;
    let mut white = || -> f32 { StandardNormal.sample(r) };
    let mut out: Vec<f32> = match kind % 6 {
        0 => (0..n).map(|_| white()).collect(),
        1 => {
            // Paul Kellet's economy pink filter
            let (mut b0, mut b1, mut b2) = (0.0f32, 0.0f32, 0.0f32);
            (0..n)
                .map(|_| {
                    let w = white();
                    b0 = 0.99765 * b0 + w * 0.0990460;
                    b1 = 0.96300 * b1 + w * 0.2965164;
                    b2 = 0.57000 * b2 + w * 1.0526913;
                    b0 + b1 + b2 + w * 0.1848
                })
                .collect()
        }
        2 => {
            let mut acc = 0.0f32;
            (0..n)
                .map(|_| {
                    acc = 0.995 * acc + 0.1 * white();
                    acc
                })
                .collect()
        }
        3 => (0..n)
            .map(|i| {
                let t = i as f32 / SR;
                (2.0 * PI * 50.0 * t).sin() + 0.5 * (2.0 * PI * 150.0 * t).sin() + 0.05 * white()
            })
            .collect(),
        4 => {
            let mut lp = 0.0f32;
            (0..n)
                .map(|i| {
                    lp = 0.7 * lp + 0.3 * white();
                    let t = i as f32 / SR;
                    lp * (1.0 + 0.3 * (2.0 * PI * 3.0 * t).sin())
                })
                .collect()
        }
        _ => {
            let mut out = vec![0.0f32; n];
            let mut i = 0;
            let mut r2 = rng::stream(n as u64, &[0xD15]);
            while i < n {
                let amp = r2.random_range(0.3..1.0);
                let freq = r2.random_range(1500.0..5000.0);
                let decay = r2.random_range(0.002..0.02);
                for j in 0..(0.15 * SR) as usize {
                    if i + j >= n {
                        break;
                    }
                    let t = j as f32 / SR;
                    out[i + j] += amp * (-t / decay).exp() * (2.0 * PI * freq * t).sin();
                }
                i += r2.random_range(800..12_000);
            }
            out.iter_mut().for_each(|v| *v += 0.02 * white());
            out
        }
    };
    let peak = out.iter().fold(0f32, |a, v| a.max(v.abs())).max(1e-6);
    let target = 0.3;
    out.iter_mut().for_each(|v| *v *= target / peak);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Utterances per command word.
    pub per_word: usize,
    /// Utterances per filler (unknown) word.
    pub per_filler: usize,
    pub speakers: u32,
    pub noise_files: usize,
    pub noise_seconds: usize,
    /// Standard deviation of the hiss added to every utterance.
    pub hiss: f32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            per_word: 300,
            per_filler: 60,
            speakers: 40,
            noise_files: 6,
            noise_seconds: 10,
            hiss: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSummary {
    pub word_files: usize,
    pub noise_files: usize,
}

/// Writes a synthetic corpus under `root`.
pub fn generate_dataset(root: &Path, cfg: &SynthConfig) -> Result<SynthSummary> {
    if cfg.speakers == 0 {
        return Err(Error::param("speakers", "need at least one speaker"));
    }
    if cfg.hiss.is_nan() || cfg.hiss < 0.0 {
        return Err(Error::param("hiss", "must be >= 0"));
    }
    let speakers: Vec<Speaker> = (0..cfg.speakers)
        .map(|i| Speaker::sample(i, cfg.seed))
        .collect();
    let mut word_files = 0;
    let words = COMMAND_WORDS
        .iter()
        .map(|w| (*w, cfg.per_word))
        .chain(FILLER_WORDS.iter().map(|w| (*w, cfg.per_filler)));
    for (word, count) in words {
        if count == 0 {
            continue;
        }
        let dir = root.join(word);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let template = WordTemplate::for_word(word);
        let mut takes = vec![0u32; speakers.len()];
        for i in 0..count {
            let mut r = rng::stream(cfg.seed, &[word_seed(word), i as u64]);
            let s = r.random_range(0..speakers.len());
            let speaker = &speakers[s];
            let clip = render_word(&template, speaker, cfg.hiss, &mut r);
            let name = format!(
                "{:08x}_nohash_{}.wav",
                word_seed(&format!("{}#{}", cfg.seed, speaker.id)) as u32,
                takes[s]
            );
            takes[s] += 1;
            write_wav(&dir.join(name), &clip)?;
            word_files += 1;
        }
    }
    let noise_dir = root.join(BACKGROUND_NOISE_DIR);
    fs::create_dir_all(&noise_dir).map_err(|e| Error::io(&noise_dir, e))?;
    const NAMES: [&str; 6] = [
        "white_noise",
        "pink_noise",
        "brown_noise",
        "hum",
        "running_tap",
        "dishes",
    ];
    for k in 0..cfg.noise_files {
        let mut r = rng::stream(cfg.seed, &[0x401, k as u64]);
        let samples = background_noise(k, cfg.noise_seconds.max(1), &mut r);
        let name = if k < NAMES.len() {
            format!("{}.wav", NAMES[k])
        } else {
            format!("{}_{}.wav", NAMES[k % NAMES.len()], k / NAMES.len())
        };
        write_wav(&noise_dir.join(name), &samples)?;
    }
    Ok(SynthSummary {
        word_files,
        noise_files: cfg.noise_files,
    })
}
