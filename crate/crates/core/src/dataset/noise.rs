use rand::Rng as _;

use super::{AudioClip, Label, Recording, SilenceRef};
use crate::{rng, Error, Result, CLIP_LEN};

/// Chooses `count` random one-second windows (with random gain in [0, 1])
/// from recordings of the given lengths.
pub fn plan_silence(noise: &[(String, usize)], count: usize, seed: u64) -> Result<Vec<SilenceRef>> {
    if noise.is_empty() {
        return Err(Error::param(
            "noise_clips",
            "at least one noise recording is needed to synthesize silence",
        ));
    }
    let mut rng = rng::stream(seed, &[0x0511_34ce]);
    Ok((0..count)
        .map(|_| {
            let (name, len) = &noise[rng.random_range(0..noise.len())];
            let start = if *len > CLIP_LEN {
                rng.random_range(0..=len - CLIP_LEN)
            } else {
                0
            };
            SilenceRef {
                noise_file: name.clone(),
                start,
                gain: rng.random::<f32>(),
            }
        })
        .collect())
}

impl SilenceRef {
    /// Cuts this window out of `recording`, zero-padding short recordings.
    pub fn render(&self, recording: &Recording) -> Result<AudioClip> {
        let end = (self.start + CLIP_LEN).min(recording.samples.len());
        let window = recording.samples.get(self.start..end).unwrap_or(&[]);
        let samples = window.iter().map(|s| s * self.gain).collect();
        Ok(AudioClip::fitted(samples, self.to_string())?.with_label(Label::Silence))
    }
}

/// Generates `count` SILENCE clips from random windows of `noise_clips`.
pub fn make_silence(noise_clips: &[Recording], count: usize, seed: u64) -> Result<Vec<AudioClip>> {
    let lengths: Vec<_> = noise_clips
        .iter()
        .map(|r| (r.source.clone(), r.samples.len()))
        .collect();
    plan_silence(&lengths, count, seed)?
        .iter()
        .map(|s| {
            let rec = noise_clips
                .iter()
                .find(|r| r.source == s.noise_file)
                .expect("planned from these recordings");
            s.render(rec)
        })
        .collect()
}

/// `clamp(clip + ratio * noise, -1, 1)`, sample by sample.
///
/// `ratio` is an amplitude ratio: 0.5 corresponds to roughly 6 dB SNR for
/// equally loud signal and noise.
pub fn mix_noise(clip: &AudioClip, noise: &AudioClip, ratio: f32) -> Result<AudioClip> {
    if !ratio.is_finite() || ratio < 0.0 {
        return Err(Error::param(
            "ratio",
            format!("noise ratio must be a finite value >= 0, got {ratio}"),
        ));
    }
    if ratio == 0.0 {
        return Ok(clip.clone());
    }
    let samples = clip
        .samples()
        .iter()
        .zip(noise.samples())
        .map(|(s, n)| (s + ratio * n).clamp(-1.0, 1.0))
        .collect();
    let mixed = AudioClip::new(samples, clip.source())?;
    Ok(match clip.label() {
        Some(l) => mixed.with_label(l),
        None => mixed,
    })
}

/// Mixes a random window of random background noise into every clip.
/// Clip `i` always receives the same window for a given seed.
pub fn mix_noise_dataset(
    clips: &[AudioClip],
    noise: &[Recording],
    ratio: f32,
    seed: u64,
) -> Result<Vec<AudioClip>> {
    if ratio == 0.0 {
        return Ok(clips.to_vec());
    }
    if noise.is_empty() {
        return Err(Error::param(
            "noise",
            "no noise recordings available for mixing",
        ));
    }
    clips
        .iter()
        .enumerate()
        .map(|(i, clip)| {
            let mut rng = rng::stream(seed, &[0x0153, i as u64]);
            let rec = &noise[rng.random_range(0..noise.len())];
            let start = if rec.samples.len() > CLIP_LEN {
                rng.random_range(0..=rec.samples.len() - CLIP_LEN)
            } else {
                0
            };
            let window = SilenceRef {
                noise_file: rec.source.clone(),
                start,
                gain: 1.0,
            }
            .render(rec)?;
            mix_noise(clip, &window, ratio)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_rec(len: usize) -> Recording {
        Recording {
            samples: (0..len).map(|i| ((i as f32) * 0.37).sin() * 0.5).collect(),
            source: "hum.wav".into(),
        }
    }

    #[test]
    fn silence_counts_and_lengths() {
        let rec = [noise_rec(40_000)];
        assert!(make_silence(&rec, 0, 1).unwrap().is_empty());
        let clips = make_silence(&rec, 5, 1).unwrap();
        assert_eq!(clips.len(), 5);
        for c in &clips {
            assert_eq!(c.samples().len(), CLIP_LEN);
            assert_eq!(c.label(), Some(Label::Silence));
        }
        assert_eq!(clips, make_silence(&rec, 5, 1).unwrap());
    }

    #[test]
    fn silence_needs_noise() {
        assert!(make_silence(&[], 3, 1).is_err());
    }

    #[test]
    fn silence_window_is_scaled_contiguous_slice() {
        let rec = noise_rec(30_000);
        let plan = SilenceRef {
            noise_file: "hum.wav".into(),
            start: 1234,
            gain: 0.5,
        };
        let clip = plan.render(&rec).unwrap();
        for i in [0, 100, 15_999] {
            assert_eq!(clip.samples()[i], rec.samples[1234 + i] * 0.5);
        }
        let zero = SilenceRef { gain: 0.0, ..plan };
        let clip = zero.render(&rec).unwrap();
        assert!(clip.samples().iter().all(|&s| s == 0.0));
        assert_eq!(clip.label(), Some(Label::Silence));
    }

    #[test]
    fn mixing_rules() {
        let c = AudioClip::new(vec![0.9; CLIP_LEN], "c").unwrap();
        let n = AudioClip::new(vec![0.9; CLIP_LEN], "n").unwrap();
        assert_eq!(mix_noise(&c, &n, 0.0).unwrap(), c);
        let m = mix_noise(&c, &n, 0.5).unwrap();
        assert!(m.samples().iter().all(|&s| s == 1.0));

        let z = AudioClip::silent("z");
        let n =
            AudioClip::new((0..CLIP_LEN).map(|i| (i % 7) as f32 / 10.0).collect(), "n").unwrap();
        let m = mix_noise(&z, &n, 0.25).unwrap();
        for (o, x) in m.samples().iter().zip(n.samples()) {
            assert_eq!(*o, 0.25 * x);
        }
        assert!(mix_noise(&z, &n, -0.1).is_err());
    }

    #[test]
    fn dataset_mixing_is_deterministic() {
        let rec = [noise_rec(20_000)];
        let clips = vec![AudioClip::silent("a").with_label(Label::Go); 3];
        let a = mix_noise_dataset(&clips, &rec, 0.3, 9).unwrap();
        let b = mix_noise_dataset(&clips, &rec, 0.3, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].label(), Some(Label::Go));
        assert_eq!(mix_noise_dataset(&clips, &[], 0.0, 9).unwrap(), clips);
    }
}
