//! Short-time spectral analysis primitives.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::FeatureMode;
use crate::{Error, Result};

/// Number of triangular mel filters used before the DCT in MFCC mode.
pub const NUM_MEL: usize = 40;
pub const MEL_LOW_HZ: f64 = 20.0;
pub const MEL_HIGH_HZ: f64 = 7600.0;

/// Number of frames `frame_signal` yields for a signal of `len` samples.
pub fn frame_count(len: usize, window_size: usize, window_stride: usize) -> usize {
    (len - window_size) / window_stride + 1
}

/// Splits `samples` into frames of `window_size` starting every
/// `window_stride` samples. Trailing samples that do not fill a frame are
/// dropped.
pub fn frame_signal(
    samples: &[f32],
    window_size: usize,
    window_stride: usize,
) -> Result<Vec<&[f32]>> {
    if window_size == 0 || window_size > samples.len() {
        return Err(Error::param(
            "window_size",
            format!("must be in 1..={}, got {window_size}", samples.len()),
        ));
    }
    if window_stride == 0 {
        return Err(Error::param("window_stride", "must be positive"));
    }
    let n = frame_count(samples.len(), window_size, window_stride);
    Ok((0..n)
        .map(|i| &samples[i * window_stride..i * window_stride + window_size])
        .collect())
}

/// Symmetric Hann window with zero endpoints.
pub fn hann_window(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::param(
            "n",
            format!("Hann window needs n >= 2, got {n}"),
        ));
    }
    let denom = (n - 1) as f64;
    Ok((0..n)
        .map(|k| 0.5 * (1.0 - (2.0 * PI * k as f64 / denom).cos()))
        .collect())
}

/// Reusable FFT plan for frames of one length.
#[derive(Clone)]
pub struct SpectrumAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl SpectrumAnalyzer {
    pub fn new(n: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(n);
        let scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        SpectrumAnalyzer {
            fft,
            buf: vec![Complex::default(); n],
            scratch,
        }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// Magnitudes of bins `0..=n/2` of the DFT of a real frame.
    pub fn magnitudes(&mut self, frame: &[f64]) -> Vec<f64> {
        assert_eq!(
            frame.len(),
            self.buf.len(),
            "frame length must match the plan"
        );
        for (b, &x) in self.buf.iter_mut().zip(frame) {
            *b = Complex::new(x, 0.0);
        }
        self.fft
            .process_with_scratch(&mut self.buf, &mut self.scratch);
        self.buf[..frame.len() / 2 + 1]
            .iter()
            .map(|c| c.norm())
            .collect()
    }
}

pub fn dft_magnitude(frame: &[f64]) -> Vec<f64> {
    SpectrumAnalyzer::new(frame.len()).magnitudes(frame)
}

pub fn log_compress(magnitudes: &[f64], log_offset: f64) -> Vec<f64> {
    magnitudes.iter().map(|m| (m + log_offset).ln()).collect()
}

/// Averages contiguous, near-equal ranges of `values` into `num_buckets`
/// values. Bucket `b` covers `[b*len/B, (b+1)*len/B)`.
pub fn mean_pool(values: &[f64], num_buckets: usize) -> Result<Vec<f64>> {
    if num_buckets == 0 || num_buckets > values.len() {
        return Err(Error::param(
            "num_buckets",
            format!("must be in 1..={}, got {num_buckets}", values.len()),
        ));
    }
    let len = values.len();
    Ok((0..num_buckets)
        .map(|b| {
            let lo = b * len / num_buckets;
            let hi = (b + 1) * len / num_buckets;
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect())
}

pub fn hz_to_mel(hz: f64) -> f64 {
    1127.0 * (1.0 + hz / 700.0).ln()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * ((mel / 1127.0).exp() - 1.0)
}

/// Triangular filters evenly spaced on the mel scale, each normalized to
/// unit weight sum, so a flat spectrum maps to flat filter energies.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    /// `(first_bin, weights)` per filter.
    filters: Vec<(usize, Vec<f64>)>,
    num_bins: usize,
}

impl MelFilterbank {
    pub fn new(num_bins: usize, sample_rate: f64, num_mel: usize) -> Self {
        let nyquist = sample_rate / 2.0;
        let high = MEL_HIGH_HZ.min(nyquist);
        let (mel_lo, mel_hi) = (hz_to_mel(MEL_LOW_HZ), hz_to_mel(high));
        let edges: Vec<f64> = (0..num_mel + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (num_mel + 1) as f64))
            .collect();
        let bin_hz = nyquist / (num_bins - 1).max(1) as f64;
        let filters = (0..num_mel)
            .map(|m| {
                let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let weights: Vec<(usize, f64)> = (0..num_bins)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > lo && f <= center {
                            (f - lo) / (center - lo)
                        } else if f > center && f < hi {
                            (hi - f) / (hi - center)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                if weights.is_empty() {
                    // filter narrower than a bin: take the nearest bin whole
                    let k = ((center / bin_hz).round() as usize).min(num_bins - 1);
                    return (k, vec![1.0]);
                }
                let first = weights[0].0;
                let last = weights[weights.len() - 1].0;
                let mut dense = vec![0.0; last - first + 1];
                for (k, w) in &weights {
                    dense[k - first] = *w;
                }
                let total: f64 = dense.iter().sum();
                dense.iter_mut().for_each(|w| *w /= total);
                (first, dense)
            })
            .collect();
        MelFilterbank { filters, num_bins }
    }

    pub fn num_filters(&self) -> usize {
        self.filters.len()
    }

    pub fn apply(&self, magnitudes: &[f64]) -> Vec<f64> {
        debug_assert_eq!(magnitudes.len(), self.num_bins);
        self.filters
            .iter()
            .map(|(first, w)| {
                w.iter()
                    .zip(&magnitudes[*first..])
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }
}

/// First `num_coeffs` orthonormal DCT-II coefficients of `values`.
pub fn dct_ii(values: &[f64], num_coeffs: usize) -> Vec<f64> {
    let n = values.len() as f64;
    (0..num_coeffs)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / n).sqrt()
            } else {
                (2.0 / n).sqrt()
            };
            scale
                * values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos())
                    .sum::<f64>()
        })
        .collect()
}

/// Reduces one frame's magnitude spectrum to `num_buckets` features.
///
/// Spectrogram mode log-compresses and mean-pools; MFCC mode applies the
/// mel filterbank, log-compresses and keeps the leading DCT coefficients.
#[derive(Clone, Debug)]
pub enum Bucketizer {
    Pool {
        num_buckets: usize,
        log_offset: f64,
    },
    Mfcc {
        bank: MelFilterbank,
        num_buckets: usize,
        log_offset: f64,
    },
}

impl Bucketizer {
    pub fn new(
        mode: FeatureMode,
        num_bins: usize,
        num_buckets: usize,
        log_offset: f64,
    ) -> Result<Self> {
        if num_buckets == 0 || num_buckets > num_bins {
            return Err(Error::param(
                "num_buckets",
                format!("must be in 1..={num_bins} for this window, got {num_buckets}"),
            ));
        }
        match mode {
            FeatureMode::Spectrogram => Ok(Bucketizer::Pool {
                num_buckets,
                log_offset,
            }),
            FeatureMode::Mfcc => {
                if num_buckets > NUM_MEL {
                    return Err(Error::param(
                        "num_buckets",
                        format!("MFCC keeps at most {NUM_MEL} coefficients, got {num_buckets}"),
                    ));
                }
                Ok(Bucketizer::Mfcc {
                    bank: MelFilterbank::new(num_bins, crate::SAMPLE_RATE as f64, NUM_MEL),
                    num_buckets,
                    log_offset,
                })
            }
            FeatureMode::AmplitudePlot => Err(Error::param(
                "mode",
                "amplitude plots are not built from spectra",
            )),
        }
    }

    pub fn apply(&self, magnitudes: &[f64]) -> Vec<f64> {
        match self {
            Bucketizer::Pool {
                num_buckets,
                log_offset,
            } => mean_pool(&log_compress(magnitudes, *log_offset), *num_buckets)
                .expect("bucket count validated at construction"),
            Bucketizer::Mfcc {
                bank,
                num_buckets,
                log_offset,
            } => {
                let energies = log_compress(&bank.apply(magnitudes), *log_offset);
                dct_ii(&energies, *num_buckets)
            }
        }
    }
}

/// One-shot form of [`Bucketizer::apply`].
pub fn bucketize(
    magnitudes: &[f64],
    num_buckets: usize,
    mode: FeatureMode,
    log_offset: f64,
) -> Result<Vec<f64>> {
    Ok(Bucketizer::new(mode, magnitudes.len(), num_buckets, log_offset)?.apply(magnitudes))
}
