//! Strict reader and writer for 16-bit mono 16 kHz PCM WAV files.

use std::fs;
use std::path::Path;

use crate::{Error, Result, SAMPLE_RATE};

const PCM_FORMAT: u32 = 1;
const CHANNELS: u32 = 1;
const BITS_PER_SAMPLE: u32 = 16;

/// Reads every sample of a PCM WAV file, normalized by 1/32768.
///
/// No length fitting is applied; see [`super::load_wav`] for clips.
pub fn read_wav_samples(path: &Path) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes, path)
}

pub(crate) fn decode_wav(bytes: &[u8], path: &Path) -> Result<Vec<f32>> {
    let malformed = |reason: &str| Error::WavFormat {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 12 {
        return Err(malformed("file shorter than RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(malformed("missing RIFF tag"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(malformed("missing WAVE tag"));
    }

    let mut fmt_seen = false;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body + 16 > bytes.len() {
                    return Err(malformed("fmt chunk too short"));
                }
                let f = &bytes[body..body + 16];
                let format = u16::from_le_bytes([f[0], f[1]]) as u32;
                let channels = u16::from_le_bytes([f[2], f[3]]) as u32;
                let rate = u32::from_le_bytes([f[4], f[5], f[6], f[7]]);
                let bits = u16::from_le_bytes([f[14], f[15]]) as u32;
                check_field(path, "format tag", format, PCM_FORMAT)?;
                check_field(path, "channel count", channels, CHANNELS)?;
                check_field(path, "sample rate", rate, SAMPLE_RATE)?;
                check_field(path, "bits per sample", bits, BITS_PER_SAMPLE)?;
                fmt_seen = true;
            }
            b"data" => {
                if !fmt_seen {
                    return Err(malformed("data chunk before fmt chunk"));
                }
                if body + size > bytes.len() {
                    return Err(malformed("data chunk runs past end of file"));
                }
                if !size.is_multiple_of(2) {
                    return Err(malformed("data chunk has odd byte length"));
                }
                let samples = bytes[body..body + size]
                    .chunks_exact(2)
                    .map(|b| i16::from_le_bytes([b[0], b[1]]) as f32 / 32768.0)
                    .collect();
                return Ok(samples);
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body + size + (size & 1);
    }
    Err(malformed(if fmt_seen {
        "no data chunk"
    } else {
        "no fmt chunk"
    }))
}

fn check_field(path: &Path, field: &'static str, found: u32, expected: u32) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::WavUnsupported {
            path: path.to_path_buf(),
            field,
            found,
            expected,
        })
    }
}

/// Encodes samples in [-1, 1] as 16-bit PCM. Values are scaled by 32768,
/// rounded and saturated.
pub fn encode_wav(samples: &[f32]) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&(PCM_FORMAT as u16).to_le_bytes());
    out.extend_from_slice(&(CHANNELS as u16).to_le_bytes());
    out.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    out.extend_from_slice(&(SAMPLE_RATE * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&(BITS_PER_SAMPLE as u16).to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        let v = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_wav(path: &Path, samples: &[f32]) -> Result<()> {
    fs::write(path, encode_wav(samples)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_wav(rate: u32, channels: u16, bits: u16, data: &[i16]) -> Vec<u8> {
        let mut out = Vec::new();
        let data_len = (data.len() * 2) as u32;
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data_len).to_le_bytes());
        out.extend_from_slice(b"WAVEfmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * 2).to_le_bytes());
        out.extend_from_slice(&2u16.to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&data_len.to_le_bytes());
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    #[test]
    fn decodes_normalized_values() {
        let bytes = raw_wav(16_000, 1, 16, &[16384, -32768, 0, 32767]);
        let s = decode_wav(&bytes, Path::new("x.wav")).unwrap();
        assert_eq!(s, vec![0.5, -1.0, 0.0, 32767.0 / 32768.0]);
    }

    #[test]
    fn rejects_wrong_rate_naming_field() {
        let bytes = raw_wav(44_100, 1, 16, &[0; 4]);
        let err = decode_wav(&bytes, Path::new("x.wav")).unwrap_err();
        assert!(err.to_string().contains("sample rate"), "{err}");
        assert!(err.to_string().contains("44100"), "{err}");
    }

    #[test]
    fn rejects_stereo() {
        let bytes = raw_wav(16_000, 2, 16, &[0; 4]);
        let err = decode_wav(&bytes, Path::new("x.wav")).unwrap_err();
        assert!(err.to_string().contains("channel count"), "{err}");
    }

    #[test]
    fn rejects_garbage_header() {
        let err = decode_wav(b"RIFX0000WAVE", Path::new("x.wav")).unwrap_err();
        assert!(matches!(err, Error::WavFormat { .. }));
        let err = decode_wav(b"RIFF", Path::new("x.wav")).unwrap_err();
        assert!(matches!(err, Error::WavFormat { .. }));
    }

    #[test]
    fn rejects_truncated_data() {
        let mut bytes = raw_wav(16_000, 1, 16, &[1, 2, 3, 4]);
        bytes.truncate(bytes.len() - 3);
        let err = decode_wav(&bytes, Path::new("x.wav")).unwrap_err();
        assert!(matches!(err, Error::WavFormat { .. }));
    }

    #[test]
    fn skips_unknown_chunks() {
        let plain = raw_wav(16_000, 1, 16, &[100, 200]);
        let mut bytes = plain[..36].to_vec();
        bytes.extend_from_slice(b"LIST");
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&[1, 2, 3, 0]);
        bytes.extend_from_slice(&plain[36..]);
        let s = decode_wav(&bytes, Path::new("x.wav")).unwrap();
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn encode_decode_round_trip() {
        let samples = vec![0.0, 0.5, -0.25, -1.0];
        let back = decode_wav(&encode_wav(&samples), Path::new("x.wav")).unwrap();
        assert_eq!(back, samples);
    }
}
