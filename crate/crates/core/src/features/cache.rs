//! Binary feature cache and PGM dumps.
//!
//! Cache layout (all integers u32 little-endian):
//!
//! ```text
//! "KWSF" version mode height width count flags
//! repeated count times:
//!     label [provenance: u8, only if flags & 1] pixels: height*width f32 LE
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{FeatureImage, FeatureMode};
use crate::dataset::Label;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"KWSF";
const VERSION: u32 = 1;
const FLAG_PROVENANCE: u32 = 1;

/// Where an example in an augmented set came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    Original = 0,
    Sign = 1,
    Std = 2,
    Fgsm = 3,
}

impl Provenance {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Provenance::Original),
            1 => Some(Provenance::Sign),
            2 => Some(Provenance::Std),
            3 => Some(Provenance::Fgsm),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCache {
    pub mode: FeatureMode,
    pub height: usize,
    pub width: usize,
    pub images: Vec<FeatureImage>,
    pub provenance: Option<Vec<Provenance>>,
}

impl FeatureCache {
    pub fn new(mode: FeatureMode, height: usize, width: usize, images: Vec<FeatureImage>) -> Self {
        FeatureCache {
            mode,
            height,
            width,
            images,
            provenance: None,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let per = self.height * self.width;
        let mut out = Vec::with_capacity(28 + self.images.len() * (5 + per * 4));
        let flags = if self.provenance.is_some() {
            FLAG_PROVENANCE
        } else {
            0
        };
        out.extend_from_slice(MAGIC);
        for v in [
            VERSION,
            self.mode.code(),
            self.height as u32,
            self.width as u32,
            self.images.len() as u32,
            flags,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(p) = &self.provenance {
            if p.len() != self.images.len() {
                return Err(Error::format(
                    "feature cache",
                    "provenance count differs from image count",
                ));
            }
        }
        for (i, img) in self.images.iter().enumerate() {
            if img.pixels.len() != per {
                return Err(Error::Shape(format!(
                    "image {i} is {}x{}, cache expects {}x{}",
                    img.height, img.width, self.height, self.width
                )));
            }
            let label = img
                .label
                .ok_or_else(|| Error::format("feature cache", format!("image {i} has no label")))?;
            out.extend_from_slice(&(label.index() as u32).to_le_bytes());
            if let Some(p) = &self.provenance {
                out.push(p[i] as u8);
            }
            for px in &img.pixels {
                out.extend_from_slice(&px.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |why: &str| Error::format("feature cache", why.to_string());
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).ok_or_else(|| bad("truncated header"))? != MAGIC {
            return Err(bad("bad magic bytes"));
        }
        let mut header = [0u32; 6];
        for h in header.iter_mut() {
            *h = r.u32().ok_or_else(|| bad("truncated header"))?;
        }
        let [version, mode, height, width, count, flags] = header;
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let mode = FeatureMode::from_code(mode).ok_or_else(|| bad("unknown mode"))?;
        let (height, width) = (height as usize, width as usize);
        let with_prov = flags & FLAG_PROVENANCE != 0;
        let mut images = Vec::with_capacity(count as usize);
        let mut provenance = Vec::new();
        for _ in 0..count {
            let label = r
                .u32()
                .and_then(|l| Label::from_index(l as usize))
                .ok_or_else(|| bad("truncated record or bad label"))?;
            if with_prov {
                let p = r.take(1).ok_or_else(|| bad("truncated record"))?[0];
                provenance.push(Provenance::from_byte(p).ok_or_else(|| bad("bad provenance"))?);
            }
            let raw = r
                .take(height * width * 4)
                .ok_or_else(|| bad("truncated pixel data"))?;
            let pixels = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            images.push(FeatureImage::new(height, width, pixels, mode)?.with_label(Some(label)));
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(FeatureCache {
            mode,
            height,
            width,
            images,
            provenance: with_prov.then_some(provenance),
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn write_feature_cache(path: &Path, cache: &FeatureCache) -> Result<()> {
    fs::write(path, cache.encode()?).map_err(|e| Error::io(path, e))
}

pub fn read_feature_cache(path: &Path) -> Result<FeatureCache> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureCache::decode(&bytes)
}

/// Binary 8-bit PGM (P5); pixel value `round(255 * v)`.
pub fn write_pgm(path: &Path, image: &FeatureImage) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let body: Vec<u8> = image
        .pixels
        .iter()
        .map(|v| (255.0 * v.clamp(0.0, 1.0)).round() as u8)
        .collect();
    write!(w, "P5\n{} {}\n255\n", image.width, image.height)
        .and_then(|_| w.write_all(&body))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_cache() -> FeatureCache {
        let images = (0..3)
            .map(|i| {
                FeatureImage::new(
                    2,
                    3,
                    vec![i as f32 / 3.0, 0.0, 1.0, 0.25, 0.5, 0.75],
                    FeatureMode::Mfcc,
                )
                .unwrap()
                .with_label(Label::from_index(i * 4))
            })
            .collect();
        FeatureCache::new(FeatureMode::Mfcc, 2, 3, images)
    }

    #[test]
    fn round_trip_with_and_without_provenance() {
        let cache = sample_cache();
        assert_eq!(
            FeatureCache::decode(&cache.encode().unwrap()).unwrap(),
            cache
        );
        let bytes = cache.encode().unwrap();
        assert_eq!(bytes.len(), 28 + 3 * (4 + 24));

        let mut tagged = sample_cache();
        tagged.provenance = Some(vec![
            Provenance::Original,
            Provenance::Sign,
            Provenance::Std,
        ]);
        let bytes = tagged.encode().unwrap();
        assert_eq!(bytes.len(), 28 + 3 * (5 + 24));
        assert_eq!(FeatureCache::decode(&bytes).unwrap(), tagged);
    }

    #[test]
    fn truncated_cache_errors() {
        let bytes = sample_cache().encode().unwrap();
        for cut in [0, 3, 20, 40, bytes.len() - 1] {
            assert!(FeatureCache::decode(&bytes[..cut]).is_err(), "cut {cut}");
        }
    }

    #[test]
    fn pgm_header_and_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        let img = FeatureImage::new(1, 3, vec![0.0, 0.5, 1.0], FeatureMode::Spectrogram).unwrap();
        write_pgm(&path, &img).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..11], b"P5\n3 1\n255\n");
        assert_eq!(&bytes[11..], &[0, 128, 255]);
    }
}
