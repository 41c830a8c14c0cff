use std::fs;
use std::path::Path;

use crate::tensor::Tensor;
use crate::{Error, Result};

use super::network::Network;
use super::spec::ModelSpec;

const MAGIC: &[u8; 4] = b"KWSM";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub seed: u64,
    pub epoch: u32,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        let spec = self.network.spec().canonical();
        put_u32(&mut out, spec.len() as u32);
        out.extend_from_slice(spec.as_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        put_u32(&mut out, self.epoch);
        let params = self.network.params();
        put_u32(&mut out, params.len() as u32);
        for (name, t) in self.network.param_names().iter().zip(params) {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, t.shape().len() as u32);
            for &d in t.shape() {
                put_u32(&mut out, d as u32);
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::format("checkpoint", "bad magic bytes"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Incompatible(format!(
                "checkpoint format version {version}, this build reads version {VERSION}"
            )));
        }
        let spec_len = r.u32()? as usize;
        let spec_text = std::str::from_utf8(r.take(spec_len)?)
            .map_err(|_| Error::format("checkpoint", "spec text is not UTF-8"))?;
        let spec = ModelSpec::from_canonical(spec_text)?;
        let seed = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let epoch = r.u32()?;
        let count = r.u32()? as usize;
        let mut named = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::format("checkpoint", "tensor name is not UTF-8"))?;
            let rank = r.u32()? as usize;
            if rank > 8 {
                return Err(Error::format(
                    "checkpoint",
                    format!("tensor `{name}` has rank {rank}"),
                ));
            }
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let raw = r.take(
                len.checked_mul(4)
                    .ok_or_else(|| Error::format("checkpoint", "tensor too large"))?,
            )?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            named.push((name, Tensor::new(&shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::format(
                "checkpoint",
                "trailing bytes after the last tensor",
            ));
        }
        Ok(Checkpoint {
            network: Network::from_parts(spec, named)?,
            seed,
            epoch,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::format(
                    "checkpoint",
                    format!("truncated at byte {} (wanted {n} more)", self.pos),
                )
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, checkpoint.encode()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::decode(&bytes)
}

/// Loads a checkpoint and insists it was written for `expected`.
pub fn load_checkpoint_for(path: &Path, expected: &ModelSpec) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    if ck.network.spec() != expected {
        return Err(Error::Incompatible(format!(
            "checkpoint holds a {} model ({}x{}), expected {} ({}x{})",
            ck.network.spec().variant,
            ck.network.spec().input_height,
            ck.network.spec().input_width,
            expected.variant,
            expected.input_height,
            expected.input_width
        )));
    }
    Ok(ck)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{InitKind, InitSpec};

    fn net(spec: ModelSpec) -> Network {
        Network::new(
            spec,
            InitSpec {
                kind: InitKind::TruncatedNormal { std: 0.01 },
                seed: 2,
            },
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ck = Checkpoint {
            network: net(ModelSpec::shallow_crm(28, 28)),
            seed: 9,
            epoch: 4,
        };
        save_checkpoint(&ck, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ck);
        let x = Tensor::from_fn(&[2, 28, 28, 1], |i| (i % 17) as f32 / 17.0);
        let a = ck.network.logits(x.clone()).unwrap();
        let b = back.network.logits(x).unwrap();
        assert!(a
            .data()
            .iter()
            .zip(b.data())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn truncation_and_corruption_are_errors() {
        let bytes = Checkpoint {
            network: net(ModelSpec::low_latency(28, 28)),
            seed: 1,
            epoch: 0,
        }
        .encode();
        for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(Checkpoint::decode(&bytes[..cut]).is_err());
        }
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            Checkpoint::decode(&bad),
            Err(Error::Incompatible(_))
        ));
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::decode(&extra).is_err());
    }

    #[test]
    fn wrong_spec_is_incompatible() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mnist.ckpt");
        let ck = Checkpoint {
            network: net(ModelSpec::mnist_cnn()),
            seed: 0,
            epoch: 1,
        };
        save_checkpoint(&ck, &path).unwrap();
        let err = load_checkpoint_for(&path, &ModelSpec::low_latency(28, 28)).unwrap_err();
        assert!(matches!(err, Error::Incompatible(_)), "{err}");
        assert!(load_checkpoint_for(&path, &ModelSpec::mnist_cnn()).is_ok());
    }
}
