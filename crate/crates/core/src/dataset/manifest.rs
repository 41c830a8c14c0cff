use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::BACKGROUND_NOISE_DIR;
use super::{assign_label, load_wav, plan_silence, read_wav_samples, AudioClip, Label, Recording};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Partition {
    Train,
    Validation,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "TRAIN",
            Partition::Validation => "VALIDATION",
        }
    }
}

impl FromStr for Partition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "TRAIN" => Ok(Partition::Train),
            "VALIDATION" => Ok(Partition::Validation),
            other => Err(Error::format(
                "manifest",
                format!("unknown partition `{other}`"),
            )),
        }
    }
}

/// A synthesized silence example: a scaled window of a background-noise
/// recording. Serialized as `_background_noise_/<file>#<start>@<gain>`.
#[derive(Clone, Debug, PartialEq)]
pub struct SilenceRef {
    pub noise_file: String,
    pub start: usize,
    pub gain: f32,
}

impl fmt::Display for SilenceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{BACKGROUND_NOISE_DIR}/{}#{}@{}",
            self.noise_file, self.start, self.gain
        )
    }
}

impl SilenceRef {
    pub fn parse(path: &str) -> Option<SilenceRef> {
        let rest = path.strip_prefix(BACKGROUND_NOISE_DIR)?.strip_prefix('/')?;
        let (file, tail) = rest.split_once('#')?;
        let (start, gain) = tail.split_once('@')?;
        Some(SilenceRef {
            noise_file: file.to_string(),
            start: start.parse().ok()?,
            gain: gain.parse().ok()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    /// Path relative to the dataset root, `/`-separated.
    pub path: String,
    pub label: Label,
    pub partition: Partition,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub seed: u64,
    /// Dataset directory the entry paths are relative to.
    pub root: Option<PathBuf>,
}

impl DatasetManifest {
    pub fn partition(&self, p: Partition) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.partition == p)
    }

    pub fn histogram(&self, p: Partition) -> [usize; Label::COUNT] {
        let mut h = [0; Label::COUNT];
        for e in self.partition(p) {
            h[e.label.index()] += 1;
        }
        h
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("# seed={}\n", self.seed);
        if let Some(root) = &self.root {
            out.push_str(&format!("# root={}\n", root.display()));
        }
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                e.path,
                e.label.index(),
                e.partition.as_str()
            ));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seed = 0;
        let mut root = None;
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                match meta.trim().split_once('=') {
                    Some(("seed", v)) => {
                        seed = v.parse().map_err(|_| {
                            Error::format("manifest", format!("line {}: bad seed `{v}`", n + 1))
                        })?
                    }
                    Some(("root", v)) => root = Some(PathBuf::from(v)),
                    _ => {}
                }
                continue;
            }
            let bad = |why: &str| Error::format("manifest", format!("line {}: {why}", n + 1));
            let mut cols = line.split('\t');
            let (Some(path), Some(label), Some(part), None) =
                (cols.next(), cols.next(), cols.next(), cols.next())
            else {
                return Err(bad("expected three tab-separated columns"));
            };
            let label = label
                .parse::<usize>()
                .ok()
                .and_then(Label::from_index)
                .ok_or_else(|| bad("label index must be in 0..=11"))?;
            entries.push(ManifestEntry {
                path: path.to_string(),
                label,
                partition: part.parse()?,
            });
        }
        Ok(DatasetManifest {
            entries,
            seed,
            root,
        })
    }
}

#[derive(Clone, Debug)]
pub struct ManifestOptions {
    /// Fraction of word examples assigned to TRAIN.
    pub split_ratio: f64,
    pub seed: u64,
    /// SILENCE examples added to each partition, as a fraction of that
    /// partition's word examples.
    pub silence_fraction: f64,
    /// Per-label cap applied before splitting.
    pub max_per_class: Option<usize>,
}

impl Default for ManifestOptions {
    fn default() -> Self {
        ManifestOptions {
            split_ratio: 0.8,
            seed: 0,
            silence_fraction: 0.1,
            max_per_class: None,
        }
    }
}

fn split_key(seed: u64, path: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(path.as_bytes());
    h.finalize().into()
}

fn sorted_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<Vec<_>>>()?;
    paths.sort();
    Ok(paths)
}

fn is_wav(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

/// Loads every recording under `<root>/_background_noise_/`, keyed by file
/// name. Returns an empty list when the folder is absent.
pub fn load_noise_dir(root: &Path) -> Result<Vec<Recording>> {
    let dir = root.join(BACKGROUND_NOISE_DIR);
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    sorted_dir(&dir)?
        .into_iter()
        .filter(|p| is_wav(p))
        .map(|p| {
            Ok(Recording {
                samples: read_wav_samples(&p)?,
                source: p.file_name().unwrap().to_string_lossy().into_owned(),
            })
        })
        .collect()
}

/// Scans `<root>/<word>/<file>.wav`, labels each file, splits by a seeded
/// hash of its relative path and appends SILENCE windows cut from the
/// background-noise recordings.
///
/// For a fixed seed the result depends only on the set of files.
pub fn build_manifest(root: &Path, opts: &ManifestOptions) -> Result<DatasetManifest> {
    if !(0.0..=1.0).contains(&opts.split_ratio) {
        return Err(Error::param(
            "split_ratio",
            format!("{} not in [0, 1]", opts.split_ratio),
        ));
    }
    if opts.silence_fraction.is_nan() || opts.silence_fraction < 0.0 {
        return Err(Error::param("silence_fraction", "must be >= 0"));
    }
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "dataset root is not a directory",
            ),
        ));
    }

    let mut by_label: BTreeMap<Label, Vec<([u8; 32], String)>> = BTreeMap::new();
    for dir in sorted_dir(root)? {
        if !dir.is_dir() {
            continue;
        }
        let name = dir.file_name().unwrap().to_string_lossy().into_owned();
        if name.starts_with('.') {
            continue;
        }
        let Some(label) = assign_label(&name) else {
            continue;
        };
        for file in sorted_dir(&dir)?.into_iter().filter(|p| is_wav(p)) {
            let rel = format!("{name}/{}", file.file_name().unwrap().to_string_lossy());
            by_label
                .entry(label)
                .or_default()
                .push((split_key(opts.seed, &rel), rel));
        }
    }

    let mut words: Vec<([u8; 32], String, Label)> = Vec::new();
    for (label, mut files) in by_label {
        files.sort();
        if let Some(cap) = opts.max_per_class {
            files.truncate(cap);
        }
        words.extend(files.into_iter().map(|(k, p)| (k, p, label)));
    }
    if words.is_empty() {
        return Err(Error::EmptyDataset(root.to_path_buf()));
    }
    words.sort();

    let n_train = (opts.split_ratio * words.len() as f64).round() as usize;
    let mut entries: Vec<ManifestEntry> = words
        .into_iter()
        .enumerate()
        .map(|(i, (_, path, label))| ManifestEntry {
            path,
            label,
            partition: if i < n_train {
                Partition::Train
            } else {
                Partition::Validation
            },
        })
        .collect();

    if opts.silence_fraction > 0.0 {
        let noise = load_noise_dir(root)?;
        let lengths: Vec<_> = noise
            .iter()
            .map(|r| (r.source.clone(), r.samples.len()))
            .collect();
        let n_val = entries.len() - n_train;
        for (part, n, stream) in [
            (Partition::Train, n_train, 1),
            (Partition::Validation, n_val, 2),
        ] {
            let count = (opts.silence_fraction * n as f64).round() as usize;
            if count == 0 {
                continue;
            }
            let plan = plan_silence(&lengths, count, opts.seed.wrapping_add(stream))?;
            entries.extend(plan.into_iter().map(|s| ManifestEntry {
                path: s.to_string(),
                label: Label::Silence,
                partition: part,
            }));
        }
    }

    entries.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(DatasetManifest {
        entries,
        seed: opts.seed,
        root: Some(root.to_path_buf()),
    })
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    fs::write(path, manifest.to_tsv()).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DatasetManifest::from_tsv(&text)
}

/// Decodes every entry of `manifest` (rendering SILENCE windows from the
/// noise recordings) and returns `(train, validation)` clips with labels.
pub fn load_manifest_clips(
    root: &Path,
    manifest: &DatasetManifest,
) -> Result<(Vec<AudioClip>, Vec<AudioClip>)> {
    let noise: HashMap<String, Recording> = load_noise_dir(root)?
        .into_iter()
        .map(|r| (r.source.clone(), r))
        .collect();
    let mut train = Vec::new();
    let mut val = Vec::new();
    for e in &manifest.entries {
        let clip = match SilenceRef::parse(&e.path) {
            Some(s) => {
                let rec = noise.get(&s.noise_file).ok_or_else(|| {
                    Error::format(
                        "manifest",
                        format!("noise file `{}` not found", s.noise_file),
                    )
                })?;
                s.render(rec)?
            }
            None => load_wav(&root.join(&e.path))?,
        }
        .with_label(e.label);
        match e.partition {
            Partition::Train => train.push(clip),
            Partition::Validation => val.push(clip),
        }
    }
    Ok((train, val))
}
