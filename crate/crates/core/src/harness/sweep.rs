use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataset::{mix_noise_dataset, AudioClip, Recording};
use crate::features::{FeatureConfig, FeatureImage, Featurizer};
use crate::optim::{InitKind, OptimizerKind};
use crate::{Error, Result, SAMPLE_RATE};

use super::config::{TrainConfig, VatMode};
use super::plot::{write_svg, Plot, Series};
use super::record::{write_metrics, ExitReason, RunRecord};
use super::train::train_with_progress;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParam {
    NumBuckets,
    WindowSize,
    WindowStride,
    NoiseRatio,
    Optimizer,
    Init,
    Vat,
}

impl SweepParam {
    pub const ALL: [SweepParam; 7] = [
        SweepParam::NumBuckets,
        SweepParam::WindowSize,
        SweepParam::WindowStride,
        SweepParam::NoiseRatio,
        SweepParam::Optimizer,
        SweepParam::Init,
        SweepParam::Vat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::NumBuckets => "num_buckets",
            SweepParam::WindowSize => "window_size",
            SweepParam::WindowStride => "window_stride",
            SweepParam::NoiseRatio => "noise_ratio",
            SweepParam::Optimizer => "optimizer",
            SweepParam::Init => "init",
            SweepParam::Vat => "vat",
        }
    }

    /// Parameters that change the features and force refeaturization.
    pub fn needs_audio(self) -> bool {
        matches!(
            self,
            SweepParam::NumBuckets
                | SweepParam::WindowSize
                | SweepParam::WindowStride
                | SweepParam::NoiseRatio
        )
    }

    fn is_numeric(self) -> bool {
        self.needs_audio()
    }

    fn axis_label(self) -> &'static str {
        match self {
            SweepParam::NumBuckets => "frequency buckets",
            SweepParam::WindowSize => "window size (ms)",
            SweepParam::WindowStride => "window stride (ms)",
            SweepParam::NoiseRatio => "noise ratio",
            SweepParam::Optimizer => "optimizer",
            SweepParam::Init => "initialization",
            SweepParam::Vat => "augmentation",
        }
    }

    /// Checks that `value` is usable for this parameter.
    pub fn check_value(self, value: &str) -> Result<()> {
        let bad = |why: &str| Error::Config(format!("{}: value `{value}` {why}", self.as_str()));
        match self {
            SweepParam::NumBuckets | SweepParam::WindowSize | SweepParam::WindowStride => {
                match value.parse::<usize>() {
                    Ok(v) if v > 0 => Ok(()),
                    _ => Err(bad("is not a positive integer")),
                }
            }
            SweepParam::NoiseRatio => match value.parse::<f32>() {
                Ok(v) if (0.0..=1.0).contains(&v) => Ok(()),
                _ => Err(bad("is not a ratio in [0, 1]")),
            },
            SweepParam::Optimizer => value.parse::<OptimizerKind>().map(drop),
            SweepParam::Init => value.parse::<InitKind>().map(drop),
            SweepParam::Vat => value.parse::<VatMode>().map(drop),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let p = match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "num_buckets" | "buckets" => SweepParam::NumBuckets,
            "window_size" | "window" => SweepParam::WindowSize,
            "window_stride" | "stride" => SweepParam::WindowStride,
            "noise_ratio" | "noise" => SweepParam::NoiseRatio,
            "optimizer" => SweepParam::Optimizer,
            "init" => SweepParam::Init,
            "vat" => SweepParam::Vat,
            _ => {
                let names: Vec<_> = SweepParam::ALL.iter().map(|p| p.as_str()).collect();
                return Err(Error::Config(format!(
                    "unknown sweep parameter `{s}`; valid names: {}",
                    names.join(", ")
                )));
            }
        };
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<String>,
    pub base: TrainConfig,
    pub repeats: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        for v in &self.values {
            self.param.check_value(v)?;
        }
        self.base.validate()
    }

    /// Seeds used for the repeats, starting at the base seed.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repeats as u64)
            .map(|r| self.base.seed + r)
            .collect()
    }
}

/// Where a sweep gets its examples. Featurizer and noise sweeps need the
/// audio so they can rebuild features per value.
pub enum SweepData<'a> {
    Features {
        train: &'a [FeatureImage],
        val: &'a [FeatureImage],
    },
    Audio {
        train: &'a [AudioClip],
        val: &'a [AudioClip],
        noise: &'a [Recording],
        features: FeatureConfig,
        noise_ratio: f32,
    },
}

/// Owned train/validation features.
pub struct FeatureData {
    pub train: Vec<FeatureImage>,
    pub val: Vec<FeatureImage>,
}

impl FeatureData {
    pub fn build(
        train: &[AudioClip],
        val: &[AudioClip],
        noise: &[Recording],
        features: &FeatureConfig,
        noise_ratio: f32,
        seed: u64,
    ) -> Result<Self> {
        let mut featurizer = Featurizer::new(features.clone())?;
        let mut run = |clips: &[AudioClip], stream: u64| -> Result<Vec<FeatureImage>> {
            if noise_ratio > 0.0 {
                let noisy =
                    mix_noise_dataset(clips, noise, noise_ratio, seed.wrapping_add(stream))?;
                featurizer.featurize_all(&noisy)
            } else {
                featurizer.featurize_all(clips)
            }
        };
        Ok(FeatureData {
            train: run(train, 0)?,
            val: run(val, 1)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: String,
    pub seed: u64,
    pub final_val_acc: f64,
    pub exit_epoch: usize,
    pub exit_reason: ExitReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepFailure {
    pub value: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
    pub records: Vec<RunRecord>,
    pub failures: Vec<SweepFailure>,
}

fn ms_to_samples(ms: usize) -> usize {
    ms * SAMPLE_RATE as usize / 1000
}

fn apply_train(cfg: &mut TrainConfig, param: SweepParam, value: &str) -> Result<()> {
    match param {
        SweepParam::Optimizer => cfg.optimizer = value.parse()?,
        SweepParam::Init => cfg.init = value.parse()?,
        SweepParam::Vat => cfg.vat = value.parse()?,
        _ => {}
    }
    Ok(())
}

/// One train run per (value, seed). Failed runs are recorded and skipped.
pub fn run_sweep(
    spec: &SweepSpec,
    data: &SweepData,
    mut log: impl FnMut(&str),
) -> Result<SweepReport> {
    spec.validate()?;
    if spec.param.needs_audio() && matches!(data, SweepData::Features { .. }) {
        return Err(Error::Config(format!(
            "sweeping {} changes the features; audio input is required",
            spec.param
        )));
    }
    let mut report = SweepReport {
        param: spec.param,
        rows: Vec::new(),
        records: Vec::new(),
        failures: Vec::new(),
    };
    for value in &spec.values {
        let built;
        let (train, val): (&[FeatureImage], &[FeatureImage]) = match data {
            SweepData::Features { train, val } => (train, val),
            SweepData::Audio {
                train,
                val,
                noise,
                features,
                noise_ratio,
            } => {
                let mut fc = features.clone();
                let mut ratio = *noise_ratio;
                match spec.param {
                    SweepParam::NumBuckets => fc.num_buckets = value.parse().unwrap(),
                    SweepParam::WindowSize => {
                        fc.window_size = ms_to_samples(value.parse().unwrap())
                    }
                    SweepParam::WindowStride => {
                        fc.window_stride = ms_to_samples(value.parse().unwrap())
                    }
                    SweepParam::NoiseRatio => ratio = value.parse().unwrap(),
                    _ => {}
                }
                log(&format!("featurizing for {}={value}", spec.param));
                match FeatureData::build(train, val, noise, &fc, ratio, spec.base.seed) {
                    Ok(d) => {
                        built = d;
                        (&built.train, &built.val)
                    }
                    Err(e) => {
                        for seed in spec.seeds() {
                            report.failures.push(SweepFailure {
                                value: value.clone(),
                                seed,
                                error: e.to_string(),
                            });
                        }
                        continue;
                    }
                }
            }
        };
        for seed in spec.seeds() {
            let mut cfg = TrainConfig {
                seed,
                ..spec.base.clone()
            };
            apply_train(&mut cfg, spec.param, value)?;
            let result = train_with_progress(&cfg, train, val, |row| {
                log(&format!(
                    "{}={value} seed={seed} epoch {} cost {:.4} train_acc {:.4} val_acc {:.4}",
                    spec.param, row.epoch, row.train_cost, row.train_acc, row.val_acc
                ))
            });
            match result {
                Ok(out) => {
                    report.rows.push(SweepRow {
                        param: spec.param,
                        value: value.clone(),
                        seed,
                        final_val_acc: out.record.final_val_acc(),
                        exit_epoch: out.record.exit_epoch(),
                        exit_reason: out.record.exit_reason,
                    });
                    report.records.push(out.record);
                }
                Err(e) => report.failures.push(SweepFailure {
                    value: value.clone(),
                    seed,
                    error: e.to_string(),
                }),
            }
        }
    }
    Ok(report)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

impl SweepReport {
    /// Values in first-seen order.
    pub fn values(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.value) {
                out.push(r.value.clone());
            }
        }
        out
    }

    /// Mean and sample standard deviation of the final validation
    /// accuracy for one value.
    pub fn stats(&self, value: &str) -> (f64, f64) {
        let accs: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.value == value)
            .map(|r| r.final_val_acc)
            .collect();
        mean_std(&accs)
    }

    /// Mean exit epoch for one value.
    pub fn mean_exit_epoch(&self, value: &str) -> f64 {
        let e: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.value == value)
            .map(|r| r.exit_epoch as f64)
            .collect();
        mean_std(&e).0
    }

    pub fn summary_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "param",
            "value",
            "seed",
            "final_val_acc",
            "exit_epoch",
            "exit_reason",
        ])
        .expect("in-memory csv");
        for r in &self.rows {
            w.write_record([
                r.param.as_str().to_string(),
                r.value.clone(),
                r.seed.to_string(),
                r.final_val_acc.to_string(),
                r.exit_epoch.to_string(),
                r.exit_reason.to_string(),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }

    /// Final validation accuracy against the swept value: one point per
    /// run plus the per-value mean.
    pub fn accuracy_plot(&self) -> Plot {
        let values = self.values();
        let x_of = |v: &str| -> f64 {
            if self.param.is_numeric() {
                v.parse().unwrap_or(f64::NAN)
            } else {
                values.iter().position(|x| x == v).unwrap_or(0) as f64
            }
        };
        let title = if self.param.is_numeric() {
            format!("validation accuracy vs {}", self.param)
        } else {
            let legend: Vec<String> = values
                .iter()
                .enumerate()
                .map(|(i, v)| format!("{i}={v}"))
                .collect();
            format!(
                "validation accuracy by {} ({})",
                self.param,
                legend.join(", ")
            )
        };
        let runs = self
            .rows
            .iter()
            .map(|r| (x_of(&r.value), r.final_val_acc))
            .collect();
        let means = values.iter().map(|v| (x_of(v), self.stats(v).0)).collect();
        Plot::new(title, self.param.axis_label(), "final validation accuracy")
            .with_series(Series::scatter("runs", runs))
            .with_series(Series::line("mean", means))
    }

    /// Training cost per epoch for every run.
    pub fn cost_plot(&self) -> Plot {
        let mut plot = Plot::new(
            format!("training cost, {} sweep", self.param),
            "epoch",
            "mean training cost",
        );
        for (row, rec) in self.rows.iter().zip(&self.records) {
            plot.series.push(Series::line(
                format!("{} seed {}", row.value, row.seed),
                rec.rows
                    .iter()
                    .map(|r| (r.epoch as f64, r.train_cost))
                    .collect(),
            ));
        }
        plot
    }

    /// Writes the summary CSV, both plots and one metrics CSV per run.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let summary = dir.join(format!("sweep_{}.csv", self.param));
        write_summary_csv(self, &summary)?;
        written.push(summary);
        let acc = dir.join(format!("sweep_{}.svg", self.param));
        write_svg(&self.accuracy_plot(), &acc)?;
        written.push(acc);
        let cost = dir.join(format!("sweep_{}_cost.svg", self.param));
        write_svg(&self.cost_plot(), &cost)?;
        written.push(cost);
        for (row, rec) in self.rows.iter().zip(&self.records) {
            let p = dir.join(format!(
                "run_{}_{}_seed{}.csv",
                self.param, row.value, row.seed
            ));
            write_metrics(rec, &p)?;
            written.push(p);
        }
        Ok(written)
    }
}

pub fn write_summary_csv(report: &SweepReport, path: &Path) -> Result<()> {
    fs::write(path, report.summary_csv()).map_err(|e| Error::io(path, e))
}
