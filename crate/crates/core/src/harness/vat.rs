use std::fs;
use std::path::{Path, PathBuf};

use crate::features::FeatureImage;
use crate::{Error, Result};

use super::config::{TrainConfig, VatMode};
use super::plot::{write_svg, Plot, Series};
use super::record::{write_metrics, RunRecord};
use super::train::train_with_progress;

#[derive(Debug, Clone, PartialEq)]
pub struct VatRun {
    pub name: &'static str,
    pub seed: u64,
    pub record: RunRecord,
    pub train_examples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VatReport {
    pub runs: Vec<VatRun>,
    pub zoom_epochs: usize,
}

/// Named variants that differ from `base` only in regularization.
pub fn vat_variants(base: &TrainConfig, include_fgsm: bool) -> Vec<(&'static str, TrainConfig)> {
    let plain = TrainConfig {
        vat: VatMode::Off,
        keep_prob: None,
        equal_budget: false,
        ..base.clone()
    };
    let mut out = vec![
        ("vanilla", plain.clone()),
        (
            "dropout",
            TrainConfig {
                keep_prob: Some(0.5),
                ..plain.clone()
            },
        ),
        (
            "vat",
            TrainConfig {
                vat: VatMode::Both,
                ..plain.clone()
            },
        ),
        (
            "vat_equal_budget",
            TrainConfig {
                vat: VatMode::Both,
                equal_budget: true,
                ..plain.clone()
            },
        ),
    ];
    if include_fgsm {
        out.push((
            "fgsm",
            TrainConfig {
                vat: VatMode::Fgsm,
                ..plain
            },
        ));
    }
    out
}

/// Trains every variant once per seed on the same data.
pub fn compare_vat(
    base: &TrainConfig,
    train: &[FeatureImage],
    val: &[FeatureImage],
    seeds: &[u64],
    include_fgsm: bool,
    mut log: impl FnMut(&str),
) -> Result<VatReport> {
    if seeds.is_empty() {
        return Err(Error::Config("compare-vat needs at least one seed".into()));
    }
    let mut runs = Vec::new();
    for &seed in seeds {
        for (name, cfg) in vat_variants(base, include_fgsm) {
            let cfg = TrainConfig { seed, ..cfg };
            let out = train_with_progress(&cfg, train, val, |row| {
                log(&format!(
                    "{name} seed={seed} epoch {} cost {:.4} train_acc {:.4} val_acc {:.4}",
                    row.epoch, row.train_cost, row.train_acc, row.val_acc
                ))
            })?;
            runs.push(VatRun {
                name,
                seed,
                record: out.record,
                train_examples: out.train_examples,
            });
        }
    }
    Ok(VatReport {
        runs,
        zoom_epochs: 10,
    })
}

impl VatReport {
    pub fn names(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        for r in &self.runs {
            if !out.contains(&r.name) {
                out.push(r.name);
            }
        }
        out
    }

    pub fn mean_val_acc(&self, name: &str) -> f64 {
        let v: Vec<f64> = self
            .runs
            .iter()
            .filter(|r| r.name == name)
            .map(|r| r.record.final_val_acc())
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn mean_exit_epoch(&self, name: &str) -> f64 {
        let v: Vec<f64> = self
            .runs
            .iter()
            .filter(|r| r.name == name)
            .map(|r| r.record.exit_epoch() as f64)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn summary_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "run",
            "seed",
            "train_examples",
            "final_val_acc",
            "exit_epoch",
            "exit_reason",
        ])
        .expect("in-memory csv");
        for r in &self.runs {
            w.write_record([
                r.name.to_string(),
                r.seed.to_string(),
                r.train_examples.to_string(),
                r.record.final_val_acc().to_string(),
                r.record.exit_epoch().to_string(),
                r.record.exit_reason.to_string(),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }

    /// Per-epoch curves of the first seed's runs; `zoom` limits the x axis.
    pub fn plot(&self, metric: Metric, zoom: Option<usize>) -> Plot {
        let first = self.runs.first().map(|r| r.seed);
        let (label, title) = match metric {
            Metric::ValAcc => ("validation accuracy", "validation accuracy"),
            Metric::TrainCost => ("mean training cost", "training cost"),
        };
        let title = match zoom {
            Some(n) => format!("{title}, first {n} epochs"),
            None => format!("{title}, full run"),
        };
        let mut plot = Plot::new(title, "epoch", label);
        for r in self.runs.iter().filter(|r| Some(r.seed) == first) {
            let pts = r
                .record
                .rows
                .iter()
                .filter(|row| zoom.is_none_or(|n| row.epoch <= n))
                .map(|row| {
                    let y = match metric {
                        Metric::ValAcc => row.val_acc,
                        Metric::TrainCost => row.train_cost,
                    };
                    (row.epoch as f64, y)
                })
                .collect();
            plot.series.push(Series::line(
                format!("{} (exit {})", r.name, r.record.exit_epoch()),
                pts,
            ));
        }
        if let Some(n) = zoom {
            plot.x_range = Some((1.0, n as f64));
        }
        plot
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let summary = dir.join("vat_summary.csv");
        fs::write(&summary, self.summary_csv()).map_err(|e| Error::io(&summary, e))?;
        written.push(summary);
        for (metric, stem) in [
            (Metric::ValAcc, "vat_accuracy"),
            (Metric::TrainCost, "vat_cost"),
        ] {
            for (zoom, suffix) in [(None, ""), (Some(self.zoom_epochs), "_zoom")] {
                let p = dir.join(format!("{stem}{suffix}.svg"));
                write_svg(&self.plot(metric, zoom), &p)?;
                written.push(p);
            }
        }
        for r in &self.runs {
            let p = dir.join(format!("vat_{}_seed{}.csv", r.name, r.seed));
            write_metrics(&r.record, &p)?;
            written.push(p);
        }
        Ok(written)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    ValAcc,
    TrainCost,
}
