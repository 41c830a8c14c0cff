use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_cost: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExitReason {
    Threshold,
    MaxEpochs,
}

impl ExitReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExitReason::Threshold => "THRESHOLD",
            ExitReason::MaxEpochs => "MAX_EPOCHS",
        }
    }
}

impl fmt::Display for ExitReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExitReason {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "THRESHOLD" => Ok(ExitReason::Threshold),
            "MAX_EPOCHS" => Ok(ExitReason::MaxEpochs),
            other => Err(Error::format(
                "metrics",
                format!("unknown exit reason `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<EpochRow>,
    pub exit_reason: ExitReason,
}

impl RunRecord {
    pub fn exit_epoch(&self) -> usize {
        self.rows.last().map_or(0, |r| r.epoch)
    }

    pub fn final_row(&self) -> Option<&EpochRow> {
        self.rows.last()
    }

    pub fn final_val_acc(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.val_acc)
    }

    /// Epoch-indexed rows must run 1..=exit_epoch and accuracies stay in [0, 1].
    pub fn check(&self) -> Result<()> {
        for (i, r) in self.rows.iter().enumerate() {
            if r.epoch != i + 1 {
                return Err(Error::format(
                    "metrics",
                    format!("row {} has epoch {}", i + 1, r.epoch),
                ));
            }
            if !(0.0..=1.0).contains(&r.train_acc) || !(0.0..=1.0).contains(&r.val_acc) {
                return Err(Error::format(
                    "metrics",
                    format!("epoch {} accuracy out of [0, 1]", r.epoch),
                ));
            }
        }
        Ok(())
    }

    /// Metrics CSV: a header, one row per epoch, then a comment line
    /// carrying the exit reason.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        // Writing to memory cannot fail.
        for r in &self.rows {
            w.serialize(r).expect("in-memory csv");
        }
        if self.rows.is_empty() {
            w.write_record(["epoch", "train_cost", "train_acc", "val_acc"])
                .expect("in-memory csv");
        }
        let mut out = String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv");
        out.push_str(&format!("# exit_reason={}\n", self.exit_reason));
        out
    }
}

pub fn parse_metrics(text: &str) -> Result<RunRecord> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let rows = rdr
        .deserialize()
        .collect::<std::result::Result<Vec<EpochRow>, _>>()?;
    let reason = text
        .lines()
        .filter_map(|l| l.strip_prefix("# exit_reason="))
        .next_back()
        .ok_or_else(|| Error::format("metrics", "missing `# exit_reason=` line"))?;
    let record = RunRecord {
        rows,
        exit_reason: reason.trim().parse()?,
    };
    record.check()?;
    Ok(record)
}

pub fn write_metrics(record: &RunRecord, path: &Path) -> Result<()> {
    fs::write(path, record.to_csv()).map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<RunRecord> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics(&text)
}
