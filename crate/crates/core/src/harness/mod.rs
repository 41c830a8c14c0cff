//! Training loop, evaluation, sweeps and result emission.

mod config;
mod plot;
mod record;
mod sweep;
mod train;
mod vat;

pub use config::{TrainConfig, VatMode};
pub use plot::{render_svg, write_svg, Plot, Series};
pub use record::{parse_metrics, read_metrics, write_metrics, EpochRow, ExitReason, RunRecord};
pub use sweep::{
    run_sweep, write_summary_csv, FeatureData, SweepData, SweepFailure, SweepParam, SweepReport,
    SweepRow, SweepSpec,
};
pub use train::{evaluate, train, train_with_progress, Evaluation, TrainOutcome};
pub use vat::{compare_vat, vat_variants, Metric, VatReport, VatRun};
