use std::fs;
use std::path::Path;

use anyhow::Context;
use kws_core::dataset::{
    build_manifest, load_manifest_clips, load_noise_dir, read_manifest, write_manifest, AudioClip,
    DatasetManifest, Label, ManifestOptions, Partition, Recording,
};
use kws_core::features::{
    read_feature_cache, write_feature_cache, write_pgm, FeatureCache, FeatureConfig,
};
use kws_core::harness::{
    self, evaluate, train_with_progress, write_metrics, write_svg, FeatureData, Plot, Series,
    SweepData, SweepParam, SweepSpec, TrainConfig,
};
use kws_core::model::{load_checkpoint, save_checkpoint, Checkpoint, ModelSpec};
use kws_core::synth::{generate_dataset, SynthConfig};
use kws_core::tensor::Activation;
use kws_core::SAMPLE_RATE;

use crate::args::*;

pub enum Failure {
    /// Bad flags or inputs, detected before any real work.
    Usage(Vec<String>),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let usage = e.chain().any(|c| {
            matches!(
                c.downcast_ref::<kws_core::Error>(),
                Some(
                    kws_core::Error::Parameter { .. }
                        | kws_core::Error::Config(_)
                        | kws_core::Error::Shape(_)
                        | kws_core::Error::Incompatible(_)
                )
            )
        });
        if usage {
            Failure::Usage(vec![format!("{e:#}")])
        } else {
            Failure::Runtime(e)
        }
    }
}

impl From<kws_core::Error> for Failure {
    fn from(e: kws_core::Error) -> Self {
        anyhow::Error::new(e).into()
    }
}

type CmdResult = Result<(), Failure>;

/// Collects every flag violation so they can be reported together.
#[derive(Default)]
struct Violations(Vec<String>);

impl Violations {
    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.0.push(msg());
        }
    }

    fn finish(self) -> CmdResult {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(Failure::Usage(self.0))
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(Failure::Runtime)
}

pub fn prepare(a: PrepareArgs) -> CmdResult {
    let mut v = Violations::default();
    v.check((0.0..=1.0).contains(&a.split_ratio), || {
        format!("--split-ratio must be in [0, 1], got {}", a.split_ratio)
    });
    v.check(a.silence_frac >= 0.0, || {
        format!("--silence-frac must be >= 0, got {}", a.silence_frac)
    });
    v.check(a.max_per_class != Some(0), || {
        "--max-per-class must be >= 1".into()
    });
    v.check(a.data_dir.is_dir(), || {
        format!("--data-dir {} is not a directory", a.data_dir.display())
    });
    v.finish()?;

    let opts = ManifestOptions {
        split_ratio: a.split_ratio,
        seed: a.seed,
        silence_fraction: a.silence_frac,
        max_per_class: a.max_per_class,
    };
    let root = fs::canonicalize(&a.data_dir).unwrap_or(a.data_dir.clone());
    let manifest = build_manifest(&root, &opts).map_err(|e| match e {
        kws_core::Error::EmptyDataset(_) => Failure::Usage(vec![e.to_string()]),
        other => other.into(),
    })?;
    create_dir(&a.out)?;
    let path = a.out.join("manifest.tsv");
    write_manifest(&manifest, &path)?;
    println!(
        "wrote {} ({} entries)",
        path.display(),
        manifest.entries.len()
    );
    print_histogram(&manifest);
    Ok(())
}

fn print_histogram(m: &DatasetManifest) {
    let train = m.histogram(Partition::Train);
    let val = m.histogram(Partition::Validation);
    println!("{:<10}{:>8}{:>12}", "label", "train", "validation");
    for l in Label::ALL {
        println!(
            "{:<10}{:>8}{:>12}",
            l.name(),
            train[l.index()],
            val[l.index()]
        );
    }
    println!(
        "{:<10}{:>8}{:>12}",
        "total",
        train.iter().sum::<usize>(),
        val.iter().sum::<usize>()
    );
}

pub fn synth(a: SynthArgs) -> CmdResult {
    let mut v = Violations::default();
    v.check(a.speakers > 0, || "--speakers must be >= 1".into());
    v.check(a.per_word + a.per_filler > 0, || {
        "nothing to generate".into()
    });
    v.finish()?;
    let cfg = SynthConfig {
        per_word: a.per_word,
        per_filler: a.per_filler,
        speakers: a.speakers,
        noise_files: a.noise_files,
        noise_seconds: a.noise_seconds,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let summary = generate_dataset(&a.out, &cfg)?;
    println!(
        "wrote {} word clips and {} noise recordings under {}",
        summary.word_files,
        summary.noise_files,
        a.out.display()
    );
    Ok(())
}

fn ms_to_samples(ms: usize) -> usize {
    ms * SAMPLE_RATE as usize / 1000
}

fn feature_config(o: &FeatureOpts, v: &mut Violations) -> FeatureConfig {
    v.check(o.window_ms > 0, || "--window-ms must be >= 1".into());
    v.check(o.stride_ms > 0, || "--stride-ms must be >= 1".into());
    v.check(o.buckets > 0, || "--buckets must be >= 1".into());
    v.check((0.0..=1.0).contains(&o.noise_ratio), || {
        format!("--noise-ratio must be in [0, 1], got {}", o.noise_ratio)
    });
    let mut fc = FeatureConfig::for_mode(o.mode.into());
    fc.window_size = ms_to_samples(o.window_ms);
    fc.window_stride = ms_to_samples(o.stride_ms);
    fc.num_buckets = o.buckets;
    if v.0.is_empty() {
        if let Err(e) = fc.validate() {
            v.0.push(e.to_string());
        }
    }
    fc
}

struct Audio {
    train: Vec<AudioClip>,
    val: Vec<AudioClip>,
    noise: Vec<Recording>,
}

fn load_audio(manifest_path: &Path, need_noise: bool) -> Result<Audio, Failure> {
    let manifest = read_manifest(manifest_path)?;
    let root = manifest.root.clone().ok_or_else(|| {
        Failure::Usage(vec![format!(
            "{} does not record its dataset root; rerun `kws prepare`",
            manifest_path.display()
        )])
    })?;
    let (train, val) = load_manifest_clips(&root, &manifest)?;
    let noise = if need_noise {
        load_noise_dir(&root)?
    } else {
        Vec::new()
    };
    if need_noise && noise.is_empty() {
        return Err(Failure::Usage(vec![
            "noise mixing requested but the dataset has no background noise".into(),
        ]));
    }
    Ok(Audio { train, val, noise })
}

pub fn featurize(a: FeaturizeArgs) -> CmdResult {
    let mut v = Violations::default();
    let fc = feature_config(&a.features, &mut v);
    v.check(a.manifest.is_file(), || {
        format!("--manifest {} not found", a.manifest.display())
    });
    v.finish()?;

    let audio = load_audio(&a.manifest, a.features.noise_ratio > 0.0)?;
    let data = FeatureData::build(
        &audio.train,
        &audio.val,
        &audio.noise,
        &fc,
        a.features.noise_ratio,
        a.seed,
    )?;
    create_dir(&a.out)?;
    for (name, images) in [("train", &data.train), ("validation", &data.val)] {
        let cache = FeatureCache::new(fc.mode, fc.output_height, fc.output_width, images.clone());
        let path = a.out.join(format!("{name}.kwsf"));
        write_feature_cache(&path, &cache)?;
        println!(
            "wrote {} ({} images, {}x{} {})",
            path.display(),
            images.len(),
            fc.output_height,
            fc.output_width,
            fc.mode
        );
        if a.dump_pgm {
            let dir = a.out.join("pgm").join(name);
            create_dir(&dir)?;
            for (i, img) in images.iter().enumerate() {
                let label = img.label.map_or("none", |l| l.name());
                write_pgm(&dir.join(format!("{i:05}_{label}.pgm")), img)?;
            }
        }
    }
    Ok(())
}

fn load_features(dir: &Path) -> Result<(FeatureCache, FeatureCache), Failure> {
    let mut missing = Vec::new();
    for name in ["train.kwsf", "validation.kwsf"] {
        if !dir.join(name).is_file() {
            missing.push(format!("--features {}: missing {name}", dir.display()));
        }
    }
    if !missing.is_empty() {
        return Err(Failure::Usage(missing));
    }
    Ok((
        read_feature_cache(&dir.join("train.kwsf"))?,
        read_feature_cache(&dir.join("validation.kwsf"))?,
    ))
}

fn train_config(o: &TrainOpts, height: usize, width: usize) -> Result<TrainConfig, Failure> {
    let mut spec = ModelSpec::new(o.model.into(), height, width);
    spec.activation = match o.activation {
        ActivationArg::Relu => Activation::Relu,
        ActivationArg::Elu => Activation::Elu,
        ActivationArg::Sigmoid => Activation::Sigmoid,
        ActivationArg::Tanh => Activation::Tanh,
    };
    spec.freq_stride_only = o.freq_stride_only;
    if let Some(f) = &o.filters {
        spec.filters = f.clone();
    }
    let cfg = TrainConfig {
        model: spec,
        optimizer: o.optimizer.into(),
        learning_rate: o.lr,
        init: o.init.into(),
        batch_size: o.batch_size,
        max_epochs: o.epochs,
        cost_threshold: o.cost_threshold,
        keep_prob: o.dropout_keep,
        vat: o.vat.into(),
        sign_epsilon: o.sign_epsilon,
        equal_budget: o.equal_budget,
        seed: o.seed,
    };
    cfg.validate()
        .map_err(|e| Failure::Usage(vec![e.to_string()]))?;
    Ok(cfg)
}

fn epoch_line(row: &harness::EpochRow) {
    println!(
        "epoch {:>4}  cost {:.6}  train_acc {:.4}  val_acc {:.4}",
        row.epoch, row.train_cost, row.train_acc, row.val_acc
    );
}

fn record_plots(record: &harness::RunRecord, name: &str) -> (Plot, Plot) {
    let pts = |f: fn(&harness::EpochRow) -> f64| {
        record.rows.iter().map(|r| (r.epoch as f64, f(r))).collect()
    };
    let cost = Plot::new(
        format!("training cost ({name})"),
        "epoch",
        "mean training cost",
    )
    .with_series(Series::line(name, pts(|r| r.train_cost)));
    let acc = Plot::new(format!("accuracy ({name})"), "epoch", "accuracy")
        .with_series(Series::line("train", pts(|r| r.train_acc)))
        .with_series(Series::line("validation", pts(|r| r.val_acc)));
    (cost, acc)
}

pub fn train(a: TrainArgs) -> CmdResult {
    let (train_cache, val_cache) = load_features(&a.features)?;
    let cfg = train_config(&a.train, train_cache.height, train_cache.width)?;
    if (val_cache.height, val_cache.width) != (train_cache.height, train_cache.width) {
        return Err(Failure::Usage(vec![
            "train and validation features have different sizes".into(),
        ]));
    }
    let blocks = cfg
        .vat
        .augment_config(cfg.sign_epsilon, cfg.equal_budget)
        .map_or(1, |c| {
            if c.equal_budget {
                1
            } else {
                1 + c.sign as usize + c.std as usize
            }
        });
    println!(
        "training {} on {} examples ({} original, vat {}), validating on {}",
        cfg.model.variant,
        train_cache.images.len() * blocks,
        train_cache.images.len(),
        cfg.vat,
        val_cache.images.len()
    );
    let out = train_with_progress(&cfg, &train_cache.images, &val_cache.images, epoch_line)?;
    create_dir(&a.out_dir)?;
    write_metrics(&out.record, &a.out_dir.join("metrics.csv"))?;
    let ck = Checkpoint {
        network: out.network,
        seed: cfg.seed,
        epoch: out.record.exit_epoch() as u32,
    };
    save_checkpoint(&ck, &a.out_dir.join("model.ckpt"))?;
    let (cost, acc) = record_plots(&out.record, cfg.model.variant.as_str());
    write_svg(&cost, &a.out_dir.join("cost.svg"))?;
    write_svg(&acc, &a.out_dir.join("accuracy.svg"))?;
    println!(
        "exit_epoch {} exit_reason {} final_val_acc {:.4}",
        out.record.exit_epoch(),
        out.record.exit_reason,
        out.record.final_val_acc()
    );
    Ok(())
}

pub fn eval(a: EvalArgs) -> CmdResult {
    let mut v = Violations::default();
    v.check(a.checkpoint.is_file(), || {
        format!("--checkpoint {} not found", a.checkpoint.display())
    });
    v.finish()?;
    let ck = load_checkpoint(&a.checkpoint)?;
    let (train_cache, val_cache) = load_features(&a.features)?;
    let cache = match a.split {
        SplitArg::Train => train_cache,
        SplitArg::Validation => val_cache,
    };
    let spec = ck.network.spec();
    if (cache.height, cache.width) != (spec.input_height, spec.input_width) {
        return Err(Failure::Usage(vec![format!(
            "features are {}x{} but the checkpoint expects {}x{}",
            cache.height, cache.width, spec.input_height, spec.input_width
        )]));
    }
    let e = evaluate(&ck.network, &cache.images)?;
    println!(
        "accuracy {:.4}  cost {:.6}  examples {}  (epoch {}, seed {})",
        e.accuracy,
        e.cost,
        cache.images.len(),
        ck.epoch,
        ck.seed
    );
    Ok(())
}

pub fn sweep(a: SweepArgs) -> CmdResult {
    let param: SweepParam = a
        .param
        .parse()
        .map_err(|e: kws_core::Error| Failure::Usage(vec![e.to_string()]))?;
    let mut v = Violations::default();
    let fc = feature_config(&a.featurize, &mut v);
    for value in &a.values {
        if let Err(e) = param.check_value(value) {
            v.0.push(e.to_string());
        }
    }
    v.check(a.repeats > 0, || "--repeats must be >= 1".into());
    match (&a.features, &a.manifest) {
        (None, None) => {
            v.0.push("one of --features or --manifest is required".into())
        }
        (Some(_), None) if param.needs_audio() => v.0.push(format!(
            "--param {param} changes the features; pass --manifest so they can be rebuilt"
        )),
        _ => {}
    }
    v.finish()?;

    let features_owned;
    let audio;
    let (data, height, width) = match (&a.features, &a.manifest) {
        (Some(dir), _) => {
            features_owned = load_features(dir)?;
            let (h, w) = (features_owned.0.height, features_owned.0.width);
            (
                SweepData::Features {
                    train: &features_owned.0.images,
                    val: &features_owned.1.images,
                },
                h,
                w,
            )
        }
        (None, Some(m)) => {
            audio = load_audio(
                m,
                a.featurize.noise_ratio > 0.0 || param == SweepParam::NoiseRatio,
            )?;
            (
                SweepData::Audio {
                    train: &audio.train,
                    val: &audio.val,
                    noise: &audio.noise,
                    features: fc.clone(),
                    noise_ratio: a.featurize.noise_ratio,
                },
                fc.output_height,
                fc.output_width,
            )
        }
        (None, None) => unreachable!(),
    };
    let spec = SweepSpec {
        param,
        values: a.values.clone(),
        base: train_config(&a.train, height, width)?,
        repeats: a.repeats,
    };
    let report = harness::run_sweep(&spec, &data, |line| println!("{line}"))?;
    for f in &report.failures {
        eprintln!(
            "run {}={} seed {} failed: {}",
            param, f.value, f.seed, f.error
        );
    }
    let files = report.write(&a.out_dir)?;
    for value in report.values() {
        let (mean, std) = report.stats(&value);
        println!(
            "{param}={value}: val_acc mean {mean:.4} std {std:.4} mean exit epoch {:.1}",
            report.mean_exit_epoch(&value)
        );
    }
    println!("wrote {} files under {}", files.len(), a.out_dir.display());
    Ok(())
}

pub fn compare_vat(a: CompareVatArgs) -> CmdResult {
    let (train_cache, val_cache) = load_features(&a.features)?;
    let base = train_config(&a.train, train_cache.height, train_cache.width)?;
    if a.seeds.is_empty() {
        return Err(Failure::Usage(vec![
            "--seeds needs at least one seed".into()
        ]));
    }
    let report = harness::compare_vat(
        &base,
        &train_cache.images,
        &val_cache.images,
        &a.seeds,
        a.fgsm,
        |line| println!("{line}"),
    )?;
    let files = report.write(&a.out_dir)?;
    for name in report.names() {
        println!(
            "{name}: val_acc mean {:.4} mean exit epoch {:.1}",
            report.mean_val_acc(name),
            report.mean_exit_epoch(name)
        );
    }
    println!("wrote {} files under {}", files.len(), a.out_dir.display());
    Ok(())
}
