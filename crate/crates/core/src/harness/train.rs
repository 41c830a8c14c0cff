use rand::seq::SliceRandom;

use crate::adversarial::augment_dataset;
use crate::features::{FeatureImage, Provenance};
use crate::model::{batch_from_images, Network};
use crate::optim::{InitSpec, Optimizer};
use crate::rng;
use crate::tensor::{Tape, Tensor};
use crate::{Error, Result};

use super::config::TrainConfig;
use super::record::{EpochRow, ExitReason, RunRecord};

const SHUFFLE_STREAM: u64 = 0x5F1;
const DROPOUT_STREAM: u64 = 0xD0;
const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub cost: f64,
}

fn labels_of(images: &[FeatureImage]) -> Result<Vec<usize>> {
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            img.label
                .map(|l| l.index())
                .ok_or_else(|| Error::param("examples", format!("example {i} has no label")))
        })
        .collect()
}

/// Accuracy and mean cross-entropy of `network` in inference mode.
pub fn evaluate(network: &Network, examples: &[FeatureImage]) -> Result<Evaluation> {
    if examples.is_empty() {
        return Err(Error::param("examples", "cannot evaluate on an empty set"));
    }
    let labels = labels_of(examples)?;
    let mut correct = 0usize;
    let mut cost = 0.0f64;
    for (chunk, lab) in examples.chunks(EVAL_BATCH).zip(labels.chunks(EVAL_BATCH)) {
        let mut tape = Tape::new();
        let x = tape.constant(batch_from_images(chunk)?);
        let pass = network.forward(&mut tape, x, None)?;
        let loss = tape.softmax_cross_entropy(pass.logits, lab)?;
        cost += tape.value(loss).item() as f64 * chunk.len() as f64;
        let logits = tape.value(pass.logits);
        let classes = logits.shape()[1];
        for (row, &y) in logits.data().chunks(classes).zip(lab) {
            let best = row
                .iter()
                .enumerate()
                .fold(
                    (0, f32::NEG_INFINITY),
                    |b, (i, &v)| if v > b.1 { (i, v) } else { b },
                )
                .0;
            correct += (best == y) as usize;
        }
    }
    let n = examples.len() as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        cost: cost / n,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub record: RunRecord,
    pub network: Network,
    /// Size of the (possibly augmented) set the optimizer iterated over.
    pub train_examples: usize,
    pub provenance_counts: [usize; 4],
}

fn check_geometry(cfg: &TrainConfig, set: &[FeatureImage], what: &str) -> Result<()> {
    let (h, w) = (cfg.model.input_height, cfg.model.input_width);
    if set.is_empty() {
        return Err(Error::Config(format!("{what} set is empty")));
    }
    if let Some(img) = set.iter().find(|i| (i.height, i.width) != (h, w)) {
        return Err(Error::Config(format!(
            "{what} features are {}x{} but the {} model expects {h}x{w}",
            img.height, img.width, cfg.model.variant
        )));
    }
    Ok(())
}

pub fn train(
    cfg: &TrainConfig,
    train_set: &[FeatureImage],
    val_set: &[FeatureImage],
) -> Result<TrainOutcome> {
    train_with_progress(cfg, train_set, val_set, |_| {})
}

/// Trains a fresh network, calling `progress` after every epoch.
pub fn train_with_progress(
    cfg: &TrainConfig,
    train_set: &[FeatureImage],
    val_set: &[FeatureImage],
    mut progress: impl FnMut(&EpochRow),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_geometry(cfg, train_set, "training")?;
    check_geometry(cfg, val_set, "validation")?;
    labels_of(train_set)?;
    labels_of(val_set)?;

    let spec = cfg.effective_model();
    let mut network = Network::new(
        spec,
        InitSpec {
            kind: cfg.init,
            seed: cfg.seed,
        },
    )?;

    let (examples, provenance) = match cfg.vat.augment_config(cfg.sign_epsilon, cfg.equal_budget) {
        Some(aug) => {
            let a = augment_dataset(train_set, &aug, Some(&network), cfg.seed)?;
            (a.images, a.provenance)
        }
        None => (
            train_set.to_vec(),
            vec![Provenance::Original; train_set.len()],
        ),
    };
    let mut provenance_counts = [0; 4];
    for p in &provenance {
        provenance_counts[*p as usize] += 1;
    }
    let labels = labels_of(&examples)?;

    let mut optimizer = {
        let refs: Vec<&Tensor<f32>> = network.params().iter().collect();
        Optimizer::for_params(cfg.optimizer, cfg.learning_rate(), &refs)
    };
    let mut dropout_rng = rng::stream(cfg.seed, &[DROPOUT_STREAM]);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rows = Vec::new();
    let mut exit_reason = ExitReason::MaxEpochs;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng::stream(cfg.seed, &[SHUFFLE_STREAM, epoch as u64]));
        let mut total_cost = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            let x = batch_from_images(batch.iter().map(|&i| &examples[i]))?;
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let mut tape = Tape::new();
            let xv = tape.constant(x);
            let pass = network.forward(&mut tape, xv, Some(&mut dropout_rng))?;
            let loss = tape.softmax_cross_entropy(pass.logits, &y)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::param(
                    "learning_rate",
                    format!("training diverged at epoch {epoch} (non-finite cost)"),
                ));
            }
            total_cost += value as f64 * batch.len() as f64;
            tape.backward(loss)?;
            let grads: Vec<&[f32]> = pass
                .params
                .iter()
                .map(|&p| tape.grad(p).expect("parameters require grad"))
                .collect();
            let mut params: Vec<&mut Tensor<f32>> = network.params_mut().iter_mut().collect();
            optimizer.step(&mut params, &grads)?;
        }
        let row = EpochRow {
            epoch,
            train_cost: total_cost / examples.len() as f64,
            train_acc: evaluate(&network, train_set)?.accuracy,
            val_acc: evaluate(&network, val_set)?.accuracy,
        };
        progress(&row);
        rows.push(row);
        if cfg.cost_threshold.is_some_and(|t| row.train_cost <= t) {
            exit_reason = ExitReason::Threshold;
            break;
        }
    }

    Ok(TrainOutcome {
        record: RunRecord { rows, exit_reason },
        network,
        train_examples: examples.len(),
        provenance_counts,
    })
}
