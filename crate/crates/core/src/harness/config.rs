use std::fmt;
use std::str::FromStr;

use crate::adversarial::{AugmentConfig, SignSource};
use crate::model::ModelSpec;
use crate::optim::{InitKind, OptimizerKind};
use crate::{Error, Result};

/// Which perturbation blocks are appended to the training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VatMode {
    Off,
    /// Sign of the input pixels.
    Sign,
    /// Sign of the loss gradient, computed once with the initial model,
    /// plus the std block.
    Fgsm,
    Std,
    /// Sign and std blocks: three times the original set.
    Both,
}

impl VatMode {
    pub const ALL: [VatMode; 5] = [
        VatMode::Off,
        VatMode::Sign,
        VatMode::Fgsm,
        VatMode::Std,
        VatMode::Both,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VatMode::Off => "off",
            VatMode::Sign => "sign",
            VatMode::Fgsm => "fgsm",
            VatMode::Std => "std",
            VatMode::Both => "both",
        }
    }

    /// Augmentation settings, or `None` when nothing is added.
    pub fn augment_config(self, sign_epsilon: f32, equal_budget: bool) -> Option<AugmentConfig> {
        let base = AugmentConfig {
            sign_epsilon,
            equal_budget,
            ..AugmentConfig::default()
        };
        match self {
            VatMode::Off => None,
            VatMode::Sign => Some(AugmentConfig { std: false, ..base }),
            VatMode::Std => Some(AugmentConfig {
                sign: false,
                ..base
            }),
            VatMode::Both => Some(base),
            VatMode::Fgsm => Some(AugmentConfig {
                sign_source: SignSource::Gradient,
                ..base
            }),
        }
    }
}

impl fmt::Display for VatMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VatMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VatMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                Error::param(
                    "vat",
                    format!("unknown mode `{s}` (off|sign|fgsm|std|both)"),
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelSpec,
    pub optimizer: OptimizerKind,
    /// Defaults to the optimizer's own default when unset.
    pub learning_rate: Option<f32>,
    pub init: InitKind,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop once the mean training cost of an epoch falls to this value.
    pub cost_threshold: Option<f64>,
    /// Turns dropout on with this keep probability. If the model has no
    /// dropout sites, one is placed after the last hidden stage.
    pub keep_prob: Option<f64>,
    pub vat: VatMode,
    pub sign_epsilon: f32,
    pub equal_budget: bool,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(model: ModelSpec) -> Self {
        TrainConfig {
            model,
            optimizer: OptimizerKind::Adam,
            learning_rate: None,
            init: InitKind::Xavier,
            batch_size: 64,
            max_epochs: 20,
            cost_threshold: None,
            keep_prob: None,
            vat: VatMode::Off,
            sign_epsilon: 0.001,
            equal_budget: false,
            seed: 0,
        }
    }

    pub fn learning_rate(&self) -> f32 {
        self.learning_rate
            .unwrap_or_else(|| self.optimizer.default_learning_rate())
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::param("max_epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be >= 1"));
        }
        if let Some(t) = self.cost_threshold {
            if t.is_nan() || t <= 0.0 {
                return Err(Error::param(
                    "cost_threshold",
                    format!("must be > 0, got {t}"),
                ));
            }
        }
        let lr = self.learning_rate();
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::param(
                "learning_rate",
                format!("must be > 0, got {lr}"),
            ));
        }
        if let Some(k) = self.keep_prob {
            if !(k > 0.0 && k <= 1.0) {
                return Err(Error::param(
                    "keep_prob",
                    format!("must be in (0, 1], got {k}"),
                ));
            }
        }
        if self.sign_epsilon.is_nan() || self.sign_epsilon < 0.0 {
            return Err(Error::param("sign_epsilon", "must be >= 0"));
        }
        self.effective_model().layers()?;
        Ok(())
    }

    /// The model spec with the dropout override applied.
    pub fn effective_model(&self) -> ModelSpec {
        let mut spec = self.model.clone();
        if let Some(k) = self.keep_prob {
            spec.keep_prob = k;
            if spec.dropout_after.is_empty() {
                spec.dropout_after = vec![spec.hidden_stages() - 1];
            }
        }
        spec
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Layer;

    #[test]
    fn validation() {
        let base = TrainConfig::new(ModelSpec::low_latency(28, 28));
        base.validate().unwrap();
        assert_eq!(base.learning_rate(), 0.001);
        for bad in [
            TrainConfig {
                max_epochs: 0,
                ..base.clone()
            },
            TrainConfig {
                batch_size: 0,
                ..base.clone()
            },
            TrainConfig {
                cost_threshold: Some(0.0),
                ..base.clone()
            },
            TrainConfig {
                keep_prob: Some(1.5),
                ..base.clone()
            },
            TrainConfig {
                learning_rate: Some(-1.0),
                ..base.clone()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn dropout_override_adds_a_site() {
        let cfg = TrainConfig {
            keep_prob: Some(0.5),
            ..TrainConfig::new(ModelSpec::low_latency(28, 28))
        };
        let layers = cfg.effective_model().layers().unwrap();
        let pos = layers.iter().position(|l| *l == Layer::Dropout).unwrap();
        assert!(matches!(layers[pos + 1], Layer::Dense { outputs: 12, .. }));
        assert_eq!(
            TrainConfig::new(ModelSpec::mnist_cnn())
                .effective_model()
                .dropout_after,
            vec![2]
        );
    }

    #[test]
    fn vat_modes() {
        assert!(VatMode::Off.augment_config(0.001, false).is_none());
        let fgsm = VatMode::Fgsm.augment_config(0.01, false).unwrap();
        assert_eq!(fgsm.sign_source, SignSource::Gradient);
        assert!(fgsm.std);
        let sign = VatMode::Sign.augment_config(0.01, false).unwrap();
        assert!(sign.sign && !sign.std);
        assert_eq!("BOTH".parse::<VatMode>().unwrap(), VatMode::Both);
        assert!("x".parse::<VatMode>().is_err());
    }
}
