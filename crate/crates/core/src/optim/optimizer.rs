use std::fmt;
use std::str::FromStr;

use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn default_learning_rate(self) -> f32 {
        match self {
            OptimizerKind::Sgd => 0.01,
            OptimizerKind::Adam => 0.001,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::param(
                "optimizer",
                format!("unknown optimizer `{other}`"),
            )),
        }
    }
}

fn check_shapes(param: &Tensor<f32>, grad: &[f32]) -> Result<()> {
    if param.len() != grad.len() {
        return Err(Error::Shape(format!(
            "parameter {:?} has {} values but gradient has {}",
            param.shape(),
            param.len(),
            grad.len()
        )));
    }
    Ok(())
}

/// Plain gradient descent update, `p -= lr * g`.
pub fn sgd_step(param: &mut Tensor<f32>, grad: &[f32], lr: f32) -> Result<()> {
    check_shapes(param, grad)?;
    for (p, g) in param.data_mut().iter_mut().zip(grad) {
        *p -= lr * g;
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    moments: Option<Moments>,
    step: u64,
}

impl Optimizer {
    /// Creates an optimizer. Adam needs [`Optimizer::init`] before the first step.
    pub fn new(kind: OptimizerKind, learning_rate: f32) -> Self {
        Optimizer {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            moments: None,
            step: 0,
        }
    }

    /// Creates the optimizer with state sized for `params`.
    pub fn for_params(kind: OptimizerKind, learning_rate: f32, params: &[&Tensor<f32>]) -> Self {
        let mut opt = Self::new(kind, learning_rate);
        opt.init(params);
        opt
    }

    /// Allocates zeroed moment buffers, one pair per parameter.
    pub fn init(&mut self, params: &[&Tensor<f32>]) {
        self.moments = Some(Moments {
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        });
        self.step = 0;
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut Tensor<f32>], grads: &[&[f32]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            check_shapes(p, g)?;
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::param("gradient", "non-finite gradient value"));
            }
        }
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    sgd_step(p, g, self.learning_rate)?;
                }
            }
            OptimizerKind::Adam => self.adam(params, grads)?,
        }
        self.step += 1;
        Ok(())
    }

    fn adam(&mut self, params: &mut [&mut Tensor<f32>], grads: &[&[f32]]) -> Result<()> {
        let Some(moments) = self.moments.as_mut() else {
            return Err(Error::param("optimizer", "adam state used before init"));
        };
        if moments.m.len() != params.len()
            || moments
                .m
                .iter()
                .zip(params.iter())
                .any(|(m, p)| m.len() != p.len())
        {
            return Err(Error::Shape(
                "adam moments do not match the parameters".into(),
            ));
        }
        let t = (self.step + 1) as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut moments.m[i], &mut moments.v[i]);
            for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.iter()).zip(m).zip(v) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(v: f32) -> Tensor<f32> {
        Tensor::new(&[1], vec![v]).unwrap()
    }

    #[test]
    fn sgd_examples() {
        let mut p = scalar(1.0);
        sgd_step(&mut p, &[2.0], 0.1).unwrap();
        assert!((p.item() - 0.8).abs() < 1e-7);

        let mut p = scalar(1.5);
        sgd_step(&mut p, &[3.0], 0.0).unwrap();
        assert_eq!(p.item(), 1.5);

        let mut a = scalar(1.0);
        let mut b = scalar(1.0);
        sgd_step(&mut a, &[0.5], 0.2).unwrap();
        sgd_step(&mut b, &[0.5], 0.1).unwrap();
        sgd_step(&mut b, &[0.5], 0.1).unwrap();
        assert!((a.item() - b.item()).abs() < 1e-7);

        assert!(sgd_step(&mut a, &[1.0, 2.0], 0.1).is_err());
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        for g in [1.0f32, 10.0] {
            let mut p = Tensor::new(&[3], vec![0.0; 3]).unwrap();
            let mut opt = Optimizer::for_params(OptimizerKind::Adam, 0.001, &[&p]);
            opt.step(&mut [&mut p], &[&[g; 3]]).unwrap();
            for &v in p.data() {
                assert!((v + 0.001).abs() < 1e-6, "{v}");
            }
            assert_eq!(opt.steps(), 1);
        }
    }

    #[test]
    fn adam_requires_init() {
        let mut p = scalar(0.0);
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.001);
        assert!(opt.step(&mut [&mut p], &[&[1.0]]).is_err());
        assert_eq!(opt.steps(), 0);
        let mut sgd = Optimizer::new(OptimizerKind::Sgd, 0.1);
        sgd.step(&mut [&mut p], &[&[1.0]]).unwrap();
        assert_eq!(sgd.steps(), 1);
    }

    #[test]
    fn zero_gradient_never_moves() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut p = Tensor::new(&[2], vec![0.3, -0.7]).unwrap();
            let mut opt = Optimizer::for_params(kind, 0.01, &[&p]);
            for _ in 0..50 {
                opt.step(&mut [&mut p], &[&[0.0, 0.0]]).unwrap();
            }
            assert_eq!(p.data(), &[0.3, -0.7]);
            assert_eq!(opt.steps(), 50);
        }
    }

    #[test]
    fn quadratic_loss_decreases_monotonically() {
        // loss = sum a_i (x_i - c_i)^2
        let a = [1.0f32, 3.0, 0.5];
        let c = [2.0f32, -1.0, 0.25];
        let loss = |x: &[f32]| (0..3).map(|i| a[i] * (x[i] - c[i]).powi(2)).sum::<f32>();
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut x = Tensor::new(&[3], vec![0.0; 3]).unwrap();
            let mut opt = Optimizer::for_params(kind, 1e-3, &[&x]);
            let mut prev = loss(x.data());
            for _ in 0..100 {
                let g: Vec<f32> = (0..3).map(|i| 2.0 * a[i] * (x.data()[i] - c[i])).collect();
                opt.step(&mut [&mut x], &[&g]).unwrap();
                assert!(x.data().iter().all(|v| v.is_finite()));
                let now = loss(x.data());
                assert!(now < prev, "{kind}: {now} >= {prev}");
                prev = now;
            }
        }
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let mut p = scalar(0.0);
        let other = Tensor::new(&[4], vec![0.0; 4]).unwrap();
        let mut opt = Optimizer::for_params(OptimizerKind::Adam, 0.001, &[&other]);
        assert!(opt.step(&mut [&mut p], &[&[1.0]]).is_err());
        assert!(opt.step(&mut [&mut p], &[]).is_err());
    }

    proptest! {
        #[test]
        fn updates_stay_finite(
            start in proptest::collection::vec(-1e3f32..1e3, 4),
            grads in proptest::collection::vec(proptest::collection::vec(-1e3f32..1e3, 4), 1..20),
            adam: bool,
        ) {
            let kind = if adam { OptimizerKind::Adam } else { OptimizerKind::Sgd };
            let mut p = Tensor::new(&[4], start).unwrap();
            let mut opt = Optimizer::for_params(kind, kind.default_learning_rate(), &[&p]);
            for (i, g) in grads.iter().enumerate() {
                opt.step(&mut [&mut p], &[g]).unwrap();
                prop_assert!(p.data().iter().all(|v| v.is_finite()));
                prop_assert_eq!(opt.steps(), i as u64 + 1);
            }
        }
    }
}
