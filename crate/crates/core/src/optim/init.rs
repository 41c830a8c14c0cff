use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::rng;
use crate::tensor::Tensor;
use crate::{Error, Result};

const INIT_STREAM: u64 = 0x1417;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitKind {
    Xavier,
    TruncatedNormal { std: f64 },
}

impl InitKind {
    pub const DEFAULT_STD: f64 = 0.01;

    pub fn name(&self) -> &'static str {
        match self {
            InitKind::Xavier => "xavier",
            InitKind::TruncatedNormal { .. } => "truncated_normal",
        }
    }
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xavier" => Ok(InitKind::Xavier),
            "truncated_normal" | "truncated-normal" | "trunc-normal" | "trunc_normal" => {
                Ok(InitKind::TruncatedNormal {
                    std: Self::DEFAULT_STD,
                })
            }
            other => Err(Error::param(
                "init",
                format!("unknown initializer `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitSpec {
    pub kind: InitKind,
    pub seed: u64,
}

impl InitSpec {
    /// Initializes a weight tensor. Rank-1 shapes (biases) come back zeroed.
    pub fn init(&self, shape: &[usize], stream: u64) -> Result<Tensor<f32>> {
        if shape.len() < 2 {
            return Ok(Tensor::zeros(shape));
        }
        let seed = derive_seed(self.seed, stream);
        match self.kind {
            InitKind::Xavier => xavier_init(shape, seed),
            InitKind::TruncatedNormal { std } => truncated_normal_init(shape, std, seed),
        }
    }
}

fn derive_seed(seed: u64, stream: u64) -> u64 {
    rng::stream(seed, &[INIT_STREAM, stream]).random()
}

fn fans(shape: &[usize]) -> Result<(usize, usize)> {
    match shape {
        [m, n] => Ok((*m, *n)),
        [kh, kw, cin, cout] => Ok((kh * kw * cin, kh * kw * cout)),
        _ => Err(Error::param(
            "shape",
            format!("xavier init needs a [m, n] matrix or [kh, kw, in, out] kernel, got {shape:?}"),
        )),
    }
}

/// Half-width of the Xavier uniform range, `sqrt(6) / sqrt(fan_in + fan_out)`.
pub fn xavier_bound(shape: &[usize]) -> Result<f64> {
    let (m, n) = fans(shape)?;
    if m + n == 0 {
        return Err(Error::param("shape", "xavier init on an empty shape"));
    }
    Ok(6f64.sqrt() / ((m + n) as f64).sqrt())
}

pub fn xavier_init(shape: &[usize], seed: u64) -> Result<Tensor<f32>> {
    let eps = xavier_bound(shape)?;
    let mut r = rng::stream(seed, &[INIT_STREAM]);
    Ok(Tensor::from_fn(shape, |_| {
        r.random_range(-eps..=eps) as f32
    }))
}

pub fn truncated_normal_init(shape: &[usize], std: f64, seed: u64) -> Result<Tensor<f32>> {
    Ok(truncated_normal_counted(shape, std, seed)?.0)
}

/// Returns the tensor and the largest number of redraws any element needed.
pub(crate) fn truncated_normal_counted(
    shape: &[usize],
    std: f64,
    seed: u64,
) -> Result<(Tensor<f32>, usize)> {
    if !(std > 0.0 && std.is_finite()) {
        return Err(Error::param("std", format!("must be positive, got {std}")));
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::param("std", e.to_string()))?;
    let mut r = rng::stream(seed, &[INIT_STREAM]);
    let limit = 2.0 * std;
    let mut worst = 0;
    let t = Tensor::from_fn(shape, |_| {
        let mut retries = 0;
        loop {
            let v: f64 = normal.sample(&mut r);
            let v32 = v as f32;
            if (v32 as f64).abs() <= limit {
                worst = worst.max(retries);
                return v32;
            }
            retries += 1;
        }
    });
    Ok((t, worst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn xavier_bound_matches_formula() {
        let eps = xavier_bound(&[100, 200]).unwrap();
        assert!((eps - 0.141421).abs() < 1e-6);
        let conv = xavier_bound(&[3, 3, 4, 8]).unwrap();
        assert!((conv - 6f64.sqrt() / (36.0f64 + 72.0).sqrt()).abs() < 1e-15);
        assert!(xavier_init(&[10], 0).is_err());
        assert!(xavier_init(&[2, 3, 4], 0).is_err());
    }

    #[test]
    fn xavier_samples_stay_in_range_with_zero_mean() {
        let shape = [100, 200];
        let eps = xavier_bound(&shape).unwrap() as f32;
        let mut sum = 0.0f64;
        let mut n = 0;
        for seed in 0..5 {
            let t = xavier_init(&shape, seed).unwrap();
            for &v in t.data() {
                assert!(v.abs() <= eps);
                sum += v as f64;
                n += 1;
            }
        }
        assert_eq!(n, 100_000);
        let mean = sum / n as f64;
        let sigma = eps as f64 / 3f64.sqrt();
        assert!(mean.abs() < 3.0 * sigma / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn truncated_normal_respects_two_sigma() {
        let (t, worst) = truncated_normal_counted(&[500, 200], 0.01, 3).unwrap();
        assert!(worst < 100);
        let max = t.data().iter().fold(0f32, |a, v| a.max(v.abs()));
        assert!(max <= 0.02);
        let n = t.len() as f64;
        let mean = t.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = t
            .data()
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        let std = var.sqrt();
        assert!(std > 0.007 && std < 0.01, "std {std}");
        // brute-force oracle for the truncated std: numeric integration of
        // the normal density over [-2, 2]
        let steps = 200_000;
        let h = 4.0 / steps as f64;
        let (mut mass, mut second) = (0.0, 0.0);
        for i in 0..steps {
            let x = -2.0 + (i as f64 + 0.5) * h;
            let p = (-0.5 * x * x).exp();
            mass += p * h;
            second += x * x * p * h;
        }
        let expected = 0.01 * (second / mass).sqrt();
        assert!(
            (std - expected).abs() < 1e-4,
            "std {std} expected {expected}"
        );
    }

    #[test]
    fn initializers_are_deterministic() {
        assert_eq!(
            xavier_init(&[4, 5], 7).unwrap(),
            xavier_init(&[4, 5], 7).unwrap()
        );
        assert_ne!(
            xavier_init(&[4, 5], 7).unwrap(),
            xavier_init(&[4, 5], 8).unwrap()
        );
        assert_eq!(
            truncated_normal_init(&[4, 5], 0.01, 7).unwrap(),
            truncated_normal_init(&[4, 5], 0.01, 7).unwrap()
        );
        assert!(truncated_normal_init(&[2, 2], 0.0, 0).is_err());
    }

    #[test]
    fn biases_start_at_zero() {
        for kind in [InitKind::Xavier, InitKind::TruncatedNormal { std: 0.01 }] {
            let spec = InitSpec { kind, seed: 1 };
            let b = spec.init(&[16], 0).unwrap();
            assert!(b.data().iter().all(|&v| v == 0.0));
            let w = spec.init(&[4, 16], 0).unwrap();
            assert!(w.data().iter().any(|&v| v != 0.0));
            assert_ne!(
                spec.init(&[4, 16], 0).unwrap(),
                spec.init(&[4, 16], 1).unwrap()
            );
        }
    }

    proptest! {
        #[test]
        fn xavier_support(m in 1usize..50, n in 1usize..50, seed: u64) {
            let eps = xavier_bound(&[m, n]).unwrap() as f32;
            let t = xavier_init(&[m, n], seed).unwrap();
            prop_assert!(t.data().iter().all(|v| v.abs() <= eps));
        }

        #[test]
        fn truncated_support(std in 1e-4f64..1.0, seed: u64) {
            let t = truncated_normal_init(&[20, 20], std, seed).unwrap();
            prop_assert!(t.data().iter().all(|&v| (v as f64).abs() <= 2.0 * std));
        }
    }
}
