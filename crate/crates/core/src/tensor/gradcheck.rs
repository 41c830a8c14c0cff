//! Central finite-difference oracle for tape gradients.

use super::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Relative discrepancy used by the checker:
/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares the tape gradient of scalar `f` at `x` with central
/// differences `(f(x + eps e_i) - f(x - eps e_i)) / 2 eps` and returns the
/// largest relative error over all coordinates.
pub fn finite_diff_check<F>(f: F, x: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    finite_diff_check_excluding(f, x, eps, &[])
}

/// As [`finite_diff_check`], skipping the listed coordinates (used for
/// points sitting exactly on a kink, where only a subgradient exists).
pub fn finite_diff_check_excluding<F>(
    f: F,
    x: &Tensor<f64>,
    eps: f64,
    excluded: &[usize],
) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let eval = |point: Tensor<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.constant(point);
        let out = f(&mut tape, v)?;
        scalar(&tape, out)
    };

    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let out = f(&mut tape, xv)?;
    scalar(&tape, out)?;
    tape.backward(out)?;
    let zeros = vec![0.0; x.len()];
    let analytic = tape.grad(xv).unwrap_or(&zeros).to_vec();

    let mut worst: f64 = 0.0;
    for i in (0..x.len()).filter(|i| !excluded.contains(i)) {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

fn scalar(tape: &Tape<f64>, v: Var) -> Result<f64> {
    let t = tape.value(v);
    if t.len() != 1 {
        return Err(Error::Shape(format!(
            "gradient check needs a scalar function, got shape {:?}",
            t.shape()
        )));
    }
    Ok(t.item())
}
