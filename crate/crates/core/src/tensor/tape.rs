//! Recording tape for reverse-mode differentiation.
//!
//! Every operation appends a node holding its value and enough context to
//! run its adjoint. Nodes can only reference earlier nodes, so the
//! recording order is a topological order and `backward` simply walks it
//! in reverse.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::geometry::{Padding, Window2d};
use super::real::gemm;
use super::{Real, Tensor};
use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    /// ELU with alpha = 1.
    Elu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Elu => "elu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }

    fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Elu => {
                if x > T::zero() {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative<T: Real>(self, x: T, y: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Elu => {
                if x > T::zero() {
                    T::one()
                } else {
                    y + T::one()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Tanh => T::one() - y * y,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "elu" => Ok(Activation::Elu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::param(
                "activation",
                format!("unknown activation `{other}` (relu|elu|sigmoid|tanh)"),
            )),
        }
    }
}

enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        geom: Window2d,
        cin: usize,
        cout: usize,
    },
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    Dense {
        input: Var,
        weight: Var,
        bias: Var,
    },
    AddBias {
        input: Var,
        bias: Var,
    },
    Activation {
        input: Var,
        kind: Activation,
    },
    Dropout {
        input: Var,
        mask: Vec<T>,
    },
    Reshape {
        input: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Sum {
        input: Var,
    },
    SoftmaxCe {
        logits: Var,
        probs: Vec<T>,
        labels: Vec<usize>,
    },
}

/// One forward/backward pass worth of recorded operations.
pub struct Tape<T> {
    values: Vec<Tensor<T>>,
    requires: Vec<bool>,
    ops: Vec<Op<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Tape::new()
    }
}

fn im2col<T: Real>(x: &[T], g: &Window2d, cin: usize, cols: &mut [T]) {
    let row_len = g.k_w * cin;
    let kk = g.k_h * row_len;
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let row = &mut cols[(oy * g.out_w + ox) * kk..][..kk];
            for ky in 0..g.k_h {
                let dst = &mut row[ky * row_len..][..row_len];
                let Some(iy) = g.src_row(oy, ky) else {
                    dst.fill(T::zero());
                    continue;
                };
                for kx in 0..g.k_w {
                    let d = &mut dst[kx * cin..][..cin];
                    match g.src_col(ox, kx) {
                        Some(ix) => d.copy_from_slice(&x[(iy * g.in_w + ix) * cin..][..cin]),
                        None => d.fill(T::zero()),
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(cols: &[T], g: &Window2d, cin: usize, dx: &mut [T]) {
    let row_len = g.k_w * cin;
    let kk = g.k_h * row_len;
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let row = &cols[(oy * g.out_w + ox) * kk..][..kk];
            for ky in 0..g.k_h {
                let Some(iy) = g.src_row(oy, ky) else {
                    continue;
                };
                for kx in 0..g.k_w {
                    let Some(ix) = g.src_col(ox, kx) else {
                        continue;
                    };
                    let src = &row[(ky * g.k_w + kx) * cin..][..cin];
                    let dst = &mut dx[(iy * g.in_w + ix) * cin..][..cin];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += *s;
                    }
                }
            }
        }
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            values: Vec::new(),
            requires: Vec::new(),
            ops: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn record(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        self.values.push(value);
        self.requires.push(requires_grad);
        self.ops.push(op);
        self.grads.push(None);
        Var(self.values.len() - 1)
    }

    fn push(&mut self, value: Tensor<T>, parents: &[Var], op: Op<T>) -> Var {
        let requires_grad = parents.iter().any(|p| self.requires[p.0]);
        self.record(value, requires_grad, op)
    }

    /// Adds an input tensor. Gradients are accumulated for it during
    /// `backward` iff `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.record(value, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.values[v.0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.requires[v.0]
    }

    /// Accumulated gradient of `v`, available after `backward` for nodes
    /// that require gradients and lie on a path to the loss.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    /// Cross-correlation of NHWC `input` with a `[kh, kw, in_ch, out_ch]`
    /// kernel.
    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        stride_h: usize,
        stride_w: usize,
        padding: Padding,
    ) -> Result<Var> {
        let xs = self.value(input).shape().to_vec();
        let ks = self.value(kernel).shape().to_vec();
        let (&[b, h, w, cin], &[kh, kw, kc, cout]) = (&xs[..], &ks[..]) else {
            return Err(Error::Shape(format!(
                "conv2d expects input [batch,h,w,c] and kernel [kh,kw,in,out], got {xs:?} and {ks:?}"
            )));
        };
        if kc != cin {
            return Err(Error::Shape(format!(
                "conv2d input has {cin} channels but kernel expects {kc}"
            )));
        }
        let geom = Window2d::new(h, w, kh, kw, stride_h, stride_w, padding)?;
        let p = geom.out_h * geom.out_w;
        let kk = kh * kw * cin;
        let mut out = vec![T::zero(); b * p * cout];
        let mut cols = vec![T::zero(); p * kk];
        {
            let x = self.value(input).data();
            let k = self.value(kernel).data();
            for n in 0..b {
                im2col(&x[n * h * w * cin..][..h * w * cin], &geom, cin, &mut cols);
                gemm(
                    p,
                    kk,
                    cout,
                    &cols,
                    false,
                    k,
                    false,
                    &mut out[n * p * cout..][..p * cout],
                    false,
                );
            }
        }
        let value = Tensor::new(&[b, geom.out_h, geom.out_w, cout], out)?;
        Ok(self.push(
            value,
            &[input, kernel],
            Op::Conv2d {
                input,
                kernel,
                geom,
                cin,
                cout,
            },
        ))
    }

    /// Max pooling over NHWC input with SAME-style ceil output size;
    /// out-of-range window cells never win.
    pub fn maxpool2d(
        &mut self,
        input: Var,
        pool_h: usize,
        pool_w: usize,
        stride: usize,
    ) -> Result<Var> {
        if pool_h == 0 || pool_w == 0 {
            return Err(Error::param("pool size", "must be >= 1"));
        }
        let xs = self.value(input).shape().to_vec();
        let [b, h, w, c] = xs[..] else {
            return Err(Error::Shape(format!(
                "maxpool2d expects [batch,h,w,c], got {xs:?}"
            )));
        };
        let g = Window2d::new(h, w, pool_h, pool_w, stride, stride, Padding::Same)?;
        let x = self.value(input).data();
        let mut out = Vec::with_capacity(b * g.out_h * g.out_w * c);
        let mut argmax = Vec::with_capacity(out.capacity());
        for n in 0..b {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    for ch in 0..c {
                        let mut best = T::neg_infinity();
                        let mut at = usize::MAX;
                        for ky in 0..pool_h {
                            let Some(iy) = g.src_row(oy, ky) else {
                                continue;
                            };
                            for kx in 0..pool_w {
                                let Some(ix) = g.src_col(ox, kx) else {
                                    continue;
                                };
                                let idx = ((n * h + iy) * w + ix) * c + ch;
                                if at == usize::MAX || x[idx] > best {
                                    best = x[idx];
                                    at = idx;
                                }
                            }
                        }
                        out.push(best);
                        argmax.push(at);
                    }
                }
            }
        }
        let value = Tensor::new(&[b, g.out_h, g.out_w, c], out)?;
        Ok(self.push(value, &[input], Op::MaxPool { input, argmax }))
    }

    /// `input [batch, m] * weight [m, n] + bias [n]`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let xs = self.value(input).shape().to_vec();
        let ws = self.value(weight).shape().to_vec();
        let bs = self.value(bias).shape().to_vec();
        let (&[b, m], &[wm, n]) = (&xs[..], &ws[..]) else {
            return Err(Error::Shape(format!(
                "dense expects input [batch,m] and weight [m,n], got {xs:?} and {ws:?}"
            )));
        };
        if wm != m || bs != [n] {
            return Err(Error::Shape(format!(
                "dense shapes do not line up: input {xs:?}, weight {ws:?}, bias {bs:?}"
            )));
        }
        let mut out = vec![T::zero(); b * n];
        for row in out.chunks_mut(n) {
            row.copy_from_slice(self.value(bias).data());
        }
        gemm(
            b,
            m,
            n,
            self.value(input).data(),
            false,
            self.value(weight).data(),
            false,
            &mut out,
            true,
        );
        let value = Tensor::new(&[b, n], out)?;
        Ok(self.push(
            value,
            &[input, weight, bias],
            Op::Dense {
                input,
                weight,
                bias,
            },
        ))
    }

    /// Adds `bias` along the last dimension of `input`.
    pub fn add_bias(&mut self, input: Var, bias: Var) -> Result<Var> {
        let xs = self.value(input).shape().to_vec();
        let bs = self.value(bias).shape().to_vec();
        let last = *xs.last().unwrap_or(&0);
        if bs != [last] {
            return Err(Error::Shape(format!(
                "bias {bs:?} does not match input {xs:?}"
            )));
        }
        let mut out = self.value(input).clone();
        let bias_data = self.value(bias).data();
        for row in out.data_mut().chunks_mut(last) {
            for (o, b) in row.iter_mut().zip(bias_data) {
                *o += *b;
            }
        }
        Ok(self.push(out, &[input, bias], Op::AddBias { input, bias }))
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Var {
        let x = self.value(input);
        let out = Tensor::from_fn(x.shape(), |i| kind.apply(x.data()[i]));
        self.push(out, &[input], Op::Activation { input, kind })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    pub fn elu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Elu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Tanh)
    }

    /// Inverted dropout: in training mode each element survives with
    /// probability `keep_prob` and is scaled by `1/keep_prob`. Identity
    /// otherwise.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        keep_prob: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(keep_prob > 0.0 && keep_prob <= 1.0) {
            return Err(Error::param(
                "keep_prob",
                format!("must be in (0, 1], got {keep_prob}"),
            ));
        }
        if !training || keep_prob == 1.0 {
            return Ok(x);
        }
        let scale = T::from_f64_lossy(1.0 / keep_prob);
        let mask = (0..self.value(x).len())
            .map(|_| {
                if rng.random::<f64>() < keep_prob {
                    scale
                } else {
                    T::zero()
                }
            })
            .collect();
        self.dropout_with_mask(x, mask)
    }

    /// Elementwise product with a fixed mask (the mask is treated as a
    /// constant during differentiation).
    pub fn dropout_with_mask(&mut self, x: Var, mask: Vec<T>) -> Result<Var> {
        let xv = self.value(x);
        if mask.len() != xv.len() {
            return Err(Error::Shape(format!(
                "dropout mask has {} entries for {} values",
                mask.len(),
                xv.len()
            )));
        }
        let out = Tensor::from_fn(xv.shape(), |i| xv.data()[i] * mask[i]);
        Ok(self.push(out, &[x], Op::Dropout { input: x, mask }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.push(out, &[x], Op::Reshape { input: x }))
    }

    /// Collapses every dimension after the first.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).shape();
        let batch = s.first().copied().unwrap_or(1);
        let rest: usize = s.iter().skip(1).product();
        self.reshape(x, &[batch, rest])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::Shape(format!(
                "mul of {:?} and {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let out = Tensor::from_fn(av.shape(), |i| av.data()[i] * bv.data()[i]);
        Ok(self.push(out, &[a, b], Op::Mul { a, b }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(total), &[x], Op::Sum { input: x })
    }

    /// Mean cross-entropy of row-wise softmax(logits) against integer
    /// labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let ls = self.value(logits).shape().to_vec();
        let [b, c] = ls[..] else {
            return Err(Error::Shape(format!(
                "logits must be [batch, classes], got {ls:?}"
            )));
        };
        if labels.len() != b {
            return Err(Error::Shape(format!(
                "{} labels for batch of {b}",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::LabelRange {
                label: bad,
                classes: c,
            });
        }
        let mut probs = self.value(logits).data().to_vec();
        let mut loss = T::zero();
        for (row, &label) in probs.chunks_mut(c).zip(labels) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let log_total = row.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
            loss -= row[label] - max - log_total;
            for z in row.iter_mut() {
                *z = (*z - max - log_total).exp();
            }
        }
        let batch = T::from_usize(b).unwrap();
        Ok(self.push(
            Tensor::scalar(loss / batch),
            &[logits],
            Op::SoftmaxCe {
                logits,
                probs,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Propagates d(loss)/d(node) to every node that requires gradients.
    /// Gradients accumulate across repeated uses of a node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let n = self.value(loss).len();
        if n != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.grads.iter_mut().for_each(|g| *g = None);
        if !self.requires[loss.0] {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if matches!(self.ops[i], Op::Leaf) {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            let mut ctx = Adjoint {
                values: &self.values,
                requires: &self.requires,
                grads: &mut self.grads,
            };
            ctx.propagate(&self.ops[i], &self.values[i], &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }
}

struct Adjoint<'a, T> {
    values: &'a [Tensor<T>],
    requires: &'a [bool],
    grads: &'a mut [Option<Vec<T>>],
}

impl<'a, T: Real> Adjoint<'a, T> {
    /// Gradient buffer of `v`, allocated on first use; `None` if `v` does
    /// not require gradients.
    fn buf(&mut self, v: Var) -> Option<&mut Vec<T>> {
        if !self.requires[v.0] {
            return None;
        }
        let len = self.values[v.0].len();
        Some(self.grads[v.0].get_or_insert_with(|| vec![T::zero(); len]))
    }

    fn val(&self, v: Var) -> &'a [T] {
        self.values[v.0].data()
    }

    fn propagate(&mut self, op: &Op<T>, out: &Tensor<T>, g: &[T]) {
        match op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernel,
                geom,
                cin,
                cout,
            } => {
                let (cin, cout) = (*cin, *cout);
                let p = geom.out_h * geom.out_w;
                let kk = geom.k_h * geom.k_w * cin;
                let in_len = geom.in_h * geom.in_w * cin;
                let batch = self.values[input.0].shape()[0];
                let x = self.val(*input);
                let k = self.val(*kernel);
                let mut cols = vec![T::zero(); p * kk];
                if let Some(dk) = self.buf(*kernel) {
                    for n in 0..batch {
                        im2col(&x[n * in_len..][..in_len], geom, cin, &mut cols);
                        gemm(
                            kk,
                            p,
                            cout,
                            &cols,
                            true,
                            &g[n * p * cout..][..p * cout],
                            false,
                            dk,
                            true,
                        );
                    }
                }
                if let Some(dx) = self.buf(*input) {
                    for n in 0..batch {
                        gemm(
                            p,
                            cout,
                            kk,
                            &g[n * p * cout..][..p * cout],
                            false,
                            k,
                            true,
                            &mut cols,
                            false,
                        );
                        col2im(&cols, geom, cin, &mut dx[n * in_len..][..in_len]);
                    }
                }
            }
            Op::MaxPool { input, argmax } => {
                if let Some(dx) = self.buf(*input) {
                    for (gi, &src) in g.iter().zip(argmax) {
                        dx[src] += *gi;
                    }
                }
            }
            Op::Dense {
                input,
                weight,
                bias,
            } => {
                let xs = self.values[input.0].shape();
                let (b, m) = (xs[0], xs[1]);
                let n = g.len() / b;
                if let Some(db) = self.buf(*bias) {
                    for row in g.chunks(n) {
                        for (d, gi) in db.iter_mut().zip(row) {
                            *d += *gi;
                        }
                    }
                }
                let (x, w) = (self.val(*input), self.val(*weight));
                if let Some(dw) = self.buf(*weight) {
                    gemm(m, b, n, x, true, g, false, dw, true);
                }
                if let Some(dx) = self.buf(*input) {
                    gemm(b, n, m, g, false, w, true, dx, true);
                }
            }
            Op::AddBias { input, bias } => {
                if let Some(dx) = self.buf(*input) {
                    for (d, gi) in dx.iter_mut().zip(g) {
                        *d += *gi;
                    }
                }
                if let Some(db) = self.buf(*bias) {
                    let n = db.len();
                    for row in g.chunks(n) {
                        for (d, gi) in db.iter_mut().zip(row) {
                            *d += *gi;
                        }
                    }
                }
            }
            Op::Activation { input, kind } => {
                let x = self.val(*input);
                let y = out.data();
                if let Some(dx) = self.buf(*input) {
                    for i in 0..dx.len() {
                        dx[i] += g[i] * kind.derivative(x[i], y[i]);
                    }
                }
            }
            Op::Dropout { input, mask } => {
                if let Some(dx) = self.buf(*input) {
                    for ((d, gi), m) in dx.iter_mut().zip(g).zip(mask) {
                        *d += *gi * *m;
                    }
                }
            }
            Op::Reshape { input } => {
                if let Some(dx) = self.buf(*input) {
                    for (d, gi) in dx.iter_mut().zip(g) {
                        *d += *gi;
                    }
                }
            }
            Op::Mul { a, b } => {
                let (av, bv) = (self.val(*a), self.val(*b));
                if let Some(da) = self.buf(*a) {
                    for i in 0..da.len() {
                        da[i] += g[i] * bv[i];
                    }
                }
                if let Some(db) = self.buf(*b) {
                    for i in 0..db.len() {
                        db[i] += g[i] * av[i];
                    }
                }
            }
            Op::Sum { input } => {
                if let Some(dx) = self.buf(*input) {
                    for d in dx.iter_mut() {
                        *d += g[0];
                    }
                }
            }
            Op::SoftmaxCe {
                logits,
                probs,
                labels,
            } => {
                let batch = labels.len();
                let c = probs.len() / batch;
                let scale = g[0] / T::from_usize(batch).unwrap();
                if let Some(dz) = self.buf(*logits) {
                    for (i, (d, p)) in dz.iter_mut().zip(probs).enumerate() {
                        let onehot = if labels[i / c] == i % c {
                            T::one()
                        } else {
                            T::zero()
                        };
                        *d += (*p - onehot) * scale;
                    }
                }
            }
        }
    }
}
