use proptest::prelude::*;
use rand::SeedableRng;

use super::*;
use crate::rng;

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape, data.to_vec()).unwrap()
}

#[test]
fn conv_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::from_fn(&[1, 3, 3, 1], |i| i as f64));
    let k = tape.constant(t(&[1, 1, 1, 1], &[2.0]));
    let y = tape.conv2d(x, k, 1, 1, Padding::Same).unwrap();
    assert_eq!(tape.value(y).shape(), &[1, 3, 3, 1]);
    let doubled: Vec<f64> = (0..9).map(|i| 2.0 * i as f64).collect();
    assert_eq!(tape.value(y).data(), &doubled[..]);

    let x = tape.constant(t(&[1, 2, 2, 1], &[1.0, 2.0, 3.0, 4.0]));
    let k = tape.constant(t(&[2, 2, 1, 1], &[1.0, 0.0, 0.0, 1.0]));
    let y = tape.conv2d(x, k, 1, 1, Padding::Valid).unwrap();
    assert_eq!(tape.value(y).shape(), &[1, 1, 1, 1]);
    assert_eq!(tape.value(y).data(), &[5.0]);

    let x = tape.constant(Tensor::zeros(&[1, 28, 28, 1]));
    let k = tape.constant(Tensor::zeros(&[5, 5, 1, 4]));
    let y = tape.conv2d(x, k, 2, 2, Padding::Same).unwrap();
    assert_eq!(tape.value(y).shape(), &[1, 14, 14, 4]);

    let small = tape.constant(Tensor::zeros(&[1, 3, 3, 1]));
    let big = tape.constant(Tensor::zeros(&[5, 5, 1, 1]));
    assert!(tape.conv2d(small, big, 1, 1, Padding::Valid).is_err());
    let wrong_ch = tape.constant(Tensor::zeros(&[1, 1, 2, 1]));
    assert!(tape.conv2d(small, wrong_ch, 1, 1, Padding::Valid).is_err());
}

#[test]
fn same_padding_puts_extra_on_bottom_right() {
    // 2x2 input, 2x2 kernel, SAME stride 1: pad total 1 per axis, all of
    // it after the data, so output[0,0] sees the whole input.
    let mut tape = Tape::new();
    let x = tape.constant(t(&[1, 2, 2, 1], &[1.0, 2.0, 3.0, 4.0]));
    let k = tape.constant(t(&[2, 2, 1, 1], &[1.0, 1.0, 1.0, 1.0]));
    let y = tape.conv2d(x, k, 1, 1, Padding::Same).unwrap();
    assert_eq!(tape.value(y).data(), &[10.0, 6.0, 7.0, 4.0]);
}

#[test]
fn maxpool_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[1, 2, 2, 1], &[1.0, 2.0, 3.0, 4.0]));
    let y = tape.maxpool2d(x, 2, 2, 2).unwrap();
    assert_eq!(tape.value(y).data(), &[4.0]);

    let c = tape.constant(Tensor::full(&[1, 5, 5, 2], 3.0));
    let y = tape.maxpool2d(c, 2, 2, 2).unwrap();
    assert_eq!(tape.value(y).shape(), &[1, 3, 3, 2]);
    assert!(tape.value(y).data().iter().all(|&v| v == 3.0));

    let x = tape.constant(Tensor::zeros(&[2, 28, 28, 3]));
    let p1 = tape.maxpool2d(x, 2, 2, 2).unwrap();
    let p2 = tape.maxpool2d(p1, 2, 2, 2).unwrap();
    assert_eq!(tape.value(p1).shape(), &[2, 14, 14, 3]);
    assert_eq!(tape.value(p2).shape(), &[2, 7, 7, 3]);
    assert!(tape.maxpool2d(x, 0, 2, 2).is_err());
}

#[test]
fn maxpool_ties_route_to_first_argmax() {
    let mut tape = Tape::new();
    let x = tape.param(t(&[1, 2, 2, 1], &[1.0, 1.0, 1.0, 1.0]));
    let y = tape.maxpool2d(x, 2, 2, 2).unwrap();
    let s = tape.sum(y);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn dense_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let eye = tape.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let zero_b = tape.constant(Tensor::zeros(&[2]));
    let y = tape.dense(x, eye, zero_b).unwrap();
    assert_eq!(tape.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);

    let x = tape.constant(t(&[1, 2], &[1.0, 2.0]));
    let w = tape.constant(t(&[2, 1], &[1.0, 1.0]));
    let b = tape.constant(t(&[1], &[3.0]));
    let y = tape.dense(x, w, b).unwrap();
    assert_eq!(tape.value(y).data(), &[6.0]);

    let z = tape.constant(Tensor::zeros(&[3, 2]));
    let b2 = tape.constant(t(&[2], &[0.5, -1.0]));
    let y = tape.dense(z, eye, b2).unwrap();
    assert_eq!(tape.value(y).data(), &[0.5, -1.0, 0.5, -1.0, 0.5, -1.0]);

    let err = tape.dense(x, eye, b).unwrap_err().to_string();
    assert!(err.contains("[1, 2]") && err.contains("[1]"), "{err}");
    let bad_w = tape.constant(Tensor::zeros(&[3, 1]));
    let err = tape.dense(x, bad_w, b).unwrap_err().to_string();
    assert!(err.contains("[1, 2]") && err.contains("[3, 1]"), "{err}");
}

#[test]
fn activation_values() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[3], &[-1.0, 0.0, 2.0]));
    let r = tape.relu(x);
    assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);
    let e = tape.elu(x);
    assert_eq!(tape.value(e).data()[1], 0.0);
    assert!((tape.value(e).data()[0] - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
    let s = tape.sigmoid(x);
    assert_eq!(tape.value(s).data()[1], 0.5);
    let th = tape.tanh(x);
    assert_eq!(tape.value(th).data()[1], 0.0);

    // ELU derivative is 1 on both sides of 0
    for x0 in [-1e-7, 1e-7] {
        let mut tape = Tape::new();
        let x = tape.param(t(&[1], &[x0]));
        let y = tape.elu(x);
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert!((tape.grad(x).unwrap()[0] - 1.0).abs() < 1e-6);
    }
}

#[test]
fn dropout_modes() {
    let mut r = rng::stream(1, &[]);
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::from_fn(&[4, 5], |i| i as f64));
    for training in [true, false] {
        let y = tape.dropout(x, 1.0, training, &mut r).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }
    let y = tape.dropout(x, 0.3, false, &mut r).unwrap();
    assert_eq!(tape.value(y), tape.value(x));
    assert!(tape.dropout(x, 0.0, true, &mut r).is_err());
    assert!(tape.dropout(x, 1.5, true, &mut r).is_err());

    let mask_a = {
        let mut r = rng::stream(9, &[]);
        let y = tape.dropout(x, 0.5, true, &mut r).unwrap();
        tape.value(y).clone()
    };
    let mask_b = {
        let mut r = rng::stream(9, &[]);
        let y = tape.dropout(x, 0.5, true, &mut r).unwrap();
        tape.value(y).clone()
    };
    assert_eq!(mask_a, mask_b);
}

#[test]
fn dropout_is_unbiased() {
    // Monte-Carlo: mean of 10k dropout draws of a constant input stays
    // within 2% of the input.
    let keep = 0.7;
    let trials = 10_000;
    let mut total = 0.0;
    for seed in 0..trials {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[1], 1.0));
        let y = tape.dropout(x, keep, true, &mut r).unwrap();
        total += tape.value(y).item();
    }
    let mean = total / trials as f64;
    assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
}

#[test]
fn cross_entropy_examples() {
    let mut tape = Tape::<f64>::new();
    let z = tape.constant(Tensor::zeros(&[3, 12]));
    let l = tape.softmax_cross_entropy(z, &[0, 5, 11]).unwrap();
    assert!((tape.value(l).item() - 12f64.ln()).abs() < 1e-12);
    assert!((12f64.ln() - 2.4849).abs() < 1e-4);

    let mut logits = vec![0.0; 12];
    logits[3] = 1000.0;
    let z = tape.constant(t(&[1, 12], &logits));
    let l = tape.softmax_cross_entropy(z, &[3]).unwrap();
    assert!(tape.value(l).item().abs() < 1e-12);

    let mut tape = Tape::new();
    let z = tape.param(t(&[1, 2], &[0.0, 0.0]));
    let l = tape.softmax_cross_entropy(z, &[0]).unwrap();
    tape.backward(l).unwrap();
    assert_eq!(tape.grad(z).unwrap(), &[-0.5, 0.5]);

    let z = tape.constant(Tensor::zeros(&[1, 12]));
    assert!(matches!(
        tape.softmax_cross_entropy(z, &[12]),
        Err(crate::Error::LabelRange {
            label: 12,
            classes: 12
        })
    ));
}

#[test]
fn backward_basics() {
    let mut tape = Tape::new();
    let x = tape.param(t(&[3], &[1.0, -2.0, 0.5]));
    let s = tape.sum(x);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 1.0]);

    let mut tape = Tape::new();
    let x = tape.param(t(&[3], &[1.0, -2.0, 0.5]));
    let sq = tape.mul(x, x).unwrap();
    let s = tape.sum(sq);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[2.0, -4.0, 1.0]);

    assert!(tape.backward(x).is_err());
}

#[test]
fn gradient_check_oracles() {
    let x = t(&[4], &[0.3, -1.2, 2.0, 0.0]);
    let err = finite_diff_check(|tp, v| Ok(tp.sum(v)), &x, 1e-5).unwrap();
    assert!(err < 1e-9, "{err}");

    let x = t(&[2], &[1.0, 2.0]);
    let err = finite_diff_check(
        |tp, v| {
            let sq = tp.mul(v, v)?;
            Ok(tp.sum(sq))
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-8, "{err}");

    // relu at exactly 0 only has a subgradient
    let x = t(&[2], &[0.0, 1.0]);
    let relu_sum = |tp: &mut Tape<f64>, v: Var| {
        let r = tp.relu(v);
        Ok(tp.sum(r))
    };
    assert!(finite_diff_check(relu_sum, &x, 1e-5).unwrap() > 0.1);
    assert!(finite_diff_check_excluding(relu_sum, &x, 1e-5, &[0]).unwrap() < 1e-9);
}

#[test]
fn composite_graph_gradients() {
    let mut r = rng::stream(4, &[]);
    use rand::Rng;
    let mut rand_t = |shape: &[usize]| Tensor::from_fn(shape, |_| r.random_range(-1.0..1.0));
    let input = rand_t(&[2, 5, 5, 2]);
    let kernel = rand_t(&[3, 3, 2, 3]);
    let w = rand_t(&[27, 4]);
    let b = rand_t(&[4]);
    let labels = [1, 3];

    let net = |tp: &mut Tape<f64>, x: Var, k: Var, w: Var, b: Var| -> crate::Result<Var> {
        let c = tp.conv2d(x, k, 2, 2, Padding::Same)?;
        let a = tp.relu(c);
        let f = tp.flatten(a)?;
        let z = tp.dense(f, w, b)?;
        tp.softmax_cross_entropy(z, &labels)
    };

    let (ic, kc, wc, bc) = (input.clone(), kernel.clone(), w.clone(), b.clone());
    let wrt_kernel = finite_diff_check(
        |tp, k| {
            let (x, w, b) = (
                tp.constant(ic.clone()),
                tp.constant(wc.clone()),
                tp.constant(bc.clone()),
            );
            net(tp, x, k, w, b)
        },
        &kernel,
        1e-5,
    )
    .unwrap();
    let wrt_input = finite_diff_check(
        |tp, x| {
            let (k, w, b) = (
                tp.constant(kc.clone()),
                tp.constant(wc.clone()),
                tp.constant(bc.clone()),
            );
            net(tp, x, k, w, b)
        },
        &input,
        1e-5,
    )
    .unwrap();
    let wrt_w = finite_diff_check(
        |tp, w| {
            let (x, k, b) = (
                tp.constant(ic.clone()),
                tp.constant(kc.clone()),
                tp.constant(bc.clone()),
            );
            net(tp, x, k, w, b)
        },
        &w,
        1e-5,
    )
    .unwrap();
    for err in [wrt_kernel, wrt_input, wrt_w] {
        assert!(err < 1e-4, "{err}");
    }
}

#[test]
fn deterministic_forward_backward() {
    let run = || {
        let mut r = rng::stream(11, &[]);
        use rand::Rng;
        let mut tape = Tape::<f32>::new();
        let x = tape.param(Tensor::from_fn(&[3, 6, 6, 2], |_| {
            r.random_range(-1.0..1.0)
        }));
        let k = tape.param(Tensor::from_fn(&[3, 3, 2, 4], |_| {
            r.random_range(-1.0..1.0)
        }));
        let c = tape.conv2d(x, k, 1, 1, Padding::Same).unwrap();
        let p = tape.maxpool2d(c, 2, 2, 2).unwrap();
        let s = tape.sum(p);
        tape.backward(s).unwrap();
        (
            tape.value(s).item().to_bits(),
            tape.grad(k).unwrap().to_vec(),
        )
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(row in proptest::collection::vec(-1e4f64..1e4, 12)) {
        let s = softmax(&t(&[1, 12], &row));
        let total: f64 = s.data().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(s.data().iter().all(|p| p.is_finite() && *p >= 0.0));
    }
}
