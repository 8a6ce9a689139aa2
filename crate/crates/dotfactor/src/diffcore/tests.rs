use super::*;

fn randn_in(shape: Vec<usize>, rng: &mut SplitMixRng) -> Tensor {
    // uniform in [-1, 1]
    let numel = shape.iter().product();
    let data: Vec<f32> = (0..numel).map(|_| (rng.next_f64() * 2.0 - 1.0) as f32).collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Uniform in [-1,1] but bounded away from zero, for ops with a kink there.
fn randn_off_kink(shape: Vec<usize>, rng: &mut SplitMixRng) -> Tensor {
    let numel = shape.iter().product();
    let data: Vec<f32> = (0..numel)
        .map(|_| {
            let v = rng.next_f64() * 0.9 + 0.1;
            (if rng.next_f64() < 0.5 { -v } else { v }) as f32
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

#[test]
fn matmul_identity() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let eye = tape.constant(Tensor::identity(2));
    let out = tape.matmul(a, eye).unwrap();
    assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn sigmoid_at_zero() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::scalar(0.0));
    let y = tape.sigmoid(x).unwrap();
    assert_eq!(tape.value(y).data()[0], 0.5);
}

#[test]
fn sum_all_of_ones() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::ones(vec![3, 4]));
    let s = tape.sum(x, None).unwrap();
    assert_eq!(tape.value(s).data()[0], 12.0);
}

#[test]
fn backward_sum_of_squares() {
    let mut tape = Tape::new();
    let x = Tensor::from_vec(vec![3], vec![1.0, -2.0, 3.0]).unwrap().with_requires_grad();
    let xid = tape.leaf(&x, true);
    let sq = tape.square(xid).unwrap();
    let loss = tape.sum(sq, None).unwrap();
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.get(xid).unwrap(), &[2.0, -4.0, 6.0]);
}

#[test]
fn backward_zero_input_kills_weight_grad() {
    // loss = sigmoid(w * 0): gradient w.r.t. w is zero regardless of w.
    let mut tape = Tape::new();
    let w = Tensor::from_vec(vec![1, 1], vec![1.7]).unwrap().with_requires_grad();
    let wid = tape.leaf(&w, true);
    let x = tape.constant(Tensor::from_vec(vec![1, 1], vec![0.0]).unwrap());
    let prod = tape.matmul(x, wid).unwrap();
    let s = tape.sigmoid(prod).unwrap();
    let loss = tape.sum(s, None).unwrap();
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.get(wid).unwrap(), &[0.0]);
}

#[test]
fn cross_entropy_grad_at_zero_logits() {
    // mean over N of BCE(logit=0, target=1): finite differences say the
    // per-logit gradient is -0.5/N.
    let n = 4usize;
    let logits = Tensor::zeros(vec![1, n]);
    let build = |tape: &mut Tape, l: NodeId| -> Result<NodeId, DiffError> {
        let targets = tape.constant(Tensor::ones(vec![1, n]));
        let bce = tape.bce_with_logits(l, targets)?;
        let total = tape.sum(bce, None)?;
        tape.scale(total, 1.0 / n as f32)
    };

    // central-difference oracle, f64 arithmetic on the evaluated loss
    let h = 1e-3f32;
    let eval = |data: Vec<f32>| {
        let mut tape = Tape::new();
        let l = tape.constant(Tensor::from_vec(vec![1, n], data).unwrap());
        let out = build(&mut tape, l).unwrap();
        tape.value(out).data()[0] as f64
    };
    for i in 0..n {
        let mut up = vec![0.0f32; n];
        up[i] = h;
        let mut down = vec![0.0f32; n];
        down[i] = -h;
        let numeric = (eval(up) - eval(down)) / (2.0 * h as f64);
        assert!((numeric - (-0.5 / n as f64)).abs() < 1e-4, "numeric {numeric}");
    }

    // and the analytic gradient matches the -0.5/N value
    let mut tape = Tape::new();
    let tracked = logits.with_requires_grad();
    let lid = tape.leaf(&tracked, true);
    let loss = build(&mut tape, lid).unwrap();
    let grads = tape.backward(loss).unwrap();
    for &g in grads.get(lid).unwrap() {
        assert!((g as f64 + 0.5 / n as f64).abs() < 1e-7);
    }
}

type GradCase = (&'static str, Box<dyn Fn(&mut Tape, NodeId) -> Result<NodeId, DiffError>>, Tensor);

#[test]
fn every_op_passes_gradient_check() {
    let mut rng = SplitMixRng::new(2024);
    let tol = 1e-2; // 32-bit probes
    let cases: Vec<GradCase> = vec![
        (
            "matmul",
            Box::new(|t: &mut Tape, x: NodeId| {
                let w = t.constant(Tensor::from_vec(vec![3, 2], vec![0.3, -0.8, 0.5, 0.2, -0.1, 0.9]).unwrap());
                let y = t.matmul(x, w)?;
                let sq = t.square(y)?;
                t.sum(sq, None)
            }),
            randn_in(vec![2, 3], &mut rng),
        ),
        (
            "add_broadcast",
            Box::new(|t: &mut Tape, x: NodeId| {
                let big = t.constant(Tensor::from_vec(vec![3, 2], vec![0.1; 6]).unwrap());
                let y = t.add(big, x)?;
                let sq = t.square(y)?;
                t.sum(sq, None)
            }),
            randn_in(vec![2], &mut rng),
        ),
        (
            "sub",
            Box::new(|t: &mut Tape, x: NodeId| {
                let other = t.constant(Tensor::from_vec(vec![4], vec![0.2, -0.3, 0.4, 0.1]).unwrap());
                let y = t.sub(x, other)?;
                let sq = t.square(y)?;
                t.sum(sq, None)
            }),
            randn_in(vec![4], &mut rng),
        ),
        (
            "mul_broadcast",
            Box::new(|t: &mut Tape, x: NodeId| {
                let row = t.constant(Tensor::from_vec(vec![1, 3], vec![0.7, -0.4, 1.1]).unwrap());
                let y = t.mul(x, row)?;
                let e = t.tanh(y)?;
                t.sum(e, None)
            }),
            randn_in(vec![2, 3], &mut rng),
        ),
        (
            "relu",
            Box::new(|t: &mut Tape, x: NodeId| {
                let y = t.relu(x)?;
                let sq = t.square(y)?;
                t.sum(sq, None)
            }),
            randn_off_kink(vec![5], &mut rng),
        ),
        (
            "sigmoid",
            Box::new(|t: &mut Tape, x: NodeId| {
                let y = t.sigmoid(x)?;
                t.sum(y, None)
            }),
            randn_in(vec![5], &mut rng),
        ),
        (
            "tanh",
            Box::new(|t: &mut Tape, x: NodeId| {
                let y = t.tanh(x)?;
                t.sum(y, None)
            }),
            randn_in(vec![5], &mut rng),
        ),
        (
            "exp",
            Box::new(|t: &mut Tape, x: NodeId| {
                let y = t.exp(x)?;
                t.sum(y, None)
            }),
            randn_in(vec![5], &mut rng),
        ),
        (
            "log",
            Box::new(|t: &mut Tape, x: NodeId| {
                let shifted = t.add_scalar(x, 2.0)?; // keep inputs positive
                let y = t.log(shifted)?;
                t.sum(y, None)
            }),
            randn_in(vec![5], &mut rng),
        ),
        (
            "square_mean",
            Box::new(|t: &mut Tape, x: NodeId| {
                let y = t.square(x)?;
                t.mean(y, None)
            }),
            randn_in(vec![2, 3], &mut rng),
        ),
        (
            "mean_axis0",
            Box::new(|t: &mut Tape, x: NodeId| {
                let y = t.mean(x, Some(0))?;
                let sq = t.square(y)?;
                t.sum(sq, None)
            }),
            randn_in(vec![3, 2], &mut rng),
        ),
        (
            "sum_axis1",
            Box::new(|t: &mut Tape, x: NodeId| {
                let y = t.sum(x, Some(1))?;
                let sq = t.square(y)?;
                t.sum(sq, None)
            }),
            randn_in(vec![3, 2], &mut rng),
        ),
        (
            "concat_slice",
            Box::new(|t: &mut Tape, x: NodeId| {
                let other = t.constant(Tensor::from_vec(vec![2, 2], vec![0.3, 0.1, -0.2, 0.5]).unwrap());
                let joined = t.concat(&[x, other], 1)?;
                let sl = t.slice(joined, 1, 1..4)?;
                let sq = t.square(sl)?;
                t.sum(sq, None)
            }),
            randn_in(vec![2, 2], &mut rng),
        ),
        (
            "reshape",
            Box::new(|t: &mut Tape, x: NodeId| {
                let r = t.reshape(x, vec![3, 2])?;
                let sq = t.square(r)?;
                t.mean(sq, None)
            }),
            randn_in(vec![6], &mut rng),
        ),
        (
            "clamp",
            Box::new(|t: &mut Tape, x: NodeId| {
                let y = t.clamp(x, -0.5, 0.5)?;
                let sq = t.square(y)?;
                t.sum(sq, None)
            }),
            // keep probes away from the clamp edges at +-0.5
            Tensor::from_vec(vec![4], vec![-0.9, -0.2, 0.3, 0.8]).unwrap(),
        ),
        (
            "bce_with_logits",
            Box::new(|t: &mut Tape, x: NodeId| {
                let targets = t.constant(Tensor::from_vec(vec![2, 2], vec![1.0, 0.0, 1.0, 0.0]).unwrap());
                let bce = t.bce_with_logits(x, targets)?;
                t.mean(bce, None)
            }),
            randn_in(vec![2, 2], &mut rng),
        ),
        (
            "scale_neg_addscalar",
            Box::new(|t: &mut Tape, x: NodeId| {
                let a = t.scale(x, 1.7)?;
                let b = t.neg(a)?;
                let c = t.add_scalar(b, 0.3)?;
                let sq = t.square(c)?;
                t.sum(sq, None)
            }),
            randn_in(vec![4], &mut rng),
        ),
    ];
    for (name, f, x) in cases {
        let err = gradient_check(f.as_ref(), &x, 1e-3).unwrap();
        assert!(err < tol, "{name}: relative error {err}");
    }
}

#[test]
fn broadcast_equals_explicit_tiling() {
    let mut rng = SplitMixRng::new(55);
    for _ in 0..20 {
        let big = randn_in(vec![4, 3], &mut rng);
        let row = randn_in(vec![1, 3], &mut rng);
        let tiled = {
            let mut data = Vec::with_capacity(12);
            for _ in 0..4 {
                data.extend_from_slice(row.data());
            }
            Tensor::from_vec(vec![4, 3], data).unwrap()
        };
        let mut tape = Tape::new();
        let b = tape.constant(big.clone());
        let r = tape.constant(row.clone());
        let t = tape.constant(tiled);
        let via_broadcast_add = tape.add(b, r).unwrap();
        let via_tiled_add = tape.add(b, t).unwrap();
        assert_eq!(tape.value(via_broadcast_add).data(), tape.value(via_tiled_add).data());
        let via_broadcast_mul = tape.mul(b, r).unwrap();
        let via_tiled_mul = tape.mul(b, t).unwrap();
        assert_eq!(tape.value(via_broadcast_mul).data(), tape.value(via_tiled_mul).data());
    }
}

#[test]
fn backward_is_linear_in_the_loss() {
    let mut rng = SplitMixRng::new(77);
    let x = randn_in(vec![5], &mut rng).with_requires_grad();
    let (a, b) = (1.7f32, -0.6f32);

    let grad_of = |builder: &dyn Fn(&mut Tape, NodeId) -> NodeId| -> Vec<f32> {
        let mut tape = Tape::new();
        let xid = tape.leaf(&x, true);
        let loss = builder(&mut tape, xid);
        tape.backward(loss).unwrap().get(xid).unwrap().to_vec()
    };

    let f = |tape: &mut Tape, x: NodeId| -> NodeId {
        let sq = tape.square(x).unwrap();
        tape.sum(sq, None).unwrap()
    };
    let g = |tape: &mut Tape, x: NodeId| -> NodeId {
        let s = tape.sigmoid(x).unwrap();
        tape.mean(s, None).unwrap()
    };

    let gf = grad_of(&f);
    let gg = grad_of(&g);
    let combined = grad_of(&|tape: &mut Tape, x: NodeId| {
        let lf = f(tape, x);
        let lg = g(tape, x);
        let af = tape.scale(lf, a).unwrap();
        let bg = tape.scale(lg, b).unwrap();
        tape.add(af, bg).unwrap()
    });
    for i in 0..combined.len() {
        let expected = a * gf[i] + b * gg[i];
        assert!((combined[i] - expected).abs() < 1e-5, "coord {i}");
    }
}

#[test]
fn non_scalar_loss_and_detached_graph_are_errors() {
    let mut tape = Tape::new();
    let x = Tensor::ones(vec![2]).with_requires_grad();
    let xid = tape.leaf(&x, true);
    let sq = tape.square(xid).unwrap();
    assert!(matches!(tape.backward(sq), Err(DiffError::NonScalarLoss { .. })));

    let mut tape = Tape::new();
    let c = tape.constant(Tensor::ones(vec![2]));
    let s = tape.sum(c, None).unwrap();
    assert!(matches!(tape.backward(s), Err(DiffError::DetachedGraph)));
}

#[test]
fn non_finite_forward_is_an_error() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::from_vec(vec![1], vec![200.0]).unwrap());
    assert!(matches!(tape.exp(x), Err(DiffError::NonFinite { .. })));
    let neg = tape.constant(Tensor::from_vec(vec![1], vec![-1.0]).unwrap());
    assert!(matches!(tape.log(neg), Err(DiffError::NonFinite { .. })));
}

#[test]
fn identical_seed_identical_randn_stream() {
    let mut a = SplitMixRng::new(99);
    let mut b = SplitMixRng::new(99);
    let ta = Tensor::randn(vec![64], 1.0, &mut a);
    let tb = Tensor::randn(vec![64], 1.0, &mut b);
    let bits_a: Vec<u32> = ta.data().iter().map(|v| v.to_bits()).collect();
    let bits_b: Vec<u32> = tb.data().iter().map(|v| v.to_bits()).collect();
    assert_eq!(bits_a, bits_b);
}

#[test]
fn two_layer_encoder_loss_gradient_check() {
    // full two-layer network on a single sample, probed through one weight
    let mut rng = SplitMixRng::new(4);
    let w1 = Tensor::randn(vec![6, 8], 0.4, &mut rng);
    let w2 = Tensor::randn(vec![8, 3], 0.4, &mut rng);
    let x = Tensor::randn(vec![1, 6], 1.0, &mut rng);
    let target = Tensor::from_vec(vec![1, 3], vec![1.0, 0.0, 1.0]).unwrap();

    let err = gradient_check(
        |tape, w1_id| {
            let xid = tape.constant(x.clone());
            let w2_id = tape.constant(w2.clone());
            let h = tape.matmul(xid, w1_id)?;
            let h = tape.tanh(h)?;
            let logits = tape.matmul(h, w2_id)?;
            let t = tape.constant(target.clone());
            let bce = tape.bce_with_logits(logits, t)?;
            tape.mean(bce, None)
        },
        &w1,
        1e-3,
    )
    .unwrap();
    assert!(err < 1e-2, "relative error {err}");
}
