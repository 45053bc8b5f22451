use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Compares tape gradients of every input against central differences.
fn check(inputs: Vec<Tensor<f64>>, f: impl Fn(&mut Tape<f64>, &[Var]) -> Var) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let root = f(&mut tape, &vars);
    let grads = tape.backward(root);
    let h = 1e-6;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[i]).expect("gradient present");
        for j in 0..input.numel() {
            let eval = |delta: f64| {
                let mut perturbed = inputs.clone();
                perturbed[i].data_mut()[j] += delta;
                let mut t = Tape::new();
                let vs: Vec<Var> = perturbed.into_iter().map(|p| t.leaf(p, true)).collect();
                let r = f(&mut t, &vs);
                t.value(r).item()
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let a = analytic.data()[j];
            let tol = 1e-5 * (1.0 + numeric.abs().max(a.abs()));
            assert!((a - numeric).abs() < tol, "input {i} elem {j}: analytic {a} numeric {numeric}");
        }
    }
}

fn sum_weighted(t: &mut Tape<f64>, v: Var, seed: u64) -> Var {
    // A fixed random projection so every output element matters.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = random(t.value(v).shape(), &mut rng);
    let n = target.numel() as f64;
    // mse(v, target) = mean((v - target)^2): gradient depends on every element.
    let l = t.mse(v, &target);
    t.affine(l, n, 0.0)
}

#[test]
fn conv2d_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&[2, 2, 5, 5], &mut rng);
    let w = random(&[3, 2, 3, 3], &mut rng);
    let b = random(&[3], &mut rng);
    check(vec![x, w, b], |t, v| {
        let y = t.conv2d(v[0], v[1], Some(v[2]), 2, 1, 1);
        sum_weighted(t, y, 9)
    });
}

#[test]
fn grouped_and_pointwise_conv_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&[4, 2, 4, 4], &mut rng);
    let dw = random(&[4, 1, 3, 3], &mut rng);
    let pw = random(&[3, 4, 1, 1], &mut rng);
    check(vec![x, dw, pw], |t, v| {
        let y = t.conv2d(v[0], v[1], None, 1, 1, 4);
        let z = t.conv2d(y, v[2], None, 1, 0, 1);
        sum_weighted(t, z, 3)
    });
}

#[test]
fn conv_transpose_gradients_and_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&[2, 2, 3, 3], &mut rng);
    let w = random(&[2, 3, 3, 3], &mut rng);
    let b = random(&[3], &mut rng);
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let wv = tape.constant(w.clone());
    let y = tape.conv_transpose2d(xv, wv, None, 2, 1, 1);
    assert_eq!(tape.value(y).shape(), &[3, 2, 6, 6]);
    check(vec![x, w, b], |t, v| {
        let y = t.conv_transpose2d(v[0], v[1], Some(v[2]), 2, 1, 1);
        sum_weighted(t, y, 4)
    });
}

#[test]
fn conv_transpose_is_adjoint_of_conv() {
    // <conv(x), y> == <x, conv_transpose(y)> with shared weights and no bias.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&[2, 1, 6, 6], &mut rng);
    let w = random(&[3, 2, 3, 3], &mut rng);
    let y = random(&[3, 1, 3, 3], &mut rng);
    let mut t = Tape::new();
    let (xv, wv, yv) = (t.constant(x.clone()), t.constant(w.clone()), t.constant(y.clone()));
    let cx = t.conv2d(xv, wv, None, 2, 1, 1);
    let ty = t.conv_transpose2d(yv, wv, None, 2, 1, 1);
    let lhs: f64 = t.value(cx).data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
    let rhs: f64 = t.value(ty).data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
    assert!((lhs - rhs).abs() < 1e-10);
}

#[test]
fn batch_norm_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&[3, 2, 3, 3], &mut rng);
    let g = random(&[3], &mut rng);
    let b = random(&[3], &mut rng);
    check(vec![x.clone(), g.clone(), b.clone()], |t, v| {
        let (y, _) = t.batch_norm_train(v[0], v[1], v[2], 1e-5);
        sum_weighted(t, y, 6)
    });
    check(vec![x, g, b], |t, v| {
        let y = t.batch_norm_eval(v[0], v[1], v[2], &[0.1, -0.2, 0.3], &[0.5, 1.5, 2.0], 1e-5);
        sum_weighted(t, y, 7)
    });
}

#[test]
fn pooling_and_reshaping_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random(&[2, 2, 4, 4], &mut rng);
    check(vec![x.clone()], |t, v| {
        let y = t.max_pool(v[0], 3, 2, 1);
        sum_weighted(t, y, 8)
    });
    check(vec![x.clone()], |t, v| {
        let y = t.global_avg_pool(v[0]);
        sum_weighted(t, y, 9)
    });
    check(vec![x.clone()], |t, v| {
        let y = t.flatten(v[0]);
        sum_weighted(t, y, 10)
    });
    check(vec![x], |t, v| {
        let y = t.upsample_nearest(v[0], 2);
        let z = t.concat(&[y, y]);
        sum_weighted(t, z, 11)
    });
}

#[test]
fn dense_and_pointwise_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random(&[3, 4], &mut rng);
    let w = random(&[5, 4], &mut rng);
    let b = random(&[5], &mut rng);
    check(vec![x, w, b], |t, v| {
        let y = t.linear(v[0], v[1], v[2]);
        let y = t.sigmoid(y);
        let y = t.leaky_relu(y, 0.2);
        let y = t.affine(y, -1.5, 0.3);
        let z = t.relu(y);
        let z = t.add(z, y);
        sum_weighted(t, z, 12)
    });
}

#[test]
fn loss_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let logits = random(&[4, 5], &mut rng);
    let teacher = random(&[4, 5], &mut rng);
    let labels = [0usize, 3, 4, 1];
    check(vec![logits.clone()], |t, v| t.cross_entropy(v[0], &labels));
    check(vec![logits.clone()], |t, v| t.distillation_loss(v[0], &teacher, &labels, 4.0, 0.9));
    check(vec![logits.clone()], |t, v| t.cosine_distance(v[0], &teacher));
    check(vec![logits.clone()], |t, v| t.l1(v[0], &teacher));
    check(vec![logits.clone(), teacher.clone()], |t, v| {
        let a = t.mean(v[0]);
        let b = t.select_sum(v[1], 2);
        t.weighted_sum(&[(a, 2.0), (b, -0.5)])
    });
}

#[test]
fn frozen_leaves_receive_no_gradient() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(Tensor::full(&[2, 3], 1.0));
    let w = t.leaf(Tensor::full(&[4, 3], 0.5), true);
    let b = t.constant(Tensor::zeros(&[4]));
    let y = t.linear(x, w, b);
    let l = t.mean(y);
    let g = t.backward(l);
    assert!(g.get(x).is_none());
    assert!(g.get(b).is_none());
    assert!(g.get(w).is_some());
}
