mod oracles;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketchlab_core::autograd::Tape;
use sketchlab_core::distill::kd_loss;
use sketchlab_core::draw::{discriminator_gradients, discriminator_step};
use sketchlab_core::nets::{ArchId, ArchSpec, Network};
use sketchlab_core::optim::Adam;
use sketchlab_core::Tensor;

fn logits_case() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>, Vec<usize>)> {
    (1usize..5, 2usize..7).prop_flat_map(|(n, k)| {
        (
            Just(n),
            Just(k),
            prop::collection::vec(-4.0f64..4.0, n * k),
            prop::collection::vec(-4.0f64..4.0, n * k),
            prop::collection::vec(0..k, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn kd_gradient_matches_central_differences(
        (n, k, s, t, labels) in logits_case(),
        temperature in 0.5f64..12.0,
        alpha in 0.0f64..=1.0,
    ) {
        let teacher = Tensor::from_vec(&[n, k], t).unwrap();
        let mut tape = Tape::new();
        let sv = tape.leaf(Tensor::from_vec(&[n, k], s.clone()).unwrap(), true);
        let loss = tape.distillation_loss(sv, &teacher, &labels, temperature, alpha);
        let grads = tape.backward(loss);
        let g = grads.get(sv).unwrap().data().to_vec();
        prop_assert!((tape.value(loss).item() - kd_loss(&Tensor::from_vec(&[n, k], s.clone()).unwrap(), &teacher, &labels, temperature, alpha).unwrap()).abs() < 1e-12);
        for i in 0..n * k {
            let fd = oracles::central_difference(
                |d| {
                    let mut x = s.clone();
                    x[i] += d;
                    kd_loss(&Tensor::from_vec(&[n, k], x).unwrap(), &teacher, &labels, temperature, alpha).unwrap()
                },
                0.0,
                1e-5,
            );
            prop_assert!(oracles::close(g[i], fd, 1e-4, 1e-6), "entry {}: {} vs {}", i, g[i], fd);
        }
    }
}

fn samples(rng: &mut ChaCha8Rng, n: usize, side: usize, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_vec(&[1, n, side, side], (0..n * side * side).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

#[test]
fn discriminator_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let disc: Network<f64> = Network::build(ArchSpec::draw(ArchId::PatchDiscriminator, 16, 4), 3).unwrap();
    let real = samples(&mut rng, 3, 16, 0.6, 1.0);
    let fake = samples(&mut rng, 2, 16, 0.0, 0.7);
    let (loss, grads, _) = discriminator_gradients(&disc, &real, &fake).unwrap();
    assert!(loss.is_finite() && loss >= 0.0);
    let mut checked = 0;
    for (name, g) in &grads {
        let base = disc.params().tensor(name).clone();
        for idx in (0..base.numel()).step_by((base.numel() / 6).max(1)) {
            let fd = oracles::central_difference(
                |d| {
                    let mut probe = disc.clone();
                    let mut t = base.clone();
                    t.data_mut()[idx] += d;
                    probe.params_mut().set(name, t).unwrap();
                    discriminator_gradients(&probe, &real, &fake).unwrap().0
                },
                0.0,
                1e-6,
            );
            assert!(oracles::close(g.data()[idx], fd, 1e-3, 1e-7), "{name}[{idx}]: {} vs {fd}", g.data()[idx]);
            checked += 1;
        }
    }
    assert!(checked >= 30, "only {checked} entries checked");
}

#[test]
fn discriminator_step_applies_first_adam_update() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut disc: Network<f64> = Network::build(ArchSpec::draw(ArchId::PatchDiscriminator, 16, 4), 9).unwrap();
    let real = samples(&mut rng, 2, 16, 0.5, 1.0);
    let fake = samples(&mut rng, 2, 16, 0.0, 0.5);
    let before = disc.clone();
    let (_, grads, _) = discriminator_gradients(&before, &real, &fake).unwrap();
    let lr = 2e-4;
    let mut opt = Adam::new(0.5, 0.999);
    discriminator_step(&mut disc, &mut opt, &real, &fake, lr).unwrap();
    // Bias-corrected first moments equal g and g^2, so the step is lr * g / (|g| + eps).
    for (name, g) in &grads {
        let (p0, p1) = (before.params().tensor(name), disc.params().tensor(name));
        for ((a, b), gv) in p0.data().iter().zip(p1.data()).zip(g.data()) {
            let want = a - lr * gv / (gv.abs() + 1e-8);
            assert!((b - want).abs() <= 1e-12, "{name}: {b} vs {want}");
        }
    }
    let empty = Tensor::<f64>::zeros(&[1, 0, 16, 16]);
    assert!(discriminator_step(&mut disc, &mut opt, &empty, &fake, lr).is_err());
}
