mod oracles;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketchlab_core::autograd::Tape;
use sketchlab_core::corpus::{Domain, LabeledImage};
use sketchlab_core::probe::{
    cam_weights, count_high_regions, grad_cam, pca_report, pcs_to_variance, Connectivity, SaliencyMap,
};
use sketchlab_core::{Error, Tensor};

fn saliency(h: usize, w: usize, values: Vec<f64>) -> SaliencyMap {
    SaliencyMap { height: h, width: w, values, source_id: "s".into(), class_idx: 0 }
}

#[test]
fn every_binary_4x4_mask_matches_flood_fill() {
    for bits in 0u32..1 << 16 {
        let values: Vec<f64> = (0..16).map(|i| ((bits >> i) & 1) as f64).collect();
        let map = saliency(4, 4, values.clone());
        for (conn, eight) in [(Connectivity::Eight, true), (Connectivity::Four, false)] {
            let got = count_high_regions(&map, 85.0, conn).unwrap();
            assert_eq!(got, oracles::flood_fill_regions(&values, 4, 4, 85.0, eight), "mask {bits:#06x}");
        }
    }
}

#[test]
fn random_16x16_maps_match_flood_fill() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..1000 {
        // Mix continuous maps with coarse quantized ones so ties at the threshold occur.
        let levels = [0usize, 2, 3, 5][case % 4];
        let values: Vec<f64> = (0..256)
            .map(|_| {
                let v: f64 = rng.random();
                if levels == 0 { v } else { (v * levels as f64).floor() / levels as f64 }
            })
            .collect();
        let p = [85.0, 50.0, 95.0, 70.0][case % 4];
        let got = count_high_regions(&saliency(16, 16, values.clone()), p, Connectivity::Eight).unwrap();
        assert_eq!(got, oracles::flood_fill_regions(&values, 16, 16, p, true), "case {case}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn region_counts_match_on_arbitrary_maps(
        (h, w, values) in (1usize..12, 1usize..12).prop_flat_map(|(h, w)| (Just(h), Just(w), prop::collection::vec(0.0f64..1.0, h * w))),
        p in 0.5f64..99.5,
    ) {
        let got = count_high_regions(&saliency(h, w, values.clone()), p, Connectivity::Eight).unwrap();
        prop_assert_eq!(got, oracles::flood_fill_regions(&values, h, w, p, true));
    }
}

#[test]
fn pca_matches_svd_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..100 {
        // Random factor models give a spread of effective ranks.
        let rank = 1 + case % 8;
        let basis: Vec<Vec<f64>> = (0..rank).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let z: Vec<f64> = (0..rank).map(|k| rng.random_range(-1.0..1.0) * (k + 1) as f64).collect();
                (0..8).map(|j| (0..rank).map(|k| z[k] * basis[k][j]).sum::<f64>() + 0.05 * rng.random_range(-1.0..1.0)).collect()
            })
            .collect();
        let t = Tensor::from_vec(&[50, 8], rows.concat()).unwrap();
        let report = pca_report(&t).unwrap();
        let cv = &report.cumulative_variance;
        assert!(cv.windows(2).all(|w| w[1] >= w[0] - 1e-12), "case {case}: {cv:?}");
        assert!((cv[cv.len() - 1] - 1.0).abs() <= 1e-6);
        let want = oracles::principal_variances(&rows);
        for theta in [0.5, 0.8, 0.9, 0.99] {
            assert_eq!(pcs_to_variance(&report, theta).unwrap(), oracles::components_for(&want, theta), "case {case} theta {theta}");
        }
        // The f32 path agrees on the count at 0.9.
        let t32: Tensor<f32> = t.cast();
        assert_eq!(pcs_to_variance(&pca_report(&t32).unwrap(), 0.9).unwrap(), oracles::components_for(&want, 0.9));
    }
}

#[test]
fn percentile_bounds_are_rejected() {
    let map = saliency(2, 2, vec![0.0, 1.0, 0.5, 0.2]);
    assert!(count_high_regions(&map, 0.0, Connectivity::Eight).is_err());
    assert!(count_high_regions(&map, 100.0, Connectivity::Eight).is_err());
}

#[test]
fn pca_rejects_degenerate_input() {
    let one = Tensor::from_vec(&[1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    assert!(matches!(pca_report(&one), Err(Error::DegenerateInput(_))));
    let same = Tensor::from_vec(&[3, 2], vec![1.0; 6]).unwrap();
    assert!(pca_report(&same).is_err());
}

#[test]
fn grad_cam_weights_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = oracles::TwoLayer::new(7);
    let px: Vec<f64> = (0..3 * 6 * 6).map(|_| rng.random()).collect();
    let img = LabeledImage::new(6, 6, px, 0, Domain::Color, "x");
    let batch = sketchlab_core::corpus::ImageBatch::from_images([&img]);
    for class in 0..3 {
        let (per_image, h, w) = cam_weights(&model, &batch, &[class], "a").unwrap();
        let (alpha, acts) = &per_image[0];
        let logit_of = |a: &[f64]| {
            let mut tape = Tape::new();
            let v = tape.constant(Tensor::from_vec(&[4, 1, h, w], a.to_vec()).unwrap());
            let out = model.head(&mut tape, v);
            tape.value(out).data()[class]
        };
        for k in 0..4 {
            let mut fd_sum = 0.0;
            for i in 0..h * w {
                let idx = k * h * w + i;
                fd_sum += oracles::central_difference(
                    |d| {
                        let mut a = acts.clone();
                        a[idx] += d;
                        logit_of(&a)
                    },
                    0.0,
                    1e-5,
                );
            }
            let fd = fd_sum / (h * w) as f64;
            assert!(oracles::close(alpha[k], fd, 1e-3, 1e-8), "class {class} channel {k}: {} vs {fd}", alpha[k]);
        }
        let map = grad_cam(&model, &img, class, "a").unwrap();
        assert_eq!(map.values.len(), 36);
        assert!(map.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

