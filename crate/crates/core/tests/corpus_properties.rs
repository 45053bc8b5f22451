use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sketchlab_core::corpus::synth::{shapes_dataset, SynthConfig};
use sketchlab_core::corpus::{
    augment, discover_classes, eval_view, subset_indices, to_line_drawing, AugmentationPolicy, Dataset, Domain, LabeledImage, XdogParams,
};

fn labels_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..25, 2..6).prop_flat_map(|counts| {
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
        Just(labels).prop_shuffle()
    })
}

fn image_strategy() -> impl Strategy<Value = LabeledImage<f64>> {
    (4usize..14, 4usize..14).prop_flat_map(|(h, w)| {
        prop::collection::vec(0.0f64..=1.0, h * w * 3)
            .prop_map(move |px| LabeledImage::new(h, w, px, 0, Domain::Color, "p"))
    })
}

// Independent statement of the per-class rule: round half up, at least one, at most all.
fn expected_kept(n: usize, f: f64) -> usize {
    let raw = (n as f64 * f + 0.5).floor() as usize;
    raw.max(1).min(n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn smaller_fractions_nest(labels in labels_strategy(), a in 0.01f64..=1.0, b in 0.01f64..=1.0, seed in any::<u64>()) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let small: BTreeSet<usize> = subset_indices(&labels, lo, seed).unwrap().into_iter().collect();
        let large: BTreeSet<usize> = subset_indices(&labels, hi, seed).unwrap().into_iter().collect();
        prop_assert!(small.is_subset(&large));
    }

    #[test]
    fn per_class_counts_are_exact(labels in labels_strategy(), f in 0.01f64..=1.0, seed in any::<u64>()) {
        let kept = subset_indices(&labels, f, seed).unwrap();
        let classes = labels.iter().max().unwrap() + 1;
        for c in 0..classes {
            let n = labels.iter().filter(|&&l| l == c).count();
            let k = kept.iter().filter(|&&i| labels[i] == c).count();
            prop_assert_eq!(k, expected_kept(n, f), "class {} of {} at {}", c, n, f);
        }
        prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn subsetting_is_seeded(labels in labels_strategy(), f in 0.05f64..1.0, seed in any::<u64>()) {
        prop_assert_eq!(subset_indices(&labels, f, seed).unwrap(), subset_indices(&labels, f, seed).unwrap());
    }

    #[test]
    fn line_conversion_is_deterministic_and_closed(img in image_strategy()) {
        let p = XdogParams::default();
        let a = to_line_drawing(&img, &p).unwrap();
        let b = to_line_drawing(&img, &p).unwrap();
        prop_assert_eq!(&a.pixels, &b.pixels);
        prop_assert_eq!((a.height, a.width), (img.height, img.width));
        prop_assert!(a.in_unit_range());
        prop_assert_eq!(a.domain, Domain::Line);
        prop_assert_eq!(a.source_id, img.source_id);
    }

    #[test]
    fn views_stay_in_range(img in image_strategy(), seed in any::<u64>()) {
        let policy = AugmentationPolicy { allow_upscale: true, ..AugmentationPolicy::standard(8) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let aug = augment(&img, &policy, &mut rng);
        prop_assert!(aug.in_unit_range());
        prop_assert_eq!((aug.height, aug.width), (8, 8));
        let ev = eval_view(&img, &policy).unwrap();
        prop_assert!(ev.in_unit_range());
        prop_assert_eq!((ev.height, ev.width), (8, 8));
    }
}

#[test]
fn dataset_subsets_leave_test_split_alone() {
    let cfg = SynthConfig { train_per_class: 7, test_per_class: 3, ..SynthConfig::default() };
    let ds = shapes_dataset::<f32>(&cfg).unwrap();
    let half = ds.subset(0.5, 9).unwrap();
    assert_eq!(half.test.len(), ds.test.len());
    assert_eq!(half.train.len(), 10 * 4);
    let ids: BTreeSet<_> = ds.train.iter().map(|i| i.source_id.clone()).collect();
    assert!(half.train.iter().all(|i| ids.contains(&i.source_id)));
    let line = ds.to_line(&XdogParams::default()).unwrap();
    assert!(line.train.iter().chain(&line.test).all(|i| i.in_unit_range() && i.domain == Domain::Line));
}

#[test]
fn saved_dataset_loads_with_the_same_labels() {
    let dir = tempfile::tempdir().unwrap();
    let synth = SynthConfig { train_per_class: 3, test_per_class: 2, ..SynthConfig::default() };
    let made = shapes_dataset::<f32>(&synth).unwrap();
    made.save(dir.path()).unwrap();
    let loaded: Dataset<f32> = Dataset::load(dir.path(), discover_classes(dir.path()).unwrap()).unwrap();
    // Generation order is not alphabetical, so this catches folder-order labelling.
    assert!(!made.class_names.is_sorted());
    assert_eq!(loaded.class_names, made.class_names);
    for (a_split, b_split) in [(&made.train, &loaded.train), (&made.test, &loaded.test)] {
        assert_eq!(a_split.len(), b_split.len());
        for b in b_split {
            let a = a_split.iter().find(|a| a.source_id == b.source_id).unwrap_or_else(|| panic!("{}", b.source_id));
            assert_eq!(a.label, b.label, "{}", b.source_id);
            let diff = a.pixels.iter().zip(&b.pixels).map(|(p, q)| (p - q).abs()).fold(0f32, f32::max);
            assert!(diff <= 0.5 / 255.0 + 1e-6, "{} differs by {diff}", b.source_id);
        }
    }

    // A sidecar naming a class with no folder is rejected.
    std::fs::rename(dir.path().join("train/star"), dir.path().join("train/starx")).unwrap();
    assert!(Dataset::<f32>::load(dir.path(), 10).is_err());
}
