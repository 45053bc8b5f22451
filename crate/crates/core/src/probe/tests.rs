use super::*;

fn map(h: usize, w: usize, values: Vec<f64>) -> SaliencyMap {
    SaliencyMap { height: h, width: w, values, source_id: "m".into(), class_idx: 0 }
}

#[test]
fn hot_corner_cam() {
    // A = [[2, 0], [0, 0]], alpha = 1, upsampled to 4x4: the top-left output
    // samples clamp onto the hot cell, so the map peaks at 1 there.
    let cam = cam_from_activations(&[2.0, 0.0, 0.0, 0.0], &[1.0], 2, 2, 4, 4);
    assert_eq!(cam[0], 1.0);
    // Row 0: x = 0.25 -> weight 0.75 of the hot cell at column 1.
    assert!((cam[1] - 0.75).abs() < 1e-12);
    assert!((cam[5] - 0.5625).abs() < 1e-12);
    assert_eq!(cam[15], 0.0);
    assert!(cam.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn zero_weights_give_zero_map() {
    let cam = cam_from_activations(&[1.0, 2.0, 3.0, 4.0], &[0.0], 2, 2, 3, 3);
    assert!(cam.iter().all(|&v| v == 0.0));
    let neg = cam_from_activations(&[1.0, 2.0, 3.0, 4.0], &[-1.0], 2, 2, 3, 3);
    assert!(neg.iter().all(|&v| v == 0.0));
}

#[test]
fn region_examples() {
    assert_eq!(count_high_regions(&map(3, 3, vec![0.4; 9]), 85.0, Connectivity::Eight).unwrap(), 0);
    let blocks = |n: usize| {
        let mut v = vec![0.0; n * n];
        for (y, x) in [(0, 0), (0, 1), (1, 0), (1, 1), (3, 3), (3, 4), (4, 3), (4, 4)] {
            v[y * n + x] = 1.0;
        }
        map(n, n, v)
    };
    // On 6x6 the blocks cover 22% of the pixels, so the 85th percentile is 1
    // and the strict rule keeps nothing; below that share both blocks count.
    assert_eq!(count_high_regions(&blocks(6), 85.0, Connectivity::Eight).unwrap(), 0);
    assert_eq!(count_high_regions(&blocks(6), 70.0, Connectivity::Eight).unwrap(), 2);
    assert_eq!(count_high_regions(&blocks(8), 85.0, Connectivity::Eight).unwrap(), 2);
    let mut v = vec![0.0; 25];
    v[12] = 1.0;
    assert_eq!(count_high_regions(&map(5, 5, v), 85.0, Connectivity::Eight).unwrap(), 1);
    let diag = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
    assert_eq!(count_regions(&diag, 3, 3, 50.0, Connectivity::Eight), 1);
    assert_eq!(count_regions(&diag, 3, 3, 50.0, Connectivity::Four), 2);
    assert!(count_high_regions(&map(1, 1, vec![0.0]), 100.0, Connectivity::Eight).is_err());
}

#[test]
fn percentile_interpolates() {
    assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0, 5.0], 50.0), 3.0);
    assert!((percentile(&[0.0, 10.0], 85.0) - 8.5).abs() < 1e-12);
}

#[test]
fn histogram_tally() {
    let h = RegionHistogram::from_counts(&[1, 1, 2]);
    assert_eq!((h.one, h.two, h.three_plus, h.zero), (2, 1, 0, 0));
    let h = RegionHistogram::from_counts(&[0, 3, 7, 1]);
    assert_eq!((h.one, h.two, h.three_plus, h.zero), (1, 0, 2, 1));
    assert_eq!(h.bucketed(), 3);
}

#[test]
fn tuning_examples() {
    assert_eq!(tuning_from_means(&[2.0, 1.0, 4.0], 3).values, vec![1.0, 0.5, 0.25]);
    assert_eq!(tuning_from_means(&[0.3; 4], 3).values, vec![1.0; 4]);
    assert_eq!(tuning_from_means(&[0.0; 3], 3).values, vec![0.0; 3]);
    let a = tuning_from_means(&[0.2, 0.7, 0.1, 0.5], 9);
    let b = tuning_from_means(&[3.5, 0.5, 1.0, 2.5], 9);
    assert_eq!(a.values.len(), b.values.len());
    for (x, y) in a.values.iter().zip(&b.values) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn pca_examples() {
    // Points along one axis in 5 dimensions.
    let data: Vec<f64> = (0..6).flat_map(|i| [0.0, i as f64, 0.0, 0.0, 0.0]).collect();
    let r = pca_report(&Tensor::from_vec(&[6, 5], data).unwrap()).unwrap();
    assert_eq!(pcs_to_variance(&r, 0.9).unwrap(), 1);

    // (+-3, +-1) corners: covariance diag(9, 1) * 4/3, eigenvalue shares (0.9, 0.1).
    let data = vec![3.0, 1.0, 3.0, -1.0, -3.0, 1.0, -3.0, -1.0];
    let r = pca_report(&Tensor::from_vec(&[4, 2], data).unwrap()).unwrap();
    assert!((r.cumulative_variance[0] - 0.9).abs() < 1e-12);
    assert_eq!(r.cumulative_variance[1], 1.0);
    assert_eq!(pcs_to_variance(&r, 0.9).unwrap(), 1);
    assert_eq!(pcs_to_variance(&r, 0.95).unwrap(), 2);

    let one = Tensor::from_vec(&[1, 3], vec![1.0, 2.0, 3.0]).unwrap();
    assert!(matches!(pca_report(&one), Err(Error::DegenerateInput(_))));
}

#[test]
fn jacobi_matches_known_spectrum() {
    let m = [4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0];
    let mut e = symmetric_eigenvalues(&m, 3);
    e.sort_by(|a, b| a.total_cmp(b));
    // Eigenvalues of this tridiagonal matrix are 3 and 3 +- sqrt(3).
    let want = [3.0 - 3f64.sqrt(), 3.0, 3.0 + 3f64.sqrt()];
    for (a, b) in e.iter().zip(want) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn shape_bias_examples() {
    let map: Vec<usize> = (0..4).collect();
    let all_shape = shape_bias_from_predictions(&[(0, 0, 1), (2, 2, 3)], &map);
    assert_eq!(all_shape.overall.fraction(), Some(1.0));
    let mixed = shape_bias_from_predictions(&[(0, 0, 1), (0, 0, 2), (1, 0, 1), (3, 0, 2)], &map);
    assert_eq!(mixed.overall, CueCounts { shape: 2, texture: 1, other: 1 });
    assert!((mixed.overall.fraction().unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(mixed.per_class[0], mixed.overall);
    let other = shape_bias_from_predictions(&[(3, 0, 1), (2, 0, 1)], &map);
    assert_eq!(other.overall, CueCounts { shape: 0, texture: 0, other: 2 });
    assert_eq!(other.overall.fraction(), None);
}

#[test]
fn activation_dump_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("acts.bin");
    let t = Tensor::from_vec(&[2, 3], vec![1.0f32, 2.0, 3.0, 4.0, 5.0, 6.5]).unwrap();
    write_activation_dump(&path, &t).unwrap();
    assert_eq!(read_activation_dump::<f32>(&path).unwrap(), t);
    assert_eq!(read_activation_dump::<f64>(&path).unwrap().data()[5], 6.5);
}
