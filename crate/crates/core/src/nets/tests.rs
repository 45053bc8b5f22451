use super::*;
use crate::corpus::{Domain, LabeledImage};

fn batch(n: usize, res: usize, seed: u64) -> ImageBatch<f32> {
    let mut s = seed;
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 33) as f64 / (1u64 << 31) as f64) as f32
    };
    let images: Vec<LabeledImage<f32>> = (0..n)
        .map(|i| LabeledImage::new(res, res, (0..res * res * 3).map(|_| next()).collect(), i % 10, Domain::Color, format!("x{i}")))
        .collect();
    ImageBatch::from_images(&images)
}

#[test]
fn classifier_shapes() {
    let net = build_classifier::<f32>(ArchSpec::classifier(ArchId::Resnet18, 10, 32), 0).unwrap();
    assert_eq!(net.penultimate_width(), Some(512));
    let b = batch(2, 32, 1);
    let logits = net.predict_logits(&b).unwrap();
    assert_eq!(logits.shape(), &[2, 10]);
    assert!(logits.is_finite());
    assert_eq!(penultimate_features(&net, &b).unwrap().shape(), &[2, 512]);

    for id in [ArchId::Resnet18Narrow, ArchId::Resnet8, ArchId::Vgg8, ArchId::MobilenetSmall] {
        let net = build_classifier::<f32>(ArchSpec::classifier(id, 10, 32), 0).unwrap();
        let logits = net.predict_logits(&batch(3, 32, 2)).unwrap();
        assert_eq!(logits.shape(), &[3, 10], "{id}");
        assert!(logits.is_finite());
        let f = penultimate_features(&net, &batch(1, 32, 3)).unwrap();
        assert_eq!(f.shape(), &[1, net.penultimate_width().unwrap()]);
    }
}

#[test]
fn unknown_architecture() {
    assert!(matches!("alexnet".parse::<ArchId>(), Err(Error::UnknownArchitecture(_))));
    let spec = ArchSpec::draw(ArchId::DrawDecoder, 32, 4);
    assert!(matches!(build_classifier::<f32>(spec, 0), Err(Error::UnknownArchitecture(_))));
}

#[test]
fn penultimate_rows_repeat_for_repeated_inputs() {
    let net = build_classifier::<f32>(ArchSpec::classifier(ArchId::Resnet18Narrow, 10, 32), 4).unwrap();
    let one = batch(1, 32, 9);
    let imgs: Vec<LabeledImage<f32>> = (0..3)
        .map(|_| LabeledImage::new(32, 32, one.pixels.clone(), 0, Domain::Color, "same"))
        .collect();
    let f = penultimate_features(&net, &ImageBatch::from_images(&imgs)).unwrap();
    let d = f.shape()[1];
    assert_eq!(&f.data()[..d], &f.data()[d..2 * d]);
    assert_eq!(&f.data()[..d], &f.data()[2 * d..]);
}

#[test]
fn draw_networks_contract() {
    let nets = build_draw_networks::<f32>(32, NARROW_DIVISOR, 0).unwrap();
    let b = batch(2, 32, 5);
    let mut tape = Tape::new();
    let mut eb = Binding::frozen(nets.encoder.params());
    let x = tape.constant(b.to_tensor());
    let enc = nets.encoder.encode(&mut tape, &mut eb, x).unwrap();
    assert_eq!(tape.value(enc.fused).shape(), &[ADAPTER_WIDTH / NARROW_DIVISOR, 2, 8, 8]);
    let mut db = Binding::frozen(nets.decoder.params());
    let drawing = nets.decoder.apply(&mut tape, &mut db, enc.fused).unwrap();
    let v = tape.value(drawing);
    assert_eq!(v.shape(), &[1, 2, 32, 32]);
    assert!(v.data().iter().all(|&p| p > 0.0 && p < 1.0));
    let mut rb = Binding::frozen(nets.recovery.params());
    let rec = nets.recovery.apply(&mut tape, &mut rb, drawing).unwrap();
    assert_eq!(tape.value(rec).shape(), &[1, 2, 32, 32]);
    let mut sb = Binding::frozen(nets.discriminator.params());
    let score = nets.discriminator.apply(&mut tape, &mut sb, drawing).unwrap();
    assert_eq!(tape.value(score).shape()[..2], [1, 2]);

    let ratio = nets.decoder.params().param_count() as f64 / nets.encoder.params().param_count() as f64;
    assert!(ratio < 0.1, "decoder/encoder parameter ratio {ratio}");
    let full = build_draw_networks::<f32>(32, 1, 0).unwrap();
    let ratio = full.decoder.params().param_count() as f64 / full.encoder.params().param_count() as f64;
    assert!(ratio < 0.1, "full-width ratio {ratio}");
}

#[test]
fn seeded_initialization() {
    let spec = ArchSpec::classifier(ArchId::Resnet8, 10, 32);
    let a = build_classifier::<f32>(spec.clone(), 7).unwrap();
    let b = build_classifier::<f32>(spec.clone(), 7).unwrap();
    let c = build_classifier::<f32>(spec, 8).unwrap();
    assert_eq!(a.params(), b.params());
    assert_ne!(a.params(), c.params());
}

#[test]
fn checkpoint_round_trip_is_byte_stable() {
    let net = build_classifier::<f32>(ArchSpec::classifier(ArchId::Resnet8, 10, 32), 3).unwrap();
    let mut ckpt = CheckpointArchive::from_network(&net, vec![Domain::Line, Domain::Color], 3, 12);
    ckpt.manifest.metrics.insert("val_acc".into(), 61.5);
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    ckpt.save(d1.path()).unwrap();
    let back = CheckpointArchive::<f32>::load(d1.path()).unwrap();
    assert_eq!(back, ckpt);
    back.save(d2.path()).unwrap();
    for entry in std::fs::read_dir(d1.path()).unwrap() {
        let p = entry.unwrap().path();
        let q = d2.path().join(p.file_name().unwrap());
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap(), "{}", p.display());
    }
    let blob = std::fs::read(d1.path().join("fc.weight.bin")).unwrap();
    let header = String::from_utf8_lossy(&blob[..blob.iter().position(|&b| b == b'\n').unwrap()]).into_owned();
    assert_eq!(header, "name=fc.weight dtype=f32 shape=10,64 layout=row-major endianness=little");
    assert_eq!(back.to_network().unwrap().params(), net.params());
}

#[test]
fn encoder_transfer_copies_trunk() {
    let nets = build_draw_networks::<f32>(32, NARROW_DIVISOR, 11).unwrap();
    let ckpt = CheckpointArchive::from_network(&nets.encoder, vec![Domain::Draw], 11, 0);
    let clf = init_classifier_from_encoder(&ckpt, 10, 5).unwrap();
    let mut copied = 0;
    for (name, slot) in clf.params().iter().filter(|(n, _)| n.starts_with("trunk.")) {
        let src = ckpt.params.tensor(name);
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(src), bits(&slot.tensor), "{name}");
        copied += 1;
    }
    assert!(copied > 0);
    assert!(clf.params().get("adapter.conv.weight").is_none());

    let b = batch(2, 32, 6);
    let mut tape = Tape::new();
    let mut eb = Binding::frozen(&ckpt.params);
    let x = tape.constant(b.to_tensor());
    let enc = nets.encoder.encode(&mut tape, &mut eb, x).unwrap();
    let mut cb = Binding::frozen(clf.params());
    let x2 = tape.constant(b.to_tensor());
    let out = clf.classify(&mut tape, &mut cb, x2).unwrap();
    for (i, stage) in enc.stages.iter().enumerate() {
        let a = tape.value(*stage);
        let c = tape.value(out.feature_map(&format!("layer{}", i + 1)).unwrap());
        assert_eq!(a.shape(), c.shape());
        let diff = a.data().iter().zip(c.data()).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
        assert!(diff <= 1e-6, "stage {i} differs by {diff}");
    }

    let not_encoder = CheckpointArchive::from_network(&clf, vec![Domain::Color], 0, 0);
    assert!(matches!(init_classifier_from_encoder(&not_encoder, 10, 0), Err(Error::ArchIncompatible(_))));
}

#[test]
fn unknown_layer_is_reported() {
    let net = build_classifier::<f32>(ArchSpec::classifier(ArchId::Resnet8, 10, 32), 0).unwrap();
    let mut tape = Tape::new();
    let mut bind = Binding::frozen(net.params());
    let x = tape.constant(batch(1, 32, 0).to_tensor());
    let out = net.classify(&mut tape, &mut bind, x).unwrap();
    assert!(out.feature_map("layer3").is_ok());
    assert!(matches!(out.feature_map("layer9"), Err(Error::UnknownLayer(_))));
}
