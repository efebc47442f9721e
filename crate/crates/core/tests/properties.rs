use neurovid::ad::{finite_diff_check, Tape, Tensor};
use neurovid::conditioning::{frame_label, positional_encode};
use neurovid::evaluation::cluster_accuracy;
use neurovid::metric_learning::{mine_multisimilarity, triplet_loss};
use neurovid::preprocess::{largest_remainder, reref_average, segment};
use neurovid::signal_io::Recording;
use neurovid::video_metrics::{psnr, ssim, Frame};
use proptest::prelude::*;

fn unit_rows(raw: &[f64], n: usize, d: usize) -> Tensor {
    let mut data = raw[..n * d].to_vec();
    for row in data.chunks_mut(d) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
        row.iter_mut().for_each(|v| *v /= norm);
    }
    Tensor::new([n, d], data).unwrap()
}

fn loss_of(emb: &Tensor, labels: &[usize], margin: f64) -> f64 {
    let triples = mine_multisimilarity(emb, labels, 0.1, 20).unwrap();
    let mut tape = Tape::new();
    let e = tape.constant(emb.clone()).unwrap();
    let l = triplet_loss(&mut tape, e, &triples, margin).unwrap();
    tape.value(l).data()[0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn triplet_loss_nonnegative_and_rotation_invariant(
        raw in prop::collection::vec(-1.0f64..1.0, 8 * 4),
        angle in 0.0f64..std::f64::consts::TAU,
        margin in 0.0f64..1.0,
    ) {
        let emb = unit_rows(&raw, 8, 4);
        let labels = [0, 0, 1, 1, 2, 2, 0, 1];
        let before = loss_of(&emb, &labels, margin);
        prop_assert!(before >= 0.0);
        // rotate every row in the (0, 2) plane
        let (c, s) = (angle.cos(), angle.sin());
        let mut rot = emb.clone();
        for row in rot.data_mut().chunks_mut(4) {
            let (x, z) = (row[0], row[2]);
            row[0] = c * x - s * z;
            row[2] = s * x + c * z;
        }
        let after = loss_of(&rot, &labels, margin);
        prop_assert!((before - after).abs() < 1e-9, "{before} vs {after}");
    }

    #[test]
    fn mined_triples_are_valid_and_deterministic(raw in prop::collection::vec(-1.0f64..1.0, 10 * 3)) {
        let emb = unit_rows(&raw, 10, 3);
        let labels = [0, 1, 2, 0, 1, 2, 0, 1, 2, 0];
        let a = mine_multisimilarity(&emb, &labels, 0.1, 20).unwrap();
        let b = mine_multisimilarity(&emb, &labels, 0.1, 20).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.validate(&labels).is_ok());
        for anchor in 0..10 {
            prop_assert!(a.iter().filter(|t| t.0 == anchor).count() <= 20);
        }
    }

    #[test]
    fn cluster_accuracy_ignores_cluster_names(
        pairs in prop::collection::vec((0usize..5, 0usize..5), 1..60),
        shift in 1usize..5,
    ) {
        let (assign, labels): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let acc = cluster_accuracy(&assign, &labels);
        let renamed: Vec<usize> = assign.iter().map(|a| (a + shift) % 5).collect();
        prop_assert!((acc - cluster_accuracy(&renamed, &labels)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&acc));
        prop_assert_eq!(cluster_accuracy(&labels, &labels), 1.0);
    }

    #[test]
    fn largest_remainder_partitions(n in 0usize..500, a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.01f64..1.0) {
        let parts = largest_remainder(n, [a, b, c]);
        prop_assert_eq!(parts.iter().sum::<usize>(), n);
    }

    #[test]
    fn positional_codes(x in -100.0f64..100.0, d in 1usize..16) {
        let v = positional_encode(x, d);
        prop_assert_eq!(v.len(), 1 + 2 * d);
        prop_assert_eq!(v[0], x);
        for k in 0..d {
            let (s, c) = (v[1 + 2 * k], v[2 + 2 * k]);
            prop_assert!((s * s + c * c - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_labels_invert(class in 0usize..100, frame in 0usize..8) {
        let l = frame_label(class, frame, 8).unwrap();
        prop_assert_eq!((l / 8, l % 8), (class, frame));
    }

    #[test]
    fn image_metrics_are_symmetric(
        a in prop::collection::vec(0.0f64..1.0, 12 * 12),
        b in prop::collection::vec(0.0f64..1.0, 12 * 12),
    ) {
        let fa = Frame::new(12, 12, a).unwrap();
        let fb = Frame::new(12, 12, b).unwrap();
        prop_assert_eq!(psnr(&fa, &fb).unwrap(), psnr(&fb, &fa).unwrap());
        let s = ssim(&fa, &fb).unwrap();
        prop_assert!((s - ssim(&fb, &fa).unwrap()).abs() < 1e-12);
        prop_assert!(s <= 1.0 + 1e-12);
        prop_assert_eq!(ssim(&fa, &fa).unwrap(), 1.0);
    }

    #[test]
    fn reref_zeroes_channel_means(raw in prop::collection::vec(-50.0f64..50.0, 4 * 30)) {
        let rec = Recording {
            subject_id: 1,
            sample_rate_hz: 200.0,
            channel_labels: (0..4).map(|i| format!("c{i}")).collect(),
            data: raw.clone(),
            n_samples: 30,
            eog_channel_indices: vec![],
            trials: vec![],
        };
        let out = reref_average(&rec).unwrap();
        for t in 0..30 {
            let m: f64 = (0..4).map(|c| out.channel(c)[t]).sum::<f64>() / 4.0;
            prop_assert!(m.abs() < 1e-12);
        }
        prop_assert_eq!(rec.data, raw);
    }

    #[test]
    fn segments_tile_the_recording(n in 0usize..2000) {
        let rec = Recording {
            subject_id: 1,
            sample_rate_hz: 200.0,
            channel_labels: vec!["a".into()],
            data: (0..n).map(|i| i as f64).collect(),
            n_samples: n.max(1),
            eog_channel_indices: vec![],
            trials: vec![],
        };
        if n == 0 {
            return Ok(());
        }
        let segs = segment(&rec, 2.0).unwrap();
        prop_assert_eq!(segs.len(), n / 400);
        let joined: Vec<f64> = segs.concat();
        prop_assert_eq!(&joined[..], &rec.data[..joined.len()]);
    }

    #[test]
    fn elementwise_gradients(raw in prop::collection::vec(-2.0f64..2.0, 6), c in 0.1f64..3.0) {
        let x = Tensor::new([2, 3], raw.iter().map(|v| if v.abs() < 1e-3 { 0.5 } else { *v }).collect()).unwrap();
        let err = finite_diff_check(
            |tape: &mut Tape, v| {
                let y = tape.scale(v, c)?;
                let z = tape.mul(y, v)?;
                let w = tape.leaky_relu(z, 0.2)?;
                tape.sum(w)
            },
            &x,
            1e-6,
        )
        .unwrap();
        prop_assert!(err < 1e-4, "{err}");
    }
}
