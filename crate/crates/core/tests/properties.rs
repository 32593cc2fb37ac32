use proptest::prelude::*;

use poselift::data::{
    compute_norm_stats, read_dataset, synth_generate, write_dataset, ActionLabel, CameraModel, SkeletonSpec,
    SynthOptions, NUM_JOINTS,
};
use poselift::metrics::{l1, mpjpe, mse, weighted_mpjpe, wmse, JointWeights};
use poselift::nn::{BatchNorm, Layer, LayerMode, Tensor};
use poselift::report::{compare, parse_tables_csv, render_table, EvalTable, TableFormat};
use poselift::viz::{render_pose3d, RenderStyle};

const D: usize = NUM_JOINTS * 3;

fn coords(rows: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-2000.0f64..2000.0, rows * D)
        .prop_map(move |v| Tensor::from_vec(rows, D, v).unwrap())
}

fn pair(rows: usize) -> impl Strategy<Value = (Tensor, Tensor)> {
    (coords(rows), coords(rows))
}

fn table(label: &'static str) -> impl Strategy<Value = EvalTable> {
    prop::collection::vec(1.0f64..200.0, ActionLabel::ALL.len()).prop_map(move |v| {
        ActionLabel::ALL
            .iter()
            .zip(v)
            .fold(EvalTable::new(label), |t, (&a, mm)| t.with(a, mm))
    })
}

fn translate(t: &Tensor, shift: [f64; 3]) -> Tensor {
    let mut out = t.clone();
    for r in 0..out.rows() {
        for (c, v) in out.row_mut(r).iter_mut().enumerate() {
            *v += shift[c % 3];
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mpjpe_is_invariant_to_a_shared_translation((p, g) in pair(3), sx in -500.0f64..500.0, sy in -500.0f64..500.0, sz in -500.0f64..500.0) {
        let a = mpjpe(&p, &g).unwrap();
        let b = mpjpe(&translate(&p, [sx, sy, sz]), &translate(&g, [sx, sy, sz])).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn mpjpe_is_a_symmetric_nonnegative_distance((p, g) in pair(4)) {
        let ab = mpjpe(&p, &g).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, mpjpe(&g, &p).unwrap());
        prop_assert_eq!(mpjpe(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn uniform_weights_reduce_to_the_unweighted_metrics((p, g) in pair(5), w in 0.1f64..10.0) {
        let uniform = JointWeights::new(vec![w; NUM_JOINTS], "const").unwrap();
        let a = mpjpe(&p, &g).unwrap();
        let b = weighted_mpjpe(&p, &g, &uniform).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        let (lm, gm) = mse(&p, &g).unwrap();
        let (lw, gw) = wmse(&p, &g, &uniform).unwrap();
        prop_assert!((lm - lw).abs() <= 1e-12 * lm.max(1.0));
        for (x, y) in gm.data().iter().zip(gw.data()) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn losses_are_zero_exactly_at_the_target(p in coords(2)) {
        prop_assert_eq!(mse(&p, &p).unwrap().0, 0.0);
        prop_assert_eq!(l1(&p, &p).unwrap().0, 0.0);
        prop_assert_eq!(wmse(&p, &p, &JointWeights::default_map()).unwrap().0, 0.0);
    }

    #[test]
    fn row_order_does_not_change_mpjpe((p, g) in pair(6), rot in 0usize..6) {
        let idx: Vec<usize> = (0..6).map(|i| (i + rot) % 6).collect();
        let a = mpjpe(&p, &g).unwrap();
        let b = mpjpe(&p.gather_rows(&idx), &g.gather_rows(&idx)).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn comparison_is_antisymmetric_in_delta(a in table("a"), b in table("b")) {
        let ab = compare(&a, &b).unwrap();
        let ba = compare(&b, &a).unwrap();
        for (x, y) in ab.rows.iter().zip(&ba.rows) {
            prop_assert_eq!(x.action, y.action);
            prop_assert!((x.delta + y.delta).abs() <= 1e-9);
        }
        let same = compare(&a, &a).unwrap();
        prop_assert_eq!(same.mean_relative_improvement_pct, 0.0);
        prop_assert_eq!(same.average_improvement_pct, 0.0);
    }

    #[test]
    fn table_csv_round_trips(a in table("original"), b in table("v2")) {
        let csv = render_table(&[a.clone(), b.clone()], TableFormat::Csv).unwrap();
        let back = parse_tables_csv(&csv).unwrap();
        prop_assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn dataset_csv_round_trips(n in 1usize..20, seed in 0u64..1000, noise in 0.0f64..5.0) {
        let data = synth_generate(n, seed, &CameraModel::default(), &SynthOptions { noise_std: noise }).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &data).unwrap();
        prop_assert_eq!(read_dataset(buf.as_slice()).unwrap(), data);
    }

    #[test]
    fn normalization_inverts(n in 2usize..30, seed in 0u64..1000) {
        let data = synth_generate(n, seed, &CameraModel::default(), &SynthOptions::default()).unwrap();
        let stats = compute_norm_stats(&data, "prop").unwrap();
        for p in &data {
            let x = p.flat3d();
            let back = stats.denormalize3d(&stats.normalize3d(&x).unwrap()).unwrap();
            for (u, v) in x.iter().zip(&back) {
                prop_assert!((u - v).abs() <= 1e-9 * u.abs().max(1.0));
            }
        }
    }

    #[test]
    fn every_bone_and_joint_is_drawn(seed in 0u64..500, az in -180.0f64..180.0, el in -80.0f64..80.0) {
        let pose = synth_generate(1, seed, &CameraModel::default(), &SynthOptions::default()).unwrap()[0].pose3d;
        let style = RenderStyle { azimuth: az, elevation: el, ..RenderStyle::default() };
        let svg = render_pose3d(&pose, &style).unwrap();
        prop_assert_eq!(svg.matches("<line").count(), SkeletonSpec::canonical().bones().len());
        prop_assert_eq!(svg.matches("<circle").count(), NUM_JOINTS);
    }

    #[test]
    fn batch_norm_train_output_is_standardized(
        rows in 2usize..40,
        scale in 0.5f64..50.0,
        offset in -100.0f64..100.0,
        seed in 0u64..1000,
    ) {
        let mut rng = poselift::nn::rng::SeededRng::new(seed);
        let cols = 4;
        let data: Vec<f64> = (0..rows * cols).map(|_| offset + scale * rng.uniform(-1.0, 1.0)).collect();
        let x = Tensor::from_vec(rows, cols, data).unwrap();
        let n = rows as f64;
        for c in 0..cols {
            let m = (0..rows).map(|r| x.get(r, c)).sum::<f64>() / n;
            let v = (0..rows).map(|r| (x.get(r, c) - m).powi(2)).sum::<f64>() / n;
            prop_assume!(v > 0.1);
        }
        let mut bn = BatchNorm::new("bn", cols);
        let y = bn.forward(&x, LayerMode::Train).unwrap();
        for c in 0..cols {
            let m = (0..rows).map(|r| y.get(r, c)).sum::<f64>() / n;
            let v = (0..rows).map(|r| (y.get(r, c) - m).powi(2)).sum::<f64>() / n;
            prop_assert!(m.abs() < 1e-9, "mean {m}");
            prop_assert!((1.0 - 1e-4..=1.0 + 1e-12).contains(&v), "variance {v}");
        }
    }
}
