//! Synthesize, split, train, checkpoint, reload and evaluate through the
//! public API.

use poselift::data::{compute_norm_stats, split_by_subject, synth_generate, CameraModel, SynthOptions};
use poselift::metrics::{JointWeights, LossKind};
use poselift::model::checkpoint::{load, save};
use poselift::model::{Lifter, LifterConfig, TrainingMeta, Variant};
use poselift::nn::Layer;
use poselift::report::evaluate;
use poselift::train::{train, TrainConfig};

fn subjects(s: &[&str]) -> Vec<String> {
    s.iter().map(|x| x.to_string()).collect()
}

#[test]
fn small_v3_pipeline_round_trips_through_a_checkpoint() {
    let data = synth_generate(280, 11, &CameraModel::default(), &SynthOptions { noise_std: 1.0 }).unwrap();
    let split = split_by_subject(&data, &subjects(&["S1", "S2", "S3", "S4", "S5"]), &subjects(&["S6", "S7"])).unwrap();
    assert_eq!(split.train.len() + split.test.len(), data.len());
    let stats = compute_norm_stats(&split.train, "pipeline").unwrap();

    let cfg = LifterConfig::preset(Variant::V3).with_size(48);
    let mut model = Lifter::build(&cfg, 5).unwrap();
    let tc = TrainConfig {
        epochs: 8,
        batch_size: 32,
        loss: LossKind::Wmse {
            weights: JointWeights::default_map(),
        },
        ..TrainConfig::default()
    };
    let log = train(&mut model, &split.train, &split.test, &stats, &tc).unwrap();
    assert_eq!(log.len(), 8);
    let first = log.records[0].eval_mpjpe_mm.unwrap();
    let last = log.last().unwrap().eval_mpjpe_mm.unwrap();
    assert!(last < first, "test MPJPE {first} -> {last}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    save(&path, &model, &stats, TrainingMeta::default()).unwrap();
    let (reloaded, ckpt) = load(&path).unwrap();
    assert_eq!(ckpt.norm_stats, stats);
    assert_eq!(reloaded.num_params(), model.num_params());

    let w = JointWeights::default_map();
    let (a, aw) = evaluate(&model, &split.test, &stats, Some(&w), "v3").unwrap();
    let (b, bw) = evaluate(&reloaded, &split.test, &stats, Some(&w), "v3").unwrap();
    assert_eq!(a, b);
    assert_eq!(aw, bw);
    assert_eq!(a.rows.len(), 15);
    assert!((a.average() - last).abs() < 0.35 * last, "per-action average {} vs pooled {last}", a.average());
}
