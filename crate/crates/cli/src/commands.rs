use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use serde::Serialize;

use poselift::data::{
    compute_norm_stats, load_dataset, parse_subjects, save_dataset, split_by_subject, synth_generate,
    CameraModel, NormStats, PosePair, SynthOptions, NUM_JOINTS,
};
use poselift::metrics::{JointWeights, LossKind};
use poselift::nn::Layer;
use poselift::model::checkpoint::{self, Checkpoint};
use poselift::model::{Lifter, LifterConfig, SwishSharing, TrainingMeta, Variant};
use poselift::report::{self, EvalTable, TableFormat};
use poselift::train::{train_with, TrainConfig, TrainLog};
use poselift::verify::{self, Fault, VerifyOptions};
use poselift::viz::{render_triptych, RenderStyle};

use crate::manifest::Run;
use crate::{CompareArgs, EvalArgs, RenderArgs, StatsArgs, SynthArgs, TrainArgs, VerifyArgs, VerifyFailed};

/// `dir/name.ext` with `suffix` inserted before the extension.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}{suffix}"),
    };
    path.with_file_name(name)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_data(path: &Path) -> Result<Vec<PosePair>> {
    load_dataset(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn read_checkpoint(path: &Path) -> Result<(Lifter, Checkpoint)> {
    let (model, ckpt) = checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    if ckpt.config.num_joints != NUM_JOINTS {
        bail!(
            "checkpoint {} was built for {} joints but datasets have {NUM_JOINTS}",
            path.display(),
            ckpt.config.num_joints
        );
    }
    Ok((model, ckpt))
}

fn read_weights(path: &Path) -> Result<JointWeights> {
    JointWeights::from_file(path).with_context(|| format!("reading joint weights {}", path.display()))
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let run = Run::start("synth", &a, Some(a.seed))?;
    let cam = CameraModel {
        focal: a.focal,
        cx: a.cx,
        cy: a.cy,
        z0: a.z0,
    };
    let data = synth_generate(a.n, a.seed, &cam, &SynthOptions { noise_std: a.noise_std })?;
    save_dataset(&a.out, &data).with_context(|| format!("writing {}", a.out.display()))?;
    run.finish(&[a.out.clone()])?;
    println!("wrote {} samples to {}", data.len(), a.out.display());
    Ok(())
}

pub fn stats(a: StatsArgs) -> Result<()> {
    let mut run = Run::start("stats", &a, None)?;
    run.input(&a.data)?;
    let data = read_data(&a.data)?;
    let subjects = parse_subjects(&a.train_subjects);
    let split = split_by_subject(&data, &subjects, &[])?;
    let stats = compute_norm_stats(&split.train, a.data.display().to_string())?;
    let mut text = serde_json::to_string_pretty(&stats)?;
    text.push('\n');
    write(&a.out, &text)?;
    run.finish(&[a.out.clone()])?;
    println!("stats over {} training samples written to {}", split.train.len(), a.out.display());
    Ok(())
}

fn resolve_loss(a: &TrainArgs, variant: Variant) -> Result<LossKind> {
    let name = match &a.loss {
        Some(l) => l.to_ascii_lowercase(),
        None if variant == Variant::V3 => "wmse".into(),
        None => "mse".into(),
    };
    let loss = match name.as_str() {
        "mse" | "l2" => LossKind::L2,
        "l1" => LossKind::L1,
        "wmse" => LossKind::Wmse {
            weights: match &a.weights_file {
                Some(p) => read_weights(p)?,
                None => JointWeights::default_map(),
            },
        },
        other => bail!("unknown loss {other:?} (expected mse, l1 or wmse)"),
    };
    let wmse = matches!(loss, LossKind::Wmse { .. });
    if wmse && variant != Variant::V3 {
        warn!("variant {variant} is normally trained with mse; using wmse as requested");
    }
    if !wmse && variant == Variant::V3 {
        warn!("variant v3 is defined by its wmse loss; training with {} instead", loss.name());
    }
    if !wmse && a.weights_file.is_some() {
        warn!("--weights-file only affects the wmse loss; ignored");
    }
    Ok(loss)
}

#[derive(Serialize)]
struct ResolvedTrain<'a> {
    args: &'a TrainArgs,
    model: &'a LifterConfig,
    train: &'a TrainConfig,
}

pub fn train(a: TrainArgs) -> Result<()> {
    let variant: Variant = a.variant.parse().map_err(|e: String| anyhow!(e))?;
    let mut model_cfg = LifterConfig::preset(variant).with_size(a.linear_size).with_dropout(a.dropout);
    model_cfg.num_blocks = a.blocks;
    if a.per_layer_swish {
        model_cfg.swish_sharing = SwishSharing::PerLayer;
    }
    model_cfg.validate()?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        learning_rate: a.lr,
        decay_factor: a.decay_factor,
        decay_interval: a.decay_interval,
        loss: resolve_loss(&a, variant)?,
        seed: a.seed,
        shuffle: !a.no_shuffle,
        eval_every: a.eval_every,
        clip_norm: a.clip_norm,
    };
    cfg.validate()?;
    let log_path = a.log.clone().unwrap_or_else(|| with_suffix(&a.out, ".log.csv"));

    let mut run = Run::start(
        "train",
        &ResolvedTrain {
            args: &a,
            model: &model_cfg,
            train: &cfg,
        },
        Some(a.seed),
    )?;
    run.input(&a.data)?;
    if let Some(w) = &a.weights_file {
        run.input(w)?;
    }
    let data = read_data(&a.data)?;
    let split = split_by_subject(&data, &parse_subjects(&a.train_subjects), &parse_subjects(&a.test_subjects))?;
    if split.train.is_empty() {
        bail!("no training samples for subjects {}", a.train_subjects);
    }
    let stats = compute_norm_stats(&split.train, a.data.display().to_string())?;
    let mut model = Lifter::build(&model_cfg, a.seed)?;
    info!(
        "training {variant} ({} parameters) on {} samples, testing on {}",
        model.num_params(),
        split.train.len(),
        split.test.len()
    );

    let meta = |epoch: usize, note: &str| TrainingMeta {
        epoch,
        seed: a.seed,
        loss: Some(cfg.loss.clone()),
        note: note.into(),
    };
    let result = train_with(&mut model, &split.train, &split.test, &stats, &cfg, |m, rec| {
        info!(
            "epoch {} loss {:.6} mpjpe {} lr {:.3e}",
            rec.epoch,
            rec.train_loss,
            rec.eval_mpjpe_mm.map(|v| format!("{v:.2} mm")).unwrap_or_else(|| "-".into()),
            rec.lr
        );
        checkpoint::save(&a.out, m, &stats, meta(rec.epoch, ""))
    });

    let (log, outcome) = match result {
        Ok(log) => (log, Ok(())),
        Err(poselift::Error::Diverged {
            epoch,
            restored_epoch,
            log,
        }) => {
            checkpoint::save(&a.out, &model, &stats, meta(restored_epoch, "restored after divergence"))
                .with_context(|| format!("writing {}", a.out.display()))?;
            let err = poselift::Error::Diverged {
                epoch,
                restored_epoch,
                log: log.clone(),
            };
            (*log, Err(err))
        }
        Err(e) => return Err(e.into()),
    };
    write_log(&log_path, &log)?;
    run.finish_with_logs(std::slice::from_ref(&a.out), std::slice::from_ref(&log_path))?;
    outcome?;
    if let Some(last) = log.last() {
        let mm = last.eval_mpjpe_mm.map(|v| format!("{v:.2} mm")).unwrap_or_else(|| "n/a".into());
        println!(
            "trained {variant} for {} epochs: final loss {:.6}, test MPJPE {mm}",
            log.len(),
            last.train_loss
        );
    }
    println!("checkpoint {}  log {}", a.out.display(), log_path.display());
    Ok(())
}

fn write_log(path: &Path, log: &TrainLog) -> Result<()> {
    write(path, &log.to_csv())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let mut run = Run::start("eval", &a, None)?;
    run.input(&a.checkpoint)?;
    run.input(&a.data)?;
    if let Some(w) = &a.weights_file {
        run.input(w)?;
    }
    let (model, ckpt) = read_checkpoint(&a.checkpoint)?;
    let mut data = read_data(&a.data)?;
    if let Some(s) = &a.subjects {
        let keep = parse_subjects(s);
        data.retain(|p| keep.contains(&p.subject));
    }
    let weights = a.weights_file.as_deref().map(read_weights).transpose()?;
    let label = a.label.clone().unwrap_or_else(|| ckpt.config.variant.name().to_string());
    let (plain, weighted) = report::evaluate(&model, &data, &ckpt.norm_stats, weights.as_ref(), &label)?;

    let mut outputs = vec![a.out.clone()];
    write(&a.out, &report::render_table(std::slice::from_ref(&plain), TableFormat::Csv)?)?;
    let mut shown = vec![plain];
    if let Some(w) = weighted {
        let path = sibling(&a.out, ".weighted");
        write(&path, &report::render_table(std::slice::from_ref(&w), TableFormat::Csv)?)?;
        outputs.push(path);
        shown.push(w);
    }
    run.finish(&outputs)?;
    print!("{}", report::render_table(&shown, TableFormat::Text)?);
    Ok(())
}

fn read_tables(path: &Path) -> Result<Vec<EvalTable>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let tables = report::parse_tables_csv(&text).with_context(|| format!("parsing {}", path.display()))?;
    if tables.is_empty() {
        bail!("{} contains no table rows", path.display());
    }
    Ok(tables)
}

pub fn compare(a: CompareArgs) -> Result<()> {
    let mut run = Run::start("compare", &a, None)?;
    run.input(&a.baseline)?;
    let baseline = read_tables(&a.baseline)?.remove(0);
    let mut candidates = Vec::new();
    for path in &a.candidate {
        run.input(path)?;
        candidates.extend(read_tables(path)?);
    }
    let comparisons = candidates
        .iter()
        .map(|c| report::compare(&baseline, c).with_context(|| format!("comparing {} against {}", c.label, baseline.label)))
        .collect::<Result<Vec<_>>>()?;

    let mut all = vec![baseline];
    all.extend(candidates);
    let tables_path = sibling(&a.out, ".tables");
    let text_path = sibling(&a.out, "").with_extension("txt");
    let text = format!(
        "{}\n{}",
        report::render_table(&all, TableFormat::Text)?,
        report::render_comparisons_text(&comparisons)
    );
    write(&a.out, &report::render_comparisons_csv(&comparisons)?)?;
    write(&tables_path, &report::render_table(&all, TableFormat::Csv)?)?;
    write(&text_path, &text)?;
    run.finish(&[a.out.clone(), tables_path, text_path])?;
    print!("{text}");
    Ok(())
}

pub fn render(a: RenderArgs) -> Result<()> {
    let mut run = Run::start("render", &a, None)?;
    run.input(&a.checkpoint)?;
    run.input(&a.data)?;
    let (model, ckpt) = read_checkpoint(&a.checkpoint)?;
    let data = read_data(&a.data)?;
    let sample = data
        .get(a.index)
        .ok_or_else(|| anyhow!("index {} out of range: dataset has {} samples", a.index, data.len()))?;
    let pred = predict(&model, &ckpt.norm_stats, sample)?;
    let style = RenderStyle {
        azimuth: a.azimuth,
        elevation: a.elevation,
        ..RenderStyle::default()
    };
    let svg = render_triptych(&sample.pose2d, &sample.pose3d, &pred, &style)?;
    write(&a.out, &svg)?;
    run.finish(&[a.out.clone()])?;
    println!(
        "rendered sample {} ({} {}) to {}",
        a.index,
        sample.subject,
        sample.action.name(),
        a.out.display()
    );
    Ok(())
}

fn predict(model: &Lifter, stats: &NormStats, sample: &PosePair) -> Result<[[f64; 3]; NUM_JOINTS]> {
    let out = stats.denormalize3d_rows(&model.infer(&stats.inputs(std::slice::from_ref(sample))?)?)?;
    let row = out.row(0);
    let mut pose = [[0.0; 3]; NUM_JOINTS];
    for (j, p) in pose.iter_mut().enumerate() {
        p.copy_from_slice(&row[3 * j..3 * j + 3]);
    }
    Ok(pose)
}

pub fn verify(a: VerifyArgs) -> Result<()> {
    let seeds = a
        .seeds
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u64>().with_context(|| format!("bad seed {s:?}")))
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        bail!("--seeds needs at least one seed");
    }
    let fault = match a.inject_fault.as_deref() {
        None => None,
        Some("swish") => Some(Fault::SwishBackward),
        Some(other) => bail!("unknown fault {other:?}"),
    };
    let results = verify::run(&VerifyOptions {
        full: a.full,
        seeds,
        fault,
    });
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{}/{} checks passed", results.len() - failed, results.len());
    if failed > 0 {
        return Err(VerifyFailed(failed).into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sibling_paths() {
        assert_eq!(sibling(Path::new("out/t.csv"), ".weighted"), PathBuf::from("out/t.weighted.csv"));
        assert_eq!(sibling(Path::new("t"), ".tables"), PathBuf::from("t.tables"));
        assert_eq!(with_suffix(Path::new("m.json"), ".log.csv"), PathBuf::from("m.json.log.csv"));
    }
}
