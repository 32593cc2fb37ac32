//! Adam, step-decayed learning rate, and the mini-batch training loop.

use std::io::Write;
#[cfg(not(target_arch = "wasm32"))]
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{poses3d_mm, NormStats, PosePair};
use crate::error::{Error, Result};
use crate::metrics::{mpjpe, weighted_mpjpe, JointWeights, LossKind};
use crate::model::Lifter;
use crate::nn::rng::SeededRng;
use crate::nn::{Layer, LayerMode, Param, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub decay_factor: f64,
    /// Optimizer steps between learning-rate decays.
    pub decay_interval: u64,
    pub loss: LossKind,
    pub seed: u64,
    pub shuffle: bool,
    pub eval_every: usize,
    /// Rescale the global gradient norm down to this value when exceeded.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            batch_size: 64,
            learning_rate: 1e-3,
            decay_factor: 0.96,
            decay_interval: 25_000,
            loss: LossKind::L2,
            seed: 0,
            shuffle: true,
            eval_every: 1,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be >= 2 for batch norm, got {}",
                self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Config(format!("decay_factor must be in (0, 1], got {}", self.decay_factor)));
        }
        if self.decay_interval == 0 {
            return Err(Error::Config("decay_interval must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip_norm must be > 0, got {c}")));
            }
        }
        Ok(())
    }
}

pub fn lr_at(config: &TrainConfig, step: u64) -> f64 {
    config.learning_rate * config.decay_factor.powi((step / config.decay_interval) as i32)
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &[&Param]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.value.rows(), p.value.cols())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update. Gradients are checked for finiteness
/// before any parameter is touched.
pub fn adam_step(params: &mut [&mut Param], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != state.m.len() {
        return Err(Error::Config(format!(
            "optimizer tracks {} tensors, model has {}",
            state.m.len(),
            params.len()
        )));
    }
    for p in params.iter() {
        if !p.grad.is_finite() {
            return Err(Error::NonFinite(format!("gradient of {}", p.name)));
        }
    }
    state.t += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let g = p.grad.data();
        let theta = p.value.data_mut();
        for (((th, &gi), mi), vi) in theta.iter_mut().zip(g).zip(m.data_mut()).zip(v.data_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *th -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

fn clip_gradients(params: &mut [&mut Param], max_norm: f64) {
    let sq: f64 = params.iter().map(|p| p.grad.data().iter().map(|g| g * g).sum::<f64>()).sum();
    let norm = sq.sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for p in params.iter_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= s);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` on epochs without evaluation or with an empty test split.
    pub eval_mpjpe_mm: Option<f64>,
    pub eval_wmpjpe_mm: Option<f64>,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

pub const LOG_HEADER: &str = "epoch,train_loss,eval_mpjpe_mm,eval_wmpjpe_mm,lr,seconds";

impl TrainLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// CSV with [`LOG_HEADER`]; missing evaluations are empty cells.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{LOG_HEADER}")?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{:.3}",
                r.epoch,
                r.train_loss,
                opt(r.eval_mpjpe_mm),
                opt(r.eval_wmpjpe_mm),
                r.lr,
                r.seconds
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }
}

/// Eval-mode MPJPE and weighted MPJPE (mm) of `model` on `data`.
pub fn evaluate_mm(
    model: &Lifter,
    data: &[PosePair],
    stats: &NormStats,
    weights: &JointWeights,
) -> Result<(f64, f64)> {
    let pred = stats.denormalize3d_rows(&model.infer(&stats.inputs(data)?)?)?;
    let gt = poses3d_mm(data);
    Ok((mpjpe(&pred, &gt)?, weighted_mpjpe(&pred, &gt, weights)?))
}

/// Splits `order` into mini-batches, dropping a trailing batch of one.
fn batches(order: &[usize], size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(size).filter(|b| b.len() >= 2)
}

/// Seconds since the call. wasm32 has no std clock, so there it reads 0.
#[cfg(not(target_arch = "wasm32"))]
fn wall_clock() -> impl Fn() -> f64 {
    let t = Instant::now();
    move || t.elapsed().as_secs_f64()
}

#[cfg(target_arch = "wasm32")]
fn wall_clock() -> impl Fn() -> f64 {
    || 0.0
}

/// Trains `model` in place. See [`train_with`].
pub fn train(
    model: &mut Lifter,
    train_data: &[PosePair],
    test_data: &[PosePair],
    stats: &NormStats,
    config: &TrainConfig,
) -> Result<TrainLog> {
    train_with(model, train_data, test_data, stats, config, |_, _| Ok(()))
}

/// Trains `model` in place, calling `on_eval(model, record)` after every
/// evaluated epoch and after the last one.
///
/// Weighted MPJPE uses the loss's joint weights for WMSE and the default
/// ranking otherwise. If the loss becomes non-finite the model is restored
/// to the end of the last completed epoch and [`Error::Diverged`] carries
/// the log so far.
pub fn train_with(
    model: &mut Lifter,
    train_data: &[PosePair],
    test_data: &[PosePair],
    stats: &NormStats,
    config: &TrainConfig,
    mut on_eval: impl FnMut(&Lifter, &EpochRecord) -> Result<()>,
) -> Result<TrainLog> {
    config.validate()?;
    stats.validate()?;
    let n = train_data.len();
    if n == 0 {
        return Err(Error::Config("training data is empty".into()));
    }
    if config.batch_size > n {
        return Err(Error::Config(format!(
            "batch_size {} exceeds training set size {n}",
            config.batch_size
        )));
    }
    if test_data.is_empty() {
        log::warn!("test split is empty; evaluation columns will be blank");
    }
    let eval_weights = match &config.loss {
        LossKind::Wmse { weights } => weights.clone(),
        _ => JointWeights::default_map(),
    };
    let x_all = stats.inputs(train_data)?;
    let y_all = stats.targets(train_data)?;
    let mut rng = SeededRng::new(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut adam = AdamState::new(&model.params());
    let mut step: u64 = 0;
    let mut log = TrainLog::default();
    let mut last_good = model.clone();
    let clock = wall_clock();

    for epoch in 1..=config.epochs {
        if config.shuffle {
            rng.shuffle(&mut order);
        }
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        let mut failure: Option<String> = None;
        let mut lr = lr_at(config, step);
        for idx in batches(&order, config.batch_size) {
            lr = lr_at(config, step);
            let x = x_all.gather_rows(idx);
            let y = y_all.gather_rows(idx);
            model.zero_grad();
            let pred = model.forward(&x, LayerMode::Train)?;
            let (loss, grad) = config.loss.compute(&pred, &y)?;
            if !loss.is_finite() {
                failure = Some(format!("loss {loss}"));
                break;
            }
            model.backward(&grad)?;
            let mut params = model.params_mut();
            if let Some(c) = config.clip_norm {
                clip_gradients(&mut params, c);
            }
            match adam_step(&mut params, &mut adam, lr) {
                Ok(()) => {}
                Err(Error::NonFinite(what)) => {
                    failure = Some(what);
                    break;
                }
                Err(e) => return Err(e),
            }
            loss_sum += loss * idx.len() as f64;
            seen += idx.len();
            step += 1;
        }
        if let Some(what) = failure {
            log::error!("epoch {epoch}: non-finite {what}; restoring epoch {}", epoch - 1);
            *model = last_good;
            return Err(Error::Diverged {
                epoch,
                restored_epoch: epoch - 1,
                log: Box::new(log),
            });
        }
        let evaluate = !test_data.is_empty() && (epoch % config.eval_every == 0 || epoch == config.epochs);
        let (eval_mpjpe_mm, eval_wmpjpe_mm) = if evaluate {
            let (a, b) = evaluate_mm(model, test_data, stats, &eval_weights)?;
            (Some(a), Some(b))
        } else {
            (None, None)
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / seen as f64,
            eval_mpjpe_mm,
            eval_wmpjpe_mm,
            lr,
            seconds: clock(),
        };
        log::info!(
            "epoch {epoch}/{}: loss {:.6} mpjpe {}",
            config.epochs,
            record.train_loss,
            eval_mpjpe_mm.map(|v| format!("{v:.2} mm")).unwrap_or_else(|| "-".into())
        );
        if epoch % config.eval_every == 0 || epoch == config.epochs {
            on_eval(model, &record)?;
        }
        log.records.push(record);
        last_good = model.clone();
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{compute_norm_stats, synth_generate, CameraModel, SynthOptions};
    use crate::model::{LifterConfig, Variant};

    fn scalar(v: f64, g: f64) -> Param {
        let mut p = Param::new("theta", Tensor::filled(1, 1, v));
        p.grad = Tensor::filled(1, 1, g);
        p
    }

    #[test]
    fn lr_schedule() {
        let c = TrainConfig::default();
        assert_eq!(lr_at(&c, 0), 1e-3);
        assert_eq!(lr_at(&c, 24_999), 1e-3);
        assert_eq!(lr_at(&c, 25_000), 1e-3 * 0.96);
        assert!((lr_at(&c, 75_000) - 1e-3 * 0.96f64.powi(3)).abs() < 1e-18);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = scalar(0.7, 0.0);
        let mut st = AdamState::new(&[&p]);
        for _ in 0..5 {
            adam_step(&mut [&mut p], &mut st, 0.1).unwrap();
        }
        assert_eq!(p.value.data()[0], 0.7);
        assert_eq!(st.t, 5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar(1.0, 1.0);
        let mut st = AdamState::new(&[&p]);
        adam_step(&mut [&mut p], &mut st, 0.1).unwrap();
        // m̂ = v̂ = 1, so the step is lr / (1 + 1e-8)
        let want = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((p.value.data()[0] - want).abs() < 1e-15);
    }

    #[test]
    fn descends_on_a_parabola() {
        let mut p = scalar(1.0, 0.0);
        let mut st = AdamState::new(&[&p]);
        let mut prev = 1.0;
        for _ in 0..10 {
            let th = p.value.data()[0];
            p.grad.data_mut()[0] = 2.0 * th;
            adam_step(&mut [&mut p], &mut st, 0.05).unwrap();
            let f = p.value.data()[0].powi(2);
            assert!(f < prev);
            prev = f;
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = scalar(1.0, f64::NAN);
        let mut st = AdamState::new(&[&p]);
        let err = adam_step(&mut [&mut p], &mut st, 0.1).unwrap_err().to_string();
        assert!(err.contains("theta"), "{err}");
        assert_eq!(p.value.data()[0], 1.0);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        c.epochs = 0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.batch_size = 1;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn trailing_singleton_batch_dropped() {
        let order: Vec<usize> = (0..9).collect();
        let sizes: Vec<usize> = batches(&order, 4).map(|b| b.len()).collect();
        assert_eq!(sizes, vec![4, 4]);
        let sizes: Vec<usize> = batches(&order, 3).map(|b| b.len()).collect();
        assert_eq!(sizes, vec![3, 3, 3]);
        let order: Vec<usize> = (0..10).collect();
        let sizes: Vec<usize> = batches(&order, 4).map(|b| b.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    fn tiny() -> (Vec<PosePair>, NormStats) {
        let data = synth_generate(24, 3, &CameraModel::default(), &SynthOptions::default()).unwrap();
        let stats = compute_norm_stats(&data, "tiny").unwrap();
        (data, stats)
    }

    #[test]
    fn training_reduces_loss_and_logs_each_epoch() {
        let (data, stats) = tiny();
        let mut m = Lifter::build(&LifterConfig::preset(Variant::V2).with_size(32).with_dropout(0.0), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 8,
            seed: 4,
            ..TrainConfig::default()
        };
        let log = train(&mut m, &data, &data[..6], &stats, &cfg).unwrap();
        assert_eq!(log.len(), 30);
        assert!(log.records[29].train_loss < log.records[0].train_loss);
        assert!(log.records.iter().all(|r| r.eval_mpjpe_mm.is_some()));
        let csv = log.to_csv();
        assert!(csv.starts_with(LOG_HEADER));
        assert_eq!(csv.lines().count(), 31);
    }

    #[test]
    fn same_seed_same_weights() {
        let (data, stats) = tiny();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 5,
            seed: 11,
            ..TrainConfig::default()
        };
        let run = || {
            let mut m = Lifter::build(&LifterConfig::preset(Variant::V1).with_size(16), 2).unwrap();
            train(&mut m, &data, &data, &stats, &cfg).unwrap();
            m
        };
        let (a, b) = (run(), run());
        for ((_, x), (_, y)) in a.named_tensors().into_iter().zip(b.named_tensors()) {
            assert!(x.data().iter().zip(y.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn rejects_oversized_batch_and_empty_data() {
        let (data, stats) = tiny();
        let mut m = Lifter::build(&LifterConfig::preset(Variant::Original).with_size(8), 0).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 25,
            ..TrainConfig::default()
        };
        assert!(train(&mut m, &data, &data, &stats, &cfg).is_err());
        assert!(train(&mut m, &[], &data, &stats, &TrainConfig::default()).is_err());
    }

    #[test]
    fn divergence_restores_last_good_epoch() {
        let (data, stats) = tiny();
        let mut m = Lifter::build(&LifterConfig::preset(Variant::Original).with_size(8), 0).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 8,
            ..TrainConfig::default()
        };
        train(&mut m, &data, &[], &stats, &cfg).unwrap();
        let huge = TrainConfig {
            learning_rate: 1e308,
            ..cfg
        };
        match train(&mut m, &data, &[], &stats, &huge) {
            Err(Error::Diverged { epoch, restored_epoch, log }) => {
                assert_eq!(restored_epoch + 1, epoch);
                assert_eq!(log.len(), restored_epoch);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
        assert!(m.named_tensors().iter().all(|(_, t)| t.is_finite()));
    }
}
