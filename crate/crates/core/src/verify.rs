//! Self-checks: finite-difference gradient checks of every layer and of
//! whole variant models, loss gradients, metric oracles and the Swish
//! large-β limit.

use std::time::Instant;

use crate::data::NUM_JOINTS;
use crate::error::Result;
use crate::metrics::{mpjpe, weighted_mpjpe, JointWeights, LossKind};
use crate::model::{Lifter, LifterConfig, Variant};
use crate::nn::rng::SeededRng;
use crate::nn::{
    grad_check, grad_check_with, relu, swish, BatchNorm, Dropout, GradCheckReport, Layer, LayerMode, Linear, Param,
    Relu, Swish, Tensor,
};

/// Finite-difference step.
pub const GRAD_EPS: f64 = 1e-5;
/// Largest accepted relative gradient error.
pub const GRAD_TOL: f64 = 1e-4;
pub const METRIC_TOL: f64 = 1e-12;
pub const SWISH_BETA: f64 = 100.0;
pub const SWISH_LIMIT_TOL: f64 = 0.004;

/// Deliberate defects used to confirm the suite catches them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Scales the analytic Swish β gradient by 1.1.
    SwishBackward,
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Adds whole-model checks for every variant.
    pub full: bool,
    pub seeds: Vec<u64>,
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            full: false,
            seeds: vec![0],
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "{} {} ({}; {:.2}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn timed(name: impl Into<String>, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let t = Instant::now();
    let (passed, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    CheckResult {
        name: name.into(),
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn grad_result(r: &GradCheckReport) -> (bool, String) {
    (
        r.max_relative_error < GRAD_TOL,
        format!(
            "max rel err {:.2e} at {} over {} entries",
            r.max_relative_error, r.worst, r.checked
        ),
    )
}

fn random(rows: usize, cols: usize, rng: &mut SeededRng, scale: f64) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.uniform(-scale, scale)).collect()).expect("sized")
}

/// Uniform in `±[lo, hi]`, keeping clear of ReLU's kink.
fn off_kink(rows: usize, cols: usize, rng: &mut SeededRng) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let m = rng.uniform(0.1, 2.0);
            if rng.unit() < 0.5 {
                -m
            } else {
                m
            }
        })
        .collect();
    Tensor::from_vec(rows, cols, data).expect("sized")
}

/// A model (or a bare tensor) followed by a training loss, exposed as a
/// layer whose 1×1 output is the loss value.
pub struct WithLoss<L> {
    pub inner: L,
    pub target: Tensor,
    pub loss: LossKind,
    grad: Option<Tensor>,
}

impl<L> WithLoss<L> {
    pub fn new(inner: L, target: Tensor, loss: LossKind) -> Self {
        Self {
            inner,
            target,
            loss,
            grad: None,
        }
    }
}

impl<L: Layer> Layer for WithLoss<L> {
    fn forward(&mut self, x: &Tensor, mode: LayerMode) -> Result<Tensor> {
        let y = self.inner.forward(x, mode)?;
        let (l, g) = self.loss.compute(&y, &self.target)?;
        self.grad = Some(g);
        Tensor::from_vec(1, 1, vec![l])
    }

    fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        let s = g.data()[0];
        let dl = self.grad.as_ref().expect("forward before backward").scale(s);
        self.inner.backward(&dl)
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let (l, _) = self.loss.compute(&self.inner.infer(x)?, &self.target)?;
        Tensor::from_vec(1, 1, vec![l])
    }

    fn params(&self) -> Vec<&Param> {
        self.inner.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.inner.params_mut()
    }

    fn set_mask_frozen(&mut self, frozen: bool) {
        self.inner.set_mask_frozen(frozen);
    }
}

/// Pass-through layer, so a loss can be checked on its own.
struct Identity;

impl Layer for Identity {
    fn forward(&mut self, x: &Tensor, _mode: LayerMode) -> Result<Tensor> {
        Ok(x.clone())
    }

    fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        Ok(g.clone())
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.clone())
    }
}

/// Gradient checks of each layer kind; one result per layer.
pub fn layer_checks(seed: u64, fault: Option<Fault>) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let tag = |name: &str| format!("{name} (seed {seed})");

    out.push(timed(tag("linear"), || {
        let mut rng = SeededRng::new(seed);
        let mut l = Linear::new("linear", 7, 5, &mut rng);
        let x = random(4, 7, &mut rng, 1.0);
        Ok(grad_result(&grad_check(&mut l, &x, GRAD_EPS, LayerMode::Train)?))
    }));

    out.push(timed(tag("batch_norm"), || {
        let mut rng = SeededRng::new(seed);
        let mut bn = BatchNorm::new("bn", 6);
        for v in bn.gamma.value.data_mut() {
            *v = rng.uniform(0.5, 1.5);
        }
        for v in bn.beta.value.data_mut() {
            *v = rng.uniform(-0.5, 0.5);
        }
        let x = random(16, 6, &mut rng, 2.0);
        Ok(grad_result(&grad_check(&mut bn, &x, GRAD_EPS, LayerMode::Train)?))
    }));

    out.push(timed(tag("dropout"), || {
        let mut rng = SeededRng::new(seed);
        let mut d = Dropout::new(0.5, rng.fork())?;
        let x = random(6, 9, &mut rng, 1.0);
        Ok(grad_result(&grad_check(&mut d, &x, GRAD_EPS, LayerMode::Train)?))
    }));

    out.push(timed(tag("relu"), || {
        let mut rng = SeededRng::new(seed);
        let mut r = Relu::new();
        let x = off_kink(5, 8, &mut rng);
        Ok(grad_result(&grad_check(&mut r, &x, GRAD_EPS, LayerMode::Train)?))
    }));

    out.push(timed(tag("swish"), || {
        let mut rng = SeededRng::new(seed);
        let mut s = Swish::with_beta("swish.beta", rng.uniform(0.5, 2.0));
        let x = random(5, 8, &mut rng, 3.0);
        let report = match fault {
            Some(Fault::SwishBackward) => grad_check_with(&mut s, &x, GRAD_EPS, LayerMode::Train, |s: &mut Swish| {
                for v in s.beta.grad.data_mut() {
                    *v *= 1.1;
                }
            })?,
            None => grad_check(&mut s, &x, GRAD_EPS, LayerMode::Train)?,
        };
        Ok(grad_result(&report))
    }));
    out
}

/// Reduced-width copy of a variant's preset used for whole-model checks.
pub fn check_config(variant: Variant) -> LifterConfig {
    LifterConfig::preset(variant).with_size(16)
}

/// End-to-end check of one variant: network, Train-mode batch norm,
/// frozen dropout masks and the variant's loss (WMSE with the default
/// weights for V3, MSE otherwise).
pub fn model_check(variant: Variant, seed: u64) -> Result<GradCheckReport> {
    let mut rng = SeededRng::new(seed ^ 0x6d6f_64656c);
    let model = Lifter::build(&check_config(variant), seed)?;
    let x = random(8, model.config().input_dim(), &mut rng, 1.5);
    let y = random(8, model.config().output_dim(), &mut rng, 1.5);
    let loss = match variant {
        Variant::V3 => LossKind::Wmse {
            weights: JointWeights::default_map(),
        },
        _ => LossKind::L2,
    };
    let mut wrapped = WithLoss::new(model, y, loss);
    grad_check(&mut wrapped, &x, GRAD_EPS, LayerMode::Train)
}

pub fn loss_checks(seed: u64) -> Vec<CheckResult> {
    let losses = [
        ("loss mse", LossKind::L2),
        ("loss l1", LossKind::L1),
        (
            "loss wmse",
            LossKind::Wmse {
                weights: JointWeights::default_map(),
            },
        ),
    ];
    losses
        .into_iter()
        .map(|(name, loss)| {
            timed(format!("{name} (seed {seed})"), || {
                let mut rng = SeededRng::new(seed);
                let target = random(3, 3 * NUM_JOINTS, &mut rng, 1.0);
                // keep every residual away from L1's kink
                let x = target.add(&off_kink(3, 3 * NUM_JOINTS, &mut rng))?;
                let mut l = WithLoss::new(Identity, target, loss);
                Ok(grad_result(&grad_check(&mut l, &x, GRAD_EPS, LayerMode::Train)?))
            })
        })
        .collect()
}

fn oracle_mpjpe(pred: &[f64], gt: &[f64], w: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..NUM_JOINTS {
        let mut sq = 0.0;
        for k in 0..3 {
            let d = pred[3 * j + k] - gt[3 * j + k];
            sq += d * d;
        }
        num += w[j] * sq.sqrt();
        den += w[j];
    }
    num / den
}

/// MPJPE and weighted MPJPE against a per-pair scalar loop on `pairs`
/// random pose pairs, plus the single displaced-joint case.
pub fn metric_checks(seed: u64, pairs: usize) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let weights = JointWeights::default_map();
    out.push(timed(format!("metric oracle ({pairs} pairs, seed {seed})"), || {
        let mut rng = SeededRng::new(seed);
        let ones = vec![1.0; NUM_JOINTS];
        let mut worst: f64 = 0.0;
        for _ in 0..pairs {
            let p = random(1, 3 * NUM_JOINTS, &mut rng, 800.0);
            let g = random(1, 3 * NUM_JOINTS, &mut rng, 800.0);
            let a = mpjpe(&p, &g)?;
            let b = weighted_mpjpe(&p, &g, &weights)?;
            worst = worst
                .max((a - oracle_mpjpe(p.data(), g.data(), &ones)).abs())
                .max((b - oracle_mpjpe(p.data(), g.data(), weights.scaled())).abs());
        }
        Ok((worst <= METRIC_TOL, format!("max abs diff {worst:.2e} mm")))
    }));
    out.push(timed("metric displaced joint", || {
        let gt = Tensor::zeros(1, 3 * NUM_JOINTS);
        let mut pred = gt.clone();
        pred.set(0, 9, 3.0);
        pred.set(0, 10, 4.0);
        let v = mpjpe(&pred, &gt)?;
        Ok((v == 5.0 / 16.0, format!("mpjpe {v} (expected 0.3125)")))
    }));
    out
}

/// `sup |swish(x, β) − relu(x)|` over a regular grid on `[-10, 10]`.
pub fn swish_gap(beta: f64, step: f64) -> f64 {
    let n = (20.0 / step).round() as i64;
    (0..=n)
        .map(|i| {
            let x = -10.0 + i as f64 * step;
            (swish(x, beta) - relu(x)).abs()
        })
        .fold(0.0, f64::max)
}

pub fn swish_limit_check() -> CheckResult {
    timed("swish limit", || {
        let gap = swish_gap(SWISH_BETA, 1e-4);
        Ok((gap < SWISH_LIMIT_TOL, format!("sup gap {gap:.6} at beta {SWISH_BETA}")))
    })
}

/// The whole suite.
pub fn run(opts: &VerifyOptions) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for &seed in &opts.seeds {
        out.extend(layer_checks(seed, opts.fault));
        out.extend(loss_checks(seed));
        if opts.full {
            for v in Variant::ALL {
                out.push(timed(format!("model {v} (seed {seed})"), || {
                    Ok(grad_result(&model_check(v, seed)?))
                }));
            }
        }
    }
    let seed = opts.seeds.first().copied().unwrap_or(0);
    out.extend(metric_checks(seed, 1000));
    out.push(swish_limit_check());
    out
}
