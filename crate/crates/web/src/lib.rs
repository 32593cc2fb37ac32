//! Browser bindings for the poselift demo page: a synthetic skeleton
//! viewer, a Swish curve explorer and a small lifter trained in the page.

use std::fmt::Write;

use wasm_bindgen::prelude::*;

use poselift::data::{
    compute_norm_stats, split_by_subject, synth_generate, ActionLabel, CameraModel, NormStats, PosePair,
    SynthOptions, NUM_JOINTS,
};
use poselift::metrics::{JointWeights, LossKind};
use poselift::model::{Lifter, LifterConfig, Variant};
use poselift::nn::{relu, swish, Layer};
use poselift::train::{train, TrainConfig};
use poselift::viz::{render_pose3d, render_triptych, RenderStyle};

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Names of the 15 actions in index order.
#[wasm_bindgen(js_name = actionNames)]
pub fn action_names() -> Vec<String> {
    ActionLabel::ALL.iter().map(|a| a.name().to_string()).collect()
}

pub fn skeleton(seed: u64, action: usize, azimuth: f64, elevation: f64) -> poselift::Result<String> {
    let action = action % ActionLabel::ALL.len();
    let data = synth_generate(action + 1, seed, &CameraModel::default(), &SynthOptions::default())?;
    let style = RenderStyle {
        azimuth,
        elevation,
        ..RenderStyle::default()
    };
    render_pose3d(&data[action].pose3d, &style)
}

/// A synthetic pose of the given action seen from `azimuth`/`elevation`
/// degrees.
#[wasm_bindgen(js_name = skeletonSvg)]
pub fn skeleton_svg(seed: u32, action: usize, azimuth: f64, elevation: f64) -> Result<String, JsError> {
    skeleton(seed.into(), action, azimuth, elevation).map_err(js)
}

const CURVE_W: f64 = 420.0;
const CURVE_H: f64 = 280.0;
const X_RANGE: (f64, f64) = (-5.0, 5.0);
const Y_RANGE: (f64, f64) = (-1.5, 5.0);

fn to_px(x: f64, y: f64) -> (f64, f64) {
    let px = (x - X_RANGE.0) / (X_RANGE.1 - X_RANGE.0) * CURVE_W;
    let py = CURVE_H - (y - Y_RANGE.0) / (Y_RANGE.1 - Y_RANGE.0) * CURVE_H;
    (px, py)
}

fn polyline(f: impl Fn(f64) -> f64, stroke: &str, extra: &str) -> String {
    let n = 400;
    let mut pts = String::new();
    for i in 0..=n {
        let x = X_RANGE.0 + (X_RANGE.1 - X_RANGE.0) * i as f64 / n as f64;
        let (px, py) = to_px(x, f(x).clamp(Y_RANGE.0, Y_RANGE.1));
        let _ = write!(pts, "{px:.2},{py:.2} ");
    }
    format!(
        r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="2" {extra}/>"#,
        pts.trim_end()
    )
}

pub fn swish_curve(beta: f64) -> String {
    let (x0, _) = to_px(0.0, 0.0);
    let (_, y0) = to_px(0.0, 0.0);
    let mut s = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CURVE_W}" height="{CURVE_H}" viewBox="0 0 {CURVE_W} {CURVE_H}">"#
    );
    s.push_str(r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = write!(
        s,
        r##"<line x1="0" y1="{y0:.2}" x2="{CURVE_W}" y2="{y0:.2}" stroke="#bbbbbb"/><line x1="{x0:.2}" y1="0" x2="{x0:.2}" y2="{CURVE_H}" stroke="#bbbbbb"/>"##
    );
    s.push_str(&polyline(relu, "#888888", r#"stroke-dasharray="5 4""#));
    s.push_str(&polyline(|x| swish(x, beta), "#d1341f", ""));
    let _ = write!(
        s,
        r##"<text x="8" y="18" font-family="sans-serif" font-size="13" fill="#d1341f">swish, beta = {beta:.2}</text><text x="8" y="36" font-family="sans-serif" font-size="13" fill="#888888">relu</text></svg>"##
    );
    s
}

/// `x·σ(βx)` next to ReLU on [-5, 5].
#[wasm_bindgen(js_name = swishCurveSvg)]
pub fn swish_curve_svg(beta: f64) -> String {
    swish_curve(beta)
}

/// Largest gap between Swish and ReLU on [-10, 10] with a 1e-3 grid.
#[wasm_bindgen(js_name = swishReluGap)]
pub fn swish_relu_gap(beta: f64) -> f64 {
    (0..=20_000)
        .map(|i| {
            let x = -10.0 + i as f64 * 1e-3;
            (swish(x, beta) - relu(x)).abs()
        })
        .fold(0.0, f64::max)
}

#[wasm_bindgen]
#[derive(Debug, Clone, Copy)]
pub struct EpochReport {
    pub epoch: usize,
    pub loss: f64,
    /// Test-split MPJPE in millimeters.
    pub mpjpe: f64,
}

/// A reduced-width lifter trained on synthetic data, a few epochs per call.
#[wasm_bindgen]
pub struct LiftDemo {
    model: Lifter,
    stats: NormStats,
    train: Vec<PosePair>,
    test: Vec<PosePair>,
    loss: LossKind,
    seed: u64,
    epochs: usize,
}

impl LiftDemo {
    pub fn build(variant: &str, width: usize, samples: usize, seed: u64) -> poselift::Result<LiftDemo> {
        let variant: Variant = variant.parse().map_err(poselift::Error::Config)?;
        let data = synth_generate(samples, seed, &CameraModel::default(), &SynthOptions { noise_std: 1.0 })?;
        let subjects = |s: &[&str]| s.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        let split = split_by_subject(&data, &subjects(&["S1", "S2", "S3", "S4", "S5"]), &subjects(&["S6", "S7"]))?;
        if split.train.len() < 2 || split.test.is_empty() {
            return Err(poselift::Error::Config(format!("{samples} samples is too few for a 5/2 subject split")));
        }
        let stats = compute_norm_stats(&split.train, "demo")?;
        let model = Lifter::build(&LifterConfig::preset(variant).with_size(width), seed)?;
        let loss = match variant {
            Variant::V3 => LossKind::Wmse {
                weights: JointWeights::default_map(),
            },
            _ => LossKind::L2,
        };
        Ok(LiftDemo {
            model,
            stats,
            train: split.train,
            test: split.test,
            loss,
            seed,
            epochs: 0,
        })
    }

    pub fn run(&mut self, epochs: usize) -> poselift::Result<EpochReport> {
        let cfg = TrainConfig {
            epochs,
            batch_size: 64.min(self.train.len()),
            loss: self.loss.clone(),
            seed: self.seed.wrapping_add(self.epochs as u64),
            eval_every: epochs.max(1),
            ..TrainConfig::default()
        };
        let log = train(&mut self.model, &self.train, &self.test, &self.stats, &cfg)?;
        self.epochs += log.len();
        let last = log.last().expect("at least one epoch");
        Ok(EpochReport {
            epoch: self.epochs,
            loss: last.train_loss,
            mpjpe: last.eval_mpjpe_mm.unwrap_or(f64::NAN),
        })
    }

    pub fn triptych(&self, index: usize) -> poselift::Result<String> {
        let sample = &self.test[index % self.test.len()];
        let out = self
            .stats
            .denormalize3d_rows(&self.model.infer(&self.stats.inputs(std::slice::from_ref(sample))?)?)?;
        let mut pred = [[0.0; 3]; NUM_JOINTS];
        for (j, p) in pred.iter_mut().enumerate() {
            p.copy_from_slice(&out.row(0)[3 * j..3 * j + 3]);
        }
        render_triptych(&sample.pose2d, &sample.pose3d, &pred, &RenderStyle::default())
    }
}

#[wasm_bindgen]
impl LiftDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(variant: &str, width: usize, samples: usize, seed: u32) -> Result<LiftDemo, JsError> {
        Self::build(variant, width, samples, seed.into()).map_err(js)
    }

    /// Trains `epochs` more epochs and reports the last one.
    #[wasm_bindgen(js_name = trainEpochs)]
    pub fn train_epochs(&mut self, epochs: usize) -> Result<EpochReport, JsError> {
        self.run(epochs).map_err(js)
    }

    /// 2D input, 3D ground truth and prediction for a test sample.
    #[wasm_bindgen(js_name = renderSample)]
    pub fn render_sample(&self, index: usize) -> Result<String, JsError> {
        self.triptych(index).map_err(js)
    }

    #[wasm_bindgen(getter, js_name = testSize)]
    pub fn test_size(&self) -> usize {
        self.test.len()
    }

    #[wasm_bindgen(getter, js_name = parameterCount)]
    pub fn parameter_count(&self) -> usize {
        self.model.num_params()
    }

    #[wasm_bindgen(getter, js_name = epochsDone)]
    pub fn epochs_done(&self) -> usize {
        self.epochs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skeleton_has_every_bone_and_joint() {
        let svg = skeleton(3, 7, 30.0, 10.0).unwrap();
        assert_eq!(svg.matches("<line").count(), NUM_JOINTS - 1);
        assert_eq!(svg.matches("<circle").count(), NUM_JOINTS);
        assert_eq!(skeleton(3, 7, 30.0, 10.0).unwrap(), svg);
        assert_eq!(action_names().len(), 15);
    }

    #[test]
    fn swish_curve_shape() {
        let svg = swish_curve(1.0);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.ends_with("</svg>"));
        assert!(swish_relu_gap(100.0) < 0.004);
        assert!(swish_relu_gap(1.0) > swish_relu_gap(10.0));
    }

    #[test]
    fn demo_trains_and_renders() {
        let mut demo = LiftDemo::build("v2", 32, 210, 1).unwrap();
        let a = demo.run(2).unwrap();
        let b = demo.run(6).unwrap();
        assert_eq!(b.epoch, 8);
        assert!(b.loss < a.loss, "{} -> {}", a.loss, b.loss);
        assert!(b.mpjpe.is_finite());
        let svg = demo.triptych(5).unwrap();
        assert_eq!(svg.matches(r#"class="panel""#).count(), 3);
        assert!(LiftDemo::build("v7", 32, 210, 1).is_err());
        assert!(LiftDemo::build("v1", 32, 3, 1).is_err());
    }
}
