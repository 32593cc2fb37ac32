//! Training losses with gradients, and millimeter-space evaluation metrics.
//!
//! Losses operate on `batch × 3J` tensors in normalized space. The weighted
//! loss gives each joint's weight to all three of its coordinates and
//! divides by the total weight:
//!
//! `WMSE = Σ_b Σ_j Σ_k wⱼ·(pred − target)² / (batch · 3 · Σⱼ wⱼ)`
//!
//! Weights are stored divided by their maximum. For uniform weights every
//! stored weight is exactly `1.0`, so WMSE and its gradient agree with MSE
//! bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{SkeletonSpec, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::nn::Tensor;

const DEFAULT_WEIGHTS_JSON: &str = include_str!("../data/joint_weights.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointWeights {
    /// As given, one per joint in canonical order.
    raw: Vec<f64>,
    /// `raw / max(raw)`.
    scaled: Vec<f64>,
    pub source: String,
}

impl JointWeights {
    pub fn new(raw: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Weights("no weights given".into()));
        }
        if let Some((i, w)) = raw.iter().enumerate().find(|(_, w)| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::Weights(format!("weight for joint {i} must be positive, got {w}")));
        }
        let max = raw.iter().cloned().fold(f64::MIN, f64::max);
        let scaled = raw.iter().map(|w| w / max).collect();
        Ok(Self {
            raw,
            scaled,
            source: source.into(),
        })
    }

    pub fn uniform(n: usize) -> Self {
        Self::new(vec![1.0; n], "uniform").expect("positive")
    }

    /// The shipped importance ranking: 4 for the torso core, 3 for
    /// hips/shoulders/head, 2 for knees/elbows, 1 for feet/wrists.
    pub fn default_map() -> Self {
        Self::from_json(DEFAULT_WEIGHTS_JSON, "default").expect("shipped joint_weights.json is valid")
    }

    /// JSON object `{joint name: weight}` covering every canonical joint
    /// exactly once.
    pub fn from_json(text: &str, source: impl Into<String>) -> Result<Self> {
        let map: BTreeMap<String, f64> =
            serde_json::from_str(text).map_err(|e| Error::Weights(format!("bad JSON: {e}")))?;
        let skel = SkeletonSpec::canonical();
        if let Some(unknown) = map.keys().find(|k| skel.index_of(k).is_none()) {
            return Err(Error::Weights(format!("unknown joint name {unknown:?}")));
        }
        let mut raw = Vec::with_capacity(skel.len());
        for name in skel.names() {
            let w = map
                .get(name)
                .ok_or_else(|| Error::Weights(format!("missing joint {name:?}")))?;
            raw.push(*w);
        }
        Self::new(raw, source)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_json(&text, path.as_ref().display().to_string())
    }

    pub fn to_json(&self) -> String {
        let skel = SkeletonSpec::canonical();
        let map: BTreeMap<&str, f64> = skel
            .names()
            .iter()
            .map(String::as_str)
            .zip(self.raw.iter().copied())
            .collect();
        serde_json::to_string_pretty(&map).expect("plain map")
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn scaled(&self) -> &[f64] {
        &self.scaled
    }

    fn check_joints(&self, joints: usize) -> Result<()> {
        if self.len() != joints {
            return Err(Error::Weights(format!(
                "{} weights for {joints} joints",
                self.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LossKind {
    L2,
    L1,
    Wmse { weights: JointWeights },
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::L2 => "mse",
            LossKind::L1 => "l1",
            LossKind::Wmse { .. } => "wmse",
        }
    }

    pub fn compute(&self, pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
        match self {
            LossKind::L2 => mse(pred, target),
            LossKind::L1 => l1(pred, target),
            LossKind::Wmse { weights } => wmse(pred, target, weights),
        }
    }
}

fn check_shapes(pred: &Tensor, target: &Tensor, op: &'static str) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape {
            op,
            left: pred.shape(),
            right: target.shape(),
        });
    }
    Ok(())
}

/// Mean squared error over all elements and its gradient `2(p−t)/N`.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    check_shapes(pred, target, "mse")?;
    let n = pred.len() as f64;
    let mut sum = 0.0;
    for (p, t) in pred.data().iter().zip(target.data()) {
        let e = p - t;
        sum += e * e;
    }
    let grad = pred.zip_map(target, |p, t| (2.0 * (p - t)) / n)?;
    Ok((sum / n, grad))
}

/// Mean absolute error; subgradient `sign(p−t)/N` with `sign(0) = 0`.
pub fn l1(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    check_shapes(pred, target, "l1")?;
    let n = pred.len() as f64;
    let sum: f64 = pred.data().iter().zip(target.data()).map(|(p, t)| (p - t).abs()).sum();
    let grad = pred.zip_map(target, |p, t| {
        let e = p - t;
        if e > 0.0 {
            1.0 / n
        } else if e < 0.0 {
            -1.0 / n
        } else {
            0.0
        }
    })?;
    Ok((sum / n, grad))
}

pub fn wmse(pred: &Tensor, target: &Tensor, weights: &JointWeights) -> Result<(f64, Tensor)> {
    check_shapes(pred, target, "wmse")?;
    if pred.cols() % 3 != 0 {
        return Err(Error::Shape {
            op: "wmse",
            left: pred.shape(),
            right: (pred.rows(), 3 * weights.len()),
        });
    }
    weights.check_joints(pred.cols() / 3)?;
    let w = weights.scaled();
    let total: f64 = w.iter().sum();
    let denom = pred.rows() as f64 * 3.0 * total;
    let cols = pred.cols();
    let mut sum = 0.0;
    let mut grad = Tensor::zeros(pred.rows(), cols);
    for (i, ((p, t), g)) in pred
        .data()
        .iter()
        .zip(target.data())
        .zip(grad.data_mut())
        .enumerate()
    {
        let wj = w[(i % cols) / 3];
        let e = p - t;
        sum += wj * (e * e);
        *g = (2.0 * (wj * e)) / denom;
    }
    Ok((sum / denom, grad))
}

fn joint_distances(pred: &Tensor, gt: &Tensor, op: &'static str) -> Result<Vec<Vec<f64>>> {
    check_shapes(pred, gt, op)?;
    if pred.cols() % 3 != 0 {
        return Err(Error::Shape {
            op,
            left: pred.shape(),
            right: (pred.rows(), 3 * (pred.cols() / 3)),
        });
    }
    Ok((0..pred.rows())
        .map(|r| {
            pred.row(r)
                .chunks_exact(3)
                .zip(gt.row(r).chunks_exact(3))
                .map(|(a, b)| {
                    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
                    (dx * dx + dy * dy + dz * dz).sqrt()
                })
                .collect()
        })
        .collect())
}

fn weighted_mean_distance(dists: &[Vec<f64>], w: &[f64]) -> f64 {
    if dists.is_empty() {
        return 0.0;
    }
    let total: f64 = w.iter().sum();
    let mut acc = 0.0;
    for row in dists {
        let s: f64 = row.iter().zip(w).map(|(d, w)| w * d).sum();
        acc += s / total;
    }
    acc / dists.len() as f64
}

/// Mean per-joint position error: the mean over samples of the mean over
/// joints of the Euclidean joint distance. Inputs are `batch × 3J` in
/// millimeters.
pub fn mpjpe(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    let d = joint_distances(pred, gt, "mpjpe")?;
    let ones = vec![1.0; pred.cols() / 3];
    Ok(weighted_mean_distance(&d, &ones))
}

/// Per sample `Σ wⱼ·dⱼ / Σ wⱼ`, averaged over the batch. Equal weights give
/// exactly [`mpjpe`].
pub fn weighted_mpjpe(pred: &Tensor, gt: &Tensor, weights: &JointWeights) -> Result<f64> {
    let d = joint_distances(pred, gt, "weighted_mpjpe")?;
    weights.check_joints(pred.cols() / 3)?;
    Ok(weighted_mean_distance(&d, weights.scaled()))
}

/// Per-joint mean distance over the batch; handy for diagnostics.
pub fn per_joint_error(pred: &Tensor, gt: &Tensor) -> Result<[f64; NUM_JOINTS]> {
    let d = joint_distances(pred, gt, "per_joint_error")?;
    let mut out = [0.0; NUM_JOINTS];
    if pred.cols() != NUM_JOINTS * 3 {
        return Err(Error::Shape {
            op: "per_joint_error",
            left: pred.shape(),
            right: (pred.rows(), NUM_JOINTS * 3),
        });
    }
    for row in &d {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    let n = d.len().max(1) as f64;
    out.iter_mut().for_each(|v| *v /= n);
    Ok(out)
}
