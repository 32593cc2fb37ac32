use serde::{Deserialize, Serialize};

use super::dataset::{header, PosePair};
use super::skeleton::NUM_JOINTS;
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const STD_FLOOR: f64 = 1e-8;

/// Per-coordinate mean and population standard deviation of a training
/// split. Coordinates whose deviation fell below [`STD_FLOOR`] are listed
/// by column name in `floored`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean2d: Vec<f64>,
    pub std2d: Vec<f64>,
    pub mean3d: Vec<f64>,
    pub std3d: Vec<f64>,
    pub floored: Vec<String>,
    pub source: String,
}

fn mean_std(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    (mean, var.iter().map(|s| (s / n).sqrt()).collect())
}

pub fn compute_norm_stats(train: &[PosePair], source: impl Into<String>) -> Result<NormStats> {
    if train.len() < 2 {
        return Err(Error::Config(format!(
            "normalization statistics need at least 2 samples, got {}",
            train.len()
        )));
    }
    let rows2: Vec<Vec<f64>> = train.iter().map(|p| p.flat2d().to_vec()).collect();
    let rows3: Vec<Vec<f64>> = train.iter().map(|p| p.flat3d().to_vec()).collect();
    let (mean2d, mut std2d) = mean_std(&rows2);
    let (mean3d, mut std3d) = mean_std(&rows3);
    let names = header();
    let mut floored = Vec::new();
    for (i, s) in std2d.iter_mut().chain(std3d.iter_mut()).enumerate() {
        if *s < STD_FLOOR {
            *s = STD_FLOOR;
            floored.push(names[3 + i].clone());
        }
    }
    Ok(NormStats {
        mean2d,
        std2d,
        mean3d,
        std3d,
        floored,
        source: source.into(),
    })
}

fn apply(x: &[f64], mean: &[f64], std: &[f64], f: impl Fn(f64, f64, f64) -> f64) -> Result<Vec<f64>> {
    if x.len() != mean.len() || x.len() != std.len() {
        return Err(Error::Shape {
            op: "normalize",
            left: (1, x.len()),
            right: (1, mean.len()),
        });
    }
    Ok(x.iter()
        .zip(mean)
        .zip(std)
        .map(|((&v, &m), &s)| f(v, m, s))
        .collect())
}

impl NormStats {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mean2d.len() == NUM_JOINTS * 2
            && self.std2d.len() == NUM_JOINTS * 2
            && self.mean3d.len() == NUM_JOINTS * 3
            && self.std3d.len() == NUM_JOINTS * 3;
        if !ok {
            return Err(Error::Config("normalization statistics have wrong lengths".into()));
        }
        if self.std2d.iter().chain(&self.std3d).any(|s| !(*s > 0.0)) {
            return Err(Error::Config("normalization std must be > 0".into()));
        }
        Ok(())
    }

    pub fn normalize2d(&self, x: &[f64]) -> Result<Vec<f64>> {
        apply(x, &self.mean2d, &self.std2d, |v, m, s| (v - m) / s)
    }

    pub fn denormalize2d(&self, x: &[f64]) -> Result<Vec<f64>> {
        apply(x, &self.mean2d, &self.std2d, |v, m, s| v * s + m)
    }

    pub fn normalize3d(&self, x: &[f64]) -> Result<Vec<f64>> {
        apply(x, &self.mean3d, &self.std3d, |v, m, s| (v - m) / s)
    }

    pub fn denormalize3d(&self, x: &[f64]) -> Result<Vec<f64>> {
        apply(x, &self.mean3d, &self.std3d, |v, m, s| v * s + m)
    }

    /// n×32 tensor of normalized 2D inputs.
    pub fn inputs(&self, data: &[PosePair]) -> Result<Tensor> {
        let mut out = Vec::with_capacity(data.len() * NUM_JOINTS * 2);
        for p in data {
            out.extend(self.normalize2d(&p.flat2d())?);
        }
        Tensor::from_vec(data.len(), NUM_JOINTS * 2, out)
    }

    /// n×48 tensor of normalized 3D targets.
    pub fn targets(&self, data: &[PosePair]) -> Result<Tensor> {
        let mut out = Vec::with_capacity(data.len() * NUM_JOINTS * 3);
        for p in data {
            out.extend(self.normalize3d(&p.flat3d())?);
        }
        Tensor::from_vec(data.len(), NUM_JOINTS * 3, out)
    }

    /// Row-wise inverse of [`NormStats::targets`], back to millimeters.
    pub fn denormalize3d_rows(&self, t: &Tensor) -> Result<Tensor> {
        let mut out = Vec::with_capacity(t.len());
        for r in 0..t.rows() {
            out.extend(self.denormalize3d(t.row(r))?);
        }
        Tensor::from_vec(t.rows(), t.cols(), out)
    }
}

/// Ground-truth 3D poses in millimeters, one row per sample.
pub fn poses3d_mm(data: &[PosePair]) -> Tensor {
    let mut out = Vec::with_capacity(data.len() * NUM_JOINTS * 3);
    for p in data {
        out.extend_from_slice(&p.flat3d());
    }
    Tensor::from_vec(data.len(), NUM_JOINTS * 3, out).expect("sized above")
}
