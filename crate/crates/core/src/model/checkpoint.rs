//! JSON checkpoint envelope.
//!
//! ```json
//! { "format_version": 1,
//!   "config": { ...LifterConfig... },
//!   "norm_stats": { ...NormStats... },
//!   "params": [ { "name": "input.linear.weight", "shape": [32, 1024], "data_b64": "..." }, ... ],
//!   "meta": { "epoch": 150, "seed": 7, "loss": { "kind": "mse" }, ... } }
//! ```
//!
//! `data_b64` is the tensor's row-major data as little-endian IEEE-754
//! doubles, base64 (standard alphabet, padded). `params` holds the learnable
//! parameters followed by batch-norm running statistics.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::config::LifterConfig;
use super::lifter::Lifter;
use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::metrics::LossKind;
use crate::nn::Tensor;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epoch: usize,
    pub seed: u64,
    pub loss: Option<LossKind>,
    pub note: String,
}

impl Default for TrainingMeta {
    fn default() -> Self {
        Self {
            epoch: 0,
            seed: 0,
            loss: None,
            note: String::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub data_b64: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: LifterConfig,
    pub norm_stats: NormStats,
    pub params: Vec<TensorRecord>,
    pub meta: TrainingMeta,
}

pub fn encode_tensor(t: &Tensor) -> String {
    let mut bytes = Vec::with_capacity(t.len() * 8);
    for v in t.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

pub fn decode_tensor(name: &str, shape: [usize; 2], b64: &str) -> Result<Tensor> {
    let bytes = STANDARD
        .decode(b64)
        .map_err(|e| Error::Checkpoint(format!("tensor {name}: bad base64: {e}")))?;
    if bytes.len() != shape[0] * shape[1] * 8 {
        return Err(Error::Checkpoint(format!(
            "tensor {name}: {} bytes for shape {shape:?}",
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Tensor::from_vec(shape[0], shape[1], data)
}

impl Checkpoint {
    pub fn from_model(model: &Lifter, norm_stats: &NormStats, meta: TrainingMeta) -> Self {
        let params = model
            .named_tensors()
            .into_iter()
            .map(|(name, t)| TensorRecord {
                name,
                shape: [t.rows(), t.cols()],
                data_b64: encode_tensor(t),
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            config: model.config().clone(),
            norm_stats: norm_stats.clone(),
            params,
            meta,
        }
    }

    /// Rebuilds the model; fails on version, tensor-count, name or shape
    /// disagreement with the embedded config.
    pub fn to_model(&self) -> Result<Lifter> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: self.format_version,
                supported: FORMAT_VERSION,
            });
        }
        self.norm_stats.validate()?;
        let mut model = Lifter::build(&self.config, 0)?;
        let tensors = self
            .params
            .iter()
            .map(|r| Ok((r.name.clone(), decode_tensor(&r.name, r.shape, &r.data_b64)?)))
            .collect::<Result<Vec<_>>>()?;
        model.load_tensors(tensors)?;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        // Check the version before the full parse so a future layout gets a
        // version error rather than a schema error.
        #[derive(Deserialize)]
        struct Probe {
            format_version: u32,
        }
        let probe: Probe = serde_json::from_str(text)
            .map_err(|e| Error::Checkpoint(format!("corrupt payload: {e}")))?;
        if probe.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: probe.format_version,
                supported: FORMAT_VERSION,
            });
        }
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("corrupt payload: {e}")))
    }
}

pub fn save(path: impl AsRef<Path>, model: &Lifter, norm_stats: &NormStats, meta: TrainingMeta) -> Result<()> {
    let json = Checkpoint::from_model(model, norm_stats, meta).to_json()?;
    std::fs::write(path.as_ref(), json)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<(Lifter, Checkpoint)> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let ckpt = Checkpoint::from_json(&text)?;
    let model = ckpt.to_model()?;
    Ok((model, ckpt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{compute_norm_stats, synth_generate, CameraModel, SynthOptions};
    use crate::model::Variant;
    use crate::nn::{Layer, LayerMode};

    fn fixture(variant: Variant) -> (Lifter, NormStats) {
        let data = synth_generate(20, 1, &CameraModel::default(), &SynthOptions::default()).unwrap();
        let stats = compute_norm_stats(&data, "fixture").unwrap();
        let mut m = Lifter::build(&LifterConfig::preset(variant).with_size(16), 5).unwrap();
        // move running stats and beta off their defaults
        let x = stats.inputs(&data).unwrap();
        m.forward(&x, LayerMode::Train).unwrap();
        (m, stats)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for v in [Variant::Original, Variant::V2] {
            let (m, stats) = fixture(v);
            let ck = Checkpoint::from_model(&m, &stats, TrainingMeta::default());
            let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
            let m2 = back.to_model().unwrap();
            assert_eq!(back.norm_stats, stats);
            for ((n1, t1), (n2, t2)) in m.named_tensors().into_iter().zip(m2.named_tensors()) {
                assert_eq!(n1, n2);
                assert!(t1.data().iter().zip(t2.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
            }
            let x = stats.inputs(&synth_generate(4, 9, &CameraModel::default(), &SynthOptions::default()).unwrap()).unwrap();
            assert_eq!(m.infer(&x).unwrap(), m2.infer(&x).unwrap());
        }
    }

    #[test]
    fn tensor_count_mismatch_rejected() {
        let (m, stats) = fixture(Variant::V1);
        let mut ck = Checkpoint::from_model(&m, &stats, TrainingMeta::default());
        ck.params.pop();
        let err = ck.to_model().unwrap_err().to_string();
        assert!(err.contains("tensors"), "{err}");
    }

    #[test]
    fn shape_mismatch_rejected() {
        let (m, stats) = fixture(Variant::V1);
        let mut ck = Checkpoint::from_model(&m, &stats, TrainingMeta::default());
        ck.config.linear_size = 17;
        assert!(ck.to_model().is_err());
    }

    #[test]
    fn future_version_rejected() {
        let (m, stats) = fixture(Variant::Original);
        let mut ck = Checkpoint::from_model(&m, &stats, TrainingMeta::default());
        ck.format_version = FORMAT_VERSION + 1;
        let json = serde_json::to_string(&ck).unwrap();
        assert!(matches!(
            Checkpoint::from_json(&json),
            Err(Error::UnsupportedVersion { found: 2, supported: 1 })
        ));
    }

    #[test]
    fn corrupt_payload_rejected() {
        assert!(matches!(Checkpoint::from_json("{not json"), Err(Error::Checkpoint(_))));
        let (m, stats) = fixture(Variant::Original);
        let mut ck = Checkpoint::from_model(&m, &stats, TrainingMeta::default());
        ck.params[0].data_b64.truncate(12);
        assert!(ck.to_model().is_err());
    }

    #[test]
    fn encoding_is_little_endian() {
        let t = Tensor::from_vec(1, 1, vec![1.0]).unwrap();
        let bytes = STANDARD.decode(encode_tensor(&t)).unwrap();
        assert_eq!(bytes, 1.0f64.to_le_bytes());
    }
}
