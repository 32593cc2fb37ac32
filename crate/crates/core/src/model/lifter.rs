//! The lifting network.
//!
//! ```text
//! x (batch × 2J)
//!   └ input stage:  linear(2J→S) → BN → act → dropout
//!   └ extra stage:  linear(S→S)  → BN → act → dropout        (V1, V2, V3)
//!   └ block × N:    h = stage(stage(x)); x = x + h
//!   └ output:       linear(S→3J)
//! ```

use super::config::{ActivationKind, LifterConfig, SwishSharing};
use crate::error::{Error, Result};
use crate::nn::rng::SeededRng;
use crate::nn::{BatchNorm, Dropout, Layer, LayerMode, Linear, Param, Relu, Swish, Tensor};

pub const SHARED_BETA_NAME: &str = "swish.beta";

#[derive(Debug, Clone)]
pub enum Activation {
    Relu(Relu),
    Swish(Swish),
}

impl Activation {
    fn as_layer(&self) -> &dyn Layer {
        match self {
            Activation::Relu(l) => l,
            Activation::Swish(l) => l,
        }
    }

    fn as_layer_mut(&mut self) -> &mut dyn Layer {
        match self {
            Activation::Relu(l) => l,
            Activation::Swish(l) => l,
        }
    }

    fn infer_with(&self, x: &Tensor, beta: Option<f64>) -> Result<Tensor> {
        match (self, beta) {
            (Activation::Swish(_), Some(b)) => Ok(x.map(|v| crate::nn::swish(v, b))),
            _ => self.as_layer().infer(x),
        }
    }

    pub fn swish_mut(&mut self) -> Option<&mut Swish> {
        match self {
            Activation::Swish(s) => Some(s),
            Activation::Relu(_) => None,
        }
    }
}

/// linear → batch norm → activation → dropout.
#[derive(Debug, Clone)]
pub struct Stage {
    pub linear: Linear,
    pub bn: BatchNorm,
    pub act: Activation,
    pub dropout: Dropout,
}

impl Stage {
    fn new(prefix: &str, fan_in: usize, fan_out: usize, cfg: &LifterConfig, rng: &mut SeededRng) -> Result<Self> {
        let linear = Linear::new(&format!("{prefix}.linear"), fan_in, fan_out, rng);
        let bn = BatchNorm::with_options(&format!("{prefix}.bn"), fan_out, cfg.bn_momentum, cfg.bn_eps);
        let act = match cfg.activation {
            ActivationKind::Relu => Activation::Relu(Relu::new()),
            ActivationKind::Swish => Activation::Swish(Swish::new(format!("{prefix}.swish.beta"))),
        };
        let dropout = Dropout::new(cfg.dropout_rate, rng.fork())?;
        Ok(Self { linear, bn, act, dropout })
    }

    fn infer_with(&self, x: &Tensor, beta: Option<f64>) -> Result<Tensor> {
        let h = self.linear.infer(x)?;
        let h = self.bn.infer(&h)?;
        self.act.infer_with(&h, beta)
    }

    fn params_filtered(&self, with_beta: bool) -> Vec<&Param> {
        let mut v = self.linear.params();
        v.extend(self.bn.params());
        if with_beta {
            v.extend(self.act.as_layer().params());
        }
        v
    }

    fn params_filtered_mut(&mut self, with_beta: bool) -> Vec<&mut Param> {
        let mut v = self.linear.params_mut();
        v.extend(self.bn.params_mut());
        if with_beta {
            v.extend(self.act.as_layer_mut().params_mut());
        }
        v
    }
}

impl Layer for Stage {
    fn forward(&mut self, x: &Tensor, mode: LayerMode) -> Result<Tensor> {
        let h = self.linear.forward(x, mode)?;
        let h = self.bn.forward(&h, mode)?;
        let h = self.act.as_layer_mut().forward(&h, mode)?;
        self.dropout.forward(&h, mode)
    }

    fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        let g = self.dropout.backward(g)?;
        let g = self.act.as_layer_mut().backward(&g)?;
        let g = self.bn.backward(&g)?;
        self.linear.backward(&g)
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.infer_with(x, None)
    }

    fn params(&self) -> Vec<&Param> {
        self.params_filtered(true)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.params_filtered_mut(true)
    }

    fn set_mask_frozen(&mut self, frozen: bool) {
        self.dropout.set_mask_frozen(frozen);
    }
}

/// Two stages with an additive skip connection around them.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub first: Stage,
    pub second: Stage,
}

impl ResidualBlock {
    fn infer_with(&self, x: &Tensor, beta: Option<f64>) -> Result<Tensor> {
        let h = self.second.infer_with(&self.first.infer_with(x, beta)?, beta)?;
        x.add(&h)
    }
}

impl Layer for ResidualBlock {
    fn forward(&mut self, x: &Tensor, mode: LayerMode) -> Result<Tensor> {
        let h = self.first.forward(x, mode)?;
        let h = self.second.forward(&h, mode)?;
        x.add(&h)
    }

    fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        let inner = self.second.backward(g)?;
        let inner = self.first.backward(&inner)?;
        g.add(&inner)
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.infer_with(x, None)
    }

    fn params(&self) -> Vec<&Param> {
        let mut v = self.first.params();
        v.extend(self.second.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.first.params_mut();
        v.extend(self.second.params_mut());
        v
    }

    fn set_mask_frozen(&mut self, frozen: bool) {
        self.first.set_mask_frozen(frozen);
        self.second.set_mask_frozen(frozen);
    }
}

#[derive(Debug, Clone)]
pub struct Lifter {
    config: LifterConfig,
    pub input: Stage,
    pub extra: Option<Stage>,
    pub blocks: Vec<ResidualBlock>,
    pub output: Linear,
    shared_beta: Option<Param>,
}

impl Lifter {
    /// Builds the network for `config`, initializing weights and dropout
    /// streams from `seed` in layer order.
    pub fn build(config: &LifterConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::new(seed);
        let s = config.linear_size;
        let input = Stage::new("input", config.input_dim(), s, config, &mut rng)?;
        let extra = if config.extra_layer {
            Some(Stage::new("extra", s, s, config, &mut rng)?)
        } else {
            None
        };
        let mut blocks = Vec::with_capacity(config.num_blocks);
        for i in 0..config.num_blocks {
            let first = Stage::new(&format!("block{i}.a"), s, s, config, &mut rng)?;
            let second = Stage::new(&format!("block{i}.b"), s, s, config, &mut rng)?;
            blocks.push(ResidualBlock { first, second });
        }
        let output = Linear::new("output.linear", s, config.output_dim(), &mut rng);
        let shared_beta = (config.activation == ActivationKind::Swish
            && config.swish_sharing == SwishSharing::Shared)
            .then(|| Param::new(SHARED_BETA_NAME, Tensor::filled(1, 1, 1.0)));
        Ok(Self {
            config: config.clone(),
            input,
            extra,
            blocks,
            output,
            shared_beta,
        })
    }

    pub fn config(&self) -> &LifterConfig {
        &self.config
    }

    pub fn stages(&self) -> Vec<&Stage> {
        let mut v = vec![&self.input];
        v.extend(self.extra.as_ref());
        for b in &self.blocks {
            v.push(&b.first);
            v.push(&b.second);
        }
        v
    }

    pub fn stages_mut(&mut self) -> Vec<&mut Stage> {
        let mut v = vec![&mut self.input];
        v.extend(self.extra.as_mut());
        for b in &mut self.blocks {
            v.push(&mut b.first);
            v.push(&mut b.second);
        }
        v
    }

    /// Current β values, one per Swish site (all equal when shared).
    pub fn swish_betas(&self) -> Vec<f64> {
        self.stages()
            .iter()
            .filter_map(|s| match &s.act {
                Activation::Swish(sw) => Some(sw.beta_value()),
                Activation::Relu(_) => None,
            })
            .collect()
    }

    fn sync_shared_beta(&mut self) {
        if let Some(beta) = self.shared_beta.as_ref().map(|p| p.value.data()[0]) {
            for s in self.stages_mut() {
                if let Some(sw) = s.act.swish_mut() {
                    sw.set_beta(beta);
                }
            }
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.config.input_dim() {
            return Err(Error::Shape {
                op: "lifter forward",
                left: x.shape(),
                right: (x.rows(), self.config.input_dim()),
            });
        }
        x.ensure_finite("lifter input")
    }

    /// Every stored tensor (learnable parameters followed by batch-norm
    /// running statistics) with its checkpoint name.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut v: Vec<(String, &Tensor)> = self
            .params()
            .into_iter()
            .map(|p| (p.name.clone(), &p.value))
            .collect();
        for s in self.stages() {
            let prefix = s.bn.gamma.name.trim_end_matches(".gamma").to_string();
            v.push((format!("{prefix}.running_mean"), &s.bn.running_mean));
            v.push((format!("{prefix}.running_var"), &s.bn.running_var));
        }
        v
    }

    pub(crate) fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        // Collect names first; the borrow split below mirrors named_tensors.
        let stage_prefixes: Vec<String> = self
            .stages()
            .iter()
            .map(|s| s.bn.gamma.name.trim_end_matches(".gamma").to_string())
            .collect();
        let shared = self.shared_beta.is_some();
        let mut v: Vec<(String, &mut Tensor)> = Vec::new();
        let mut stats: Vec<(String, &mut Tensor)> = Vec::new();
        let mut stages = vec![&mut self.input];
        stages.extend(self.extra.as_mut());
        for b in &mut self.blocks {
            stages.push(&mut b.first);
            stages.push(&mut b.second);
        }
        for (stage, prefix) in stages.into_iter().zip(stage_prefixes) {
            for p in stage.linear.params_mut() {
                v.push((p.name.clone(), &mut p.value));
            }
            let bn = &mut stage.bn;
            v.push((bn.gamma.name.clone(), &mut bn.gamma.value));
            v.push((bn.beta.name.clone(), &mut bn.beta.value));
            if !shared {
                if let Activation::Swish(sw) = &mut stage.act {
                    v.push((sw.beta.name.clone(), &mut sw.beta.value));
                }
            }
            stats.push((format!("{prefix}.running_mean"), &mut bn.running_mean));
            stats.push((format!("{prefix}.running_var"), &mut bn.running_var));
        }
        for p in self.output.params_mut() {
            v.push((p.name.clone(), &mut p.value));
        }
        if let Some(p) = self.shared_beta.as_mut() {
            v.push((p.name.clone(), &mut p.value));
        }
        v.extend(stats);
        v
    }

    /// Overwrites every tensor from `(name, tensor)` pairs. The set of names
    /// and every shape must match the architecture exactly.
    pub fn load_tensors(&mut self, tensors: Vec<(String, Tensor)>) -> Result<()> {
        let mut slots = self.named_tensors_mut();
        if slots.len() != tensors.len() {
            return Err(Error::Checkpoint(format!(
                "config implies {} tensors, checkpoint has {}",
                slots.len(),
                tensors.len()
            )));
        }
        for (name, t) in tensors {
            let slot = slots
                .iter_mut()
                .find(|(n, _)| *n == name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor {name}")))?;
            if slot.1.shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name}: shape {:?} does not match config shape {:?}",
                    t.shape(),
                    slot.1.shape()
                )));
            }
            *slot.1 = t;
        }
        drop(slots);
        self.sync_shared_beta();
        Ok(())
    }
}

impl Layer for Lifter {
    fn forward(&mut self, x: &Tensor, mode: LayerMode) -> Result<Tensor> {
        self.check_input(x)?;
        self.sync_shared_beta();
        let mut h = self.input.forward(x, mode)?;
        if let Some(extra) = self.extra.as_mut() {
            h = extra.forward(&h, mode)?;
        }
        for b in &mut self.blocks {
            h = b.forward(&h, mode)?;
        }
        self.output.forward(&h, mode)
    }

    fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        let mut g = self.output.backward(g)?;
        for b in self.blocks.iter_mut().rev() {
            g = b.backward(&g)?;
        }
        if let Some(extra) = self.extra.as_mut() {
            g = extra.backward(&g)?;
        }
        let g = self.input.backward(&g)?;
        if self.shared_beta.is_some() {
            let mut total = 0.0;
            for s in self.stages_mut() {
                if let Some(sw) = s.act.swish_mut() {
                    total += sw.beta.grad.data()[0];
                    sw.beta.zero_grad();
                }
            }
            if let Some(p) = self.shared_beta.as_mut() {
                p.grad.data_mut()[0] += total;
            }
        }
        Ok(g)
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let beta = self.shared_beta.as_ref().map(|p| p.value.data()[0]);
        let mut h = self.input.infer_with(x, beta)?;
        if let Some(extra) = &self.extra {
            h = extra.infer_with(&h, beta)?;
        }
        for b in &self.blocks {
            h = b.infer_with(&h, beta)?;
        }
        self.output.infer(&h)
    }

    fn params(&self) -> Vec<&Param> {
        let with_beta = self.shared_beta.is_none();
        let mut v = Vec::new();
        for s in self.stages() {
            v.extend(s.params_filtered(with_beta));
        }
        v.extend(self.output.params());
        v.extend(self.shared_beta.as_ref());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let with_beta = self.shared_beta.is_none();
        let mut v = Vec::new();
        v.extend(self.input.params_filtered_mut(with_beta));
        if let Some(e) = self.extra.as_mut() {
            v.extend(e.params_filtered_mut(with_beta));
        }
        for b in &mut self.blocks {
            v.extend(b.first.params_filtered_mut(with_beta));
            v.extend(b.second.params_filtered_mut(with_beta));
        }
        v.extend(self.output.params_mut());
        v.extend(self.shared_beta.as_mut());
        v
    }

    fn set_mask_frozen(&mut self, frozen: bool) {
        for s in self.stages_mut() {
            s.set_mask_frozen(frozen);
        }
    }

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
        for s in self.stages_mut() {
            if let Some(sw) = s.act.swish_mut() {
                sw.beta.zero_grad();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;
    use std::collections::HashSet;

    fn small(variant: Variant) -> LifterConfig {
        LifterConfig::preset(variant).with_size(24).with_dropout(0.0)
    }

    fn input(rows: usize, seed: u64) -> Tensor {
        let mut rng = SeededRng::new(seed);
        Tensor::from_vec(rows, 32, (0..rows * 32).map(|_| rng.uniform(-2.0, 2.0)).collect()).unwrap()
    }

    #[test]
    fn parameter_counts_full_size() {
        let count = |v| Lifter::build(&LifterConfig::preset(v), 0).unwrap().num_params();
        let original = count(Variant::Original);
        // 33,792 + 5·2,048 + 4·1,049,600 + 49,200
        assert_eq!(original, 4_291_632);
        assert_eq!(count(Variant::V1) - original, 1024 * 1024 + 1024 + 2048);
        assert_eq!(count(Variant::V2), count(Variant::V1) + 1);
        assert_eq!(count(Variant::V3), count(Variant::V2));
    }

    #[test]
    fn per_layer_beta_option() {
        let mut cfg = small(Variant::V2);
        cfg.swish_sharing = SwishSharing::PerLayer;
        let per = Lifter::build(&cfg, 0).unwrap();
        let shared = Lifter::build(&small(Variant::V2), 0).unwrap();
        // input + extra + 2 blocks × 2 stages = 6 Swish sites
        assert_eq!(per.num_params(), shared.num_params() - 1 + 6);
    }

    #[test]
    fn names_are_unique() {
        for v in Variant::ALL {
            let m = Lifter::build(&small(v), 1).unwrap();
            let names: Vec<String> = m.named_tensors().into_iter().map(|(n, _)| n).collect();
            let set: HashSet<&String> = names.iter().collect();
            assert_eq!(set.len(), names.len());
        }
    }

    #[test]
    fn output_shape() {
        let mut m = Lifter::build(&small(Variant::V1), 2).unwrap();
        let y = m.forward(&input(5, 3), LayerMode::Train).unwrap();
        assert_eq!(y.shape(), (5, 48));
        assert!(m.forward(&Tensor::zeros(5, 30), LayerMode::Train).is_err());
        let mut bad = input(2, 3);
        bad.set(0, 0, f64::NAN);
        assert!(m.forward(&bad, LayerMode::Eval).is_err());
    }

    #[test]
    fn zeroed_block_is_identity() {
        let mut m = Lifter::build(&small(Variant::V2), 3).unwrap();
        for b in &mut m.blocks {
            for s in [&mut b.first, &mut b.second] {
                s.linear.weight.value.fill(0.0);
                s.linear.bias.value.fill(0.0);
                s.bn.gamma.value.fill(0.0);
                s.bn.beta.value.fill(0.0);
            }
        }
        let x = Tensor::from_vec(4, 24, (0..96).map(|i| i as f64 * 0.1 - 3.0).collect()).unwrap();
        for b in &mut m.blocks {
            assert_eq!(b.forward(&x, LayerMode::Train).unwrap(), x);
            assert_eq!(b.infer(&x).unwrap(), x);
        }
    }

    #[test]
    fn eval_batch_of_one() {
        let mut m = Lifter::build(&small(Variant::Original), 4).unwrap();
        let y = m.forward(&input(1, 5), LayerMode::Eval).unwrap();
        assert_eq!(y.shape(), (1, 48));
        assert!(m.forward(&input(1, 5), LayerMode::Train).is_err());
    }

    #[test]
    fn eval_forward_equals_infer_and_is_row_independent() {
        let mut m = Lifter::build(&small(Variant::V2), 5).unwrap();
        m.forward(&input(8, 1), LayerMode::Train).unwrap();
        let x = input(6, 9);
        let a = m.forward(&x, LayerMode::Eval).unwrap();
        let b = m.infer(&x).unwrap();
        assert_eq!(a, b);
        let single = m.infer(&x.gather_rows(&[2])).unwrap();
        assert_eq!(single.row(0), a.row(2));
    }

    #[test]
    fn same_seed_same_model() {
        let a = Lifter::build(&small(Variant::V1), 42).unwrap();
        let b = Lifter::build(&small(Variant::V1), 42).unwrap();
        let x = input(3, 0);
        assert_eq!(a.infer(&x).unwrap(), b.infer(&x).unwrap());
        let c = Lifter::build(&small(Variant::V1), 43).unwrap();
        assert_ne!(a.infer(&x).unwrap(), c.infer(&x).unwrap());
    }

    #[test]
    fn shared_beta_collects_all_sites() {
        let mut m = Lifter::build(&small(Variant::V2), 6).unwrap();
        let x = input(4, 2);
        m.zero_grad();
        let y = m.forward(&x, LayerMode::Train).unwrap();
        m.backward(&Tensor::filled(y.rows(), y.cols(), 1.0)).unwrap();
        let beta = m.params().into_iter().find(|p| p.name == SHARED_BETA_NAME).unwrap();
        assert!(beta.grad.data()[0] != 0.0);
        m.params_mut().into_iter().find(|p| p.name == SHARED_BETA_NAME).unwrap().value.fill(1.7);
        m.forward(&x, LayerMode::Train).unwrap();
        assert!(m.swish_betas().iter().all(|&b| b == 1.7));
    }
}
