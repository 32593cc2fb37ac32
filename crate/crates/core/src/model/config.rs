use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::batch_norm_defaults;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Original,
    V1,
    V2,
    V3,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Original, Variant::V1, Variant::V2, Variant::V3];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::V1 => "v1",
            Variant::V2 => "v2",
            Variant::V3 => "v3",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "original" => Ok(Variant::Original),
            "v1" => Ok(Variant::V1),
            "v2" => Ok(Variant::V2),
            "v3" => Ok(Variant::V3),
            _ => Err(format!("unknown variant {s:?} (expected original, v1, v2 or v3)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Relu,
    Swish,
}

/// Whether all Swish sites share one β or each learns its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwishSharing {
    #[default]
    Shared,
    PerLayer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifterConfig {
    pub num_joints: usize,
    pub linear_size: usize,
    pub num_blocks: usize,
    /// One more linear + batch-norm stage between the input projection and
    /// the residual blocks.
    pub extra_layer: bool,
    pub activation: ActivationKind,
    pub dropout_rate: f64,
    pub variant: Variant,
    #[serde(default)]
    pub swish_sharing: SwishSharing,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl LifterConfig {
    /// Architecture preset for a variant. V3 shares V2's architecture and
    /// differs only in its training loss.
    pub fn preset(variant: Variant) -> Self {
        let (extra_layer, activation) = match variant {
            Variant::Original => (false, ActivationKind::Relu),
            Variant::V1 => (true, ActivationKind::Relu),
            Variant::V2 | Variant::V3 => (true, ActivationKind::Swish),
        };
        let (bn_momentum, bn_eps) = batch_norm_defaults();
        Self {
            num_joints: 16,
            linear_size: 1024,
            num_blocks: 2,
            extra_layer,
            activation,
            dropout_rate: 0.5,
            variant,
            swish_sharing: SwishSharing::Shared,
            bn_momentum,
            bn_eps,
        }
    }

    pub fn with_size(mut self, linear_size: usize) -> Self {
        self.linear_size = linear_size;
        self
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    pub fn input_dim(&self) -> usize {
        2 * self.num_joints
    }

    pub fn output_dim(&self) -> usize {
        3 * self.num_joints
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_joints == 0 {
            return Err(Error::Config("num_joints must be >= 1".into()));
        }
        if self.linear_size == 0 {
            return Err(Error::Config("linear_size must be >= 1".into()));
        }
        if self.num_blocks == 0 {
            return Err(Error::Config("num_blocks must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum < 1.0) {
            return Err(Error::Config(format!("bn_momentum must be in (0, 1), got {}", self.bn_momentum)));
        }
        if !(self.bn_eps > 0.0) {
            return Err(Error::Config(format!("bn_eps must be > 0, got {}", self.bn_eps)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_differ_as_documented() {
        let o = LifterConfig::preset(Variant::Original);
        let v1 = LifterConfig::preset(Variant::V1);
        let v2 = LifterConfig::preset(Variant::V2);
        let v3 = LifterConfig::preset(Variant::V3);
        assert!(!o.extra_layer && v1.extra_layer);
        assert_eq!(o.activation, v1.activation);
        assert_eq!(v1.extra_layer, v2.extra_layer);
        assert_eq!(v2.activation, ActivationKind::Swish);
        assert_eq!(LifterConfig { variant: Variant::V2, ..v3 }, v2);
    }

    #[test]
    fn validation() {
        let c = LifterConfig::preset(Variant::V1);
        assert!(c.validate().is_ok());
        assert!(LifterConfig { linear_size: 0, ..c.clone() }.validate().is_err());
        assert!(LifterConfig { num_blocks: 0, ..c.clone() }.validate().is_err());
        assert!(LifterConfig { dropout_rate: 1.0, ..c }.validate().is_err());
    }

    #[test]
    fn variant_names() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("v4".parse::<Variant>().is_err());
    }
}
