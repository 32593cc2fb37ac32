use super::rng::SeededRng;
use super::{Layer, LayerMode, Tensor};
use crate::error::{Error, Result};

/// Inverted dropout: in Train mode each unit is zeroed with probability
/// `rate` and survivors are scaled by `1/(1-rate)`. Eval mode is the
/// identity.
#[derive(Debug, Clone)]
pub struct Dropout {
    rate: f64,
    rng: SeededRng,
    mask: Option<Tensor>,
    frozen: bool,
}

impl Dropout {
    pub fn new(rate: f64, rng: SeededRng) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        Ok(Self {
            rate,
            rng,
            mask: None,
            frozen: false,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    fn draw_mask(&mut self, rows: usize, cols: usize) -> Tensor {
        let keep = 1.0 / (1.0 - self.rate);
        let data = (0..rows * cols)
            .map(|_| if self.rng.unit() < self.rate { 0.0 } else { keep })
            .collect();
        Tensor::from_vec(rows, cols, data).expect("sized above")
    }
}

impl Layer for Dropout {
    fn forward(&mut self, x: &Tensor, mode: LayerMode) -> Result<Tensor> {
        if mode == LayerMode::Eval || self.rate == 0.0 {
            self.mask = None;
            return Ok(x.clone());
        }
        let reuse = self.frozen && self.mask.as_ref().is_some_and(|m| m.shape() == x.shape());
        if !reuse {
            self.mask = Some(self.draw_mask(x.rows(), x.cols()));
        }
        x.zip_map(self.mask.as_ref().expect("set above"), |a, m| a * m)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        match &self.mask {
            None => Ok(grad_out.clone()),
            Some(mask) => grad_out.zip_map(mask, |g, m| g * m),
        }
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.clone())
    }

    fn set_mask_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }
}
