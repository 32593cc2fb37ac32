use super::rng::SeededRng;
use super::{Layer, LayerMode, Param, Tensor};
use crate::error::{Error, Result};

/// Affine map `x·W + b` with `W: in×out`, `b: 1×out`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Linear {
    /// Kaiming-uniform weights in `±√(6/fan_in)`, zero bias.
    pub fn new(prefix: &str, fan_in: usize, fan_out: usize, rng: &mut SeededRng) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.uniform(-bound, bound))
            .collect();
        let w = Tensor::from_vec(fan_in, fan_out, data).expect("sized above");
        Self::from_parts(prefix, w, Tensor::zeros(1, fan_out))
    }

    pub fn from_parts(prefix: &str, weight: Tensor, bias: Tensor) -> Self {
        Self {
            weight: Param::new(format!("{prefix}.weight"), weight),
            bias: Param::new(format!("{prefix}.bias"), bias),
            input: None,
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.cols()
    }

    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        x.matmul(&self.weight.value)?.add_row(&self.bias.value)
    }
}

impl Layer for Linear {
    fn forward(&mut self, x: &Tensor, _mode: LayerMode) -> Result<Tensor> {
        let y = self.apply(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::Config("linear backward before forward".into()))?;
        self.weight.grad.add_assign(&x.t_matmul(grad_out)?)?;
        self.bias.grad.add_assign(&grad_out.col_sums())?;
        grad_out.matmul_t(&self.weight.value)
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.apply(x)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}
