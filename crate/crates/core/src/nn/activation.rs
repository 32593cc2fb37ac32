use super::{Layer, LayerMode, Param, Tensor};
use crate::error::{Error, Result};

/// Logistic sigmoid, evaluated without overflow for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// `x·σ(βx)`.
pub fn swish(x: f64, beta: f64) -> f64 {
    x * sigmoid(beta * x)
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    input: Option<Tensor>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for Relu {
    fn forward(&mut self, x: &Tensor, _mode: LayerMode) -> Result<Tensor> {
        self.input = Some(x.clone());
        Ok(x.map(relu))
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::Config("relu backward before forward".into()))?;
        grad_out.zip_map(x, |g, x| if x > 0.0 { g } else { 0.0 })
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.map(relu))
    }
}

/// Swish with a learnable scalar β (stored as a 1×1 parameter).
///
/// Backward:
/// - `∂f/∂x = σ(βx) + βx·σ(βx)(1−σ(βx))`
/// - `∂f/∂β = x²·σ(βx)(1−σ(βx))`, summed over every element into `beta.grad`.
#[derive(Debug, Clone)]
pub struct Swish {
    pub beta: Param,
    cache: Option<(Tensor, Tensor)>,
}

impl Swish {
    pub fn new(name: impl Into<String>) -> Self {
        Self::with_beta(name, 1.0)
    }

    pub fn with_beta(name: impl Into<String>, beta: f64) -> Self {
        Self {
            beta: Param::new(name, Tensor::filled(1, 1, beta)),
            cache: None,
        }
    }

    pub fn beta_value(&self) -> f64 {
        self.beta.value.data()[0]
    }

    pub fn set_beta(&mut self, beta: f64) {
        self.beta.value.data_mut()[0] = beta;
    }
}

impl Layer for Swish {
    fn forward(&mut self, x: &Tensor, _mode: LayerMode) -> Result<Tensor> {
        let beta = self.beta_value();
        let sig = x.map(|v| sigmoid(beta * v));
        let y = x.zip_map(&sig, |v, s| v * s)?;
        self.cache = Some((x.clone(), sig));
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let (x, sig) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Config("swish backward before forward".into()))?;
        if grad_out.shape() != x.shape() {
            return Err(Error::Shape {
                op: "swish backward",
                left: grad_out.shape(),
                right: x.shape(),
            });
        }
        let beta = self.beta_value();
        let mut dbeta = 0.0;
        let mut dx = Tensor::zeros(x.rows(), x.cols());
        for (((d, &g), &xv), &s) in dx
            .data_mut()
            .iter_mut()
            .zip(grad_out.data())
            .zip(x.data())
            .zip(sig.data())
        {
            let ds = s * (1.0 - s);
            *d = g * (s + beta * xv * ds);
            dbeta += g * xv * xv * ds;
        }
        self.beta.grad.data_mut()[0] += dbeta;
        Ok(dx)
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let beta = self.beta_value();
        Ok(x.map(|v| swish(v, beta)))
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.beta]
    }
}
