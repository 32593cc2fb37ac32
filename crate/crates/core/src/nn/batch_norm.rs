use super::{Layer, LayerMode, Param, Tensor};
use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

/// Per-feature batch normalization over the batch (row) axis.
///
/// Train mode normalizes with the batch mean and biased variance and folds
/// them into the running statistics as
/// `running = (1 - momentum)·running + momentum·batch`. Eval mode uses the
/// running statistics only, so each output row depends on its own input
/// row alone.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<Cache>,
}

#[derive(Debug, Clone)]
struct Cache {
    mode: LayerMode,
    x_hat: Tensor,
    inv_std: Vec<f64>,
}

impl BatchNorm {
    pub fn new(prefix: &str, features: usize) -> Self {
        Self::with_options(prefix, features, DEFAULT_MOMENTUM, DEFAULT_EPS)
    }

    pub fn with_options(prefix: &str, features: usize, momentum: f64, eps: f64) -> Self {
        Self {
            gamma: Param::new(format!("{prefix}.gamma"), Tensor::filled(1, features, 1.0)),
            beta: Param::new(format!("{prefix}.beta"), Tensor::zeros(1, features)),
            running_mean: Tensor::zeros(1, features),
            running_var: Tensor::filled(1, features, 1.0),
            momentum,
            eps,
            cache: None,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.value.cols()
    }

    fn check_width(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.features() {
            return Err(Error::Shape {
                op: "batch_norm",
                left: x.shape(),
                right: self.gamma.value.shape(),
            });
        }
        Ok(())
    }

    /// Batch mean and biased variance per feature (two-pass).
    pub fn batch_stats(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
        let n = x.rows() as f64;
        let mean: Vec<f64> = x.col_sums().data().iter().map(|s| s / n).collect();
        let mut var = vec![0.0; x.cols()];
        for r in 0..x.rows() {
            for ((v, &xi), &m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                let d = xi - m;
                *v += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= n);
        (mean, var)
    }

    fn normalize(&self, x: &Tensor, mean: &[f64], inv_std: &[f64]) -> (Tensor, Tensor) {
        let mut x_hat = x.clone();
        for r in 0..x.rows() {
            for ((v, &m), &s) in x_hat.row_mut(r).iter_mut().zip(mean).zip(inv_std) {
                *v = (*v - m) * s;
            }
        }
        let g = self.gamma.value.data();
        let b = self.beta.value.data();
        let mut y = x_hat.clone();
        for r in 0..y.rows() {
            for ((v, &g), &b) in y.row_mut(r).iter_mut().zip(g).zip(b) {
                *v = g * *v + b;
            }
        }
        (x_hat, y)
    }

    fn eval_inv_std(&self) -> Vec<f64> {
        self.running_var
            .data()
            .iter()
            .map(|v| 1.0 / (v + self.eps).sqrt())
            .collect()
    }
}

impl Layer for BatchNorm {
    fn forward(&mut self, x: &Tensor, mode: LayerMode) -> Result<Tensor> {
        self.check_width(x)?;
        match mode {
            LayerMode::Train => {
                if x.rows() < 2 {
                    return Err(Error::BatchTooSmall(x.rows()));
                }
                let (mean, var) = Self::batch_stats(x);
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
                let (x_hat, y) = self.normalize(x, &mean, &inv_std);
                let m = self.momentum;
                for (r, &b) in self.running_mean.data_mut().iter_mut().zip(&mean) {
                    *r = (1.0 - m) * *r + m * b;
                }
                for (r, &b) in self.running_var.data_mut().iter_mut().zip(&var) {
                    *r = (1.0 - m) * *r + m * b;
                }
                self.cache = Some(Cache {
                    mode,
                    x_hat,
                    inv_std,
                });
                Ok(y)
            }
            LayerMode::Eval => {
                let inv_std = self.eval_inv_std();
                let (x_hat, y) = self.normalize(x, self.running_mean.data(), &inv_std);
                self.cache = Some(Cache {
                    mode,
                    x_hat,
                    inv_std,
                });
                Ok(y)
            }
        }
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Config("batch norm backward before forward".into()))?;
        let x_hat = &cache.x_hat;
        if grad_out.shape() != x_hat.shape() {
            return Err(Error::Shape {
                op: "batch_norm backward",
                left: grad_out.shape(),
                right: x_hat.shape(),
            });
        }
        let d = self.features();
        let mut dgamma = vec![0.0; d];
        let mut dbeta = vec![0.0; d];
        for r in 0..grad_out.rows() {
            for c in 0..d {
                let g = grad_out.get(r, c);
                dgamma[c] += g * x_hat.get(r, c);
                dbeta[c] += g;
            }
        }
        for (acc, v) in self.gamma.grad.data_mut().iter_mut().zip(&dgamma) {
            *acc += v;
        }
        for (acc, v) in self.beta.grad.data_mut().iter_mut().zip(&dbeta) {
            *acc += v;
        }

        let gamma = self.gamma.value.data();
        let mut dx = Tensor::zeros(grad_out.rows(), d);
        match cache.mode {
            LayerMode::Eval => {
                for r in 0..grad_out.rows() {
                    for c in 0..d {
                        dx.set(r, c, grad_out.get(r, c) * gamma[c] * cache.inv_std[c]);
                    }
                }
            }
            LayerMode::Train => {
                // dx = inv_std/N · (N·dx̂ − Σdx̂ − x̂·Σ(dx̂·x̂)), with dx̂ = g·γ
                // and Σ(dx̂) = γ·dβ, Σ(dx̂·x̂) = γ·dγ.
                let n = grad_out.rows() as f64;
                for r in 0..grad_out.rows() {
                    for c in 0..d {
                        let dxh = grad_out.get(r, c) * gamma[c];
                        let v = cache.inv_std[c] / n
                            * (n * dxh - gamma[c] * dbeta[c] - x_hat.get(r, c) * gamma[c] * dgamma[c]);
                        dx.set(r, c, v);
                    }
                }
            }
        }
        Ok(dx)
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.check_width(x)?;
        let inv_std = self.eval_inv_std();
        Ok(self.normalize(x, self.running_mean.data(), &inv_std).1)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::rng::SeededRng;

    #[test]
    fn two_point_batch() {
        let mut bn = BatchNorm::new("bn", 1);
        let x = Tensor::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
        let y = bn.forward(&x, LayerMode::Train).unwrap();
        let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y.get(0, 0) + expect).abs() < 1e-15);
        assert!((y.get(1, 0) - expect).abs() < 1e-15);
        assert!((expect - 0.999995).abs() < 1e-9);
    }

    #[test]
    fn constant_batch_maps_to_zero() {
        let mut bn = BatchNorm::new("bn", 1);
        let x = Tensor::from_rows(&[vec![5.0], vec![5.0]]).unwrap();
        let y = bn.forward(&x, LayerMode::Train).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0]);
    }

    #[test]
    fn eval_with_unit_stats_is_near_identity() {
        let mut bn = BatchNorm::new("bn", 3);
        let x = Tensor::from_rows(&[vec![0.5, -2.0, 10.0]]).unwrap();
        let y = bn.forward(&x, LayerMode::Eval).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            // scale factor 1/sqrt(1+1e-5) ≈ 1 - 5e-6
            assert!((a - b).abs() <= a.abs() * 6e-6);
        }
    }

    #[test]
    fn single_sample_train_is_rejected() {
        let mut bn = BatchNorm::new("bn", 2);
        let err = bn.forward(&Tensor::zeros(1, 2), LayerMode::Train).unwrap_err();
        assert!(matches!(err, Error::BatchTooSmall(1)));
        // Eval mode is fine with a batch of one.
        assert!(bn.forward(&Tensor::zeros(1, 2), LayerMode::Eval).is_ok());
    }

    #[test]
    fn train_output_is_standardized() {
        let mut rng = SeededRng::new(2);
        let data = (0..64 * 5).map(|_| rng.uniform(-30.0, 70.0)).collect();
        let x = Tensor::from_vec(64, 5, data).unwrap();
        let mut bn = BatchNorm::new("bn", 5);
        let y = bn.forward(&x, LayerMode::Train).unwrap();
        let (mean, var) = BatchNorm::batch_stats(&y);
        for (m, v) in mean.iter().zip(&var) {
            assert!(m.abs() < 1e-9);
            // variance here is ~800, so the epsilon shortfall is ~1e-8
            assert!((v - 1.0).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut bn = BatchNorm::new("bn", 1);
        let x = Tensor::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
        bn.forward(&x, LayerMode::Train).unwrap();
        assert!((bn.running_mean.get(0, 0) - 0.2).abs() < 1e-15);
        assert!((bn.running_var.get(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eval_rows_are_independent() {
        let mut bn = BatchNorm::new("bn", 2);
        bn.running_mean = Tensor::from_rows(&[vec![1.0, -1.0]]).unwrap();
        bn.running_var = Tensor::from_rows(&[vec![4.0, 0.25]]).unwrap();
        let a = Tensor::from_rows(&[vec![0.3, 0.7], vec![9.0, -9.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![0.3, 0.7], vec![-100.0, 2.0]]).unwrap();
        let ya = bn.infer(&a).unwrap();
        let yb = bn.infer(&b).unwrap();
        assert_eq!(ya.row(0), yb.row(0));
    }
}
