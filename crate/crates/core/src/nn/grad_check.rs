//! Central-difference gradient checking.
//!
//! The scalar under test is `L = Σ cᵢⱼ·yᵢⱼ`, a sum of the layer output
//! weighted by fixed pseudo-random coefficients in `[-1, 1)`. A plain
//! unweighted sum is degenerate for batch norm (its input gradient is
//! identically zero), which would make the check vacuous.

use super::rng::SeededRng;
use super::{Layer, LayerMode, Tensor};
use crate::error::{Error, Result};

const COEFF_SEED: u64 = 0x6772_6164_6368_6b00;

/// Relative-error denominator floor. Gradients smaller than this (such as
/// a linear bias feeding batch norm, whose true gradient is zero) are in
/// effect compared absolutely, since central differences leave ~1e-11 of
/// round-off on them.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `"<param name>[index]"` or `"input[index]"` of the worst entry.
    pub worst: String,
    pub checked: usize,
}

/// Output-weighting coefficients for the scalar loss.
pub fn weighted_sum_loss(rows: usize, cols: usize) -> Tensor {
    let mut rng = SeededRng::new(COEFF_SEED);
    let data = (0..rows * cols).map(|_| rng.uniform(-1.0, 1.0)).collect();
    Tensor::from_vec(rows, cols, data).expect("sized above")
}

fn loss_of(y: &Tensor, coeff: &Tensor) -> f64 {
    y.data().iter().zip(coeff.data()).map(|(a, b)| a * b).sum()
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares analytic gradients of every parameter and input element
/// against `(L(θ+ε) − L(θ−ε)) / 2ε`.
///
/// Dropout masks drawn by the first forward pass are frozen for the
/// duration of the check and released afterwards.
pub fn grad_check<L: Layer + ?Sized>(
    layer: &mut L,
    input: &Tensor,
    eps: f64,
    mode: LayerMode,
) -> Result<GradCheckReport> {
    grad_check_with(layer, input, eps, mode, |_| {})
}

/// As [`grad_check`], with a hook that may rewrite the analytic parameter
/// gradients before comparison. Used to confirm the checker catches a
/// broken backward pass.
pub fn grad_check_with<L: Layer + ?Sized>(
    layer: &mut L,
    input: &Tensor,
    eps: f64,
    mode: LayerMode,
    tamper: impl Fn(&mut L),
) -> Result<GradCheckReport> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("grad_check eps must be > 0, got {eps}")));
    }
    input.ensure_finite("grad_check input")?;

    layer.zero_grad();
    let y = layer.forward(input, mode)?;
    layer.set_mask_frozen(true);
    let result = (|| {
        let coeff = weighted_sum_loss(y.rows(), y.cols());
        let base = loss_of(&y, &coeff);
        if !base.is_finite() {
            return Err(Error::NonFinite("grad_check loss".into()));
        }
        let grad_in = layer.backward(&coeff)?;
        tamper(layer);

        let analytic: Vec<(String, Vec<f64>)> = layer
            .params()
            .iter()
            .map(|p| (p.name.clone(), p.grad.data().to_vec()))
            .collect();

        let eval = |layer: &mut L, x: &Tensor| -> Result<f64> {
            let l = loss_of(&layer.forward(x, mode)?, &coeff);
            if l.is_finite() {
                Ok(l)
            } else {
                Err(Error::NonFinite("grad_check loss".into()))
            }
        };

        let mut report = GradCheckReport {
            max_relative_error: 0.0,
            worst: String::new(),
            checked: 0,
        };
        let mut record = |name: &str, idx: usize, a: f64, n: f64| {
            let e = rel_err(a, n);
            report.checked += 1;
            if report.worst.is_empty() || e > report.max_relative_error {
                report.max_relative_error = e;
                report.worst = format!("{name}[{idx}]");
            }
        };

        for (pi, (name, grads)) in analytic.iter().enumerate() {
            for (j, &a) in grads.iter().enumerate() {
                let orig = layer.params_mut()[pi].value.data()[j];
                layer.params_mut()[pi].value.data_mut()[j] = orig + eps;
                let plus = eval(layer, input)?;
                layer.params_mut()[pi].value.data_mut()[j] = orig - eps;
                let minus = eval(layer, input)?;
                layer.params_mut()[pi].value.data_mut()[j] = orig;
                record(name, j, a, (plus - minus) / (2.0 * eps));
            }
        }

        let mut x = input.clone();
        for j in 0..x.len() {
            let orig = x.data()[j];
            x.data_mut()[j] = orig + eps;
            let plus = eval(layer, &x)?;
            x.data_mut()[j] = orig - eps;
            let minus = eval(layer, &x)?;
            x.data_mut()[j] = orig;
            record("input", j, grad_in.data()[j], (plus - minus) / (2.0 * eps));
        }
        Ok(report)
    })();
    layer.set_mask_frozen(false);
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{BatchNorm, Dropout, Linear, Relu, Swish};

    fn random(rows: usize, cols: usize, seed: u64, scale: f64) -> Tensor {
        let mut rng = SeededRng::new(seed);
        let data = (0..rows * cols).map(|_| rng.uniform(-scale, scale)).collect();
        Tensor::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn linear_passes() {
        let mut rng = SeededRng::new(1);
        let mut l = Linear::new("l", 8, 5, &mut rng);
        let r = grad_check(&mut l, &random(4, 8, 2, 1.0), 1e-5, LayerMode::Train).unwrap();
        assert!(r.max_relative_error < 1e-6, "{r:?}");
        assert_eq!(r.checked, 8 * 5 + 5 + 4 * 8);
    }

    #[test]
    fn batch_norm_train_passes() {
        let mut bn = BatchNorm::new("bn", 6);
        bn.gamma.value = random(1, 6, 4, 2.0);
        bn.beta.value = random(1, 6, 5, 1.0);
        let r = grad_check(&mut bn, &random(16, 6, 3, 3.0), 1e-5, LayerMode::Train).unwrap();
        assert!(r.max_relative_error < 1e-5, "{r:?}");
    }

    #[test]
    fn batch_norm_eval_passes() {
        let mut bn = BatchNorm::new("bn", 4);
        bn.running_mean = random(1, 4, 8, 1.0);
        bn.running_var = random(1, 4, 9, 1.0).map(|v| v.abs() + 0.5);
        let r = grad_check(&mut bn, &random(3, 4, 3, 3.0), 1e-5, LayerMode::Eval).unwrap();
        assert!(r.max_relative_error < 1e-6, "{r:?}");
    }

    #[test]
    fn dropout_with_frozen_mask_passes() {
        let mut d = Dropout::new(0.4, SeededRng::new(6)).unwrap();
        let r = grad_check(&mut d, &random(5, 7, 7, 1.0), 1e-5, LayerMode::Train).unwrap();
        assert!(r.max_relative_error < 1e-6, "{r:?}");
    }

    #[test]
    fn relu_off_kink_passes() {
        // keep every input at least 0.1 away from the kink
        let x = random(6, 6, 10, 1.0).map(|v| if v.abs() < 0.1 { v.signum() * 0.1 + v } else { v });
        let r = grad_check(&mut Relu::new(), &x, 1e-5, LayerMode::Train).unwrap();
        assert!(r.max_relative_error < 1e-6, "{r:?}");
    }

    #[test]
    fn swish_passes_including_beta() {
        let mut s = Swish::with_beta("beta", 1.3);
        let r = grad_check(&mut s, &random(6, 5, 11, 3.0), 1e-5, LayerMode::Train).unwrap();
        assert!(r.max_relative_error < 1e-6, "{r:?}");
    }

    #[test]
    fn tampered_gradient_is_caught() {
        let mut s = Swish::new("beta");
        let r = grad_check_with(&mut s, &random(4, 4, 12, 2.0), 1e-5, LayerMode::Train, |s| {
            s.beta.grad.data_mut()[0] *= 1.1;
        })
        .unwrap();
        assert!(r.max_relative_error > 1e-3);
        assert!(r.worst.starts_with("beta"), "{}", r.worst);
    }

    #[test]
    fn rejects_bad_eps() {
        let mut r = Relu::new();
        assert!(grad_check(&mut r, &Tensor::zeros(1, 1), 0.0, LayerMode::Train).is_err());
    }
}
