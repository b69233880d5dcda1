//! RMSProp parameter updates over the flat buffer.

use super::{Gradients, NetworkParams, QnetError};
use serde::{Deserialize, Serialize};

/// Per-parameter squared-gradient accumulator plus hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerState {
    acc: Vec<f64>,
    pub rho: f64,
    pub eps: f64,
    pub alpha: f64,
}

impl OptimizerState {
    pub fn new(params: &NetworkParams, alpha: f64, rho: f64, eps: f64) -> OptimizerState {
        OptimizerState { acc: vec![0.0; params.param_len()], rho, eps, alpha }
    }

    pub fn accumulator(&self) -> &[f64] {
        &self.acc
    }
}

/// One RMSProp step:
/// `acc <- rho*acc + (1-rho)*g^2`, `w <- w - alpha*g/sqrt(acc + eps)`.
/// Bumps the parameter version; rejects non-finite gradients.
pub fn rmsprop_step(
    params: &mut NetworkParams,
    opt: &mut OptimizerState,
    grads: &Gradients,
) -> Result<(), QnetError> {
    if grads.data.len() != params.param_len() {
        return Err(QnetError::GradientShape {
            expected: params.param_len(),
            got: grads.data.len(),
        });
    }
    if !grads.is_finite() {
        return Err(QnetError::NonFiniteGradient);
    }
    let (rho, eps, alpha) = (opt.rho, opt.eps, opt.alpha);
    let acc = &mut opt.acc;
    params.update_in_place(|data| {
        for ((w, a), &g) in data.iter_mut().zip(acc.iter_mut()).zip(&grads.data) {
            *a = rho * *a + (1.0 - rho) * g * g;
            *w -= alpha * g / (*a + eps).sqrt();
        }
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qnet::{ConvSpec, NetSpec, NetworkParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_params() -> NetworkParams {
        let spec = NetSpec {
            input_len: 10,
            input_width: 4,
            convs: vec![ConvSpec { kernel: 3, out_ch: 2, pool: 2 }],
            hidden_dim: 3,
            action_count: 2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        NetworkParams::init(spec, &mut rng).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged_but_bumps_version() {
        let mut params = tiny_params();
        let before = params.data().to_vec();
        let v0 = params.version();
        let mut opt = OptimizerState::new(&params, 0.01, 0.9, 1e-8);
        let grads = Gradients::zeros_like(&params);
        rmsprop_step(&mut params, &mut opt, &grads).unwrap();
        assert_eq!(params.data(), before.as_slice());
        assert_eq!(params.version(), v0 + 1);
    }

    #[test]
    fn first_step_matches_closed_form() {
        let mut params = tiny_params();
        let w0 = params.data()[0];
        let mut opt = OptimizerState::new(&params, 0.01, 0.9, 1e-8);
        let mut grads = Gradients::zeros_like(&params);
        let g = 0.37;
        grads.data[0] = g;
        rmsprop_step(&mut params, &mut opt, &grads).unwrap();
        let expected = w0 - 0.01 * g / ((1.0 - 0.9) * g * g + 1e-8).sqrt();
        assert!((params.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut params = tiny_params();
        let mut opt = OptimizerState::new(&params, 0.01, 0.9, 1e-8);
        let mut grads = Gradients::zeros_like(&params);
        grads.data[3] = f64::NAN;
        assert_eq!(
            rmsprop_step(&mut params, &mut opt, &grads).unwrap_err(),
            QnetError::NonFiniteGradient
        );
    }

    #[test]
    fn matches_independent_scalar_rmsprop_on_quadratic() {
        // Minimize w^2 from w = 1 on a single coordinate; every other
        // coordinate sees zero gradient and must stay put.
        let mut params = tiny_params();
        let idx = 5;
        params.update_in_place(|d| d[idx] = 1.0);
        let v0 = params.version();
        let frozen = params.data().to_vec();
        let (alpha, rho, eps) = (0.01, 0.9, 1e-8);
        let mut opt = OptimizerState::new(&params, alpha, rho, eps);

        // Independent scalar implementation.
        let mut w_ref = 1.0f64;
        let mut acc_ref = 0.0f64;

        for _ in 0..100 {
            let g = 2.0 * params.data()[idx];
            let mut grads = Gradients::zeros_like(&params);
            grads.data[idx] = g;
            rmsprop_step(&mut params, &mut opt, &grads).unwrap();

            let g_ref = 2.0 * w_ref;
            acc_ref = rho * acc_ref + (1.0 - rho) * g_ref * g_ref;
            w_ref -= alpha * g_ref / (acc_ref + eps).sqrt();
        }
        assert!((params.data()[idx] - w_ref).abs() < 1e-10);
        assert!(w_ref.abs() < 1.0, "descent should move toward the minimum");
        for (i, (now, was)) in params.data().iter().zip(&frozen).enumerate() {
            if i != idx {
                assert_eq!(now, was);
            }
        }
        assert_eq!(params.version(), v0 + 100);
    }
}
