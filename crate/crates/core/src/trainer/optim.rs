use serde::{Deserialize, Serialize};

use crate::encoder::{DualEncoder, PARAM_BLOCKS};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd {
        lr: f64,
        momentum: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerConfig {
    pub fn sgd(lr: f64, momentum: f64) -> Self {
        Self::Sgd { lr, momentum }
    }

    /// Adam with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn adam(lr: f64) -> Self {
        Self::Adam {
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            Self::Sgd { lr, .. } | Self::Adam { lr, .. } => lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.lr();
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::arg(format!("learning rate must be > 0, got {lr}")));
        }
        match *self {
            Self::Sgd { momentum, .. } if !(0.0..1.0).contains(&momentum) => {
                Err(Error::arg(format!("momentum must lie in [0, 1), got {momentum}")))
            }
            Self::Adam { beta1, beta2, eps, .. }
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps.is_nan() || eps <= 0.0 =>
            {
                Err(Error::arg("adam needs beta1, beta2 in [0, 1) and eps > 0"))
            }
            _ => Ok(()),
        }
    }
}

/// Per-parameter optimizer buffers, shaped like the model.
#[derive(Clone, Debug, PartialEq)]
pub enum OptimizerState<T> {
    Sgd {
        velocity: DualEncoder<T>,
    },
    Adam {
        m: DualEncoder<T>,
        v: DualEncoder<T>,
        step: u64,
    },
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(config: &OptimizerConfig, model: &DualEncoder<T>) -> Self {
        match config {
            OptimizerConfig::Sgd { .. } => Self::Sgd {
                velocity: model.zeros_like(),
            },
            OptimizerConfig::Adam { .. } => Self::Adam {
                m: model.zeros_like(),
                v: model.zeros_like(),
                step: 0,
            },
        }
    }
}

/// Applies one update in place.
///
/// SGD: `v ← μ·v + g; w ← w − lr·v`. Adam: bias-corrected first and second
/// moments. Non-finite gradients abort before any parameter changes.
pub fn optimizer_step<T: Scalar>(
    params: &mut DualEncoder<T>,
    grads: &DualEncoder<T>,
    state: &mut OptimizerState<T>,
    config: &OptimizerConfig,
) -> Result<()> {
    if params.num_params() != grads.num_params() {
        return Err(Error::DimensionMismatch {
            what: "gradient parameter count",
            expected: params.num_params(),
            got: grads.num_params(),
        });
    }
    for (block, g) in PARAM_BLOCKS.iter().zip(grads.blocks()) {
        if let Some(index) = g.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient { block, index });
        }
    }

    match (state, config) {
        (OptimizerState::Sgd { velocity }, &OptimizerConfig::Sgd { lr, momentum }) => {
            let (lr, mu) = (T::of(lr), T::of(momentum));
            for ((w, g), v) in params
                .blocks_mut()
                .into_iter()
                .zip(grads.blocks())
                .zip(velocity.blocks_mut())
            {
                for ((w, &g), v) in w.iter_mut().zip(g).zip(v.iter_mut()) {
                    *v = mu * *v + g;
                    *w -= lr * *v;
                }
            }
        }
        (
            OptimizerState::Adam { m, v, step },
            &OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                eps,
            },
        ) => {
            *step += 1;
            let t = *step as i32;
            let bc1 = T::of(1.0 - beta1.powi(t));
            let bc2 = T::of(1.0 - beta2.powi(t));
            let (lr, b1, b2, eps) = (T::of(lr), T::of(beta1), T::of(beta2), T::of(eps));
            let one = T::one();
            for (((w, g), m), v) in params
                .blocks_mut()
                .into_iter()
                .zip(grads.blocks())
                .zip(m.blocks_mut())
                .zip(v.blocks_mut())
            {
                for (((w, &g), m), v) in w.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        _ => return Err(Error::arg("optimizer state does not match optimizer config")),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn scalar_model(w: f64) -> DualEncoder<f64> {
        DualEncoder::from_parts(
            Matrix::filled(1, 1, w),
            vec![0.0],
            Matrix::filled(1, 1, w),
            vec![0.0],
        )
        .unwrap()
    }

    #[test]
    fn sgd_plain_step() {
        let cfg = OptimizerConfig::sgd(0.1, 0.0);
        let mut p = scalar_model(1.0);
        let g = scalar_model(1.0);
        let mut st = OptimizerState::new(&cfg, &p);
        optimizer_step(&mut p, &g, &mut st, &cfg).unwrap();
        assert!((p.w_video.get(0, 0) - 0.9).abs() < 1e-15);
        assert_eq!(p.w_video.get(0, 0), 1.0 - 0.1 * 1.0);
    }

    #[test]
    fn sgd_momentum_two_steps() {
        let cfg = OptimizerConfig::sgd(0.1, 0.9);
        let mut p = scalar_model(1.0);
        let g = scalar_model(1.0);
        let mut st = OptimizerState::new(&cfg, &p);
        optimizer_step(&mut p, &g, &mut st, &cfg).unwrap();
        optimizer_step(&mut p, &g, &mut st, &cfg).unwrap();
        // v1 = 1, v2 = 1.9
        assert!((p.w_video.get(0, 0) - 0.71).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_is_lr() {
        let cfg = OptimizerConfig::adam(1e-4);
        for g in [1e-3, 0.5, 7.0] {
            let mut p = scalar_model(1.0);
            let grads = scalar_model(g);
            let mut st = OptimizerState::new(&cfg, &p);
            optimizer_step(&mut p, &grads, &mut st, &cfg).unwrap();
            // m̂ = g, v̂ = g², step = lr·g/(g+ε)
            let expected = 1.0 - 1e-4 * g / (g + 1e-8);
            assert!((p.w_video.get(0, 0) - expected).abs() < 1e-15);
            assert!((1.0 - p.w_video.get(0, 0) - 1e-4).abs() < 1e-9);
        }
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let cfg = OptimizerConfig::adam(1e-3);
        let mut p = scalar_model(1.0);
        let mut g = scalar_model(1.0);
        g.b_text[0] = f64::NAN;
        let before = p.clone();
        let mut st = OptimizerState::new(&cfg, &p);
        let err = optimizer_step(&mut p, &g, &mut st, &cfg).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { block: "b_text", index: 0 }));
        assert_eq!(p, before);
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::sgd(0.0, 0.9).validate().is_err());
        assert!(OptimizerConfig::sgd(0.1, 1.0).validate().is_err());
        assert!(OptimizerConfig::adam(-1.0).validate().is_err());
        assert!(OptimizerConfig::adam(1e-4).validate().is_ok());
    }
}
