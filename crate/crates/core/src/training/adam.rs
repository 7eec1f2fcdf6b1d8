use ndarray::Zip;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates mirroring the parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. A non-finite gradient aborts before
/// anything is modified.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<()> {
    for (name, t) in grads.tensors() {
        if let Some(v) = t.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {name} contains {v}")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    let (b1, b2, lr, eps) = (
        config.beta1,
        config.beta2,
        config.learning_rate,
        config.epsilon,
    );
    let p_views = params.tensors_mut();
    let m_views = state.m.tensors_mut();
    let v_views = state.v.tensors_mut();
    for (((_, mut p), (_, mut m)), ((_, mut v), (_, g))) in p_views
        .into_iter()
        .zip(m_views)
        .zip(v_views.into_iter().zip(grads.tensors()))
    {
        Zip::from(&mut p)
            .and(&mut m)
            .and(&mut v)
            .and(&g)
            .for_each(|p, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ModelShape};

    fn params() -> ModelParams {
        let config = ModelConfig {
            user_dim: 2,
            item_dim: 2,
            hidden: 2,
            heads: vec![1],
            deep_layers: vec![2],
            ..ModelConfig::default()
        };
        let shape = ModelShape {
            users: 1,
            items: 1,
            attribute_dim: 2,
            sentence_dim: 2,
        };
        ModelParams::init(&config, &shape, 0).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = params();
        let before = p.clone();
        let mut state = AdamState::new(&p);
        let zero = p.zeros_like();
        for _ in 0..3 {
            adam_step(&mut p, &zero, &mut state, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(state.step, 3);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut p = params();
        let before = p.clone();
        let mut grad = p.zeros_like();
        grad.sentence_head[0] = 1.0;
        grad.sentence_head[1] = -3.0;
        let mut state = AdamState::new(&p);
        let config = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        adam_step(&mut p, &grad, &mut state, &config).unwrap();
        // m_hat = g, v_hat = g^2: update = -lr * g / (|g| + eps)
        let expected0 = before.sentence_head[0] - 0.1 * 1.0 / (1.0 + 1e-8);
        assert!((p.sentence_head[0] - expected0).abs() < 1e-15);
        assert!((p.sentence_head[1] - before.sentence_head[1] - 0.1).abs() < 1e-7);
        assert_eq!(p.attribute_head, before.attribute_head);
    }

    #[test]
    fn non_finite_gradient_aborts_untouched() {
        let mut p = params();
        let before = p.clone();
        let mut grad = p.zeros_like();
        grad.user_emb[[0, 0]] = f64::NAN;
        let mut state = AdamState::new(&p);
        assert!(adam_step(&mut p, &grad, &mut state, &AdamConfig::default()).is_err());
        assert_eq!(p, before);
        assert_eq!(state.step, 0);
    }

    #[test]
    fn deterministic_trajectory() {
        let run = || {
            let mut p = params();
            let mut state = AdamState::new(&p);
            for k in 0..5 {
                let mut g = p.clone();
                g.scale(0.3 + k as f64);
                adam_step(&mut p, &g, &mut state, &AdamConfig::default()).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}
