use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::kan::{Network, NetworkGrads};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments<S> {
    pub m: Vec<S>,
    pub v: Vec<S>,
}

impl<S: Scalar> Moments<S> {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![S::zero(); len],
            v: vec![S::zero(); len],
        }
    }
}

/// One bias-corrected Adam update of `params` at step `t ≥ 1`.
pub fn adam_step<S: Scalar>(
    params: &mut [S],
    grads: &[S],
    state: &mut Moments<S>,
    lr: f64,
    cfg: &AdamConfig,
    t: u64,
) -> Result<(), TrainError> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(TrainError::Shape(format!(
            "params {}, grads {}, moments {}/{}",
            params.len(),
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    if t == 0 {
        return Err(TrainError::Config("Adam step counter starts at 1".into()));
    }
    let (b1, b2) = (S::lit(cfg.beta1), S::lit(cfg.beta2));
    let c1 = S::one() - S::lit(cfg.beta1.powi(t as i32));
    let c2 = S::one() - S::lit(cfg.beta2.powi(t as i32));
    let (lr, eps) = (S::lit(lr), S::lit(cfg.epsilon));
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (S::one() - b1) * g;
        *v = b2 * *v + (S::one() - b2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
    }
    Ok(())
}

/// Adam over every trainable block of a network.
#[derive(Debug, Clone)]
pub struct Adam<S> {
    pub config: AdamConfig,
    pub learning_rate: f64,
    step: u64,
    moments: Vec<(String, Moments<S>)>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(net: &Network<S>, learning_rate: f64, config: AdamConfig) -> Self {
        Self {
            config,
            learning_rate,
            step: 0,
            moments: net
                .param_layout()
                .into_iter()
                .map(|(name, len)| (name, Moments::zeros(len)))
                .collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, net: &mut Network<S>, grads: &NetworkGrads<S>) -> Result<(), TrainError> {
        let params = net.params_mut();
        if params.len() != self.moments.len() || grads.blocks.len() != self.moments.len() {
            return Err(TrainError::Shape("parameter blocks changed since the optimizer was built".into()));
        }
        self.step += 1;
        for (((name, p), (gname, g)), (mname, state)) in params.into_iter().zip(&grads.blocks).zip(&mut self.moments) {
            if name != *gname || name != *mname {
                return Err(TrainError::Shape(format!("block `{name}` paired with `{gname}`")));
            }
            adam_step(p, g, state, self.learning_rate, &self.config, self.step)?;
        }
        Ok(())
    }
}
