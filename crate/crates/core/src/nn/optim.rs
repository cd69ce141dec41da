use super::layer::{DenseLayer, LayerGrad};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            learning_rate: 0.001,
            rho: 0.9,
            epsilon: 1e-8,
        }
    }
}

impl RmsPropConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::invalid(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Running mean of squared gradients for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState {
    pub cache: Vec<f64>,
    pub config: RmsPropConfig,
}

impl RmsPropState {
    pub fn new(len: usize, config: RmsPropConfig) -> Self {
        RmsPropState {
            cache: vec![0.0; len],
            config,
        }
    }
}

/// One RMSprop update:
/// `cache <- rho * cache + (1 - rho) * g^2`, `param <- param - lr * g / (sqrt(cache) + eps)`.
pub fn rmsprop_step(params: &mut [f64], grads: &[f64], state: &mut RmsPropState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.cache.len() {
        return Err(Error::invalid(format!(
            "rmsprop shapes disagree: {} params, {} grads, {} cache entries",
            params.len(),
            grads.len(),
            state.cache.len()
        )));
    }
    let RmsPropConfig {
        learning_rate,
        rho,
        epsilon,
    } = state.config;
    for ((p, &g), c) in params.iter_mut().zip(grads).zip(state.cache.iter_mut()) {
        *c = rho * *c + (1.0 - rho) * g * g;
        *p -= learning_rate * g / (c.sqrt() + epsilon);
    }
    Ok(())
}

/// Optimizer state for a dense layer: one cache for the weights and one for the biases.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerOptimizer {
    pub weights: RmsPropState,
    pub biases: RmsPropState,
}

impl LayerOptimizer {
    pub fn for_layer(layer: &DenseLayer, config: RmsPropConfig) -> Self {
        LayerOptimizer {
            weights: RmsPropState::new(layer.weights.as_slice().len(), config),
            biases: RmsPropState::new(layer.biases.len(), config),
        }
    }

    pub fn set_config(&mut self, config: RmsPropConfig) {
        self.weights.config = config;
        self.biases.config = config;
    }

    pub fn step(&mut self, layer: &mut DenseLayer, grad: &LayerGrad) -> Result<()> {
        if grad.weights.shape() != layer.weights.shape() {
            return Err(Error::invalid(format!(
                "gradient shape {:?} does not match weights {:?}",
                grad.weights.shape(),
                layer.weights.shape()
            )));
        }
        rmsprop_step(layer.weights.as_mut_slice(), grad.weights.as_slice(), &mut self.weights)?;
        rmsprop_step(&mut layer.biases, &grad.biases, &mut self.biases)
    }
}
