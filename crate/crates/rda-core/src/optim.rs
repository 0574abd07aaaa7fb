//! SGD with Nesterov momentum.
//!
//! Update rule, per parameter (this exact variant is the contract):
//!
//! ```text
//! v <- mu * v - eta * g
//! theta <- theta + mu * v - eta * g     (v already updated)
//! ```
//!
//! i.e. the Nesterov lookahead is folded into the parameter step:
//! `theta += mu^2 * v_old - (1 + mu) * eta * g`. With `mu = 0` this reduces
//! to plain SGD.

use crate::error::{Error, Result};
use crate::mlp::{GradBundle, Mlp};
use crate::num::Scalar;
use crate::Real;

#[derive(Debug, Clone)]
pub struct SgdNesterov<S: Scalar = Real> {
    learning_rate: S,
    momentum: S,
    velocity: GradBundle<S>,
}

impl<S: Scalar> SgdNesterov<S> {
    pub fn new(learning_rate: S, momentum: S, net: &Mlp<S>) -> Result<Self> {
        if learning_rate <= S::zero() || !learning_rate.is_finite() {
            return Err(Error::config("learning rate must be positive".to_string()));
        }
        if momentum < S::zero() || momentum >= S::one() {
            return Err(Error::config("momentum must lie in [0, 1)".to_string()));
        }
        Ok(SgdNesterov {
            learning_rate,
            momentum,
            velocity: GradBundle::zeros_like(net),
        })
    }

    pub fn learning_rate(&self) -> S {
        self.learning_rate
    }

    pub fn velocity(&self) -> &GradBundle<S> {
        &self.velocity
    }

    /// One update step. Rejects non-finite gradients so a diverging run
    /// aborts instead of silently poisoning the parameters.
    pub fn step(&mut self, params: &mut Mlp<S>, grads: &GradBundle<S>) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::numeric(
                "non-finite gradient in optimizer step".to_string(),
            ));
        }
        if grads.layers.len() != self.velocity.layers.len() {
            return Err(Error::config(
                "gradient shape does not match optimizer state".to_string(),
            ));
        }
        let (eta, mu) = (self.learning_rate, self.momentum);
        for ((layer, v), g) in params
            .layers_mut()
            .iter_mut()
            .zip(&mut self.velocity.layers)
            .zip(&grads.layers)
        {
            if layer.weight.rows() != g.weight.rows()
                || layer.weight.cols() != g.weight.cols()
                || layer.bias.len() != g.bias.len()
            {
                return Err(Error::config(
                    "gradient layer shape does not match parameters".to_string(),
                ));
            }
            for ((w, vw), &gw) in layer
                .weight
                .data_mut()
                .iter_mut()
                .zip(v.weight.data_mut())
                .zip(g.weight.data())
            {
                *vw = mu * *vw - eta * gw;
                *w = *w + mu * *vw - eta * gw;
            }
            for ((b, vb), &gb) in layer.bias.iter_mut().zip(&mut v.bias).zip(&g.bias) {
                *vb = mu * *vb - eta * gb;
                *b = *b + mu * *vb - eta * gb;
            }
        }
        Ok(())
    }
}
