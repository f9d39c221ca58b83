use crate::diffcore::{Parameter, Tensor};
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moments for a fixed, ordered list of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Parameter>) -> Self {
        let zeros: Vec<Tensor> = params.into_iter().map(|p| p.value.zeros_like()).collect();
        OptimizerState {
            step: 0,
            beta1: BETA1,
            beta2: BETA2,
            eps: EPSILON,
            second: zeros.clone(),
            first: zeros,
        }
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.second
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [&mut Parameter], grads: &[Tensor], state: &mut OptimizerState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::contract(format!(
            "{} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.value.shape() != g.shape() {
            return Err(Error::contract(format!(
                "gradient {:?} does not match parameter '{}' {:?}",
                g.shape(),
                p.name,
                p.value.shape()
            )));
        }
        if !g.all_finite() {
            return Err(Error::contract(format!("non-finite gradient for '{}'", p.name)));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.first[k].data_mut();
        let v = state.second[k].data_mut();
        for (((w, &g), m), v) in p.value.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + state.eps);
        }
    }
    Ok(())
}
