//! Named parameter storage and the Adam optimizer.

use super::tensor::Tensor;
use super::AdError;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

/// Parameters in declaration order with stable names; the order doubles as
/// the checkpoint layout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet::default()
    }

    /// Registers a parameter; returns its stable id. Names must be unique.
    pub fn add(&mut self, name: &str, t: Tensor) -> usize {
        assert!(
            self.id_of(name).is_none(),
            "duplicate parameter name {name}"
        );
        self.names.push(name.to_string());
        self.tensors.push(t);
        self.names.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn get(&self, id: usize) -> &Tensor {
        &self.tensors[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Tensor {
        &mut self.tensors[id]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id_of(name).map(|id| &self.tensors[id])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    pub fn total_values(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> AdamHyper {
        AdamHyper {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators, parallel to a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub hyper: AdamHyper,
    pub t: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamSet, hyper: AdamHyper) -> AdamState {
        AdamState {
            hyper,
            t: 0,
            m: (0..params.len())
                .map(|i| Tensor::zeros(params.get(i).shape()))
                .collect(),
            v: (0..params.len())
                .map(|i| Tensor::zeros(params.get(i).shape()))
                .collect(),
        }
    }
}

/// One Adam update. `grads[i]` pairs with parameter i; `None` means an
/// all-zero gradient (the moments still decay). Bias correction uses the
/// incremented step count.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &[Option<&Tensor>],
    state: &mut AdamState,
) -> Result<(), AdError> {
    assert_eq!(grads.len(), params.len());
    state.t += 1;
    let h = state.hyper;
    let bc1 = 1.0 - crate::math::powi(h.beta1, state.t as i32);
    let bc2 = 1.0 - crate::math::powi(h.beta2, state.t as i32);
    for i in 0..params.len() {
        let p = params.get_mut(i);
        if let Some(g) = grads[i] {
            if g.shape() != p.shape() {
                return Err(AdError::ShapeMismatch {
                    op: "adam_step",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
        }
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, x) in p.data_mut().iter_mut().enumerate() {
            let g = grads[i].map_or(0.0, |g| g.data()[j]);
            m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g;
            v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g * g;
            let mhat = m[j] / bc1;
            let vhat = v[j] / bc2;
            *x -= h.lr * mhat / (crate::math::sqrt(vhat) + h.eps);
        }
    }
    Ok(())
}
