//! First-order optimizers over [`ModelParams`] blocks.

use serde::{Deserialize, Serialize};

use crate::model::{Gradients, ModelParams, ParamMask};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Adam,
    AdaGrad,
}

pub trait Optimizer<T: Scalar> {
    fn step(&mut self, params: &mut ModelParams<T>, grads: &Gradients<T>, mask: ParamMask);
    fn learning_rate(&self) -> f64;
    fn set_learning_rate(&mut self, lr: f64);
}

fn blocks_mut<'a, T: Scalar>(
    params: &'a mut ModelParams<T>,
    grads: &'a Gradients<T>,
    mask: ParamMask,
) -> Vec<(usize, &'a mut [T], &'a [T])> {
    let mut out = Vec::with_capacity(4);
    let slice = "parameter arrays are contiguous";
    if mask.classifier {
        out.push((0, params.w.as_slice_mut().expect(slice), grads.w.as_slice().expect(slice)));
        out.push((1, params.b.as_slice_mut().expect(slice), grads.b.as_slice().expect(slice)));
    }
    if mask.link {
        out.push((
            2,
            params.entities.as_slice_mut().expect(slice),
            grads.entities.as_slice().expect(slice),
        ));
        out.push((
            3,
            params.relations.as_slice_mut().expect(slice),
            grads.relations.as_slice().expect(slice),
        ));
    }
    out
}

fn state_like<T: Scalar>(params: &ModelParams<T>) -> [Vec<T>; 4] {
    [
        vec![T::zero(); params.w.len()],
        vec![T::zero(); params.b.len()],
        vec![T::zero(); params.entities.len()],
        vec![T::zero(); params.relations.len()],
    ]
}

/// Adam with bias correction.
pub struct Adam<T> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: [Vec<T>; 4],
    v: [Vec<T>; 4],
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ModelParams<T>, lr: f64) -> Self {
        Self::with_betas(params, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(params: &ModelParams<T>, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: state_like(params),
            v: state_like(params),
        }
    }
}

impl<T: Scalar> Optimizer<T> for Adam<T> {
    fn step(&mut self, params: &mut ModelParams<T>, grads: &Gradients<T>, mask: ParamMask) {
        self.t += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::one() - T::of(self.beta1.powi(self.t));
        let c2 = T::one() - T::of(self.beta2.powi(self.t));
        let lr = T::of(self.lr);
        let eps = T::of(self.eps);
        for (block, theta, g) in blocks_mut(params, grads, mask) {
            let m = &mut self.m[block];
            let v = &mut self.v[block];
            for i in 0..theta.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }

    fn learning_rate(&self) -> f64 {
        self.lr
    }

    fn set_learning_rate(&mut self, lr: f64) {
        self.lr = lr;
    }
}

/// AdaGrad: per-coordinate step `lr / (√Σg² + ε)`.
pub struct AdaGrad<T> {
    lr: f64,
    eps: f64,
    acc: [Vec<T>; 4],
}

impl<T: Scalar> AdaGrad<T> {
    pub fn new(params: &ModelParams<T>, lr: f64) -> Self {
        AdaGrad {
            lr,
            eps: 1e-8,
            acc: state_like(params),
        }
    }
}

impl<T: Scalar> Optimizer<T> for AdaGrad<T> {
    fn step(&mut self, params: &mut ModelParams<T>, grads: &Gradients<T>, mask: ParamMask) {
        let lr = T::of(self.lr);
        let eps = T::of(self.eps);
        for (block, theta, g) in blocks_mut(params, grads, mask) {
            let acc = &mut self.acc[block];
            for i in 0..theta.len() {
                acc[i] += g[i] * g[i];
                theta[i] -= lr * g[i] / (acc[i].sqrt() + eps);
            }
        }
    }

    fn learning_rate(&self) -> f64 {
        self.lr
    }

    fn set_learning_rate(&mut self, lr: f64) {
        self.lr = lr;
    }
}

pub fn build_optimizer<T: Scalar>(
    kind: OptimizerKind,
    params: &ModelParams<T>,
    lr: f64,
) -> Box<dyn Optimizer<T>> {
    match kind {
        OptimizerKind::Adam => Box::new(Adam::new(params, lr)),
        OptimizerKind::AdaGrad => Box::new(AdaGrad::new(params, lr)),
    }
}
