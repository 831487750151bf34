use super::network::Network;
use super::{AdamConfig, Gradients};
use crate::error::Result;
use crate::tensor::Scalar;

/// First and second moment estimates for one tensor.
#[derive(Clone, Debug, PartialEq)]
struct Moments<T> {
    m: Vec<T>,
    v: Vec<T>,
}

/// Adam with bias correction. Moments are keyed by parameter slot, so a
/// tensor that stops training (a frozen sign factor) simply stops being visited.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T: Scalar> {
    cfg: AdamConfig,
    steps: u64,
    moments: Vec<Option<Moments<T>>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            steps: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One update of every trainable tensor in `net`.
    pub fn step(&mut self, net: &mut Network<T>, grads: &Gradients<T>, lr: f64) -> Result<()> {
        self.steps += 1;
        let t = self.steps;
        let cfg = self.cfg;
        let moments = &mut self.moments;
        net.for_each_trainable(grads, |slot, params, g| {
            if moments.len() <= slot {
                moments.resize(slot + 1, None);
            }
            let state = moments[slot].get_or_insert_with(|| Moments {
                m: vec![T::zero(); params.len()],
                v: vec![T::zero(); params.len()],
            });
            adam_update(params, g, &mut state.m, &mut state.v, t, lr, &cfg);
        })
    }
}

/// In-place Adam update of `params` for step `t` (1-based).
pub fn adam_update<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    m: &mut [T],
    v: &mut [T],
    t: u64,
    lr: f64,
    cfg: &AdamConfig,
) {
    let b1 = T::of(cfg.beta1);
    let b2 = T::of(cfg.beta2);
    let c1 = T::one() - b1;
    let c2 = T::one() - b2;
    let step = T::of(lr / (1.0 - cfg.beta1.powi(t as i32)));
    let v_correction = T::of(1.0 / (1.0 - cfg.beta2.powi(t as i32)));
    let eps = T::of(cfg.eps);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = b1 * *m + c1 * g;
        *v = b2 * *v + c2 * g * g;
        *p -= step * *m / ((*v * v_correction).sqrt() + eps);
    }
}
