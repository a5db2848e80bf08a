//! Bias-corrected Adam over `MlpParams`-shaped values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::mlp::MlpParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub hyper: AdamHyper,
    m: MlpParams,
    v: MlpParams,
    step: u64,
}

impl AdamState {
    pub fn new(params: &MlpParams, hyper: AdamHyper) -> Self {
        Self {
            hyper,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One in-place Adam step. Rejects non-finite gradients without touching
    /// parameters or state.
    pub fn update(&mut self, params: &mut MlpParams, grads: &MlpParams) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::NonFinite {
                context: "adam gradient",
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let h = self.hyper;
        let bc1 = 1.0 - h.beta1.powi(t);
        let bc2 = 1.0 - h.beta2.powi(t);
        for li in 0..params.layers.len() {
            let p = &mut params.layers[li];
            let g = &grads.layers[li];
            let m = &mut self.m.layers[li];
            let v = &mut self.v.layers[li];
            for (pw, (gw, (mw, vw))) in
                p.w.iter_mut()
                    .zip(g.w.iter().zip(m.w.iter_mut().zip(v.w.iter_mut())))
            {
                *mw = h.beta1 * *mw + (1.0 - h.beta1) * gw;
                *vw = h.beta2 * *vw + (1.0 - h.beta2) * gw * gw;
                *pw -= h.lr * (*mw / bc1) / ((*vw / bc2).sqrt() + h.eps);
            }
            for (pb, (gb, (mb, vb))) in
                p.b.iter_mut()
                    .zip(g.b.iter().zip(m.b.iter_mut().zip(v.b.iter_mut())))
            {
                *mb = h.beta1 * *mb + (1.0 - h.beta1) * gb;
                *vb = h.beta2 * *vb + (1.0 - h.beta2) * gb * gb;
                *pb -= h.lr * (*mb / bc1) / ((*vb / bc2).sqrt() + h.eps);
            }
        }
        Ok(())
    }
}
