//! Per-parameter adaptive moment optimizer with bias correction.
//!
//! Moments live in f64 but are snapped to the f32 grid after every step,
//! like the parameters themselves, so the whole mutable training state
//! serializes losslessly into 32-bit checkpoints.

use crate::encoder::{ModelGrads, ModelParams};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    /// First/second moments, one pair per parameter block, in block order.
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let blocks = params.blocks();
        AdamState {
            m: blocks.iter().map(|(_, b)| vec![0.0; b.len()]).collect(),
            v: blocks.iter().map(|(_, b)| vec![0.0; b.len()]).collect(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelGrads, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let gblocks = grads.blocks();
        for (bi, (_, pblock)) in params.blocks_mut().into_iter().enumerate() {
            let gblock = gblocks[bi].1;
            let m = &mut self.m[bi];
            let v = &mut self.v[bi];
            for i in 0..pblock.len() {
                let g = gblock[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                pblock[i] -= lr * mhat / (vhat.sqrt() + self.eps);
                // Keep all persistent state f32-representable.
                pblock[i] = pblock[i] as f32 as f64;
                m[i] = m[i] as f32 as f64;
                v[i] = v[i] as f32 as f64;
            }
        }
    }
}
