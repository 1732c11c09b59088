//! Central finite-difference verification of the analytic gradients.

use crate::encoder::{ModelParams, QueryBuilder};
use crate::error::Result;
use crate::trainer::loss::{batch_loss, encode_batch, TrainExample};

#[derive(Debug, Clone)]
pub struct BlockReport {
    pub name: &'static str,
    pub max_rel_err: f64,
    /// Largest analytic gradient magnitude in the block.
    pub max_grad: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockReport>,
    pub fd_step: f64,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.max_rel_err)
            .fold(0.0, f64::max)
    }
}

/// Smallest |pre-activation| across every ReLU in the batch's forward pass.
/// Finite differences are only trustworthy when the step cannot flip an
/// activation sign, so callers should re-seed configurations whose margin is
/// within a few orders of magnitude of the step.
pub fn relu_margin(
    params: &ModelParams,
    builder: &QueryBuilder,
    batch: &[TrainExample],
) -> Result<f64> {
    let enc = encode_batch(params, builder, batch)?;
    let mut margin = f64::INFINITY;
    let mut scan = |zs: &[f64]| {
        for &z in zs {
            margin = margin.min(z.abs());
        }
    };
    for trace in enc
        .tails
        .iter()
        .chain(&enc.rel_q)
        .chain(&enc.soft_q)
        .chain(enc.p2_q.iter().flatten())
        .chain(enc.p3_q.iter().flatten())
    {
        scan(&trace.z1);
        if let Some(soft) = &trace.soft {
            scan(&soft.pre);
        }
    }
    Ok(margin)
}

/// Compare the analytic gradient of the full batch loss against central
/// finite differences, element by element, in 64-bit arithmetic.
pub fn grad_check(
    params: &mut ModelParams,
    builder: &QueryBuilder,
    batch: &[TrainExample],
    w: [f64; 4],
    stop_grad_paths: bool,
    fd_step: f64,
) -> Result<GradCheckReport> {
    let (_, analytic) = batch_loss(params, builder, batch, w, stop_grad_paths)?;
    let analytic_blocks: Vec<(&'static str, Vec<f64>)> = analytic
        .blocks()
        .into_iter()
        .map(|(name, data)| (name, data.to_vec()))
        .collect();

    let mut blocks = Vec::new();
    for (bi, (name, ablock)) in analytic_blocks.iter().enumerate() {
        let len = ablock.len();
        let mut max_rel = 0.0f64;
        let mut max_grad = 0.0f64;
        for i in 0..len {
            let orig = params.blocks()[bi].1[i];
            let (plus, minus) = (orig + fd_step, orig - fd_step);

            params.blocks_mut()[bi].1[i] = plus;
            let loss_p = batch_loss(params, builder, batch, w, stop_grad_paths)?.0.total;
            params.blocks_mut()[bi].1[i] = minus;
            let loss_m = batch_loss(params, builder, batch, w, stop_grad_paths)?.0.total;
            params.blocks_mut()[bi].1[i] = orig;

            let fd = (loss_p - loss_m) / (plus - minus);
            let a = ablock[i];
            let rel = (a - fd).abs() / f64::max(1e-6, f64::max(a.abs(), fd.abs()));
            max_rel = max_rel.max(rel);
            max_grad = max_grad.max(a.abs());
        }
        blocks.push(BlockReport {
            name,
            max_rel_err: max_rel,
            max_grad,
        });
    }
    Ok(GradCheckReport { blocks, fd_step })
}
