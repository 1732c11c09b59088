//! Contrastive training: multi-positive InfoNCE over in-batch negatives,
//! four weighted loss terms, hand-derived gradients, Adam, checkpoints.

mod adam;
mod checkpoint;
mod gradcheck;
mod loss;

pub use adam::AdamState;
pub use checkpoint::{load_checkpoint, save_checkpoint, LoadedCheckpoint};
pub use gradcheck::{grad_check, relu_margin, BlockReport, GradCheckReport};
pub use loss::{batch_loss, info_nce_multi, LossTerms, TrainExample};

use serde::{Deserialize, Serialize};

use crate::encoder::{ModelDims, ModelParams, QueryBuilder, TokenVocab};
use crate::error::{KgcError, Result};
use crate::kg::KnowledgeGraph;
use crate::paths::PathIndex;
use crate::rng::{phase, phase_rng};
use crate::tensor::KahanSum;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub dims: ModelDims,
    /// Initial temperature; trained as ln τ unless frozen.
    pub tau_init: f64,
    pub tau_learnable: bool,
    /// Term weights [w1, w2, w3, w4] for relation→tail, path→tail,
    /// soft→tail, soft→path.
    pub w: [f64; 4],
    pub lr: f64,
    pub warmup_steps: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Global gradient L2-norm clip.
    pub grad_clip: f64,
    /// Paths retained per (pair, hop count) when mining.
    pub k: usize,
    /// Minimum mined-path confidence (0 keeps everything reachable).
    pub min_confidence: f64,
    pub seed: u64,
    /// Path queries carry the target relation as a prefix.
    pub prefix_paths: bool,
    /// Block gradients through path embeddings in the soft→path term.
    pub stop_grad_paths: bool,
    /// Sample the per-epoch path by confidence instead of uniformly.
    pub sample_paths_by_confidence: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dims: ModelDims::default(),
            tau_init: 0.05,
            tau_learnable: true,
            w: [1.0, 1.0, 1.0, 1.0],
            lr: 5e-5,
            warmup_steps: 400,
            epochs: 100,
            batch_size: 512,
            grad_clip: 10.0,
            k: 3,
            min_confidence: 0.0,
            seed: 0,
            prefix_paths: true,
            stop_grad_paths: false,
            sample_paths_by_confidence: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.tau_init <= 0.0 {
            return Err(KgcError::Config("tau_init must be positive".into()));
        }
        if self.w.iter().any(|&w| w < 0.0) {
            return Err(KgcError::Config("loss weights must be non-negative".into()));
        }
        if self.batch_size < 2 {
            return Err(KgcError::Config(
                "batch_size must be at least 2 (in-batch negatives)".into(),
            ));
        }
        if self.lr <= 0.0 || self.grad_clip <= 0.0 || self.epochs == 0 || self.k == 0 {
            return Err(KgcError::Config(
                "lr, grad_clip, epochs, and k must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Linear warmup to `lr` over `warmup_steps`, then linear decay to zero at
/// `total_steps`. At step 0 the rate is lr/warmup_steps; at step
/// warmup_steps it is exactly lr.
pub fn lr_at_step(cfg: &TrainConfig, step: usize, total_steps: usize) -> f64 {
    let warmup = cfg.warmup_steps;
    if warmup > 0 && step < warmup {
        cfg.lr * (step + 1) as f64 / warmup as f64
    } else if total_steps > warmup {
        let progress = (step - warmup) as f64 / (total_steps - warmup) as f64;
        cfg.lr * (1.0 - progress)
    } else {
        cfg.lr
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepMetrics {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub hr_t: f64,
    pub hp_t: f64,
    pub hrs_t: f64,
    pub hrs_p: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
}

#[derive(Debug)]
pub struct TrainOutput {
    pub params: ModelParams,
    pub opt: AdamState,
    pub steps: Vec<StepMetrics>,
    pub epochs: Vec<EpochMetrics>,
}

/// Build the per-triple training examples (relation/soft variants always;
/// path variants populated per epoch by sampling from the mined index).
fn base_examples(graph: &KnowledgeGraph) -> Vec<TrainExample> {
    graph
        .triples()
        .iter()
        .map(|t| TrainExample {
            head: t.head,
            relation: t.relation,
            tail: t.tail,
            path2: None,
            path3: None,
        })
        .collect()
}

/// Full training run over the augmented graph. Deterministic for a fixed
/// seed: shuffling, path sampling, and initialization all derive from it.
pub fn train(
    graph: &KnowledgeGraph,
    index: &PathIndex,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepMetrics),
) -> Result<TrainOutput> {
    cfg.validate()?;
    let vocab = TokenVocab::new(graph.n_entities(), graph.n_relations());
    let mut params = ModelParams::init(vocab, cfg.dims, cfg.tau_init, cfg.seed)?;
    let builder = QueryBuilder::new(vocab, cfg.dims.max_tokens, cfg.prefix_paths);
    let mut opt = AdamState::new(&params);

    let examples = base_examples(graph);
    if examples.len() < 2 {
        return Err(KgcError::Config("need at least 2 training triples".into()));
    }
    let batches_per_epoch = {
        let full = examples.len() / cfg.batch_size;
        let rem = examples.len() % cfg.batch_size;
        full + usize::from(rem >= 2)
    };
    let total_steps = batches_per_epoch.max(1) * cfg.epochs;

    let mut steps_log = Vec::new();
    let mut epochs_log = Vec::new();
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut shuffle_rng = phase_rng(cfg.seed, phase::EPOCH_SHUFFLE, epoch as u64);
        fisher_yates(&mut order, &mut shuffle_rng);

        let mut sample_rng = phase_rng(cfg.seed, phase::PATH_SAMPLE, epoch as u64);
        let mut epoch_loss = KahanSum::new();
        let mut epoch_batches = 0usize;

        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let batch: Vec<TrainExample> = chunk
                .iter()
                .map(|&i| {
                    let mut ex = examples[i].clone();
                    if let Some(pair) = index.get(ex.head, ex.tail) {
                        ex.path2 = loss::sample_path(
                            &pair.two_hop,
                            cfg.sample_paths_by_confidence,
                            &mut sample_rng,
                        );
                        ex.path3 = loss::sample_path(
                            &pair.three_hop,
                            cfg.sample_paths_by_confidence,
                            &mut sample_rng,
                        );
                    }
                    ex
                })
                .collect();

            let (terms, mut grads) = batch_loss(
                &params,
                &builder,
                &batch,
                cfg.w,
                cfg.stop_grad_paths,
            )?;
            if !terms.total.is_finite() || terms.total < -1e-9 {
                return Err(KgcError::Divergence(format!(
                    "non-finite or negative loss {} at step {step}; batch heads {:?}",
                    terms.total,
                    batch.iter().map(|b| b.head.0).collect::<Vec<_>>()
                )));
            }
            if !cfg.tau_learnable {
                grads.log_tau = 0.0;
            }
            clip_global_norm(&mut grads, cfg.grad_clip);

            let lr = lr_at_step(cfg, step, total_steps);
            opt.step(&mut params, &grads, lr);

            let m = StepMetrics {
                step,
                lr,
                loss: terms.total,
                hr_t: terms.hr_t,
                hp_t: terms.hp_t,
                hrs_t: terms.hrs_t,
                hrs_p: terms.hrs_p,
                tau: params.tau(),
            };
            on_step(&m);
            steps_log.push(m);
            epoch_loss.add(terms.total);
            epoch_batches += 1;
            step += 1;
        }
        epochs_log.push(EpochMetrics {
            epoch,
            mean_loss: epoch_loss.value() / epoch_batches.max(1) as f64,
        });
    }

    Ok(TrainOutput {
        params,
        opt,
        steps: steps_log,
        epochs: epochs_log,
    })
}

fn fisher_yates(items: &mut [usize], rng: &mut rand_chacha::ChaCha8Rng) {
    use rand::Rng;
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

fn clip_global_norm(grads: &mut crate::encoder::ModelGrads, clip: f64) {
    let mut sq = 0.0;
    for (_, block) in grads.blocks() {
        for v in block {
            sq += v * v;
        }
    }
    let norm = sq.sqrt();
    if norm > clip {
        let scale = clip / norm;
        for (_, block) in grads.blocks_mut() {
            for v in block {
                *v *= scale;
            }
        }
    }
}
