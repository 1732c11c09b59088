//! Dual encoder over symbolic token sequences.
//!
//! Queries ([CLS] h [SEP] r ... [SEP]) and tail entities ([CLS] t [SEP]) run
//! through two independent parameter stacks: token + learned position
//! embeddings, mean pooling, a two-layer ReLU MLP, and L2 normalization.
//! Soft queries splice l trainable prompt vectors S_r = W2·ReLU(W1·x_r)
//! into the embedded sequence right after the relation token. Every relation
//! (forward and inverse) owns one latent row x_r; W1/W2 are shared.
//!
//! Forward passes record a trace so the trainer can run the matching
//! hand-derived backward pass; see [`backward_from_trace`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KgcError, Result};
use crate::kg::{EntityId, RelationId};
use crate::paths::RelationPath;
use crate::rng::{phase, phase_rng};
use crate::tensor::{dot, l2_norm, Tensor};

/// Token ids: specials first, then entities, then relations (with inverses).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenVocab {
    pub n_entities: u32,
    pub n_relations: u32,
}

impl TokenVocab {
    pub const PAD: u32 = 0;
    pub const CLS: u32 = 1;
    pub const SEP: u32 = 2;
    const SPECIALS: u32 = 3;

    pub fn new(n_entities: usize, n_relations: usize) -> Self {
        TokenVocab {
            n_entities: n_entities as u32,
            n_relations: n_relations as u32,
        }
    }

    #[inline]
    pub fn entity(&self, e: EntityId) -> u32 {
        debug_assert!(e.0 < self.n_entities);
        Self::SPECIALS + e.0
    }

    #[inline]
    pub fn relation(&self, r: RelationId) -> u32 {
        debug_assert!(r.0 < self.n_relations);
        Self::SPECIALS + self.n_entities + r.0
    }

    pub fn size(&self) -> usize {
        (Self::SPECIALS + self.n_entities + self.n_relations) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryKind {
    Relation,
    Path2,
    Path3,
    Soft,
}

/// Token-level query. For `Soft` queries, `soft_slot` is the position where
/// the l prompt vectors are spliced in at the embedding level and
/// `soft_relation` selects the x_r row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySequence {
    pub kind: QueryKind,
    pub tokens: Vec<u32>,
    pub soft_slot: Option<usize>,
    pub soft_relation: Option<RelationId>,
}

/// Builds query token layouts. `prefix_paths` controls whether path queries
/// carry the target relation as a prefix before the path relations.
#[derive(Debug, Clone, Copy)]
pub struct QueryBuilder {
    pub vocab: TokenVocab,
    pub max_tokens: usize,
    pub prefix_paths: bool,
}

impl QueryBuilder {
    pub fn new(vocab: TokenVocab, max_tokens: usize, prefix_paths: bool) -> Self {
        QueryBuilder {
            vocab,
            max_tokens,
            prefix_paths,
        }
    }

    /// Assemble the token layout for one query variant.
    ///
    /// `path` must be present exactly for `Path2`/`Path3` and match the hop
    /// count. Overlong sequences lose path tokens from the end, never the
    /// [CLS] h [SEP] r prefix or the trailing [SEP].
    pub fn build(
        &self,
        h: EntityId,
        r: RelationId,
        kind: QueryKind,
        path: Option<&RelationPath>,
    ) -> Result<QuerySequence> {
        let v = &self.vocab;
        match kind {
            QueryKind::Relation | QueryKind::Soft => {
                if path.is_some() {
                    return Err(KgcError::Contract(
                        "path supplied for a non-path query".into(),
                    ));
                }
                let tokens = vec![
                    TokenVocab::CLS,
                    v.entity(h),
                    TokenVocab::SEP,
                    v.relation(r),
                    TokenVocab::SEP,
                ];
                let (slot, rel) = if kind == QueryKind::Soft {
                    (Some(4), Some(r))
                } else {
                    (None, None)
                };
                Ok(QuerySequence {
                    kind,
                    tokens,
                    soft_slot: slot,
                    soft_relation: rel,
                })
            }
            QueryKind::Path2 | QueryKind::Path3 => {
                let want = if kind == QueryKind::Path2 { 2 } else { 3 };
                let path = path.ok_or_else(|| {
                    KgcError::Contract("path query requires a relation path".into())
                })?;
                if path.hops() != want {
                    return Err(KgcError::Contract(format!(
                        "hop count mismatch: query wants {want}, path has {}",
                        path.hops()
                    )));
                }
                let mut tokens = vec![TokenVocab::CLS, v.entity(h), TokenVocab::SEP];
                if self.prefix_paths {
                    tokens.push(v.relation(r));
                }
                let budget = self.max_tokens.saturating_sub(tokens.len() + 1);
                for rel in path.relations.iter().take(budget) {
                    tokens.push(v.relation(*rel));
                }
                tokens.push(TokenVocab::SEP);
                Ok(QuerySequence {
                    kind,
                    tokens,
                    soft_slot: None,
                    soft_relation: None,
                })
            }
        }
    }

    pub fn entity_sequence(&self, t: EntityId) -> Vec<u32> {
        vec![TokenVocab::CLS, self.vocab.entity(t), TokenVocab::SEP]
    }
}

/// One encoder's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderStack {
    pub tok: Tensor,
    pub pos: Tensor,
    pub w1: Tensor,
    pub b1: Vec<f64>,
    pub w2: Tensor,
    pub b2: Vec<f64>,
}

/// Per-relation latent vectors and the shared projection producing S_r.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftStack {
    /// m × d_in; one row per relation, inverses included.
    pub x: Tensor,
    /// d_h × d_in.
    pub w1: Tensor,
    /// (l · d_tok) × d_h.
    pub w2: Tensor,
    pub l: usize,
    pub d_tok: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d_tok: usize,
    pub d_proj: usize,
    pub d_emb: usize,
    pub d_in: usize,
    pub d_h: usize,
    pub l: usize,
    pub max_tokens: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            d_tok: 64,
            d_proj: 128,
            d_emb: 64,
            d_in: 144,
            d_h: 72,
            l: 8,
            max_tokens: 50,
        }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.d_tok,
            self.d_proj,
            self.d_emb,
            self.d_in,
            self.d_h,
            self.l,
        ];
        if positive.iter().any(|&d| d == 0) {
            return Err(KgcError::Config(
                "all encoder dimensions must be positive".into(),
            ));
        }
        if self.max_tokens < 5 + self.l {
            return Err(KgcError::Config(format!(
                "max_tokens {} cannot fit a soft query (5 + l = {})",
                self.max_tokens,
                5 + self.l
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub query: EncoderStack,
    pub entity: EncoderStack,
    pub soft: SoftStack,
    /// Temperature stored as ln τ so τ stays positive while training.
    pub log_tau: f64,
    pub dims: ModelDims,
    pub vocab: TokenVocab,
}

fn init_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Tensor {
    let scale = 1.0 / (fan_in as f64).sqrt();
    let mut t = Tensor::zeros(rows, cols);
    for v in &mut t.data {
        *v = (rng.random::<f64>() * 2.0 - 1.0) * scale;
    }
    t.quantize_f32();
    t
}

fn init_stack(rng: &mut ChaCha8Rng, vocab_size: usize, dims: &ModelDims) -> EncoderStack {
    EncoderStack {
        tok: init_tensor(rng, vocab_size, dims.d_tok, dims.d_tok),
        pos: init_tensor(rng, dims.max_tokens, dims.d_tok, dims.d_tok),
        w1: init_tensor(rng, dims.d_proj, dims.d_tok, dims.d_tok),
        b1: vec![0.0; dims.d_proj],
        w2: init_tensor(rng, dims.d_emb, dims.d_proj, dims.d_proj),
        b2: vec![0.0; dims.d_emb],
    }
}

impl ModelParams {
    /// Seeded initialization: uniform(±1/√fan_in) everywhere, biases zero,
    /// values snapped to the f32 grid.
    pub fn init(vocab: TokenVocab, dims: ModelDims, tau_init: f64, seed: u64) -> Result<Self> {
        dims.validate()?;
        if tau_init <= 0.0 {
            return Err(KgcError::Config("tau_init must be positive".into()));
        }
        let mut rng = phase_rng(seed, phase::PARAM_INIT, 0);
        let query = init_stack(&mut rng, vocab.size(), &dims);
        let entity = init_stack(&mut rng, vocab.size(), &dims);
        let soft = SoftStack {
            x: init_tensor(&mut rng, vocab.n_relations as usize, dims.d_in, dims.d_in),
            w1: init_tensor(&mut rng, dims.d_h, dims.d_in, dims.d_in),
            w2: init_tensor(&mut rng, dims.l * dims.d_tok, dims.d_h, dims.d_h),
            l: dims.l,
            d_tok: dims.d_tok,
        };
        Ok(ModelParams {
            query,
            entity,
            soft,
            log_tau: (tau_init.ln() as f32) as f64,
            dims,
            vocab,
        })
    }

    pub fn tau(&self) -> f64 {
        self.log_tau.exp()
    }
}

/// Forward pieces of S_r needed for its backward pass.
#[derive(Debug, Clone)]
pub struct SoftTrace {
    pub relation: RelationId,
    /// W1·x_r before ReLU.
    pub pre: Vec<f64>,
    /// ReLU(W1·x_r).
    pub act: Vec<f64>,
}

/// S_r = W2·ReLU(W1·x_r) as one flat l·d_tok vector (row-major l × d_tok).
pub fn soft_path_vectors(soft: &SoftStack, r: RelationId) -> (Vec<f64>, SoftTrace) {
    let x_r = soft.x.row(r.0 as usize);
    let pre = soft.w1.matvec(x_r);
    let act: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
    let s = soft.w2.matvec(&act);
    (
        s,
        SoftTrace {
            relation: r,
            pre,
            act,
        },
    )
}

/// Where each embedded position came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosSource {
    Token(u32),
    /// k-th prompt vector of the soft relation.
    Prompt(usize),
}

/// Everything the backward pass needs about one encoded sequence.
#[derive(Debug, Clone)]
pub struct EncodeTrace {
    pub sources: Vec<PosSource>,
    pub pooled: Vec<f64>,
    pub n_pooled: usize,
    pub z1: Vec<f64>,
    pub a1: Vec<f64>,
    pub z2: Vec<f64>,
    pub norm: f64,
    pub out: Vec<f64>,
    pub soft: Option<SoftTrace>,
}

/// Which parameter stack a sequence ran through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Query,
    Entity,
}

fn encode_sources(
    stack: &EncoderStack,
    sources: Vec<PosSource>,
    soft_vec: Option<(Vec<f64>, SoftTrace)>,
) -> EncodeTrace {
    let d_tok = stack.tok.cols;
    let (s_vec, s_trace) = match soft_vec {
        Some((v, t)) => (Some(v), Some(t)),
        None => (None, None),
    };

    let mut pooled = vec![0.0; d_tok];
    let mut n_pooled = 0usize;
    for (p, src) in sources.iter().enumerate() {
        let base: &[f64] = match *src {
            PosSource::Token(tok) => {
                if tok == TokenVocab::PAD {
                    continue;
                }
                stack.tok.row(tok as usize)
            }
            PosSource::Prompt(k) => {
                let v = s_vec.as_ref().expect("prompt position without soft vector");
                &v[k * d_tok..(k + 1) * d_tok]
            }
        };
        let posrow = stack.pos.row(p);
        for ((acc, b), q) in pooled.iter_mut().zip(base).zip(posrow) {
            *acc += b + q;
        }
        n_pooled += 1;
    }
    assert!(n_pooled > 0, "cannot encode an all-PAD sequence");
    for v in &mut pooled {
        *v /= n_pooled as f64;
    }

    let mut z1 = stack.w1.matvec(&pooled);
    for (z, b) in z1.iter_mut().zip(&stack.b1) {
        *z += b;
    }
    let a1: Vec<f64> = z1.iter().map(|&v| v.max(0.0)).collect();
    let mut z2 = stack.w2.matvec(&a1);
    for (z, b) in z2.iter_mut().zip(&stack.b2) {
        *z += b;
    }
    let norm = l2_norm(&z2);
    assert!(norm > 0.0, "zero pre-normalization vector");
    let out: Vec<f64> = z2.iter().map(|&v| v / norm).collect();

    EncodeTrace {
        sources,
        pooled,
        n_pooled,
        z1,
        a1,
        z2,
        norm,
        out,
        soft: s_trace,
    }
}

/// Encode a query through the query stack, splicing soft prompts when the
/// sequence asks for them.
pub fn encode_query(params: &ModelParams, q: &QuerySequence) -> EncodeTrace {
    let mut sources: Vec<PosSource> = Vec::with_capacity(q.tokens.len() + params.soft.l);
    let mut soft_vec = None;
    match (q.soft_slot, q.soft_relation) {
        (Some(slot), Some(rel)) => {
            for (i, &tok) in q.tokens.iter().enumerate() {
                if i == slot {
                    for k in 0..params.soft.l {
                        sources.push(PosSource::Prompt(k));
                    }
                }
                sources.push(PosSource::Token(tok));
            }
            if slot == q.tokens.len() {
                for k in 0..params.soft.l {
                    sources.push(PosSource::Prompt(k));
                }
            }
            soft_vec = Some(soft_path_vectors(&params.soft, rel));
        }
        _ => {
            sources.extend(q.tokens.iter().map(|&t| PosSource::Token(t)));
        }
    }
    assert!(
        sources.len() <= params.dims.max_tokens,
        "sequence exceeds max_tokens"
    );
    encode_sources(&params.query, sources, soft_vec)
}

/// Encode a tail entity ([CLS] t [SEP]) through the entity stack.
pub fn encode_entity(params: &ModelParams, t: EntityId) -> EncodeTrace {
    let sources = vec![
        PosSource::Token(TokenVocab::CLS),
        PosSource::Token(params.vocab.entity(t)),
        PosSource::Token(TokenVocab::SEP),
    ];
    encode_sources(&params.entity, sources, None)
}

/// Cosine of two unit-norm embeddings: a plain dot product in [-1, 1].
pub fn score(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b)
}

/// Entity embedding matrix, one row per entity id.
pub fn encode_all_entities(params: &ModelParams, n_entities: usize) -> Tensor {
    use rayon::prelude::*;
    let rows: Vec<Vec<f64>> = (0..n_entities as u32)
        .into_par_iter()
        .map(|e| encode_entity(params, EntityId(e)).out)
        .collect();
    let mut m = Tensor::zeros(n_entities, params.dims.d_emb);
    for (i, row) in rows.into_iter().enumerate() {
        m.row_mut(i).copy_from_slice(&row);
    }
    m
}

/// Gradient buffers mirroring [`ModelParams`].
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub query: EncoderStack,
    pub entity: EncoderStack,
    pub soft: SoftStack,
    pub log_tau: f64,
}

impl ModelGrads {
    pub fn zeros_like(p: &ModelParams) -> Self {
        let zero_stack = |s: &EncoderStack| EncoderStack {
            tok: Tensor::zeros(s.tok.rows, s.tok.cols),
            pos: Tensor::zeros(s.pos.rows, s.pos.cols),
            w1: Tensor::zeros(s.w1.rows, s.w1.cols),
            b1: vec![0.0; s.b1.len()],
            w2: Tensor::zeros(s.w2.rows, s.w2.cols),
            b2: vec![0.0; s.b2.len()],
        };
        ModelGrads {
            query: zero_stack(&p.query),
            entity: zero_stack(&p.entity),
            soft: SoftStack {
                x: Tensor::zeros(p.soft.x.rows, p.soft.x.cols),
                w1: Tensor::zeros(p.soft.w1.rows, p.soft.w1.cols),
                w2: Tensor::zeros(p.soft.w2.rows, p.soft.w2.cols),
                l: p.soft.l,
                d_tok: p.soft.d_tok,
            },
            log_tau: 0.0,
        }
    }
}

/// Backpropagate `d_out` (gradient w.r.t. the unit-norm output) through one
/// recorded forward pass, accumulating into `grads`.
pub fn backward_from_trace(
    params: &ModelParams,
    side: Side,
    trace: &EncodeTrace,
    d_out: &[f64],
    grads: &mut ModelGrads,
) {
    let (stack, gstack) = match side {
        Side::Query => (&params.query, &mut grads.query),
        Side::Entity => (&params.entity, &mut grads.entity),
    };

    // out = z2 / ||z2||  ⇒  d_z2 = (d_out − (d_out·out)·out) / ||z2||
    let coeff = dot(d_out, &trace.out);
    let d_z2: Vec<f64> = d_out
        .iter()
        .zip(&trace.out)
        .map(|(&g, &o)| (g - coeff * o) / trace.norm)
        .collect();

    for (gb, dz) in gstack.b2.iter_mut().zip(&d_z2) {
        *gb += dz;
    }
    gstack.w2.add_outer(&d_z2, &trace.a1);
    let d_a1 = stack.w2.matvec_transposed(&d_z2);
    let d_z1: Vec<f64> = d_a1
        .iter()
        .zip(&trace.z1)
        .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
        .collect();
    for (gb, dz) in gstack.b1.iter_mut().zip(&d_z1) {
        *gb += dz;
    }
    gstack.w1.add_outer(&d_z1, &trace.pooled);
    let d_pooled = stack.w1.matvec_transposed(&d_z1);

    let d_tok = stack.tok.cols;
    let d_each: Vec<f64> = d_pooled
        .iter()
        .map(|&v| v / trace.n_pooled as f64)
        .collect();
    let mut d_soft_vec: Option<Vec<f64>> = trace
        .soft
        .as_ref()
        .map(|_| vec![0.0; params.soft.l * d_tok]);

    for (p, src) in trace.sources.iter().enumerate() {
        match *src {
            PosSource::Token(tok) => {
                if tok == TokenVocab::PAD {
                    continue;
                }
                let row = gstack.tok.row_mut(tok as usize);
                for (g, d) in row.iter_mut().zip(&d_each) {
                    *g += d;
                }
            }
            PosSource::Prompt(k) => {
                let ds = d_soft_vec.as_mut().expect("prompt without soft trace");
                for (g, d) in ds[k * d_tok..(k + 1) * d_tok].iter_mut().zip(&d_each) {
                    *g += d;
                }
            }
        }
        let row = gstack.pos.row_mut(p);
        for (g, d) in row.iter_mut().zip(&d_each) {
            *g += d;
        }
    }

    if let (Some(ds), Some(strace)) = (d_soft_vec, &trace.soft) {
        // S = W2·ReLU(W1·x_r)
        grads.soft.w2.add_outer(&ds, &strace.act);
        let d_act = params.soft.w2.matvec_transposed(&ds);
        let d_pre: Vec<f64> = d_act
            .iter()
            .zip(&strace.pre)
            .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
            .collect();
        let x_r = params.soft.x.row(strace.relation.0 as usize);
        grads.soft.w1.add_outer(&d_pre, x_r);
        let d_x = params.soft.w1.matvec_transposed(&d_pre);
        let gx = grads.soft.x.row_mut(strace.relation.0 as usize);
        for (g, d) in gx.iter_mut().zip(&d_x) {
            *g += d;
        }
    }
}

/// Canonical parameter block order shared by the optimizer, clipping,
/// checkpoints, and the finite-difference checker.
pub const BLOCK_NAMES: [&str; 16] = [
    "query.tok",
    "query.pos",
    "query.w1",
    "query.b1",
    "query.w2",
    "query.b2",
    "entity.tok",
    "entity.pos",
    "entity.w1",
    "entity.b1",
    "entity.w2",
    "entity.b2",
    "soft.x",
    "soft.w1",
    "soft.w2",
    "log_tau",
];

macro_rules! impl_blocks {
    ($ty:ty) => {
        impl $ty {
            pub fn blocks(&self) -> Vec<(&'static str, &[f64])> {
                vec![
                    ("query.tok", &self.query.tok.data[..]),
                    ("query.pos", &self.query.pos.data[..]),
                    ("query.w1", &self.query.w1.data[..]),
                    ("query.b1", &self.query.b1[..]),
                    ("query.w2", &self.query.w2.data[..]),
                    ("query.b2", &self.query.b2[..]),
                    ("entity.tok", &self.entity.tok.data[..]),
                    ("entity.pos", &self.entity.pos.data[..]),
                    ("entity.w1", &self.entity.w1.data[..]),
                    ("entity.b1", &self.entity.b1[..]),
                    ("entity.w2", &self.entity.w2.data[..]),
                    ("entity.b2", &self.entity.b2[..]),
                    ("soft.x", &self.soft.x.data[..]),
                    ("soft.w1", &self.soft.w1.data[..]),
                    ("soft.w2", &self.soft.w2.data[..]),
                    ("log_tau", std::slice::from_ref(&self.log_tau)),
                ]
            }

            pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
                vec![
                    ("query.tok", &mut self.query.tok.data[..]),
                    ("query.pos", &mut self.query.pos.data[..]),
                    ("query.w1", &mut self.query.w1.data[..]),
                    ("query.b1", &mut self.query.b1[..]),
                    ("query.w2", &mut self.query.w2.data[..]),
                    ("query.b2", &mut self.query.b2[..]),
                    ("entity.tok", &mut self.entity.tok.data[..]),
                    ("entity.pos", &mut self.entity.pos.data[..]),
                    ("entity.w1", &mut self.entity.w1.data[..]),
                    ("entity.b1", &mut self.entity.b1[..]),
                    ("entity.w2", &mut self.entity.w2.data[..]),
                    ("entity.b2", &mut self.entity.b2[..]),
                    ("soft.x", &mut self.soft.x.data[..]),
                    ("soft.w1", &mut self.soft.w1.data[..]),
                    ("soft.w2", &mut self.soft.w2.data[..]),
                    ("log_tau", std::slice::from_mut(&mut self.log_tau)),
                ]
            }
        }
    };
}

impl_blocks!(ModelParams);
impl_blocks!(ModelGrads);

impl ModelParams {
    /// Shapes per block, matching [`BLOCK_NAMES`] order.
    pub fn block_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        self.blocks()
            .iter()
            .map(|(name, data)| {
                let shape = match *name {
                    "query.tok" | "entity.tok" => vec![self.vocab.size(), self.dims.d_tok],
                    "query.pos" | "entity.pos" => vec![self.dims.max_tokens, self.dims.d_tok],
                    "query.w1" | "entity.w1" => vec![self.dims.d_proj, self.dims.d_tok],
                    "query.b1" | "entity.b1" => vec![self.dims.d_proj],
                    "query.w2" | "entity.w2" => vec![self.dims.d_emb, self.dims.d_proj],
                    "query.b2" | "entity.b2" => vec![self.dims.d_emb],
                    "soft.x" => vec![self.vocab.n_relations as usize, self.dims.d_in],
                    "soft.w1" => vec![self.dims.d_h, self.dims.d_in],
                    "soft.w2" => vec![self.dims.l * self.dims.d_tok, self.dims.d_h],
                    "log_tau" => vec![1],
                    other => panic!("unknown block {other}"),
                };
                debug_assert_eq!(shape.iter().product::<usize>(), data.len());
                (*name, shape)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_params(seed: u64) -> (ModelParams, QueryBuilder) {
        let vocab = TokenVocab::new(6, 4);
        let dims = ModelDims {
            d_tok: 8,
            d_proj: 10,
            d_emb: 6,
            d_in: 5,
            d_h: 4,
            l: 3,
            max_tokens: 12,
        };
        let params = ModelParams::init(vocab, dims, 0.05, seed).unwrap();
        let qb = QueryBuilder::new(vocab, dims.max_tokens, true);
        (params, qb)
    }

    fn path(rels: &[u32]) -> RelationPath {
        RelationPath {
            relations: rels.iter().map(|&r| RelationId(r)).collect(),
            confidence: 1.0,
        }
    }

    #[test]
    fn query_layouts_match_contract() {
        let (_, qb) = tiny_params(0);
        let h = EntityId(2);
        let r = RelationId(1);

        let rel = qb.build(h, r, QueryKind::Relation, None).unwrap();
        assert_eq!(rel.tokens.len(), 5);
        assert_eq!(rel.tokens[0], TokenVocab::CLS);
        assert_eq!(rel.tokens[2], TokenVocab::SEP);
        assert_eq!(rel.tokens[4], TokenVocab::SEP);

        let p2 = qb
            .build(h, r, QueryKind::Path2, Some(&path(&[0, 3])))
            .unwrap();
        assert_eq!(p2.tokens.len(), 7);

        let p3 = qb
            .build(h, r, QueryKind::Path3, Some(&path(&[0, 3, 2])))
            .unwrap();
        assert_eq!(p3.tokens.len(), 8);

        let soft = qb.build(h, r, QueryKind::Soft, None).unwrap();
        assert_eq!(soft.tokens.len(), 5);
        assert_eq!(soft.soft_slot, Some(4));
        assert_eq!(soft.soft_relation, Some(r));

        // Hop mismatch is a contract error.
        assert!(qb
            .build(h, r, QueryKind::Path2, Some(&path(&[0, 1, 2])))
            .is_err());
        assert!(qb.build(h, r, QueryKind::Path3, None).is_err());
    }

    #[test]
    fn soft_query_embeds_five_tokens_plus_l_prompts() {
        let (params, qb) = tiny_params(0);
        let q = qb
            .build(EntityId(0), RelationId(0), QueryKind::Soft, None)
            .unwrap();
        let trace = encode_query(&params, &q);
        assert_eq!(trace.sources.len(), 5 + params.soft.l);
        assert_eq!(trace.sources[4], PosSource::Prompt(0));
        assert_eq!(
            trace.sources[4 + params.soft.l - 1],
            PosSource::Prompt(params.soft.l - 1)
        );
        assert!(
            matches!(trace.sources[4 + params.soft.l], PosSource::Token(t) if t == TokenVocab::SEP)
        );
    }

    #[test]
    fn truncation_preserves_the_prefix() {
        let (_, mut qb) = tiny_params(0);
        qb.max_tokens = 6;
        let h = EntityId(1);
        let r = RelationId(0);
        let q = qb
            .build(h, r, QueryKind::Path3, Some(&path(&[1, 2, 3])))
            .unwrap();
        assert_eq!(q.tokens.len(), 6);
        assert_eq!(
            &q.tokens[..4],
            &[
                TokenVocab::CLS,
                qb.vocab.entity(h),
                TokenVocab::SEP,
                qb.vocab.relation(r)
            ]
        );
        assert_eq!(*q.tokens.last().unwrap(), TokenVocab::SEP);
    }

    #[test]
    fn soft_vectors_shape_and_zero_latent() {
        let (mut params, _) = tiny_params(0);
        let (s, _) = soft_path_vectors(&params.soft, RelationId(1));
        assert_eq!(s.len(), params.soft.l * params.soft.d_tok);

        params.soft.x.row_mut(1).fill(0.0);
        let (s0, _) = soft_path_vectors(&params.soft, RelationId(1));
        assert!(s0.iter().all(|&v| v == 0.0));

        // Distinct latents generally produce distinct prompt vectors.
        let (s2, _) = soft_path_vectors(&params.soft, RelationId(2));
        let (s3, _) = soft_path_vectors(&params.soft, RelationId(3));
        assert_ne!(s2, s3);
    }

    #[test]
    fn outputs_are_unit_norm_and_pure() {
        let (params, qb) = tiny_params(1);
        for kind in [QueryKind::Relation, QueryKind::Soft] {
            let q = qb.build(EntityId(3), RelationId(2), kind, None).unwrap();
            let a = encode_query(&params, &q);
            let b = encode_query(&params, &q);
            assert!((l2_norm(&a.out) - 1.0).abs() < 1e-6);
            assert_eq!(a.out, b.out);
        }
        let e = encode_entity(&params, EntityId(0));
        assert!((l2_norm(&e.out) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn perturbing_a_used_token_changes_the_output() {
        let (mut params, qb) = tiny_params(2);
        let q = qb
            .build(EntityId(3), RelationId(2), QueryKind::Relation, None)
            .unwrap();
        let before = encode_query(&params, &q).out;
        let tok = params.vocab.entity(EntityId(3)) as usize;
        params.query.tok.row_mut(tok)[0] += 1e-3;
        let after = encode_query(&params, &q).out;
        assert_ne!(before, after);
    }

    #[test]
    fn soft_prompt_isolation_and_shared_coupling() {
        let (mut params, qb) = tiny_params(3);
        let q = qb
            .build(EntityId(0), RelationId(1), QueryKind::Soft, None)
            .unwrap();
        let before = encode_query(&params, &q).out;

        // Changing another relation's latent leaves this query bitwise intact.
        params.soft.x.row_mut(3)[0] += 0.5;
        let after = encode_query(&params, &q).out;
        assert_eq!(before, after);

        // Changing the shared W1 changes S_r for any relation with x_r ≠ 0.
        params.soft.w1.row_mut(0)[0] += 0.5;
        let coupled = encode_query(&params, &q).out;
        assert_ne!(before, coupled);
    }

    #[test]
    fn batch_entity_matrix_equals_per_entity_encoding() {
        let (params, _) = tiny_params(4);
        let m = encode_all_entities(&params, 6);
        for e in 0..6u32 {
            assert_eq!(
                m.row(e as usize),
                &encode_entity(&params, EntityId(e)).out[..]
            );
        }
        for e in 0..6 {
            let same = (0..6).filter(|&o| m.row(o) == m.row(e)).count();
            assert_eq!(same, 1, "entity rows must be distinct under random init");
        }
    }

    #[test]
    fn score_is_a_plain_dot_product() {
        let (params, qb) = tiny_params(5);
        let q = qb
            .build(EntityId(1), RelationId(0), QueryKind::Relation, None)
            .unwrap();
        let u = encode_query(&params, &q).out;
        let v = encode_entity(&params, EntityId(2)).out;
        assert!((score(&u, &u) - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        assert!((score(&u, &neg) + 1.0).abs() < 1e-12);
        let manual: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((score(&u, &v) - manual).abs() < 1e-12);
        assert!(score(&u, &v) >= -1.0 - 1e-12 && score(&u, &v) <= 1.0 + 1e-12);
    }
}
