//! The four-term contrastive loss and its hand-derived gradients.
//!
//! Every term is an InfoNCE instance: a query embedding against a candidate
//! list with one target index, at shared temperature τ. Candidates for the
//! tail-target terms are the batch's tail embeddings; candidates for the
//! soft→path alignment term are the batch's path embeddings. Only in-batch
//! negatives are used. Sub-terms whose hop count is absent from the batch
//! are dropped, and each sub-loss is normalized by its contributing count.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{
    backward_from_trace, encode_entity, encode_query, EncodeTrace, ModelGrads, ModelParams,
    QueryBuilder, QueryKind, Side,
};
use crate::error::{KgcError, Result};
use crate::kg::{EntityId, RelationId};
use crate::paths::RelationPath;
use crate::tensor::{axpy, dot, KahanSum};

/// One training triple with the path variants sampled for this epoch. The
/// relation and soft variants are always available; path variants exist iff
/// the mined index holds a path of that hop count.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
    pub path2: Option<RelationPath>,
    pub path3: Option<RelationPath>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LossTerms {
    /// Relation query → tail.
    pub hr_t: f64,
    /// Path queries → tail (2-hop and 3-hop sub-terms summed).
    pub hp_t: f64,
    /// Soft query → tail.
    pub hrs_t: f64,
    /// Soft query → path embeddings.
    pub hrs_p: f64,
    /// w-weighted total.
    pub total: f64,
}

/// Multi-positive InfoNCE: the mean, over query variants, of
/// −log softmax(cos(q, c)/τ)[target]. Stabilized by max subtraction.
pub fn info_nce_multi(
    query_embs: &[&[f64]],
    target: usize,
    candidates: &[&[f64]],
    tau: f64,
) -> Result<f64> {
    if tau <= 0.0 {
        return Err(KgcError::Contract("temperature must be positive".into()));
    }
    if query_embs.is_empty() {
        return Err(KgcError::Contract("at least one positive required".into()));
    }
    if target >= candidates.len() {
        return Err(KgcError::Contract("target index out of range".into()));
    }
    let mut acc = KahanSum::new();
    for q in query_embs {
        acc.add(nce_core(q, target, candidates, tau).loss);
    }
    Ok(acc.value() / query_embs.len() as f64)
}

struct NceCore {
    loss: f64,
    /// softmax − one_hot(target); the logit-space gradient.
    pm: Vec<f64>,
    /// dL/d(ln τ) for this instance.
    d_log_tau: f64,
}

fn nce_core(q: &[f64], target: usize, cands: &[&[f64]], tau: f64) -> NceCore {
    debug_assert!(target < cands.len());
    let logits: Vec<f64> = cands.iter().map(|c| dot(q, c) / tau).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut denom = KahanSum::new();
    for &l in &logits {
        denom.add((l - max).exp());
    }
    let lse = max + denom.value().ln();
    let loss = lse - logits[target];

    let mut pm: Vec<f64> = logits
        .iter()
        .map(|&l| (l - max).exp() / denom.value())
        .collect();
    pm[target] -= 1.0;
    let mut sum_pm_logits = KahanSum::new();
    for (p, l) in pm.iter().zip(&logits) {
        sum_pm_logits.add(p * l);
    }
    NceCore {
        loss,
        pm,
        d_log_tau: -sum_pm_logits.value(),
    }
}

/// Run one InfoNCE instance and push its gradients: `coeff` is the weight of
/// this instance inside the total loss (term weight / contributing count).
/// Candidate gradients are routed through `d_cand(index, scale, query_out)`.
fn apply_nce(
    q_out: &[f64],
    target: usize,
    cands: &[&[f64]],
    tau: f64,
    coeff: f64,
    d_q: &mut [f64],
    mut d_cand: impl FnMut(usize, f64, &[f64]),
    d_log_tau: &mut KahanSum,
) -> f64 {
    let core = nce_core(q_out, target, cands, tau);
    if coeff != 0.0 {
        let scale = coeff / tau;
        for (j, c) in cands.iter().enumerate() {
            let g = scale * core.pm[j];
            if g != 0.0 {
                axpy(d_q, g, c);
                d_cand(j, g, q_out);
            }
        }
        d_log_tau.add(coeff * core.d_log_tau);
    }
    core.loss
}

/// Uniform (or confidence-weighted) choice of one mined path.
pub fn sample_path(
    paths: &[RelationPath],
    by_confidence: bool,
    rng: &mut ChaCha8Rng,
) -> Option<RelationPath> {
    if paths.is_empty() {
        return None;
    }
    if paths.len() == 1 {
        return Some(paths[0].clone());
    }
    if by_confidence {
        let total: f64 = paths.iter().map(|p| p.confidence).sum();
        let mut x = rng.random::<f64>() * total;
        for p in paths {
            x -= p.confidence;
            if x <= 0.0 {
                return Some(p.clone());
            }
        }
        return Some(paths[paths.len() - 1].clone());
    }
    Some(paths[rng.random_range(0..paths.len())].clone())
}

/// Forward + backward over one batch.
///
/// L = w1·L_hr_t + w2·L_hp_t + w3·L_hrs_t + w4·L_hrs_p, with gradients for
/// every parameter block accumulated in one pass. Pure in (params, batch):
/// path variants are fixed by the caller, so repeated evaluation is
/// bit-identical, which the finite-difference checker relies on.
pub fn batch_loss(
    params: &ModelParams,
    builder: &QueryBuilder,
    batch: &[TrainExample],
    w: [f64; 4],
    stop_grad_paths: bool,
) -> Result<(LossTerms, ModelGrads)> {
    let n = batch.len();
    if n < 2 {
        return Err(KgcError::Contract(
            "batch must have at least 2 members for in-batch negatives".into(),
        ));
    }
    let tau = params.tau();
    let d_emb = params.dims.d_emb;

    let BatchEncodings {
        tails,
        rel_q,
        soft_q,
        p2_q,
        p3_q,
    } = encode_batch(params, builder, batch)?;

    let mut d_tails = vec![vec![0.0; d_emb]; n];
    let mut d_rel = vec![vec![0.0; d_emb]; n];
    let mut d_soft = vec![vec![0.0; d_emb]; n];
    let mut d_p2: Vec<Option<Vec<f64>>> = p2_q
        .iter()
        .map(|q| q.as_ref().map(|_| vec![0.0; d_emb]))
        .collect();
    let mut d_p3: Vec<Option<Vec<f64>>> = p3_q
        .iter()
        .map(|q| q.as_ref().map(|_| vec![0.0; d_emb]))
        .collect();
    let mut d_log_tau = KahanSum::new();

    let tail_outs: Vec<&[f64]> = tails.iter().map(|t| &t.out[..]).collect();
    let b2: Vec<usize> = (0..n).filter(|&i| p2_q[i].is_some()).collect();
    let b3: Vec<usize> = (0..n).filter(|&i| p3_q[i].is_some()).collect();

    // L_hr_t: relation query against in-batch tails.
    let mut hr_sum = KahanSum::new();
    let coeff_hr = w[0] / n as f64;
    for i in 0..n {
        hr_sum.add(apply_nce(
            &rel_q[i].out,
            i,
            &tail_outs,
            tau,
            coeff_hr,
            &mut d_rel[i],
            |j, g, q| axpy(&mut d_tails[j], g, q),
            &mut d_log_tau,
        ));
    }
    let hr_t = hr_sum.value() / n as f64;

    // L_hrs_t: soft query against in-batch tails.
    let mut hrs_sum = KahanSum::new();
    let coeff_hrs = w[2] / n as f64;
    for i in 0..n {
        hrs_sum.add(apply_nce(
            &soft_q[i].out,
            i,
            &tail_outs,
            tau,
            coeff_hrs,
            &mut d_soft[i],
            |j, g, q| axpy(&mut d_tails[j], g, q),
            &mut d_log_tau,
        ));
    }
    let hrs_t = hrs_sum.value() / n as f64;

    // L_hp_t: path queries against in-batch tails, per hop count, each
    // averaged over the members that have that hop count.
    let mut hp_t = 0.0;
    for (list, queries, d_bufs) in [
        (&b2, &p2_q, &mut d_p2),
        (&b3, &p3_q, &mut d_p3),
    ] {
        if list.is_empty() {
            continue;
        }
        let coeff = w[1] / list.len() as f64;
        let mut sum = KahanSum::new();
        for &i in list.iter() {
            let trace = queries[i].as_ref().unwrap();
            sum.add(apply_nce(
                &trace.out,
                i,
                &tail_outs,
                tau,
                coeff,
                d_bufs[i].as_mut().unwrap(),
                |j, g, q| axpy(&mut d_tails[j], g, q),
                &mut d_log_tau,
            ));
        }
        hp_t += sum.value() / list.len() as f64;
    }

    // L_hrs_p: soft query against the batch's path embeddings. The target is
    // the member's own path embedding of the given hop count; the candidate
    // pool is every path embedding in the batch.
    let mut path_outs: Vec<&[f64]> = Vec::with_capacity(b2.len() + b3.len());
    let mut owner: Vec<(usize, u8)> = Vec::with_capacity(b2.len() + b3.len());
    let mut pos2 = vec![usize::MAX; n];
    let mut pos3 = vec![usize::MAX; n];
    for &i in &b2 {
        pos2[i] = path_outs.len();
        path_outs.push(&p2_q[i].as_ref().unwrap().out);
        owner.push((i, 2));
    }
    for &i in &b3 {
        pos3[i] = path_outs.len();
        path_outs.push(&p3_q[i].as_ref().unwrap().out);
        owner.push((i, 3));
    }
    let mut hrs_p = 0.0;
    for (list, pos) in [(&b2, &pos2), (&b3, &pos3)] {
        if list.is_empty() {
            continue;
        }
        let coeff = w[3] / list.len() as f64;
        let mut sum = KahanSum::new();
        for &i in list.iter() {
            sum.add(apply_nce(
                &soft_q[i].out,
                pos[i],
                &path_outs,
                tau,
                coeff,
                &mut d_soft[i],
                |j, g, q| {
                    if stop_grad_paths {
                        return;
                    }
                    let (o, hop) = owner[j];
                    let buf = if hop == 2 {
                        d_p2[o].as_mut().unwrap()
                    } else {
                        d_p3[o].as_mut().unwrap()
                    };
                    axpy(buf, g, q);
                },
                &mut d_log_tau,
            ));
        }
        hrs_p += sum.value() / list.len() as f64;
    }

    // Backward through the encoders.
    let mut grads = ModelGrads::zeros_like(params);
    for i in 0..n {
        backward_from_trace(params, Side::Entity, &tails[i], &d_tails[i], &mut grads);
        backward_from_trace(params, Side::Query, &rel_q[i], &d_rel[i], &mut grads);
        backward_from_trace(params, Side::Query, &soft_q[i], &d_soft[i], &mut grads);
        if let (Some(trace), Some(d)) = (&p2_q[i], &d_p2[i]) {
            backward_from_trace(params, Side::Query, trace, d, &mut grads);
        }
        if let (Some(trace), Some(d)) = (&p3_q[i], &d_p3[i]) {
            backward_from_trace(params, Side::Query, trace, d, &mut grads);
        }
    }
    grads.log_tau = d_log_tau.value();

    let total = w[0] * hr_t + w[1] * hp_t + w[2] * hrs_t + w[3] * hrs_p;
    Ok((
        LossTerms {
            hr_t,
            hp_t,
            hrs_t,
            hrs_p,
            total,
        },
        grads,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{ModelDims, TokenVocab};

    fn unit(v: &[f64]) -> Vec<f64> {
        let n = crate::tensor::l2_norm(v);
        v.iter().map(|x| x / n).collect()
    }

    /// Textbook single-positive InfoNCE computed the naive way (no max
    /// subtraction): the independent scalar oracle.
    fn naive_infonce(q: &[f64], target: usize, cands: &[&[f64]], tau: f64) -> f64 {
        let exps: Vec<f64> = cands.iter().map(|c| (dot(q, c) / tau).exp()).collect();
        let denom: f64 = exps.iter().sum();
        -(exps[target] / denom).ln()
    }

    #[test]
    fn single_candidate_loss_is_exactly_zero() {
        let q = unit(&[0.3, -0.2, 0.9]);
        let c = unit(&[0.1, 0.4, 0.2]);
        for n_positives in 1..4 {
            let queries: Vec<&[f64]> = (0..n_positives).map(|_| &q[..]).collect();
            let loss = info_nce_multi(&queries, 0, &[&c], 0.05).unwrap();
            assert_eq!(loss, 0.0);
        }
    }

    #[test]
    fn symmetric_two_candidate_loss_is_ln2() {
        // Query orthogonal to both candidates: equal logits.
        let q = vec![1.0, 0.0];
        let c = vec![0.0, 1.0];
        let loss = info_nce_multi(&[&q], 0, &[&c, &c], 1.0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn multi_positive_is_mean_of_singles() {
        let q1 = unit(&[0.3, 0.5, -0.1]);
        let q2 = unit(&[-0.2, 0.8, 0.4]);
        let cands_v: Vec<Vec<f64>> = vec![
            unit(&[1.0, 0.1, 0.0]),
            unit(&[0.0, 1.0, 0.3]),
            unit(&[-0.5, 0.2, 0.9]),
        ];
        let cands: Vec<&[f64]> = cands_v.iter().map(|c| &c[..]).collect();
        let tau = 0.07;
        let multi = info_nce_multi(&[&q1, &q2], 1, &cands, tau).unwrap();
        let s1 = naive_infonce(&q1, 1, &cands, tau);
        let s2 = naive_infonce(&q2, 1, &cands, tau);
        assert!((multi - (s1 + s2) / 2.0).abs() < 1e-12);

        // |P| = 1 reduces to the textbook loss.
        let single = info_nce_multi(&[&q1], 1, &cands, tau).unwrap();
        assert!((single - s1).abs() < 1e-12);
    }

    #[test]
    fn invalid_temperature_is_a_contract_error() {
        let q = vec![1.0, 0.0];
        assert!(info_nce_multi(&[&q], 0, &[&q], 0.0).is_err());
        assert!(info_nce_multi(&[&q], 0, &[&q], -1.0).is_err());
        assert!(info_nce_multi(&[], 0, &[&q], 1.0).is_err());
    }

    fn tiny_setup(seed: u64) -> (ModelParams, QueryBuilder) {
        let vocab = TokenVocab::new(8, 4);
        let dims = ModelDims {
            d_tok: 8,
            d_proj: 9,
            d_emb: 7,
            d_in: 5,
            d_h: 4,
            l: 2,
            max_tokens: 12,
        };
        let params = ModelParams::init(vocab, dims, 0.5, seed).unwrap();
        let qb = QueryBuilder::new(vocab, dims.max_tokens, true);
        (params, qb)
    }

    fn example(h: u32, r: u32, t: u32, p2: Option<Vec<u32>>, p3: Option<Vec<u32>>) -> TrainExample {
        let mk = |rels: Vec<u32>| RelationPath {
            relations: rels.into_iter().map(RelationId).collect(),
            confidence: 0.5,
        };
        TrainExample {
            head: EntityId(h),
            relation: RelationId(r),
            tail: EntityId(t),
            path2: p2.map(mk),
            path3: p3.map(mk),
        }
    }

    #[test]
    fn pathless_batch_drops_path_terms() {
        let (params, qb) = tiny_setup(0);
        let batch = vec![example(0, 0, 1, None, None), example(2, 1, 3, None, None)];
        let w = [1.0, 1.0, 1.0, 1.0];
        let (terms, _) = batch_loss(&params, &qb, &batch, w, false).unwrap();
        assert_eq!(terms.hp_t, 0.0);
        assert_eq!(terms.hrs_p, 0.0);
        assert!((terms.total - (terms.hr_t + terms.hrs_t)).abs() < 1e-15);
    }

    #[test]
    fn relation_only_weights_reduce_to_plain_infonce() {
        let (params, qb) = tiny_setup(1);
        let batch = vec![
            example(0, 0, 1, Some(vec![1, 2]), None),
            example(2, 1, 3, None, Some(vec![0, 2, 3])),
            example(4, 2, 5, None, None),
        ];
        let (terms, _) = batch_loss(&params, &qb, &batch, [1.0, 0.0, 0.0, 0.0], false).unwrap();

        let tails: Vec<Vec<f64>> = batch
            .iter()
            .map(|ex| encode_entity(&params, ex.tail).out)
            .collect();
        let cands: Vec<&[f64]> = tails.iter().map(|t| &t[..]).collect();
        let mut expect = 0.0;
        for (i, ex) in batch.iter().enumerate() {
            let q = qb.build(ex.head, ex.relation, QueryKind::Relation, None).unwrap();
            let e = encode_query(&params, &q).out;
            expect += naive_infonce(&e, i, &cands, params.tau());
        }
        expect /= batch.len() as f64;
        assert!((terms.total - expect).abs() < 1e-12);
        assert_eq!(terms.total, terms.hr_t);
    }

    #[test]
    fn zero_weight_terms_leave_their_exclusive_parameters_gradientless() {
        let (params, qb) = tiny_setup(2);
        let batch = vec![
            example(0, 0, 1, Some(vec![1, 2]), Some(vec![0, 1, 2])),
            example(2, 1, 3, Some(vec![3, 0]), None),
        ];
        // w3 = w4 = 0: nothing reaches the soft stack.
        let (_, grads) = batch_loss(&params, &qb, &batch, [1.0, 1.0, 0.0, 0.0], false).unwrap();
        assert!(grads.soft.x.data.iter().all(|&g| g == 0.0));
        assert!(grads.soft.w1.data.iter().all(|&g| g == 0.0));
        assert!(grads.soft.w2.data.iter().all(|&g| g == 0.0));

        // With w3 > 0 the soft stack moves.
        let (_, grads) = batch_loss(&params, &qb, &batch, [1.0, 1.0, 1.0, 0.0], false).unwrap();
        assert!(grads.soft.x.data.iter().any(|&g| g != 0.0));
    }

    #[test]
    fn stop_grad_paths_blocks_path_gradients_from_the_alignment_term() {
        let (params, qb) = tiny_setup(3);
        let batch = vec![
            example(0, 0, 1, Some(vec![1, 2]), None),
            example(2, 1, 3, Some(vec![3, 0]), None),
        ];
        // Only the alignment term is active; with stop-grad the path queries
        // (the only query-side sequences with gradients) go quiet, so the
        // query token table receives nothing through them.
        let (_, g_stop) = batch_loss(&params, &qb, &batch, [0.0, 0.0, 0.0, 1.0], true).unwrap();
        let (_, g_flow) = batch_loss(&params, &qb, &batch, [0.0, 0.0, 0.0, 1.0], false).unwrap();
        // Relation 3 only ever appears inside a path query, never as a query
        // relation, so its token row isolates the path-gradient route.
        let path_token = params.vocab.relation(RelationId(3)) as usize;
        let stopped: f64 = g_stop.query.tok.row(path_token).iter().map(|g| g.abs()).sum();
        let flowing: f64 = g_flow.query.tok.row(path_token).iter().map(|g| g.abs()).sum();
        assert_eq!(stopped, 0.0);
        assert!(flowing != 0.0);
    }

    #[test]
    fn batch_loss_is_permutation_invariant_within_tolerance() {
        let (params, qb) = tiny_setup(4);
        let batch = vec![
            example(0, 0, 1, Some(vec![1, 2]), None),
            example(2, 1, 3, None, Some(vec![0, 1, 3])),
            example(4, 2, 5, Some(vec![2, 0]), Some(vec![1, 1, 2])),
            example(6, 3, 7, None, None),
        ];
        let w = [1.0, 0.7, 1.0, 0.4];
        let (a, _) = batch_loss(&params, &qb, &batch, w, false).unwrap();
        let permuted: Vec<TrainExample> =
            vec![batch[2].clone(), batch[0].clone(), batch[3].clone(), batch[1].clone()];
        let (b, _) = batch_loss(&params, &qb, &permuted, w, false).unwrap();
        assert!((a.total - b.total).abs() < 1e-9);
    }

    #[test]
    fn loss_terms_are_non_negative_and_finite() {
        let (params, qb) = tiny_setup(5);
        let batch = vec![
            example(0, 0, 1, Some(vec![1, 2]), None),
            example(2, 1, 1, None, None),
            example(4, 2, 5, None, Some(vec![1, 2, 3])),
        ];
        let (terms, _) = batch_loss(&params, &qb, &batch, [1.0, 1.0, 1.0, 1.0], false).unwrap();
        for v in [terms.hr_t, terms.hp_t, terms.hrs_t, terms.hrs_p, terms.total] {
            assert!(v.is_finite());
            assert!(v >= 0.0);
        }
    }

    #[test]
    fn batch_of_one_is_a_contract_error() {
        let (params, qb) = tiny_setup(6);
        let batch = vec![example(0, 0, 1, None, None)];
        assert!(batch_loss(&params, &qb, &batch, [1.0; 4], false).is_err());
    }
}
