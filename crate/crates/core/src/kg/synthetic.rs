//! Seeded synthetic compositional graphs.
//!
//! Base relations get random edges; target relations are materialized by
//! composing two base hops (e.g. grandparent ⇐ parent ∘ parent). A fraction
//! of each target relation is held out for valid/test, and because every
//! body edge stays in train, each held-out triple keeps a 2-hop witness path.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetSplit, EntityId, RelationId, Triple, Vocab};
use crate::error::{KgcError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositionRule {
    pub target: String,
    /// Exactly two base relations; target(x, z) ⇐ body0(x, y) ∧ body1(y, z).
    pub body: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_people: usize,
    pub rules: Vec<CompositionRule>,
    /// Fraction of each target relation's triples held out as test.
    #[serde(default = "default_holdout")]
    pub holdout_frac: f64,
    /// Fraction held out as valid.
    #[serde(default = "default_valid")]
    pub valid_frac: f64,
    /// Inclusive out-degree range per (person, base relation).
    #[serde(default = "default_degree")]
    pub base_out_degree: (usize, usize),
}

fn default_holdout() -> f64 {
    0.2
}

fn default_valid() -> f64 {
    0.1
}

fn default_degree() -> (usize, usize) {
    (1, 2)
}

#[derive(Debug, Clone, Serialize)]
pub struct SyntheticSummary {
    pub base_triples: usize,
    pub target_triples: Vec<(String, usize)>,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

/// Pure function of the config: the same config yields byte-identical splits.
pub fn generate_synthetic_kg(cfg: &SyntheticConfig) -> Result<(DatasetSplit, SyntheticSummary)> {
    validate(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_people;

    let mut entities = Vocab::new();
    let width = (n.max(10) - 1).to_string().len();
    for i in 0..n {
        entities.intern(&format!("p{i:0width$}"));
    }

    let mut relations = Vocab::new();
    let mut base_rels: Vec<u32> = Vec::new();
    for rule in &cfg.rules {
        for b in &rule.body {
            let id = relations.intern(b);
            if !base_rels.contains(&id) {
                base_rels.push(id);
            }
        }
    }
    let target_rels: Vec<u32> = cfg.rules.iter().map(|r| relations.intern(&r.target)).collect();

    // Random base edges: each person gets 1..=max out-edges per base relation.
    let (dmin, dmax) = cfg.base_out_degree;
    let mut base_edges: BTreeSet<Triple> = BTreeSet::new();
    for &rel in &base_rels {
        for i in 0..n {
            let degree = if dmin == dmax {
                dmin
            } else {
                rng.random_range(dmin..=dmax)
            };
            let mut chosen: BTreeSet<u32> = BTreeSet::new();
            let mut attempts = 0;
            while chosen.len() < degree && attempts < degree * 20 {
                attempts += 1;
                let j = rng.random_range(0..n as u32);
                if j as usize != i {
                    chosen.insert(j);
                }
            }
            for j in chosen {
                base_edges.insert(Triple::new(
                    EntityId(i as u32),
                    RelationId(rel),
                    EntityId(j),
                ));
            }
        }
    }

    // Adjacency over base edges only.
    let mut adj: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n];
    for t in &base_edges {
        adj[t.head.0 as usize].push((t.relation.0, t.tail.0));
    }

    let mut train: Vec<Triple> = base_edges.iter().copied().collect();
    let mut valid: Vec<Triple> = Vec::new();
    let mut test: Vec<Triple> = Vec::new();
    let mut per_rule_counts = Vec::new();

    for (rule, &target) in cfg.rules.iter().zip(&target_rels) {
        let b0 = relations.get(&rule.body[0]).unwrap();
        let b1 = relations.get(&rule.body[1]).unwrap();
        let mut derived: BTreeSet<Triple> = BTreeSet::new();
        for x in 0..n as u32 {
            for &(r0, y) in &adj[x as usize] {
                if r0 != b0 {
                    continue;
                }
                for &(r1, z) in &adj[y as usize] {
                    if r1 == b1 && z != x {
                        derived.insert(Triple::new(EntityId(x), RelationId(target), EntityId(z)));
                    }
                }
            }
        }
        if derived.is_empty() {
            return Err(KgcError::Generation(format!(
                "rule '{}' produced no instances; increase n_people or base_out_degree",
                rule.target
            )));
        }
        per_rule_counts.push((rule.target.clone(), derived.len()));

        let mut derived: Vec<Triple> = derived.into_iter().collect();
        shuffle(&mut derived, &mut rng);
        let n_test = (derived.len() as f64 * cfg.holdout_frac).floor() as usize;
        let n_valid = (derived.len() as f64 * cfg.valid_frac).floor() as usize;
        test.extend_from_slice(&derived[..n_test]);
        valid.extend_from_slice(&derived[n_test..n_test + n_valid]);
        train.extend_from_slice(&derived[n_test + n_valid..]);
    }

    train.sort_unstable();
    valid.sort_unstable();
    test.sort_unstable();

    let summary = SyntheticSummary {
        base_triples: base_edges.len(),
        target_triples: per_rule_counts,
        train: train.len(),
        valid: valid.len(),
        test: test.len(),
    };
    Ok((
        DatasetSplit {
            entities,
            relations,
            train,
            valid,
            test,
        },
        summary,
    ))
}

fn validate(cfg: &SyntheticConfig) -> Result<()> {
    if cfg.n_people < 3 {
        return Err(KgcError::Generation("n_people must be at least 3".into()));
    }
    if cfg.rules.is_empty() {
        return Err(KgcError::Generation("at least one composition rule required".into()));
    }
    let bodies: BTreeSet<&str> = cfg
        .rules
        .iter()
        .flat_map(|r| r.body.iter().map(|s| s.as_str()))
        .collect();
    for rule in &cfg.rules {
        if rule.body.len() != 2 {
            return Err(KgcError::Generation(format!(
                "rule '{}' must have a 2-relation body",
                rule.target
            )));
        }
        if bodies.contains(rule.target.as_str()) {
            return Err(KgcError::Generation(format!(
                "target '{}' also appears in a rule body; stacked compositions are unsupported",
                rule.target
            )));
        }
    }
    let targets: BTreeSet<&str> = cfg.rules.iter().map(|r| r.target.as_str()).collect();
    if targets.len() != cfg.rules.len() {
        return Err(KgcError::Generation("duplicate rule targets".into()));
    }
    if !(0.0..1.0).contains(&cfg.holdout_frac)
        || !(0.0..1.0).contains(&cfg.valid_frac)
        || cfg.holdout_frac + cfg.valid_frac >= 1.0
    {
        return Err(KgcError::Generation("holdout_frac + valid_frac must be below 1".into()));
    }
    if cfg.base_out_degree.0 == 0 || cfg.base_out_degree.0 > cfg.base_out_degree.1 {
        return Err(KgcError::Generation("base_out_degree must be a nonempty 1-based range".into()));
    }
    Ok(())
}

/// Fisher-Yates with the generator's own stream (rand's SliceRandom is
/// avoided to keep the shuffle order pinned by this crate).
fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Grandparent/uncle rule set used by docs and tests.
pub fn family_rules() -> Vec<CompositionRule> {
    vec![
        CompositionRule {
            target: "grandparent".into(),
            body: vec!["parent".into(), "parent".into()],
        },
        CompositionRule {
            target: "uncle".into(),
            body: vec!["parent".into(), "sibling".into()],
        },
    ]
}
