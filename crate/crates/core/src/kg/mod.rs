//! Knowledge-graph data model: vocabularies, triples, inverse augmentation,
//! and the sorted adjacency indexes every other module reads.

mod loader;
mod synthetic;

pub use loader::{load_split_dirs, load_triples, DatasetSplit};
pub use synthetic::{family_rules, generate_synthetic_kg, CompositionRule, SyntheticConfig, SyntheticSummary};

use std::collections::HashMap;
use std::fmt;



/// Marker appended to a forward relation name to form its inverse's name.
pub const INVERSE_MARKER: &str = "⁻¹";

/// Dense index into the entity vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub u32);

/// Dense index into the relation vocabulary (forward relations first, then
/// their inverses in the same order).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationId(pub u32);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

/// Interned symbol table; ids are assigned in first-appearance order.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(|s| s.as_str())
    }
}

/// Immutable directed labeled multigraph, closed under relation inversion.
///
/// Built once by [`KnowledgeGraph::from_forward_triples`]; afterwards any
/// number of threads may read it concurrently.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: Vocab,
    relations: Vocab,
    n_forward_relations: u32,
    /// All stored triples: the deduplicated forward list followed by its
    /// inverses in the same order.
    triples: Vec<Triple>,
    /// Per head, out-edges sorted by (relation, tail). Binary-search ranges
    /// over this double as the (head, relation) → tails index.
    out: Vec<Vec<(RelationId, EntityId)>>,
    /// Per head, out-edges sorted by (tail, relation); serves "which
    /// relations connect h to t" lookups during path search.
    out_by_tail: Vec<Vec<(EntityId, RelationId)>>,
    /// Duplicate input triples dropped during construction.
    duplicates_dropped: usize,
}

impl KnowledgeGraph {
    /// Augment `forward` with inverse triples and build all indexes.
    ///
    /// `entities` is the shared entity vocabulary; `forward_relations` holds
    /// only forward relation names. The relation vocabulary of the graph is
    /// doubled: forward relation `r` keeps its id, its inverse gets
    /// `r + n_forward`.
    pub fn from_forward_triples(
        entities: Vocab,
        forward_relations: &Vocab,
        forward: &[Triple],
    ) -> Self {
        let n_fwd = forward_relations.len() as u32;
        let mut relations = Vocab::new();
        for name in forward_relations.names() {
            relations.intern(name);
        }
        for name in forward_relations.names() {
            relations.intern(&format!("{name}{INVERSE_MARKER}"));
        }

        // Deduplicate, keeping first occurrence.
        let mut seen = std::collections::HashSet::with_capacity(forward.len() * 2);
        let mut fwd = Vec::with_capacity(forward.len());
        let mut dropped = 0usize;
        for t in forward {
            debug_assert!((t.relation.0) < n_fwd, "forward triples only");
            if seen.insert(*t) {
                fwd.push(*t);
            } else {
                dropped += 1;
            }
        }

        let mut triples = Vec::with_capacity(fwd.len() * 2);
        triples.extend_from_slice(&fwd);
        for t in &fwd {
            triples.push(Triple::new(
                t.tail,
                RelationId(t.relation.0 + n_fwd),
                t.head,
            ));
        }

        let n_entities = entities.len();
        let mut out: Vec<Vec<(RelationId, EntityId)>> = vec![Vec::new(); n_entities];
        for t in &triples {
            out[t.head.0 as usize].push((t.relation, t.tail));
        }
        let mut out_by_tail: Vec<Vec<(EntityId, RelationId)>> = vec![Vec::new(); n_entities];
        for (h, edges) in out.iter_mut().enumerate() {
            edges.sort_unstable();
            out_by_tail[h] = edges.iter().map(|&(r, t)| (t, r)).collect();
            out_by_tail[h].sort_unstable();
        }

        KnowledgeGraph {
            entities,
            relations,
            n_forward_relations: n_fwd,
            triples,
            out,
            out_by_tail,
            duplicates_dropped: dropped,
        }
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    /// Relation vocabulary size after augmentation (always even).
    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn n_forward_relations(&self) -> usize {
        self.n_forward_relations as usize
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn duplicates_dropped(&self) -> usize {
        self.duplicates_dropped
    }

    #[inline]
    pub fn inverse(&self, r: RelationId) -> RelationId {
        if r.0 < self.n_forward_relations {
            RelationId(r.0 + self.n_forward_relations)
        } else {
            RelationId(r.0 - self.n_forward_relations)
        }
    }

    /// All out-edges of `h`, sorted by (relation, tail).
    #[inline]
    pub fn out_edges(&self, h: EntityId) -> &[(RelationId, EntityId)] {
        &self.out[h.0 as usize]
    }

    /// Out-edges of `h` sorted by (tail, relation).
    #[inline]
    pub fn out_edges_by_tail(&self, h: EntityId) -> &[(EntityId, RelationId)] {
        &self.out_by_tail[h.0 as usize]
    }

    /// Exactly the tails t with (h, r, t) stored, ascending.
    pub fn known_tails(&self, h: EntityId, r: RelationId) -> Vec<EntityId> {
        self.tails_of(h, r).iter().map(|&(_, t)| t).collect()
    }

    /// Edge slice for (h, r): tails are ascending because `out` is sorted by
    /// (relation, tail).
    #[inline]
    pub fn tails_of(&self, h: EntityId, r: RelationId) -> &[(RelationId, EntityId)] {
        let edges = &self.out[h.0 as usize];
        let lo = edges.partition_point(|&(er, _)| er < r);
        let hi = edges.partition_point(|&(er, _)| er <= r);
        &edges[lo..hi]
    }

    /// Relations r with (h, r, t) stored, ascending.
    pub fn relations_between(&self, h: EntityId, t: EntityId) -> impl Iterator<Item = RelationId> + '_ {
        let edges = &self.out_by_tail[h.0 as usize];
        let lo = edges.partition_point(|&(et, _)| et < t);
        edges[lo..]
            .iter()
            .take_while(move |&&(et, _)| et == t)
            .map(|&(_, r)| r)
    }

    pub fn contains(&self, h: EntityId, r: RelationId, t: EntityId) -> bool {
        self.out[h.0 as usize].binary_search(&(r, t)).is_ok()
    }
}
