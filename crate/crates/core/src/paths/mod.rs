//! Entity-free relation paths: enumeration, resource-allocation confidence,
//! top-K mining for training triples, and test-time search.
//!
//! A path between h and t is a sequence of 2 or 3 relations with at least one
//! edge walk from h to t instantiating it. Confidence is the resource mass
//! reaching t: one unit starts at h and at every hop each node's mass is
//! split equally among its tails under that hop's relation.

mod io;

pub use io::{read_path_index, write_path_index};

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;

use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple};

#[derive(Debug, Clone, PartialEq)]
pub struct RelationPath {
    pub relations: Vec<RelationId>,
    pub confidence: f64,
}

impl RelationPath {
    pub fn hops(&self) -> usize {
        self.relations.len()
    }
}

/// Confidence descending, then lexicographic relation ids: the canonical
/// retention order, reproducible under ties.
pub fn path_order(a: &RelationPath, b: &RelationPath) -> std::cmp::Ordering {
    b.confidence
        .partial_cmp(&a.confidence)
        .expect("confidence is finite")
        .then_with(|| a.relations.cmp(&b.relations))
}

/// Paths retained for one (head, tail) pair, partitioned by hop count, each
/// list in canonical order and truncated to K.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairPaths {
    pub two_hop: Vec<RelationPath>,
    pub three_hop: Vec<RelationPath>,
}

impl PairPaths {
    pub fn is_empty(&self) -> bool {
        self.two_hop.is_empty() && self.three_hop.is_empty()
    }
}

/// Mined training paths keyed by (head, tail).
#[derive(Debug, Clone)]
pub struct PathIndex {
    pub k: usize,
    pub map: HashMap<(EntityId, EntityId), PairPaths>,
}

impl PathIndex {
    pub fn get(&self, h: EntityId, t: EntityId) -> Option<&PairPaths> {
        self.map.get(&(h, t))
    }

    pub fn n_pairs(&self) -> usize {
        self.map.len()
    }
}

/// Graph view with one training edge (and its inverse pairing) hidden.
#[derive(Clone, Copy)]
struct EdgeView<'g> {
    graph: &'g KnowledgeGraph,
    excluded: Option<(Triple, Triple)>,
}

impl<'g> EdgeView<'g> {
    fn new(graph: &'g KnowledgeGraph, excluded: Option<Triple>) -> Self {
        let excluded = excluded.map(|e| {
            (
                e,
                Triple::new(e.tail, graph.inverse(e.relation), e.head),
            )
        });
        EdgeView { graph, excluded }
    }

    #[inline]
    fn is_excluded(&self, h: EntityId, r: RelationId, t: EntityId) -> bool {
        match self.excluded {
            None => false,
            Some((a, b)) => {
                let e = Triple::new(h, r, t);
                e == a || e == b
            }
        }
    }

    /// Tails reachable from `n` via `r`, ascending, exclusion applied.
    fn tails(&self, n: EntityId, r: RelationId) -> impl Iterator<Item = EntityId> + '_ {
        self.graph
            .tails_of(n, r)
            .iter()
            .map(|&(_, t)| t)
            .filter(move |&t| !self.is_excluded(n, r, t))
    }

    fn out_edges(&self, n: EntityId) -> impl Iterator<Item = (RelationId, EntityId)> + '_ {
        self.graph
            .out_edges(n)
            .iter()
            .copied()
            .filter(move |&(r, t)| !self.is_excluded(n, r, t))
    }

    fn relations_between(&self, h: EntityId, t: EntityId) -> impl Iterator<Item = RelationId> + '_ {
        self.graph
            .relations_between(h, t)
            .filter(move |&r| !self.is_excluded(h, r, t))
    }

    /// Edges arriving at `t`: pairs (source, relation). Derived from the
    /// inverse closure: (y, r, t) stored iff (t, r⁻¹, y) stored.
    fn in_edges(&self, t: EntityId) -> impl Iterator<Item = (EntityId, RelationId)> + '_ {
        self.graph.out_edges(t).iter().map(move |&(s, y)| {
            let r = self.graph.inverse(s);
            (y, r)
        })
        .filter(move |&(y, r)| !self.is_excluded(y, r, t))
    }
}

/// Resource mass arriving at `t` when following `path` from `h`.
///
/// Returns 0 when no walk instantiates the path; 1 when no splitting happens
/// anywhere along the way.
pub fn pcra_confidence(
    graph: &KnowledgeGraph,
    h: EntityId,
    path: &[RelationId],
    t: EntityId,
    excluded: Option<Triple>,
) -> f64 {
    let view = EdgeView::new(graph, excluded);
    let mut dist: BTreeMap<EntityId, f64> = BTreeMap::new();
    dist.insert(h, 1.0);
    for &r in path {
        dist = propagate(&view, &dist, r);
        if dist.is_empty() {
            return 0.0;
        }
    }
    dist.get(&t).copied().unwrap_or(0.0)
}

fn propagate(view: &EdgeView, dist: &BTreeMap<EntityId, f64>, r: RelationId) -> BTreeMap<EntityId, f64> {
    let mut next: BTreeMap<EntityId, f64> = BTreeMap::new();
    for (&node, &mass) in dist {
        let tails: Vec<EntityId> = view.tails(node, r).collect();
        if tails.is_empty() {
            continue;
        }
        let share = mass / tails.len() as f64;
        for t in tails {
            *next.entry(t).or_insert(0.0) += share;
        }
    }
    next
}

/// All distinct 2-hop (and, when `max_hops` = 3, 3-hop) relation sequences
/// from `h` to `t`, each with its confidence, canonical order per hop count
/// (2-hop block first).
pub fn enumerate_paths(
    graph: &KnowledgeGraph,
    h: EntityId,
    t: EntityId,
    max_hops: usize,
    excluded: Option<Triple>,
) -> Vec<RelationPath> {
    assert!(max_hops == 2 || max_hops == 3, "paths are 2 or 3 hops");
    let view = EdgeView::new(graph, excluded);

    let mut two: BTreeSet<Vec<RelationId>> = BTreeSet::new();
    for (r1, x) in view.out_edges(h) {
        for r2 in view.relations_between(x, t) {
            two.insert(vec![r1, r2]);
        }
    }

    let mut three: BTreeSet<Vec<RelationId>> = BTreeSet::new();
    if max_hops == 3 {
        // Meet in the middle: one hop back from t, two hops forward from h.
        let mut arriving: HashMap<EntityId, Vec<RelationId>> = HashMap::new();
        for (y, r3) in view.in_edges(t) {
            arriving.entry(y).or_default().push(r3);
        }
        for (r1, x) in view.out_edges(h) {
            for (r2, z) in view.out_edges(x) {
                if let Some(r3s) = arriving.get(&z) {
                    for &r3 in r3s {
                        three.insert(vec![r1, r2, r3]);
                    }
                }
            }
        }
    }

    let mut out = Vec::with_capacity(two.len() + three.len());
    append_with_confidence(&view, h, t, two, &mut out);
    append_with_confidence(&view, h, t, three, &mut out);
    out
}

/// Compute confidences for a sorted set of equal-length sequences, sharing
/// propagation work across common prefixes, then append in canonical order.
fn append_with_confidence(
    view: &EdgeView,
    h: EntityId,
    t: EntityId,
    seqs: BTreeSet<Vec<RelationId>>,
    out: &mut Vec<RelationPath>,
) {
    if seqs.is_empty() {
        return;
    }
    let seqs: Vec<Vec<RelationId>> = seqs.into_iter().collect();
    let mut root = BTreeMap::new();
    root.insert(h, 1.0);

    let mut paths: Vec<RelationPath> = Vec::with_capacity(seqs.len());
    // seqs are lexicographically sorted, so identical prefixes are adjacent;
    // cache the per-depth frontier of the previous sequence.
    let mut prefix: Vec<RelationId> = Vec::new();
    let mut frontiers: Vec<BTreeMap<EntityId, f64>> = vec![root.clone()];
    for seq in &seqs {
        let mut common = 0;
        while common < prefix.len() && common < seq.len() && prefix[common] == seq[common] {
            common += 1;
        }
        prefix.truncate(common);
        frontiers.truncate(common + 1);
        for &r in &seq[common..] {
            let next = propagate(view, frontiers.last().unwrap(), r);
            frontiers.push(next);
            prefix.push(r);
        }
        let confidence = frontiers.last().unwrap().get(&t).copied().unwrap_or(0.0);
        debug_assert!(confidence > 0.0, "enumerated path must be instantiated");
        paths.push(RelationPath {
            relations: seq.clone(),
            confidence,
        });
    }
    paths.sort_by(path_order);
    out.extend(paths);
}

fn retain_top_k(paths: &mut Vec<RelationPath>, k: usize, min_confidence: f64) {
    paths.retain(|p| p.confidence > min_confidence);
    paths.sort_by(path_order);
    paths.dedup_by(|a, b| a.relations == b.relations);
    paths.truncate(k);
}

fn split_by_hops(all: Vec<RelationPath>, k: usize, min_confidence: f64) -> PairPaths {
    let (two, three): (Vec<_>, Vec<_>) = all.into_iter().partition(|p| p.hops() == 2);
    let mut pair = PairPaths {
        two_hop: two,
        three_hop: three,
    };
    retain_top_k(&mut pair.two_hop, k, min_confidence);
    retain_top_k(&mut pair.three_hop, k, min_confidence);
    pair
}

/// Mine paths for training triples. For each (h, r, t) the direct edge and
/// its inverse pairing are hidden from the search so the path never leaks
/// the label. Results merge per (h, t) pair, keeping the top K per hop count.
pub fn mine_training_paths(
    graph: &KnowledgeGraph,
    triples: &[Triple],
    k: usize,
    min_confidence: f64,
) -> PathIndex {
    let per_triple: Vec<((EntityId, EntityId), PairPaths)> = triples
        .par_iter()
        .map(|t| {
            let found = enumerate_paths(graph, t.head, t.tail, 3, Some(*t));
            ((t.head, t.tail), split_by_hops(found, k, min_confidence))
        })
        .collect();

    let mut map: HashMap<(EntityId, EntityId), PairPaths> = HashMap::new();
    for (pair, found) in per_triple {
        match map.entry(pair) {
            std::collections::hash_map::Entry::Vacant(e) => {
                if !found.is_empty() {
                    e.insert(found);
                }
            }
            std::collections::hash_map::Entry::Occupied(mut e) => {
                // Same pair mined under a different excluded relation: merge,
                // keep the higher confidence per sequence, re-truncate.
                let merged = e.get_mut();
                merged.two_hop.extend(found.two_hop);
                merged.three_hop.extend(found.three_hop);
                merge_dedup(&mut merged.two_hop, k);
                merge_dedup(&mut merged.three_hop, k);
            }
        }
    }
    map.retain(|_, v| !v.is_empty());
    PathIndex { k, map }
}

fn merge_dedup(paths: &mut Vec<RelationPath>, k: usize) {
    paths.sort_by(|a, b| {
        a.relations
            .cmp(&b.relations)
            .then(b.confidence.partial_cmp(&a.confidence).unwrap())
    });
    paths.dedup_by(|a, b| a.relations == b.relations);
    paths.sort_by(path_order);
    paths.truncate(k);
}

/// Test-time search: per candidate, the enumerated paths with top-K
/// retention per hop count. No edge is excluded (held-out triples are not in
/// the graph). Candidates without paths map to empty path sets.
pub fn search_paths(
    graph: &KnowledgeGraph,
    h: EntityId,
    candidates: &[EntityId],
    k: usize,
) -> Vec<(EntityId, PairPaths)> {
    candidates
        .iter()
        .map(|&c| {
            let found = enumerate_paths(graph, h, c, 3, None);
            (c, split_by_hops(found, k, 0.0))
        })
        .collect()
}

/// Cheap existence test for any 2- or 3-hop path from h to t, used by the
/// coverage statistics and path-availability stratification. Walks may reuse
/// nodes and edges, matching `enumerate_paths`.
pub fn has_path_2_or_3(graph: &KnowledgeGraph, h: EntityId, t: EntityId) -> bool {
    // 2-hop: a shared neighbor (edge directions are free thanks to the
    // inverse closure, but relations are tracked by enumerate; existence only
    // needs connectivity h→x→t).
    let nh = graph.out_edges_by_tail(h);
    if nh.is_empty() {
        return false;
    }
    let mut prev = None;
    for &(x, _) in nh {
        if prev == Some(x) {
            continue;
        }
        prev = Some(x);
        if graph.relations_between(x, t).next().is_some() {
            return true;
        }
    }

    // 3-hop: an edge between a neighbor of h and a neighbor of t. Expansion
    // starts from the lower-degree endpoint; by inverse closure a 3-hop walk
    // h→t exists iff one exists t→h.
    let (a, b) = if graph.out_edges(h).len() <= graph.out_edges(t).len() {
        (h, t)
    } else {
        (t, h)
    };
    let nb = graph.out_edges_by_tail(b);
    if nb.is_empty() {
        return false;
    }
    let mut b_neighbors = vec![false; graph.n_entities()];
    for &(y, _) in nb {
        b_neighbors[y.0 as usize] = true;
    }
    let mut prev = None;
    for &(x, _) in graph.out_edges_by_tail(a) {
        if prev == Some(x) {
            continue;
        }
        prev = Some(x);
        let mut prev_z = None;
        for &(z, _) in graph.out_edges_by_tail(x) {
            if prev_z == Some(z) {
                continue;
            }
            prev_z = Some(z);
            if b_neighbors[z.0 as usize] {
                return true;
            }
        }
    }
    false
}

/// Count and fraction of triples with no 2- or 3-hop path head→tail.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CoverageReport {
    pub total: usize,
    pub pathless: usize,
    pub pathless_fraction: f64,
}

pub fn path_coverage_stats(graph: &KnowledgeGraph, triples: &[Triple]) -> CoverageReport {
    let pathless = triples
        .par_iter()
        .map(|t| usize::from(!has_path_2_or_3(graph, t.head, t.tail)))
        .sum();
    CoverageReport {
        total: triples.len(),
        pathless,
        pathless_fraction: if triples.is_empty() {
            0.0
        } else {
            pathless as f64 / triples.len() as f64
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::Vocab;

    /// Graph from explicit (head, relation, tail) name triples.
    fn graph(edges: &[(&str, &str, &str)]) -> KnowledgeGraph {
        let mut ev = Vocab::new();
        let mut rv = Vocab::new();
        let triples: Vec<Triple> = edges
            .iter()
            .map(|&(h, r, t)| {
                Triple::new(
                    EntityId(ev.intern(h)),
                    RelationId(rv.intern(r)),
                    EntityId(ev.intern(t)),
                )
            })
            .collect();
        KnowledgeGraph::from_forward_triples(ev, &rv, &triples)
    }

    fn eid(g: &KnowledgeGraph, name: &str) -> EntityId {
        EntityId(g.entities().get(name).unwrap())
    }

    fn rid(g: &KnowledgeGraph, name: &str) -> RelationId {
        RelationId(g.relations().get(name).unwrap())
    }

    #[test]
    fn branching_splits_resource() {
        // h --r1--> a, h --r1--> b, a --r2--> t: mass halves at the branch.
        let g = graph(&[("h", "r1", "a"), ("h", "r1", "b"), ("a", "r2", "t")]);
        let conf = pcra_confidence(&g, eid(&g, "h"), &[rid(&g, "r1"), rid(&g, "r2")], eid(&g, "t"), None);
        assert_eq!(conf, 0.5);
    }

    #[test]
    fn chain_without_branching_keeps_full_mass() {
        let g = graph(&[("h", "r1", "a"), ("a", "r2", "t")]);
        let conf = pcra_confidence(&g, eid(&g, "h"), &[rid(&g, "r1"), rid(&g, "r2")], eid(&g, "t"), None);
        assert_eq!(conf, 1.0);
    }

    #[test]
    fn unreachable_path_is_zero() {
        let g = graph(&[("h", "r1", "a"), ("b", "r2", "t")]);
        let conf = pcra_confidence(&g, eid(&g, "h"), &[rid(&g, "r1"), rid(&g, "r2")], eid(&g, "t"), None);
        assert_eq!(conf, 0.0);
    }

    #[test]
    fn resource_is_conserved_up_to_dead_ends() {
        let g = graph(&[
            ("h", "r1", "a"),
            ("h", "r1", "b"),
            ("a", "r2", "t"),
            ("a", "r2", "u"),
            ("b", "r2", "u"),
        ]);
        let seq = [rid(&g, "r1"), rid(&g, "r2")];
        let total: f64 = (0..g.n_entities() as u32)
            .map(|e| pcra_confidence(&g, eid(&g, "h"), &seq, EntityId(e), None))
            .sum();
        // Every r1-successor of h has an r2 edge, so nothing is lost.
        assert!((total - 1.0).abs() < 1e-12);

        // Dropping b's r2 edge loses b's half of the mass.
        let g2 = graph(&[("h", "r1", "a"), ("h", "r1", "b"), ("a", "r2", "t")]);
        let seq2 = [rid(&g2, "r1"), rid(&g2, "r2")];
        let total2: f64 = (0..g2.n_entities() as u32)
            .map(|e| pcra_confidence(&g2, eid(&g2, "h"), &seq2, EntityId(e), None))
            .sum();
        assert!(total2 <= 1.0 + 1e-12);
        assert!((total2 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn self_queries_need_a_returning_walk() {
        // An isolated node has no walks back to itself.
        let mut ev = Vocab::new();
        ev.intern("h");
        ev.intern("a");
        ev.intern("lone");
        let mut rv = Vocab::new();
        rv.intern("r1");
        let g = KnowledgeGraph::from_forward_triples(
            ev,
            &rv,
            &[Triple::new(EntityId(0), RelationId(0), EntityId(1))],
        );
        let lone = EntityId(2);
        assert!(enumerate_paths(&g, lone, lone, 3, None).is_empty());

        // A connected node always has the 2-hop out-and-back walk.
        let h = EntityId(0);
        let back = enumerate_paths(&g, h, h, 2, None);
        assert_eq!(back.len(), 1);
        assert_eq!(
            back[0].relations,
            vec![RelationId(0), g.inverse(RelationId(0))]
        );
    }

    #[test]
    fn enumerate_finds_inverse_hop_walks() {
        // Walks may use inverse edges: h --r--> a implies a --r⁻¹--> h, so a
        // sibling-style h → parent → other-child sequence appears.
        let g = graph(&[("h", "parent", "p"), ("s", "parent", "p")]);
        let found = enumerate_paths(&g, eid(&g, "h"), eid(&g, "s"), 2, None);
        assert_eq!(found.len(), 1);
        assert_eq!(
            found[0].relations,
            vec![rid(&g, "parent"), g.inverse(rid(&g, "parent"))]
        );
        // Mass splits between p's two children on the inverse hop.
        assert_eq!(found[0].confidence, 0.5);
    }

    #[test]
    fn exclusion_hides_direct_edge_and_its_inverse() {
        // The only 2-hop walk from h to t goes through the edge being mined
        // (h→t direct, then t→t? no). Construct: h --r--> t and h --r2--> t;
        // excluding (h,r,t) must still find (r2-based) walks but never any
        // sequence whose only instantiation uses the excluded edge.
        let g = graph(&[("h", "r", "t"), ("h", "r2", "t"), ("t", "r3", "z")]);
        let excl = Triple::new(eid(&g, "h"), rid(&g, "r"), eid(&g, "t"));
        let found = enumerate_paths(&g, eid(&g, "h"), eid(&g, "z"), 2, Some(excl));
        // 2-hop h→t→z: possible via r2 only (r excluded).
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].relations, vec![rid(&g, "r2"), rid(&g, "r3")]);

        // A triple whose only connection is its own direct edge stores no
        // paths once excluded.
        let g2 = graph(&[("h", "r", "t")]);
        let excl2 = Triple::new(eid(&g2, "h"), rid(&g2, "r"), eid(&g2, "t"));
        assert!(enumerate_paths(&g2, eid(&g2, "h"), eid(&g2, "t"), 3, Some(excl2)).is_empty());
        let index = mine_training_paths(&g2, g2.triples(), 3, 0.0);
        assert_eq!(index.n_pairs(), 0);
    }

    #[test]
    fn retention_keeps_highest_confidence_and_breaks_ties_lexicographically() {
        // Three 2-hop sequences h→t with confidences 0.5, 0.25, 0.25.
        let g = graph(&[
            ("h", "ra", "x1"),
            ("h", "ra", "x2"),
            ("x1", "rc", "t"),
            ("h", "rb", "y1"),
            ("y1", "rc", "t"),
            ("y1", "rc", "z1"),
            ("y1", "rc", "z2"),
            ("y1", "rc", "z3"),
            ("y1", "rd", "t"),
            ("y1", "rd", "u1"),
            ("y1", "rd", "u2"),
            ("y1", "rd", "u3"),
        ]);
        let (h, t) = (eid(&g, "h"), eid(&g, "t"));
        let found = enumerate_paths(&g, h, t, 2, None);
        let confs: Vec<f64> = found.iter().map(|p| p.confidence).collect();
        assert_eq!(confs, vec![0.5, 0.25, 0.25]);
        // Tie between (rb, rc) and (rb, rd) resolves lexicographically.
        assert_eq!(found[1].relations, vec![rid(&g, "rb"), rid(&g, "rc")]);
        assert_eq!(found[2].relations, vec![rid(&g, "rb"), rid(&g, "rd")]);

        let index = mine_training_paths(
            &g,
            &[Triple::new(h, rid(&g, "ra"), t)],
            1,
            0.0,
        );
        // K=1 keeps only the 0.5 path. Mining excludes (h, ra, t) which is
        // not an edge here, so confidences match the unexcluded search.
        let pair = index.get(h, t).unwrap();
        assert_eq!(pair.two_hop.len(), 1);
        assert_eq!(pair.two_hop[0].confidence, 0.5);
        assert_eq!(pair.two_hop[0].relations, vec![rid(&g, "ra"), rid(&g, "rc")]);
    }

    #[test]
    fn retention_is_monotone_in_k() {
        let g = graph(&[
            ("h", "r1", "a"),
            ("h", "r2", "a"),
            ("h", "r3", "a"),
            ("a", "r1", "t"),
            ("a", "r2", "t"),
        ]);
        let triple = [Triple::new(eid(&g, "h"), rid(&g, "r3"), eid(&g, "t"))];
        let full = mine_training_paths(&g, &triple, usize::MAX, 0.0);
        for k in 1..6 {
            let limited = mine_training_paths(&g, &triple, k, 0.0);
            let fp = full.get(eid(&g, "h"), eid(&g, "t")).unwrap();
            let lp = limited.get(eid(&g, "h"), eid(&g, "t")).unwrap();
            assert_eq!(&fp.two_hop[..k.min(fp.two_hop.len())], &lp.two_hop[..]);
            assert_eq!(&fp.three_hop[..k.min(fp.three_hop.len())], &lp.three_hop[..]);
        }
    }

    #[test]
    fn search_handles_empty_and_one_hop_only_candidates() {
        let g = graph(&[("h", "r", "t")]);
        assert!(search_paths(&g, eid(&g, "h"), &[], 3).is_empty());
        // t is one hop away and nothing else connects: no 2/3-hop paths...
        // except walks that bounce (h→t→h→t). Those exist here, so use a
        // candidate with a genuinely single-route connection.
        let g2 = graph(&[("h", "r", "t"), ("q", "r2", "w")]);
        let res = search_paths(&g2, eid(&g2, "h"), &[eid(&g2, "q")], 3);
        assert_eq!(res.len(), 1);
        assert!(res[0].1.is_empty());
    }

    #[test]
    fn bouncing_walks_are_real_paths() {
        // One edge h→t still admits the 3-hop walk h→t→h→t via inverses.
        let g = graph(&[("h", "r", "t")]);
        let found = enumerate_paths(&g, eid(&g, "h"), eid(&g, "t"), 3, None);
        let r = rid(&g, "r");
        let ri = g.inverse(r);
        assert!(found.iter().any(|p| p.relations == vec![r, ri, r]));
        assert!(found.iter().all(|p| p.hops() == 3));
    }

    #[test]
    fn index_round_trips_and_detects_corruption() {
        let g = graph(&[
            ("h", "ra", "x"),
            ("x", "rb", "t"),
            ("h", "rc", "y"),
            ("y", "rd", "t"),
            ("h", "re", "t"),
        ]);
        let index = mine_training_paths(&g, g.triples(), 3, 0.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("paths.bin");
        write_path_index(&index, &path).unwrap();
        let loaded = read_path_index(&path).unwrap();
        assert_eq!(loaded.k, index.k);
        assert_eq!(loaded.map.len(), index.map.len());
        for (pair, paths) in &index.map {
            assert_eq!(loaded.map.get(pair), Some(paths));
        }

        // Rewriting produces identical bytes.
        let path2 = dir.path().join("paths2.bin");
        write_path_index(&loaded, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());

        // Truncation is an integrity error.
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            read_path_index(&path),
            Err(crate::error::KgcError::Integrity(_))
        ));
    }

    #[test]
    fn coverage_on_synthetic_composables_is_zero() {
        let cfg = crate::kg::SyntheticConfig {
            seed: 5,
            n_people: 40,
            rules: crate::kg::family_rules(),
            holdout_frac: 0.2,
            valid_frac: 0.1,
            base_out_degree: (1, 2),
        };
        let (split, _) = crate::kg::generate_synthetic_kg(&cfg).unwrap();
        let g = KnowledgeGraph::from_forward_triples(
            split.entities.clone(),
            &split.relations,
            &split.train,
        );
        let report = path_coverage_stats(&g, &split.test);
        assert_eq!(report.pathless, 0);
        assert_eq!(report.pathless_fraction, 0.0);
    }
}
