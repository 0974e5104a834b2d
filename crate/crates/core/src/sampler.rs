//! Mini-batch construction: fanout-limited k-hop expansion, induced edge
//! closure, corrupted negatives, and skill subsampling.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::store::{EntityKind, EntityRef, RelationKind, RelationView, WhinStore, VIEW_COUNT};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub hops: usize,
    pub fanout: usize,
    pub negative_ratio: usize,
    pub skills_per_entity: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            hops: 3,
            fanout: 5,
            negative_ratio: 1,
            skills_per_entity: 10,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("hops", self.hops),
            ("fanout", self.fanout),
            ("negative_ratio", self.negative_ratio),
            ("skills_per_entity", self.skills_per_entity),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinkTriple {
    pub source: EntityRef,
    pub relation: RelationKind,
    pub target: EntityRef,
}

const ABSENT: u32 = u32::MAX;

/// A sampled node set with every store edge among those nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct SubgraphBatch {
    nodes: Vec<EntityRef>,
    local: [Vec<u32>; 5],
    /// Per view (indexed by `RelationView::index`): local `(src, dst)` pairs
    /// with `dst` in the interaction map of `src`.
    edges: Vec<Vec<(usize, usize)>>,
    pub positives: Vec<LinkTriple>,
    pub negatives: Vec<LinkTriple>,
}

impl SubgraphBatch {
    /// Induced subgraph on exactly `nodes` (deduplicated, order kept).
    pub fn induced(store: &WhinStore, nodes: &[EntityRef]) -> Result<Self> {
        let mut batch = Self {
            nodes: Vec::new(),
            local: EntityKind::ALL.map(|k| vec![ABSENT; store.count(k)]),
            edges: vec![Vec::new(); VIEW_COUNT],
            positives: Vec::new(),
            negatives: Vec::new(),
        };
        for &e in nodes {
            if !store.contains(e) {
                return Err(Error::Contract(format!("unknown entity {e}")));
            }
            batch.push(e);
        }
        batch.close(store);
        Ok(batch)
    }

    fn push(&mut self, e: EntityRef) -> bool {
        let slot = &mut self.local[e.kind.index()][e.id as usize];
        if *slot != ABSENT {
            return false;
        }
        *slot = self.nodes.len() as u32;
        self.nodes.push(e);
        true
    }

    fn close(&mut self, store: &WhinStore) {
        for view in RelationView::all() {
            let dst_local = &self.local[view.destination().index()];
            let list = &mut self.edges[view.index()];
            list.clear();
            for (li, e) in self.nodes.iter().enumerate() {
                if e.kind != view.source() {
                    continue;
                }
                for &d in store.row(view, e.id) {
                    let ld = dst_local[d as usize];
                    if ld != ABSENT {
                        list.push((li, ld as usize));
                    }
                }
            }
        }
    }

    /// Adds nodes (e.g. negative destinations) and recomputes the closure.
    pub fn extend(&mut self, store: &WhinStore, extra: impl IntoIterator<Item = EntityRef>) {
        let mut grew = false;
        for e in extra {
            grew |= self.push(e);
        }
        if grew {
            self.close(store);
        }
    }

    pub fn nodes(&self) -> &[EntityRef] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn local(&self, e: EntityRef) -> Option<usize> {
        let v = *self.local[e.kind.index()].get(e.id as usize)?;
        (v != ABSENT).then_some(v as usize)
    }

    pub fn view_edges(&self, view: RelationView) -> &[(usize, usize)] {
        &self.edges[view.index()]
    }

    /// Forward-relation edges of the subgraph touching any of `endpoints`.
    /// Symmetric relations contribute each unordered pair once.
    pub fn incident_edges(&self, endpoints: &[EntityRef]) -> Vec<LinkTriple> {
        let mut touched = vec![false; self.nodes.len()];
        for e in endpoints {
            if let Some(l) = self.local(*e) {
                touched[l] = true;
            }
        }
        let mut out = Vec::new();
        for r in RelationKind::ALL {
            for &(s, d) in &self.edges[RelationView::forward(r).index()] {
                if !(touched[s] || touched[d]) {
                    continue;
                }
                let (a, b) = (self.nodes[s], self.nodes[d]);
                if r.is_symmetric() && a.id > b.id {
                    continue;
                }
                out.push(LinkTriple {
                    source: a,
                    relation: r,
                    target: b,
                });
            }
        }
        out
    }
}

/// Expands `seeds` for `cfg.hops` rounds; each newly reached node samples up
/// to `fanout` distinct neighbors per view. Ends with the induced closure.
pub fn sample_subgraph(
    store: &WhinStore,
    seeds: &[EntityRef],
    cfg: &SamplerConfig,
    rng: &mut Rng,
) -> Result<SubgraphBatch> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(Error::Contract("sample_subgraph needs at least one seed".into()));
    }
    let mut batch = SubgraphBatch::induced(store, &[])?;
    let mut frontier = Vec::new();
    for &s in seeds {
        if !store.contains(s) {
            return Err(Error::Contract(format!("unknown seed {s}")));
        }
        if batch.push(s) {
            frontier.push(s);
        }
    }
    let views: Vec<RelationView> = RelationView::all().collect();
    for _ in 0..cfg.hops {
        let mut next = Vec::new();
        for &node in &frontier {
            for &view in views.iter().filter(|v| v.source() == node.kind) {
                let row = store.row(view, node.id);
                let kind = view.destination();
                if row.len() <= cfg.fanout {
                    for &d in row {
                        let e = EntityRef::new(kind, d);
                        if batch.push(e) {
                            next.push(e);
                        }
                    }
                } else {
                    let mut picked = index::sample(rng, row.len(), cfg.fanout).into_vec();
                    picked.sort_unstable();
                    for i in picked {
                        let e = EntityRef::new(kind, row[i]);
                        if batch.push(e) {
                            next.push(e);
                        }
                    }
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    batch.close(store);
    Ok(batch)
}

/// `ratio` destination-corrupted triples per positive, uniform over the
/// destination kind, never an existing edge, never repeated for a source.
pub fn sample_negatives(
    store: &WhinStore,
    positives: &[LinkTriple],
    ratio: usize,
    rng: &mut Rng,
) -> Result<Vec<LinkTriple>> {
    if positives.is_empty() {
        return Err(Error::Contract("sample_negatives needs positives".into()));
    }
    if ratio == 0 {
        return Err(Error::Config("negative ratio must be at least 1".into()));
    }
    let mut used: HashSet<(EntityRef, RelationKind, u32)> = HashSet::new();
    let mut used_count: std::collections::HashMap<(EntityRef, RelationKind), usize> =
        std::collections::HashMap::new();
    let mut out = Vec::with_capacity(positives.len() * ratio);
    for p in positives {
        let r = p.relation;
        let kind = r.destination();
        let n = store.count(kind);
        if n <= 1 {
            return Err(Error::SamplingImpossible(format!(
                "{r} needs at least two {kind} entities to corrupt, found {n}"
            )));
        }
        let existing = store.neighbors(p.source, r)?;
        let self_kind = kind == p.source.kind;
        for _ in 0..ratio {
            let taken = used_count.get(&(p.source, r)).copied().unwrap_or(0);
            let free = n - existing.len() - taken - usize::from(self_kind);
            if free == 0 {
                return Err(Error::SamplingImpossible(format!(
                    "no unused non-edge left for {} under {r}",
                    p.source
                )));
            }
            let ok = |d: u32| {
                !(self_kind && d == p.source.id)
                    && existing.binary_search(&d).is_err()
                    && !used.contains(&(p.source, r, d))
            };
            let mut choice = None;
            for _ in 0..64 {
                let d = rng.gen_range(0..n as u32);
                if ok(d) {
                    choice = Some(d);
                    break;
                }
            }
            let d = match choice {
                Some(d) => d,
                None => {
                    // Dense neighborhood: draw uniformly from the explicit
                    // candidate list instead of rejecting forever.
                    let free: Vec<u32> = (0..n as u32).filter(|&d| ok(d)).collect();
                    free[rng.gen_range(0..free.len())]
                }
            };
            used.insert((p.source, r, d));
            *used_count.entry((p.source, r)).or_default() += 1;
            out.push(LinkTriple {
                source: p.source,
                relation: r,
                target: EntityRef::new(kind, d),
            });
        }
    }
    Ok(out)
}

/// All of `skills` when there are at most `n_s`, otherwise a uniform subset
/// of size `n_s` (kept in original relative order).
pub fn sample_skills<T: Clone>(skills: &[T], n_s: usize, rng: &mut Rng) -> Vec<T> {
    if skills.len() <= n_s {
        return skills.to_vec();
    }
    let mut picked = index::sample(rng, skills.len(), n_s).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| skills[i].clone()).collect()
}
