//! The workplace graph: typed entities, natural relations, co-apply metapaths,
//! and candidate pairs.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Member,
    Job,
    Skill,
    Company,
    School,
}

impl EntityKind {
    pub const ALL: [EntityKind; 5] = [
        EntityKind::Member,
        EntityKind::Job,
        EntityKind::Skill,
        EntityKind::Company,
        EntityKind::School,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            EntityKind::Member => "member",
            EntityKind::Job => "job",
            EntityKind::Skill => "skill",
            EntityKind::Company => "company",
            EntityKind::School => "school",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityRef {
    pub kind: EntityKind,
    pub id: u32,
}

impl EntityRef {
    pub const fn new(kind: EntityKind, id: u32) -> Self {
        Self { kind, id }
    }
    pub const fn member(id: u32) -> Self {
        Self::new(EntityKind::Member, id)
    }
    pub const fn job(id: u32) -> Self {
        Self::new(EntityKind::Job, id)
    }
    pub const fn skill(id: u32) -> Self {
        Self::new(EntityKind::Skill, id)
    }
}

impl fmt::Display for EntityRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Connect,
    Apply,
    Master,
    WorkAt,
    Attend,
    Require,
    Post,
    CoApply,
    CoApplied,
}

impl RelationKind {
    pub const ALL: [RelationKind; 9] = [
        RelationKind::Connect,
        RelationKind::Apply,
        RelationKind::Master,
        RelationKind::WorkAt,
        RelationKind::Attend,
        RelationKind::Require,
        RelationKind::Post,
        RelationKind::CoApply,
        RelationKind::CoApplied,
    ];

    /// Relations that appear in input files.
    pub const NATURAL: [RelationKind; 7] = [
        RelationKind::Connect,
        RelationKind::Apply,
        RelationKind::Master,
        RelationKind::WorkAt,
        RelationKind::Attend,
        RelationKind::Require,
        RelationKind::Post,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            RelationKind::Connect => "connect",
            RelationKind::Apply => "apply",
            RelationKind::Master => "master",
            RelationKind::WorkAt => "work_at",
            RelationKind::Attend => "attend",
            RelationKind::Require => "require",
            RelationKind::Post => "post",
            RelationKind::CoApply => "co_apply",
            RelationKind::CoApplied => "co_applied",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == s)
    }

    pub fn source(self) -> EntityKind {
        use EntityKind::*;
        match self {
            RelationKind::Connect
            | RelationKind::Apply
            | RelationKind::Master
            | RelationKind::WorkAt
            | RelationKind::Attend
            | RelationKind::CoApply => Member,
            RelationKind::Require | RelationKind::Post | RelationKind::CoApplied => Job,
        }
    }

    pub fn destination(self) -> EntityKind {
        use EntityKind::*;
        match self {
            RelationKind::Connect | RelationKind::CoApply => Member,
            RelationKind::Apply | RelationKind::CoApplied => Job,
            RelationKind::Master | RelationKind::Require => Skill,
            RelationKind::WorkAt | RelationKind::Post => Company,
            RelationKind::Attend => School,
        }
    }

    pub fn is_metapath(self) -> bool {
        matches!(self, RelationKind::CoApply | RelationKind::CoApplied)
    }

    pub fn is_symmetric(self) -> bool {
        matches!(
            self,
            RelationKind::Connect | RelationKind::CoApply | RelationKind::CoApplied
        )
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A relation read in one direction. Symmetric relations only have the
/// forward view; each directed relation also has a reverse view
/// (e.g. job -> applicants).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationView {
    pub relation: RelationKind,
    pub reverse: bool,
}

pub const VIEW_COUNT: usize = 15;

impl RelationView {
    pub const fn forward(relation: RelationKind) -> Self {
        Self {
            relation,
            reverse: false,
        }
    }

    pub fn reversed(relation: RelationKind) -> Option<Self> {
        (!relation.is_symmetric()).then_some(Self {
            relation,
            reverse: true,
        })
    }

    pub fn all() -> impl Iterator<Item = RelationView> {
        RelationKind::ALL
            .into_iter()
            .map(Self::forward)
            .chain(RelationKind::ALL.into_iter().filter_map(Self::reversed))
    }

    /// Dense index in `0..VIEW_COUNT`: forward views first, in relation order.
    pub fn index(self) -> usize {
        if self.reverse {
            // Apply..=Post are indices 1..=6
            8 + self.relation.index()
        } else {
            self.relation.index()
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::all().nth(i)
    }

    pub fn source(self) -> EntityKind {
        if self.reverse {
            self.relation.destination()
        } else {
            self.relation.source()
        }
    }

    pub fn destination(self) -> EntityKind {
        if self.reverse {
            self.relation.source()
        } else {
            self.relation.destination()
        }
    }

    pub fn name(self) -> String {
        if self.reverse {
            format!("{}_rev", self.relation.name())
        } else {
            self.relation.name().to_string()
        }
    }
}

impl From<RelationKind> for RelationView {
    fn from(r: RelationKind) -> Self {
        Self::forward(r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CandidatePair {
    pub member: u32,
    pub job: u32,
    pub label: u8,
}

impl CandidatePair {
    pub fn member_ref(&self) -> EntityRef {
        EntityRef::member(self.member)
    }
    pub fn job_ref(&self) -> EntityRef {
        EntityRef::job(self.job)
    }
}

/// Sorted, deduplicated adjacency in compressed-row form.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Adjacency {
    fn build(sources: usize, mut pairs: Vec<(u32, u32)>) -> Self {
        pairs.sort_unstable();
        pairs.dedup();
        let mut offsets = vec![0usize; sources + 1];
        for &(s, _) in &pairs {
            offsets[s as usize + 1] += 1;
        }
        for i in 0..sources {
            offsets[i + 1] += offsets[i];
        }
        Self {
            offsets,
            targets: pairs.into_iter().map(|(_, d)| d).collect(),
        }
    }

    #[inline]
    fn row(&self, s: usize) -> &[u32] {
        &self.targets[self.offsets[s]..self.offsets[s + 1]]
    }

    fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.offsets.len() - 1).flat_map(move |s| self.row(s).iter().map(move |&d| (s as u32, d)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetapathSettings {
    /// Per-node degree cap; `None` keeps every metapath edge.
    pub cap: Option<usize>,
    pub seed: u64,
}

/// Immutable typed multigraph. Entity ids are dense per kind.
#[derive(Clone, Debug, PartialEq)]
pub struct WhinStore {
    texts: [Vec<String>; 5],
    views: Vec<Adjacency>,
    pairs: Vec<CandidatePair>,
    metapaths: Option<MetapathSettings>,
}

pub const STORE_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StoreManifest {
    format_version: u32,
    counts: Vec<(EntityKind, usize)>,
    relations: Vec<String>,
    pairs: usize,
    metapaths: Option<MetapathSettings>,
}

impl WhinStore {
    /// Builds a store from entity texts (indexed by id per kind), natural
    /// edges, and candidate pairs. Duplicate edges are merged.
    pub fn from_parts(
        texts: [Vec<String>; 5],
        edges: &[(RelationKind, u32, u32)],
        pairs: Vec<CandidatePair>,
    ) -> Result<Self> {
        let counts: Vec<usize> = texts.iter().map(Vec::len).collect();
        let mut forward: Vec<Vec<(u32, u32)>> = vec![Vec::new(); RelationKind::ALL.len()];
        for &(r, s, d) in edges {
            if r.is_metapath() {
                return Err(Error::Contract(format!(
                    "{r} edges are derived, not ingested"
                )));
            }
            check_endpoint(&counts, r.source(), s, r)?;
            check_endpoint(&counts, r.destination(), d, r)?;
            if r.is_symmetric() {
                if s == d {
                    return Err(Error::Contract(format!("self-loop {r}({s}, {d})")));
                }
                forward[r.index()].push((d, s));
            }
            forward[r.index()].push((s, d));
        }
        let mut seen = HashSet::with_capacity(pairs.len());
        for p in &pairs {
            check_endpoint(&counts, EntityKind::Member, p.member, "pairs")?;
            check_endpoint(&counts, EntityKind::Job, p.job, "pairs")?;
            if p.label > 1 {
                return Err(Error::Contract(format!("pair label {} not in {{0,1}}", p.label)));
            }
            if !seen.insert((p.member, p.job)) {
                return Err(Error::Contract(format!(
                    "duplicate candidate pair (member {}, job {})",
                    p.member, p.job
                )));
            }
        }
        let mut views = vec![Adjacency::default(); VIEW_COUNT];
        for r in RelationKind::ALL {
            let list = std::mem::take(&mut forward[r.index()]);
            if let Some(rev) = RelationView::reversed(r) {
                let swapped = list.iter().map(|&(s, d)| (d, s)).collect();
                views[rev.index()] = Adjacency::build(counts[r.destination().index()], swapped);
            }
            views[r.index()] = Adjacency::build(counts[r.source().index()], list);
        }
        Ok(Self {
            texts,
            views,
            pairs,
            metapaths: None,
        })
    }

    /// Reads the three TSV inputs. Errors carry the offending file and line.
    pub fn ingest(entities: &Path, relations: &Path, pairs: &Path) -> Result<Self> {
        let texts = read_entities(entities)?;
        let counts: Vec<usize> = texts.iter().map(Vec::len).collect();

        let mut edges = Vec::new();
        for_each_row(relations, |line, cols| {
            if cols.len() != 3 {
                return Err(format!("expected 3 tab-separated fields, found {}", cols.len()));
            }
            let r = RelationKind::parse(cols[0])
                .filter(|r| !r.is_metapath())
                .ok_or_else(|| format!("unknown relation {:?}", cols[0]))?;
            let s = parse_id(cols[1])?;
            let d = parse_id(cols[2])?;
            for (kind, id) in [(r.source(), s), (r.destination(), d)] {
                if id as usize >= counts[kind.index()] {
                    return Err(format!("@dangling {kind} {id} in {r} edge (line {line})"));
                }
            }
            if r.is_symmetric() && s == d {
                return Err(format!("self-loop in symmetric relation {r}"));
            }
            edges.push((r, s, d));
            Ok(())
        })?;

        let mut list = Vec::new();
        let mut seen = HashSet::new();
        for_each_row(pairs, |line, cols| {
            if cols.len() != 3 {
                return Err(format!("expected 3 tab-separated fields, found {}", cols.len()));
            }
            let member = parse_id(cols[0])?;
            let job = parse_id(cols[1])?;
            let label = match cols[2] {
                "0" => 0,
                "1" => 1,
                other => return Err(format!("label must be 0 or 1, got {other:?}")),
            };
            if member as usize >= counts[0] {
                return Err(format!("@dangling member {member} in pair (line {line})"));
            }
            if job as usize >= counts[1] {
                return Err(format!("@dangling job {job} in pair (line {line})"));
            }
            if !seen.insert((member, job)) {
                return Err(format!("duplicate candidate pair ({member}, {job})"));
            }
            list.push(CandidatePair { member, job, label });
            Ok(())
        })?;

        Self::from_parts(texts, &edges, list)
    }

    /// Adds co_apply (members sharing an applied job) and co_applied (jobs
    /// sharing an applicant). With a cap, edges are visited in a seeded random
    /// order and kept while both endpoints are under the cap.
    pub fn materialize_metapaths(&self, cap: Option<usize>, seed: u64) -> Result<Self> {
        if cap == Some(0) {
            return Err(Error::Config("metapath cap must be positive".into()));
        }
        let mut out = self.clone();
        let apply = RelationView::forward(RelationKind::Apply);
        let applied_by = RelationView::reversed(RelationKind::Apply).expect("apply is directed");
        for (meta, via, nodes) in [
            (RelationKind::CoApply, applied_by, self.count(EntityKind::Job)),
            (RelationKind::CoApplied, apply, self.count(EntityKind::Member)),
        ] {
            let mut edges = Vec::new();
            for hub in 0..nodes {
                let row = self.views[via.index()].row(hub);
                for (i, &a) in row.iter().enumerate() {
                    for &b in &row[i + 1..] {
                        edges.push((a, b));
                    }
                }
            }
            edges.sort_unstable();
            edges.dedup();
            if let Some(cap) = cap {
                let mut rng = rng::substream(seed, meta.name(), 0);
                edges.shuffle(&mut rng);
                let mut degree = vec![0usize; self.count(meta.source())];
                edges.retain(|&(a, b)| {
                    let keep = degree[a as usize] < cap && degree[b as usize] < cap;
                    if keep {
                        degree[a as usize] += 1;
                        degree[b as usize] += 1;
                    }
                    keep
                });
            }
            let both = edges.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
            out.views[meta.index()] = Adjacency::build(self.count(meta.source()), both);
        }
        out.metapaths = Some(MetapathSettings { cap, seed });
        Ok(out)
    }

    /// Copy of the store with the given natural edges removed. Metapaths are
    /// recomputed from the remaining apply edges with the same settings.
    pub fn without_edges(&self, removed: &[(RelationKind, u32, u32)]) -> Result<Self> {
        let mut drop: HashSet<(RelationKind, u32, u32)> = HashSet::new();
        for &(r, s, d) in removed {
            drop.insert((r, s, d));
            if r.is_symmetric() {
                drop.insert((r, d, s));
            }
        }
        let mut edges = Vec::new();
        for r in RelationKind::NATURAL {
            for (s, d) in self.edges(r) {
                if !drop.contains(&(r, s, d)) {
                    edges.push((r, s, d));
                }
            }
        }
        let base = Self::from_parts(self.texts.clone(), &edges, self.pairs.clone())?;
        match self.metapaths {
            Some(m) => base.materialize_metapaths(m.cap, m.seed),
            None => Ok(base),
        }
    }

    pub fn count(&self, kind: EntityKind) -> usize {
        self.texts[kind.index()].len()
    }

    pub fn counts(&self) -> [usize; 5] {
        EntityKind::ALL.map(|k| self.count(k))
    }

    pub fn contains(&self, e: EntityRef) -> bool {
        (e.id as usize) < self.count(e.kind)
    }

    pub fn text(&self, e: EntityRef) -> &str {
        &self.texts[e.kind.index()][e.id as usize]
    }

    pub fn pairs(&self) -> &[CandidatePair] {
        &self.pairs
    }

    pub fn metapath_settings(&self) -> Option<MetapathSettings> {
        self.metapaths
    }

    /// Destination ids of `e` under `view`, ascending.
    pub fn neighbors(&self, e: EntityRef, view: impl Into<RelationView>) -> Result<&[u32]> {
        let view = view.into();
        if view.source() != e.kind {
            return Err(Error::Contract(format!(
                "{} starts at {}, got {e}",
                view.name(),
                view.source()
            )));
        }
        if !self.contains(e) {
            return Err(Error::Contract(format!("unknown entity {e}")));
        }
        Ok(self.views[view.index()].row(e.id as usize))
    }

    pub fn neighbor_refs(&self, e: EntityRef, view: impl Into<RelationView>) -> Result<Vec<EntityRef>> {
        let view = view.into();
        let kind = view.destination();
        Ok(self
            .neighbors(e, view)?
            .iter()
            .map(|&id| EntityRef::new(kind, id))
            .collect())
    }

    /// Unchecked row lookup for hot loops; `id` must be a valid source id.
    #[inline]
    pub fn row(&self, view: RelationView, id: u32) -> &[u32] {
        self.views[view.index()].row(id as usize)
    }

    pub fn has_edge(&self, view: impl Into<RelationView>, s: u32, d: u32) -> bool {
        let view = view.into();
        (s as usize) < self.count(view.source())
            && self.views[view.index()].row(s as usize).binary_search(&d).is_ok()
    }

    /// Edges of a relation in forward direction. Symmetric relations list
    /// each unordered pair once with `s < d`.
    pub fn edges(&self, r: RelationKind) -> Vec<(u32, u32)> {
        let sym = r.is_symmetric();
        self.views[r.index()]
            .pairs()
            .filter(|&(s, d)| !sym || s < d)
            .collect()
    }

    /// All directed entries of a view, `(source, destination)`.
    pub fn view_entries(&self, view: RelationView) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.views[view.index()].pairs()
    }

    pub fn edge_count(&self, r: RelationKind) -> usize {
        let n = self.views[r.index()].targets.len();
        if r.is_symmetric() {
            n / 2
        } else {
            n
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = StoreManifest {
            format_version: STORE_FORMAT_VERSION,
            counts: EntityKind::ALL.iter().map(|&k| (k, self.count(k))).collect(),
            relations: RelationKind::ALL.iter().map(|r| r.name().to_string()).collect(),
            pairs: self.pairs.len(),
            metapaths: self.metapaths,
        };
        binio::write_json(&dir.join("manifest.json"), &manifest)?;
        write_entities(&dir.join("entities.tsv"), &self.texts)?;
        write_pairs(&dir.join("pairs.tsv"), &self.pairs)?;
        for r in RelationKind::ALL {
            binio::write_edges(&dir.join(format!("edges/{}.bin", r.name())), &self.edges(r))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.json");
        let manifest: StoreManifest = binio::read_json(&manifest_path)?;
        if manifest.format_version != STORE_FORMAT_VERSION {
            return Err(Error::format(
                &manifest_path,
                format!("unsupported format version {}", manifest.format_version),
            ));
        }
        let texts = read_entities(&dir.join("entities.tsv"))?;
        for (kind, n) in &manifest.counts {
            if texts[kind.index()].len() != *n {
                return Err(Error::format(
                    &manifest_path,
                    format!("manifest lists {n} {kind} entities, entities.tsv has {}", texts[kind.index()].len()),
                ));
            }
        }
        let mut natural = Vec::new();
        let mut derived = Vec::new();
        for r in RelationKind::ALL {
            let path = dir.join(format!("edges/{}.bin", r.name()));
            for (s, d) in binio::read_edges(&path)? {
                if r.is_metapath() {
                    derived.push((r, s, d));
                } else {
                    natural.push((r, s, d));
                }
            }
        }
        let mut pairs = Vec::new();
        for_each_row(&dir.join("pairs.tsv"), |_, cols| {
            if cols.len() != 3 {
                return Err("expected 3 fields".into());
            }
            pairs.push(CandidatePair {
                member: parse_id(cols[0])?,
                job: parse_id(cols[1])?,
                label: cols[2].parse().map_err(|_| format!("bad label {:?}", cols[2]))?,
            });
            Ok(())
        })?;
        let mut store = Self::from_parts(texts, &natural, pairs)?;
        for r in [RelationKind::CoApply, RelationKind::CoApplied] {
            let n = store.count(r.source());
            let mut both = Vec::new();
            for &(m, s, d) in derived.iter().filter(|e| e.0 == r) {
                check_endpoint(&store.counts().to_vec(), m.source(), s.max(d), m)?;
                both.push((s, d));
                both.push((d, s));
            }
            store.views[r.index()] = Adjacency::build(n, both);
        }
        store.metapaths = manifest.metapaths;
        Ok(store)
    }
}

fn check_endpoint(counts: &[usize], kind: EntityKind, id: u32, ctx: impl fmt::Display) -> Result<()> {
    if (id as usize) < counts[kind.index()] {
        Ok(())
    } else {
        Err(Error::Dangling(format!(
            "{ctx} references {kind} {id}, but only {} exist",
            counts[kind.index()]
        )))
    }
}

fn parse_id(s: &str) -> std::result::Result<u32, String> {
    s.parse::<u32>().map_err(|_| format!("invalid id {s:?}"))
}

/// Runs `f(line_no, fields)` on every non-empty line. Messages starting with
/// `@dangling` become referential-integrity errors, the rest parse errors.
fn for_each_row(
    path: &Path,
    mut f: impl FnMut(usize, Vec<&str>) -> std::result::Result<(), String>,
) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        if let Err(msg) = f(i + 1, line.split('\t').collect()) {
            return Err(match msg.strip_prefix("@dangling ") {
                Some(rest) => Error::Dangling(format!("{}: {rest}", path.display())),
                None => Error::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    msg,
                },
            });
        }
    }
    Ok(())
}

fn read_entities(path: &Path) -> Result<[Vec<String>; 5]> {
    let mut slots: [Vec<Option<String>>; 5] = Default::default();
    for_each_row(path, |_, cols| {
        if cols.len() != 3 {
            return Err(format!("expected 3 tab-separated fields, found {}", cols.len()));
        }
        let kind = EntityKind::parse(cols[0]).ok_or_else(|| format!("unknown entity kind {:?}", cols[0]))?;
        let id = parse_id(cols[1])? as usize;
        let table = &mut slots[kind.index()];
        if table.len() <= id {
            table.resize(id + 1, None);
        }
        if table[id].is_some() {
            return Err(format!("duplicate entity {kind} {id}"));
        }
        table[id] = Some(unescape(cols[2]));
        Ok(())
    })?;
    let mut out: [Vec<String>; 5] = Default::default();
    for kind in EntityKind::ALL {
        let table = std::mem::take(&mut slots[kind.index()]);
        let mut texts = Vec::with_capacity(table.len());
        for (id, t) in table.into_iter().enumerate() {
            texts.push(t.ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line: 0,
                msg: format!("{kind} ids must be dense: id {id} is missing"),
            })?);
        }
        out[kind.index()] = texts;
    }
    Ok(out)
}

pub(crate) fn write_entities(path: &Path, texts: &[Vec<String>; 5]) -> Result<()> {
    let mut s = String::new();
    for kind in EntityKind::ALL {
        for (id, t) in texts[kind.index()].iter().enumerate() {
            s.push_str(&format!("{}\t{id}\t{}\n", kind.name(), escape(t)));
        }
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_pairs(path: &Path, pairs: &[CandidatePair]) -> Result<()> {
    let mut s = String::new();
    for p in pairs {
        s.push_str(&format!("{}\t{}\t{}\n", p.member, p.job, p.label));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_relations(path: &Path, edges: &[(RelationKind, u32, u32)]) -> Result<()> {
    let mut s = String::new();
    for (r, a, b) in edges {
        s.push_str(&format!("{}\t{a}\t{b}\n", r.name()));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}
