//! Stage two: job-conditioned member encoder and pair scorer.
//!
//! A member's contextual feature comes from multi-head attention whose
//! queries are the job's required-skill embeddings and whose keys/values are
//! the member's profile tokens. Members then exchange messages with a few
//! professional connections, weighted by how relevant each connection's
//! skills are to the job.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use whin_autodiff::{Adam, ParamId, ParamStore, Scalar, Tape, Tensor, Var};

use crate::binio;
use crate::error::{Error, Result};
use crate::eval::metrics::{self, ScoredPair};
use crate::pretrain::{glorot, EmbeddingTable};
use crate::rng::{self, Rng};
use crate::sampler::sample_skills;
use crate::store::{CandidatePair, EntityKind, EntityRef, RelationKind, WhinStore};
use crate::text::{mean_rows_or_zero, TextEmbedder};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "full")]
    Full,
    /// No messages from professional connections.
    #[serde(rename = "wo_S")]
    WoS,
    /// Mean pooling instead of job-specific attention; uniform connection weights.
    #[serde(rename = "wo_A")]
    WoA,
    /// Pre-trained structural embeddings only.
    #[serde(rename = "wo_CSA")]
    WoCsa,
    /// Mean token vectors only.
    #[serde(rename = "wo_CSA_H")]
    WoCsaH,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::WoS,
        Variant::WoA,
        Variant::WoCsa,
        Variant::WoCsaH,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WoS => "wo_S",
            Variant::WoA => "wo_A",
            Variant::WoCsa => "wo_CSA",
            Variant::WoCsaH => "wo_CSA_H",
        }
    }

    pub fn needs_structural(self) -> bool {
        self != Variant::WoCsaH
    }

    fn job_attention(self) -> bool {
        matches!(self, Variant::Full | Variant::WoS)
    }

    fn social(self) -> bool {
        matches!(self, Variant::Full | Variant::WoA)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|v| v.name()).collect();
            Error::Config(format!("unknown variant {s:?}; valid: {}", names.join(", ")))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsagnnConfig {
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub skills_per_entity: usize,
    pub connections: usize,
    pub learning_rate: f32,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_pairs: usize,
    pub variant: Variant,
    pub seed: u64,
}

impl Default for CsagnnConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            heads: 4,
            layers: 2,
            skills_per_entity: 10,
            connections: 5,
            learning_rate: 1e-3,
            max_epochs: 50,
            patience: 5,
            batch_pairs: 32,
            variant: Variant::Full,
            seed: 0,
        }
    }
}

impl CsagnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "dim {} must be a positive multiple of heads {}",
                self.dim, self.heads
            )));
        }
        for (name, v) in [
            ("skills_per_entity", self.skills_per_entity),
            ("connections", self.connections),
            ("batch_pairs", self.batch_pairs),
            ("patience", self.patience),
            ("max_epochs", self.max_epochs),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

/// Arithmetic mean of skill vectors. The flag is true for an empty set, in
/// which case the mean is the zero vector.
pub fn skill_set_embedding(vectors: &[&[f32]], dim: usize) -> (Vec<f64>, bool) {
    if vectors.is_empty() {
        return (vec![0.0; dim], true);
    }
    let mut m = vec![0.0f64; dim];
    for v in vectors {
        for (o, &x) in m.iter_mut().zip(v.iter()) {
            *o += x as f64;
        }
    }
    let n = vectors.len() as f64;
    (m.into_iter().map(|x| x / n).collect(), false)
}

/// `max(cos(a, b), 0)`; zero (flagged degenerate) if either vector is zero.
pub fn member_job_relevance(member_mean: &[f64], job_mean: &[f64]) -> (f64, bool) {
    let dot: f64 = member_mean.iter().zip(job_mean).map(|(a, b)| a * b).sum();
    let na = member_mean.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb = job_mean.iter().map(|b| b * b).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return (0.0, true);
    }
    ((dot / (na * nb)).max(0.0), false)
}

/// Relevance-proportional weights, uniform when every relevance is zero.
pub fn aggregation_weights(relevance: &[f64]) -> Result<Vec<f64>> {
    if relevance.is_empty() {
        return Err(Error::Contract("aggregation over an empty neighbor list".into()));
    }
    let total: f64 = relevance.iter().sum();
    if total > 0.0 {
        Ok(relevance.iter().map(|d| d / total).collect())
    } else {
        Ok(vec![1.0 / relevance.len() as f64; relevance.len()])
    }
}

/// Frozen per-entity inputs shared by every pair of a run.
#[derive(Clone, Debug)]
pub struct Features {
    dim: usize,
    member_tokens: Vec<Tensor<f32>>,
    member_mean_tokens: Vec<Vec<f32>>,
    job_mean_tokens: Vec<Vec<f32>>,
    member_skills: Vec<Vec<u32>>,
    job_skills: Vec<Vec<u32>>,
    member_skill_mean: Vec<Option<Vec<f64>>>,
    job_skill_mean: Vec<Option<Vec<f64>>>,
    connections: Vec<Vec<u32>>,
    structural: Option<EmbeddingTable>,
}

impl Features {
    /// Tokenizes every member and job, samples up to `n_s` skills per member
    /// and job (seeded per entity), and averages their pre-trained vectors.
    pub fn build(
        store: &WhinStore,
        embedder: &TextEmbedder,
        structural: Option<EmbeddingTable>,
        n_s: usize,
        seed: u64,
    ) -> Result<Self> {
        let dim = embedder.dim();
        if let Some(t) = &structural {
            t.check_counts(store)?;
            if t.dim() != dim {
                return Err(Error::Config(format!(
                    "pre-trained dim {} differs from text dim {dim}",
                    t.dim()
                )));
            }
        }
        let n_m = store.count(EntityKind::Member);
        let n_j = store.count(EntityKind::Job);
        let mut member_tokens = Vec::with_capacity(n_m);
        let mut member_mean_tokens = Vec::with_capacity(n_m);
        let mut member_skills = Vec::with_capacity(n_m);
        let mut connections = Vec::with_capacity(n_m);
        for m in 0..n_m as u32 {
            let e = EntityRef::member(m);
            let c = embedder.token_vectors(&embedder.tokenize(store.text(e)));
            member_mean_tokens.push(mean_rows_or_zero(&c, "member profile has no tokens"));
            member_tokens.push(c);
            let mut rng = rng::substream(seed, "csagnn.skills.member", m as u64);
            member_skills.push(sample_skills(store.neighbors(e, RelationKind::Master)?, n_s, &mut rng));
            connections.push(store.neighbors(e, RelationKind::Connect)?.to_vec());
        }
        let mut job_mean_tokens = Vec::with_capacity(n_j);
        let mut job_skills = Vec::with_capacity(n_j);
        for j in 0..n_j as u32 {
            let e = EntityRef::job(j);
            let c = embedder.token_vectors(&embedder.tokenize(store.text(e)));
            job_mean_tokens.push(mean_rows_or_zero(&c, "job description has no tokens"));
            let mut rng = rng::substream(seed, "csagnn.skills.job", j as u64);
            job_skills.push(sample_skills(store.neighbors(e, RelationKind::Require)?, n_s, &mut rng));
        }
        let means = |lists: &[Vec<u32>]| -> Vec<Option<Vec<f64>>> {
            lists
                .iter()
                .map(|skills| {
                    let t = structural.as_ref()?;
                    let vecs: Vec<&[f32]> = skills.iter().map(|&s| t.get(EntityRef::skill(s))).collect();
                    let (m, degenerate) = skill_set_embedding(&vecs, dim);
                    (!degenerate).then_some(m)
                })
                .collect()
        };
        let member_skill_mean = means(&member_skills);
        let job_skill_mean = means(&job_skills);
        Ok(Self {
            dim,
            member_tokens,
            member_mean_tokens,
            job_mean_tokens,
            member_skills,
            job_skills,
            member_skill_mean,
            job_skill_mean,
            connections,
            structural,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn structural(&self) -> Option<&EmbeddingTable> {
        self.structural.as_ref()
    }

    pub fn member_skills(&self, m: u32) -> &[u32] {
        &self.member_skills[m as usize]
    }

    pub fn job_skills(&self, j: u32) -> &[u32] {
        &self.job_skills[j as usize]
    }

    /// Relevance of member `m` to job `j` from their sampled skill means.
    pub fn relevance(&self, m: u32, j: u32) -> f64 {
        match (&self.member_skill_mean[m as usize], &self.job_skill_mean[j as usize]) {
            (Some(a), Some(b)) => member_job_relevance(a, b).0,
            _ => 0.0,
        }
    }

    fn structural_row(&self, e: EntityRef) -> Vec<f32> {
        match &self.structural {
            Some(t) => t.get(e).to_vec(),
            None => vec![0.0; self.dim],
        }
    }
}

/// Top-`k` connections of `member` by relevance to `job`, ties by lower id.
pub fn select_connections(features: &Features, member: u32, job: u32, k: usize) -> Vec<u32> {
    let mut ranked: Vec<(f64, u32)> = features.connections[member as usize]
        .iter()
        .map(|&c| (features.relevance(c, job), c))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    ranked.truncate(k);
    ranked.into_iter().map(|(_, c)| c).collect()
}

/// A job-independent uniform subset of `k` connections, fixed per member
/// and seed.
pub fn sample_connections(features: &Features, member: u32, k: usize, seed: u64) -> Vec<u32> {
    let mut rng = rng::substream(seed, "csagnn.connections", member as u64);
    sample_skills(&features.connections[member as usize], k, &mut rng)
}

/// Everything about a pair that does not depend on trainable parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PairPlan {
    pub member: u32,
    pub job: u32,
    /// The member first, then its selected connections.
    pub locals: Vec<u32>,
    /// Row `u` holds the aggregation weights of `u`'s neighbors among `locals`.
    pub alpha: Tensor<f32>,
    /// Sampled required skills used as attention queries; empty means the
    /// job has none and attention falls back to uniform pooling.
    pub queries: Vec<u32>,
}

pub fn plan_pair(features: &Features, cfg: &CsagnnConfig, member: u32, job: u32) -> PairPlan {
    let v = cfg.variant;
    let queries = if v.job_attention() {
        features.job_skills[job as usize].clone()
    } else {
        Vec::new()
    };
    let mut locals = vec![member];
    if v.social() {
        let chosen = if v == Variant::Full {
            select_connections(features, member, job, cfg.connections)
        } else {
            sample_connections(features, member, cfg.connections, cfg.seed)
        };
        locals.extend(chosen);
    }
    let n = locals.len();
    let mut alpha = Tensor::zeros(n, n);
    for u in 0..n {
        let nbrs: Vec<usize> = (0..n)
            .filter(|&w| w != u && features.connections[locals[u] as usize].binary_search(&locals[w]).is_ok())
            .collect();
        if nbrs.is_empty() {
            continue;
        }
        let rel: Vec<f64> = nbrs
            .iter()
            .map(|&w| {
                if v == Variant::Full {
                    features.relevance(locals[w], job)
                } else {
                    0.0
                }
            })
            .collect();
        let weights = aggregation_weights(&rel).expect("nonempty");
        for (&w, a) in nbrs.iter().zip(weights) {
            alpha.set(u, w, a as f32);
        }
    }
    PairPlan {
        member,
        job,
        locals,
        alpha,
        queries,
    }
}

#[derive(Clone, Debug)]
struct Ids {
    wq: Vec<ParamId>,
    wk: Vec<ParamId>,
    wv: Vec<ParamId>,
    wo: ParamId,
    w1: Vec<ParamId>,
    w2: Vec<ParamId>,
    s_w1: ParamId,
    s_b1: ParamId,
    s_w2: ParamId,
    s_b2: ParamId,
}

/// Attention projections, social-layer weights, and the pair scorer. Every
/// variant carries the full parameter set; unused parts get zero gradient.
#[derive(Clone, Debug)]
pub struct CsagnnModel<T: Scalar = f32> {
    pub params: ParamStore<T>,
    dim: usize,
    heads: usize,
    layers: usize,
    ids: Ids,
}

impl<T: Scalar> CsagnnModel<T> {
    pub fn new(dim: usize, heads: usize, layers: usize, rng: &mut Rng) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Config(format!("dim {dim} is not divisible by {heads} heads")));
        }
        let hd = dim / heads;
        let mut p = ParamStore::new();
        for h in 0..heads {
            p.add(format!("mha.h{h}.query"), glorot(rng, dim, hd));
            p.add(format!("mha.h{h}.key"), glorot(rng, dim, hd));
            p.add(format!("mha.h{h}.value"), glorot(rng, dim, hd));
        }
        p.add("mha.output", glorot(rng, dim, dim));
        for l in 0..layers {
            p.add(format!("social.l{l}.self"), glorot(rng, 2 * dim, 2 * dim));
            p.add(format!("social.l{l}.neighbors"), glorot(rng, 2 * dim, 2 * dim));
        }
        p.add("scorer.w1", glorot(rng, 4 * dim, dim));
        p.add("scorer.b1", Tensor::zeros(1, dim));
        p.add("scorer.w2", glorot(rng, dim, 1));
        p.add("scorer.b2", Tensor::zeros(1, 1));
        Self::from_params(p, dim, heads, layers)
    }

    pub fn from_params(params: ParamStore<T>, dim: usize, heads: usize, layers: usize) -> Result<Self> {
        let find = |name: String| {
            params
                .find(&name)
                .ok_or_else(|| Error::Contract(format!("missing parameter {name}")))
        };
        let per_head = |what: &str| (0..heads).map(|h| find(format!("mha.h{h}.{what}"))).collect::<Result<Vec<_>>>();
        let ids = Ids {
            wq: per_head("query")?,
            wk: per_head("key")?,
            wv: per_head("value")?,
            wo: find("mha.output".into())?,
            w1: (0..layers).map(|l| find(format!("social.l{l}.self"))).collect::<Result<_>>()?,
            w2: (0..layers).map(|l| find(format!("social.l{l}.neighbors"))).collect::<Result<_>>()?,
            s_w1: find("scorer.w1".into())?,
            s_b1: find("scorer.b1".into())?,
            s_w2: find("scorer.w2".into())?,
            s_b2: find("scorer.b2".into())?,
        };
        let hd = dim / heads.max(1);
        let expect = |id: ParamId, shape: (usize, usize)| -> Result<()> {
            let got = params.get(id).shape();
            if got != shape {
                return Err(Error::Contract(format!(
                    "parameter {} has shape {got:?}, expected {shape:?}",
                    params.name(id)
                )));
            }
            Ok(())
        };
        for h in 0..heads {
            expect(ids.wq[h], (dim, hd))?;
            expect(ids.wk[h], (dim, hd))?;
            expect(ids.wv[h], (dim, hd))?;
        }
        expect(ids.wo, (dim, dim))?;
        for l in 0..layers {
            expect(ids.w1[l], (2 * dim, 2 * dim))?;
            expect(ids.w2[l], (2 * dim, 2 * dim))?;
        }
        expect(ids.s_w1, (4 * dim, dim))?;
        expect(ids.s_b1, (1, dim))?;
        expect(ids.s_w2, (dim, 1))?;
        expect(ids.s_b2, (1, 1))?;
        Ok(Self {
            params,
            dim,
            heads,
            layers,
            ids,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn heads(&self) -> usize {
        self.heads
    }
    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn cast<U: Scalar>(&self) -> CsagnnModel<U> {
        CsagnnModel {
            params: self.params.cast(),
            dim: self.dim,
            heads: self.heads,
            layers: self.layers,
            ids: self.ids.clone(),
        }
    }

    /// Zeroes the scorer so every prediction is 0.5.
    pub fn zero_scorer(&mut self) {
        for id in [self.ids.s_w1, self.ids.s_b1, self.ids.s_w2, self.ids.s_b2] {
            self.params.get_mut(id).data_mut().fill(T::zero());
        }
    }

    /// Per-head query projections of the job's skill queries (`n_q x d`).
    pub fn project_queries(&self, tape: &mut Tape<T>, vars: &[Var], queries: Var) -> Result<Vec<Var>> {
        self.ids
            .wq
            .iter()
            .map(|id| Ok(tape.matmul(queries, vars[id.0])?))
            .collect()
    }

    /// Attention of each skill query over the member's tokens, heads
    /// concatenated, averaged over queries, then output-projected (`1 x d`).
    /// `None` queries pool the tokens uniformly. No tokens gives zeros.
    pub fn job_contextual_feature(
        &self,
        tape: &mut Tape<T>,
        vars: &[Var],
        tokens: Option<Var>,
        projected_queries: Option<&[Var]>,
    ) -> Result<Var> {
        let Some(c) = tokens else {
            return Ok(tape.constant(Tensor::zeros(1, self.dim)));
        };
        let weights = match projected_queries {
            Some(q) => Some(self.attention_weights(tape, vars, c, q)?),
            None => None,
        };
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let v = tape.matmul(c, vars[self.ids.wv[h].0])?;
            let out = match &weights {
                Some(a) => {
                    let o = tape.matmul(a[h], v)?;
                    tape.mean_rows(o)?
                }
                None => tape.mean_rows(v)?,
            };
            heads.push(out);
        }
        let cat = tape.concat_cols(&heads)?;
        Ok(tape.matmul(cat, vars[self.ids.wo.0])?)
    }

    /// Per-head `n_q x t` attention distributions of skill queries over tokens.
    pub fn attention_weights(
        &self,
        tape: &mut Tape<T>,
        vars: &[Var],
        tokens: Var,
        projected_queries: &[Var],
    ) -> Result<Vec<Var>> {
        if projected_queries.len() != self.heads {
            return Err(Error::Contract(format!(
                "expected {} projected query sets, got {}",
                self.heads,
                projected_queries.len()
            )));
        }
        if tape.shape(projected_queries[0]).0 == 0 {
            return Err(Error::Contract("attention needs at least one skill query".into()));
        }
        let scale = T::from_f64(1.0 / ((self.dim / self.heads) as f64).sqrt());
        (0..self.heads)
            .map(|h| {
                let k = tape.matmul(tokens, vars[self.ids.wk[h].0])?;
                let kt = tape.transpose(k)?;
                let s = tape.matmul(projected_queries[h], kt)?;
                let s = tape.scale(s, scale)?;
                Ok(tape.softmax_rows(s)?)
            })
            .collect()
    }

    /// Layer-averaged state of local node 0 after `layers` rounds of
    /// `H' = relu(alpha H W_neighbors + H W_self)`.
    pub fn social_forward(&self, tape: &mut Tape<T>, vars: &[Var], h0: Var, alpha: &Tensor<T>) -> Result<Var> {
        let has_edges = alpha.data().iter().any(|&a| a != T::zero());
        let alpha = has_edges.then(|| tape.constant(alpha.clone()));
        let mut h = h0;
        let mut total = tape.gather_rows(h0, &[0])?;
        for l in 0..self.layers {
            let mut t = tape.matmul(h, vars[self.ids.w1[l].0])?;
            if let Some(a) = alpha {
                let agg = tape.matmul(a, h)?;
                let m = tape.matmul(agg, vars[self.ids.w2[l].0])?;
                t = tape.add(m, t)?;
            }
            h = tape.relu(t)?;
            let row = tape.gather_rows(h, &[0])?;
            total = tape.add(total, row)?;
        }
        Ok(tape.scale(total, T::from_f64(1.0 / (self.layers + 1) as f64))?)
    }

    /// Scorer logits for stacked `n x 4d` pair inputs.
    pub fn score_logits(&self, tape: &mut Tape<T>, vars: &[Var], x: Var) -> Result<Var> {
        let h = tape.matmul(x, vars[self.ids.s_w1.0])?;
        let h = tape.add_bias(h, vars[self.ids.s_b1.0])?;
        let h = tape.relu(h)?;
        let o = tape.matmul(h, vars[self.ids.s_w2.0])?;
        Ok(tape.add_bias(o, vars[self.ids.s_b2.0])?)
    }

    /// `sigmoid(MLP(h_m || h_j))` for one pair of `2d` vectors.
    pub fn predict(&self, h_m: &[T], h_j: &[T]) -> Result<T> {
        if h_m.len() != 2 * self.dim || h_j.len() != 2 * self.dim {
            return Err(Error::Contract(format!(
                "predict expects two {}-vectors, got {} and {}",
                2 * self.dim,
                h_m.len(),
                h_j.len()
            )));
        }
        let mut tape = Tape::new();
        let vars = self.params.register(&mut tape);
        let mut row = h_m.to_vec();
        row.extend_from_slice(h_j);
        let x = tape.constant(Tensor::row_vector(row));
        let logit = self.score_logits(&mut tape, &vars, x)?;
        Ok(whin_autodiff::sigmoid(tape.value(logit).get(0, 0)))
    }

    /// The `1 x 4d` scorer input `h_m || h_j` for a planned pair.
    pub fn pair_input(
        &self,
        tape: &mut Tape<T>,
        vars: &[Var],
        features: &Features,
        plan: &PairPlan,
        variant: Variant,
    ) -> Result<Var> {
        let d = self.dim;
        let cast = |v: &[f32]| -> Vec<T> { v.iter().map(|&x| T::from_f64(x as f64)).collect() };
        let zeros = || vec![T::zero(); d];
        let job = EntityRef::job(plan.job);
        match variant {
            Variant::WoCsa => {
                let mut row = zeros();
                row.extend(cast(&features.structural_row(EntityRef::member(plan.member))));
                row.extend(zeros());
                row.extend(cast(&features.structural_row(job)));
                return Ok(tape.constant(Tensor::row_vector(row)));
            }
            Variant::WoCsaH => {
                let mut row = cast(&features.member_mean_tokens[plan.member as usize]);
                row.extend(zeros());
                row.extend(cast(&features.job_mean_tokens[plan.job as usize]));
                row.extend(zeros());
                return Ok(tape.constant(Tensor::row_vector(row)));
            }
            _ => {}
        }

        let queries = if plan.queries.is_empty() {
            None
        } else {
            let table = features
                .structural
                .as_ref()
                .ok_or_else(|| Error::MissingDependency("attention needs pre-trained skill embeddings".into()))?;
            let mut data = Vec::with_capacity(plan.queries.len() * d);
            for &s in &plan.queries {
                data.extend(cast(table.get(EntityRef::skill(s))));
            }
            let q = tape.constant(Tensor::new(plan.queries.len(), d, data)?);
            Some(self.project_queries(tape, vars, q)?)
        };

        let mut rows = Vec::with_capacity(plan.locals.len());
        for &x in &plan.locals {
            let toks = &features.member_tokens[x as usize];
            let c = (toks.rows() > 0).then(|| tape.constant(toks.cast::<T>()));
            let fc = self.job_contextual_feature(tape, vars, c, queries.as_deref())?;
            let fs = tape.constant(Tensor::row_vector(cast(&features.structural_row(EntityRef::member(x)))));
            rows.push(tape.concat_cols(&[fc, fs])?);
        }
        let h0 = tape.concat_rows(&rows)?;
        let h_m = self.social_forward(tape, vars, h0, &plan.alpha.cast::<T>())?;
        let h_j = tape.constant(Tensor::row_vector(job_representation(features, plan.job).iter().map(|&x| T::from_f64(x as f64)).collect()));
        Ok(tape.concat_cols(&[h_m, h_j])?)
    }

    /// Logits (`n x 1`) for a batch of planned pairs.
    pub fn batch_logits(
        &self,
        tape: &mut Tape<T>,
        vars: &[Var],
        features: &Features,
        plans: &[&PairPlan],
        variant: Variant,
    ) -> Result<Var> {
        let inputs = plans
            .iter()
            .map(|p| self.pair_input(tape, vars, features, p, variant))
            .collect::<Result<Vec<_>>>()?;
        let x = tape.concat_rows(&inputs)?;
        self.score_logits(tape, vars, x)
    }
}

/// Mean description tokens followed by the pre-trained job vector (`2d`).
pub fn job_representation(features: &Features, job: u32) -> Vec<f32> {
    let mut v = features.job_mean_tokens[job as usize].clone();
    v.extend(features.structural_row(EntityRef::job(job)));
    v
}

/// `F^c || F^s`.
pub fn init_member_feature(fc: &[f32], fs: &[f32]) -> Vec<f32> {
    let mut v = fc.to_vec();
    v.extend_from_slice(fs);
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsagnnEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_auc: f64,
}

#[derive(Clone, Debug)]
pub struct CsagnnOutcome {
    pub model: CsagnnModel<f32>,
    pub history: Vec<CsagnnEpoch>,
    /// Epoch whose parameters were kept (best validation AUC).
    pub best_epoch: usize,
    /// Last epoch run before stopping.
    pub stopped_epoch: usize,
}

/// Probabilities for `pairs` under a trained model.
pub fn score_pairs(
    model: &CsagnnModel<f32>,
    features: &Features,
    cfg: &CsagnnConfig,
    pairs: &[CandidatePair],
) -> Result<Vec<ScoredPair>> {
    let plans: Vec<PairPlan> = pairs.iter().map(|p| plan_pair(features, cfg, p.member, p.job)).collect();
    score_plans(model, features, cfg.variant, pairs, &plans)
}

fn score_plans(
    model: &CsagnnModel<f32>,
    features: &Features,
    variant: Variant,
    pairs: &[CandidatePair],
    plans: &[PairPlan],
) -> Result<Vec<ScoredPair>> {
    // Chunks are independent, so scoring fans out over the worker pool.
    let chunks: Vec<(&[CandidatePair], &[PairPlan])> = pairs.chunks(64).zip(plans.chunks(64)).collect();
    let scored: Vec<Vec<ScoredPair>> = chunks
        .into_par_iter()
        .map(|(chunk_pairs, chunk_plans)| {
            let mut tape = Tape::new();
            let vars = model.params.register(&mut tape);
            let refs: Vec<&PairPlan> = chunk_plans.iter().collect();
            let logits = model.batch_logits(&mut tape, &vars, features, &refs, variant)?;
            let mut out = Vec::with_capacity(chunk_pairs.len());
            for (p, &z) in chunk_pairs.iter().zip(tape.value(logits).data()) {
                let score = whin_autodiff::sigmoid(z as f64);
                if !score.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite score for member {} job {}",
                        p.member, p.job
                    )));
                }
                out.push(ScoredPair {
                    member: p.member,
                    job: p.job,
                    score,
                    label: p.label,
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(scored.into_iter().flatten().collect())
}

/// Adam on the training pairs with early stopping on validation AUC. The
/// parameters from the best validation epoch are returned.
pub fn train_csagnn(
    features: &Features,
    cfg: &CsagnnConfig,
    train: &[CandidatePair],
    valid: &[CandidatePair],
    mut on_epoch: impl FnMut(&CsagnnEpoch),
) -> Result<CsagnnOutcome> {
    cfg.validate()?;
    if features.dim() != cfg.dim {
        return Err(Error::Config(format!(
            "feature dim {} differs from model dim {}",
            features.dim(),
            cfg.dim
        )));
    }
    if cfg.variant.needs_structural() && features.structural().is_none() {
        return Err(Error::MissingDependency(format!(
            "variant {} needs pre-trained embeddings",
            cfg.variant
        )));
    }
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Config("training and validation splits must be nonempty".into()));
    }
    let mut model = CsagnnModel::<f32>::new(cfg.dim, cfg.heads, cfg.layers, &mut rng::substream(cfg.seed, "csagnn.init", 0))?;
    let train_plans: Vec<PairPlan> = train.iter().map(|p| plan_pair(features, cfg, p.member, p.job)).collect();
    let valid_plans: Vec<PairPlan> = valid.iter().map(|p| plan_pair(features, cfg, p.member, p.job)).collect();
    let mut adam = Adam::new(&model.params, cfg.learning_rate);

    let mut best: Option<(f64, usize, ParamStore<f32>)> = None;
    let mut history = Vec::new();
    let mut since_best = 0;
    let mut stopped_epoch = 0;
    for epoch in 0..cfg.max_epochs {
        stopped_epoch = epoch;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng::substream(cfg.seed, "csagnn.shuffle", epoch as u64));
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_pairs) {
            let plans: Vec<&PairPlan> = chunk.iter().map(|&i| &train_plans[i]).collect();
            let labels: Vec<f32> = chunk.iter().map(|&i| train[i].label as f32).collect();
            let mut tape = Tape::new();
            let vars = model.params.register(&mut tape);
            let logits = model.batch_logits(&mut tape, &vars, features, &plans, cfg.variant)?;
            let loss = tape.bce_with_logits(logits, &labels)?;
            let value = tape.value(loss).get(0, 0) as f64;
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "training loss became {value} at epoch {epoch}, batch {batches}"
                )));
            }
            let mut grads = tape.backward(loss)?;
            let grads: Vec<Tensor<f32>> = vars.iter().map(|&v| grads.take(v).expect("trainable")).collect();
            adam.step(&mut model.params, &grads)?;
            loss_sum += value;
            batches += 1;
        }
        let scored = score_plans(&model, features, cfg.variant, valid, &valid_plans)?;
        let valid_auc = metrics::auc_scored(&scored)?;
        let log = CsagnnEpoch {
            epoch,
            train_loss: loss_sum / batches as f64,
            valid_auc,
        };
        on_epoch(&log);
        history.push(log);
        if best.as_ref().is_none_or(|b| valid_auc > b.0) {
            best = Some((valid_auc, epoch, model.params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch runs when max_epochs > 0");
    model.params = params;
    Ok(CsagnnOutcome {
        model,
        history,
        best_epoch,
        stopped_epoch,
    })
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format_version: u32,
    pub config: CsagnnConfig,
    pub split_seed: u64,
    pub embedder: crate::text::EmbedderConfig,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub history: Vec<CsagnnEpoch>,
    pub parameters: Vec<String>,
    /// Whether the pre-trained table is stored next to the parameters.
    pub has_structural: bool,
}

pub fn save_model(dir: &Path, manifest: &ModelManifest, model: &CsagnnModel<f32>, structural: Option<&EmbeddingTable>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    binio::write_json(&dir.join("manifest.json"), manifest)?;
    for (_, name, t) in model.params.iter() {
        binio::write_matrix(&dir.join(format!("params/{name}.bin")), t)?;
    }
    if let Some(t) = structural {
        for k in EntityKind::ALL {
            binio::write_matrix(&dir.join(format!("structural/{}.bin", k.name())), t.kind(k))?;
        }
    }
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<(ModelManifest, CsagnnModel<f32>, Option<EmbeddingTable>)> {
    let path = dir.join("manifest.json");
    if !path.exists() {
        return Err(Error::MissingDependency(format!("model manifest {} not found", path.display())));
    }
    let manifest: ModelManifest = binio::read_json(&path)?;
    if manifest.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::format(&path, format!("unsupported model version {}", manifest.format_version)));
    }
    let mut params = ParamStore::new();
    for name in &manifest.parameters {
        params.add(name.clone(), binio::read_matrix(&dir.join(format!("params/{name}.bin")))?);
    }
    let c = &manifest.config;
    let model = CsagnnModel::from_params(params, c.dim, c.heads, c.layers)?;
    let structural = if manifest.has_structural {
        let mut tables: [Tensor<f32>; 5] = std::array::from_fn(|_| Tensor::zeros(0, 0));
        for k in EntityKind::ALL {
            tables[k.index()] = binio::read_matrix(&dir.join(format!("structural/{}.bin", k.name())))?;
        }
        Some(EmbeddingTable::new(tables)?)
    } else {
        None
    };
    Ok((manifest, model, structural))
}
