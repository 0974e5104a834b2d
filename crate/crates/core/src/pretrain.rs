//! Stage one: relational graph encoder with a link-existence decoder.

use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use whin_autodiff::{Adam, CsrMatrix, ParamId, ParamStore, Scalar, Tape, Tensor, Var};

use crate::binio;
use crate::error::{Error, Result};
use crate::eval::metrics;
use crate::rng::{self, Rng};
use crate::sampler::{self, LinkTriple, SamplerConfig, SubgraphBatch};
use crate::store::{EntityKind, EntityRef, RelationKind, RelationView, WhinStore, VIEW_COUNT};
use crate::text::{EmbedderConfig, TextEmbedder};

/// Where the encoder input comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderMode {
    /// Mean token vectors passed through the relational encoder.
    Rgcn,
    /// Frozen random vectors fed straight to the decoder (reference baseline).
    FrozenRandom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub dim: usize,
    pub layers: usize,
    pub sampler: SamplerConfig,
    pub learning_rate: f32,
    pub epochs: usize,
    pub batch_pairs: usize,
    /// Fraction of natural edges withheld from training to measure link AUC.
    pub holdout_fraction: f64,
    pub encoder: EncoderMode,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            layers: 3,
            sampler: SamplerConfig::default(),
            learning_rate: 1e-3,
            epochs: 20,
            batch_pairs: 32,
            holdout_fraction: 0.1,
            encoder: EncoderMode::Rgcn,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        if self.dim == 0 {
            return Err(Error::Config("dim must be positive".into()));
        }
        if self.batch_pairs == 0 {
            return Err(Error::Config("batch_pairs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config("holdout_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Row offsets of each entity kind inside one stacked `N x dim` matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GlobalIndex {
    offsets: [usize; 6],
}

impl GlobalIndex {
    pub fn new(counts: [usize; 5]) -> Self {
        let mut offsets = [0; 6];
        for k in 0..5 {
            offsets[k + 1] = offsets[k] + counts[k];
        }
        Self { offsets }
    }

    #[inline]
    pub fn of(&self, e: EntityRef) -> usize {
        self.offsets[e.kind.index()] + e.id as usize
    }

    pub fn total(&self) -> usize {
        self.offsets[5]
    }

    pub fn span(&self, kind: EntityKind) -> std::ops::Range<usize> {
        self.offsets[kind.index()]..self.offsets[kind.index() + 1]
    }
}

/// Row-normalized adjacency per view: row `i` averages the states of `i`'s
/// neighbors under that view. Views without edges are `None`.
#[derive(Clone, Debug)]
pub struct MessageGraph<T: Scalar> {
    nodes: usize,
    adj: Vec<Option<Arc<CsrMatrix<T>>>>,
}

impl<T: Scalar> MessageGraph<T> {
    /// `edges[v]` lists `(i, j)` meaning `j` is a neighbor of `i` under view `v`.
    pub fn from_edges(nodes: usize, edges: &[Vec<(usize, usize)>]) -> Result<Self> {
        let mut adj = Vec::with_capacity(edges.len());
        for list in edges {
            if list.is_empty() {
                adj.push(None);
                continue;
            }
            let mut degree = vec![0usize; nodes];
            for &(i, _) in list {
                degree[i] += 1;
            }
            let trip: Vec<(usize, usize, T)> = list
                .iter()
                .map(|&(i, j)| (i, j, T::from_f64(1.0 / degree[i] as f64)))
                .collect();
            adj.push(Some(Arc::new(CsrMatrix::from_triplets(nodes, nodes, &trip)?)));
        }
        Ok(Self { nodes, adj })
    }

    pub fn from_batch(batch: &SubgraphBatch) -> Result<Self> {
        let edges: Vec<Vec<(usize, usize)>> = RelationView::all()
            .map(|v| batch.view_edges(v).to_vec())
            .collect();
        Self::from_edges(batch.len(), &edges)
    }

    /// Whole store in [`GlobalIndex`] order.
    pub fn from_store(store: &WhinStore) -> Result<Self> {
        let gi = GlobalIndex::new(store.counts());
        let edges: Vec<Vec<(usize, usize)>> = RelationView::all()
            .map(|v| {
                let (so, dk) = (v.source(), v.destination());
                store
                    .view_entries(v)
                    .map(|(s, d)| (gi.of(EntityRef::new(so, s)), gi.of(EntityRef::new(dk, d))))
                    .collect()
            })
            .collect();
        Self::from_edges(gi.total(), &edges)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn view(&self, v: usize) -> Option<&Arc<CsrMatrix<T>>> {
        self.adj.get(v).and_then(Option::as_ref)
    }
}

#[derive(Clone, Debug)]
struct ModelIds {
    relation_w: Vec<Vec<ParamId>>,
    self_w: Vec<ParamId>,
    relation_vectors: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

/// Encoder weights per layer and view, relation vectors, and the decoder MLP.
#[derive(Clone, Debug)]
pub struct PretrainModel<T: Scalar = f32> {
    pub params: ParamStore<T>,
    dim: usize,
    layers: usize,
    ids: ModelIds,
}

fn layer_name(l: usize, what: &str) -> String {
    format!("rgcn.l{l}.{what}")
}

pub(crate) fn glorot<T: Scalar>(rng: &mut Rng, rows: usize, cols: usize) -> Tensor<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    uniform(rng, rows, cols, limit)
}

pub(crate) fn uniform<T: Scalar>(rng: &mut Rng, rows: usize, cols: usize, limit: f64) -> Tensor<T> {
    let data = (0..rows * cols)
        .map(|_| T::from_f64(rng.gen_range(-limit..limit)))
        .collect();
    Tensor::new(rows, cols, data).expect("sized")
}

impl<T: Scalar> PretrainModel<T> {
    pub fn new(dim: usize, layers: usize, rng: &mut Rng) -> Self {
        let mut params = ParamStore::new();
        for l in 0..layers {
            for v in RelationView::all() {
                params.add(layer_name(l, &v.name()), glorot(rng, dim, dim));
            }
            params.add(layer_name(l, "self"), glorot(rng, dim, dim));
        }
        let rel_limit = 1.0 / (dim as f64).sqrt();
        params.add("decoder.relations", uniform(rng, RelationKind::ALL.len(), dim, rel_limit));
        params.add("decoder.w1", glorot(rng, 3 * dim, dim));
        params.add("decoder.b1", Tensor::zeros(1, dim));
        params.add("decoder.w2", glorot(rng, dim, 1));
        params.add("decoder.b2", Tensor::zeros(1, 1));
        Self::from_params(params, dim, layers).expect("names were just added")
    }

    /// Rebinds a parameter store (e.g. loaded from disk) by name.
    pub fn from_params(params: ParamStore<T>, dim: usize, layers: usize) -> Result<Self> {
        let find = |name: &str| {
            params
                .find(name)
                .ok_or_else(|| Error::Contract(format!("missing parameter {name}")))
        };
        let mut relation_w = Vec::new();
        let mut self_w = Vec::new();
        for l in 0..layers {
            relation_w.push(
                RelationView::all()
                    .map(|v| find(&layer_name(l, &v.name())))
                    .collect::<Result<Vec<_>>>()?,
            );
            self_w.push(find(&layer_name(l, "self"))?);
        }
        let ids = ModelIds {
            relation_w,
            self_w,
            relation_vectors: find("decoder.relations")?,
            w1: find("decoder.w1")?,
            b1: find("decoder.b1")?,
            w2: find("decoder.w2")?,
            b2: find("decoder.b2")?,
        };
        for (id, name, t) in params.iter() {
            let want = if name == "decoder.relations" {
                (RelationKind::ALL.len(), dim)
            } else if name == "decoder.w1" {
                (3 * dim, dim)
            } else if name == "decoder.b1" {
                (1, dim)
            } else if name == "decoder.w2" {
                (dim, 1)
            } else if name == "decoder.b2" {
                (1, 1)
            } else {
                (dim, dim)
            };
            if t.shape() != want {
                return Err(Error::Contract(format!(
                    "parameter {name} ({:?}) has shape {:?}, expected {want:?}",
                    id,
                    t.shape()
                )));
            }
        }
        Ok(Self {
            params,
            dim,
            layers,
            ids,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn cast<U: Scalar>(&self) -> PretrainModel<U> {
        PretrainModel {
            params: self.params.cast(),
            dim: self.dim,
            layers: self.layers,
            ids: self.ids.clone(),
        }
    }

    /// Overwrites the decoder with zeros (every score becomes 0.5).
    pub fn zero_decoder(&mut self) {
        for id in [self.ids.w1, self.ids.b1, self.ids.w2, self.ids.b2] {
            self.params.get_mut(id).data_mut().fill(T::zero());
        }
    }

    pub fn relation_vector(&self, r: RelationKind) -> &[T] {
        self.params.get(self.ids.relation_vectors).row(r.index())
    }

    /// One message-passing layer:
    /// `z'_i = relu(sum_v mean_{j in N_v(i)} z_j W_v + z_i W_self)`.
    pub fn rgcn_layer(
        &self,
        tape: &mut Tape<T>,
        vars: &[Var],
        graph: &MessageGraph<T>,
        z: Var,
        layer: usize,
    ) -> Result<Var> {
        if layer >= self.layers {
            return Err(Error::Contract(format!(
                "layer {layer} out of range for a {}-layer encoder",
                self.layers
            )));
        }
        if tape.shape(z) != (graph.nodes(), self.dim) {
            return Err(Error::Contract(format!(
                "states have shape {:?}, graph has {} nodes of dim {}",
                tape.shape(z),
                graph.nodes(),
                self.dim
            )));
        }
        let mut acc = tape.matmul(z, vars[self.ids.self_w[layer].0])?;
        for v in 0..VIEW_COUNT {
            if let Some(adj) = graph.view(v) {
                let msg = tape.spmm(adj.clone(), z)?;
                let w = vars[self.ids.relation_w[layer][v].0];
                let term = tape.matmul(msg, w)?;
                acc = tape.add(acc, term)?;
            }
        }
        Ok(tape.relu(acc)?)
    }

    /// Applies every layer to the initial states.
    pub fn encode(&self, tape: &mut Tape<T>, vars: &[Var], graph: &MessageGraph<T>, z0: Var) -> Result<Var> {
        let mut z = z0;
        for l in 0..self.layers {
            z = self.rgcn_layer(tape, vars, graph, z, l)?;
        }
        Ok(z)
    }

    /// Decoder logits for `(source row, relation, destination row)` triples,
    /// `n x 1`.
    pub fn decode_logits(
        &self,
        tape: &mut Tape<T>,
        vars: &[Var],
        z: Var,
        triples: &[(usize, RelationKind, usize)],
    ) -> Result<Var> {
        let src: Vec<usize> = triples.iter().map(|t| t.0).collect();
        let rel: Vec<usize> = triples.iter().map(|t| t.1.index()).collect();
        let dst: Vec<usize> = triples.iter().map(|t| t.2).collect();
        let zs = tape.gather_rows(z, &src)?;
        let mr = tape.gather_rows(vars[self.ids.relation_vectors.0], &rel)?;
        let zd = tape.gather_rows(z, &dst)?;
        let x = tape.concat_cols(&[zs, mr, zd])?;
        let h = tape.matmul(x, vars[self.ids.w1.0])?;
        let h = tape.add_bias(h, vars[self.ids.b1.0])?;
        let h = tape.relu(h)?;
        let o = tape.matmul(h, vars[self.ids.w2.0])?;
        Ok(tape.add_bias(o, vars[self.ids.b2.0])?)
    }

    /// `sigmoid(MLP(z_s || M_r || z_d))` for one triple.
    pub fn score_link(&self, z_s: &[T], relation: RelationKind, z_d: &[T]) -> Result<T> {
        if z_s.len() != self.dim || z_d.len() != self.dim {
            return Err(Error::Contract(format!(
                "score_link expects {}-dim vectors, got {} and {}",
                self.dim,
                z_s.len(),
                z_d.len()
            )));
        }
        let mut tape = Tape::new();
        let vars = self.params.register(&mut tape);
        let mut rows = Vec::with_capacity(2 * self.dim);
        rows.extend_from_slice(z_s);
        rows.extend_from_slice(z_d);
        let z = tape.constant(Tensor::new(2, self.dim, rows)?);
        let logit = self.decode_logits(&mut tape, &vars, z, &[(0, relation, 1)])?;
        Ok(whin_autodiff::sigmoid(tape.value(logit).get(0, 0)))
    }
}

/// Mean binary cross-entropy of probabilities `pred` against 0/1 `labels`,
/// evaluated through the equivalent logit so confident predictions stay
/// finite. Probabilities are clamped to `[1e-12, 1 - 1e-12]`.
pub fn pretrain_loss(pred: &[f64], labels: &[f64]) -> Result<f64> {
    if pred.len() != labels.len() || pred.is_empty() {
        return Err(Error::Contract(format!(
            "loss needs equally many predictions and labels, got {} and {}",
            pred.len(),
            labels.len()
        )));
    }
    let total: f64 = pred
        .iter()
        .zip(labels)
        .map(|(&y, &t)| {
            let y = y.clamp(1e-12, 1.0 - 1e-12);
            whin_autodiff::bce_logit_term((y / (1.0 - y)).ln(), t)
        })
        .sum();
    Ok(total / pred.len() as f64)
}

/// Final-layer states per entity kind.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    tables: [Tensor<f32>; 5],
}

impl EmbeddingTable {
    pub fn new(tables: [Tensor<f32>; 5]) -> Result<Self> {
        let dim = tables[0].cols();
        for (k, t) in tables.iter().enumerate() {
            if t.cols() != dim && t.rows() > 0 {
                return Err(Error::Contract(format!(
                    "{} table has {} columns, expected {dim}",
                    EntityKind::ALL[k],
                    t.cols()
                )));
            }
            if !t.is_finite() {
                return Err(Error::Numeric(format!(
                    "{} embeddings contain non-finite values",
                    EntityKind::ALL[k]
                )));
            }
        }
        Ok(Self { dim, tables })
    }

    /// Splits a stacked `N x dim` matrix in [`GlobalIndex`] order.
    pub fn from_stacked(counts: [usize; 5], stacked: &Tensor<f32>) -> Result<Self> {
        let gi = GlobalIndex::new(counts);
        let dim = stacked.cols();
        let tables = EntityKind::ALL.map(|k| {
            let span = gi.span(k);
            let data = stacked.data()[span.start * dim..span.end * dim].to_vec();
            Tensor::new(span.len(), dim, data).expect("sized")
        });
        Self::new(tables)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self, kind: EntityKind) -> &Tensor<f32> {
        &self.tables[kind.index()]
    }

    pub fn get(&self, e: EntityRef) -> &[f32] {
        self.tables[e.kind.index()].row(e.id as usize)
    }

    pub fn counts(&self) -> [usize; 5] {
        EntityKind::ALL.map(|k| self.tables[k.index()].rows())
    }

    pub fn check_counts(&self, store: &WhinStore) -> Result<()> {
        if self.counts() != store.counts() {
            return Err(Error::Contract(format!(
                "embedding table counts {:?} do not match store counts {:?}",
                self.counts(),
                store.counts()
            )));
        }
        Ok(())
    }
}

/// Mean-token initial states, stacked in [`GlobalIndex`] order.
pub fn initial_states(store: &WhinStore, embedder: &TextEmbedder) -> Tensor<f32> {
    let gi = GlobalIndex::new(store.counts());
    let dim = embedder.dim();
    let mut data = Vec::with_capacity(gi.total() * dim);
    for kind in EntityKind::ALL {
        for id in 0..store.count(kind) as u32 {
            let tokens = embedder.tokenize(store.text(EntityRef::new(kind, id)));
            data.extend(embedder.init_entity_embedding(&tokens));
        }
    }
    Tensor::new(gi.total(), dim, data).expect("sized")
}

fn random_states(total: usize, dim: usize, seed: u64) -> Tensor<f32> {
    let mut rng = rng::substream(seed, "pretrain.random_states", 0);
    uniform(&mut rng, total, dim, 1.0 / (dim as f64).sqrt())
}

/// Natural edges withheld from training, with one corrupted negative each.
#[derive(Clone, Debug, PartialEq)]
pub struct HeldOut {
    pub positives: Vec<LinkTriple>,
    pub negatives: Vec<LinkTriple>,
}

/// Removes a seeded `fraction` of every natural relation's edges. Negatives
/// are checked against the full store, so no withheld edge can appear as one.
pub fn split_holdout(store: &WhinStore, fraction: f64, seed: u64) -> Result<(WhinStore, HeldOut)> {
    let mut rng = rng::substream(seed, "pretrain.holdout", 0);
    let mut removed = Vec::new();
    let mut positives = Vec::new();
    for r in RelationKind::NATURAL {
        let mut edges = store.edges(r);
        edges.shuffle(&mut rng);
        let take = (edges.len() as f64 * fraction).round() as usize;
        let mut taken: Vec<(u32, u32)> = edges[..take].to_vec();
        taken.sort_unstable();
        for (s, d) in taken {
            removed.push((r, s, d));
            positives.push(LinkTriple {
                source: EntityRef::new(r.source(), s),
                relation: r,
                target: EntityRef::new(r.destination(), d),
            });
        }
    }
    let negatives = if positives.is_empty() {
        Vec::new()
    } else {
        sampler::sample_negatives(store, &positives, 1, &mut rng)?
    };
    let train = store.without_edges(&removed)?;
    Ok((train, HeldOut { positives, negatives }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub steps: usize,
    pub heldout_auc: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub model: PretrainModel<f32>,
    pub table: EmbeddingTable,
    pub history: Vec<EpochLog>,
}

/// Full-graph forward pass: final states for every entity of `store`.
pub fn full_forward(model: &PretrainModel<f32>, store: &WhinStore, z0: &Tensor<f32>) -> Result<Tensor<f32>> {
    let graph = MessageGraph::from_store(store)?;
    let mut tape = Tape::new();
    let vars = model.params.register(&mut tape);
    let z = tape.constant(z0.clone());
    let z = model.encode(&mut tape, &vars, &graph, z)?;
    Ok(tape.value(z).clone())
}

/// Link AUC of held-out positives against their negatives given final states.
pub fn heldout_auc(model: &PretrainModel<f32>, states: &Tensor<f32>, gi: &GlobalIndex, held: &HeldOut) -> Result<f64> {
    let triples: Vec<(usize, RelationKind, usize)> = held
        .positives
        .iter()
        .chain(&held.negatives)
        .map(|t| (gi.of(t.source), t.relation, gi.of(t.target)))
        .collect();
    let mut tape = Tape::new();
    let vars = model.params.register(&mut tape);
    let z = tape.constant(states.clone());
    let logits = model.decode_logits(&mut tape, &vars, z, &triples)?;
    let scores: Vec<f64> = tape.value(logits).data().iter().map(|&v| v as f64).collect();
    let labels: Vec<u8> = (0..triples.len())
        .map(|i| u8::from(i < held.positives.len()))
        .collect();
    metrics::auc(&scores, &labels)
}

fn encoder_input(store: &WhinStore, embedder: &TextEmbedder, cfg: &PretrainConfig) -> Tensor<f32> {
    match cfg.encoder {
        EncoderMode::Rgcn => initial_states(store, embedder),
        EncoderMode::FrozenRandom => {
            random_states(GlobalIndex::new(store.counts()).total(), cfg.dim, cfg.seed)
        }
    }
}

/// Trains on candidate-pair batches: sample a subgraph around the batch
/// endpoints, score incident edges against corrupted negatives, take one Adam
/// step. `on_epoch` sees each epoch's mean loss and held-out AUC.
pub fn train_pretrain(
    store: &WhinStore,
    embedder: &TextEmbedder,
    cfg: &PretrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    if store.metapath_settings().is_none() {
        return Err(Error::Contract(
            "pre-training needs a store with materialized metapaths".into(),
        ));
    }
    if embedder.dim() != cfg.dim {
        return Err(Error::Config(format!(
            "embedder dim {} differs from model dim {}",
            embedder.dim(),
            cfg.dim
        )));
    }
    let gi = GlobalIndex::new(store.counts());
    let z0 = encoder_input(store, embedder, cfg);
    let layers = match cfg.encoder {
        EncoderMode::Rgcn => cfg.layers,
        EncoderMode::FrozenRandom => 0,
    };
    let mut model = PretrainModel::<f32>::new(cfg.dim, layers, &mut rng::substream(cfg.seed, "pretrain.init", 0));

    let (train_store, held) = if cfg.holdout_fraction > 0.0 {
        let (t, h) = split_holdout(store, cfg.holdout_fraction, cfg.seed)?;
        (t, Some(h))
    } else {
        (store.clone(), None)
    };
    let train_graph_full = held.as_ref().map(|_| MessageGraph::from_store(&train_store)).transpose()?;

    let mut adam = Adam::new(&model.params, cfg.learning_rate);
    let pairs = store.pairs();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut rng::substream(cfg.seed, "pretrain.shuffle", epoch as u64));
        let mut loss_sum = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(cfg.batch_pairs) {
            let mut rng = rng::substream(cfg.seed, "pretrain.sample", step);
            step += 1;
            let mut seeds = Vec::with_capacity(chunk.len() * 2);
            for &i in chunk {
                seeds.push(pairs[i].member_ref());
                seeds.push(pairs[i].job_ref());
            }
            let Some(loss) = train_step(&mut model, &mut adam, &train_store, &seeds, &z0, &gi, cfg, &mut rng)? else {
                continue;
            };
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "pre-training loss became {loss} at epoch {epoch}, step {step}"
                )));
            }
            loss_sum += loss;
            steps += 1;
        }
        let heldout_auc = match (&held, &train_graph_full) {
            (Some(h), Some(g)) if !h.positives.is_empty() => {
                let states = forward_on(&model, g, &z0)?;
                Some(heldout_auc(&model, &states, &gi, h)?)
            }
            _ => None,
        };
        let log = EpochLog {
            epoch,
            loss: if steps > 0 { loss_sum / steps as f64 } else { f64::NAN },
            steps,
            heldout_auc,
        };
        on_epoch(&log);
        history.push(log);
    }

    let stacked = full_forward(&model, store, &z0)?;
    if !stacked.is_finite() {
        return Err(Error::Numeric("exported embeddings contain non-finite values".into()));
    }
    let table = EmbeddingTable::from_stacked(store.counts(), &stacked)?;
    Ok(PretrainOutcome {
        model,
        table,
        history,
    })
}

fn forward_on(model: &PretrainModel<f32>, graph: &MessageGraph<f32>, z0: &Tensor<f32>) -> Result<Tensor<f32>> {
    let mut tape = Tape::new();
    let vars = model.params.register(&mut tape);
    let z = tape.constant(z0.clone());
    let z = model.encode(&mut tape, &vars, graph, z)?;
    Ok(tape.value(z).clone())
}

#[allow(clippy::too_many_arguments)]
fn train_step(
    model: &mut PretrainModel<f32>,
    adam: &mut Adam,
    store: &WhinStore,
    seeds: &[EntityRef],
    z0: &Tensor<f32>,
    gi: &GlobalIndex,
    cfg: &PretrainConfig,
    rng: &mut Rng,
) -> Result<Option<f64>> {
    let mut batch = sampler::sample_subgraph(store, seeds, &cfg.sampler, rng)?;
    let positives = batch.incident_edges(seeds);
    if positives.is_empty() {
        return Ok(None);
    }
    let negatives = sampler::sample_negatives(store, &positives, cfg.sampler.negative_ratio, rng)?;
    batch.extend(store, negatives.iter().map(|t| t.target));
    batch.positives = positives;
    batch.negatives = negatives;

    let (loss, grads) = batch_loss_and_grads(model, &batch, z0, gi)?;
    adam.step(&mut model.params, &grads)?;
    Ok(Some(loss))
}

/// Loss over a prepared batch and the gradient of every parameter.
pub fn batch_loss_and_grads(
    model: &PretrainModel<f32>,
    batch: &SubgraphBatch,
    z0: &Tensor<f32>,
    gi: &GlobalIndex,
) -> Result<(f64, Vec<Tensor<f32>>)> {
    let graph = MessageGraph::from_batch(batch)?;
    let rows: Vec<usize> = batch.nodes().iter().map(|&e| gi.of(e)).collect();
    let mut tape = Tape::new();
    let vars = model.params.register(&mut tape);
    let z = tape.constant(gather(z0, &rows));
    let z = model.encode(&mut tape, &vars, &graph, z)?;
    let local = |t: &LinkTriple| {
        (
            batch.local(t.source).expect("positive endpoint is in the batch"),
            t.relation,
            batch.local(t.target).expect("negative endpoint was added to the batch"),
        )
    };
    let triples: Vec<_> = batch.positives.iter().chain(&batch.negatives).map(local).collect();
    let labels: Vec<f32> = (0..triples.len())
        .map(|i| if i < batch.positives.len() { 1.0 } else { 0.0 })
        .collect();
    let logits = model.decode_logits(&mut tape, &vars, z, &triples)?;
    let loss = tape.bce_with_logits(logits, &labels)?;
    let value = tape.value(loss).get(0, 0) as f64;
    let mut grads = tape.backward(loss)?;
    let grads = vars
        .iter()
        .map(|&v| grads.take(v).expect("every parameter is trainable"))
        .collect();
    Ok((value, grads))
}

pub(crate) fn gather(m: &Tensor<f32>, rows: &[usize]) -> Tensor<f32> {
    let mut data = Vec::with_capacity(rows.len() * m.cols());
    for &r in rows {
        data.extend_from_slice(m.row(r));
    }
    Tensor::new(rows.len(), m.cols(), data).expect("sized")
}

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainManifest {
    pub format_version: u32,
    pub dim: usize,
    pub layers: usize,
    pub relations: Vec<String>,
    pub counts: Vec<(EntityKind, usize)>,
    pub seed: u64,
    pub embedder: EmbedderConfig,
    pub config: Option<PretrainConfig>,
    pub history: Vec<EpochLog>,
    pub parameters: Vec<String>,
}

impl PretrainManifest {
    pub fn counts_array(&self) -> [usize; 5] {
        let mut out = [0; 5];
        for (k, n) in &self.counts {
            out[k.index()] = *n;
        }
        out
    }
}

fn manifest_for(table: &EmbeddingTable, layers: usize, seed: u64, embedder: &EmbedderConfig) -> PretrainManifest {
    PretrainManifest {
        format_version: CHECKPOINT_FORMAT_VERSION,
        dim: table.dim(),
        layers,
        relations: RelationView::all().map(|v| v.name()).collect(),
        counts: EntityKind::ALL.iter().map(|&k| (k, table.kind(k).rows())).collect(),
        seed,
        embedder: embedder.clone(),
        config: None,
        history: Vec::new(),
        parameters: Vec::new(),
    }
}

/// Writes only the embedding matrices plus a manifest.
pub fn export_embeddings(table: &EmbeddingTable, dir: &Path, embedder: &EmbedderConfig, seed: u64) -> Result<()> {
    write_checkpoint(dir, &manifest_for(table, 0, seed, embedder), table, None)
}

pub fn save_checkpoint(dir: &Path, outcome: &PretrainOutcome, cfg: &PretrainConfig, embedder: &EmbedderConfig) -> Result<()> {
    let mut manifest = manifest_for(&outcome.table, outcome.model.layers(), cfg.seed, embedder);
    manifest.config = Some(cfg.clone());
    manifest.history = outcome.history.clone();
    manifest.parameters = outcome.model.params.iter().map(|(_, n, _)| n.to_string()).collect();
    write_checkpoint(dir, &manifest, &outcome.table, Some(&outcome.model))
}

fn write_checkpoint(
    dir: &Path,
    manifest: &PretrainManifest,
    table: &EmbeddingTable,
    model: Option<&PretrainModel<f32>>,
) -> Result<()> {
    if !table.tables.iter().all(Tensor::is_finite) {
        return Err(Error::Numeric("refusing to export non-finite embeddings".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    binio::write_json(&dir.join("manifest.json"), manifest)?;
    for k in EntityKind::ALL {
        binio::write_matrix(&dir.join(format!("embeddings/{}.bin", k.name())), table.kind(k))?;
    }
    if let Some(model) = model {
        for (_, name, t) in model.params.iter() {
            binio::write_matrix(&dir.join(format!("params/{name}.bin")), t)?;
        }
    }
    Ok(())
}

pub fn load_manifest(dir: &Path) -> Result<PretrainManifest> {
    let path = dir.join("manifest.json");
    if !path.exists() {
        return Err(Error::MissingDependency(format!(
            "pre-trained checkpoint manifest {} not found",
            path.display()
        )));
    }
    let manifest: PretrainManifest = binio::read_json(&path)?;
    if manifest.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::format(
            &path,
            format!("unsupported checkpoint version {}", manifest.format_version),
        ));
    }
    Ok(manifest)
}

pub fn load_embeddings(dir: &Path) -> Result<EmbeddingTable> {
    let manifest = load_manifest(dir)?;
    let counts = manifest.counts_array();
    let mut tables: [Tensor<f32>; 5] = std::array::from_fn(|_| Tensor::zeros(0, 0));
    for k in EntityKind::ALL {
        let path = dir.join(format!("embeddings/{}.bin", k.name()));
        if !path.exists() {
            return Err(Error::MissingDependency(format!("{} not found", path.display())));
        }
        let t = binio::read_matrix(&path)?;
        if t.rows() != counts[k.index()] || (t.rows() > 0 && t.cols() != manifest.dim) {
            return Err(Error::format(
                &path,
                format!(
                    "header says {}x{}, manifest expects {}x{}",
                    t.rows(),
                    t.cols(),
                    counts[k.index()],
                    manifest.dim
                ),
            ));
        }
        tables[k.index()] = t;
    }
    EmbeddingTable::new(tables)
}

pub fn load_model(dir: &Path) -> Result<PretrainModel<f32>> {
    let manifest = load_manifest(dir)?;
    let mut params = ParamStore::new();
    for name in &manifest.parameters {
        let t = binio::read_matrix(&dir.join(format!("params/{name}.bin")))?;
        params.add(name.clone(), t);
    }
    PretrainModel::from_params(params, manifest.dim, manifest.layers)
}
