//! Command-line pipelines: generate data, pre-train, train, evaluate, ablate,
//! and project embeddings.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use whin_pjf::csagnn::{self, CsagnnConfig, Features, ModelManifest, Variant, MODEL_FORMAT_VERSION};
use whin_pjf::eval::ablation::{self, THRESHOLD};
use whin_pjf::eval::report::{comparison_table, MetricsReport};
use whin_pjf::eval::split::{split, SplitSpec};
use whin_pjf::eval::pca;
use whin_pjf::pretrain::{self, EmbeddingTable, EncoderMode, PretrainConfig};
use whin_pjf::sampler::SamplerConfig;
use whin_pjf::synth::{self, GenConfig, SynthManifest};
use whin_pjf::text::{EmbedderConfig, Provider, TextEmbedder, DEFAULT_MAX_TOKENS};
use whin_pjf::{binio, EntityKind, Error, Result, WhinStore};

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "WHIN_PJF_THREADS";

#[derive(Debug, Parser)]
#[command(name = "whin-pjf", version, about = "Person-job fit on a workplace graph")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Pre-train entity embeddings by link prediction.
    Pretrain(PretrainArgs),
    /// Train a pair scorer on top of pre-trained embeddings.
    Train(TrainArgs),
    /// Score one split with a trained model.
    Eval(EvalArgs),
    /// Train and evaluate every variant on a shared split.
    Ablate(AblateArgs),
    /// Project embeddings of one entity kind to 2-D.
    Pca(PcaArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Named preset (tech-100x, finance-100x, hybrid-100x).
    #[arg(long, required_unless_present = "config")]
    pub preset: Option<String>,
    /// JSON generator config used instead of a preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the cross-industry connection fraction.
    #[arg(long)]
    pub cross_industry: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GraphArgs {
    /// Directory holding entities.tsv, relations.tsv and pairs.tsv.
    #[arg(long)]
    pub data: PathBuf,
    /// Per-node cap on derived metapath edges; 0 keeps all of them.
    #[arg(long, default_value_t = 50)]
    pub metapath_cap: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TextArgs {
    /// Seed of the hashed token vectors.
    #[arg(long, default_value_t = 0)]
    pub text_seed: u64,
    /// Whitespace-separated `token v1 .. vd` file used instead of hashing.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_TOKENS)]
    pub max_tokens: usize,
}

impl TextArgs {
    fn embedder(&self, dim: usize) -> EmbedderConfig {
        EmbedderConfig {
            dim,
            max_tokens: self.max_tokens,
            seed: self.text_seed,
            provider: match &self.vectors {
                Some(p) => Provider::File(p.clone()),
                None => Provider::Hashed,
            },
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PretrainFlags {
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    /// Encoder layers.
    #[arg(long, default_value_t = 3)]
    pub layers: usize,
    #[arg(long, default_value_t = 3)]
    pub hops: usize,
    #[arg(long, default_value_t = 5)]
    pub fanout: usize,
    #[arg(long, default_value_t = 1)]
    pub negative_ratio: usize,
    #[arg(long = "n-s", default_value_t = 10)]
    pub n_s: usize,
    #[arg(long = "lr", default_value_t = 1e-3)]
    pub learning_rate: f32,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_pairs: usize,
    /// Fraction of edges withheld to measure link AUC.
    #[arg(long, default_value_t = 0.1)]
    pub holdout: f64,
    /// Feed frozen random vectors to the decoder instead of encoding.
    #[arg(long)]
    pub frozen_random: bool,
}

impl Default for PretrainFlags {
    fn default() -> Self {
        let c = PretrainConfig::default();
        Self {
            dim: c.dim,
            layers: c.layers,
            hops: c.sampler.hops,
            fanout: c.sampler.fanout,
            negative_ratio: c.sampler.negative_ratio,
            n_s: c.sampler.skills_per_entity,
            learning_rate: c.learning_rate,
            epochs: c.epochs,
            batch_pairs: c.batch_pairs,
            holdout: c.holdout_fraction,
            frozen_random: false,
        }
    }
}

impl PretrainFlags {
    fn config(&self, seed: u64) -> PretrainConfig {
        PretrainConfig {
            dim: self.dim,
            layers: self.layers,
            sampler: SamplerConfig {
                hops: self.hops,
                fanout: self.fanout,
                negative_ratio: self.negative_ratio,
                skills_per_entity: self.n_s,
            },
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_pairs: self.batch_pairs,
            holdout_fraction: self.holdout,
            encoder: if self.frozen_random { EncoderMode::FrozenRandom } else { EncoderMode::Rgcn },
            seed,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub text: TextArgs,
    #[command(flatten)]
    pub flags: PretrainFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelFlags {
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    /// Social aggregation layers.
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long = "n-s", default_value_t = 10)]
    pub n_s: usize,
    /// Connections kept per member.
    #[arg(long, default_value_t = 5)]
    pub connections: usize,
    #[arg(long = "lr", default_value_t = 1e-3)]
    pub learning_rate: f32,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_pairs: usize,
}

impl ModelFlags {
    fn config(&self, dim: usize, variant: Variant, seed: u64) -> CsagnnConfig {
        CsagnnConfig {
            dim,
            heads: self.heads,
            layers: self.layers,
            skills_per_entity: self.n_s,
            connections: self.connections,
            learning_rate: self.learning_rate,
            max_epochs: self.epochs,
            patience: self.patience,
            batch_pairs: self.batch_pairs,
            variant,
            seed,
        }
    }
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse::<Variant>().map_err(|e| e.to_string())
}

fn parse_kind(s: &str) -> std::result::Result<EntityKind, String> {
    EntityKind::parse(s).ok_or_else(|| {
        let names: Vec<&str> = EntityKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown entity kind {s:?}; valid: {}", names.join(", "))
    })
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Pre-trained checkpoint; optional for wo_CSA_H.
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    #[arg(long, default_value = "full", value_parser = parse_variant)]
    pub variant: Variant,
    /// Model dim when no checkpoint fixes it.
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Token settings when no checkpoint fixes them.
    #[command(flatten)]
    pub text: TextArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// train, valid or test.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Report path; defaults to `<model>/metrics-<split>.txt`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Pre-trained checkpoint; pre-trains into `<out>/pretrained` when absent.
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    /// Learning rate of the pre-training run started when no checkpoint is given.
    #[arg(long, default_value_t = 1e-3)]
    pub pretrain_lr: f32,
    #[arg(long, default_value_t = 20)]
    pub pretrain_epochs: usize,
    #[command(flatten)]
    pub text: TextArgs,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Comma-separated variants.
    #[arg(long, value_delimiter = ',', value_parser = parse_variant,
          default_value = "full,wo_S,wo_A,wo_CSA,wo_CSA_H")]
    pub variants: Vec<Variant>,
    /// Comma-separated run seeds; each also seeds its split.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PcaArgs {
    /// Pre-trained checkpoint directory.
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, default_value = "skill", value_parser = parse_kind)]
    pub kind: EntityKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Dataset directory whose manifest.json supplies industry labels.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

/// 1 usage, 2 data or format, 3 numeric.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 1,
        Error::Numeric(_) => 3,
        Error::Autodiff(e) if e.to_string().contains("non-finite") => 3,
        _ => 2,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth_cmd(&a),
        Command::Pretrain(a) => pretrain_cmd(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Eval(a) => eval_cmd(&a),
        Command::Ablate(a) => ablate_cmd(&a),
        Command::Pca(a) => pca_cmd(&a),
    }
}

fn echo_run(dir: &Path, command: &str, args: &impl Serialize) -> Result<()> {
    let value = serde_json::json!({ "command": command, "args": args });
    binio::write_json(&dir.join("run.json"), &value)
}

pub fn load_graph(g: &GraphArgs, seed: u64) -> Result<WhinStore> {
    let store = load_data(&g.data)?;
    let cap = (g.metapath_cap > 0).then_some(g.metapath_cap);
    store.materialize_metapaths(cap, seed)
}

pub fn load_data(dir: &Path) -> Result<WhinStore> {
    if !dir.is_dir() {
        return Err(Error::MissingDependency(format!("data directory {} not found", dir.display())));
    }
    WhinStore::ingest(&dir.join("entities.tsv"), &dir.join("relations.tsv"), &dir.join("pairs.tsv"))
}

fn synth_cmd(a: &SynthArgs) -> Result<()> {
    let mut cfg: GenConfig = match (&a.config, &a.preset) {
        (Some(path), _) => binio::read_json(path)?,
        (None, Some(name)) => synth::preset(name)?,
        (None, None) => return Err(Error::Config("either --preset or --config is required".into())),
    };
    if let Some(rho) = a.cross_industry {
        cfg.cross_industry = rho;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let t = Instant::now();
    let ds = synth::generate(&cfg)?;
    ds.write(&a.out)?;
    log::info!(
        "event=synth name={} seed={} members={} jobs={} skills={} pairs={} edges={} secs={:.2}",
        cfg.name,
        cfg.seed,
        ds.texts[EntityKind::Member.index()].len(),
        ds.texts[EntityKind::Job.index()].len(),
        ds.texts[EntityKind::Skill.index()].len(),
        ds.pairs.len(),
        ds.edges.len(),
        t.elapsed().as_secs_f64()
    );
    Ok(())
}

/// Pre-trains and writes a checkpoint to `out`.
pub fn pretrain_into(
    graph: &GraphArgs,
    text: &TextArgs,
    flags: &PretrainFlags,
    seed: u64,
    out: &Path,
) -> Result<EmbeddingTable> {
    let store = load_graph(graph, seed)?;
    let cfg = flags.config(seed);
    let embedder = TextEmbedder::new(text.embedder(flags.dim))?;
    let t = Instant::now();
    let outcome = pretrain::train_pretrain(&store, &embedder, &cfg, |e| {
        let auc = e.heldout_auc.map_or("none".to_string(), |a| format!("{a:.6}"));
        log::info!(
            "event=epoch stage=pretrain epoch={} loss={:.6} heldout_auc={auc} steps={} secs={:.1}",
            e.epoch,
            e.loss,
            e.steps,
            t.elapsed().as_secs_f64()
        );
    })?;
    pretrain::save_checkpoint(out, &outcome, &cfg, embedder.config())?;
    Ok(outcome.table)
}

fn pretrain_cmd(a: &PretrainArgs) -> Result<()> {
    pretrain_into(&a.graph, &a.text, &a.flags, a.seed, &a.out)?;
    echo_run(&a.out, "pretrain", a)?;
    log::info!("event=saved path={}", a.out.display());
    Ok(())
}

/// Checkpoint table and its embedder settings.
fn load_pretrained(dir: &Path) -> Result<(EmbeddingTable, EmbedderConfig)> {
    let manifest = pretrain::load_manifest(dir)?;
    let table = pretrain::load_embeddings(dir)?;
    Ok((table, manifest.embedder))
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let store = load_data(&a.data)?;
    let (structural, embedder_cfg) = match (&a.pretrained, a.variant.needs_structural()) {
        (Some(dir), needed) => {
            let (table, emb) = load_pretrained(dir)?;
            (needed.then_some(table), emb)
        }
        (None, false) => (None, a.text.embedder(a.dim)),
        (None, true) => {
            return Err(Error::MissingDependency(format!(
                "variant {} needs --pretrained",
                a.variant
            )))
        }
    };
    let embedder = TextEmbedder::new(embedder_cfg)?;
    let cfg = a.model.config(embedder.dim(), a.variant, a.seed);
    cfg.validate()?;
    let spec = SplitSpec::new(a.seed);
    let parts = split(store.pairs(), &spec)?;
    let features = Features::build(&store, &embedder, structural, cfg.skills_per_entity, cfg.seed)?;
    let t = Instant::now();
    let outcome = csagnn::train_csagnn(&features, &cfg, &parts.train, &parts.valid, |e| {
        log::info!(
            "event=epoch stage=train variant={} epoch={} train_loss={:.6} valid_auc={:.6} secs={:.1}",
            cfg.variant,
            e.epoch,
            e.train_loss,
            e.valid_auc,
            t.elapsed().as_secs_f64()
        );
    })?;
    let manifest = ModelManifest {
        format_version: MODEL_FORMAT_VERSION,
        config: cfg.clone(),
        split_seed: spec.seed,
        embedder: embedder.config().clone(),
        best_epoch: outcome.best_epoch,
        stopped_epoch: outcome.stopped_epoch,
        history: outcome.history.clone(),
        parameters: outcome.model.params.iter().map(|(_, n, _)| n.to_string()).collect(),
        has_structural: features.structural().is_some(),
    };
    csagnn::save_model(&a.out, &manifest, &outcome.model, features.structural())?;
    echo_run(&a.out, "train", a)?;
    log::info!(
        "event=saved path={} best_epoch={} stopped_epoch={}",
        a.out.display(),
        outcome.best_epoch,
        outcome.stopped_epoch
    );
    Ok(())
}

fn eval_cmd(a: &EvalArgs) -> Result<()> {
    let (manifest, model, structural) = csagnn::load_model(&a.model)?;
    let store = load_data(&a.data)?;
    let embedder = TextEmbedder::new(manifest.embedder.clone())?;
    let cfg = &manifest.config;
    let spec = SplitSpec::new(manifest.split_seed);
    let parts = split(store.pairs(), &spec)?;
    let pairs = parts.part(&a.split)?;
    let features = Features::build(&store, &embedder, structural, cfg.skills_per_entity, cfg.seed)?;
    let scored = csagnn::score_pairs(&model, &features, cfg, pairs)?;
    let config = serde_json::json!({
        "csagnn": cfg,
        "split": spec,
        "embedder": manifest.embedder,
        "best_epoch": manifest.best_epoch,
        "stopped_epoch": manifest.stopped_epoch,
    });
    let report = MetricsReport::from_scores(cfg.variant.name(), cfg.seed, &a.split, &scored, parts.counts(), THRESHOLD, config)?;
    let out = a.out.clone().unwrap_or_else(|| a.model.join(format!("metrics-{}.txt", a.split)));
    report.write(&out)?;
    print!("{}", report.to_text()?);
    Ok(())
}

fn ablate_cmd(a: &AblateArgs) -> Result<()> {
    let (table, embedder_cfg) = match &a.pretrained {
        Some(dir) => load_pretrained(dir)?,
        None => {
            let dir = a.out.join("pretrained");
            let seed = a.seeds.first().copied().unwrap_or(0);
            let flags = PretrainFlags {
                dim: a.dim,
                learning_rate: a.pretrain_lr,
                epochs: a.pretrain_epochs,
                ..PretrainFlags::default()
            };
            let table = pretrain_into(&a.graph, &a.text, &flags, seed, &dir)?;
            (table, a.text.embedder(a.dim))
        }
    };
    let store = load_data(&a.graph.data)?;
    let embedder = TextEmbedder::new(embedder_cfg)?;
    let mut reports = Vec::new();
    for &seed in &a.seeds {
        for &variant in &a.variants {
            let cfg = a.model.config(embedder.dim(), variant, seed);
            let run = ablation::run_ablation(&store, &embedder, Some(&table), &cfg, &SplitSpec::new(seed))?;
            let path = a.out.join(format!("{variant}-seed{seed}.txt"));
            run.report.write(&path)?;
            log::info!(
                "event=ablation variant={variant} seed={seed} auc={:.4} acc={:.4} f1={:.4} ap={:.4}",
                run.report.auc,
                run.report.acc,
                run.report.f1,
                run.report.ap
            );
            reports.push(run.report);
        }
    }
    let mut table_md = comparison_table(&reports);
    if a.seeds.len() > 1 {
        table_md.push_str("\nMean over seeds:\n\n");
        table_md.push_str(&mean_table(&reports, &a.variants));
    }
    std::fs::write(a.out.join("comparison.md"), &table_md).map_err(|e| Error::io(a.out.join("comparison.md"), e))?;
    echo_run(&a.out, "ablate", a)?;
    print!("{table_md}");
    Ok(())
}

/// Markdown table of per-variant metric means.
fn mean_table(reports: &[MetricsReport], variants: &[Variant]) -> String {
    let mut s = String::from("| variant | runs | AUC | ACC | F1 | AP |\n|---|---|---|---|---|---|\n");
    for v in variants {
        let rs: Vec<&MetricsReport> = reports.iter().filter(|r| r.variant == v.name()).collect();
        if rs.is_empty() {
            continue;
        }
        let n = rs.len() as f64;
        let mean = |f: fn(&MetricsReport) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
        s.push_str(&format!(
            "| {v} | {} | {:.2} | {:.2} | {:.2} | {:.2} |\n",
            rs.len(),
            mean(|r| r.auc),
            mean(|r| r.acc),
            mean(|r| r.f1),
            mean(|r| r.ap)
        ));
    }
    s
}

fn pca_cmd(a: &PcaArgs) -> Result<()> {
    let table = pretrain::load_embeddings(&a.ckpt)?;
    let m = table.kind(a.kind);
    let rows: Vec<&[f32]> = (0..m.rows()).map(|r| m.row(r)).collect();
    let proj = pca::project_2d(&rows)?;
    let ids: Vec<u32> = (0..m.rows() as u32).collect();
    pca::write_csv(&a.out, &ids, &proj.coords)?;

    let labels = match &a.data {
        Some(dir) => labels_for(&dir.join("manifest.json"), a.kind, m.rows())?,
        None => None,
    };
    if let Some(svg) = &a.svg {
        pca::write_svg(svg, &proj.coords, labels.as_ref().map(|l| l.industry.as_slice()))?;
    }
    let total: f64 = proj.variances.iter().sum();
    let explained = (proj.variances[0] + proj.variances.get(1).copied().unwrap_or(0.0)) / total;
    let mut line = format!("event=pca kind={} rows={} explained={explained:.4}", a.kind, m.rows());
    if let Some(l) = &labels {
        if let Ok(s) = pca::silhouette(&proj.coords, &l.industry) {
            line.push_str(&format!(" silhouette_industry={s:.4}"));
        }
        if let Some(pool) = &l.pool {
            if let Ok(s) = pca::silhouette(&proj.coords, pool) {
                line.push_str(&format!(" silhouette_pool={s:.4}"));
            }
        }
    }
    log::info!("{line}");
    Ok(())
}

struct Labels {
    industry: Vec<usize>,
    /// Specialty pool, skills only.
    pool: Option<Vec<usize>>,
}

fn labels_for(path: &Path, kind: EntityKind, rows: usize) -> Result<Option<Labels>> {
    if !path.exists() {
        return Ok(None);
    }
    let manifest = SynthManifest::read(path)?;
    let per_industry = manifest.config.pools_per_industry;
    let labels = match kind {
        EntityKind::Skill => Labels {
            industry: manifest.skill_labels.iter().map(|l| l.industry).collect(),
            pool: Some(manifest.skill_labels.iter().map(|l| l.industry * per_industry + l.pool).collect()),
        },
        EntityKind::Member => Labels {
            industry: manifest.member_industry,
            pool: None,
        },
        EntityKind::Job => Labels {
            industry: manifest.job_industry,
            pool: None,
        },
        _ => return Ok(None),
    };
    if labels.industry.len() != rows {
        return Err(Error::format(
            path,
            format!("{} labels for {rows} {kind} embeddings", labels.industry.len()),
        ));
    }
    Ok(Some(labels))
}
