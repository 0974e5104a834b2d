use crate::csagnn::{self, CsagnnConfig, CsagnnOutcome, Features, Variant};
use crate::error::{Error, Result};
use crate::eval::report::MetricsReport;
use crate::eval::split::{split, SplitSpec};
use crate::pretrain::EmbeddingTable;
use crate::store::WhinStore;
use crate::text::TextEmbedder;

pub const THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug)]
pub struct AblationRun {
    pub report: MetricsReport,
    pub outcome: CsagnnOutcome,
}

/// Trains `cfg.variant` on the training split and reports test metrics.
pub fn run_ablation(
    store: &WhinStore,
    embedder: &TextEmbedder,
    structural: Option<&EmbeddingTable>,
    cfg: &CsagnnConfig,
    spec: &SplitSpec,
) -> Result<AblationRun> {
    if cfg.variant.needs_structural() && structural.is_none() {
        return Err(Error::MissingDependency(format!(
            "variant {} needs a pre-trained checkpoint",
            cfg.variant
        )));
    }
    let parts = split(store.pairs(), spec)?;
    let structural = if cfg.variant == Variant::WoCsaH { None } else { structural.cloned() };
    let features = Features::build(store, embedder, structural, cfg.skills_per_entity, cfg.seed)?;
    let outcome = csagnn::train_csagnn(&features, cfg, &parts.train, &parts.valid, |e| {
        log::info!(
            "event=epoch variant={} epoch={} train_loss={:.6} valid_auc={:.6}",
            cfg.variant,
            e.epoch,
            e.train_loss,
            e.valid_auc
        );
    })?;
    let scored = csagnn::score_pairs(&outcome.model, &features, cfg, &parts.test)?;
    let config = serde_json::json!({
        "csagnn": cfg,
        "split": spec,
        "embedder": embedder.config(),
        "best_epoch": outcome.best_epoch,
        "stopped_epoch": outcome.stopped_epoch,
    });
    let report = MetricsReport::from_scores(
        cfg.variant.name(),
        cfg.seed,
        "test",
        &scored,
        parts.counts(),
        THRESHOLD,
        config,
    )?;
    Ok(AblationRun { report, outcome })
}
