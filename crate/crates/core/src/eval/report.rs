use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::{self, ScoredPair};

/// Metrics on one split, stored multiplied by 100.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub variant: String,
    pub seed: u64,
    pub split: String,
    pub auc: f64,
    pub acc: f64,
    pub f1: f64,
    pub ap: f64,
    pub threshold: f64,
    pub train_pairs: usize,
    pub valid_pairs: usize,
    pub test_pairs: usize,
    pub evaluated_pairs: usize,
    pub config: serde_json::Value,
}

impl MetricsReport {
    pub fn from_scores(
        variant: &str,
        seed: u64,
        split: &str,
        scored: &[ScoredPair],
        counts: [usize; 3],
        threshold: f64,
        config: serde_json::Value,
    ) -> Result<Self> {
        let auc = metrics::auc_scored(scored)?;
        let c = metrics::acc_f1_ap_scored(scored, threshold)?;
        Ok(Self {
            variant: variant.to_string(),
            seed,
            split: split.to_string(),
            auc: 100.0 * auc,
            acc: 100.0 * c.acc,
            f1: 100.0 * c.f1,
            ap: 100.0 * c.ap,
            threshold,
            train_pairs: counts[0],
            valid_pairs: counts[1],
            test_pairs: counts[2],
            evaluated_pairs: scored.len(),
            config,
        })
    }

    /// `key=value` lines followed by the same report as a JSON block.
    pub fn to_text(&self) -> Result<String> {
        let mut s = String::new();
        for (k, v) in [
            ("variant", self.variant.clone()),
            ("seed", self.seed.to_string()),
            ("split", self.split.clone()),
            ("auc", format!("{:.4}", self.auc)),
            ("acc", format!("{:.4}", self.acc)),
            ("f1", format!("{:.4}", self.f1)),
            ("ap", format!("{:.4}", self.ap)),
            ("threshold", self.threshold.to_string()),
            ("train_pairs", self.train_pairs.to_string()),
            ("valid_pairs", self.valid_pairs.to_string()),
            ("test_pairs", self.test_pairs.to_string()),
            ("evaluated_pairs", self.evaluated_pairs.to_string()),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        s.push('\n');
        s.push_str(&serde_json::to_string_pretty(self)?);
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    /// Reads the JSON block of a report written by [`MetricsReport::write`].
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let start = text
            .find("\n{")
            .ok_or_else(|| Error::format(path, "no JSON block in metrics report"))?;
        Ok(serde_json::from_str(&text[start + 1..])?)
    }
}

/// Markdown table with one row per report.
pub fn comparison_table(reports: &[MetricsReport]) -> String {
    let mut s = String::from("| variant | seed | AUC | ACC | F1 | AP |\n|---|---|---|---|---|---|\n");
    for r in reports {
        let _ = writeln!(
            s,
            "| {} | {} | {:.2} | {:.2} | {:.2} | {:.2} |",
            r.variant, r.seed, r.auc, r.acc, r.f1, r.ap
        );
    }
    s
}
