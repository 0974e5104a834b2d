//! Tokenization and deterministic token embeddings.
//!
//! The default provider hashes each token with the run seed and expands the
//! digest into `dim` values in `[-1, 1]` scaled by `1/sqrt(dim)`. A file
//! provider reads externally computed vectors instead.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use whin_autodiff::Tensor;

use crate::error::{Error, Result};

pub const DEFAULT_MAX_TOKENS: usize = 128;

/// Lowercased alphanumeric runs, truncated to `max_tokens`.
pub fn tokenize(text: &str, max_tokens: usize) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .take(max_tokens)
        .map(str::to_lowercase)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provider {
    Hashed,
    /// Lines of `token v1 .. v_dim`. A `<unk>` entry, if present, covers
    /// missing tokens; otherwise they map to zeros.
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub dim: usize,
    pub max_tokens: usize,
    pub seed: u64,
    pub provider: Provider,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            max_tokens: DEFAULT_MAX_TOKENS,
            seed: 0,
            provider: Provider::Hashed,
        }
    }
}

pub const UNKNOWN_TOKEN: &str = "<unk>";

#[derive(Clone, Debug)]
pub struct TextEmbedder {
    cfg: EmbedderConfig,
    table: Option<HashMap<String, Vec<f32>>>,
}

impl TextEmbedder {
    pub fn new(cfg: EmbedderConfig) -> Result<Self> {
        if cfg.dim == 0 {
            return Err(Error::Config("embedding dim must be positive".into()));
        }
        if cfg.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be positive".into()));
        }
        let table = match &cfg.provider {
            Provider::Hashed => None,
            Provider::File(path) => Some(read_vector_file(path, cfg.dim)?),
        };
        Ok(Self { cfg, table })
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        tokenize(text, self.cfg.max_tokens)
    }

    pub fn token_vector(&self, token: &str) -> Vec<f32> {
        match &self.table {
            None => hashed_vector(token, self.cfg.seed, self.cfg.dim),
            Some(table) => table
                .get(token)
                .or_else(|| table.get(UNKNOWN_TOKEN))
                .cloned()
                .unwrap_or_else(|| vec![0.0; self.cfg.dim]),
        }
    }

    /// One row per token, `len x dim`.
    pub fn token_vectors(&self, tokens: &[String]) -> Tensor<f32> {
        let mut data = Vec::with_capacity(tokens.len() * self.cfg.dim);
        for t in tokens {
            data.extend(self.token_vector(t));
        }
        Tensor::new(tokens.len(), self.cfg.dim, data).expect("rows are dim long")
    }

    /// Mean of the token rows; zeros (with a warning) for an empty sequence.
    pub fn init_entity_embedding(&self, tokens: &[String]) -> Vec<f32> {
        mean_rows_or_zero(&self.token_vectors(tokens), "entity text has no tokens")
    }
}

pub(crate) fn mean_rows_or_zero(m: &Tensor<f32>, warn: &str) -> Vec<f32> {
    let mut out = vec![0.0f64; m.cols()];
    if m.rows() == 0 {
        log::warn!("{warn}; using a zero vector");
        return vec![0.0; m.cols()];
    }
    for r in 0..m.rows() {
        for (o, &v) in out.iter_mut().zip(m.row(r)) {
            *o += v as f64;
        }
    }
    out.iter().map(|v| (v / m.rows() as f64) as f32).collect()
}

fn hashed_vector(token: &str, seed: u64, dim: usize) -> Vec<f32> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(token.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(key);
    let scale = 1.0 / (dim as f64).sqrt();
    (0..dim)
        .map(|_| {
            let u = rng.next_u32() as f64 / u32::MAX as f64;
            ((2.0 * u - 1.0) * scale) as f32
        })
        .collect()
}

fn read_vector_file(path: &Path, dim: usize) -> Result<HashMap<String, Vec<f32>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut table = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values: std::result::Result<Vec<f32>, _> = parts.map(str::parse::<f32>).collect();
        let bad = |msg: String| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg,
        };
        let values = values.map_err(|e| bad(e.to_string()))?;
        if values.len() != dim {
            return Err(bad(format!("expected {dim} values, found {}", values.len())));
        }
        table.insert(token.to_string(), values);
    }
    Ok(table)
}
