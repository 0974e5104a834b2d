use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const MIN_PAIRS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Relative train/valid/test weights; normalized before use.
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            ratios: [8.0, 1.0, 1.0],
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::Config(format!("split ratios must be positive, got {:?}", self.ratios)));
        }
        Ok(())
    }

    /// Partition sizes for `n` items; the test part takes the remainder.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let total: f64 = self.ratios.iter().sum();
        let train = (n as f64 * self.ratios[0] / total).round() as usize;
        let valid = ((n as f64 * self.ratios[1] / total).round() as usize).min(n - train);
        [train, valid, n - train - valid]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub valid: Vec<T>,
    pub test: Vec<T>,
}

impl<T> Split<T> {
    pub fn part(&self, name: &str) -> Result<&[T]> {
        match name {
            "train" => Ok(&self.train),
            "valid" => Ok(&self.valid),
            "test" => Ok(&self.test),
            other => Err(Error::Config(format!("unknown split {other:?}; valid: train, valid, test"))),
        }
    }

    pub fn counts(&self) -> [usize; 3] {
        [self.train.len(), self.valid.len(), self.test.len()]
    }
}

/// Seeded shuffle followed by a contiguous cut.
pub fn split<T: Clone>(items: &[T], spec: &SplitSpec) -> Result<Split<T>> {
    spec.validate()?;
    if items.len() < MIN_PAIRS {
        return Err(Error::Config(format!(
            "need at least {MIN_PAIRS} pairs to split, got {}",
            items.len()
        )));
    }
    let mut shuffled = items.to_vec();
    shuffled.shuffle(&mut rng::substream(spec.seed, "split", 0));
    let [a, b, _] = spec.sizes(items.len());
    let test = shuffled.split_off(a + b);
    let valid = shuffled.split_off(a);
    Ok(Split {
        train: shuffled,
        valid,
        test,
    })
}
