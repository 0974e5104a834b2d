//! Ranking and classification metrics on scored candidate pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub member: u32,
    pub job: u32,
    pub score: f64,
    pub label: u8,
}

fn check_scores(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Numeric(format!("score {i} is {}", scores[i])));
    }
    Ok(())
}

/// Probability that a random positive outranks a random negative; ties count
/// one half. Computed from average ranks in O(n log n).
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_scores(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes, got {pos} positive and {neg} negative"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        let tied_pos = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        pos_rank_sum += avg * tied_pos as f64;
        i = j + 1;
    }
    let p = pos as f64;
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

pub fn auc_scored(pairs: &[ScoredPair]) -> Result<f64> {
    let (s, l) = unzip(pairs);
    auc(&s, &l)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub acc: f64,
    pub f1: f64,
    pub ap: f64,
}

/// Accuracy and F1 with `score >= threshold` predicted positive, and average
/// precision over the score-descending ranking (stable for ties).
pub fn acc_f1_ap(scores: &[f64], labels: &[u8], threshold: f64) -> Result<ClassMetrics> {
    check_scores(scores, labels)?;
    if scores.is_empty() {
        return Err(Error::Contract("metrics need at least one scored pair".into()));
    }
    let (mut tp, mut fp, mut tn, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fneg += 1,
        }
    }
    let acc = (tp + tn) as f64 / scores.len() as f64;
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fneg == 0 { 0.0 } else { tp as f64 / (tp + fneg) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(ClassMetrics {
        acc,
        f1,
        ap: average_precision(scores, labels),
    })
}

pub fn acc_f1_ap_scored(pairs: &[ScoredPair], threshold: f64) -> Result<ClassMetrics> {
    let (s, l) = unzip(pairs);
    acc_f1_ap(&s, &l, threshold)
}

fn average_precision(scores: &[f64], labels: &[u8]) -> f64 {
    let total_pos = labels.iter().filter(|&&l| l == 1).count();
    if total_pos == 0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (k, &i) in order.iter().enumerate() {
        if labels[i] == 1 {
            hits += 1;
            ap += hits as f64 / (k + 1) as f64;
        }
    }
    ap / total_pos as f64
}

fn unzip(pairs: &[ScoredPair]) -> (Vec<f64>, Vec<u8>) {
    pairs.iter().map(|p| (p.score, p.label)).unzip()
}
