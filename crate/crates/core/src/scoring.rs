//! Attention-weighted anomaly scores and AUC evaluation.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ForwardOutput, ModelConfig};
use crate::train::TrainConfig;

const ROW_TOLERANCE: f64 = 1e-6;

/// Score weights from the node-averaged attention matrix: the structural
/// weight is the total attention received by the structural token (first
/// column), the attribute weight that received by the attribute token.
pub fn derive_score_weights(attention: &[[f64; 2]; 2]) -> Result<(f64, f64)> {
    let ok = attention.iter().all(|row| {
        row.iter().all(|x| x.is_finite() && (0.0..=1.0).contains(x))
            && (row[0] + row[1] - 1.0).abs() <= ROW_TOLERANCE
    });
    if !ok {
        return Err(Error::MalformedAttention(*attention));
    }
    let lambda_n = attention[0][0] + attention[1][0];
    let lambda_x = attention[0][1] + attention[1][1];
    Ok((lambda_n, lambda_x))
}

/// Min-max scaling to `[0, 1]`; a constant vector maps to zeros.
pub fn normalize_losses(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0.0; v.len()];
    }
    v.iter().map(|&x| (x - lo) / range).collect()
}

/// `λ'_n · h + λ'_x · f` over already-normalized components.
pub fn anomaly_scores(
    h_loss: &[f64],
    feature_loss: &[f64],
    lambda_n: f64,
    lambda_x: f64,
) -> Result<Vec<f64>> {
    if h_loss.len() != feature_loss.len() {
        return Err(Error::ShapeMismatch {
            op: "anomaly_scores",
            left: (h_loss.len(), 1),
            right: (feature_loss.len(), 1),
        });
    }
    Ok(h_loss
        .iter()
        .zip(feature_loss)
        .map(|(h, f)| lambda_n * h + lambda_x * f)
        .collect())
}

/// Probability that a random anomaly outranks a random normal node, ties
/// counting one half, via midranks.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "auc",
            left: (scores.len(), 1),
            right: (labels.len(), 1),
        });
    }
    if let Some(row) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite { what: "score", row });
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedMetric("AUC needs both anomalous and normal nodes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks are 1-based; the tie block [start, end) shares their mean
        let midrank = (start + 1 + end) as f64 / 2.0;
        let hits = order[start..end].iter().filter(|&&i| labels[i] == 1).count();
        rank_sum += midrank * hits as f64;
        start = end;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub epochs_run: usize,
    pub total_seconds: f64,
    pub mean_epoch_seconds: f64,
    pub sigma_clamps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub scores: Vec<f64>,
    pub h_loss: Vec<f64>,
    pub feature_loss: Vec<f64>,
    pub lambda_n_prime: f64,
    pub lambda_x_prime: f64,
    pub attention_avg: [[f64; 2]; 2],
    pub auc: Option<f64>,
    pub run_meta: RunMeta,
}

impl AnomalyReport {
    /// Scores every node from the final forward pass and, when labels are
    /// available, evaluates the ranking.
    pub fn from_output(fo: &ForwardOutput, labels: Option<&[u8]>, run_meta: RunMeta) -> Result<Self> {
        let (lambda_n_prime, lambda_x_prime) = derive_score_weights(&fo.attention_avg)?;
        let h = normalize_losses(&fo.h_loss);
        let f = normalize_losses(&fo.feature_loss);
        let scores = anomaly_scores(&h, &f, lambda_n_prime, lambda_x_prime)?;
        let auc = labels.map(|l| auc(&scores, l)).transpose()?;
        Ok(Self {
            scores,
            h_loss: fo.h_loss.clone(),
            feature_loss: fo.feature_loss.clone(),
            lambda_n_prime,
            lambda_x_prime,
            attention_avg: fo.attention_avg,
            auc,
            run_meta,
        })
    }

    /// Node ids ordered by descending score, ties by ascending id.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        order
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub mean_auc: f64,
    /// Population standard deviation across runs.
    pub std_auc: f64,
    pub best_auc: f64,
    pub runs: Vec<AnomalyReport>,
}

impl ExperimentSummary {
    pub fn from_runs(runs: Vec<AnomalyReport>) -> Result<Self> {
        let aucs: Vec<f64> = runs
            .iter()
            .map(|r| r.auc.ok_or(Error::UndefinedMetric("run has no AUC (labels missing)")))
            .collect::<Result<_>>()?;
        if aucs.is_empty() {
            return Err(Error::InvalidConfig("experiment needs at least one run".into()));
        }
        let n = aucs.len() as f64;
        let mean_auc = aucs.iter().sum::<f64>() / n;
        let var = aucs.iter().map(|a| (a - mean_auc) * (a - mean_auc)).sum::<f64>() / n;
        let best_auc = aucs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            mean_auc,
            std_auc: libm::sqrt(var),
            best_auc,
            runs,
        })
    }
}
