use serde::{Deserialize, Serialize};

/// 1 when the held-out item ranks within the top `k`.
pub fn hit_rate_at_k(rank: usize, k: usize) -> f64 {
    assert!(rank >= 1, "ranks are 1-based");
    if rank <= k {
        1.0
    } else {
        0.0
    }
}

/// `1 / log2(rank + 1)` within the top `k`, else 0.
pub fn ndcg_at_k(rank: usize, k: usize) -> f64 {
    assert!(rank >= 1, "ranks are 1-based");
    if rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

/// 1-based rank of `target` among `negatives`. Ties rank the target below
/// every negative with an equal score.
pub fn rank_of(target: f64, negatives: &[f64]) -> usize {
    1 + negatives.iter().filter(|&&s| s >= target).count()
}

/// Scores of one user's held-out item and its sampled negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct UserScores {
    pub target: f64,
    pub negatives: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsAtK {
    pub k: usize,
    pub hit_rate: f64,
    pub ndcg: f64,
}

/// Averages HR@k and NDCG@k over users for every `k` in `ks`.
pub fn evaluate(scores: &[UserScores], ks: &[usize]) -> Vec<MetricsAtK> {
    let ranks: Vec<usize> = scores.iter().map(|s| rank_of(s.target, &s.negatives)).collect();
    evaluate_ranks(&ranks, ks)
}

pub fn evaluate_ranks(ranks: &[usize], ks: &[usize]) -> Vec<MetricsAtK> {
    let n = ranks.len().max(1) as f64;
    ks.iter()
        .map(|&k| MetricsAtK {
            k,
            hit_rate: ranks.iter().map(|&r| hit_rate_at_k(r, k)).sum::<f64>() / n,
            ndcg: ranks.iter().map(|&r| ndcg_at_k(r, k)).sum::<f64>() / n,
        })
        .collect()
}

/// Ranking quality at the cutoffs reported every round.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RankingSummary {
    pub hr5: f64,
    pub ndcg5: f64,
    pub hr10: f64,
    pub ndcg10: f64,
    pub hr20: f64,
    pub ndcg20: f64,
}

impl RankingSummary {
    pub fn from_ranks(ranks: &[usize]) -> Self {
        let m = evaluate_ranks(ranks, &[5, 10, 20]);
        Self {
            hr5: m[0].hit_rate,
            ndcg5: m[0].ndcg,
            hr10: m[1].hit_rate,
            ndcg10: m[1].ndcg,
            hr20: m[2].hit_rate,
            ndcg20: m[2].ndcg,
        }
    }
}

/// One row of the per-round metric series (validation split).
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub hr10: f64,
    pub ndcg10: f64,
    pub hr20: f64,
    pub ndcg20: f64,
    pub loss: f64,
    pub cluster_sizes: Vec<usize>,
}
