//! Leave-one-out ranking metrics: pessimistic tie handling, HR@K and NDCG@K.
//!
//! cargo run --example evaluation_metrics

use perfedrec::sim::{evaluate, hit_rate_at_k, ndcg_at_k, rank_of, RankingSummary, UserScores};

fn main() {
    for rank in [1, 5, 10, 11, 50] {
        println!("rank {rank:>2}: HR@10 {} NDCG@10 {:.6}", hit_rate_at_k(rank, 10), ndcg_at_k(rank, 10));
    }

    let tied = [0.9, 0.5, 0.5, 0.1];
    println!("target 0.5 among {tied:?} ranks {}", rank_of(0.5, &tied));

    let users = vec![
        UserScores { target: 3.0, negatives: vec![1.0, 2.0, 0.5] },
        UserScores { target: 1.0, negatives: vec![1.0, 2.0, 0.5] },
        UserScores { target: 0.0, negatives: vec![1.0, 2.0, 0.5] },
    ];
    for m in evaluate(&users, &[1, 2, 4]) {
        println!("k {}: HR {:.4} NDCG {:.4}", m.k, m.hit_rate, m.ndcg);
    }
    let ranks: Vec<usize> = users.iter().map(|u| rank_of(u.target, &u.negatives)).collect();
    println!("{:?}", RankingSummary::from_ranks(&ranks));
}
