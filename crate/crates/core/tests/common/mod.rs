//! Oracles and fixtures shared by the integration suites.
#![allow(dead_code)]

use std::sync::Arc;

use perfedrec::dataset::AttributeTable;
use perfedrec::math::{finite_diff_gradient, DenseVector, RandomStream};
use perfedrec::model::{
    bpr_loss_and_grads_for_pairs, bpr_loss_for_pairs, LocalContext, LocalGraph, ModelDims, ParamLayout, SharedParams,
};

/// A small full-model instance: 2 users, 3 items, d = 4, one crossing layer,
/// one propagation layer. User 1 appears in user 0's graph as a neighbor.
pub struct GradInstance {
    pub params: SharedParams,
    pub user_embedding: Vec<f64>,
    pub user_attrs: Vec<f64>,
    pub item_attrs: AttributeTable,
    pub graph: LocalGraph,
    pub pairs: Vec<(usize, usize)>,
    pub gnn_layers: usize,
    pub l2: f64,
}

impl GradInstance {
    pub fn new(seed: u64) -> Self {
        let mut rng = RandomStream::new(seed);
        let mut r = |scale: f64| (rng.next_f64() * 2.0 - 1.0) * scale;
        let dims = ModelDims {
            dim: 4,
            user_attr_dim: 2,
            item_attr_dim: 3,
            cross_layers: 1,
            n_items: 3,
        };
        let layout = Arc::new(ParamLayout::new(dims));
        // Larger than the default init so every nonlinearity is exercised.
        let values = (0..layout.len()).map(|_| r(0.6)).collect();
        let params = SharedParams::from_values(layout, values).unwrap();
        let user_embedding = (0..4).map(|_| r(0.5)).collect();
        let user_attrs = (0..2).map(|_| r(1.0)).collect();
        let item_attrs = AttributeTable::new(3, 3, (0..9).map(|_| r(1.0)).collect()).unwrap();
        let mut graph = LocalGraph::star(&[0, 1]).unwrap();
        let neighbor: Vec<f64> = (0..16).map(|_| r(0.5)).collect();
        graph.add_neighbor(neighbor, &[1]).unwrap();
        Self {
            params,
            user_embedding,
            user_attrs,
            item_attrs,
            graph,
            pairs: vec![(0, 2), (1, 2)],
            gnn_layers: 1,
            l2: 1e-4,
        }
    }

    pub fn ctx(&self) -> LocalContext<'_> {
        LocalContext {
            graph: &self.graph,
            user_attrs: &self.user_attrs,
            item_attrs: &self.item_attrs,
            gnn_layers: self.gnn_layers,
        }
    }

    /// Parameters followed by the user embedding, as one vector.
    pub fn packed(&self) -> Vec<f64> {
        let mut x = self.params.values().to_vec();
        x.extend_from_slice(&self.user_embedding);
        x
    }

    pub fn loss_at(&self, packed: &[f64]) -> f64 {
        let n = self.params.values().len();
        let params = SharedParams::from_values(self.params.layout().clone(), packed[..n].to_vec()).unwrap();
        bpr_loss_for_pairs(&params, &packed[n..], &self.ctx(), &self.pairs, self.l2).unwrap()
    }

    pub fn analytic(&self) -> (f64, Vec<f64>) {
        let out = bpr_loss_and_grads_for_pairs(&self.params, &self.user_embedding, &self.ctx(), &self.pairs, self.l2)
            .unwrap();
        let mut g = out.params.values().to_vec();
        g.extend_from_slice(&out.user_embedding);
        (out.loss, g)
    }

    pub fn numeric(&self, eps: f64) -> Vec<f64> {
        let x = DenseVector::new(self.packed()).unwrap();
        finite_diff_gradient(|p| self.loss_at(p), &x, eps).unwrap().into_vec()
    }

    /// Group name of each packed coordinate.
    pub fn coordinate_groups(&self) -> Vec<&'static str> {
        let mut names = vec![""; self.params.values().len()];
        for (name, range) in self.params.layout().groups() {
            for i in range {
                names[i] = name;
            }
        }
        names.extend(std::iter::repeat("user_embedding").take(self.user_embedding.len()));
        names
    }
}

/// `|a - n| <= rel * max(|a|, |n|)` or `|a - n| <= abs_floor`.
pub fn grad_close(analytic: f64, numeric: f64, rel: f64, abs_floor: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= abs_floor || diff <= rel * analytic.abs().max(numeric.abs())
}

/// Dense normalized-adjacency oracle: `mean_l (D^-1/2 A D^-1/2)^l X`.
pub fn dense_propagation_oracle(adj: &[Vec<f64>], x: &[Vec<f64>], layers: usize) -> Vec<Vec<f64>> {
    let n = adj.len();
    let deg: Vec<f64> = adj.iter().map(|row| row.iter().sum()).collect();
    let norm: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if adj[i][j] == 0.0 {
                        0.0
                    } else {
                        adj[i][j] / (deg[i] * deg[j]).sqrt()
                    }
                })
                .collect()
        })
        .collect();
    let width = x[0].len();
    let mut power = x.to_vec();
    let mut sum = x.to_vec();
    for _ in 0..layers {
        let mut next = vec![vec![0.0; width]; n];
        for i in 0..n {
            for j in 0..n {
                for c in 0..width {
                    next[i][c] += norm[i][j] * power[j][c];
                }
            }
        }
        for i in 0..n {
            for c in 0..width {
                sum[i][c] += next[i][c];
            }
        }
        power = next;
    }
    sum.iter()
        .map(|row| row.iter().map(|v| v / (layers as f64 + 1.0)).collect())
        .collect()
}

/// Ranking oracle: sort all candidate scores descending, placing the target
/// after every candidate with an equal score, and return its 1-based position.
pub fn rank_by_sorting(target: f64, negatives: &[f64]) -> usize {
    let mut all: Vec<(f64, bool)> = negatives.iter().map(|&s| (s, false)).collect();
    all.push((target, true));
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    all.iter().position(|(_, is_target)| *is_target).unwrap() + 1
}

/// Exhaustive optimum of 1-D 2-means: best WCSS over every 2-partition.
pub fn best_two_partition(points: &[f64]) -> (f64, Vec<usize>) {
    let n = points.len();
    let mut best = (f64::INFINITY, vec![]);
    for mask in 1..(1u32 << n) - 1 {
        let labels: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
        let mut cost = 0.0;
        for c in 0..2 {
            let members: Vec<f64> = (0..n).filter(|&i| labels[i] == c).map(|i| points[i]).collect();
            let mean = members.iter().sum::<f64>() / members.len() as f64;
            cost += members.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        }
        if cost < best.0 {
            best = (cost, labels);
        }
    }
    best
}

/// Naive loop for `x_{l+1} = x_0 * (x_l . w_l) + b_l + x_l`, layers packed
/// as `[w_0, b_0, w_1, b_1, ...]`.
pub fn crossing_loop_oracle(x0: &[f64], layers: &[f64]) -> Vec<f64> {
    let d = x0.len();
    let mut x = x0.to_vec();
    for l in 0..layers.len() / (2 * d) {
        let w = &layers[2 * l * d..(2 * l + 1) * d];
        let b = &layers[(2 * l + 1) * d..(2 * l + 2) * d];
        let mut s = 0.0;
        for j in 0..d {
            s += x[j] * w[j];
        }
        let mut next = vec![0.0; d];
        for j in 0..d {
            next[j] = x0[j] * s + b[j] + x[j];
        }
        x = next;
    }
    x
}

/// Small planted-block data for fast end-to-end runs.
pub fn tiny_blocks(seed: u64) -> perfedrec::dataset::Dataset {
    let cfg = perfedrec::dataset::BlockDatasetConfig {
        n_users: 20,
        n_items: 150,
        n_blocks: 2,
        min_interactions: 5,
        max_interactions: 10,
        ..Default::default()
    };
    perfedrec::dataset::planted_blocks(&cfg, seed).unwrap()
}

/// A fast configuration for end-to-end tests.
pub fn tiny_config(mode: perfedrec::sim::Mode, rounds: usize) -> perfedrec::sim::ExperimentConfig {
    perfedrec::sim::ExperimentConfig {
        mode,
        rounds,
        seed: 5,
        dim: 8,
        clusters: 2,
        users_per_round: 8,
        lr: 0.05,
        eval_negatives: 20,
        ..Default::default()
    }
}
