//! Pooled-data reference trainer on the full user-item graph.

use std::collections::HashSet;

use rayon::prelude::*;

use super::experiment::{stream, Env};
use super::metrics::{rank_of, RankingSummary, RoundMetrics};
use crate::error::{Error, Result};
use crate::math::{axpy, dot_slices, ensure_finite, squared_norm};
use crate::model::{backward, bpr_pair, forward, sample_training_pairs, Adjacency, NodeInput, ParamGrads, SharedParams};

struct Central<'a> {
    env: &'a Env<'a>,
    params: SharedParams,
    users: Vec<Vec<f64>>,
    adjacency: Adjacency,
}

pub(crate) fn run(env: &Env<'_>) -> Result<(Vec<RoundMetrics>, RankingSummary, SharedParams)> {
    let n = env.n_users();
    let m = env.train.n_items();
    let mut adjacency = Adjacency::new(n + m);
    for u in 0..n {
        for &i in env.train.items(u) {
            adjacency.add_edge(u, n + i);
        }
    }
    let mut c = Central {
        env,
        params: env.initial_params(),
        users: (0..n).map(|u| env.initial_user_embedding(u)).collect(),
        adjacency,
    };
    let mut series = Vec::with_capacity(env.config.rounds);
    for round in 1..=env.config.rounds {
        let loss = c.step(round as u64)?;
        let s = RankingSummary::from_ranks(&c.ranks(false));
        log::info!("round {round}: hr10 {:.4} ndcg10 {:.4} loss {loss:.4}", s.hr10, s.ndcg10);
        series.push(RoundMetrics {
            round,
            hr10: s.hr10,
            ndcg10: s.ndcg10,
            hr20: s.hr20,
            ndcg20: s.ndcg20,
            loss,
            cluster_sizes: Vec::new(),
        });
    }
    let test = RankingSummary::from_ranks(&c.ranks(true));
    Ok((series, test, c.params))
}

impl Central<'_> {
    fn nodes(&self) -> Vec<NodeInput<'_>> {
        let env = self.env;
        let users = self.users.iter().enumerate().map(|(u, e)| NodeInput::User {
            attrs: env.user_attrs.row(u),
            embedding: e,
            slot: u,
        });
        let items = (0..env.train.n_items()).map(|i| NodeInput::Item {
            attrs: env.item_attrs.row(i),
            item: i,
        });
        users.chain(items).collect()
    }

    /// One full-batch step over every user's pairs. Returns the mean loss
    /// per pair.
    fn step(&mut self, r: u64) -> Result<f64> {
        let env = self.env;
        let n = env.n_users();
        let gnn = env.config.gnn_layers;
        let l2 = env.config.lambda;
        let pairs: Vec<Vec<(usize, usize)>> = (0..n)
            .map(|u| {
                let mut rng = env.root.substream(&[stream::TRAIN, r, u as u64]);
                sample_training_pairs(env.train.items(u), env.train.n_items(), &mut rng)
            })
            .collect::<Result<_>>()?;

        let nodes = self.nodes();
        let fwd = forward(&self.params, &nodes, &self.adjacency, gnn);
        let width = fwd.width;
        let mut g_final = vec![0.0; nodes.len() * width];
        let mut loss = 0.0;
        let mut n_pairs = 0usize;
        let mut touched = Vec::new();
        let mut seen = HashSet::new();
        for (u, list) in pairs.iter().enumerate() {
            let user = fwd.final_row(u).to_vec();
            for &(p, q) in list {
                let (pn, qn) = (n + p, n + q);
                let g = bpr_pair(&user, fwd.final_row(pn), fwd.final_row(qn))?;
                loss += g.loss;
                axpy(1.0, &g.user, &mut g_final[u * width..(u + 1) * width]);
                axpy(1.0, &g.positive, &mut g_final[pn * width..(pn + 1) * width]);
                axpy(1.0, &g.negative, &mut g_final[qn * width..(qn + 1) * width]);
                for i in [p, q] {
                    if seen.insert(i) {
                        touched.push(i);
                    }
                }
            }
            n_pairs += list.len();
        }

        let mut grads = ParamGrads::zeros(self.params.layout().clone());
        let mut user_grads = vec![vec![0.0; env.config.dim]; n];
        backward(&self.params, &nodes, &self.adjacency, gnn, &fwd, &g_final, &mut grads, &mut user_grads);
        for (e, g) in self.users.iter().zip(&mut user_grads) {
            loss += l2 * squared_norm(e);
            axpy(2.0 * l2, e, g);
        }
        for &i in &touched {
            let e = self.params.item_embedding(i);
            loss += l2 * squared_norm(e);
            axpy(2.0 * l2, e, grads.item_row_mut(i));
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                context: "central loss",
                index: 0,
            });
        }
        drop(nodes);

        grads.scale(1.0 / n as f64);
        self.params.sgd_step(&grads, env.config.lr)?;
        for (e, g) in self.users.iter_mut().zip(&user_grads) {
            axpy(-env.config.lr, g, e);
            ensure_finite("user embedding", e)?;
        }
        Ok(loss / n_pairs as f64)
    }

    fn ranks(&self, test: bool) -> Vec<usize> {
        let env = self.env;
        let n = env.n_users();
        let nodes = self.nodes();
        let fwd = forward(&self.params, &nodes, &self.adjacency, env.config.gnn_layers);
        (0..n)
            .into_par_iter()
            .map(|u| {
                let user = fwd.final_row(u);
                let score = |i: usize| dot_slices(user, fwd.final_row(n + i));
                let target = score(env.held_out(u, test));
                let negatives: Vec<f64> = env.negatives[u].iter().map(|&i| score(i)).collect();
                rank_of(target, &negatives)
            })
            .collect()
    }
}
