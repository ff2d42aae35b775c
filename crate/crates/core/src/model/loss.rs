//! BPR objective over a client's local graph, with analytic gradients.

use std::collections::{HashMap, HashSet};

use super::graph::LocalGraph;
use super::network::{backward, forward, NodeInput};
use super::params::{ParamGrads, SharedParams};
use crate::dataset::AttributeTable;
use crate::error::{check_dims, Error, Result};
use crate::math::{axpy, dot_slices, squared_norm, RandomStream};

/// Default L2 coefficient on touched ID embeddings.
pub const DEFAULT_L2: f64 = 1e-4;

/// Everything a client needs to evaluate its local objective.
#[derive(Debug, Clone, Copy)]
pub struct LocalContext<'a> {
    pub graph: &'a LocalGraph,
    pub user_attrs: &'a [f64],
    pub item_attrs: &'a AttributeTable,
    pub gnn_layers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossAndGrads {
    pub loss: f64,
    pub params: ParamGrads,
    pub user_embedding: Vec<f64>,
}

/// Loss and gradients of one BPR pair `-ln sigmoid(u.p - u.n)` with respect to
/// the three final embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGrads {
    pub loss: f64,
    pub user: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

/// `-ln sigmoid(x)` and its derivative `-sigmoid(-x)`, stable for any finite x.
#[inline]
fn neg_log_sigmoid(x: f64) -> (f64, f64) {
    let loss = (-x).max(0.0) + (-x.abs()).exp().ln_1p();
    let slope = -1.0 / (1.0 + x.exp());
    (loss, slope)
}

pub fn bpr_pair(user: &[f64], positive: &[f64], negative: &[f64]) -> Result<PairGrads> {
    check_dims("bpr_pair positive", user.len(), positive.len())?;
    check_dims("bpr_pair negative", user.len(), negative.len())?;
    let margin = dot_slices(user, positive) - dot_slices(user, negative);
    let (loss, slope) = neg_log_sigmoid(margin);
    Ok(PairGrads {
        loss,
        user: positive.iter().zip(negative).map(|(p, n)| slope * (p - n)).collect(),
        positive: user.iter().map(|u| slope * u).collect(),
        negative: user.iter().map(|u| -slope * u).collect(),
    })
}

/// Draws one uniform negative per positive from items outside `positives`.
pub fn sample_training_pairs(
    positives: &[usize],
    n_items: usize,
    rng: &mut RandomStream,
) -> Result<Vec<(usize, usize)>> {
    let excluded: HashSet<usize> = positives.iter().copied().collect();
    if excluded.len() >= n_items {
        return Err(Error::InsufficientNegatives {
            user: usize::MAX,
            requested: positives.len(),
            available: 0,
        });
    }
    Ok(positives
        .iter()
        .map(|&p| loop {
            let j = (rng.next_u64() % n_items as u64) as usize;
            if !excluded.contains(&j) {
                break (p, j);
            }
        })
        .collect())
}

struct Assembled<'a> {
    nodes: Vec<NodeInput<'a>>,
    pairs: Vec<(usize, usize)>,
    touched: Vec<usize>,
}

fn assemble<'a>(
    params: &SharedParams,
    user_embedding: &'a [f64],
    ctx: &LocalContext<'a>,
    pairs: &[(usize, usize)],
) -> Result<Assembled<'a>> {
    let dims = params.dims();
    check_dims("user embedding", dims.dim, user_embedding.len())?;
    check_dims("user attributes", dims.user_attr_dim, ctx.user_attrs.len())?;
    check_dims("item attributes", dims.item_attr_dim, ctx.item_attrs.cols())?;
    let graph = ctx.graph;
    let mut nodes = Vec::with_capacity(graph.n_nodes() + pairs.len());
    nodes.push(NodeInput::User {
        attrs: ctx.user_attrs,
        embedding: user_embedding,
        slot: 0,
    });
    for &item in graph.items() {
        if item >= dims.n_items {
            return Err(Error::InvalidArgument(format!("item {item} out of range")));
        }
        nodes.push(NodeInput::Item {
            attrs: ctx.item_attrs.row(item),
            item,
        });
    }
    let mut node_of: HashMap<usize, usize> = HashMap::new();
    for e in graph.neighbor_embeddings() {
        check_dims("neighbor embedding", dims.raw_dim(), e.len())?;
        nodes.push(NodeInput::Fixed(e));
    }
    let mut touched = Vec::new();
    let mut node_for = |item: usize, nodes: &mut Vec<NodeInput<'a>>| -> Result<usize> {
        if item >= dims.n_items {
            return Err(Error::InvalidArgument(format!("item {item} out of range")));
        }
        Ok(*node_of.entry(item).or_insert_with(|| {
            nodes.push(NodeInput::Item {
                attrs: ctx.item_attrs.row(item),
                item,
            });
            nodes.len() - 1
        }))
    };
    let mut node_pairs = Vec::with_capacity(pairs.len());
    let mut seen = HashSet::new();
    for &(p, n) in pairs {
        node_pairs.push((node_for(p, &mut nodes)?, node_for(n, &mut nodes)?));
        for i in [p, n] {
            if seen.insert(i) {
                touched.push(i);
            }
        }
    }
    Ok(Assembled {
        nodes,
        pairs: node_pairs,
        touched,
    })
}

/// BPR objective over explicit `(positive, negative)` item pairs.
///
/// `loss = sum -ln sigmoid(s(u,p) - s(u,n)) + l2 (|e_u|^2 + sum_i |e_i|^2)`
/// where the L2 sum runs over the distinct items appearing in `pairs`.
/// Pair items are scored as isolated nodes appended to the local graph, so
/// positives and negatives are represented alike; the graph shapes only the
/// user's embedding.
pub fn bpr_loss_and_grads_for_pairs(
    params: &SharedParams,
    user_embedding: &[f64],
    ctx: &LocalContext<'_>,
    pairs: &[(usize, usize)],
    l2: f64,
) -> Result<LossAndGrads> {
    let a = assemble(params, user_embedding, ctx, pairs)?;
    let adjacency = ctx.graph.adjacency();
    let fwd = forward(params, &a.nodes, adjacency, ctx.gnn_layers);
    let width = fwd.width;
    let mut g_final = vec![0.0; a.nodes.len() * width];
    let mut loss = 0.0;
    let user = fwd.final_row(LocalGraph::CENTER).to_vec();
    for &(p, n) in &a.pairs {
        let g = bpr_pair(&user, fwd.final_row(p), fwd.final_row(n))?;
        loss += g.loss;
        axpy(1.0, &g.user, &mut g_final[..width]);
        axpy(1.0, &g.positive, &mut g_final[p * width..(p + 1) * width]);
        axpy(1.0, &g.negative, &mut g_final[n * width..(n + 1) * width]);
    }

    let mut grads = ParamGrads::zeros(params.layout().clone());
    let mut user_grads = vec![vec![0.0; user_embedding.len()]];
    backward(params, &a.nodes, adjacency, ctx.gnn_layers, &fwd, &g_final, &mut grads, &mut user_grads);

    loss += l2 * squared_norm(user_embedding);
    axpy(2.0 * l2, user_embedding, &mut user_grads[0]);
    for &item in &a.touched {
        let e = params.item_embedding(item);
        loss += l2 * squared_norm(e);
        axpy(2.0 * l2, e, grads.item_row_mut(item));
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            context: "bpr loss",
            index: 0,
        });
    }
    Ok(LossAndGrads {
        loss,
        params: grads,
        user_embedding: user_grads.pop().expect("one slot"),
    })
}

/// Forward-only value of [`bpr_loss_and_grads_for_pairs`].
pub fn bpr_loss_for_pairs(
    params: &SharedParams,
    user_embedding: &[f64],
    ctx: &LocalContext<'_>,
    pairs: &[(usize, usize)],
    l2: f64,
) -> Result<f64> {
    let a = assemble(params, user_embedding, ctx, pairs)?;
    let fwd = forward(params, &a.nodes, ctx.graph.adjacency(), ctx.gnn_layers);
    let user = fwd.final_row(LocalGraph::CENTER);
    let mut loss = 0.0;
    for &(p, n) in &a.pairs {
        let margin = dot_slices(user, fwd.final_row(p)) - dot_slices(user, fwd.final_row(n));
        loss += neg_log_sigmoid(margin).0;
    }
    loss += l2 * squared_norm(user_embedding);
    for &item in &a.touched {
        loss += l2 * squared_norm(params.item_embedding(item));
    }
    Ok(loss)
}

/// Samples one negative per positive graph item, then evaluates the BPR
/// objective and its gradients.
pub fn bpr_loss_and_grads(
    params: &SharedParams,
    user_embedding: &[f64],
    ctx: &LocalContext<'_>,
    l2: f64,
    rng: &mut RandomStream,
) -> Result<LossAndGrads> {
    let pairs = sample_training_pairs(ctx.graph.items(), params.dims().n_items, rng)?;
    bpr_loss_and_grads_for_pairs(params, user_embedding, ctx, &pairs, l2)
}

/// Scores of `candidates` for the context's user, each candidate an isolated
/// node as in training.
pub fn score_items(
    params: &SharedParams,
    user_embedding: &[f64],
    ctx: &LocalContext<'_>,
    candidates: &[usize],
) -> Result<Vec<f64>> {
    let pairs: Vec<(usize, usize)> = candidates.iter().map(|&c| (c, c)).collect();
    let a = assemble(params, user_embedding, ctx, &pairs)?;
    let fwd = forward(params, &a.nodes, ctx.graph.adjacency(), ctx.gnn_layers);
    let user = fwd.final_row(LocalGraph::CENTER);
    Ok(a.pairs.iter().map(|&(node, _)| dot_slices(user, fwd.final_row(node))).collect())
}

/// Final (propagated) embedding of the context's user.
pub fn user_final_embedding(
    params: &SharedParams,
    user_embedding: &[f64],
    ctx: &LocalContext<'_>,
) -> Result<Vec<f64>> {
    let a = assemble(params, user_embedding, ctx, &[])?;
    let fwd = forward(params, &a.nodes, ctx.graph.adjacency(), ctx.gnn_layers);
    Ok(fwd.final_row(LocalGraph::CENTER).to_vec())
}

/// Raw (pre-propagation) embedding of a user, as published to neighbors.
pub fn user_raw_embedding(params: &SharedParams, user_attrs: &[f64], user_embedding: &[f64]) -> Result<Vec<f64>> {
    Ok(super::embed::user_bundle(params, user_attrs, user_embedding)?.raw())
}
