//! Shared forward/backward pass over a node list: raw embeddings per node,
//! LightGCN propagation, and gradients back to every parameter.

use super::embed::{backward_pathway, forward_pathway, PathwayTrace};
use super::graph::{propagate, Adjacency};
use super::params::{ParamGrads, SharedParams};
use crate::math::axpy;

#[derive(Debug, Clone, Copy)]
pub(crate) enum NodeInput<'a> {
    /// A user whose ID embedding is trainable; `slot` indexes the caller's
    /// user-gradient buffers.
    User {
        attrs: &'a [f64],
        embedding: &'a [f64],
        slot: usize,
    },
    Item {
        attrs: &'a [f64],
        item: usize,
    },
    /// A received raw embedding, treated as a constant.
    Fixed(&'a [f64]),
}

pub(crate) struct NetworkForward {
    pub width: usize,
    pub finals: Vec<f64>,
    traces: Vec<Option<PathwayTrace>>,
}

impl NetworkForward {
    pub fn final_row(&self, node: usize) -> &[f64] {
        &self.finals[node * self.width..(node + 1) * self.width]
    }
}

/// Nodes past `adjacency.n_nodes()` are isolated.
pub(crate) fn forward(
    params: &SharedParams,
    nodes: &[NodeInput<'_>],
    adjacency: &Adjacency,
    gnn_layers: usize,
) -> NetworkForward {
    let width = params.dims().raw_dim();
    let user_p = params.user_pathway();
    let item_p = params.item_pathway();
    let mut raw = vec![0.0; nodes.len() * width];
    let mut traces = Vec::with_capacity(nodes.len());
    for (n, node) in nodes.iter().enumerate() {
        let row = &mut raw[n * width..(n + 1) * width];
        let trace = match *node {
            NodeInput::User { attrs, embedding, .. } => Some(forward_pathway(&user_p, attrs, embedding)),
            NodeInput::Item { attrs, item } => Some(forward_pathway(&item_p, attrs, params.item_embedding(item))),
            NodeInput::Fixed(e) => {
                row.copy_from_slice(e);
                None
            }
        };
        if let Some(t) = &trace {
            t.write_raw(row);
        }
        traces.push(trace);
    }
    let finals = propagate(adjacency, &raw, width, gnn_layers);
    NetworkForward { width, finals, traces }
}

/// Backpropagates gradients on the final embeddings into `grads` and the
/// per-slot user embedding gradients.
pub(crate) fn backward(
    params: &SharedParams,
    nodes: &[NodeInput<'_>],
    adjacency: &Adjacency,
    gnn_layers: usize,
    fwd: &NetworkForward,
    g_final: &[f64],
    grads: &mut ParamGrads,
    user_grads: &mut [Vec<f64>],
) {
    let width = fwd.width;
    let d = width / 4;
    // The propagation operator is symmetric, so its adjoint is itself.
    let g_raw = propagate(adjacency, g_final, width, gnn_layers);
    let user_p = params.user_pathway();
    let item_p = params.item_pathway();
    let mut g_id = vec![0.0; d];
    for (n, node) in nodes.iter().enumerate() {
        let Some(trace) = &fwd.traces[n] else { continue };
        let g_row = &g_raw[n * width..(n + 1) * width];
        if g_row.iter().all(|v| *v == 0.0) {
            continue;
        }
        match *node {
            NodeInput::User { slot, .. } => {
                let mut g = grads.user_pathway_mut();
                backward_pathway(&user_p, trace, g_row, &mut g, &mut user_grads[slot]);
            }
            NodeInput::Item { item, .. } => {
                g_id.iter_mut().for_each(|v| *v = 0.0);
                {
                    let mut g = grads.item_pathway_mut();
                    backward_pathway(&item_p, trace, g_row, &mut g, &mut g_id);
                }
                axpy(1.0, &g_id, grads.item_row_mut(item));
            }
            NodeInput::Fixed(_) => {}
        }
    }
}
