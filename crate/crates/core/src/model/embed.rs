//! Raw embedding pathway: attribute linear layer, feature crossing, attention
//! fusion, and the concatenated raw embedding, with hand-derived backward
//! passes.

use super::params::{Pathway, PathwayGrad, SharedParams};
use crate::error::{check_dims, Result};
use crate::math::{axpy, dot_slices, matvec_into};

/// `weight * attr + bias`, with `weight` row-major `bias.len() x attr.len()`.
pub fn attr_embed(attr: &[f64], weight: &[f64], bias: &[f64]) -> Result<Vec<f64>> {
    check_dims("attr_embed weight", bias.len() * attr.len(), weight.len())?;
    let mut out = vec![0.0; bias.len()];
    matvec_into(weight, attr.len(), attr, &mut out);
    for (o, b) in out.iter_mut().zip(bias) {
        *o += b;
    }
    Ok(out)
}

/// Applies `x_{l+1} = x_0 (x_l . w_l) + b_l + x_l` for each `(w_l, b_l)` in
/// `layers` (flat, `2 * d` per layer).
pub fn feature_crossing(x0: &[f64], layers: &[f64]) -> Result<Vec<f64>> {
    let d = x0.len();
    if d == 0 || layers.len() % (2 * d) != 0 {
        return Err(crate::Error::DimensionMismatch {
            context: "feature_crossing layers",
            left: layers.len(),
            right: 2 * d,
        });
    }
    Ok(crossing_trace(x0, layers).pop().expect("x_0 is always present"))
}

/// Every intermediate `x_0..=x_L` of the crossing recurrence.
fn crossing_trace(x0: &[f64], layers: &[f64]) -> Vec<Vec<f64>> {
    let d = x0.len();
    let mut xs = Vec::with_capacity(layers.len() / (2 * d) + 1);
    xs.push(x0.to_vec());
    for layer in layers.chunks_exact(2 * d) {
        let (w, b) = layer.split_at(d);
        let prev = xs.last().expect("non-empty");
        let c = dot_slices(prev, w);
        let next: Vec<f64> = (0..d).map(|j| x0[j] * c + b[j] + prev[j]).collect();
        xs.push(next);
    }
    xs
}

/// Softmax over `tanh(W_i . x_i + b_i)` for the three branches.
pub fn attention_weights(branches: [&[f64]; 3], gates: &[f64]) -> Result<[f64; 3]> {
    let d = branches[0].len();
    check_dims("attention gates", 3 * (d + 1), gates.len())?;
    for b in &branches[1..] {
        check_dims("attention branches", d, b.len())?;
    }
    Ok(attention_stats(branches, gates).weights)
}

/// Attention-weighted sum of the three branches.
pub fn attention_combine(branches: [&[f64]; 3], gates: &[f64]) -> Result<Vec<f64>> {
    let weights = attention_weights(branches, gates)?;
    Ok(weighted_sum(branches, &weights))
}

#[derive(Debug, Clone)]
struct AttentionStats {
    /// `tanh` of each gate pre-activation.
    squashed: [f64; 3],
    weights: [f64; 3],
}

fn attention_stats(branches: [&[f64]; 3], gates: &[f64]) -> AttentionStats {
    let d = branches[0].len();
    let mut squashed = [0.0; 3];
    for (i, gate) in gates.chunks_exact(d + 1).enumerate() {
        squashed[i] = (dot_slices(&gate[..d], branches[i]) + gate[d]).tanh();
    }
    // Logits lie in [-1, 1]; no max-shift needed for exp.
    let exps = squashed.map(f64::exp);
    let total = exps[0] + exps[1] + exps[2];
    AttentionStats {
        squashed,
        weights: exps.map(|e| e / total),
    }
}

fn weighted_sum(branches: [&[f64]; 3], weights: &[f64; 3]) -> Vec<f64> {
    let d = branches[0].len();
    (0..d)
        .map(|j| weights[0] * branches[0][j] + weights[1] * branches[1][j] + weights[2] * branches[2][j])
        .collect()
}

/// The four `d`-dimensional embeddings of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBundle {
    pub attr: Vec<f64>,
    pub crossed: Vec<f64>,
    pub id: Vec<f64>,
    pub attention: Vec<f64>,
}

impl EmbeddingBundle {
    /// Concatenation `[attr | crossed | id | attention]`.
    pub fn raw(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(4 * self.id.len());
        out.extend_from_slice(&self.attr);
        out.extend_from_slice(&self.crossed);
        out.extend_from_slice(&self.id);
        out.extend_from_slice(&self.attention);
        out
    }
}

/// Forward intermediates of one pathway evaluation, kept for backprop.
#[derive(Debug, Clone)]
pub(crate) struct PathwayTrace {
    attr_input: Vec<f64>,
    /// `x_0 ..= x_L`; `x_0` is the attribute embedding, `x_L` the crossed one.
    crossing: Vec<Vec<f64>>,
    id: Vec<f64>,
    attention: AttentionStats,
    fused: Vec<f64>,
}

impl PathwayTrace {
    pub fn bundle(&self) -> EmbeddingBundle {
        EmbeddingBundle {
            attr: self.crossing[0].clone(),
            crossed: self.crossing.last().expect("non-empty").clone(),
            id: self.id.clone(),
            attention: self.fused.clone(),
        }
    }

    pub fn write_raw(&self, out: &mut [f64]) {
        let d = self.id.len();
        out[..d].copy_from_slice(&self.crossing[0]);
        out[d..2 * d].copy_from_slice(self.crossing.last().expect("non-empty"));
        out[2 * d..3 * d].copy_from_slice(&self.id);
        out[3 * d..].copy_from_slice(&self.fused);
    }
}

/// Runs one pathway. Callers guarantee `attr.len() == p.attr_dim` and
/// `id.len() == p.dim`.
pub(crate) fn forward_pathway(p: &Pathway<'_>, attr: &[f64], id: &[f64]) -> PathwayTrace {
    debug_assert_eq!(attr.len(), p.attr_dim);
    debug_assert_eq!(id.len(), p.dim);
    let mut e_f = vec![0.0; p.dim];
    matvec_into(p.attr_weight, p.attr_dim, attr, &mut e_f);
    for (o, b) in e_f.iter_mut().zip(p.attr_bias) {
        *o += b;
    }
    let crossing = crossing_trace(&e_f, p.cross);
    let branches = [&crossing[0][..], &crossing[crossing.len() - 1][..], id];
    let attention = attention_stats(branches, p.gates);
    let fused = weighted_sum(branches, &attention.weights);
    PathwayTrace {
        attr_input: attr.to_vec(),
        crossing,
        id: id.to_vec(),
        attention,
        fused,
    }
}

/// Backpropagates `g_raw` (gradient w.r.t. the `4d` raw embedding) through
/// one pathway, accumulating into `grad` and `g_id`.
pub(crate) fn backward_pathway(
    p: &Pathway<'_>,
    trace: &PathwayTrace,
    g_raw: &[f64],
    grad: &mut PathwayGrad<'_>,
    g_id: &mut [f64],
) {
    let d = p.dim;
    let n_layers = trace.crossing.len() - 1;
    let x0 = &trace.crossing[0];
    let x_last = &trace.crossing[n_layers];

    // Direct gradients on each concatenated block.
    let mut g_x0 = g_raw[..d].to_vec();
    let mut g_cross_out = g_raw[d..2 * d].to_vec();
    for (g, r) in g_id.iter_mut().zip(&g_raw[2 * d..3 * d]) {
        *g += r;
    }
    let g_fused = &g_raw[3 * d..4 * d];

    // Attention: out = sum_i w_i x_i, w = softmax(tanh(W_i x_i + b_i)).
    let branches = [&x0[..], &x_last[..], &trace.id[..]];
    let w = trace.attention.weights;
    let g_w: [f64; 3] = [0, 1, 2].map(|i| dot_slices(g_fused, branches[i]));
    let mean_g = w[0] * g_w[0] + w[1] * g_w[1] + w[2] * g_w[2];
    for i in 0..3 {
        let g_logit = w[i] * (g_w[i] - mean_g);
        let s = trace.attention.squashed[i];
        let g_pre = g_logit * (1.0 - s * s);
        let gate = &p.gates[i * (d + 1)..(i + 1) * (d + 1)];
        let g_gate = &mut grad.gates[i * (d + 1)..(i + 1) * (d + 1)];
        axpy(g_pre, branches[i], &mut g_gate[..d]);
        g_gate[d] += g_pre;
        let g_branch: &mut [f64] = match i {
            0 => &mut g_x0,
            1 => &mut g_cross_out,
            _ => &mut *g_id,
        };
        axpy(w[i], g_fused, g_branch);
        axpy(g_pre, &gate[..d], g_branch);
    }

    // Crossing layers in reverse: x_{l+1} = x_0 c_l + b_l + x_l, c_l = x_l . w_l.
    let mut g_next = g_cross_out;
    for l in (0..n_layers).rev() {
        let x_l = &trace.crossing[l];
        let w_l = &p.cross[2 * d * l..2 * d * l + d];
        let (g_w_l, g_b_l) = grad.cross[2 * d * l..2 * d * (l + 1)].split_at_mut(d);
        let c_l = dot_slices(x_l, w_l);
        let g_c = dot_slices(&g_next, x0);
        axpy(c_l, &g_next, &mut g_x0);
        axpy(1.0, &g_next, g_b_l);
        axpy(g_c, x_l, g_w_l);
        // g_{x_l} = g_{x_{l+1}} + g_c w_l
        axpy(g_c, w_l, &mut g_next);
    }
    // x_0 is both the recurrence seed and the first crossing input.
    axpy(1.0, &g_next, &mut g_x0);

    // Linear layer: x_0 = W a + b.
    let a = &trace.attr_input;
    for (j, g) in g_x0.iter().enumerate() {
        grad.attr_bias[j] += g;
        axpy(*g, a, &mut grad.attr_weight[j * p.attr_dim..(j + 1) * p.attr_dim]);
    }
}

/// Embedding bundle of a user from its attributes and private ID embedding.
pub fn user_bundle(params: &SharedParams, attrs: &[f64], user_embedding: &[f64]) -> Result<EmbeddingBundle> {
    let p = params.user_pathway();
    check_dims("user attributes", p.attr_dim, attrs.len())?;
    check_dims("user embedding", p.dim, user_embedding.len())?;
    Ok(forward_pathway(&p, attrs, user_embedding).bundle())
}

/// Embedding bundle of an item from its attributes and shared ID embedding.
pub fn item_bundle(params: &SharedParams, attrs: &[f64], item: usize) -> Result<EmbeddingBundle> {
    let p = params.item_pathway();
    check_dims("item attributes", p.attr_dim, attrs.len())?;
    if item >= params.dims().n_items {
        return Err(crate::Error::InvalidArgument(format!("item {item} out of range")));
    }
    Ok(forward_pathway(&p, attrs, params.item_embedding(item)).bundle())
}
