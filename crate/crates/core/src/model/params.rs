use std::ops::Range;
use std::sync::Arc;

use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{ensure_finite, RandomStream};

/// Shapes of every federated parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Embedding width `d` of each of the four raw-embedding blocks.
    pub dim: usize,
    pub user_attr_dim: usize,
    pub item_attr_dim: usize,
    pub cross_layers: usize,
    pub n_items: usize,
}

impl ModelDims {
    /// Width of a raw (and propagated) node embedding: four `d` blocks.
    pub fn raw_dim(&self) -> usize {
        4 * self.dim
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct PathwayLayout {
    attr_dim: usize,
    attr_weight: Range<usize>,
    attr_bias: Range<usize>,
    cross: Range<usize>,
    gates: Range<usize>,
}

impl PathwayLayout {
    fn new(start: usize, dim: usize, attr_dim: usize, cross_layers: usize) -> Self {
        let attr_weight = start..start + dim * attr_dim;
        let attr_bias = attr_weight.end..attr_weight.end + dim;
        let cross = attr_bias.end..attr_bias.end + 2 * dim * cross_layers;
        let gates = cross.end..cross.end + 3 * (dim + 1);
        Self {
            attr_dim,
            attr_weight,
            attr_bias,
            cross,
            gates,
        }
    }

    fn span(&self) -> Range<usize> {
        self.attr_weight.start..self.gates.end
    }
}

/// Offsets of each parameter group inside the flat parameter buffer.
///
/// Order: user pathway, item pathway, item ID embedding table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    dims: ModelDims,
    user: PathwayLayout,
    item: PathwayLayout,
    item_table: Range<usize>,
}

impl ParamLayout {
    pub fn new(dims: ModelDims) -> Self {
        assert!(dims.dim > 0 && dims.user_attr_dim > 0 && dims.item_attr_dim > 0);
        let user = PathwayLayout::new(0, dims.dim, dims.user_attr_dim, dims.cross_layers);
        let item = PathwayLayout::new(
            user.span().end,
            dims.dim,
            dims.item_attr_dim,
            dims.cross_layers,
        );
        let item_table = item.span().end..item.span().end + dims.n_items * dims.dim;
        Self {
            dims,
            user,
            item,
            item_table,
        }
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.item_table.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Named parameter groups and their ranges in the flat buffer.
    pub fn groups(&self) -> Vec<(&'static str, Range<usize>)> {
        vec![
            ("user_attr_weight", self.user.attr_weight.clone()),
            ("user_attr_bias", self.user.attr_bias.clone()),
            ("user_cross", self.user.cross.clone()),
            ("user_gates", self.user.gates.clone()),
            ("item_attr_weight", self.item.attr_weight.clone()),
            ("item_attr_bias", self.item.attr_bias.clone()),
            ("item_cross", self.item.cross.clone()),
            ("item_gates", self.item.gates.clone()),
            ("item_embeddings", self.item_table.clone()),
        ]
    }

    pub(crate) fn user_span(&self) -> Range<usize> {
        self.user.span()
    }

    pub(crate) fn item_span(&self) -> Range<usize> {
        self.item.span()
    }

    pub(crate) fn item_row(&self, item: usize) -> Range<usize> {
        let d = self.dims.dim;
        let start = self.item_table.start + item * d;
        start..start + d
    }
}

/// Borrowed parameters of one embedding pathway (user or item side).
#[derive(Debug, Clone, Copy)]
pub struct Pathway<'a> {
    pub dim: usize,
    pub attr_dim: usize,
    /// `dim x attr_dim`, row-major.
    pub attr_weight: &'a [f64],
    pub attr_bias: &'a [f64],
    /// `cross_layers` consecutive `(w_l, b_l)` pairs of length `dim` each.
    pub cross: &'a [f64],
    /// Three consecutive `(W_i, b_i)` gates: a `dim` row followed by a scalar.
    pub gates: &'a [f64],
}

impl<'a> Pathway<'a> {
    fn from_block(block: &'a [f64], dim: usize, attr_dim: usize) -> Self {
        let (attr_weight, rest) = block.split_at(dim * attr_dim);
        let (attr_bias, rest) = rest.split_at(dim);
        let (cross, gates) = rest.split_at(rest.len() - 3 * (dim + 1));
        Self {
            dim,
            attr_dim,
            attr_weight,
            attr_bias,
            cross,
            gates,
        }
    }

    pub fn cross_layers(&self) -> usize {
        self.cross.len() / (2 * self.dim)
    }
}

/// Mutable gradient buffers of one pathway, mirroring [`Pathway`].
pub(crate) struct PathwayGrad<'a> {
    pub attr_weight: &'a mut [f64],
    pub attr_bias: &'a mut [f64],
    pub cross: &'a mut [f64],
    pub gates: &'a mut [f64],
}

impl<'a> PathwayGrad<'a> {
    fn from_block(block: &'a mut [f64], dim: usize, attr_dim: usize) -> Self {
        let (attr_weight, rest) = block.split_at_mut(dim * attr_dim);
        let (attr_bias, rest) = rest.split_at_mut(dim);
        let gates_len = 3 * (dim + 1);
        let cross_len = rest.len() - gates_len;
        let (cross, gates) = rest.split_at_mut(cross_len);
        Self {
            attr_weight,
            attr_bias,
            cross,
            gates,
        }
    }
}

/// All federated parameters as one flat buffer with a shared layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedParams {
    layout: Arc<ParamLayout>,
    values: Vec<f64>,
}

impl SharedParams {
    pub fn zeros(layout: Arc<ParamLayout>) -> Self {
        let values = vec![0.0; layout.len()];
        Self { layout, values }
    }

    pub fn from_values(layout: Arc<ParamLayout>, values: Vec<f64>) -> Result<Self> {
        crate::error::check_dims("SharedParams", layout.len(), values.len())?;
        ensure_finite("SharedParams", &values)?;
        Ok(Self { layout, values })
    }

    /// Random initialisation: Xavier-uniform attribute layers, small crossing
    /// and gate weights, zero biases, N(0, 0.1) item embeddings.
    pub fn init(layout: Arc<ParamLayout>, rng: &mut RandomStream) -> Self {
        let dims = layout.dims();
        let d = dims.dim;
        let mut p = Self::zeros(layout.clone());
        for side in [&layout.user, &layout.item] {
            let bound = (6.0 / (d + side.attr_dim) as f64).sqrt();
            let xavier = Uniform::new(-bound, bound).expect("valid bounds");
            for v in &mut p.values[side.attr_weight.clone()] {
                *v = xavier.sample(rng);
            }
            let small = Uniform::new(-0.05, 0.05).expect("valid bounds");
            for (k, chunk) in p.values[side.cross.clone()].chunks_exact_mut(d).enumerate() {
                // Even chunks are w_l, odd chunks are b_l.
                if k % 2 == 0 {
                    chunk.iter_mut().for_each(|v| *v = small.sample(rng));
                }
            }
            for (g, chunk) in p.values[side.gates.clone()].chunks_exact_mut(d + 1).enumerate() {
                debug_assert!(g < 3);
                chunk[..d].iter_mut().for_each(|v| *v = small.sample(rng));
            }
        }
        let normal = Normal::new(0.0, 0.1).expect("valid std");
        for v in &mut p.values[layout.item_table.clone()] {
            *v = normal.sample(rng);
        }
        p
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    pub fn dims(&self) -> ModelDims {
        self.layout.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn same_layout(&self, other: &SharedParams) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout
    }

    pub fn user_pathway(&self) -> Pathway<'_> {
        let d = self.layout.dims;
        Pathway::from_block(&self.values[self.layout.user_span()], d.dim, d.user_attr_dim)
    }

    pub fn item_pathway(&self) -> Pathway<'_> {
        let d = self.layout.dims;
        Pathway::from_block(&self.values[self.layout.item_span()], d.dim, d.item_attr_dim)
    }

    pub fn item_embedding(&self, item: usize) -> &[f64] {
        &self.values[self.layout.item_row(item)]
    }

    pub fn ensure_finite(&self) -> Result<()> {
        ensure_finite("SharedParams", &self.values)
    }

    /// `self -= lr * grad` over the whole buffer.
    pub fn sgd_step(&mut self, grad: &ParamGrads, lr: f64) -> Result<()> {
        if grad.values.len() != self.values.len() {
            return Err(Error::LayoutMismatch);
        }
        for (p, g) in self.values.iter_mut().zip(&grad.values) {
            *p -= lr * g;
        }
        Ok(())
    }
}

/// Gradient buffer with the same layout as [`SharedParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    layout: Arc<ParamLayout>,
    values: Vec<f64>,
}

impl ParamGrads {
    pub fn zeros(layout: Arc<ParamLayout>) -> Self {
        let values = vec![0.0; layout.len()];
        Self { layout, values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    pub(crate) fn item_row_mut(&mut self, item: usize) -> &mut [f64] {
        let r = self.layout.item_row(item);
        &mut self.values[r]
    }

    pub(crate) fn user_pathway_mut(&mut self) -> PathwayGrad<'_> {
        let d = self.layout.dims;
        let span = self.layout.user_span();
        PathwayGrad::from_block(&mut self.values[span], d.dim, d.user_attr_dim)
    }

    pub(crate) fn item_pathway_mut(&mut self) -> PathwayGrad<'_> {
        let d = self.layout.dims;
        let span = self.layout.item_span();
        PathwayGrad::from_block(&mut self.values[span], d.dim, d.item_attr_dim)
    }
}

/// Random private ID embedding for one user.
pub fn init_user_embedding(dim: usize, rng: &mut RandomStream) -> Vec<f64> {
    let normal = Normal::new(0.0, 0.1).expect("valid std");
    (0..dim).map(|_| normal.sample(rng)).collect()
}
