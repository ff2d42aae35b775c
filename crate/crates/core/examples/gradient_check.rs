//! Compares the hand-written BPR gradients with central finite differences
//! on a small random model.
//!
//! cargo run --example gradient_check -- [seed]

use std::sync::Arc;

use perfedrec::dataset::AttributeTable;
use perfedrec::math::{finite_diff_gradient, DenseVector, RandomStream};
use perfedrec::model::{
    bpr_loss_and_grads_for_pairs, bpr_loss_for_pairs, LocalContext, LocalGraph, ModelDims, ParamLayout, SharedParams,
};

fn main() -> perfedrec::Result<()> {
    let seed = std::env::args().nth(1).map_or(1, |s| s.parse().expect("seed"));
    let mut rng = RandomStream::new(seed);
    let mut r = |scale: f64| (rng.next_f64() * 2.0 - 1.0) * scale;

    let dims = ModelDims { dim: 4, user_attr_dim: 2, item_attr_dim: 3, cross_layers: 2, n_items: 4 };
    let layout = Arc::new(ParamLayout::new(dims));
    let params = SharedParams::from_values(layout.clone(), (0..layout.len()).map(|_| r(0.5)).collect())?;
    let user: Vec<f64> = (0..dims.dim).map(|_| r(0.5)).collect();
    let user_attrs: Vec<f64> = (0..2).map(|_| r(1.0)).collect();
    let item_attrs = AttributeTable::new(4, 3, (0..12).map(|_| r(1.0)).collect())?;
    let mut graph = LocalGraph::star(&[0, 1])?;
    graph.add_neighbor((0..dims.raw_dim()).map(|_| r(0.5)).collect(), &[1])?;
    let ctx = LocalContext { graph: &graph, user_attrs: &user_attrs, item_attrs: &item_attrs, gnn_layers: 2 };
    let pairs = [(0, 2), (1, 3)];

    let out = bpr_loss_and_grads_for_pairs(&params, &user, &ctx, &pairs, 1e-4)?;
    let n = layout.len();
    let mut packed = params.values().to_vec();
    packed.extend_from_slice(&user);
    let numeric = finite_diff_gradient(
        |p| {
            let params = SharedParams::from_values(layout.clone(), p[..n].to_vec()).expect("layout");
            bpr_loss_for_pairs(&params, &p[n..], &ctx, &pairs, 1e-4).expect("finite loss")
        },
        &DenseVector::new(packed)?,
        1e-6,
    )?;

    let mut analytic = out.params.values().to_vec();
    analytic.extend_from_slice(&out.user_embedding);
    let mut groups: Vec<(&str, std::ops::Range<usize>)> = layout.groups();
    groups.push(("user_embedding", n..n + dims.dim));
    println!("loss {:.6}, {} coordinates", out.loss, analytic.len());
    for (name, range) in groups {
        let worst = range
            .clone()
            .map(|i| (analytic[i] - numeric.as_slice()[i]).abs())
            .fold(0.0, f64::max);
        println!("{name:<18} {:>4} coords  max abs diff {worst:.2e}", range.len());
    }
    Ok(())
}
