mod common;

use common::{grad_close, GradInstance};
use perfedrec::math::RandomStream;
use perfedrec::model::{bpr_loss_and_grads_for_pairs, bpr_loss_for_pairs, SharedParams};

#[test]
fn analytic_gradients_match_finite_differences() {
    for seed in [1, 2, 3, 4, 5] {
        let inst = GradInstance::new(seed);
        let (loss, analytic) = inst.analytic();
        assert!((loss - inst.loss_at(&inst.packed())).abs() < 1e-12);
        let numeric = inst.numeric(1e-6);
        let groups = inst.coordinate_groups();
        for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            assert!(
                grad_close(*a, *n, 1e-4, 1e-7),
                "seed {seed} coord {i} ({}): analytic {a} vs numeric {n}",
                groups[i]
            );
        }
    }
}

#[test]
fn every_parameter_group_receives_gradient() {
    let inst = GradInstance::new(7);
    let (_, analytic) = inst.analytic();
    let groups = inst.coordinate_groups();
    for name in ["user_attr_weight", "user_cross", "user_gates", "item_attr_weight", "item_cross", "item_gates", "item_embeddings", "user_embedding"] {
        let touched = groups
            .iter()
            .zip(&analytic)
            .any(|(g, v)| *g == name && v.abs() > 1e-9);
        assert!(touched, "{name} has no gradient signal");
    }
}

#[test]
fn small_step_decreases_loss() {
    let inst = GradInstance::new(11);
    let out = bpr_loss_and_grads_for_pairs(&inst.params, &inst.user_embedding, &inst.ctx(), &inst.pairs, inst.l2)
        .unwrap();
    let mut stepped = inst.params.clone();
    stepped.sgd_step(&out.params, 1e-3).unwrap();
    let user: Vec<f64> = inst
        .user_embedding
        .iter()
        .zip(&out.user_embedding)
        .map(|(u, g)| u - 1e-3 * g)
        .collect();
    let after = bpr_loss_for_pairs(&stepped, &user, &inst.ctx(), &inst.pairs, inst.l2).unwrap();
    assert!(after < out.loss, "{after} !< {}", out.loss);
}

#[test]
fn gradients_hold_with_deeper_crossing_and_propagation() {
    // Same oracle on a larger configuration: L = 2 crossing, 2 GNN layers.
    use perfedrec::dataset::AttributeTable;
    use perfedrec::math::{finite_diff_gradient, DenseVector};
    use perfedrec::model::{LocalContext, LocalGraph, ModelDims, ParamLayout};
    use std::sync::Arc;

    let mut rng = RandomStream::new(99);
    let mut r = |s: f64| (rng.next_f64() * 2.0 - 1.0) * s;
    let dims = ModelDims { dim: 3, user_attr_dim: 2, item_attr_dim: 2, cross_layers: 2, n_items: 5 };
    let layout = Arc::new(ParamLayout::new(dims));
    let params = SharedParams::from_values(layout.clone(), (0..layout.len()).map(|_| r(0.5)).collect()).unwrap();
    let user: Vec<f64> = (0..3).map(|_| r(0.5)).collect();
    let ua: Vec<f64> = (0..2).map(|_| r(1.0)).collect();
    let ia = AttributeTable::new(5, 2, (0..10).map(|_| r(1.0)).collect()).unwrap();
    let mut graph = LocalGraph::star(&[0, 1, 2]).unwrap();
    graph.add_neighbor((0..12).map(|_| r(0.5)).collect(), &[0, 2]).unwrap();
    graph.add_neighbor((0..12).map(|_| r(0.5)).collect(), &[1]).unwrap();
    let ctx = LocalContext { graph: &graph, user_attrs: &ua, item_attrs: &ia, gnn_layers: 2 };
    let pairs = [(0, 3), (1, 4), (2, 3)];
    let out = bpr_loss_and_grads_for_pairs(&params, &user, &ctx, &pairs, 1e-4).unwrap();
    let n = layout.len();
    let mut packed = params.values().to_vec();
    packed.extend_from_slice(&user);
    let f = |p: &[f64]| {
        let params = SharedParams::from_values(layout.clone(), p[..n].to_vec()).unwrap();
        bpr_loss_for_pairs(&params, &p[n..], &ctx, &pairs, 1e-4).unwrap()
    };
    let numeric = finite_diff_gradient(f, &DenseVector::new(packed).unwrap(), 1e-6).unwrap();
    let mut analytic = out.params.values().to_vec();
    analytic.extend_from_slice(&out.user_embedding);
    for (i, (a, num)) in analytic.iter().zip(numeric.iter()).enumerate() {
        assert!(grad_close(*a, *num, 1e-4, 1e-7), "coord {i}: {a} vs {num}");
    }
}
