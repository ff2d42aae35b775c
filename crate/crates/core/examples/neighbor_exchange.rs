//! Clients discover co-interacting peers through hashed item ids and grow
//! their local graphs with the returned anonymous embeddings.
//!
//! cargo run --example neighbor_exchange -- [neighbor_cap]

use perfedrec::client::{build_local_graph, prepare_neighbor_request, ItemHasher, LocalState};
use perfedrec::dataset::AttributeTable;
use perfedrec::math::RandomStream;
use perfedrec::model::{init_user_embedding, ModelDims, ParamLayout, SharedParams};
use perfedrec::server::build_neighbor_index;
use std::sync::Arc;

fn main() -> perfedrec::Result<()> {
    let cap = std::env::args().nth(1).map_or(10, |s| s.parse().expect("neighbor_cap"));
    let histories: [&[usize]; 4] = [&[0, 1, 2], &[1, 2, 3], &[3, 4], &[5]];

    let dims = ModelDims { dim: 4, user_attr_dim: 1, item_attr_dim: 1, cross_layers: 1, n_items: 6 };
    let root = RandomStream::new(3);
    let params = SharedParams::init(Arc::new(ParamLayout::new(dims)), &mut root.derive(0));
    let attrs = AttributeTable::ones(histories.len());
    let hasher = ItemHasher::from_stream(&mut root.derive(1));

    let requests: Vec<_> = histories
        .iter()
        .enumerate()
        .map(|(u, items)| {
            let embedding = init_user_embedding(dims.dim, &mut root.substream(&[2, u as u64]));
            let state = LocalState::new(&params, attrs.row(u), embedding)?;
            Ok(prepare_neighbor_request(&state, items, &hasher, &mut root.substream(&[3, u as u64]), 0.1))
        })
        .collect::<perfedrec::Result<_>>()?;
    let responses = build_neighbor_index(&requests, cap, &mut root.derive(4));

    for (u, (items, response)) in histories.iter().zip(&responses).enumerate() {
        let graph = build_local_graph(items, response, &hasher, cap)?;
        println!(
            "client {u}: items {items:?}, {} matched hashes, {} neighbors, {} nodes",
            response.entries.len(),
            graph.neighbor_embeddings().len(),
            graph.n_nodes()
        );
    }
    Ok(())
}
