//! Per-client round logic: personalized mixing, local training, and the
//! client side of the neighbor exchange.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use siphasher::sip::SipHasher24;

use crate::dataset::AttributeTable;
use crate::error::{Error, Result};
use crate::math::RandomStream;
use crate::model::{
    bpr_loss_and_grads, user_final_embedding, user_raw_embedding, LocalContext, LocalGraph, SharedParams,
};

/// Convex weights of the local, cluster and global models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonalizationWeights {
    pub local: f64,
    pub cluster: f64,
    pub global: f64,
}

impl PersonalizationWeights {
    /// Plain federated averaging: every client uses the global model.
    pub const GLOBAL_ONLY: Self = Self {
        local: 0.0,
        cluster: 0.0,
        global: 1.0,
    };

    pub fn new(local: f64, cluster: f64, global: f64) -> Result<Self> {
        let w = Self { local, cluster, global };
        w.validate()?;
        Ok(w)
    }

    pub fn uniform() -> Self {
        Self {
            local: 1.0 / 3.0,
            cluster: 1.0 / 3.0,
            global: 1.0 / 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.local, self.cluster, self.global];
        if all.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::InvalidArgument(format!("personalization weights must be non-negative: {all:?}")));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("personalization weights must sum to 1: {all:?}")));
        }
        Ok(())
    }
}

impl Default for PersonalizationWeights {
    fn default() -> Self {
        Self::uniform()
    }
}

/// `local * w.local + cluster * w.cluster + global * w.global`, elementwise
/// over every parameter group including the item embedding table.
pub fn mix_personalized(
    local: &SharedParams,
    cluster: &SharedParams,
    global: &SharedParams,
    w: PersonalizationWeights,
) -> Result<SharedParams> {
    if !local.same_layout(cluster) || !local.same_layout(global) {
        return Err(Error::LayoutMismatch);
    }
    let mut out = global.clone();
    for ((o, l), c) in out.values_mut().iter_mut().zip(local.values()).zip(cluster.values()) {
        *o = w.local * l + w.cluster * c + w.global * *o;
    }
    Ok(out)
}

/// Run-wide keyed hash standing in for item id encryption.
///
/// This is SipHash-2-4 under a key shared by all clients. It lets the server
/// join clients on equal items without seeing raw ids, but it is a simulation
/// device only: anyone holding the key can brute-force the small id space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ItemHasher {
    key: (u64, u64),
}

impl ItemHasher {
    pub fn new(key: (u64, u64)) -> Self {
        Self { key }
    }

    pub fn from_stream(rng: &mut RandomStream) -> Self {
        Self::new((rng.next_u64(), rng.next_u64()))
    }

    pub fn hash(&self, item: usize) -> u64 {
        use std::hash::Hasher;
        let mut h = SipHasher24::new_with_keys(self.key.0, self.key.1);
        h.write_u64(item as u64);
        h.finish()
    }
}

/// What a client sends to the server for neighbor discovery.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborRequest {
    pub item_hashes: Vec<u64>,
    /// Noised raw user embedding.
    pub embedding: Arc<[f64]>,
}

/// Another client's published embedding, identified only by a per-round
/// random token.
#[derive(Debug, Clone, PartialEq)]
pub struct AnonymousNeighbor {
    pub token: u64,
    pub embedding: Arc<[f64]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborEntry {
    pub item_hash: u64,
    pub neighbors: Vec<AnonymousNeighbor>,
}

/// Server reply: for each of the requester's item hashes, co-interacting
/// clients' embeddings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeighborResponse {
    pub entries: Vec<NeighborEntry>,
}

/// One client's private state between participations.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalState {
    /// Private ID embedding; never leaves the client un-noised.
    pub user_embedding: Vec<f64>,
    /// Raw embedding published in neighbor requests, before noise.
    pub raw_embedding: Vec<f64>,
    /// Post-training parameters from the last participation; `None` means the
    /// initial parameters.
    pub local_model: Option<SharedParams>,
}

impl LocalState {
    pub fn new(params: &SharedParams, user_attrs: &[f64], user_embedding: Vec<f64>) -> Result<Self> {
        let raw_embedding = user_raw_embedding(params, user_attrs, &user_embedding)?;
        Ok(Self {
            user_embedding,
            raw_embedding,
            local_model: None,
        })
    }
}

/// A participant's round output as seen by the server.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub params: SharedParams,
    /// Noised propagated user embedding, used for clustering.
    pub noised_user_embedding: Vec<f64>,
    /// Aggregation mass: the client's number of training interactions.
    pub weight: f64,
    pub client_cluster: usize,
}

/// Hashes the client's items and attaches its noised raw embedding.
pub fn prepare_neighbor_request(
    state: &LocalState,
    train_items: &[usize],
    hasher: &ItemHasher,
    rng: &mut RandomStream,
    noise_scale: f64,
) -> NeighborRequest {
    NeighborRequest {
        item_hashes: train_items.iter().map(|&i| hasher.hash(i)).collect(),
        embedding: add_laplace_noise(&state.raw_embedding, noise_scale, rng).into(),
    }
}

fn add_laplace_noise(values: &[f64], scale: f64, rng: &mut RandomStream) -> Vec<f64> {
    if scale == 0.0 {
        return values.to_vec();
    }
    values.iter().map(|v| v + rng.laplace(scale)).collect()
}

/// Expands the client's star graph with up to `neighbor_cap` anonymous
/// neighbors, taken in response order. A neighbor seen under several items is
/// one node linked to all of them.
pub fn build_local_graph(
    train_items: &[usize],
    response: &NeighborResponse,
    hasher: &ItemHasher,
    neighbor_cap: usize,
) -> Result<LocalGraph> {
    let mut graph = LocalGraph::star(train_items)?;
    let position_of: HashMap<u64, usize> = graph
        .items()
        .iter()
        .enumerate()
        .map(|(pos, &item)| (hasher.hash(item), pos))
        .collect();

    let mut order: Vec<u64> = Vec::new();
    let mut links: HashMap<u64, (Arc<[f64]>, Vec<usize>)> = HashMap::new();
    for entry in &response.entries {
        let Some(&pos) = position_of.get(&entry.item_hash) else {
            continue;
        };
        for n in &entry.neighbors {
            if let Some((_, items)) = links.get_mut(&n.token) {
                if !items.contains(&pos) {
                    items.push(pos);
                }
            } else if order.len() < neighbor_cap {
                order.push(n.token);
                links.insert(n.token, (n.embedding.clone(), vec![pos]));
            }
        }
    }
    for token in order {
        let (embedding, items) = links.remove(&token).expect("registered token");
        graph.add_neighbor(embedding.to_vec(), &items)?;
    }
    Ok(graph)
}

/// Local optimisation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub gnn_layers: usize,
    pub noise_scale: f64,
    /// Whether to keep the trained parameters as the client's local model.
    pub keep_local_model: bool,
}

/// Client-side inputs for one training run.
#[derive(Debug, Clone, Copy)]
pub struct ClientData<'a> {
    pub graph: &'a LocalGraph,
    pub user_attrs: &'a [f64],
    pub item_attrs: &'a AttributeTable,
    pub train_interactions: usize,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub update: ClientUpdate,
    /// Mean per-pair BPR loss over the epochs, measured before each step.
    pub mean_loss: f64,
}

/// Runs `epochs` full-batch BPR steps from `start`, updating the private user
/// embedding in `state`, and packages the upload.
pub fn local_train(
    start: &SharedParams,
    state: &mut LocalState,
    data: ClientData<'_>,
    settings: &TrainSettings,
    rng: &mut RandomStream,
) -> Result<TrainOutcome> {
    if data.graph.items().is_empty() {
        return Err(Error::InvalidArgument("local graph has no positives".into()));
    }
    let ctx = LocalContext {
        graph: data.graph,
        user_attrs: data.user_attrs,
        item_attrs: data.item_attrs,
        gnn_layers: settings.gnn_layers,
    };
    let mut params = start.clone();
    let mut pair_rng = rng.derive(0);
    let mut total_loss = 0.0;
    for _ in 0..settings.epochs {
        let step = bpr_loss_and_grads(&params, &state.user_embedding, &ctx, settings.l2, &mut pair_rng)?;
        total_loss += step.loss / data.graph.items().len() as f64;
        params.sgd_step(&step.params, settings.lr)?;
        for (u, g) in state.user_embedding.iter_mut().zip(&step.user_embedding) {
            *u -= settings.lr * g;
        }
    }
    params.ensure_finite()?;
    crate::math::ensure_finite("user embedding", &state.user_embedding)?;

    let user_final = user_final_embedding(&params, &state.user_embedding, &ctx)?;
    let noised_user_embedding = add_laplace_noise(&user_final, settings.noise_scale, &mut rng.derive(1));
    state.raw_embedding = user_raw_embedding(&params, data.user_attrs, &state.user_embedding)?;
    state.local_model = settings.keep_local_model.then(|| params.clone());

    Ok(TrainOutcome {
        update: ClientUpdate {
            params,
            noised_user_embedding,
            weight: data.train_interactions.max(1) as f64,
            client_cluster: data.cluster,
        },
        mean_loss: if settings.epochs == 0 {
            0.0
        } else {
            total_loss / settings.epochs as f64
        },
    })
}
