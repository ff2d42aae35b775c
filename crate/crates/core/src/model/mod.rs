//! User-side recommendation network.

mod embed;
mod graph;
mod loss;
mod network;
mod params;

pub use embed::{attention_combine, attention_weights, attr_embed, feature_crossing, item_bundle, user_bundle, EmbeddingBundle};
pub use graph::{lightgcn_propagate, Adjacency, LocalGraph};
pub use loss::{
    bpr_loss_and_grads, bpr_loss_and_grads_for_pairs, bpr_loss_for_pairs, bpr_pair, sample_training_pairs, score_items,
    user_final_embedding, user_raw_embedding, LocalContext, LossAndGrads, PairGrads, DEFAULT_L2,
};
pub use params::{init_user_embedding, ModelDims, ParamGrads, ParamLayout, Pathway, SharedParams};

pub(crate) use network::{backward, forward, NodeInput};
