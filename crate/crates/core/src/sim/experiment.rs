use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::central;
use super::config::{EffectivePlan, ExperimentConfig};
use super::metrics::{rank_of, RankingSummary, RoundMetrics};
use crate::client::{
    build_local_graph, local_train, mix_personalized, prepare_neighbor_request, ClientData, ClientUpdate,
    ItemHasher, LocalState, PersonalizationWeights, TrainSettings,
};
use crate::dataset::{
    leave_one_out_split, load_interactions, load_keyed_attributes, planted_blocks, sample_eval_negatives,
    AttributeTable, BlockDatasetConfig, Dataset, InteractionFormat, SplitDataset, TrainingData,
};
use crate::error::{Error, Result};
use crate::math::RandomStream;
use crate::model::{
    init_user_embedding, score_items, user_final_embedding, LocalContext, LocalGraph, ModelDims, ParamLayout,
    SharedParams,
};
use crate::server::{aggregate, build_neighbor_index, kmeans_cluster, select_participants, ClusterAssignment};

/// Substream tags under the run seed.
pub(crate) mod stream {
    pub const INIT_PARAMS: u64 = 1;
    pub const USER_INIT: u64 = 2;
    pub const HASH_KEY: u64 = 3;
    pub const EXCHANGE: u64 = 4;
    pub const TOKENS: u64 = 5;
    pub const CLUSTER: u64 = 6;
    pub const SELECT: u64 = 7;
    pub const TRAIN: u64 = 8;
    pub const EVAL_NEGATIVES: u64 = 9;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    pub dropped_users: usize,
}

impl DatasetStats {
    pub fn of(d: &Dataset) -> Self {
        Self {
            n_users: d.n_users,
            n_items: d.n_items,
            n_interactions: d.interactions.len(),
            dropped_users: d.dropped_users,
        }
    }
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub plan: EffectivePlan,
    pub dataset: DatasetStats,
    /// Validation metrics per round.
    pub rounds: Vec<RoundMetrics>,
    /// Final test metrics.
    pub test: RankingSummary,
    pub wall_time_secs: f64,
    /// Final global shared parameters.
    pub global: SharedParams,
    /// Final cluster of every user (all zero without clustering).
    pub clusters: Vec<usize>,
}

/// Parses `synthetic[:USERSxITEMSxBLOCKS]`.
pub fn synthetic_spec(dataset: &str) -> Result<Option<BlockDatasetConfig>> {
    let Some(rest) = dataset.strip_prefix("synthetic") else {
        return Ok(None);
    };
    let mut cfg = BlockDatasetConfig::default();
    if rest.is_empty() {
        return Ok(Some(cfg));
    }
    let bad = || Error::Config(format!("expected synthetic:USERSxITEMSxBLOCKS, got {dataset:?}"));
    let dims: Vec<usize> = rest
        .strip_prefix(':')
        .ok_or_else(bad)?
        .split('x')
        .map(|p| p.parse().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [users, items, blocks] = dims[..] else {
        return Err(bad());
    };
    cfg.n_users = users;
    cfg.n_items = items;
    cfg.n_blocks = blocks;
    Ok(Some(cfg))
}

/// Loads the dataset named by the config. Synthetic data is seeded with the
/// run seed.
pub fn load_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    let mut data = match synthetic_spec(&config.dataset)? {
        Some(cfg) => planted_blocks(&cfg, config.seed)?,
        None => load_interactions(&config.dataset, InteractionFormat::TsvRating)?,
    };
    if let Some(path) = &config.user_attrs {
        let t = load_keyed_attributes(path, &data.user_ids)?;
        data = data.with_user_attributes(t)?;
    }
    if let Some(path) = &config.item_attrs {
        let t = load_keyed_attributes(path, &data.item_ids)?;
        data = data.with_item_attributes(t)?;
    }
    Ok(data)
}

/// Loads the configured dataset and runs the experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let data = load_dataset(config)?;
    run_on_dataset(config, &data)
}

/// Runs the experiment on an already loaded dataset, using
/// `config.threads` workers.
pub fn run_on_dataset(config: &ExperimentConfig, data: &Dataset) -> Result<ExperimentReport> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_inner(config, data))
}

fn run_inner(config: &ExperimentConfig, data: &Dataset) -> Result<ExperimentReport> {
    let start = Instant::now();
    let plan = config.plan()?;
    let split = leave_one_out_split(data)?;
    let (user_attrs, item_attrs) = if plan.degenerate_attributes {
        (AttributeTable::ones(data.n_users), AttributeTable::ones(data.n_items))
    } else {
        (data.user_attributes_or_ones(), data.item_attributes_or_ones())
    };
    let root = RandomStream::new(config.seed);
    let negatives: Vec<Vec<usize>> = (0..split.n_users())
        .map(|u| {
            sample_eval_negatives(
                u,
                &split,
                config.eval_negatives,
                &mut root.substream(&[stream::EVAL_NEGATIVES, u as u64]),
            )
        })
        .collect::<Result<_>>()?;
    let dims = ModelDims {
        dim: config.dim,
        user_attr_dim: user_attrs.cols(),
        item_attr_dim: item_attrs.cols(),
        cross_layers: config.cross_layers,
        n_items: data.n_items,
    };
    let env = Env {
        config,
        plan,
        split: &split,
        train: split.training_data(),
        user_attrs: &user_attrs,
        item_attrs: &item_attrs,
        negatives: &negatives,
        layout: Arc::new(ParamLayout::new(dims)),
        root,
    };

    let (rounds, test, global, clusters) = if plan.central {
        let (r, t, g) = central::run(&env)?;
        (r, t, g, vec![0; env.n_users()])
    } else {
        Federation::new(&env)?.run()?
    };
    Ok(ExperimentReport {
        config: config.clone(),
        plan,
        dataset: DatasetStats::of(data),
        rounds,
        test,
        wall_time_secs: start.elapsed().as_secs_f64(),
        global,
        clusters,
    })
}

/// Read-only run inputs shared by the federated and central trainers.
pub(crate) struct Env<'a> {
    pub config: &'a ExperimentConfig,
    pub plan: EffectivePlan,
    pub split: &'a SplitDataset,
    pub train: TrainingData,
    pub user_attrs: &'a AttributeTable,
    pub item_attrs: &'a AttributeTable,
    pub negatives: &'a [Vec<usize>],
    pub layout: Arc<ParamLayout>,
    pub root: RandomStream,
}

impl Env<'_> {
    pub fn n_users(&self) -> usize {
        self.split.n_users()
    }

    pub fn initial_params(&self) -> SharedParams {
        SharedParams::init(self.layout.clone(), &mut self.root.derive(stream::INIT_PARAMS))
    }

    pub fn initial_user_embedding(&self, user: usize) -> Vec<f64> {
        init_user_embedding(
            self.config.dim,
            &mut self.root.substream(&[stream::USER_INIT, user as u64]),
        )
    }

    /// Held-out item for `user` on the validation or test split.
    pub fn held_out(&self, user: usize, test: bool) -> usize {
        if test {
            self.split.test(user).item
        } else {
            self.split.validation(user).item
        }
    }
}

struct Federation<'a> {
    env: &'a Env<'a>,
    hasher: ItemHasher,
    initial: SharedParams,
    global: SharedParams,
    clusters: Vec<SharedParams>,
    assignment: ClusterAssignment,
    states: Vec<LocalState>,
    /// Latest uploaded user embedding per client, the clustering input.
    uploaded: Vec<Vec<f64>>,
    graphs: Vec<LocalGraph>,
}

impl<'a> Federation<'a> {
    fn new(env: &'a Env<'a>) -> Result<Self> {
        let n = env.n_users();
        if env.plan.clusters > n {
            return Err(Error::TooManyClusters {
                k: env.plan.clusters,
                n,
            });
        }
        let initial = env.initial_params();
        let hasher = ItemHasher::from_stream(&mut env.root.derive(stream::HASH_KEY));
        let mut states = Vec::with_capacity(n);
        let mut uploaded = Vec::with_capacity(n);
        let mut graphs = Vec::with_capacity(n);
        for u in 0..n {
            let emb = env.initial_user_embedding(u);
            let graph = LocalGraph::star(env.train.items(u))?;
            let ctx = LocalContext {
                graph: &graph,
                user_attrs: env.user_attrs.row(u),
                item_attrs: env.item_attrs,
                gnn_layers: env.config.gnn_layers,
            };
            uploaded.push(user_final_embedding(&initial, &emb, &ctx)?);
            states.push(LocalState::new(&initial, env.user_attrs.row(u), emb)?);
            graphs.push(graph);
        }
        Ok(Self {
            env,
            hasher,
            global: initial.clone(),
            clusters: vec![initial.clone()],
            initial,
            assignment: ClusterAssignment::single(n),
            states,
            uploaded,
            graphs,
        })
    }

    fn weights(&self) -> PersonalizationWeights {
        self.env.plan.weights
    }

    /// Parameters user `u` trains from and is evaluated with.
    fn personalized(&self, u: usize) -> Result<SharedParams> {
        let local = self.states[u].local_model.as_ref().unwrap_or(&self.initial);
        mix_personalized(local, &self.clusters[self.assignment.assignment[u]], &self.global, self.weights())
    }

    fn run(mut self) -> Result<(Vec<RoundMetrics>, RankingSummary, SharedParams, Vec<usize>)> {
        let mut series = Vec::with_capacity(self.env.config.rounds);
        for round in 1..=self.env.config.rounds {
            let m = self.round(round)?;
            log::info!(
                "round {round}: hr10 {:.4} ndcg10 {:.4} loss {:.4} clusters {:?}",
                m.hr10,
                m.ndcg10,
                m.loss,
                m.cluster_sizes
            );
            series.push(m);
        }
        let test = RankingSummary::from_ranks(&self.ranks(true)?);
        Ok((series, test, self.global, self.assignment.assignment))
    }

    fn round(&mut self, round: usize) -> Result<RoundMetrics> {
        let env = self.env;
        let r = round as u64;
        self.exchange(r)?;
        if env.plan.clusters > 1 && round > 1 {
            self.recluster(r)?;
        }
        let budget = env.config.users_per_round.min(env.n_users());
        let selected = select_participants(&self.assignment, budget, &mut env.root.substream(&[stream::SELECT, r]))?;

        let settings = TrainSettings {
            epochs: env.config.local_epochs,
            lr: env.config.lr,
            l2: env.config.lambda,
            gnn_layers: env.config.gnn_layers,
            noise_scale: env.config.noise_scale,
            keep_local_model: self.weights().local > 0.0,
        };
        let this = &*self;
        let results: Vec<(usize, LocalState, ClientUpdate, f64)> = selected
            .par_iter()
            .map(|&u| {
                let start = this.personalized(u)?;
                let mut state = this.states[u].clone();
                let data = ClientData {
                    graph: &this.graphs[u],
                    user_attrs: env.user_attrs.row(u),
                    item_attrs: env.item_attrs,
                    train_interactions: env.train.interaction_count(u),
                    cluster: this.assignment.assignment[u],
                };
                let mut rng = env.root.substream(&[stream::TRAIN, r, u as u64]);
                let out = local_train(&start, &mut state, data, &settings, &mut rng)?;
                Ok((u, state, out.update, out.mean_loss))
            })
            .collect::<Result<_>>()?;

        let loss = results.iter().map(|r| r.3).sum::<f64>() / results.len() as f64;
        let updates: Vec<&ClientUpdate> = results.iter().map(|r| &r.2).collect();
        self.global = aggregate(updates.iter().copied())?;
        if self.clusters.len() == 1 {
            self.clusters[0] = self.global.clone();
        } else {
            for (k, model) in self.clusters.iter_mut().enumerate() {
                let members: Vec<&ClientUpdate> =
                    updates.iter().copied().filter(|u| u.client_cluster == k).collect();
                if !members.is_empty() {
                    *model = aggregate(members)?;
                }
            }
        }
        for (u, state, update, _) in results {
            self.states[u] = state;
            self.uploaded[u] = update.noised_user_embedding;
        }

        let m = RankingSummary::from_ranks(&self.ranks(false)?);
        Ok(RoundMetrics {
            round,
            hr10: m.hr10,
            ndcg10: m.ndcg10,
            hr20: m.hr20,
            ndcg20: m.ndcg20,
            loss,
            cluster_sizes: self.assignment.sizes(),
        })
    }

    /// Every client publishes its cached raw embedding under hashed items,
    /// then rebuilds its local graph from the server's reply.
    fn exchange(&mut self, r: u64) -> Result<()> {
        let env = self.env;
        let requests: Vec<_> = (0..env.n_users())
            .map(|u| {
                let mut rng = env.root.substream(&[stream::EXCHANGE, r, u as u64]);
                prepare_neighbor_request(&self.states[u], env.train.items(u), &self.hasher, &mut rng, env.config.noise_scale)
            })
            .collect();
        let mut tokens = env.root.substream(&[stream::TOKENS, r]);
        let responses = build_neighbor_index(&requests, env.config.neighbor_cap, &mut tokens);
        let hasher = &self.hasher;
        self.graphs = responses
            .par_iter()
            .enumerate()
            .map(|(u, resp)| build_local_graph(env.train.items(u), resp, hasher, env.config.neighbor_cap))
            .collect::<Result<_>>()?;
        Ok(())
    }

    /// Re-clusters on the uploaded embeddings. Each new cluster starts from
    /// the interaction-weighted mean of its members' previous cluster models.
    fn recluster(&mut self, r: u64) -> Result<()> {
        let env = self.env;
        let mut rng = env.root.substream(&[stream::CLUSTER, r]);
        let next = kmeans_cluster(&self.uploaded, env.plan.clusters, env.config.kmeans_max_iter, &mut rng)?;
        let k = next.n_clusters();
        let old_k = self.clusters.len();
        let mut mass = vec![vec![0.0; old_k]; k];
        for (u, (&new, &old)) in next.assignment.iter().zip(&self.assignment.assignment).enumerate() {
            mass[new][old] += env.train.interaction_count(u) as f64;
        }
        let models = mass
            .iter()
            .map(|row| {
                let updates: Vec<ClientUpdate> = row
                    .iter()
                    .enumerate()
                    .filter(|(_, &w)| w > 0.0)
                    .map(|(c, &w)| ClientUpdate {
                        params: self.clusters[c].clone(),
                        noised_user_embedding: Vec::new(),
                        weight: w,
                        client_cluster: c,
                    })
                    .collect();
                aggregate(&updates)
            })
            .collect::<Result<_>>()?;
        self.clusters = models;
        self.assignment = next;
        Ok(())
    }

    /// Rank of each user's held-out item among its fixed negatives.
    fn ranks(&self, test: bool) -> Result<Vec<usize>> {
        let env = self.env;
        (0..env.n_users())
            .into_par_iter()
            .map(|u| {
                let params = self.personalized(u)?;
                let mut candidates = Vec::with_capacity(env.negatives[u].len() + 1);
                candidates.push(env.held_out(u, test));
                candidates.extend_from_slice(&env.negatives[u]);
                let ctx = LocalContext {
                    graph: &self.graphs[u],
                    user_attrs: env.user_attrs.row(u),
                    item_attrs: env.item_attrs,
                    gnn_layers: env.config.gnn_layers,
                };
                let scores = score_items(&params, &self.states[u].user_embedding, &ctx, &candidates)?;
                crate::math::ensure_finite("candidate scores", &scores)?;
                Ok(rank_of(scores[0], &scores[1..]))
            })
            .collect()
    }
}
