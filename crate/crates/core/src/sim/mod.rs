//! Experiment orchestration: configuration, the round loop, evaluation and
//! metric files.

mod central;
pub mod config;
pub mod experiment;
pub mod metrics;
pub mod output;

pub use config::{parse_alphas, ConfigOverrides, EffectivePlan, ExperimentConfig, Mode};
pub use experiment::{load_dataset, run_experiment, run_on_dataset, synthetic_spec, DatasetStats, ExperimentReport};
pub use metrics::{
    evaluate, evaluate_ranks, hit_rate_at_k, ndcg_at_k, rank_of, MetricsAtK, RankingSummary, RoundMetrics, UserScores,
};
pub use output::{emit_metrics, read_metrics_csv, write_metrics_csv, write_summary_json, METRICS_FILE, SUMMARY_FILE};
