//! Personalized federation against plain federated averaging on planted
//! preference blocks.
//!
//! cargo run --release --example synthetic_federation -- [rounds] [seed] [lr] [local_epochs]

use perfedrec::sim::{run_on_dataset, ExperimentConfig, Mode};
use perfedrec::dataset::{planted_blocks, BlockDatasetConfig};

fn main() -> perfedrec::Result<()> {
    let mut args = std::env::args().skip(1);
    let rounds = args.next().map_or(30, |s| s.parse().expect("rounds"));
    let seed = args.next().map_or(1, |s| s.parse().expect("seed"));
    let lr = args.next().map_or(0.01, |s| s.parse().expect("lr"));
    let local_epochs = args.next().map_or(1, |s| s.parse().expect("local_epochs"));
    let data = planted_blocks(&BlockDatasetConfig::default(), seed)?;
    for mode in [Mode::Perfedrec, Mode::Fedavg] {
        let cfg = ExperimentConfig {
            mode,
            rounds,
            seed,
            lr,
            local_epochs,
            ..ExperimentConfig::default()
        };
        let report = run_on_dataset(&cfg, &data)?;
        let last = report.rounds.last().expect("at least one round");
        println!(
            "{:<10} val hr10 {:.4} ndcg10 {:.4} | test hr10 {:.4} ndcg10 {:.4} | loss {:.4} | clusters {:?} | {:.1}s",
            mode.name(),
            last.hr10,
            last.ndcg10,
            report.test.hr10,
            report.test.ndcg10,
            last.loss,
            last.cluster_sizes,
            report.wall_time_secs
        );
    }
    Ok(())
}
