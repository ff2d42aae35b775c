//! Personalized federation against federated averaging on a MovieLens-100k
//! style `user item rating timestamp` file.
//!
//! cargo run --release --example movielens -- path/to/u.data [rounds] [seed]

use perfedrec::sim::{load_dataset, run_on_dataset, DatasetStats, ExperimentConfig, Mode};

fn main() -> perfedrec::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().expect("usage: movielens <u.data> [rounds] [seed]");
    let rounds = args.next().map_or(200, |s| s.parse().expect("rounds"));
    let seed = args.next().map_or(0, |s| s.parse().expect("seed"));
    let base = ExperimentConfig { dataset: path, rounds, seed, ..Default::default() };
    let data = load_dataset(&base)?;
    println!("{:?}", DatasetStats::of(&data));
    for mode in [Mode::Perfedrec, Mode::Fedavg] {
        let report = run_on_dataset(&ExperimentConfig { mode, ..base.clone() }, &data)?;
        println!(
            "{:<10} hr10 {:.4} ndcg10 {:.4} | {:.0}s",
            mode.name(),
            report.test.hr10,
            report.test.ndcg10,
            report.wall_time_secs
        );
    }
    Ok(())
}
