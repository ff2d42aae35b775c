//! Every training mode on the same planted-block dataset.
//!
//! cargo run --release --example ablation -- [rounds] [seed] [lr]

use perfedrec::dataset::{planted_blocks, BlockDatasetConfig};
use perfedrec::sim::{run_on_dataset, ExperimentConfig, Mode};

fn main() -> perfedrec::Result<()> {
    let mut args = std::env::args().skip(1);
    let rounds = args.next().map_or(30, |s| s.parse().expect("rounds"));
    let seed = args.next().map_or(1, |s| s.parse().expect("seed"));
    let lr = args.next().map_or(0.05, |s| s.parse().expect("lr"));
    let data = planted_blocks(&BlockDatasetConfig { with_attributes: true, ..Default::default() }, seed)?;
    println!("{:<26} {:>7} {:>7} {:>7} {:>7}", "mode", "hr10", "ndcg10", "hr20", "ndcg20");
    for mode in Mode::ALL {
        let cfg = ExperimentConfig { mode, rounds, seed, lr, ..Default::default() };
        let t = run_on_dataset(&cfg, &data)?.test;
        println!("{:<26} {:>7.4} {:>7.4} {:>7.4} {:>7.4}", mode.name(), t.hr10, t.ndcg10, t.hr20, t.ndcg20);
    }
    Ok(())
}
