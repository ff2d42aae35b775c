use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use perfedrec::sim::{emit_metrics, parse_alphas, run_experiment, ConfigOverrides, Mode};
use perfedrec::{Error, Result};

/// Run a personalized federated recommendation experiment.
#[derive(Debug, Parser)]
#[command(name = "perfedrec", version)]
struct Cli {
    /// Flat key=value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// perfedrec, fedavg, central, var1_no_personalization, var2_no_features or var3_no_clustering.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Tab-separated user, item, rating, timestamp file, or synthetic[:USERSxITEMSxBLOCKS].
    #[arg(long)]
    dataset: Option<String>,
    /// CSV of `user_id,feature...` rows.
    #[arg(long)]
    user_attrs: Option<PathBuf>,
    /// CSV of `item_id,feature...` rows.
    #[arg(long)]
    item_attrs: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    cross_layers: Option<usize>,
    #[arg(long)]
    gnn_layers: Option<usize>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    users_per_round: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Local, cluster and global mixing weights, e.g. 0.2,0.3,0.5.
    #[arg(long, value_parser = parse_alpha_flag)]
    alphas: Option<[f64; 3]>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    noise_scale: Option<f64>,
    #[arg(long)]
    neighbor_cap: Option<usize>,
    #[arg(long)]
    local_epochs: Option<usize>,
    /// Output directory for metrics.csv and summary.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_alpha_flag(s: &str) -> std::result::Result<[f64; 3], String> {
    parse_alphas(s).map_err(|e| e.to_string())
}

impl Cli {
    fn overrides(self) -> Result<ConfigOverrides> {
        let base = match &self.config {
            Some(path) => ConfigOverrides::from_file(path)?,
            None => ConfigOverrides::default(),
        };
        let flags = ConfigOverrides {
            mode: self.mode,
            dataset: self.dataset,
            user_attrs: self.user_attrs,
            item_attrs: self.item_attrs,
            dim: self.dim,
            cross_layers: self.cross_layers,
            gnn_layers: self.gnn_layers,
            clusters: self.clusters,
            users_per_round: self.users_per_round,
            lr: self.lr,
            rounds: self.rounds,
            seed: self.seed,
            alphas: self.alphas,
            lambda: self.lambda,
            noise_scale: self.noise_scale,
            neighbor_cap: self.neighbor_cap,
            local_epochs: self.local_epochs,
            eval_negatives: None,
            out: self.out,
            threads: self.threads,
        };
        Ok(base.overlay(flags))
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = cli.overrides()?.resolve()?;
    let report = run_experiment(&config)?;
    let t = &report.test;
    println!(
        "{} test: hr10 {:.4} ndcg10 {:.4} hr20 {:.4} ndcg20 {:.4} ({:.1}s)",
        config.mode, t.hr10, t.ndcg10, t.hr20, t.ndcg20, report.wall_time_secs
    );
    if let Some(dir) = &config.out {
        let (csv, json) = emit_metrics(&report, dir)?;
        println!("wrote {} and {}", csv.display(), json.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
