use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::client::PersonalizationWeights;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Perfedrec,
    Fedavg,
    Central,
    /// Personalization removed: every client uses the global model.
    Var1NoPersonalization,
    /// Attribute pathway fed with all-ones attributes.
    Var2NoFeatures,
    /// Single cluster and uniform selection, personalization kept.
    Var3NoClustering,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Perfedrec,
        Mode::Fedavg,
        Mode::Central,
        Mode::Var1NoPersonalization,
        Mode::Var2NoFeatures,
        Mode::Var3NoClustering,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Perfedrec => "perfedrec",
            Mode::Fedavg => "fedavg",
            Mode::Central => "central",
            Mode::Var1NoPersonalization => "var1_no_personalization",
            Mode::Var2NoFeatures => "var2_no_features",
            Mode::Var3NoClustering => "var3_no_clustering",
        }
    }

    /// Whether the mode forces the global-only mixing weights.
    fn forces_global_only(self) -> bool {
        matches!(self, Mode::Fedavg | Mode::Var1NoPersonalization)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Interaction file path, or `synthetic[:USERSxITEMSxBLOCKS]`.
    pub dataset: String,
    pub user_attrs: Option<PathBuf>,
    pub item_attrs: Option<PathBuf>,
    pub dim: usize,
    pub cross_layers: usize,
    pub gnn_layers: usize,
    pub clusters: usize,
    pub users_per_round: usize,
    pub lr: f64,
    pub rounds: usize,
    pub seed: u64,
    pub alphas: [f64; 3],
    pub lambda: f64,
    pub noise_scale: f64,
    pub neighbor_cap: usize,
    pub local_epochs: usize,
    pub eval_negatives: usize,
    pub kmeans_max_iter: usize,
    pub out: Option<PathBuf>,
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Perfedrec,
            dataset: "synthetic".into(),
            user_attrs: None,
            item_attrs: None,
            dim: 64,
            cross_layers: 2,
            gnn_layers: 2,
            clusters: 5,
            users_per_round: 128,
            lr: 0.01,
            rounds: 200,
            seed: 0,
            alphas: [1.0 / 3.0; 3],
            lambda: 1e-4,
            noise_scale: 0.0,
            neighbor_cap: 10,
            local_epochs: 1,
            eval_negatives: 100,
            kmeans_max_iter: 100,
            out: None,
            threads: 1,
        }
    }
}

/// What a mode actually runs with once its forced settings are applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectivePlan {
    pub central: bool,
    /// Number of k-means clusters; 1 disables clustering.
    pub clusters: usize,
    pub weights: PersonalizationWeights,
    pub degenerate_attributes: bool,
}

impl ExperimentConfig {
    pub fn weights(&self) -> Result<PersonalizationWeights> {
        PersonalizationWeights::new(self.alphas[0], self.alphas[1], self.alphas[2])
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn plan(&self) -> Result<EffectivePlan> {
        let weights = if self.mode.forces_global_only() {
            PersonalizationWeights::GLOBAL_ONLY
        } else {
            self.weights()?
        };
        let clusters = match self.mode {
            Mode::Perfedrec | Mode::Var2NoFeatures => self.clusters,
            _ => 1,
        };
        Ok(EffectivePlan {
            central: self.mode == Mode::Central,
            clusters,
            weights,
            degenerate_attributes: self.mode == Mode::Var2NoFeatures,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("clusters", self.clusters),
            ("users-per-round", self.users_per_round),
            ("rounds", self.rounds),
            ("neighbor-cap", self.neighbor_cap),
            ("local-epochs", self.local_epochs),
            ("eval-negatives", self.eval_negatives),
            ("kmeans-max-iter", self.kmeans_max_iter),
            ("threads", self.threads),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, v) in [("lr", self.lr), ("lambda", self.lambda), ("noise-scale", self.noise_scale)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be a finite non-negative number")));
            }
        }
        self.weights()?;
        Ok(())
    }
}

/// Optional settings from a config file or command line, before defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub mode: Option<Mode>,
    pub dataset: Option<String>,
    pub user_attrs: Option<PathBuf>,
    pub item_attrs: Option<PathBuf>,
    pub dim: Option<usize>,
    pub cross_layers: Option<usize>,
    pub gnn_layers: Option<usize>,
    pub clusters: Option<usize>,
    pub users_per_round: Option<usize>,
    pub lr: Option<f64>,
    pub rounds: Option<usize>,
    pub seed: Option<u64>,
    pub alphas: Option<[f64; 3]>,
    pub lambda: Option<f64>,
    pub noise_scale: Option<f64>,
    pub neighbor_cap: Option<usize>,
    pub local_epochs: Option<usize>,
    pub eval_negatives: Option<usize>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

/// Parses `a,b,c` mixing weights.
pub fn parse_alphas(value: &str) -> Result<[f64; 3]> {
    let parts: Vec<f64> = value
        .split(',')
        .map(|p| parse::<f64>("alphas", p))
        .collect::<Result<_>>()?;
    <[f64; 3]>::try_from(parts).map_err(|_| Error::Config(format!("alphas needs three values, got {value:?}")))
}

impl ConfigOverrides {
    /// Sets one `key=value` pair; keys use the flag spelling without dashes
    /// prefix (`users-per-round`), underscores also accepted.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        let v = value.trim();
        match key.as_str() {
            "mode" => self.mode = Some(v.parse()?),
            "dataset" => self.dataset = Some(v.to_owned()),
            "user-attrs" => self.user_attrs = Some(v.into()),
            "item-attrs" => self.item_attrs = Some(v.into()),
            "dim" => self.dim = Some(parse(&key, v)?),
            "cross-layers" => self.cross_layers = Some(parse(&key, v)?),
            "gnn-layers" => self.gnn_layers = Some(parse(&key, v)?),
            "clusters" => self.clusters = Some(parse(&key, v)?),
            "users-per-round" => self.users_per_round = Some(parse(&key, v)?),
            "lr" => self.lr = Some(parse(&key, v)?),
            "rounds" => self.rounds = Some(parse(&key, v)?),
            "seed" => self.seed = Some(parse(&key, v)?),
            "alphas" => self.alphas = Some(parse_alphas(v)?),
            "lambda" => self.lambda = Some(parse(&key, v)?),
            "noise-scale" => self.noise_scale = Some(parse(&key, v)?),
            "neighbor-cap" => self.neighbor_cap = Some(parse(&key, v)?),
            "local-epochs" => self.local_epochs = Some(parse(&key, v)?),
            "eval-negatives" => self.eval_negatives = Some(parse(&key, v)?),
            "out" => self.out = Some(v.into()),
            "threads" => self.threads = Some(parse(&key, v)?),
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Reads a flat `key=value` file. Blank lines and `#` comments are skipped.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut out = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{}:{}: expected key=value", path.display(), i + 1)))?;
            out.set(k, v)?;
        }
        Ok(out)
    }

    /// Fields set in `other` win.
    pub fn overlay(self, other: ConfigOverrides) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { Self { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            mode, dataset, user_attrs, item_attrs, dim, cross_layers, gnn_layers, clusters, users_per_round, lr,
            rounds, seed, alphas, lambda, noise_scale, neighbor_cap, local_epochs, eval_negatives, out, threads
        )
    }

    /// Applies defaults and rejects settings the chosen mode cannot honour.
    pub fn resolve(self) -> Result<ExperimentConfig> {
        let mode = self.mode.unwrap_or(Mode::Perfedrec);
        let conflicts: Vec<&str> = match mode {
            Mode::Central => [
                ("clusters", self.clusters.is_some()),
                ("alphas", self.alphas.is_some()),
                ("users-per-round", self.users_per_round.is_some()),
                ("neighbor-cap", self.neighbor_cap.is_some()),
                ("noise-scale", self.noise_scale.is_some()),
            ]
            .into_iter()
            .filter_map(|(k, set)| set.then_some(k))
            .collect(),
            Mode::Fedavg | Mode::Var1NoPersonalization => [("clusters", self.clusters.is_some()), ("alphas", self.alphas.is_some())]
                .into_iter()
                .filter_map(|(k, set)| set.then_some(k))
                .collect(),
            Mode::Var3NoClustering => [("clusters", self.clusters.is_some())]
                .into_iter()
                .filter_map(|(k, set)| set.then_some(k))
                .collect(),
            Mode::Perfedrec | Mode::Var2NoFeatures => Vec::new(),
        };
        if !conflicts.is_empty() {
            return Err(Error::Config(format!(
                "mode {mode} does not accept: {}",
                conflicts.join(", ")
            )));
        }
        let d = ExperimentConfig::default();
        let cfg = ExperimentConfig {
            mode,
            dataset: self.dataset.unwrap_or(d.dataset),
            user_attrs: self.user_attrs,
            item_attrs: self.item_attrs,
            dim: self.dim.unwrap_or(d.dim),
            cross_layers: self.cross_layers.unwrap_or(d.cross_layers),
            gnn_layers: self.gnn_layers.unwrap_or(d.gnn_layers),
            clusters: self.clusters.unwrap_or(d.clusters),
            users_per_round: self.users_per_round.unwrap_or(d.users_per_round),
            lr: self.lr.unwrap_or(d.lr),
            rounds: self.rounds.unwrap_or(d.rounds),
            seed: self.seed.unwrap_or(d.seed),
            alphas: self.alphas.unwrap_or(d.alphas),
            lambda: self.lambda.unwrap_or(d.lambda),
            noise_scale: self.noise_scale.unwrap_or(d.noise_scale),
            neighbor_cap: self.neighbor_cap.unwrap_or(d.neighbor_cap),
            local_epochs: self.local_epochs.unwrap_or(d.local_epochs),
            eval_negatives: self.eval_negatives.unwrap_or(d.eval_negatives),
            kmeans_max_iter: d.kmeans_max_iter,
            out: self.out,
            threads: self.threads.unwrap_or(d.threads),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_settings() {
        let c = ConfigOverrides::default().resolve().unwrap();
        assert_eq!(c.dim, 64);
        assert_eq!(c.cross_layers, 2);
        assert_eq!(c.gnn_layers, 2);
        assert_eq!(c.clusters, 5);
        assert_eq!(c.users_per_round, 128);
        assert_eq!(c.lr, 0.01);
        assert_eq!(c.alphas, [1.0 / 3.0; 3]);
        assert_eq!(c.lambda, 1e-4);
        assert_eq!(c.noise_scale, 0.0);
        assert_eq!(c.neighbor_cap, 10);
        assert_eq!(c.eval_negatives, 100);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        }
        assert!("fedprox".parse::<Mode>().is_err());
    }

    #[test]
    fn contradictions_are_rejected() {
        let mut o = ConfigOverrides::default();
        o.set("mode", "central").unwrap();
        o.set("clusters", "3").unwrap();
        assert!(matches!(o.resolve(), Err(Error::Config(_))));

        let mut o = ConfigOverrides::default();
        o.set("mode", "fedavg").unwrap();
        o.set("alphas", "0.5,0.25,0.25").unwrap();
        assert!(o.resolve().is_err());

        let mut o = ConfigOverrides::default();
        o.set("alphas", "0.5,0.5,0.5").unwrap();
        assert!(o.resolve().is_err());
        assert!(ConfigOverrides::default().set("alphas", "1,0").is_err());
        assert!(ConfigOverrides::default().set("bogus", "1").is_err());
    }

    #[test]
    fn plans_reflect_modes() {
        let base = ExperimentConfig::default();
        let plan = |mode| ExperimentConfig { mode, ..base.clone() }.plan().unwrap();
        assert_eq!(plan(Mode::Perfedrec).clusters, 5);
        assert_eq!(plan(Mode::Fedavg), plan(Mode::Var1NoPersonalization));
        assert_eq!(plan(Mode::Fedavg).weights, PersonalizationWeights::GLOBAL_ONLY);
        assert_eq!(plan(Mode::Var3NoClustering).clusters, 1);
        assert_eq!(plan(Mode::Var3NoClustering).weights, PersonalizationWeights::uniform());
        assert!(plan(Mode::Var2NoFeatures).degenerate_attributes);
        assert!(plan(Mode::Central).central);
    }

    #[test]
    fn file_values_are_overridden_by_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "# comment\nrounds=7\nlr = 0.5\nusers_per_round=3\n").unwrap();
        let file = ConfigOverrides::from_file(&path).unwrap();
        let flags = ConfigOverrides {
            lr: Some(0.25),
            ..Default::default()
        };
        let c = file.overlay(flags).resolve().unwrap();
        assert_eq!((c.rounds, c.lr, c.users_per_round), (7, 0.25, 3));
    }
}
