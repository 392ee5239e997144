use std::path::{Path, PathBuf};

use bsdb::ensemble::EnsembleConfig;
use bsdb::episodic::{make_synthetic_domains, BlendConfig, DatasetTable, Domain, EpisodeSpec, SyntheticConfig, SyntheticDomains};
use bsdb::harness::{ExperimentConfig, Variant};
use bsdb::labelprop::LpConfig;
use bsdb::linalg::RngStream;
use bsdb::nn::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Where the datasets come from: CSV files when `source` is set, otherwise
/// the synthetic generator.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub target_unlabeled: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
    /// Generator seed; defaults to the experiment seed.
    pub generator_seed: Option<u64>,
}

/// The JSON configuration file. Unknown keys are rejected and missing keys
/// take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub data: DataConfig,
    pub ensemble: EnsembleConfig,
    pub train: TrainConfig,
    pub blend: BlendConfig,
    pub lp: LpConfig,
    pub episode: EpisodeSpec,
    pub n_episodes: usize,
    pub seed: u64,
    pub variants: Vec<Variant>,
    /// Worker threads; absent means all available cores.
    pub workers: Option<usize>,
}

impl Default for CliConfig {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Self {
            data: DataConfig::default(),
            ensemble: e.ensemble,
            train: e.train,
            blend: e.blend,
            lp: e.lp,
            episode: e.episode,
            n_episodes: e.n_episodes,
            seed: e.seed,
            variants: e.variants,
            workers: None,
        }
    }
}

pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

impl CliConfig {
    /// Reads `path` (or the defaults when `None`), applies overrides and
    /// fills every derived default so the result can be re-fed verbatim.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> CliResult<Self> {
        let mut cfg = match path {
            None => CliConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::config(format!("cannot read config {}: {e}", p.display())))?;
                let mut cfg: CliConfig = serde_json::from_str(&text)
                    .map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                for f in [&mut cfg.data.source, &mut cfg.data.target, &mut cfg.data.target_unlabeled] {
                    if let Some(rel) = f.as_mut() {
                        if rel.is_relative() {
                            *rel = absolute(&base.join(&*rel));
                        }
                    }
                }
                cfg
            }
        };
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if overrides.workers.is_some() {
            cfg.workers = overrides.workers;
        }
        if cfg.data.generator_seed.is_none() {
            cfg.data.generator_seed = Some(cfg.seed);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.workers == Some(0) {
            return Err(CliError::config("workers must be >= 1"));
        }
        if self.data.source.is_none() && (self.data.target.is_some() || self.data.target_unlabeled.is_some()) {
            return Err(CliError::config("data.target requires data.source"));
        }
        self.data.synthetic.validate()?;
        self.experiment().validate()?;
        Ok(())
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            ensemble: self.ensemble.clone(),
            train: self.train.clone(),
            blend: self.blend.clone(),
            lp: self.lp.clone(),
            episode: self.episode.clone(),
            n_episodes: self.n_episodes,
            seed: self.seed,
            variants: self.variants.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn generator_seed(&self) -> u64 {
        self.data.generator_seed.unwrap_or(self.seed)
    }

    pub fn synthetic_domains(&self) -> CliResult<SyntheticDomains> {
        Ok(make_synthetic_domains(&self.data.synthetic, &mut RngStream::new(self.generator_seed()))?)
    }

    /// Source, target and unlabeled tables. `need_target` controls whether a
    /// CSV setup must name a target file.
    pub fn load_data(&self, need_target: bool) -> CliResult<SyntheticDomains> {
        let Some(source) = &self.data.source else {
            return self.synthetic_domains();
        };
        let source = DatasetTable::read_csv(source, Domain::Source)?;
        if source.labels.is_none() {
            return Err(CliError::data("source data must have a label column"));
        }
        let target = match &self.data.target {
            Some(p) => DatasetTable::read_csv(p, Domain::Target)?,
            None if need_target => return Err(CliError::config("data.target is required")),
            None => DatasetTable::unlabeled(bsdb::linalg::Matrix::zeros(0, source.dim()), Domain::Target),
        };
        let target_unlabeled = match &self.data.target_unlabeled {
            Some(p) => DatasetTable::read_csv(p, Domain::Target)?,
            None => DatasetTable::unlabeled(bsdb::linalg::Matrix::zeros(0, source.dim()), Domain::Target),
        };
        Ok(SyntheticDomains {
            source,
            target,
            target_unlabeled,
        })
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn none() -> Overrides {
        Overrides {
            seed: None,
            workers: None,
        }
    }

    #[test]
    fn defaults_fill_missing_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"n_episodes": 5, "train": {"epochs": 2}}"#).unwrap();
        let cfg = CliConfig::load(Some(&p), &none()).unwrap();
        assert_eq!(cfg.n_episodes, 5);
        assert_eq!(cfg.train.epochs, 2);
        assert_eq!(cfg.train.lambda, 0.001);
        assert_eq!(cfg.blend.mu, 0.1);
        assert_eq!(cfg.blend.w, 0.5);
        assert_eq!(cfg.ensemble.branches, 10);
        assert_eq!(cfg.lp.k_neighbors, 10);
        assert_eq!(cfg.lp.alpha, 0.5);
        assert_eq!(cfg.episode.queries, 15);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"train": {"epoch": 2}}"#).unwrap();
        let err = CliConfig::load(Some(&p), &none()).unwrap_err();
        assert_eq!(err.code, crate::error::EXIT_CONFIG);
        assert!(err.message.contains("epoch"));
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = CliConfig::load(None, &Overrides { seed: Some(9), workers: Some(2) }).unwrap();
        assert_eq!(cfg.data.generator_seed, Some(9));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("resolved.json");
        std::fs::write(&p, cfg.to_json()).unwrap();
        assert_eq!(CliConfig::load(Some(&p), &none()).unwrap(), cfg);
    }

    #[test]
    fn missing_file_names_path() {
        let err = CliConfig::load(Some(Path::new("/nonexistent/cfg.json")), &none()).unwrap_err();
        assert_eq!(err.code, 2);
        assert!(err.message.contains("/nonexistent/cfg.json"));
    }
}
