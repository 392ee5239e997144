//! Episodic evaluation protocol.
//!
//! [`run_experiment`] pre-trains one ensemble per distinct regularization
//! weight needed by the requested variants, then evaluates every variant on
//! the same sequence of sampled episodes. Episode `i` draws all of its
//! randomness from a stream derived from `(seed, i)` alone, so results do not
//! depend on scheduling or on which other variants are requested.

mod metrics;
mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use metrics::{accuracy, confidence_interval_95, mean};
pub use report::{emit_report, format_accuracy, write_reports, Report, EPISODES_CSV, RESULTS_CSV, RESULTS_MD};

use crate::ensemble::{aggregate_predictions, pretrain_ensemble, Ensemble, EnsembleConfig, EnsembleManifest, TrainTrace};
use crate::episodic::{finetune, sample_episode, BlendConfig, DatasetTable, Episode, EpisodeSpec};
use crate::error::{Error, Result};
use crate::labelprop::{refine_predictions, LpConfig};
use crate::linalg::{split_seed, Matrix, RngStream};
use crate::nn::TrainConfig;
use crate::par::Exec;

const EPISODE_STREAM: u64 = 0x0065_7069_736f_6465; // "episode"
const SAMPLE_STREAM: u64 = 0;

/// One evaluated method: a named combination of independent toggles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VariantRepr")]
pub struct Variant {
    pub name: String,
    /// Pre-train with the spectral penalty (otherwise `lambda = 0`).
    pub use_bsr: bool,
    /// Fine-tune with the blended pseudo-support term (otherwise `mu = 0`).
    pub use_blend: bool,
    /// Refine query predictions with label propagation.
    pub use_lp: bool,
    /// Average all branches (otherwise branch 0 alone).
    pub use_ensemble: bool,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum VariantRepr {
    Named(String),
    Flags {
        name: String,
        #[serde(default)]
        use_bsr: bool,
        #[serde(default)]
        use_blend: bool,
        #[serde(default)]
        use_lp: bool,
        #[serde(default)]
        use_ensemble: bool,
    },
}

impl TryFrom<VariantRepr> for Variant {
    type Error = String;

    fn try_from(repr: VariantRepr) -> std::result::Result<Self, String> {
        match repr {
            VariantRepr::Named(name) => Variant::preset(&name).ok_or_else(|| {
                format!("unknown variant `{name}` (known: {})", Variant::PRESETS.join(", "))
            }),
            VariantRepr::Flags {
                name,
                use_bsr,
                use_blend,
                use_lp,
                use_ensemble,
            } => Ok(Variant {
                name,
                use_bsr,
                use_blend,
                use_lp,
                use_ensemble,
            }),
        }
    }
}

impl Variant {
    pub const PRESETS: [&'static str; 5] = ["finetune", "bsdb", "bsdb+lp", "bsdb-ensemble", "bsdb+lp-ensemble"];

    /// Named presets. `finetune` is the single-branch, unregularized,
    /// unblended baseline; the others layer the penalty, blending, label
    /// propagation and ensembling on top.
    pub fn preset(name: &str) -> Option<Variant> {
        let (use_bsr, use_blend, use_lp, use_ensemble) = match name {
            "finetune" => (false, false, false, false),
            "bsdb" => (true, true, false, false),
            "bsdb+lp" => (true, true, true, false),
            "bsdb-ensemble" => (true, true, false, true),
            "bsdb+lp-ensemble" => (true, true, true, true),
            _ => return None,
        };
        Some(Variant {
            name: name.to_string(),
            use_bsr,
            use_blend,
            use_lp,
            use_ensemble,
        })
    }

    pub fn all_presets() -> Vec<Variant> {
        Self::PRESETS.iter().map(|n| Self::preset(n).expect("preset")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ensemble: EnsembleConfig,
    pub train: TrainConfig,
    pub blend: BlendConfig,
    pub lp: LpConfig,
    pub episode: EpisodeSpec,
    pub n_episodes: usize,
    pub seed: u64,
    pub variants: Vec<Variant>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            ensemble: EnsembleConfig::default(),
            train: TrainConfig::default(),
            blend: BlendConfig::default(),
            lp: LpConfig::default(),
            episode: EpisodeSpec::default(),
            n_episodes: 600,
            seed: 0,
            variants: Variant::all_presets(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.ensemble.validate()?;
        self.train.validate()?;
        self.blend.validate()?;
        self.episode.validate()?;
        if self.n_episodes == 0 {
            return Err(Error::Config("n_episodes must be >= 1".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("at least one variant is required".into()));
        }
        for (i, v) in self.variants.iter().enumerate() {
            if self.variants[..i].iter().any(|u| u.name == v.name) {
                return Err(Error::Config(format!("duplicate variant name `{}`", v.name)));
            }
        }
        if self.variants.iter().any(|v| v.use_lp) {
            self.lp.validate()?;
            let nodes = self.episode.ways * (self.episode.shots + self.episode.queries);
            if self.lp.k_neighbors >= nodes {
                return Err(Error::Config(format!(
                    "lp.k_neighbors = {} needs more than {nodes} support + query nodes",
                    self.lp.k_neighbors
                )));
            }
        }
        Ok(())
    }

    /// Pre-training penalty weight used by `variant`.
    pub fn lambda_for(&self, variant: &Variant) -> f64 {
        if variant.use_bsr {
            self.train.lambda
        } else {
            0.0
        }
    }

    fn blend_for(&self, variant: &Variant) -> BlendConfig {
        let mut b = self.blend.clone();
        if !variant.use_blend {
            b.mu = 0.0;
        }
        b
    }

    fn branches_for(&self, variant: &Variant) -> usize {
        if variant.use_ensemble {
            self.ensemble.branches
        } else {
            1
        }
    }

    /// Ensembles to pre-train: one per distinct `lambda`, sized for the
    /// widest variant that uses it. Branch `i` is identical across sizes, so
    /// a single-branch model equals branch 0 of a larger one.
    pub fn model_plan(&self) -> Vec<ModelSpec> {
        let mut plan: Vec<ModelSpec> = Vec::new();
        for v in &self.variants {
            let lambda = self.lambda_for(v);
            let branches = if self.ensemble.share_backbone {
                self.ensemble.branches
            } else {
                self.branches_for(v)
            };
            match plan.iter_mut().find(|m| m.lambda.to_bits() == lambda.to_bits()) {
                Some(m) => m.branches = m.branches.max(branches),
                None => plan.push(ModelSpec { lambda, branches }),
            }
        }
        plan
    }

    /// Manifest a checkpoint for `spec` must match.
    pub fn expected_manifest(&self, spec: &ModelSpec, input_dim: usize, num_classes: usize) -> EnsembleManifest {
        let seeds = crate::ensemble::branch_seeds(self.seed, spec.branches);
        EnsembleManifest {
            format: EnsembleManifest::FORMAT,
            branches: spec.branches,
            input_dim,
            hidden: self.ensemble.hidden.clone(),
            feature_dim: self.ensemble.feature_dim(),
            num_classes,
            master_seed: self.seed,
            basis_seeds: seeds
                .iter()
                .map(|&s| crate::ensemble::BranchStreams::from_branch_seed(s).basis)
                .collect(),
            seeds,
            share_backbone: self.ensemble.share_backbone,
            lambda: spec.lambda,
            epochs: self.train.epochs,
        }
    }
}

/// A pre-trained ensemble requirement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub lambda: f64,
    pub branches: usize,
}

/// Field-level differences between two manifests, `field: expected X, found Y`.
pub fn manifest_diff(expected: &EnsembleManifest, found: &EnsembleManifest) -> Vec<String> {
    let exp = serde_json::to_value(expected).expect("manifest serializes");
    let got = serde_json::to_value(found).expect("manifest serializes");
    let (Some(exp), Some(got)) = (exp.as_object(), got.as_object()) else {
        return vec!["manifest is not an object".into()];
    };
    exp.iter()
        .filter(|(k, v)| got.get(*k) != Some(v))
        .map(|(k, v)| {
            let found = got.get(k).map_or_else(|| "nothing".to_string(), |g| g.to_string());
            format!("{k}: expected {v}, found {found}")
        })
        .collect()
}

/// Pre-trained ensembles keyed by penalty weight.
#[derive(Debug, Clone, Default)]
pub struct PretrainedModels {
    pub ensembles: Vec<Ensemble>,
}

impl PretrainedModels {
    pub fn for_lambda(&self, lambda: f64) -> Option<&Ensemble> {
        self.ensembles
            .iter()
            .find(|e| e.manifest.lambda.to_bits() == lambda.to_bits())
    }

    /// Checks every planned model is present with the expected shape.
    pub fn check(&self, cfg: &ExperimentConfig, input_dim: usize) -> Result<()> {
        for spec in cfg.model_plan() {
            let ens = self.for_lambda(spec.lambda).ok_or_else(|| {
                Error::Config(format!("no pre-trained ensemble with lambda = {}", spec.lambda))
            })?;
            let m = &ens.manifest;
            if m.branches < spec.branches || m.input_dim != input_dim || m.hidden != cfg.ensemble.hidden {
                let mut expected = cfg.expected_manifest(&spec, input_dim, m.num_classes);
                expected.branches = expected.branches.max(m.branches);
                return Err(Error::Config(format!(
                    "checkpoint does not match config: {}",
                    manifest_diff(&expected, m).join("; ")
                )));
            }
        }
        Ok(())
    }
}

/// Pre-training traces of the ensemble trained with a given `lambda`.
pub type LambdaTraces = (f64, Vec<TrainTrace>);

/// Pre-trains every model in the plan on the labeled source table.
pub fn pretrain_models(
    cfg: &ExperimentConfig,
    source: &DatasetTable,
    exec: Exec,
) -> Result<(PretrainedModels, Vec<LambdaTraces>)> {
    cfg.validate()?;
    let labels = source.labels()?;
    let mut models = PretrainedModels::default();
    let mut traces = Vec::new();
    for spec in cfg.model_plan() {
        let ens_cfg = EnsembleConfig {
            branches: spec.branches,
            ..cfg.ensemble.clone()
        };
        let train = TrainConfig {
            lambda: spec.lambda,
            ..cfg.train.clone()
        };
        log::info!("pre-training {} branch(es) with lambda = {}", spec.branches, spec.lambda);
        let (ens, t) = pretrain_ensemble(
            &source.instances,
            labels,
            source.num_classes(),
            &ens_cfg,
            &train,
            cfg.seed,
            exec,
        )?;
        models.ensembles.push(ens);
        traces.push((spec.lambda, t));
    }
    Ok((models, traces))
}

/// Per-variant accuracies over episodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantResult {
    pub name: String,
    /// Query accuracy per episode, in episode order.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Absent with fewer than two episodes.
    pub ci95: Option<f64>,
}

impl VariantResult {
    pub fn from_accuracies(name: &str, accuracies: Vec<f64>) -> Result<Self> {
        if accuracies.is_empty() {
            return Err(Error::Contract(format!("variant `{name}` has no episodes")));
        }
        if let Some(a) = accuracies.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::Contract(format!("accuracy {a} outside [0, 1]")));
        }
        let ci95 = if accuracies.len() >= 2 {
            Some(confidence_interval_95(&accuracies)?)
        } else {
            None
        };
        Ok(Self {
            name: name.to_string(),
            mean: mean(&accuracies),
            ci95,
            accuracies,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultsTable {
    pub rows: Vec<VariantResult>,
}

impl ResultsTable {
    pub fn row(&self, name: &str) -> Option<&VariantResult> {
        self.rows.iter().find(|r| r.name == name)
    }
}

pub fn episode_seed(master: u64, index: usize) -> u64 {
    split_seed(split_seed(master, EPISODE_STREAM), index as u64)
}

/// Fine-tuned branch outputs on one episode.
struct Adapted {
    /// `ways × queries`.
    probs: Matrix,
    support_features: Matrix,
    query_features: Matrix,
}

/// Samples episode `index` and scores every variant on it, in config order.
pub fn evaluate_episode(
    cfg: &ExperimentConfig,
    models: &PretrainedModels,
    target: &DatasetTable,
    unlabeled: &DatasetTable,
    index: usize,
) -> Result<Vec<f64>> {
    let seed = episode_seed(cfg.seed, index);
    let episode = sample_episode(target, unlabeled, &cfg.episode, &mut RngStream::new(split_seed(seed, SAMPLE_STREAM)))?;
    // (model, blending, branch) -> adapted outputs, shared between variants
    let mut cache: BTreeMap<(u64, bool, usize), Adapted> = BTreeMap::new();
    let mut out = Vec::with_capacity(cfg.variants.len());
    for v in &cfg.variants {
        let lambda = cfg.lambda_for(v);
        let ens = models
            .for_lambda(lambda)
            .ok_or_else(|| Error::Config(format!("no pre-trained ensemble with lambda = {lambda}")))?;
        let blend = cfg.blend_for(v);
        let branches = cfg.branches_for(v);
        for b in 0..branches {
            let key = (lambda.to_bits(), v.use_blend, b);
            if let std::collections::btree_map::Entry::Vacant(slot) = cache.entry(key) {
                slot.insert(adapt_branch(cfg, ens, b, &episode, &blend, seed)?);
            }
        }
        let parts: Vec<&Adapted> = (0..branches).map(|b| &cache[&(lambda.to_bits(), v.use_blend, b)]).collect();
        let probs: Vec<Matrix> = parts.iter().map(|a| a.probs.clone()).collect();
        let (avg, mut labels) = aggregate_predictions(&probs)?;
        if v.use_lp {
            let support = concat_features(parts.iter().map(|a| &a.support_features))?;
            let query = concat_features(parts.iter().map(|a| &a.query_features))?;
            labels = refine_predictions(&support, &episode.support_labels, &query, &avg.transpose(), &cfg.lp)?;
        }
        out.push(accuracy(&labels, &episode.query_labels)?);
    }
    Ok(out)
}

fn adapt_branch(
    cfg: &ExperimentConfig,
    ens: &Ensemble,
    branch: usize,
    episode: &Episode,
    blend: &BlendConfig,
    episode_seed: u64,
) -> Result<Adapted> {
    let base = ens
        .branches
        .get(branch)
        .ok_or_else(|| Error::Config(format!("ensemble has no branch {branch}")))?;
    let mut rng = RngStream::new(split_seed(episode_seed, 1 + branch as u64));
    let (tuned, _) = finetune(base, episode, blend, &cfg.train, &mut rng)?;
    Ok(Adapted {
        probs: tuned.predict_proba(&episode.query)?,
        support_features: tuned.projected_features(&episode.support)?.matrix,
        query_features: tuned.projected_features(&episode.query)?.matrix,
    })
}

/// Stacks per-branch `d × n` features into one `n × (d·branches)` matrix.
fn concat_features<'a>(parts: impl Iterator<Item = &'a Matrix>) -> Result<Matrix> {
    let mut stacked: Option<Matrix> = None;
    for p in parts {
        stacked = Some(match stacked {
            None => p.clone(),
            Some(s) => s.vstack(p)?,
        });
    }
    Ok(stacked
        .ok_or_else(|| Error::Contract("no branch features".into()))?
        .transpose())
}

/// Checks the target tables can supply the configured episodes.
pub fn check_data(cfg: &ExperimentConfig, target: &DatasetTable, unlabeled: &DatasetTable, input_dim: usize) -> Result<()> {
    if target.dim() != input_dim {
        return Err(Error::Config(format!(
            "target data has dimension {}, models expect {input_dim}",
            target.dim()
        )));
    }
    let per_class = cfg.episode.shots + cfg.episode.queries;
    let eligible = target.class_members()?.iter().filter(|m| m.len() >= per_class).count();
    if eligible < cfg.episode.ways {
        return Err(Error::Data(format!(
            "insufficient instances: {eligible} target classes have >= {per_class} instances, {} ways requested",
            cfg.episode.ways
        )));
    }
    if unlabeled.len() < cfg.episode.unlabeled {
        return Err(Error::Data(format!(
            "unlabeled pool has {} instances, {} requested",
            unlabeled.len(),
            cfg.episode.unlabeled
        )));
    }
    Ok(())
}

/// Evaluates all variants over `cfg.n_episodes` episodes with given models.
pub fn evaluate_pretrained(
    cfg: &ExperimentConfig,
    models: &PretrainedModels,
    target: &DatasetTable,
    unlabeled: &DatasetTable,
    exec: Exec,
) -> Result<ResultsTable> {
    cfg.validate()?;
    let input_dim = models
        .ensembles
        .first()
        .map(|e| e.manifest.input_dim)
        .ok_or_else(|| Error::Config("no pre-trained models".into()))?;
    models.check(cfg, input_dim)?;
    check_data(cfg, target, unlabeled, input_dim)?;
    let per_episode = exec.try_map(cfg.n_episodes, |i| evaluate_episode(cfg, models, target, unlabeled, i))?;
    let rows = cfg
        .variants
        .iter()
        .enumerate()
        .map(|(j, v)| VariantResult::from_accuracies(&v.name, per_episode.iter().map(|e| e[j]).collect()))
        .collect::<Result<_>>()?;
    Ok(ResultsTable { rows })
}

/// Pre-trains on `source`, then evaluates on episodes from `target`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    source: &DatasetTable,
    target: &DatasetTable,
    unlabeled: &DatasetTable,
    exec: Exec,
) -> Result<ResultsTable> {
    cfg.validate()?;
    check_data(cfg, target, unlabeled, source.dim())?;
    let (models, _) = pretrain_models(cfg, source, exec)?;
    evaluate_pretrained(cfg, &models, target, unlabeled, exec)
}
