//! Multi-branch ensembles. Each branch views backbone features through its own
//! fixed orthogonal basis (eigenvectors of a seeded random symmetric matrix);
//! predictions are combined by averaging class probabilities.

mod basis;
mod store;
mod train;

use serde::{Deserialize, Serialize};

pub use basis::{gen_orthogonal_bases, project, ProjectionBasis};
pub use store::EnsembleManifest;
pub use train::{pretrain_ensemble, train_branch, train_shared_backbone, TrainTrace};

use crate::error::{Error, Result};
use crate::linalg::{split_seed, Matrix, RngStream};
use crate::nn::{softmax_columns, ClassifierParams, FeatureBatch, FeatureStage, MlpParams, Network};

/// Std of freshly initialized classifier weights.
pub const HEAD_INIT_STD: f64 = 0.01;

const BRANCH_STREAM: u64 = 0x6272_616e_6368; // "branch"

/// Ensemble shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Number of branches `M`.
    pub branches: usize,
    /// Backbone hidden widths; the last one is the feature dimension `d`.
    pub hidden: Vec<usize>,
    /// One backbone shared (and jointly trained) by all branches.
    pub share_backbone: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            branches: 10,
            hidden: vec![128, 64],
            share_backbone: false,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.branches == 0 {
            return Err(Error::Config("ensemble.branches must be >= 1".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(format!(
                "ensemble.hidden must be non-empty positive widths, got {:?}",
                self.hidden
            )));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.hidden.last().copied().unwrap_or(0)
    }
}

/// Per-branch master seeds derived from one experiment seed.
pub fn branch_seeds(master: u64, branches: usize) -> Vec<u64> {
    let root = split_seed(master, BRANCH_STREAM);
    (0..branches as u64).map(|i| split_seed(root, i)).collect()
}

/// Seeds for the three independent streams a branch consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchStreams {
    pub basis: u64,
    pub init: u64,
    pub shuffle: u64,
}

impl BranchStreams {
    pub fn from_branch_seed(seed: u64) -> Self {
        Self {
            basis: split_seed(seed, 0),
            init: split_seed(seed, 1),
            shuffle: split_seed(seed, 2),
        }
    }
}

/// One ensemble member: backbone, fixed projection, classifier head.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchParams {
    pub backbone: MlpParams,
    pub basis: ProjectionBasis,
    pub classifier: ClassifierParams,
}

impl BranchParams {
    pub fn new(backbone: MlpParams, basis: ProjectionBasis, classifier: ClassifierParams) -> Result<Self> {
        let d = backbone.feature_dim();
        if basis.dim() != d || classifier.dim() != d {
            return Err(Error::Contract(format!(
                "branch dims disagree: backbone {d}, basis {}, classifier {}",
                basis.dim(),
                classifier.dim()
            )));
        }
        Ok(Self {
            backbone,
            basis,
            classifier,
        })
    }

    /// Fresh branch from its seed streams.
    pub fn init(input_dim: usize, hidden: &[usize], num_classes: usize, streams: BranchStreams) -> Result<Self> {
        let mut rng = RngStream::new(streams.init);
        let backbone = MlpParams::init(input_dim, hidden, &mut rng)?;
        let d = backbone.feature_dim();
        let basis = ProjectionBasis::from_seed(streams.basis, d)?;
        let classifier = ClassifierParams::init(num_classes, d, HEAD_INIT_STD, &mut rng);
        Self::new(backbone, basis, classifier)
    }

    pub fn feature_dim(&self) -> usize {
        self.backbone.feature_dim()
    }

    pub fn network(&self) -> Network<'_> {
        Network {
            backbone: &self.backbone,
            projection: Some(&self.basis.matrix),
            classifier: &self.classifier,
        }
    }

    /// Projected features (`d × n`) for `inputs` (one instance per row).
    pub fn projected_features(&self, inputs: &Matrix) -> Result<FeatureBatch> {
        let f = crate::nn::forward_features(&self.backbone, inputs)?;
        project(&self.basis, &f)
    }

    /// Class probabilities, `K × n`.
    pub fn predict_proba(&self, inputs: &Matrix) -> Result<Matrix> {
        let f = self.projected_features(inputs)?;
        Ok(softmax_columns(&self.classifier.logits(&f.matrix)?))
    }
}

/// Trained branches plus the manifest that describes them.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub branches: Vec<BranchParams>,
    pub manifest: EnsembleManifest,
}

/// Averages per-branch `K × q` probability matrices. Returns the averaged
/// probabilities and the argmax label of each column (ties to the lower class).
pub fn aggregate_predictions(per_branch: &[Matrix]) -> Result<(Matrix, Vec<usize>)> {
    let first = per_branch
        .first()
        .ok_or_else(|| Error::Contract("no branch predictions to aggregate".into()))?;
    let shape = first.shape();
    for (b, m) in per_branch.iter().enumerate() {
        if m.shape() != shape {
            return Err(Error::shape("aggregate_predictions", shape, m.shape()));
        }
        check_distributions(m).map_err(|msg| Error::Contract(format!("branch {b}: {msg}")))?;
    }
    let count = per_branch.len() as f64;
    let mut out = Matrix::zeros(shape.0, shape.1);
    let mut scratch = Vec::with_capacity(per_branch.len());
    for (idx, o) in out.as_mut_slice().iter_mut().enumerate() {
        scratch.clear();
        scratch.extend(per_branch.iter().map(|m| m.as_slice()[idx]));
        // summing in sorted order makes the mean independent of branch order
        scratch.sort_by(f64::total_cmp);
        *o = scratch.iter().sum::<f64>() / count;
    }
    let labels = out.argmax_columns();
    Ok((out, labels))
}

fn check_distributions(m: &Matrix) -> std::result::Result<(), String> {
    for (j, s) in m.column_sums().iter().enumerate() {
        if (s - 1.0).abs() > 1e-6 {
            return Err(format!("column {j} sums to {s}"));
        }
    }
    if m.as_slice().iter().any(|&v| v < 0.0) {
        return Err("negative probability".into());
    }
    Ok(())
}

/// Ensures a feature batch is in the projected stage.
pub(crate) fn expect_stage(f: &FeatureBatch, stage: FeatureStage) -> Result<()> {
    if f.stage != stage {
        return Err(Error::Contract(format!(
            "expected {stage:?} features, got {:?}",
            f.stage
        )));
    }
    Ok(())
}
