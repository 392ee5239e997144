use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BranchParams, Ensemble, ProjectionBasis};
use crate::error::{Error, Result};
use crate::fsio::write_atomic;
use crate::linalg::Matrix;
use crate::nn::checkpoint::{decode_tensors, encode_tensors, take_tensor};
use crate::nn::{ClassifierParams, Dense, MlpParams};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Describes an ensemble checkpoint directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleManifest {
    pub format: u32,
    pub branches: usize,
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub basis_seeds: Vec<u64>,
    pub share_backbone: bool,
    pub lambda: f64,
    pub epochs: usize,
}

impl EnsembleManifest {
    pub const FORMAT: u32 = 1;

    pub fn branch_file(index: usize) -> String {
        format!("branch_{index:02}.txt")
    }
}

fn branch_to_text(b: &BranchParams) -> String {
    let mut names = Vec::new();
    let mut biases = Vec::new();
    for (l, layer) in b.backbone.layers.iter().enumerate() {
        names.push(format!("backbone.{l}.weight"));
        names.push(format!("backbone.{l}.bias"));
        biases.push(Matrix::from_rows(&[&layer.bias]).expect("row"));
    }
    let head_bias = Matrix::from_rows(&[&b.classifier.bias]).expect("row");
    let mut tensors: Vec<(&str, &Matrix)> = Vec::new();
    for (l, layer) in b.backbone.layers.iter().enumerate() {
        tensors.push((&names[2 * l], &layer.weights));
        tensors.push((&names[2 * l + 1], &biases[l]));
    }
    tensors.push(("basis", &b.basis.matrix));
    tensors.push(("classifier.weight", &b.classifier.weights));
    tensors.push(("classifier.bias", &head_bias));
    encode_tensors(tensors)
}

fn branch_from_text(text: &str, layers: usize, basis_seed: u64) -> Result<BranchParams> {
    let mut t = decode_tensors(text)?;
    let mut dense = Vec::with_capacity(layers);
    for l in 0..layers {
        let weights = take_tensor(&mut t, &format!("backbone.{l}.weight"))?;
        let bias = take_tensor(&mut t, &format!("backbone.{l}.bias"))?.into_vec();
        dense.push(Dense { weights, bias });
    }
    let basis = ProjectionBasis {
        matrix: take_tensor(&mut t, "basis")?,
        source_seed: basis_seed,
    };
    let classifier = ClassifierParams {
        weights: take_tensor(&mut t, "classifier.weight")?,
        bias: take_tensor(&mut t, "classifier.bias")?.into_vec(),
    };
    if let Some((name, _)) = t.first() {
        return Err(Error::Data(format!("unexpected tensor {name:?}")));
    }
    BranchParams::new(MlpParams::from_layers(dense)?, basis, classifier)
}

impl Ensemble {
    /// Writes `manifest.json` and one text file per branch into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, b) in self.branches.iter().enumerate() {
            write_atomic(&dir.join(EnsembleManifest::branch_file(i)), branch_to_text(b))?;
        }
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        write_atomic(&dir.join(MANIFEST_FILE), json + "\n")
    }

    pub fn load(dir: &Path) -> Result<Ensemble> {
        let manifest = Self::load_manifest(dir)?;
        let mut branches = Vec::with_capacity(manifest.branches);
        for i in 0..manifest.branches {
            let path: PathBuf = dir.join(EnsembleManifest::branch_file(i));
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let seed = manifest.basis_seeds.get(i).copied().unwrap_or(0);
            let branch = branch_from_text(&text, manifest.hidden.len(), seed)
                .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            if branch.backbone.input_dim() != manifest.input_dim
                || branch.feature_dim() != manifest.feature_dim
                || branch.classifier.num_classes() != manifest.num_classes
            {
                return Err(Error::Data(format!(
                    "{}: shapes disagree with manifest",
                    path.display()
                )));
            }
            branches.push(branch);
        }
        Ok(Ensemble { branches, manifest })
    }

    pub fn load_manifest(dir: &Path) -> Result<EnsembleManifest> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: EnsembleManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if manifest.format != EnsembleManifest::FORMAT {
            return Err(Error::Data(format!(
                "{}: unsupported format {}",
                path.display(),
                manifest.format
            )));
        }
        if manifest.seeds.len() != manifest.branches {
            return Err(Error::Data(format!("{}: seed count != branches", path.display())));
        }
        Ok(manifest)
    }
}
