use serde::{Deserialize, Serialize};

use super::Episode;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, RngStream};

/// Fine-tuning and blending hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlendConfig {
    /// Weight of the unlabeled partner in a blended instance.
    pub w: f64,
    /// Weight of the pseudo-support loss.
    pub mu: f64,
    pub finetune_lr: f64,
    pub finetune_epochs: usize,
    /// Also update the backbone during fine-tuning.
    pub finetune_backbone: bool,
}

impl Default for BlendConfig {
    fn default() -> Self {
        Self {
            w: 0.5,
            mu: 0.1,
            finetune_lr: 0.01,
            finetune_epochs: 100,
            finetune_backbone: false,
        }
    }
}

impl BlendConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.w) {
            return Err(Error::Config(format!("blend.w must be in [0, 1], got {}", self.w)));
        }
        if !(self.mu >= 0.0) {
            return Err(Error::Config(format!("blend.mu must be >= 0, got {}", self.mu)));
        }
        if !(self.finetune_lr > 0.0) {
            return Err(Error::Config("blend.finetune_lr must be > 0".into()));
        }
        Ok(())
    }
}

/// `(1 - w) * x_t + w * x_u`.
pub fn blend(x_t: &[f64], x_u: &[f64], w: f64) -> Result<Vec<f64>> {
    if x_t.len() != x_u.len() {
        return Err(Error::shape("blend", (1, x_t.len()), (1, x_u.len())));
    }
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::Contract(format!("blend weight {w} outside [0, 1]")));
    }
    if w == 0.0 {
        return Ok(x_t.to_vec());
    }
    if w == 1.0 {
        return Ok(x_u.to_vec());
    }
    Ok(x_t.iter().zip(x_u).map(|(&t, &u)| (1.0 - w) * t + w * u).collect())
}

/// Blends every support row with a uniformly drawn unlabeled partner. The
/// result keeps the support labels row for row. With an empty unlabeled set
/// the plain support set comes back unchanged.
pub fn make_pseudo_support(episode: &Episode, w: f64, rng: &mut RngStream) -> Result<(Matrix, Vec<usize>)> {
    let pool = episode.unlabeled.rows();
    if pool == 0 {
        return Ok((episode.support.clone(), episode.support_labels.clone()));
    }
    let mut rows = Vec::with_capacity(episode.support.rows());
    for i in 0..episode.support.rows() {
        let partner = rng.below(pool);
        rows.push(blend(episode.support.row(i), episode.unlabeled.row(partner), w)?);
    }
    Ok((Matrix::from_rows(&rows)?, episode.support_labels.clone()))
}
