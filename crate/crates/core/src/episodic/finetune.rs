use super::{make_pseudo_support, BlendConfig, Episode};
use crate::ensemble::{BranchParams, HEAD_INIT_STD};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, RngStream};
use crate::nn::{head_loss_and_grad, ClassifierParams, GradScope, LossWeights, ParamSet, Sgd, TrainConfig};

/// Support sets up to this size are fitted full-batch.
pub const FULL_BATCH_LIMIT: usize = 64;
/// Mini-batch size for larger support sets.
pub const MINI_BATCH: usize = 16;

/// Per-epoch fine-tuning losses (means over the epoch's batches).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FinetuneTrace {
    /// Cross-entropy on the support set.
    pub support_losses: Vec<f64>,
    /// Support loss plus `mu` times the pseudo-support loss.
    pub total_losses: Vec<f64>,
}

/// Adapts a pre-trained branch to an episode.
///
/// The classifier is replaced by a fresh `ways`-class head and trained with
/// SGD on `L_t + mu * L*_t`, where `L*_t` is the cross-entropy on a blended
/// pseudo-support set redrawn every epoch. The backbone and projection stay
/// frozen unless `cfg.finetune_backbone` is set. With `mu == 0` no pseudo set
/// is drawn and the run is plain support fine-tuning.
pub fn finetune(
    branch: &BranchParams,
    episode: &Episode,
    cfg: &BlendConfig,
    train: &TrainConfig,
    rng: &mut RngStream,
) -> Result<(BranchParams, FinetuneTrace)> {
    cfg.validate()?;
    if episode.support.rows() == 0 {
        return Err(Error::Data("episode has an empty support set".into()));
    }
    if episode.support.cols() != branch.backbone.input_dim() {
        return Err(Error::shape(
            "finetune",
            episode.support.shape(),
            branch.backbone.layers[0].weights.shape(),
        ));
    }
    let ways = episode.ways().max(episode.support_labels.iter().max().map_or(0, |m| m + 1));
    let mut adapted = branch.clone();
    adapted.classifier = ClassifierParams::init(ways, branch.feature_dim(), HEAD_INIT_STD, rng);
    let sgd = Sgd {
        learning_rate: cfg.finetune_lr,
        momentum: train.momentum,
        weight_decay: train.weight_decay,
    };
    let blending = cfg.mu != 0.0;
    let n = episode.support.rows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = FinetuneTrace::default();

    let mut vel_head = adapted.classifier.zeros_like();
    let mut vel_backbone = adapted.backbone.zeros_like();
    // frozen backbone: support features never change
    let frozen_support = if cfg.finetune_backbone {
        None
    } else {
        Some(adapted.projected_features(&episode.support)?.matrix)
    };

    for _ in 0..cfg.finetune_epochs {
        let pseudo = if blending {
            Some(make_pseudo_support(episode, cfg.w, rng)?.0)
        } else {
            None
        };
        let pseudo_features = match (&pseudo, cfg.finetune_backbone) {
            (Some(p), false) => Some(adapted.projected_features(p)?.matrix),
            _ => None,
        };
        if n > FULL_BATCH_LIMIT {
            rng.shuffle(&mut order);
        }
        let batch = if n > FULL_BATCH_LIMIT { MINI_BATCH } else { n };

        let (mut support_sum, mut total_sum, mut batches) = (0.0, 0.0, 0);
        for chunk in order.chunks(batch) {
            let labels: Vec<usize> = chunk.iter().map(|&i| episode.support_labels[i]).collect();
            let (support_loss, pseudo_loss) = if let Some(features) = &frozen_support {
                let (l_t, mut g) = head_loss_and_grad(&adapted.classifier, &columns(features, chunk), &labels)?;
                let mut l_p = 0.0;
                if let Some(pf) = &pseudo_features {
                    let (l, gp) = head_loss_and_grad(&adapted.classifier, &columns(pf, chunk), &labels)?;
                    g.add_scaled(cfg.mu, &gp);
                    l_p = l;
                }
                sgd.step(&mut adapted.classifier, &g, &mut vel_head)?;
                (l_t, l_p)
            } else {
                let net = adapted.network();
                let tape = net.forward(&episode.support.select_rows(chunk))?;
                let l_t = net.loss(&tape, &labels, LossWeights::ce_only())?;
                let mut g = net.backward(&tape, &labels, LossWeights::ce_only(), GradScope::Full)?;
                let mut l_p = 0.0;
                if let Some(p) = &pseudo {
                    let tape_p = net.forward(&p.select_rows(chunk))?;
                    l_p = net.loss(&tape_p, &labels, LossWeights::ce_only())?;
                    let gp = net.backward(&tape_p, &labels, LossWeights::ce_only(), GradScope::Full)?;
                    g.classifier.add_scaled(cfg.mu, &gp.classifier);
                    g.backbone
                        .as_mut()
                        .expect("full scope")
                        .add_scaled(cfg.mu, gp.backbone.as_ref().expect("full scope"));
                }
                let backbone_grad = g.backbone.expect("full scope");
                sgd.step(&mut adapted.classifier, &g.classifier, &mut vel_head)?;
                sgd.step(&mut adapted.backbone, &backbone_grad, &mut vel_backbone)?;
                (l_t, l_p)
            };
            support_sum += support_loss;
            total_sum += if blending {
                support_loss + cfg.mu * pseudo_loss
            } else {
                support_loss
            };
            batches += 1;
        }
        let support_mean = support_sum / batches as f64;
        if !support_mean.is_finite() {
            return Err(Error::Numeric("fine-tuning loss diverged".into()));
        }
        trace.support_losses.push(support_mean);
        trace.total_losses.push(total_sum / batches as f64);
    }
    Ok((adapted, trace))
}

/// Selected columns of a `d × n` feature matrix.
fn columns(features: &Matrix, idx: &[usize]) -> Matrix {
    if idx.len() == features.cols() && idx.iter().enumerate().all(|(i, &j)| i == j) {
        return features.clone();
    }
    features.transpose().select_rows(idx).transpose()
}
