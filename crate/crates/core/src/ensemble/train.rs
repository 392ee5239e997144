use super::{branch_seeds, BranchParams, BranchStreams, Ensemble, EnsembleConfig, EnsembleManifest};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, RngStream};
use crate::nn::{GradScope, LossWeights, ParamSet, TrainConfig};
use crate::par::Exec;

const EVAL_BATCH: usize = 256;

/// Loss history of one pre-training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    /// Mean mini-batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Loss on a fixed evaluation subset before and after training.
    pub eval_before: f64,
    pub eval_after: f64,
}

fn check_data(inputs: &Matrix, labels: &[usize], num_classes: usize) -> Result<()> {
    if inputs.rows() == 0 {
        return Err(Error::Data("empty training set".into()));
    }
    if labels.len() != inputs.rows() {
        return Err(Error::Data(format!(
            "{} labels for {} instances",
            labels.len(),
            inputs.rows()
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= num_classes) {
        return Err(Error::Data(format!("label {y} outside {num_classes} classes")));
    }
    Ok(())
}

/// Evenly strided subset, independent of any RNG.
fn eval_indices(n: usize) -> Vec<usize> {
    let m = n.min(EVAL_BATCH);
    (0..m).map(|i| i * n / m).collect()
}

fn eval_loss(branch: &BranchParams, inputs: &Matrix, labels: &[usize], idx: &[usize], lambda: f64) -> Result<f64> {
    let x = inputs.select_rows(idx);
    let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
    let net = branch.network();
    let tape = net.forward(&x)?;
    net.loss(&tape, &y, LossWeights::regularized(lambda))
}

fn check_finite(loss: f64, epoch: usize) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("loss diverged at epoch {epoch}")));
    }
    Ok(())
}

/// Mini-batch SGD on cross-entropy plus `lambda` times the spectral penalty of
/// the projected batch features. The projection basis is never updated.
pub fn train_branch(
    mut branch: BranchParams,
    inputs: &Matrix,
    labels: &[usize],
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<(BranchParams, TrainTrace)> {
    cfg.validate()?;
    check_data(inputs, labels, branch.classifier.num_classes())?;
    let eval_idx = eval_indices(inputs.rows());
    let eval_before = eval_loss(&branch, inputs, labels, &eval_idx, cfg.lambda)?;

    let sgd = cfg.optimizer();
    let weights = LossWeights::regularized(cfg.lambda);
    let mut vel_backbone = branch.backbone.zeros_like();
    let mut vel_head = branch.classifier.zeros_like();
    let mut order: Vec<usize> = (0..inputs.rows()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = inputs.select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let net = branch.network();
            let tape = net.forward(&x)?;
            total += net.loss(&tape, &y, weights)?;
            let grads = net.backward(&tape, &y, weights, GradScope::Full)?;
            let backbone_grads = grads.backbone.expect("full scope");
            sgd.step(&mut branch.backbone, &backbone_grads, &mut vel_backbone)?;
            sgd.step(&mut branch.classifier, &grads.classifier, &mut vel_head)?;
            batches += 1;
        }
        let mean = total / batches as f64;
        check_finite(mean, epoch)?;
        epoch_losses.push(mean);
    }

    let eval_after = eval_loss(&branch, inputs, labels, &eval_idx, cfg.lambda)?;
    Ok((
        branch,
        TrainTrace {
            epoch_losses,
            eval_before,
            eval_after,
        },
    ))
}

/// Joint training of branches that share one backbone: the summed branch
/// losses drive the shared backbone, each head sees only its own loss.
/// All branches must start from the same backbone.
pub fn train_shared_backbone(
    mut branches: Vec<BranchParams>,
    inputs: &Matrix,
    labels: &[usize],
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<(Vec<BranchParams>, TrainTrace)> {
    cfg.validate()?;
    let first = branches
        .first()
        .ok_or_else(|| Error::Config("no branches to train".into()))?;
    if branches.iter().any(|b| b.backbone != first.backbone) {
        return Err(Error::Contract("shared training needs identical backbones".into()));
    }
    check_data(inputs, labels, first.classifier.num_classes())?;
    let eval_idx = eval_indices(inputs.rows());
    let joint_eval = |bs: &[BranchParams]| -> Result<f64> {
        bs.iter()
            .map(|b| eval_loss(b, inputs, labels, &eval_idx, cfg.lambda))
            .sum()
    };
    let eval_before = joint_eval(&branches)?;

    let sgd = cfg.optimizer();
    let weights = LossWeights::regularized(cfg.lambda);
    let mut backbone = first.backbone.clone();
    let mut vel_backbone = backbone.zeros_like();
    let mut vel_heads: Vec<_> = branches.iter().map(|b| b.classifier.zeros_like()).collect();
    let mut order: Vec<usize> = (0..inputs.rows()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = inputs.select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let mut backbone_grad = backbone.zeros_like();
            for (branch, vel) in branches.iter_mut().zip(vel_heads.iter_mut()) {
                branch.backbone = backbone.clone();
                let net = branch.network();
                let tape = net.forward(&x)?;
                total += net.loss(&tape, &y, weights)?;
                let grads = net.backward(&tape, &y, weights, GradScope::Full)?;
                backbone_grad.add_scaled(1.0, &grads.backbone.expect("full scope"));
                sgd.step(&mut branch.classifier, &grads.classifier, vel)?;
            }
            sgd.step(&mut backbone, &backbone_grad, &mut vel_backbone)?;
            batches += 1;
        }
        let mean = total / batches as f64;
        check_finite(mean, epoch)?;
        epoch_losses.push(mean);
    }
    for b in &mut branches {
        b.backbone = backbone.clone();
    }
    let eval_after = joint_eval(&branches)?;
    Ok((
        branches,
        TrainTrace {
            epoch_losses,
            eval_before,
            eval_after,
        },
    ))
}

/// Builds and pre-trains an `M`-branch ensemble on labeled source data.
///
/// Independent branches train concurrently under `exec`; a shared backbone
/// trains jointly on one thread. Returns one trace per branch (a single
/// joint trace when the backbone is shared).
pub fn pretrain_ensemble(
    inputs: &Matrix,
    labels: &[usize],
    num_classes: usize,
    ens: &EnsembleConfig,
    cfg: &TrainConfig,
    master_seed: u64,
    exec: Exec,
) -> Result<(Ensemble, Vec<TrainTrace>)> {
    ens.validate()?;
    cfg.validate()?;
    check_data(inputs, labels, num_classes)?;
    let seeds = branch_seeds(master_seed, ens.branches);
    let streams: Vec<BranchStreams> = seeds.iter().map(|&s| BranchStreams::from_branch_seed(s)).collect();
    let input_dim = inputs.cols();

    let (branches, traces) = if ens.share_backbone {
        let mut init: Vec<BranchParams> = streams
            .iter()
            .map(|&s| BranchParams::init(input_dim, &ens.hidden, num_classes, s))
            .collect::<Result<_>>()?;
        let shared = init[0].backbone.clone();
        for b in &mut init {
            b.backbone = shared.clone();
        }
        let mut rng = RngStream::new(streams[0].shuffle);
        let (branches, trace) = train_shared_backbone(init, inputs, labels, cfg, &mut rng)?;
        (branches, vec![trace])
    } else {
        let trained = exec.try_map(ens.branches, |i| {
            let s = streams[i];
            let branch = BranchParams::init(input_dim, &ens.hidden, num_classes, s)?;
            train_branch(branch, inputs, labels, cfg, &mut RngStream::new(s.shuffle))
        })?;
        trained.into_iter().unzip()
    };

    let manifest = EnsembleManifest {
        format: EnsembleManifest::FORMAT,
        branches: ens.branches,
        input_dim,
        hidden: ens.hidden.clone(),
        feature_dim: ens.feature_dim(),
        num_classes,
        master_seed,
        seeds,
        basis_seeds: branches.iter().map(|b| b.basis.source_seed).collect(),
        share_backbone: ens.share_backbone,
        lambda: cfg.lambda,
        epochs: cfg.epochs,
    };
    Ok((Ensemble { branches, manifest }, traces))
}
