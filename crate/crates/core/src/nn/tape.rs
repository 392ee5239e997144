use super::layers::relu;
use super::{cross_entropy, softmax_columns, ClassifierParams, FeatureBatch, FeatureStage, MlpParams};
use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm_sq, matmul, Matrix};

/// Loss mixture `ce · CE + bsr · ‖A‖_F²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub ce: f64,
    pub bsr: f64,
}

impl LossWeights {
    /// Classification loss plus `lambda` times the spectral penalty.
    pub fn regularized(lambda: f64) -> Self {
        Self { ce: 1.0, bsr: lambda }
    }

    pub fn ce_only() -> Self {
        Self { ce: 1.0, bsr: 0.0 }
    }

    pub fn bsr_only() -> Self {
        Self { ce: 0.0, bsr: 1.0 }
    }
}

/// Which parameters receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradScope {
    Full,
    ClassifierOnly,
}

/// Backbone, optional fixed projection, classifier head.
#[derive(Debug, Clone, Copy)]
pub struct Network<'a> {
    pub backbone: &'a MlpParams,
    /// `d × d`, never trained.
    pub projection: Option<&'a Matrix>,
    pub classifier: &'a ClassifierParams,
}

/// Activations cached by a forward pass.
#[derive(Debug, Clone)]
pub struct GradTape {
    /// `h[0]` is the transposed input; `h[l]` is the output of layer `l`.
    h: Vec<Matrix>,
    /// Pre-activations of each layer.
    z: Vec<Matrix>,
    projected: Matrix,
    logits: Matrix,
}

impl GradTape {
    pub fn logits(&self) -> &Matrix {
        &self.logits
    }

    pub fn backbone_features(&self) -> FeatureBatch {
        FeatureBatch {
            matrix: self.h.last().cloned().unwrap_or_else(|| Matrix::zeros(0, 0)),
            stage: FeatureStage::Backbone,
        }
    }

    pub fn projected_features(&self) -> FeatureBatch {
        FeatureBatch {
            matrix: self.projected.clone(),
            stage: FeatureStage::Projected,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.logits.cols()
    }

    /// Per-layer pre-activations (`width × batch`).
    pub fn pre_activations(&self) -> &[Matrix] {
        &self.z
    }
}

/// Parameter gradients; `backbone` is `None` for [`GradScope::ClassifierOnly`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub backbone: Option<MlpParams>,
    pub classifier: ClassifierParams,
}

impl<'a> Network<'a> {
    fn check_dims(&self) -> Result<()> {
        let d = self.backbone.feature_dim();
        if let Some(e) = self.projection {
            if e.shape() != (d, d) {
                return Err(Error::shape("projection", e.shape(), (d, d)));
            }
        }
        if self.classifier.dim() != d {
            return Err(Error::shape(
                "classifier",
                self.classifier.weights.shape(),
                (self.classifier.num_classes(), d),
            ));
        }
        Ok(())
    }

    /// Forward pass over `inputs` (one instance per row).
    pub fn forward(&self, inputs: &Matrix) -> Result<GradTape> {
        self.check_dims()?;
        if inputs.cols() != self.backbone.input_dim() {
            return Err(Error::shape(
                "network input",
                inputs.shape(),
                self.backbone.layers[0].weights.shape(),
            ));
        }
        let mut h = vec![inputs.transpose()];
        let mut z = Vec::with_capacity(self.backbone.layers.len());
        for layer in &self.backbone.layers {
            let pre = layer.affine(h.last().expect("non-empty"))?;
            h.push(pre.map(relu));
            z.push(pre);
        }
        let features = h.last().expect("non-empty");
        let projected = match self.projection {
            Some(e) => matmul(e, features)?,
            None => features.clone(),
        };
        let logits = self.classifier.logits(&projected)?;
        Ok(GradTape {
            h,
            z,
            projected,
            logits,
        })
    }

    pub fn loss(&self, tape: &GradTape, labels: &[usize], weights: LossWeights) -> Result<f64> {
        let mut loss = 0.0;
        if weights.ce != 0.0 {
            loss += weights.ce * cross_entropy(&tape.logits, labels)?;
        }
        if weights.bsr != 0.0 {
            loss += weights.bsr * frobenius_norm_sq(&tape.projected);
        }
        Ok(loss)
    }

    /// Exact reverse-mode gradients of `loss(tape, labels, weights)`.
    pub fn backward(
        &self,
        tape: &GradTape,
        labels: &[usize],
        weights: LossWeights,
        scope: GradScope,
    ) -> Result<Gradients> {
        self.check_dims()?;
        if tape.z.len() != self.backbone.layers.len() {
            return Err(Error::Contract("tape was recorded on a different network".into()));
        }
        let dlogits = logit_gradient(&tape.logits, labels, weights.ce)?;
        let classifier = ClassifierParams {
            weights: matmul(&dlogits, &tape.projected.transpose())?,
            bias: dlogits.row_sums(),
        };
        if scope == GradScope::ClassifierOnly {
            return Ok(Gradients {
                backbone: None,
                classifier,
            });
        }

        let mut dprojected = matmul(&self.classifier.weights.transpose(), &dlogits)?;
        if weights.bsr != 0.0 {
            dprojected = dprojected.add(&tape.projected.scale(2.0 * weights.bsr))?;
        }
        let mut dh = match self.projection {
            Some(e) => matmul(&e.transpose(), &dprojected)?,
            None => dprojected,
        };

        let mut layer_grads = Vec::with_capacity(self.backbone.layers.len());
        for (l, layer) in self.backbone.layers.iter().enumerate().rev() {
            let pre = &tape.z[l];
            let mut dz = dh;
            for (g, &p) in dz.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                if p <= 0.0 {
                    *g = 0.0;
                }
            }
            let dw = matmul(&dz, &tape.h[l].transpose())?;
            let db = dz.row_sums();
            dh = matmul(&layer.weights.transpose(), &dz)?;
            layer_grads.push(super::Dense {
                weights: dw,
                bias: db,
            });
        }
        layer_grads.reverse();
        Ok(Gradients {
            backbone: Some(MlpParams { layers: layer_grads }),
            classifier,
        })
    }
}

/// `d(ce_weight · CE)/d logits = ce_weight · (softmax − onehot) / b`.
fn logit_gradient(logits: &Matrix, labels: &[usize], ce_weight: f64) -> Result<Matrix> {
    let (k, b) = logits.shape();
    let mut d = Matrix::zeros(k, b);
    if ce_weight == 0.0 {
        return Ok(d);
    }
    // validates labels
    cross_entropy(logits, labels)?;
    let probs = softmax_columns(logits);
    let scale = ce_weight / b as f64;
    for j in 0..b {
        for i in 0..k {
            let target = if labels[j] == i { 1.0 } else { 0.0 };
            d[(i, j)] = scale * (probs[(i, j)] - target);
        }
    }
    Ok(d)
}

/// Cross-entropy of a linear head on fixed `d × b` features, and its gradient
/// with respect to the head.
pub fn head_loss_and_grad(
    head: &ClassifierParams,
    features: &Matrix,
    labels: &[usize],
) -> Result<(f64, ClassifierParams)> {
    let logits = head.logits(features)?;
    let loss = cross_entropy(&logits, labels)?;
    let dlogits = logit_gradient(&logits, labels, 1.0)?;
    Ok((
        loss,
        ClassifierParams {
            weights: matmul(&dlogits, &features.transpose())?,
            bias: dlogits.row_sums(),
        },
    ))
}
