use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, RngStream};

/// Fully connected layer, `weights` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub(crate) fn affine(&self, h: &Matrix) -> Result<Matrix> {
        affine(&self.weights, &self.bias, h)
    }
}

/// `W h + b` applied to every column of `h`.
pub(crate) fn affine(weights: &Matrix, bias: &[f64], h: &Matrix) -> Result<Matrix> {
    let mut z = weights.matmul(h)?;
    for (i, b) in bias.iter().enumerate() {
        for v in z.row_mut(i) {
            *v += b;
        }
    }
    Ok(z)
}

/// Backbone feature extractor: a stack of dense layers, each followed by ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
}

impl MlpParams {
    /// He-normal weights, zero biases.
    pub fn init(input_dim: usize, widths: &[usize], rng: &mut RngStream) -> Result<Self> {
        if input_dim == 0 || widths.is_empty() || widths.contains(&0) {
            return Err(Error::Config(format!(
                "invalid MLP shape: input {input_dim}, widths {widths:?}"
            )));
        }
        let mut layers = Vec::with_capacity(widths.len());
        let mut fan_in = input_dim;
        for &width in widths {
            let std = (2.0 / fan_in as f64).sqrt();
            let weights = Matrix::from_fn(width, fan_in, |_, _| rng.normal(0.0, std));
            layers.push(Dense {
                weights,
                bias: vec![0.0; width],
            });
            fan_in = width;
        }
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Contract("MLP needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::Contract(format!("layer {i}: bias length mismatch")));
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(Error::shape(
                    "mlp layers",
                    layers[i - 1].weights.shape(),
                    l.weights.shape(),
                ));
            }
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::out_dim)
    }
}

/// Linear head, `weights` is `classes × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl ClassifierParams {
    /// Gaussian weights with the given std, zero bias.
    pub fn init(num_classes: usize, dim: usize, std: f64, rng: &mut RngStream) -> Self {
        Self {
            weights: Matrix::from_fn(num_classes, dim, |_, _| rng.normal(0.0, std)),
            bias: vec![0.0; num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    /// `K × b` logits for `d × b` features.
    pub fn logits(&self, features: &Matrix) -> Result<Matrix> {
        affine(&self.weights, &self.bias, features)
    }
}

/// Which side of the projection a feature batch lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureStage {
    Backbone,
    Projected,
}

/// `d × b` features, column `j` belongs to instance `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch {
    pub matrix: Matrix,
    pub stage: FeatureStage,
}

impl FeatureBatch {
    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn batch_size(&self) -> usize {
        self.matrix.cols()
    }
}

/// Backbone features for `inputs` (one instance per row).
pub fn forward_features(params: &MlpParams, inputs: &Matrix) -> Result<FeatureBatch> {
    if inputs.cols() != params.input_dim() {
        return Err(Error::shape(
            "forward_features",
            inputs.shape(),
            params.layers[0].weights.shape(),
        ));
    }
    let mut h = inputs.transpose();
    for layer in &params.layers {
        h = layer.affine(&h)?.map(relu);
    }
    Ok(FeatureBatch {
        matrix: h,
        stage: FeatureStage::Backbone,
    })
}

#[inline]
pub(crate) fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}
