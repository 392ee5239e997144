use serde::{Deserialize, Serialize};

use super::{ClassifierParams, Dense, MlpParams};
use crate::error::{Error, Result};

/// Pre-training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Weight of the batch spectral penalty.
    pub lambda: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            learning_rate: 0.001,
            momentum: 0.9,
            weight_decay: 0.0005,
            epochs: 400,
            lambda: 0.001,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("train.learning_rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("train.momentum must be in [0, 1)".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("train.weight_decay must be >= 0".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config("train.lambda must be >= 0".into()));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> Sgd {
        Sgd {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }
}

/// A collection of flat parameter tensors with a fixed layout.
pub trait ParamSet: Clone {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// `self += alpha * other`.
    fn add_scaled(&mut self, alpha: f64, other: &Self) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

impl ParamSet for Dense {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.weights.as_slice(), &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weights.as_mut_slice(), &mut self.bias]
    }
}

impl ParamSet for MlpParams {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.tensors()).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }
}

impl ParamSet for ClassifierParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.weights.as_slice(), &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weights.as_mut_slice(), &mut self.bias]
    }
}

/// Classic momentum SGD with L2 weight decay folded into the gradient:
///
/// ```text
/// v ← momentum·v − lr·(g + wd·θ)
/// θ ← θ + v
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Sgd {
    pub fn step<P: ParamSet>(&self, params: &mut P, grads: &P, velocity: &mut P) -> Result<()> {
        let grads = grads.tensors();
        let mut velocity = velocity.tensors_mut();
        let mut params = params.tensors_mut();
        if grads.len() != params.len() || velocity.len() != params.len() {
            return Err(Error::Contract("parameter sets have different layouts".into()));
        }
        for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
            sgd_step(p, g, v, self)?;
        }
        Ok(())
    }
}

/// One update of a single flat tensor.
pub fn sgd_step(params: &mut [f64], grads: &[f64], velocity: &mut [f64], sgd: &Sgd) -> Result<()> {
    if grads.len() != params.len() || velocity.len() != params.len() {
        return Err(Error::shape(
            "sgd_step",
            (params.len(), 1),
            (grads.len(), velocity.len()),
        ));
    }
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = sgd.momentum * *v - sgd.learning_rate * (g + sgd.weight_decay * *p);
        *p += *v;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sgd(lr: f64, momentum: f64, wd: f64) -> Sgd {
        Sgd {
            learning_rate: lr,
            momentum,
            weight_decay: wd,
        }
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut p = vec![1.5, -2.0];
        let mut v = vec![0.0; 2];
        sgd_step(&mut p, &[0.0, 0.0], &mut v, &sgd(0.1, 0.9, 0.0)).unwrap();
        assert_eq!(p, vec![1.5, -2.0]);
    }

    #[test]
    fn plain_step() {
        let mut p = vec![1.0];
        let mut v = vec![0.0];
        sgd_step(&mut p, &[1.0], &mut v, &sgd(0.1, 0.0, 0.0)).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn momentum_recurrence() {
        let (lr, mu, wd, g) = (0.01, 0.9, 0.0005, 2.0);
        let mut p = vec![1.0];
        let mut v = vec![0.0];
        let (mut theta, mut vel) = (1.0f64, 0.0f64);
        for _ in 0..2 {
            sgd_step(&mut p, &[g], &mut v, &sgd(lr, mu, wd)).unwrap();
            vel = mu * vel - lr * (g + wd * theta);
            theta += vel;
        }
        assert_eq!(p[0], theta);
        // hand-expanded: v1 = -lr(g + wd), θ1 = 1 + v1, v2 = mu v1 - lr(g + wd θ1)
        let v1 = -lr * (g + wd);
        let t1 = 1.0 + v1;
        let v2 = mu * v1 - lr * (g + wd * t1);
        assert!((p[0] - (t1 + v2)).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = vec![0.0; 2];
        let mut v = vec![0.0; 2];
        assert!(sgd_step(&mut p, &[0.0], &mut v, &sgd(0.1, 0.0, 0.0)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            momentum: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            lambda: -0.1,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
