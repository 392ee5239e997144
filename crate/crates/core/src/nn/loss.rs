use super::{FeatureBatch, FeatureStage};
use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm_sq, Matrix};

fn check_labels(logits: &Matrix, labels: &[usize]) -> Result<()> {
    if logits.cols() == 0 {
        return Err(Error::Contract("empty batch".into()));
    }
    if labels.len() != logits.cols() {
        return Err(Error::Contract(format!(
            "{} labels for a batch of {}",
            labels.len(),
            logits.cols()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= logits.rows()) {
        return Err(Error::Contract(format!(
            "label {bad} out of range for {} classes",
            logits.rows()
        )));
    }
    Ok(())
}

/// Column-wise softmax of `K × b` logits, max-subtracted.
pub fn softmax_columns(logits: &Matrix) -> Matrix {
    let (k, b) = logits.shape();
    let mut out = Matrix::zeros(k, b);
    for j in 0..b {
        let max = (0..k).map(|i| logits[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for i in 0..k {
            let e = (logits[(i, j)] - max).exp();
            out[(i, j)] = e;
            sum += e;
        }
        for i in 0..k {
            out[(i, j)] /= sum;
        }
    }
    out
}

/// Mean over the batch of `-log softmax(logits)[label]`.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(logits, labels)?;
    let k = logits.rows();
    let mut total = 0.0;
    for (j, &y) in labels.iter().enumerate() {
        let max = (0..k).map(|i| logits[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
        let lse = (0..k).map(|i| (logits[(i, j)] - max).exp()).sum::<f64>().ln() + max;
        total += lse - logits[(y, j)];
    }
    Ok(total / labels.len() as f64)
}

/// Batch spectral penalty: the sum of squared singular values of the
/// projected feature matrix, evaluated as its squared Frobenius norm.
pub fn bsr_loss(a: &FeatureBatch) -> Result<f64> {
    if a.stage != FeatureStage::Projected {
        return Err(Error::Contract(
            "spectral penalty expects projected features".into(),
        ));
    }
    Ok(frobenius_norm_sq(&a.matrix))
}

/// `cross_entropy + lambda * bsr_loss`.
pub fn total_loss(logits: &Matrix, labels: &[usize], a: &FeatureBatch, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::Contract(format!("lambda must be >= 0, got {lambda}")));
    }
    let ce = cross_entropy(logits, labels)?;
    if lambda == 0.0 {
        return Ok(ce);
    }
    Ok(ce + lambda * bsr_loss(a)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{randn_matrix, singular_values, RngStream};

    fn projected(m: Matrix) -> FeatureBatch {
        FeatureBatch {
            matrix: m,
            stage: FeatureStage::Projected,
        }
    }

    #[test]
    fn uniform_logits() {
        let ce = cross_entropy(&Matrix::zeros(5, 3), &[0, 2, 4]).unwrap();
        assert!((ce - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn saturated_logit() {
        let mut logits = Matrix::zeros(4, 1);
        logits[(2, 0)] = 30.0;
        assert!(cross_entropy(&logits, &[2]).unwrap() < 1e-9);
    }

    #[test]
    fn two_column_oracle() {
        let logits = Matrix::from_rows(&[[1.0, 2.0], [3.0, 1.0]]).unwrap();
        // column 0 = (1, 3), label 1; column 1 = (2, 1), label 0
        let sigma = |x: f64| 1.0 / (1.0 + (-x).exp());
        let expected = -(sigma(3.0 - 1.0).ln() + sigma(2.0 - 1.0).ln()) / 2.0;
        let ce = cross_entropy(&logits, &[1, 0]).unwrap();
        assert!((ce - expected).abs() < 1e-14);
    }

    #[test]
    fn shift_invariance() {
        let mut rng = RngStream::new(12);
        let logits = randn_matrix(&mut rng, 5, 7);
        let labels = [0, 1, 2, 3, 4, 0, 1];
        let shifted = logits.map(|v| v + 123.456);
        let a = cross_entropy(&logits, &labels).unwrap();
        let b = cross_entropy(&shifted, &labels).unwrap();
        assert!((a - b).abs() <= 1e-10);
    }

    #[test]
    fn label_errors() {
        assert!(cross_entropy(&Matrix::zeros(2, 2), &[0, 2]).is_err());
        assert!(cross_entropy(&Matrix::zeros(2, 2), &[0]).is_err());
        assert!(cross_entropy(&Matrix::zeros(2, 0), &[]).is_err());
    }

    #[test]
    fn bsr_examples() {
        assert_eq!(bsr_loss(&projected(Matrix::zeros(4, 3))).unwrap(), 0.0);
        assert_eq!(bsr_loss(&projected(Matrix::identity(6))).unwrap(), 6.0);
        let a = randn_matrix(&mut RngStream::new(5), 8, 16);
        let sv: f64 = singular_values(&a).unwrap().iter().map(|s| s * s).sum();
        let bsr = bsr_loss(&projected(a)).unwrap();
        assert!((bsr - sv).abs() <= 1e-8 * bsr);
    }

    #[test]
    fn bsr_requires_projected_stage() {
        let f = FeatureBatch {
            matrix: Matrix::zeros(2, 2),
            stage: FeatureStage::Backbone,
        };
        assert!(matches!(bsr_loss(&f), Err(Error::Contract(_))));
    }

    #[test]
    fn total_loss_composition() {
        let uniform = Matrix::zeros(5, 4);
        let labels = [0, 1, 2, 3];
        let zero = projected(Matrix::zeros(3, 4));
        assert_eq!(total_loss(&uniform, &labels, &zero, 0.001).unwrap(), 5f64.ln());

        let mut rng = RngStream::new(31);
        let logits = randn_matrix(&mut rng, 5, 4);
        let feats = projected(randn_matrix(&mut rng, 3, 4));
        let ce = cross_entropy(&logits, &labels).unwrap();
        assert_eq!(total_loss(&logits, &labels, &feats, 0.0).unwrap(), ce);
        let expected = ce + 0.001 * feats.matrix.frobenius_norm_sq();
        assert!((total_loss(&logits, &labels, &feats, 0.001).unwrap() - expected).abs() < 1e-14);
        assert!(total_loss(&logits, &labels, &feats, -1.0).is_err());
    }

    #[test]
    fn total_loss_monotone_in_lambda() {
        let mut rng = RngStream::new(32);
        let logits = randn_matrix(&mut rng, 3, 4);
        let feats = projected(randn_matrix(&mut rng, 3, 4));
        let labels = [0, 1, 2, 0];
        let mut prev = f64::NEG_INFINITY;
        for lambda in [0.0, 1e-4, 1e-3, 1e-2, 1.0] {
            let l = total_loss(&logits, &labels, &feats, lambda).unwrap();
            assert!(l >= prev);
            prev = l;
        }
    }
}
