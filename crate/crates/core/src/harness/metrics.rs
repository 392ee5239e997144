use crate::error::{Error, Result};

/// Fraction of positions where `predicted` equals `truth`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Contract("accuracy of an empty query set".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Normal-approximation 95% half-width `1.96 s / √T`, with `s` the sample
/// standard deviation.
pub fn confidence_interval_95(values: &[f64]) -> Result<f64> {
    let t = values.len();
    if t < 2 {
        return Err(Error::Contract(format!("confidence interval needs >= 2 values, got {t}")));
    }
    if values.iter().all(|&v| v == values[0]) {
        return Ok(0.0);
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (t - 1) as f64;
    Ok(1.96 * var.sqrt() / (t as f64).sqrt())
}
