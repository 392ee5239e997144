use serde::{Deserialize, Serialize};

use super::{DatasetTable, Domain};
use crate::error::{Error, Result};
use crate::linalg::{matmul, randn_matrix, solve, Matrix, RngStream};

/// Gaussian-cluster source domain plus a rotated and translated target domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub source_classes: usize,
    pub source_per_class: usize,
    pub target_classes: usize,
    pub target_per_class: usize,
    pub target_unlabeled: usize,
    pub dim: usize,
    /// Std of the class centers.
    pub class_spread: f64,
    /// Within-class std.
    pub noise: f64,
    /// Domain shift magnitude; 0 disables both rotation and translation.
    pub shift: f64,
    /// Reuse the source class centers (and label space) for the target.
    pub shared_classes: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            source_classes: 20,
            source_per_class: 60,
            target_classes: 8,
            target_per_class: 80,
            target_unlabeled: 400,
            dim: 16,
            class_spread: 3.0,
            noise: 1.0,
            shift: 1.0,
            shared_classes: false,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.source_classes == 0
            || self.source_per_class == 0
            || self.target_classes == 0
            || self.target_per_class == 0
            || self.dim == 0
        {
            return Err(Error::Config("synthetic class counts, sizes and dim must be >= 1".into()));
        }
        if self.shared_classes && self.target_classes > self.source_classes {
            return Err(Error::Config(
                "shared_classes needs target_classes <= source_classes".into(),
            ));
        }
        for (name, v) in [("class_spread", self.class_spread), ("noise", self.noise), ("shift", self.shift)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("synthetic.{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// One-line description recorded alongside generated files.
    pub fn metadata_line(&self, seed: u64) -> String {
        format!(
            "# generator: seed={seed} shift={} source={}x{} target={}x{} unlabeled={} dim={} spread={} noise={} shared_classes={}",
            self.shift,
            self.source_classes,
            self.source_per_class,
            self.target_classes,
            self.target_per_class,
            self.target_unlabeled,
            self.dim,
            self.class_spread,
            self.noise,
            self.shared_classes
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDomains {
    pub source: DatasetTable,
    pub target: DatasetTable,
    pub target_unlabeled: DatasetTable,
}

/// Cayley transform `(I − sK/2)⁻¹ (I + sK/2)` of a random unit-norm
/// skew-symmetric `K`: orthogonal for every `s`, the identity at `s = 0`.
fn random_rotation(rng: &mut RngStream, dim: usize, s: f64) -> Result<Matrix> {
    let g = randn_matrix(rng, dim, dim);
    let k = g.sub(&g.transpose())?;
    let norm = k.frobenius_norm_sq().sqrt();
    let k = if norm > 0.0 { k.scale(s / (2.0 * norm)) } else { k };
    let eye = Matrix::identity(dim);
    solve(&eye.sub(&k)?, &eye.add(&k)?)
}

fn draw_instances(
    rng: &mut RngStream,
    centers: &Matrix,
    labels: &[usize],
    noise: f64,
    transform: Option<(&Matrix, &[f64])>,
) -> Result<Matrix> {
    let dim = centers.cols();
    let mut x = Matrix::zeros(labels.len(), dim);
    for (i, &c) in labels.iter().enumerate() {
        for j in 0..dim {
            x[(i, j)] = centers[(c, j)] + noise * rng.standard_normal();
        }
    }
    if let Some((rotation, translation)) = transform {
        x = matmul(&x, &rotation.transpose())?;
        for i in 0..x.rows() {
            for (v, t) in x.row_mut(i).iter_mut().zip(translation) {
                *v += t;
            }
        }
    }
    Ok(x)
}

/// Generates labeled source, labeled target and unlabeled target tables.
/// Labeled rows are grouped by class; the unlabeled pool draws classes uniformly.
pub fn make_synthetic_domains(cfg: &SyntheticConfig, rng: &mut RngStream) -> Result<SyntheticDomains> {
    cfg.validate()?;
    let source_centers = randn_matrix(rng, cfg.source_classes, cfg.dim).scale(cfg.class_spread);
    let target_centers = if cfg.shared_classes {
        source_centers.select_rows(&(0..cfg.target_classes).collect::<Vec<_>>())
    } else {
        randn_matrix(rng, cfg.target_classes, cfg.dim).scale(cfg.class_spread)
    };
    let rotation = random_rotation(rng, cfg.dim, cfg.shift)?;
    let translation: Vec<f64> = (0..cfg.dim).map(|_| cfg.shift * rng.standard_normal()).collect();
    let transform = Some((&rotation, translation.as_slice()));

    let source_labels: Vec<usize> = (0..cfg.source_classes)
        .flat_map(|c| std::iter::repeat_n(c, cfg.source_per_class))
        .collect();
    let source_x = draw_instances(rng, &source_centers, &source_labels, cfg.noise, None)?;

    let target_labels: Vec<usize> = (0..cfg.target_classes)
        .flat_map(|c| std::iter::repeat_n(c, cfg.target_per_class))
        .collect();
    let target_x = draw_instances(rng, &target_centers, &target_labels, cfg.noise, transform)?;

    let pool_labels: Vec<usize> = (0..cfg.target_unlabeled).map(|_| rng.below(cfg.target_classes)).collect();
    let pool_x = draw_instances(rng, &target_centers, &pool_labels, cfg.noise, transform)?;

    Ok(SyntheticDomains {
        source: DatasetTable::labeled(source_x, source_labels, Domain::Source)?,
        target: DatasetTable::labeled(target_x, target_labels, Domain::Target)?,
        target_unlabeled: DatasetTable::unlabeled(pool_x, Domain::Target),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episodic::{sample_episode, EpisodeSpec};

    #[test]
    fn sizes_and_labels() {
        let d = make_synthetic_domains(&SyntheticConfig::default(), &mut RngStream::new(1)).unwrap();
        assert_eq!(d.source.len(), 1200);
        assert_eq!(d.source.num_classes(), 20);
        assert_eq!(d.target.len(), 640);
        assert_eq!(d.target.num_classes(), 8);
        assert_eq!(d.target_unlabeled.len(), 400);
        assert!(d.target_unlabeled.labels.is_none());
        assert_eq!(d.source.dim(), 16);
    }

    #[test]
    fn rotation_is_orthogonal_and_identity_at_zero() {
        let r = random_rotation(&mut RngStream::new(2), 6, 1.5).unwrap();
        let rtr = matmul(&r.transpose(), &r).unwrap();
        assert!(rtr.sub(&Matrix::identity(6)).unwrap().max_abs() < 1e-12);
        let r0 = random_rotation(&mut RngStream::new(2), 6, 0.0).unwrap();
        assert_eq!(r0, Matrix::identity(6));
    }

    #[test]
    fn zero_shift_shared_classes_match_in_mean() {
        let cfg = SyntheticConfig {
            source_classes: 4,
            source_per_class: 250,
            target_classes: 4,
            target_per_class: 250,
            target_unlabeled: 0,
            shift: 0.0,
            shared_classes: true,
            ..Default::default()
        };
        let d = make_synthetic_domains(&cfg, &mut RngStream::new(11)).unwrap();
        let n = d.source.len() as f64;
        // balanced classes on shared centers: the per-dimension mean gap is N(0, 2 noise² / n)
        let sigma = (2.0 * cfg.noise * cfg.noise / n).sqrt();
        let ms = d.source.instances.column_sums();
        let mt = d.target.instances.column_sums();
        for (a, b) in ms.iter().zip(&mt) {
            assert!(((a - b) / n).abs() <= 3.0 * sigma, "gap {}", (a - b) / n);
        }
    }

    #[test]
    fn singleton_classes_cannot_feed_an_episode() {
        let cfg = SyntheticConfig {
            target_per_class: 1,
            ..Default::default()
        };
        let d = make_synthetic_domains(&cfg, &mut RngStream::new(3)).unwrap();
        let spec = EpisodeSpec {
            ways: 2,
            shots: 1,
            queries: 1,
            unlabeled: 0,
        };
        let err = sample_episode(&d.target, &d.target_unlabeled, &spec, &mut RngStream::new(0)).unwrap_err();
        assert!(err.to_string().contains("insufficient"));
    }

    #[test]
    fn deterministic_csv() {
        let a = make_synthetic_domains(&SyntheticConfig::default(), &mut RngStream::new(5)).unwrap();
        let b = make_synthetic_domains(&SyntheticConfig::default(), &mut RngStream::new(5)).unwrap();
        assert_eq!(a.source.to_csv_string(), b.source.to_csv_string());
        assert_eq!(a.target_unlabeled.to_csv_string(), b.target_unlabeled.to_csv_string());
    }

    #[test]
    fn degenerate_sizes_rejected() {
        let cfg = SyntheticConfig {
            dim: 0,
            ..Default::default()
        };
        assert!(make_synthetic_domains(&cfg, &mut RngStream::new(0)).is_err());
        let cfg = SyntheticConfig {
            shift: -1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
