use serde::{Deserialize, Serialize};

use super::DatasetTable;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, RngStream};

/// K-way N-shot task shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeSpec {
    pub ways: usize,
    pub shots: usize,
    /// Query instances per class.
    pub queries: usize,
    /// Unlabeled instances drawn per episode.
    pub unlabeled: usize,
}

impl Default for EpisodeSpec {
    fn default() -> Self {
        Self {
            ways: 5,
            shots: 5,
            queries: 15,
            unlabeled: 100,
        }
    }
}

impl EpisodeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ways < 2 || self.shots < 1 || self.queries < 1 {
            return Err(Error::Config(format!(
                "episode needs ways >= 2, shots >= 1, queries >= 1 (got {}/{}/{})",
                self.ways, self.shots, self.queries
            )));
        }
        Ok(())
    }
}

/// One few-shot task. Labels are episode-local, in `[0, ways)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub support: Matrix,
    pub support_labels: Vec<usize>,
    pub query: Matrix,
    /// Ground truth, used only for scoring.
    pub query_labels: Vec<usize>,
    pub unlabeled: Matrix,
    /// Episode class `k` is dataset class `class_map[k]`.
    pub class_map: Vec<usize>,
    /// Row indices into the labeled table.
    pub support_ids: Vec<usize>,
    pub query_ids: Vec<usize>,
    /// Row indices into the unlabeled pool.
    pub unlabeled_ids: Vec<usize>,
}

impl Episode {
    pub fn ways(&self) -> usize {
        self.class_map.len()
    }
}

/// Samples `ways` classes, then `shots + queries` instances of each, and
/// `spec.unlabeled` pool instances, all without replacement.
pub fn sample_episode(
    data: &DatasetTable,
    unlabeled: &DatasetTable,
    spec: &EpisodeSpec,
    rng: &mut RngStream,
) -> Result<Episode> {
    spec.validate()?;
    if !unlabeled.is_empty() && unlabeled.dim() != data.dim() {
        return Err(Error::Data(format!(
            "unlabeled pool has dimension {}, labeled data {}",
            unlabeled.dim(),
            data.dim()
        )));
    }
    let per_class = spec.shots + spec.queries;
    let members = data.class_members()?;
    let eligible: Vec<usize> = (0..members.len()).filter(|&c| members[c].len() >= per_class).collect();
    if eligible.len() < spec.ways {
        return Err(Error::Data(format!(
            "insufficient instances: {} of {} classes have >= {per_class} instances, {} ways requested",
            eligible.len(),
            members.len(),
            spec.ways
        )));
    }
    if unlabeled.len() < spec.unlabeled {
        return Err(Error::Data(format!(
            "unlabeled pool has {} instances, {} requested",
            unlabeled.len(),
            spec.unlabeled
        )));
    }

    let class_map: Vec<usize> = rng
        .sample_indices(eligible.len(), spec.ways)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    let mut support_ids = Vec::with_capacity(spec.ways * spec.shots);
    let mut query_ids = Vec::with_capacity(spec.ways * spec.queries);
    let mut support_labels = Vec::with_capacity(spec.ways * spec.shots);
    let mut query_labels = Vec::with_capacity(spec.ways * spec.queries);
    for (local, &class) in class_map.iter().enumerate() {
        let pool = &members[class];
        let picks = rng.sample_indices(pool.len(), per_class);
        for (n, &p) in picks.iter().enumerate() {
            if n < spec.shots {
                support_ids.push(pool[p]);
                support_labels.push(local);
            } else {
                query_ids.push(pool[p]);
                query_labels.push(local);
            }
        }
    }
    let unlabeled_ids = rng.sample_indices(unlabeled.len(), spec.unlabeled);

    Ok(Episode {
        support: data.instances.select_rows(&support_ids),
        support_labels,
        query: data.instances.select_rows(&query_ids),
        query_labels,
        unlabeled: if spec.unlabeled == 0 {
            Matrix::zeros(0, data.dim())
        } else {
            unlabeled.instances.select_rows(&unlabeled_ids)
        },
        class_map,
        support_ids,
        query_ids,
        unlabeled_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episodic::Domain;

    fn table(classes: usize, per_class: usize) -> DatasetTable {
        let n = classes * per_class;
        let x = Matrix::from_fn(n, 2, |i, j| (i * 2 + j) as f64);
        let y = (0..n).map(|i| i / per_class).collect();
        DatasetTable::labeled(x, y, Domain::Target).unwrap()
    }

    fn pool(n: usize) -> DatasetTable {
        DatasetTable::unlabeled(Matrix::from_fn(n, 2, |i, _| -(i as f64)), Domain::Target)
    }

    #[test]
    fn five_way_five_shot_sizes() {
        let spec = EpisodeSpec {
            unlabeled: 10,
            ..EpisodeSpec::default()
        };
        let ep = sample_episode(&table(8, 30), &pool(50), &spec, &mut RngStream::new(1)).unwrap();
        assert_eq!(ep.support.rows(), 25);
        assert_eq!(ep.query.rows(), 75);
        assert_eq!(ep.unlabeled.rows(), 10);
        assert!(ep.support_labels.iter().chain(&ep.query_labels).all(|&y| y < 5));
        for id in &ep.support_ids {
            assert!(!ep.query_ids.contains(id));
        }
    }

    #[test]
    fn exhausts_tiny_dataset() {
        let spec = EpisodeSpec {
            ways: 2,
            shots: 1,
            queries: 1,
            unlabeled: 0,
        };
        let ep = sample_episode(&table(2, 2), &pool(0), &spec, &mut RngStream::new(3)).unwrap();
        let mut all: Vec<usize> = ep.support_ids.iter().chain(&ep.query_ids).copied().collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = EpisodeSpec::default();
        let a = sample_episode(&table(6, 25), &pool(200), &spec, &mut RngStream::new(8)).unwrap();
        let b = sample_episode(&table(6, 25), &pool(200), &spec, &mut RngStream::new(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn insufficient_data_errors() {
        let spec = EpisodeSpec {
            ways: 2,
            shots: 1,
            queries: 1,
            unlabeled: 0,
        };
        let err = sample_episode(&table(2, 1), &pool(0), &spec, &mut RngStream::new(0)).unwrap_err();
        assert!(err.to_string().contains("insufficient"));
        let spec = EpisodeSpec { unlabeled: 5, ..spec };
        assert!(sample_episode(&table(2, 2), &pool(4), &spec, &mut RngStream::new(0)).is_err());
        assert!(EpisodeSpec { ways: 1, ..EpisodeSpec::default() }.validate().is_err());
    }
}
