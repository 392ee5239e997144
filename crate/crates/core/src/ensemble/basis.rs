use super::expect_stage;
use crate::error::{Error, Result};
use crate::linalg::{matmul, random_symmetric, sym_eig, Matrix, RngStream};
use crate::nn::{FeatureBatch, FeatureStage};

/// Fixed orthogonal `d × d` feature transform.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBasis {
    pub matrix: Matrix,
    /// Seed of the random symmetric matrix whose eigenvectors form `matrix`.
    pub source_seed: u64,
}

impl ProjectionBasis {
    /// Eigenvector matrix of a seeded random symmetric `d × d` matrix.
    pub fn from_seed(seed: u64, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Config("projection dimension must be >= 1".into()));
        }
        let z = random_symmetric(&mut RngStream::new(seed), d);
        let eig = sym_eig(&z)?;
        Ok(Self {
            matrix: eig.vectors,
            source_seed: seed,
        })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            matrix: Matrix::identity(d),
            source_seed: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// `‖EᵀE − I‖` in the entrywise max norm.
    pub fn orthogonality_error(&self) -> f64 {
        let ete = matmul(&self.matrix.transpose(), &self.matrix).expect("square");
        ete.sub(&Matrix::identity(self.dim())).expect("same shape").max_abs()
    }
}

/// One basis per seed. Seeds must be pairwise distinct.
pub fn gen_orthogonal_bases(d: usize, seeds: &[u64]) -> Result<Vec<ProjectionBasis>> {
    for (i, a) in seeds.iter().enumerate() {
        if seeds[..i].contains(a) {
            return Err(Error::Config(format!("duplicate branch seed {a}")));
        }
    }
    seeds.iter().map(|&s| ProjectionBasis::from_seed(s, d)).collect()
}

/// `E · F`, column by column.
pub fn project(basis: &ProjectionBasis, f: &FeatureBatch) -> Result<FeatureBatch> {
    expect_stage(f, FeatureStage::Backbone)?;
    Ok(FeatureBatch {
        matrix: matmul(&basis.matrix, &f.matrix)?,
        stage: FeatureStage::Projected,
    })
}
