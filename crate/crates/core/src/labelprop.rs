//! Transductive refinement over a KNN similarity graph.
//!
//! The graph keeps Gaussian affinities `exp(−‖fᵢ−fⱼ‖² / 2σ̄²)` on the
//! symmetric union of each node's `k` nearest neighbours, where `σ̄` is the
//! mean distance to the `k`-th neighbour. Scores solve `(I − αS) F = Y` with
//! `S = D^{-1/2} W D^{-1/2}`; the iterative form `F ← αSF + (1−α)Y`
//! converges to `(1−α)` times that solution.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio::write_atomic;
use crate::linalg::{matmul, solve, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpMode {
    ClosedForm,
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LpConfig {
    pub k_neighbors: usize,
    pub alpha: f64,
    pub mode: LpMode,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for LpConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 10,
            alpha: 0.5,
            mode: LpMode::ClosedForm,
            max_iters: 1000,
            tol: 1e-10,
        }
    }
}

impl LpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors == 0 {
            return Err(Error::Config("lp.k_neighbors must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("lp.alpha must be in (0, 1), got {}", self.alpha)));
        }
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(Error::Config("lp.tol must be > 0 and lp.max_iters >= 1".into()));
        }
        Ok(())
    }
}

/// Affinity graph and its symmetric normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct LpGraph {
    /// Symmetric, non-negative, zero diagonal.
    pub weights: Matrix,
    /// `D^{-1/2} W D^{-1/2}`; rows of isolated nodes are zero.
    pub normalized: Matrix,
    /// Kernel bandwidth `σ̄`.
    pub bandwidth: f64,
}

impl LpGraph {
    pub fn len(&self) -> usize {
        self.weights.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Graph from an explicit affinity matrix.
    pub fn from_weights(weights: Matrix) -> Result<Self> {
        if !weights.is_symmetric(0.0) {
            return Err(Error::Contract("affinity matrix must be symmetric".into()));
        }
        let n = weights.rows();
        if (0..n).any(|i| weights[(i, i)] != 0.0) || weights.as_slice().iter().any(|&w| w < 0.0) {
            return Err(Error::Contract(
                "affinities must be non-negative with a zero diagonal".into(),
            ));
        }
        let normalized = normalize(&weights);
        Ok(Self {
            weights,
            normalized,
            bandwidth: 0.0,
        })
    }
}

fn normalize(w: &Matrix) -> Matrix {
    let inv_sqrt: Vec<f64> = w
        .row_sums()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let n = w.rows();
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = w[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

/// KNN graph over the rows of `features`.
pub fn build_knn_graph(features: &Matrix, cfg: &LpConfig) -> Result<LpGraph> {
    let n = features.rows();
    let k = cfg.k_neighbors;
    if k == 0 || n < 2 || n <= k {
        return Err(Error::Config(format!(
            "KNN graph needs 1 <= k_neighbors < nodes (k = {k}, nodes = {n})"
        )));
    }
    let mut dist2 = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = features
                .row(i)
                .iter()
                .zip(features.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dist2[(i, j)] = d;
            dist2[(j, i)] = d;
        }
    }

    let mut keep = vec![false; n * n];
    let mut kth = Vec::with_capacity(n);
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| dist2[(i, a)].total_cmp(&dist2[(i, b)]).then(a.cmp(&b)));
        for &j in &others[..k] {
            keep[i * n + j] = true;
            keep[j * n + i] = true;
        }
        kth.push(dist2[(i, others[k - 1])].sqrt());
    }
    let bandwidth = kth.iter().sum::<f64>() / n as f64;
    let denom = 2.0 * bandwidth * bandwidth;

    let mut weights = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j || !keep[i * n + j] {
                continue;
            }
            let d = dist2[(i, j)];
            weights[(i, j)] = if d == 0.0 {
                1.0
            } else if denom > 0.0 {
                (-d / denom).exp()
            } else {
                0.0
            };
        }
    }
    let normalized = normalize(&weights);
    Ok(LpGraph {
        weights,
        normalized,
        bandwidth,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Contract(format!("alpha must be in [0, 1), got {alpha}")));
    }
    Ok(())
}

fn check_seeds(graph: &LpGraph, seeds: &Matrix) -> Result<()> {
    if seeds.rows() != graph.len() {
        return Err(Error::shape("label seeds", seeds.shape(), graph.weights.shape()));
    }
    Ok(())
}

/// `F* = (I − αS)⁻¹ Y` by direct solve.
pub fn propagate_closed_form(graph: &LpGraph, seeds: &Matrix, alpha: f64) -> Result<Matrix> {
    check_alpha(alpha)?;
    check_seeds(graph, seeds)?;
    let system = Matrix::identity(graph.len()).sub(&graph.normalized.scale(alpha))?;
    solve(&system, seeds)
}

/// Result of the fixed-point iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterativeOutcome {
    pub scores: Matrix,
    pub iterations: usize,
    /// False when `max_iters` ran out first; `scores` is then the last iterate.
    pub converged: bool,
}

/// `F ← αSF + (1−α)Y` from `F = Y` until successive iterates differ by at
/// most `tol` in max norm.
pub fn propagate_iterative(
    graph: &LpGraph,
    seeds: &Matrix,
    alpha: f64,
    max_iters: usize,
    tol: f64,
) -> Result<IterativeOutcome> {
    check_alpha(alpha)?;
    check_seeds(graph, seeds)?;
    let base = seeds.scale(1.0 - alpha);
    let mut f = seeds.clone();
    for it in 1..=max_iters {
        let next = matmul(&graph.normalized, &f)?.scale(alpha).add(&base)?;
        let delta = next.sub(&f)?.max_abs();
        f = next;
        if delta <= tol {
            log::debug!("label propagation converged after {it} iterations");
            return Ok(IterativeOutcome {
                scores: f,
                iterations: it,
                converged: true,
            });
        }
    }
    log::warn!("label propagation hit max_iters = {max_iters} before converging");
    Ok(IterativeOutcome {
        scores: f,
        iterations: max_iters,
        converged: false,
    })
}

/// Seed matrix: one-hot support rows followed by the query soft predictions
/// (`queries × K`, rows summing to 1).
pub fn seed_matrix(support_labels: &[usize], query_soft: &Matrix) -> Result<Matrix> {
    let k = query_soft.cols();
    if let Some(&y) = support_labels.iter().find(|&&y| y >= k) {
        return Err(Error::Contract(format!("support label {y} outside {k} classes")));
    }
    for (i, s) in query_soft.row_sums().iter().enumerate() {
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::Contract(format!("query prediction row {i} sums to {s}")));
        }
    }
    if query_soft.as_slice().iter().any(|&v| v < 0.0) {
        return Err(Error::Contract("negative query prediction".into()));
    }
    let mut y = Matrix::zeros(support_labels.len(), k);
    for (i, &label) in support_labels.iter().enumerate() {
        y[(i, label)] = 1.0;
    }
    y.vstack(query_soft)
}

/// Refined query scores (`queries × K`).
pub fn refine_scores(
    support_features: &Matrix,
    support_labels: &[usize],
    query_features: &Matrix,
    query_soft: &Matrix,
    cfg: &LpConfig,
) -> Result<Matrix> {
    if support_features.rows() != support_labels.len() {
        return Err(Error::Contract("support features and labels differ in length".into()));
    }
    if query_features.rows() != query_soft.rows() {
        return Err(Error::Contract("query features and predictions differ in length".into()));
    }
    let nodes = support_features.vstack(query_features)?;
    let seeds = seed_matrix(support_labels, query_soft)?;
    let graph = build_knn_graph(&nodes, cfg)?;
    let scores = match cfg.mode {
        LpMode::ClosedForm => propagate_closed_form(&graph, &seeds, cfg.alpha)?,
        LpMode::Iterative => propagate_iterative(&graph, &seeds, cfg.alpha, cfg.max_iters, cfg.tol)?.scores,
    };
    let query_rows: Vec<usize> = (support_labels.len()..nodes.rows()).collect();
    Ok(scores.select_rows(&query_rows))
}

/// Refined query labels: per-row argmax of the propagated scores, ties to
/// the lower class.
pub fn refine_predictions(
    support_features: &Matrix,
    support_labels: &[usize],
    query_features: &Matrix,
    query_soft: &Matrix,
    cfg: &LpConfig,
) -> Result<Vec<usize>> {
    Ok(refine_scores(support_features, support_labels, query_features, query_soft, cfg)?.argmax_rows())
}

/// Writes `W.csv`, `S.csv` and `F.csv` into `dir` for inspection.
pub fn dump_debug(dir: &Path, graph: &LpGraph, scores: &Matrix) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("W.csv"), graph.weights.to_csv_string())?;
    write_atomic(&dir.join("S.csv"), graph.normalized.to_csv_string())?;
    write_atomic(&dir.join("F.csv"), scores.to_csv_string())
}
