//! Two-class contextual stochastic block model.
//!
//! Nodes `0..n` belong to class 0 and `n..2n` to class 1. Each unordered
//! pair is an edge with probability `p_in` (same class) or `p_out`. Features
//! are `±(μ/2)·u + σ·ε` with `u = 1/√d` in every coordinate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::GraphError;
use crate::graph::{make_planetoid_split, GraphBundle, Split};
use crate::nn::derive_seed;
use crate::tensor::DenseMatrix;

/// Smallest class size for which the default split can be drawn.
pub const MIN_NODES_PER_CLASS: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsbmParams {
    pub nodes_per_class: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub dim: usize,
    pub mu: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl CsbmParams {
    /// The "easy" instance used throughout the test suites.
    pub fn easy(seed: u64) -> Self {
        Self {
            nodes_per_class: 500,
            p_in: 0.1,
            p_out: 0.01,
            dim: 16,
            mu: 4.0,
            sigma: 1.0,
            seed,
        }
    }

    fn validate(&self) -> Result<(), GraphError> {
        for (name, p) in [("p_in", self.p_in), ("p_out", self.p_out)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(GraphError::Params(format!("{name}={p} outside [0, 1]")));
            }
        }
        if !(self.mu >= 0.0) || !(self.sigma >= 0.0) {
            return Err(GraphError::Params("mu and sigma must be >= 0".into()));
        }
        if self.dim == 0 {
            return Err(GraphError::Params("dim must be positive".into()));
        }
        Ok(())
    }
}

/// Default split sizes for a graph with `nodes_per_class` nodes in each of
/// two classes: 20 train per class, then up to 500 val and 1000 test, each
/// capped so val and test share the remainder evenly.
pub fn default_split_sizes(nodes_per_class: usize) -> (usize, usize, usize) {
    let per_class = 20;
    let remaining = (2 * nodes_per_class).saturating_sub(2 * per_class);
    let val = 500.min(remaining / 2);
    let test = 1000.min(remaining - val);
    (per_class, val, test)
}

/// Samples edges and features; labels are fully known and the split is
/// left empty.
pub fn sample_csbm(params: &CsbmParams) -> Result<(Vec<(usize, usize)>, DenseMatrix, Vec<usize>), GraphError> {
    params.validate()?;
    let n = params.nodes_per_class;
    let total = 2 * n;
    let class = |v: usize| usize::from(v >= n);

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[params.seed, 1]));
    let mut edges = Vec::new();
    for a in 0..total {
        for b in (a + 1)..total {
            let p = if class(a) == class(b) { params.p_in } else { params.p_out };
            if rng.random::<f64>() < p {
                edges.push((a, b));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[params.seed, 2]));
    let u = 1.0 / (params.dim as f64).sqrt();
    let mut features = DenseMatrix::zeros(total, params.dim);
    for v in 0..total {
        let sign = if class(v) == 0 { 1.0 } else { -1.0 };
        for x in features.row_mut(v) {
            let eps: f64 = rng.sample(StandardNormal);
            *x = sign * 0.5 * params.mu * u + params.sigma * eps;
        }
    }
    let labels = (0..total).map(class).collect();
    Ok((edges, features, labels))
}

/// Generates a bundle with the default class-balanced split.
pub fn gen_csbm(params: &CsbmParams) -> Result<GraphBundle, GraphError> {
    params.validate()?;
    if params.nodes_per_class < MIN_NODES_PER_CLASS {
        return Err(GraphError::SplitInfeasible(format!(
            "{} nodes per class cannot hold 20 training nodes per class plus val/test; need at least {MIN_NODES_PER_CLASS}",
            params.nodes_per_class
        )));
    }
    let (edges, features, labels) = sample_csbm(params)?;
    let labels: Vec<Option<usize>> = labels.into_iter().map(Some).collect();
    let (per_class, val, test) = default_split_sizes(params.nodes_per_class);
    let split = make_planetoid_split(
        &labels,
        2,
        per_class,
        val,
        test,
        derive_seed(&[params.seed, 3]),
    )?;
    GraphBundle::new(2, edges, features, labels, split)
}

/// Bundle with an explicit split (used by fixtures).
pub fn gen_csbm_with_split(params: &CsbmParams, split: Split) -> Result<GraphBundle, GraphError> {
    let (edges, features, labels) = sample_csbm(params)?;
    GraphBundle::new(2, edges, features, labels.into_iter().map(Some).collect(), split)
}
