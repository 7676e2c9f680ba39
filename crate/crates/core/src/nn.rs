//! Forward primitives shared by the differentiable graph and the plain
//! (non-recording) code paths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::TensorError;
use crate::tensor::DenseMatrix;

/// Variance guard used by layer and batch normalization.
pub const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Mean and inverse standard deviation per normalized slice (row or column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
}

/// SplitMix64 finalizer.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds several integers into one well-mixed seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x5EED_0F75_6A11_u64, |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn relu(x: &DenseMatrix) -> DenseMatrix {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = v.max(0.0);
    }
    out
}

fn check_rate(rate: f64) -> Result<(), TensorError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(TensorError::InvalidArgument(format!(
            "dropout rate {rate} outside [0, 1)"
        )));
    }
    Ok(())
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`.
pub fn dropout_mask(
    rows: usize,
    cols: usize,
    rate: f64,
    seed: u64,
) -> Result<DenseMatrix, TensorError> {
    check_rate(rate)?;
    let keep = 1.0 / (1.0 - rate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = DenseMatrix::zeros(rows, cols);
    for v in mask.data_mut() {
        *v = if rng.random::<f64>() < rate { 0.0 } else { keep };
    }
    Ok(mask)
}

pub fn dropout(x: &DenseMatrix, rate: f64, seed: u64, mode: Mode) -> Result<DenseMatrix, TensorError> {
    check_rate(rate)?;
    if mode == Mode::Eval || rate == 0.0 {
        return Ok(x.clone());
    }
    let mask = dropout_mask(x.rows(), x.cols(), rate, seed)?;
    let mut out = x.clone();
    for (o, m) in out.data_mut().iter_mut().zip(mask.data()) {
        *o *= m;
    }
    Ok(out)
}

/// Per-row statistics (layer norm).
pub fn row_stats(x: &DenseMatrix) -> NormStats {
    let n = x.cols() as f64;
    let mut mean = Vec::with_capacity(x.rows());
    let mut inv_std = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = x.row(r);
        let m = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        mean.push(m);
        inv_std.push(1.0 / (var + NORM_EPS).sqrt());
    }
    NormStats { mean, inv_std }
}

/// Per-column statistics over all rows (batch norm over the full node set).
pub fn col_stats(x: &DenseMatrix) -> NormStats {
    let n = x.rows() as f64;
    let mut mean = vec![0.0; x.cols()];
    for r in 0..x.rows() {
        for (m, v) in mean.iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; x.cols()];
    for r in 0..x.rows() {
        for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let inv_std = var.iter().map(|s| 1.0 / (s / n + NORM_EPS).sqrt()).collect();
    NormStats { mean, inv_std }
}

/// Which axis a normalization's statistics run along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormAxis {
    /// One (mean, std) per row.
    Row,
    /// One (mean, std) per column.
    Col,
}

/// Standardizes `x` with the given statistics and returns `x̂`.
pub fn standardize(x: &DenseMatrix, stats: &NormStats, axis: NormAxis) -> DenseMatrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        for (c, v) in row.iter_mut().enumerate() {
            let k = match axis {
                NormAxis::Row => r,
                NormAxis::Col => c,
            };
            *v = (*v - stats.mean[k]) * stats.inv_std[k];
        }
    }
    out
}

/// `x̂ ⊙ γ + β` with `γ`, `β` broadcast over rows.
pub fn affine(xhat: &DenseMatrix, gamma: &[f64], beta: &[f64]) -> DenseMatrix {
    let mut out = xhat.clone();
    for r in 0..out.rows() {
        for ((v, g), b) in out.row_mut(r).iter_mut().zip(gamma).zip(beta) {
            *v = *v * g + b;
        }
    }
    out
}

pub fn layer_norm(x: &DenseMatrix, gamma: &[f64], beta: &[f64]) -> DenseMatrix {
    let stats = row_stats(x);
    affine(&standardize(x, &stats, NormAxis::Row), gamma, beta)
}

/// Batch normalization. Train mode uses (and returns) the current batch
/// statistics; eval mode reuses `stored` when available.
pub fn batch_norm(
    x: &DenseMatrix,
    gamma: &[f64],
    beta: &[f64],
    mode: Mode,
    stored: Option<&NormStats>,
) -> (DenseMatrix, NormStats) {
    let stats = match (mode, stored) {
        (Mode::Eval, Some(s)) => s.clone(),
        _ => col_stats(x),
    };
    let out = affine(&standardize(x, &stats, NormAxis::Col), gamma, beta);
    (out, stats)
}
