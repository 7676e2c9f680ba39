//! Evaluation metrics and the effect-size statistics used to compare runs.

use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;

/// Fraction of `mask` nodes whose prediction equals the label.
pub fn accuracy(
    predicted: &[usize],
    labels: &[Option<usize>],
    mask: &[usize],
) -> Result<f64, AnalysisError> {
    if mask.is_empty() {
        return Err(AnalysisError::EmptyMask);
    }
    let mut correct = 0usize;
    for &v in mask {
        let y = labels[v].ok_or(AnalysisError::UnknownLabel(v))?;
        if predicted[v] == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / mask.len() as f64)
}

/// ROC-AUC by pair counting: `(wins + ½·ties) / (positives · negatives)`,
/// where a win is a positive scored strictly above a negative.
///
/// Runs in `O(n log n)`: scores are sorted once and each group of equal
/// scores is credited against every negative strictly below it.
pub fn roc_auc(scores: &[f64], labels: &[Option<usize>], mask: &[usize]) -> Result<f64, AnalysisError> {
    if mask.is_empty() {
        return Err(AnalysisError::EmptyMask);
    }
    let mut items = Vec::with_capacity(mask.len());
    for &v in mask {
        let y = labels[v].ok_or(AnalysisError::UnknownLabel(v))?;
        items.push((scores[v], y == 1));
    }
    auc_from_pairs(&mut items)
}

/// Same estimator on parallel slices of scores and binary labels.
pub fn roc_auc_binary(scores: &[f64], positive: &[bool]) -> Result<f64, AnalysisError> {
    if scores.is_empty() {
        return Err(AnalysisError::EmptyMask);
    }
    let mut items: Vec<_> = scores.iter().copied().zip(positive.iter().copied()).collect();
    auc_from_pairs(&mut items)
}

fn auc_from_pairs(items: &mut [(f64, bool)]) -> Result<f64, AnalysisError> {
    let positives = items.iter().filter(|i| i.1).count() as u64;
    let negatives = items.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(AnalysisError::SingleClass);
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Twice the U statistic, kept integral so ties stay exact.
    let mut twice_u: u64 = 0;
    let mut negatives_below: u64 = 0;
    let mut i = 0;
    while i < items.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < items.len() && items[j].0 == items[i].0 {
            if items[j].1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice_u += 2 * pos * negatives_below + pos * neg;
        negatives_below += neg;
        i = j;
    }
    Ok(twice_u as f64 / (2 * positives * negatives) as f64)
}

/// Glass's Δ: the gain over the baseline in units of the baseline's
/// standard deviation.
pub fn glass_delta(treatment: f64, baseline: f64, baseline_std: f64) -> Result<f64, AnalysisError> {
    if baseline_std == 0.0 || !baseline_std.is_finite() {
        return Err(AnalysisError::ZeroStd);
    }
    Ok((treatment - baseline) / baseline_std)
}

/// Mean and sample standard deviation (`n - 1` denominator; 0 for `n = 1`).
pub fn mean_std(values: &[f64]) -> Result<(f64, f64), AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

/// Percentile with linear interpolation between order statistics
/// (`h = (n - 1)·p`).
pub fn percentile(values: &[f64], p: f64) -> Result<f64, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Median and interquartile band of one λ column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

pub fn quartiles(values: &[f64]) -> Result<Quartiles, AnalysisError> {
    Ok(Quartiles {
        median: percentile(values, 0.5)?,
        q25: percentile(values, 0.25)?,
        q75: percentile(values, 0.75)?,
    })
}

/// Accuracy summary of one (dataset, λ) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub mean: f64,
    pub std: f64,
}

/// One dataset's sweep: a cell per λ, including λ = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSweep {
    pub dataset: String,
    /// `(λ, stats)` pairs.
    pub cells: Vec<(f64, CellStats)>,
}

/// Per-λ aggregate across datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambda: f64,
    /// Glass's Δ per dataset, in the order of [`SweepStats::datasets`].
    pub deltas: Vec<f64>,
    pub summary: Quartiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepStats {
    pub datasets: Vec<String>,
    /// Baseline (λ = 0) accuracy and std per dataset.
    pub baselines: Vec<CellStats>,
    pub points: Vec<SweepPoint>,
}

/// Glass's Δ of every λ against that dataset's λ = 0 cell, then the median
/// and IQR across datasets per λ. All datasets must share the λ grid.
pub fn sweep_aggregate(sweeps: &[DatasetSweep]) -> Result<SweepStats, AnalysisError> {
    let first = sweeps.first().ok_or(AnalysisError::Empty)?;
    let grid: Vec<f64> = first.cells.iter().map(|c| c.0).collect();
    if grid.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut baselines = Vec::with_capacity(sweeps.len());
    for s in sweeps {
        let lambdas: Vec<f64> = s.cells.iter().map(|c| c.0).collect();
        if lambdas != grid {
            return Err(AnalysisError::MissingBaseline(format!(
                "{}: λ grid differs from {}",
                s.dataset, first.dataset
            )));
        }
        let base = s
            .cells
            .iter()
            .find(|c| c.0 == 0.0)
            .ok_or_else(|| AnalysisError::MissingBaseline(format!("{} has no λ=0 cell", s.dataset)))?;
        baselines.push(base.1);
    }
    let mut points = Vec::with_capacity(grid.len());
    for (k, &lambda) in grid.iter().enumerate() {
        let deltas = sweeps
            .iter()
            .zip(&baselines)
            .map(|(s, b)| glass_delta(s.cells[k].1.mean, b.mean, b.std))
            .collect::<Result<Vec<_>, _>>()?;
        points.push(SweepPoint {
            lambda,
            summary: quartiles(&deltas)?,
            deltas,
        });
    }
    Ok(SweepStats {
        datasets: sweeps.iter().map(|s| s.dataset.clone()).collect(),
        baselines,
        points,
    })
}

/// `|Δ| > σ` with σ the treatment cell's std.
pub fn significant(delta: f64, treatment_std: f64) -> bool {
    delta.abs() > treatment_std
}
