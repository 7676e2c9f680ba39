//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes plain numbers and returns a JSON string, so the page
//! needs no generated TypeScript types. The `*_json` functions are the same
//! operations without the wasm-bindgen wrapper and are what the native tests
//! call.

use serde::Serialize;
use tsgraph::analysis::{glass_delta, mean_std};
use tsgraph::csbm::{gen_csbm, CsbmParams};
use tsgraph::objectives::{entropy_r, TsConfig};
use tsgraph::training::{train_run, Metric, RunRecord, TrainConfig};
use tsgraph::{ArchConfig, Backbone, GraphBundle, NormKind};
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct CurvePoint {
    pub p: f64,
    pub shannon: f64,
    pub quadratic: f64,
    /// λ_U · R_q(p) for an unlabeled node.
    pub unlabeled: f64,
    /// −log p + λ_L · R_q(p) for a labeled node whose true class has mass p.
    pub labeled: f64,
}

/// Penalty curves over two-class predictions (p, 1 − p).
pub fn penalty_curves_json(lambda: f64, lambda_labeled: f64, q: u8, points: usize) -> Result<String, String> {
    if !(lambda.is_finite() && lambda_labeled.is_finite()) {
        return Err("coefficients must be finite".into());
    }
    let points = points.clamp(3, 2001);
    let mut out = Vec::with_capacity(points);
    for i in 0..points {
        // Keep p off the endpoints so the labeled curve stays finite.
        let p = 1e-3 + (1.0 - 2e-3) * i as f64 / (points - 1) as f64;
        let dist = [p, 1.0 - p];
        let r = entropy_r(&dist, q).map_err(|e| e.to_string())?;
        out.push(CurvePoint {
            p,
            shannon: entropy_r(&dist, 1).map_err(|e| e.to_string())?,
            quadratic: entropy_r(&dist, 2).map_err(|e| e.to_string())?,
            unlabeled: lambda * r,
            labeled: -p.ln() + lambda_labeled * r,
        });
    }
    Ok(serde_json::to_string(&out).expect("curve serializes"))
}

fn demo_bundle(nodes_per_class: usize, mu: f64, seed: u64) -> Result<GraphBundle, String> {
    let params = CsbmParams {
        nodes_per_class,
        p_in: 0.05,
        p_out: 0.02,
        dim: 8,
        mu,
        sigma: 1.0,
        seed,
    };
    gen_csbm(&params).map_err(|e| e.to_string())
}

fn demo_arch() -> ArchConfig {
    ArchConfig {
        backbone: Backbone::Gcn,
        layers: 2,
        hidden: 16,
        dropout: 0.5,
        norm: NormKind::None,
        residual: false,
        num_classes: 2,
    }
}

fn demo_train(epochs: usize, seeds: usize) -> TrainConfig {
    TrainConfig {
        epochs: epochs.clamp(1, 2000),
        lr: 0.01,
        weight_decay: 5e-4,
        metric: Metric::Accuracy,
        seeds: (0..seeds.clamp(1, 20) as u64).collect(),
        record_trajectories: true,
    }
}

#[derive(Debug, Serialize)]
pub struct Trajectory {
    pub lambda: f64,
    pub epoch: Vec<usize>,
    pub h_labeled: Vec<f64>,
    pub h_unlabeled: Vec<f64>,
    pub gap: Vec<f64>,
    pub test: Vec<f64>,
    pub best_epoch: usize,
    pub test_at_best: f64,
}

fn trajectory(lambda: f64, r: &RunRecord) -> Trajectory {
    let snaps: Vec<_> = r.epochs.iter().filter_map(|e| e.entropy.as_ref().map(|s| (e, s))).collect();
    Trajectory {
        lambda,
        epoch: snaps.iter().map(|(_, s)| s.epoch).collect(),
        h_labeled: snaps.iter().map(|(_, s)| s.h_labeled).collect(),
        h_unlabeled: snaps.iter().map(|(_, s)| s.h_unlabeled).collect(),
        gap: snaps.iter().map(|(_, s)| s.gap).collect(),
        test: snaps.iter().map(|(e, _)| e.test_metric).collect(),
        best_epoch: r.best_epoch,
        test_at_best: r.test_at_best,
    }
}

/// Trains one seed at λ and at λ = 0 on the same CSBM graph and returns both
/// entropy trajectories.
pub fn entropy_trajectories_json(
    nodes_per_class: usize,
    mu: f64,
    lambda: f64,
    epochs: usize,
    seed: u64,
) -> Result<String, String> {
    let bundle = demo_bundle(nodes_per_class, mu, seed)?;
    let train = demo_train(epochs, 1);
    let arch = demo_arch();
    let mut out = Vec::new();
    for l in [0.0, lambda] {
        let r = train_run(&bundle, &arch, &TsConfig::symmetric(l), &train, seed).map_err(|e| e.to_string())?;
        out.push(trajectory(l, &r));
    }
    Ok(serde_json::to_string(&out).expect("trajectory serializes"))
}

#[derive(Debug, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub mean: f64,
    pub std: f64,
    /// Glass's Δ against λ = 0; absent when the baseline has zero spread.
    pub delta: Option<f64>,
}

/// Test accuracy over `seeds` seeds at each λ in `lambdas` (comma separated)
/// and Glass's Δ against λ = 0, which is always included.
pub fn lambda_sweep_json(
    nodes_per_class: usize,
    mu: f64,
    lambdas: &str,
    epochs: usize,
    seeds: usize,
) -> Result<String, String> {
    let mut grid = lambdas
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if grid.iter().any(|l| !l.is_finite()) {
        return Err("λ values must be finite".into());
    }
    if !grid.contains(&0.0) {
        grid.push(0.0);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let bundle = demo_bundle(nodes_per_class, mu, 0)?;
    let train = demo_train(epochs, seeds);
    let arch = demo_arch();
    let mut cells = Vec::new();
    for &l in &grid {
        let metrics = train
            .seeds
            .iter()
            .map(|&s| {
                train_run(&bundle, &arch, &TsConfig::symmetric(l), &train, s)
                    .map(|r| r.test_at_best)
                    .map_err(|e| e.to_string())
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (mean, std) = mean_std(&metrics).map_err(|e| e.to_string())?;
        cells.push((l, mean, std));
    }
    let &(_, base_mean, base_std) = cells.iter().find(|c| c.0 == 0.0).expect("λ = 0 is in the grid");
    let rows: Vec<SweepRow> = cells
        .into_iter()
        .map(|(lambda, mean, std)| SweepRow {
            lambda,
            mean,
            std,
            delta: glass_delta(mean, base_mean, base_std).ok(),
        })
        .collect();
    Ok(serde_json::to_string(&rows).expect("sweep serializes"))
}

#[wasm_bindgen]
pub fn penalty_curves(lambda: f64, lambda_labeled: f64, q: u8, points: usize) -> Result<String, JsError> {
    penalty_curves_json(lambda, lambda_labeled, q, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn entropy_trajectories(
    nodes_per_class: usize,
    mu: f64,
    lambda: f64,
    epochs: usize,
    seed: u64,
) -> Result<String, JsError> {
    entropy_trajectories_json(nodes_per_class, mu, lambda, epochs, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn lambda_sweep(
    nodes_per_class: usize,
    mu: f64,
    lambdas: &str,
    epochs: usize,
    seeds: usize,
) -> Result<String, JsError> {
    lambda_sweep_json(nodes_per_class, mu, lambdas, epochs, seeds).map_err(|e| JsError::new(&e))
}
