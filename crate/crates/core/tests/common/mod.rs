#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsgraph::autodiff::ValueGraph;
use tsgraph::gradcheck::{grad_check, FD_EPSILON};
use tsgraph::graph::GraphOperators;
use tsgraph::models::{forward, init_model, ArchConfig, ModelParams};
use tsgraph::nn::Mode;
use tsgraph::objectives::{ts_loss, ObjectiveMasks, TsConfig};
use tsgraph::{DenseMatrix, GraphBundle, Split};

pub fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// 12 nodes, 3 classes: a ring with a few chords, random 4-dim features.
/// Train 0..6, val 6..8, test 8..10, nodes 10 and 11 unsplit.
pub fn twelve_node_bundle() -> GraphBundle {
    let mut edges: Vec<(usize, usize)> = (0..12).map(|i| (i, (i + 1) % 12)).collect();
    edges.extend([(0, 6), (2, 9), (3, 7), (4, 11), (1, 10)]);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let feats: Vec<f64> = (0..12 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels = (0..12).map(|v| Some(v % 3)).collect();
    GraphBundle::new(
        3,
        edges,
        DenseMatrix::from_vec(12, 4, feats).unwrap(),
        labels,
        Split {
            train: (0..6).collect(),
            val: vec![6, 7],
            test: vec![8, 9],
        },
    )
    .unwrap()
}

/// The sharpening variants exercised by the gradient oracle.
pub fn ts_variants() -> Vec<(&'static str, TsConfig)> {
    use tsgraph::UnlabeledSet;
    vec![
        ("symmetric-q2", TsConfig::symmetric(0.7)),
        ("shannon-q1", TsConfig::symmetric(0.7).with_q(1)),
        ("no-labeled", TsConfig::symmetric(0.7).with_labeled(0.0)),
        ("offset+0.05", TsConfig::symmetric(0.7).with_labeled(-0.65)),
        ("offset-0.05", TsConfig::symmetric(0.7).with_labeled(-0.75)),
        (
            "test-only",
            TsConfig::symmetric(0.7).with_unlabeled_set(UnlabeledSet::TestAndExtra),
        ),
        ("negative", TsConfig::symmetric(-0.4)),
    ]
}

fn loss_and_grad(
    bundle: &GraphBundle,
    arch: &ArchConfig,
    params: &ModelParams,
    ts: &TsConfig,
    dropout_seed: u64,
) -> (f64, Vec<f64>) {
    let ops = GraphOperators::new(bundle);
    let masks = ObjectiveMasks::new(bundle, ts.unlabeled_set).unwrap();
    let mut g = ValueGraph::new();
    let out = forward(&mut g, arch, params, &ops, bundle.features(), Mode::Train, dropout_seed).unwrap();
    let probs = g.softmax(out.logits).unwrap();
    let nodes = ts_loss(&mut g, probs, &masks, ts).unwrap();
    let loss = g.value(nodes.total).item().unwrap();
    let grads = g.backward(nodes.total).unwrap();
    let flat = out
        .params
        .iter()
        .flat_map(|&id| grads.get_or_zeros(id, &g).into_data())
        .collect();
    (loss, flat)
}

/// Max relative finite-difference error of the full model + objective
/// gradient with respect to every parameter.
///
/// Parameters are jittered away from the initialization: zero biases make
/// rows that dropout fully zeroed land exactly on a ReLU kink, where central
/// differences and the one-sided analytic gradient legitimately disagree.
pub fn model_grad_error(bundle: &GraphBundle, arch: &ArchConfig, ts: &TsConfig, seed: u64) -> f64 {
    let mut params = init_model(arch, bundle.num_features(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let jittered: Vec<f64> = params
        .flatten()
        .iter()
        .map(|v| v + rng.random_range(-0.1..0.1))
        .collect();
    params.assign_flat(&jittered).unwrap();
    let (_, analytic) = loss_and_grad(bundle, arch, &params, ts, seed);
    let point = params.flatten();
    let mut probe = params.clone();
    let f = |x: &[f64]| {
        probe.assign_flat(x).unwrap();
        loss_and_grad(bundle, arch, &probe, ts, seed).0
    };
    grad_check(f, &point, &analytic, FD_EPSILON).unwrap()
}

/// Independent cross-entropy of one interior row against a class label.
pub fn reference_ce(p: &[f64], y: usize) -> f64 {
    -p[y].ln()
}

/// Random interior point of the simplex of dimension `c`.
pub fn random_simplex(rng: &mut impl Rng, c: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..c).map(|_| -(rng.random_range(1e-6..1.0f64)).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

/// Brute-force Mann–Whitney AUC over all (positive, negative) pairs.
pub fn brute_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0u64);
    for (i, &si) in scores.iter().enumerate() {
        if !positive[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if positive[j] {
                continue;
            }
            pairs += 1;
            if si > sj {
                num += 1.0;
            } else if si == sj {
                num += 0.5;
            }
        }
    }
    num / pairs as f64
}
