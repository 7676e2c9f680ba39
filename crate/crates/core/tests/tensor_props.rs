use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsgraph::autodiff::ValueGraph;
use tsgraph::optim::{adam_step, AdamConfig, AdamState};
use tsgraph::tensor::{row_softmax, spmm};
use tsgraph::{DenseMatrix, SparseCSR};

#[test]
fn softmax_rows_are_distributions_for_large_logits() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rows = 10_000;
    let cols = 7;
    let data: Vec<f64> = (0..rows * cols)
        .map(|i| {
            let scale = [1.0, 10.0, 100.0, 1000.0][i % 4];
            rng.random_range(-scale..=scale)
        })
        .collect();
    let p = row_softmax(&DenseMatrix::from_vec(rows, cols, data).unwrap()).unwrap();
    for r in 0..rows {
        let row = p.row(r);
        assert!(row.iter().all(|&v| v >= 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12, "row {r}");
    }
}

#[test]
fn softmax_rejects_non_finite() {
    let x = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![f64::NAN, 0.0]]).unwrap();
    assert!(row_softmax(&x).is_err());
}

fn random_sparse(rng: &mut ChaCha8Rng) -> (SparseCSR, DenseMatrix) {
    let rows = rng.random_range(1..=16);
    let cols = rng.random_range(1..=16);
    let density = rng.random_range(0.0..0.6);
    let mut triplets = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if rng.random::<f64>() < density {
                triplets.push((r, c, rng.random_range(-3.0..3.0)));
            }
        }
    }
    let k = rng.random_range(1..=16);
    let b: Vec<f64> = (0..cols * k).map(|_| rng.random_range(-3.0..3.0)).collect();
    (
        SparseCSR::from_triplets(rows, cols, &triplets).unwrap(),
        DenseMatrix::from_vec(cols, k, b).unwrap(),
    )
}

/// Row-by-row dot products in ascending column order, skipping zeros.
fn brute_force(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut acc = 0.0;
            for k in 0..a.cols() {
                if a.get(i, k) != 0.0 {
                    acc += a.get(i, k) * b.get(k, j);
                }
            }
            out.set(i, j, acc);
        }
    }
    out
}

#[test]
fn spmm_matches_dense_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for _ in 0..200 {
        let (a, b) = random_sparse(&mut rng);
        let got = spmm(&a, &b).unwrap();
        let want = brute_force(&a.to_dense(), &b);
        assert_eq!(got, want);
        assert_eq!(a.to_dense().matmul(&b).unwrap().max_abs_diff(&got), 0.0);
    }
}

#[test]
fn spmm_shape_mismatch() {
    let a = SparseCSR::identity(3);
    assert!(spmm(&a, &DenseMatrix::zeros(2, 2)).is_err());
}

#[test]
fn backward_is_bitwise_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = DenseMatrix::from_vec(6, 4, (0..24).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let w = DenseMatrix::from_vec(4, 3, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let run = || {
        let mut g = ValueGraph::new();
        let xi = g.constant(x.clone());
        let wi = g.param(w.clone());
        let z = g.matmul(xi, wi).unwrap();
        let p = g.softmax(z).unwrap();
        let ce = g.cross_entropy(p, &[0, 2, 4], &[0, 1, 2]).unwrap();
        let grads = g.backward(ce).unwrap();
        grads.get(wi).unwrap().clone()
    };
    let a = run();
    let b = run();
    assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn adam_converges_on_quadratic() {
    let mut params = vec![DenseMatrix::from_vec(1, 2, vec![3.0, -2.0]).unwrap()];
    let mut state = AdamState::for_params(&params);
    let cfg = AdamConfig::new(0.05, 0.0);
    for _ in 0..2000 {
        let grad = params[0].clone();
        adam_step(&mut params, &[grad], &mut state, &cfg).unwrap();
    }
    assert!(params[0].data().iter().all(|v| v.abs() < 1e-3));
}

proptest! {
    #[test]
    fn transpose_is_involution(rows in 1usize..8, cols in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DenseMatrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random()).collect()).unwrap();
        prop_assert_eq!(m.transpose().transpose(), m);
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties(c in 2usize..10, v in -5.0f64..5.0) {
        let m = DenseMatrix::filled(1, c, v);
        prop_assert_eq!(m.argmax_rows(), vec![0]);
    }
}
