use serde_json::Value;
use tsgraph_web::{entropy_trajectories_json, lambda_sweep_json, penalty_curves_json};

fn parse(s: &str) -> Vec<Value> {
    serde_json::from_str::<Value>(s).unwrap().as_array().unwrap().clone()
}

#[test]
fn curves_match_closed_forms() {
    let pts = parse(&penalty_curves_json(0.5, -0.5, 2, 101).unwrap());
    assert_eq!(pts.len(), 101);
    for pt in &pts {
        let p = pt["p"].as_f64().unwrap();
        let quad = 1.0 - p * p - (1.0 - p) * (1.0 - p);
        let shannon = -p * p.ln() - (1.0 - p) * (1.0 - p).ln();
        assert!((pt["quadratic"].as_f64().unwrap() - quad).abs() < 1e-12);
        assert!((pt["shannon"].as_f64().unwrap() - shannon).abs() < 1e-12);
        assert!((pt["unlabeled"].as_f64().unwrap() - 0.5 * quad).abs() < 1e-12);
        assert!((pt["labeled"].as_f64().unwrap() - (-p.ln() - 0.5 * quad)).abs() < 1e-12);
    }
    // Both entropies peak at the uniform prediction.
    let mid = &pts[50];
    assert!((mid["quadratic"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    assert!((mid["shannon"].as_f64().unwrap() - 2f64.ln()).abs() < 1e-9);
}

#[test]
fn curves_reject_bad_input() {
    assert!(penalty_curves_json(f64::NAN, 0.0, 2, 10).is_err());
    assert!(penalty_curves_json(0.1, 0.0, 3, 10).is_err());
}

#[test]
fn trajectories_pair_baseline_and_treatment() {
    let a = entropy_trajectories_json(40, 1.5, 1.0, 30, 3).unwrap();
    assert_eq!(a, entropy_trajectories_json(40, 1.5, 1.0, 30, 3).unwrap());
    let runs = parse(&a);
    assert_eq!(runs.len(), 2);
    assert_eq!(runs[0]["lambda"].as_f64(), Some(0.0));
    assert_eq!(runs[1]["lambda"].as_f64(), Some(1.0));
    for r in &runs {
        let hl = r["h_labeled"].as_array().unwrap();
        let hu = r["h_unlabeled"].as_array().unwrap();
        let gap = r["gap"].as_array().unwrap();
        assert_eq!(hl.len(), 30);
        for i in 0..hl.len() {
            let d = hl[i].as_f64().unwrap() - hu[i].as_f64().unwrap();
            // JSON parsing may move the last bit.
            assert!((d - gap[i].as_f64().unwrap()).abs() <= 1e-12 * d.abs().max(1e-3));
        }
    }
}

#[test]
fn sweep_includes_baseline_with_zero_delta() {
    let rows = parse(&lambda_sweep_json(40, 1.0, "0.5, 1", 20, 3).unwrap());
    let lambdas: Vec<f64> = rows.iter().map(|r| r["lambda"].as_f64().unwrap()).collect();
    assert_eq!(lambdas, vec![0.0, 0.5, 1.0]);
    match rows[0]["delta"].as_f64() {
        Some(d) => assert_eq!(d, 0.0),
        None => assert_eq!(rows[0]["std"].as_f64(), Some(0.0)),
    }
    assert!(lambda_sweep_json(40, 1.0, "x", 5, 2).is_err());
}
