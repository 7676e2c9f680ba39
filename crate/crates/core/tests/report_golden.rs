//! Byte-level golden files for the report writers. Regenerate with
//! `TSG_BLESS=1 cargo test -p tsgraph-core --test report_golden`.

use std::path::PathBuf;

use tsgraph::analysis::{sweep_aggregate, CellStats, DatasetSweep};
use tsgraph::csbm::{gen_csbm, CsbmParams};
use tsgraph::models::{ArchConfig, Backbone, NormKind};
use tsgraph::objectives::TsConfig;
use tsgraph::report::{emit_report, render_report, AblationEntry, CellEntry, ReportInput};
use tsgraph::training::{multi_seed_eval, Metric, MultiSeedSummary, TrainConfig};

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn check(name: &str, actual: &str) {
    let path = golden_dir().join(name);
    if std::env::var_os("TSG_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{name} drifted from its golden file");
}

fn run(lambda: f64) -> MultiSeedSummary {
    let bundle = gen_csbm(&CsbmParams {
        nodes_per_class: 40,
        p_out: 0.05,
        mu: 1.0,
        ..CsbmParams::easy(11)
    })
    .unwrap();
    let arch = ArchConfig {
        backbone: Backbone::Gcn,
        layers: 2,
        hidden: 8,
        dropout: 0.5,
        norm: NormKind::None,
        residual: false,
        num_classes: 2,
    };
    let train = TrainConfig {
        epochs: 15,
        lr: 0.01,
        weight_decay: 5e-4,
        metric: Metric::Accuracy,
        seeds: vec![0, 1],
        record_trajectories: true,
    };
    multi_seed_eval(&bundle, &arch, &TsConfig::symmetric(lambda), &train).unwrap()
}

fn stats(s: &MultiSeedSummary) -> CellStats {
    CellStats { mean: s.mean, std: s.std }
}

#[test]
fn two_seed_csbm_reports_match_golden() {
    let base = run(0.0);
    let ts = run(0.25);

    let entropy = render_report(&ReportInput::Entropy(&ts.runs)).unwrap();
    check("entropy.csv", &entropy.csv);
    check("entropy.jsonl", &entropy.jsonl);

    let cells = [CellEntry {
        dataset: "csbm".into(),
        backbone: "gcn".into(),
        variant: "symmetric".into(),
        lambda: 0.25,
        treatment: stats(&ts),
        baseline: Some(stats(&base)),
    }];
    check("cell_table.csv", &render_report(&ReportInput::Cells(&cells)).unwrap().csv);

    let sweep = sweep_aggregate(&[DatasetSweep {
        dataset: "csbm".into(),
        cells: vec![(0.0, stats(&base)), (0.25, stats(&ts))],
    }])
    .unwrap();
    check("sweep.csv", &render_report(&ReportInput::Sweep(&sweep)).unwrap().csv);

    let ablation = [AblationEntry {
        battery: "labeled-removed".into(),
        config: TsConfig::symmetric(0.25).with_labeled(0.0),
        stats: stats(&base),
        reference: Some(stats(&ts)),
    }];
    check("ablation_delta.csv", &render_report(&ReportInput::Ablation(&ablation)).unwrap().csv);
}

#[test]
fn emit_writes_csv_and_jsonl_atomically() {
    let dir = tempfile::tempdir().unwrap();
    let s = run(0.25);
    let paths = emit_report(dir.path(), &ReportInput::Entropy(&s.runs)).unwrap();
    assert_eq!(paths.len(), 2);
    let csv = std::fs::read_to_string(&paths[0]).unwrap();
    assert!(csv.starts_with("run,epoch,h_labeled,h_unlabeled,gap\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 15);
    assert!(!csv.contains('\r'));
    let leftovers: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}
