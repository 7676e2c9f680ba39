//! CSV and JSONL report emission.
//!
//! CSVs are comma-separated with a header row, `\n` line endings and floats
//! at 17 significant digits. Every CSV has a JSONL mirror with one object
//! per data row.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::analysis::{significant, CellStats, SweepStats};
use crate::error::AnalysisError;
use crate::fmt::sig17;
use crate::graph::write_atomic;
use crate::objectives::TsConfig;
use crate::training::{MultiSeedSummary, RunRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    CellTable,
    SweepCsv,
    EntropyCsv,
    AblationDelta,
}

impl ReportKind {
    pub fn stem(self) -> &'static str {
        match self {
            ReportKind::CellTable => "cell_table",
            ReportKind::SweepCsv => "sweep",
            ReportKind::EntropyCsv => "entropy",
            ReportKind::AblationDelta => "ablation_delta",
        }
    }
}

/// One treatment cell next to its matched baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEntry {
    pub dataset: String,
    pub backbone: String,
    pub variant: String,
    pub lambda: f64,
    pub treatment: CellStats,
    pub baseline: Option<CellStats>,
}

/// One ablation cell against the symmetric reference at the same λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub battery: String,
    pub config: TsConfig,
    pub stats: CellStats,
    pub reference: Option<CellStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReportInput<'a> {
    Cells(&'a [CellEntry]),
    Sweep(&'a SweepStats),
    Entropy(&'a [RunRecord]),
    Ablation(&'a [AblationEntry]),
}

impl ReportInput<'_> {
    pub fn kind(&self) -> ReportKind {
        match self {
            ReportInput::Cells(_) => ReportKind::CellTable,
            ReportInput::Sweep(_) => ReportKind::SweepCsv,
            ReportInput::Entropy(_) => ReportKind::EntropyCsv,
            ReportInput::Ablation(_) => ReportKind::AblationDelta,
        }
    }
}

#[derive(Debug, Clone)]
enum Cell {
    Str(String),
    Num(f64),
    Int(u64),
    Bool(bool),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Str(s) => {
                if s.contains([',', '"', '\n']) {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
            Cell::Num(x) => sig17(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Str(s) => Value::String(s.clone()),
            Cell::Num(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
            Cell::Int(i) => Value::from(*i),
            Cell::Bool(b) => Value::Bool(*b),
        }
    }
}

/// Rendered CSV and JSONL text of one report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendered {
    pub csv: String,
    pub jsonl: String,
}

fn render(header: &[String], rows: &[Vec<Cell>]) -> Rendered {
    let mut csv = header.join(",");
    csv.push('\n');
    let mut jsonl = String::new();
    for row in rows {
        let line: Vec<String> = row.iter().map(Cell::csv).collect();
        csv.push_str(&line.join(","));
        csv.push('\n');
        let obj: Map<String, Value> = header.iter().cloned().zip(row.iter().map(Cell::json)).collect();
        jsonl.push_str(&Value::Object(obj).to_string());
        jsonl.push('\n');
    }
    Rendered { csv, jsonl }
}

fn strs(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn render_cells(cells: &[CellEntry]) -> Result<Rendered, AnalysisError> {
    let header = strs(&[
        "dataset",
        "backbone",
        "variant",
        "lambda",
        "mean",
        "std",
        "baseline_mean",
        "baseline_std",
        "delta",
        "significant",
    ]);
    let mut rows = Vec::with_capacity(cells.len());
    for c in cells {
        let base = c.baseline.ok_or_else(|| {
            AnalysisError::MissingBaseline(format!("{}/{} at λ={}", c.dataset, c.backbone, c.lambda))
        })?;
        let delta = c.treatment.mean - base.mean;
        rows.push(vec![
            Cell::Str(c.dataset.clone()),
            Cell::Str(c.backbone.clone()),
            Cell::Str(c.variant.clone()),
            Cell::Num(c.lambda),
            Cell::Num(c.treatment.mean),
            Cell::Num(c.treatment.std),
            Cell::Num(base.mean),
            Cell::Num(base.std),
            Cell::Num(delta),
            Cell::Bool(significant(delta, c.treatment.std)),
        ]);
    }
    Ok(render(&header, &rows))
}

fn render_sweep(stats: &SweepStats) -> Rendered {
    let mut header = vec!["lambda".to_string()];
    header.extend(stats.datasets.iter().map(|d| format!("delta_{d}")));
    header.extend(strs(&["median", "q25", "q75"]));
    let rows: Vec<Vec<Cell>> = stats
        .points
        .iter()
        .map(|p| {
            let mut row = vec![Cell::Num(p.lambda)];
            row.extend(p.deltas.iter().map(|&d| Cell::Num(d)));
            row.extend([
                Cell::Num(p.summary.median),
                Cell::Num(p.summary.q25),
                Cell::Num(p.summary.q75),
            ]);
            row
        })
        .collect();
    render(&header, &rows)
}

fn render_entropy(runs: &[RunRecord]) -> Rendered {
    let header = strs(&["run", "epoch", "h_labeled", "h_unlabeled", "gap"]);
    let mut rows = Vec::new();
    for r in runs {
        for s in r.epochs.iter().filter_map(|e| e.entropy) {
            rows.push(vec![
                Cell::Int(r.seed),
                Cell::Int(s.epoch as u64),
                Cell::Num(s.h_labeled),
                Cell::Num(s.h_unlabeled),
                Cell::Num(s.gap),
            ]);
        }
    }
    render(&header, &rows)
}

fn render_ablation(entries: &[AblationEntry]) -> Result<Rendered, AnalysisError> {
    let header = strs(&[
        "battery",
        "variant",
        "lambda_unlabeled",
        "lambda_labeled",
        "offset",
        "q",
        "unlabeled_set",
        "mean",
        "std",
        "reference_mean",
        "reference_std",
        "delta",
        "combined_std",
    ]);
    let mut rows = Vec::with_capacity(entries.len());
    for e in entries {
        let r = e.reference.ok_or_else(|| {
            AnalysisError::MissingBaseline(format!("{} reference at λ={}", e.battery, e.config.lambda_unlabeled))
        })?;
        let set = match e.config.unlabeled_set {
            crate::objectives::UnlabeledSet::AllNonTrain => "all",
            crate::objectives::UnlabeledSet::TestAndExtra => "test-only",
        };
        rows.push(vec![
            Cell::Str(e.battery.clone()),
            Cell::Str(e.config.variant().to_string()),
            Cell::Num(e.config.lambda_unlabeled),
            Cell::Num(e.config.lambda_labeled),
            Cell::Num(e.config.labeled_offset()),
            Cell::Int(u64::from(e.config.q)),
            Cell::Str(set.to_string()),
            Cell::Num(e.stats.mean),
            Cell::Num(e.stats.std),
            Cell::Num(r.mean),
            Cell::Num(r.std),
            Cell::Num(e.stats.mean - r.mean),
            Cell::Num(e.stats.std.hypot(r.std)),
        ]);
    }
    Ok(render(&header, &rows))
}

/// Renders a report without touching the filesystem.
pub fn render_report(input: &ReportInput<'_>) -> Result<Rendered, AnalysisError> {
    match input {
        ReportInput::Cells(c) => render_cells(c),
        ReportInput::Sweep(s) => Ok(render_sweep(s)),
        ReportInput::Entropy(r) => Ok(render_entropy(r)),
        ReportInput::Ablation(a) => render_ablation(a),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> AnalysisError {
    AnalysisError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, AnalysisError> {
    write_atomic(&path, contents.as_bytes()).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

/// Writes `<stem>.csv` and `<stem>.jsonl` into `dir`; returns both paths.
pub fn emit_report(dir: &Path, input: &ReportInput<'_>) -> Result<Vec<PathBuf>, AnalysisError> {
    let rendered = render_report(input)?;
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let stem = input.kind().stem();
    Ok(vec![
        write(dir.join(format!("{stem}.csv")), &rendered.csv)?,
        write(dir.join(format!("{stem}.jsonl")), &rendered.jsonl)?,
    ])
}

/// One line per epoch.
pub fn run_jsonl(record: &RunRecord) -> String {
    let mut out = String::new();
    for e in &record.epochs {
        out.push_str(&serde_json::to_string(e).expect("epoch record serializes"));
        out.push('\n');
    }
    out
}

/// Per-seed epoch JSONL and summary JSON, the entropy CSV of all seeds, and
/// the aggregate JSON.
pub fn write_run_outputs(dir: &Path, summary: &MultiSeedSummary) -> Result<Vec<PathBuf>, AnalysisError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut paths = Vec::new();
    for r in &summary.runs {
        paths.push(write(dir.join(format!("run-{}.epochs.jsonl", r.seed)), &run_jsonl(r))?);
        let s = serde_json::to_string_pretty(&r.summary()).expect("summary serializes");
        paths.push(write(dir.join(format!("run-{}.summary.json", r.seed)), &(s + "\n"))?);
    }
    for r in &summary.diverged {
        paths.push(write(dir.join(format!("run-{}.partial.epochs.jsonl", r.seed)), &run_jsonl(r))?);
    }
    paths.extend(emit_report(dir, &ReportInput::Entropy(&summary.runs))?);
    let agg = serde_json::json!({
        "mean": summary.mean,
        "std": summary.std,
        "std_undefined": summary.std_undefined,
        "partial": summary.partial,
        "failed": summary.failed,
        "seeds": summary.runs.iter().map(|r| r.seed).collect::<Vec<_>>(),
        "test_metrics": summary.runs.iter().map(|r| r.test_at_best).collect::<Vec<_>>(),
        "digests": summary.runs.iter().map(|r| r.params_digest.clone()).collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&agg).expect("aggregate serializes") + "\n";
    paths.push(write(dir.join("aggregate.json"), &text)?);
    Ok(paths)
}
