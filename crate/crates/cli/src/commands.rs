use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tsgraph::analysis::{mean_std, sweep_aggregate, CellStats, DatasetSweep, SweepStats};
use tsgraph::csbm::{self, CsbmParams};
use tsgraph::graph::write_atomic;
use tsgraph::objectives::{TsConfig, UnlabeledSet};
use tsgraph::presets::{OFFSET_GRID, UNIVERSAL_LAMBDA};
use tsgraph::report::{
    emit_report, run_jsonl, write_run_outputs, AblationEntry, CellEntry, ReportInput,
};
use tsgraph::training::{
    aggregate_runs, multi_seed_eval_parallel, run_indexed, train_run, train_run_supervised,
    EpochRecord, MultiSeedSummary, RunRecord, TrainError,
};
use tsgraph::{load_bundle, save_bundle, GraphBundle};

use crate::spec::RunSpec;
use crate::{AblateArgs, Battery, CliError, GenArgs, KindArg, ReportArgs, SweepArgs, TrainArgs};

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Config(format!("{}: {e}", parent.display())))?;
    }
    write_atomic(path, text.as_bytes()).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_text(path, &(serde_json::to_string_pretty(value).expect("serializable") + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn percent(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn unlabeled_set_name(set: UnlabeledSet) -> &'static str {
    match set {
        UnlabeledSet::AllNonTrain => "all",
        UnlabeledSet::TestAndExtra => "test-only",
    }
}

pub fn gen_csbm(args: &GenArgs) -> Result<(), CliError> {
    let params = CsbmParams {
        nodes_per_class: args.n_per_class,
        p_in: args.p_in,
        p_out: args.p_out,
        dim: args.dim,
        mu: args.mu,
        sigma: args.sigma,
        seed: args.seed,
    };
    println!("{}", serde_json::to_string_pretty(&params).expect("params serialize"));
    let bundle = csbm::gen_csbm(&params)?;
    save_bundle(&bundle, &args.out)?;
    let check = load_bundle(&args.out)?;
    let s = check.split();
    println!(
        "wrote {}: {} nodes, {} edges, {} features, {} classes; train {}, val {}, test {}, extra {}",
        args.out.display(),
        check.num_nodes(),
        check.edges().len(),
        check.num_features(),
        check.num_classes(),
        s.train.len(),
        s.val.len(),
        s.test.len(),
        check.extra().len()
    );
    Ok(())
}

fn load(path: &Path) -> Result<GraphBundle, CliError> {
    if !path.is_dir() {
        return Err(CliError::Config(format!("bundle directory {} does not exist", path.display())));
    }
    Ok(load_bundle(path)?)
}

fn check_classes(spec: &RunSpec, bundle: &GraphBundle) -> Result<(), CliError> {
    if spec.arch.num_classes != bundle.num_classes() {
        return Err(CliError::Config(format!(
            "spec has {} classes, bundle has {}",
            spec.arch.num_classes,
            bundle.num_classes()
        )));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    variant: String,
    lambda_unlabeled: f64,
    lambda_labeled: f64,
    labeled_offset: f64,
    q: u8,
    unlabeled_set: String,
}

fn metadata(ts: &TsConfig, supervised_only: bool) -> Metadata {
    Metadata {
        variant: if supervised_only { "supervised".into() } else { ts.variant().into() },
        lambda_unlabeled: ts.lambda_unlabeled,
        lambda_labeled: ts.lambda_labeled,
        labeled_offset: ts.labeled_offset(),
        q: ts.q,
        unlabeled_set: unlabeled_set_name(ts.unlabeled_set).into(),
    }
}

fn print_summary(label: &str, s: &MultiSeedSummary) {
    for r in &s.runs {
        println!(
            "  {label} seed {}: test {} (best epoch {}, val {}), digest {}",
            r.seed,
            percent(r.test_at_best),
            r.best_epoch,
            percent(r.best_val),
            r.params_digest
        );
    }
    for f in &s.failed {
        println!("  {label} seed {}: {} at epoch {}", f.seed, f.reason, f.epoch.unwrap_or(0));
    }
    let flag = if s.std_undefined { " (std undefined: fewer than 2 seeds)" } else { "" };
    println!("  {label} mean {} ± {}{flag}", percent(s.mean), percent(s.std));
}

/// Trains every seed of `spec` and writes the run files into `dir`.
fn run_cell(spec: &RunSpec, bundle: &GraphBundle, dir: &Path, supervised_only: bool) -> Result<MultiSeedSummary, CliError> {
    write_json(&dir.join("spec.json"), spec)?;
    write_json(&dir.join("metadata.json"), &metadata(&spec.ts, supervised_only))?;
    let summary = if supervised_only {
        let seeds = &spec.train.seeds;
        let results = run_indexed(seeds.len(), spec.jobs, |i| {
            (seeds[i], train_run_supervised(bundle, &spec.arch, &spec.train, seeds[i]))
        });
        aggregate_runs(results)?
    } else {
        multi_seed_eval_parallel(bundle, &spec.arch, &spec.ts, &spec.train, spec.jobs)?
    };
    write_run_outputs(dir, &summary)?;
    Ok(summary)
}

fn echo(spec: &RunSpec) {
    println!("{}", spec.to_json());
    if !spec.deterministic {
        eprintln!("note: TSG_DETERMINISTIC=0 has no effect; summation order is always fixed");
    }
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let spec = match &args.spec {
        Some(path) => RunSpec::load(path)?,
        None => {
            let data = args.shared.data()?;
            let bundle = load(&data)?;
            let ts = args.shared.ts(0.0)?;
            args.shared
                .spec(data, bundle.num_classes(), ts, args.shared.out()?)
        }
    };
    spec.validate()?;
    let bundle = load(&spec.data)?;
    check_classes(&spec, &bundle)?;
    echo(&spec);
    let summary = run_cell(&spec, &bundle, &spec.out, args.supervised_only)?;
    print_summary(spec.ts.variant(), &summary);
    if summary.partial {
        return Err(CliError::Diverged(format!(
            "{} of {} seeds diverged; partial records in {}",
            summary.failed.len(),
            spec.train.seeds.len(),
            spec.out.display()
        )));
    }
    Ok(())
}

fn lambda_dir(lambda: f64) -> String {
    format!("lambda={lambda}")
}

#[derive(Debug, Serialize, Deserialize)]
struct SeedResult {
    digest: String,
    summary: tsgraph::training::RunSummary,
}

enum Outcome {
    Reused(RunRecord),
    Ran(RunRecord),
    Diverged(u64, usize),
}

fn sweep_task(spec: &RunSpec, bundle: &GraphBundle, dir: &Path, seed: u64, resume: bool) -> Result<Outcome, CliError> {
    let digest = spec.cell_digest(seed)?;
    let marker = dir.join(format!("seed-{seed}.json"));
    if resume && marker.is_file() {
        if let Ok(prev) = read_json::<SeedResult>(&marker) {
            if prev.digest == digest {
                let s = prev.summary;
                return Ok(Outcome::Reused(RunRecord {
                    seed: s.seed,
                    variant: s.variant,
                    epochs: Vec::new(),
                    best_epoch: s.best_epoch,
                    best_val: s.best_val,
                    test_at_best: s.test_at_best,
                    params_digest: s.params_digest,
                }));
            }
        }
    }
    match train_run(bundle, &spec.arch, &spec.ts, &spec.train, seed) {
        Ok(r) => {
            write_text(&dir.join(format!("run-{seed}.epochs.jsonl")), &run_jsonl(&r))?;
            write_json(&marker, &SeedResult { digest, summary: r.summary() })?;
            Ok(Outcome::Ran(r))
        }
        Err(TrainError::Diverged { epoch, partial, .. }) => {
            write_text(&dir.join(format!("run-{seed}.partial.epochs.jsonl")), &run_jsonl(&partial))?;
            Ok(Outcome::Diverged(seed, epoch))
        }
        Err(TrainError::Setup(e)) => Err(e.into()),
    }
}

pub fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let grid = crate::spec::parse_grid(&args.lambdas)?;
    let datasets = if args.datasets.is_empty() {
        vec![args.shared.data()?]
    } else {
        args.datasets.clone()
    };
    let out = args.shared.out()?;
    let mut bundles = Vec::new();
    let mut names = Vec::new();
    for d in &datasets {
        bundles.push(load(d)?);
        let name = d
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| d.display().to_string());
        if names.contains(&name) {
            return Err(CliError::Config(format!("dataset name {name} appears twice")));
        }
        names.push(name);
    }

    // One spec per (dataset, λ) cell.
    let mut cells = Vec::new();
    for (di, d) in datasets.iter().enumerate() {
        for &lambda in &grid {
            let mut shared = args.shared.clone();
            shared.lambda = Some(lambda);
            let ts = shared.ts(lambda)?;
            let dir = out.join(&names[di]).join(lambda_dir(lambda));
            let spec = shared.spec(d.clone(), bundles[di].num_classes(), ts, dir);
            spec.validate()?;
            cells.push((di, lambda, spec));
        }
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "datasets": datasets,
            "lambdas": grid,
            "base": cells[0].2,
            "resume": args.resume,
        }))
        .expect("sweep spec serializes")
    );
    for (_, _, spec) in &cells {
        write_json(&spec.out.join("spec.json"), spec)?;
        write_json(&spec.out.join("metadata.json"), &metadata(&spec.ts, false))?;
    }

    let tasks: Vec<(usize, u64)> = cells
        .iter()
        .enumerate()
        .flat_map(|(ci, (_, _, spec))| spec.train.seeds.iter().map(move |&s| (ci, s)))
        .collect();
    let outcomes = run_indexed(tasks.len(), args.shared.jobs, |i| {
        let (ci, seed) = tasks[i];
        let (di, _, spec) = &cells[ci];
        sweep_task(spec, &bundles[*di], &spec.out, seed, args.resume)
    });

    let mut per_cell: Vec<Vec<RunRecord>> = vec![Vec::new(); cells.len()];
    let (mut reused, mut diverged) = (0, Vec::new());
    for ((ci, _), o) in tasks.iter().zip(outcomes) {
        match o? {
            Outcome::Reused(r) => {
                reused += 1;
                per_cell[*ci].push(r);
            }
            Outcome::Ran(r) => per_cell[*ci].push(r),
            Outcome::Diverged(seed, epoch) => {
                diverged.push(format!("{} λ={} seed {seed} at epoch {epoch}", names[cells[*ci].0], cells[*ci].1))
            }
        }
    }
    println!("ran {} runs, reused {reused}", tasks.len() - reused - diverged.len());

    let mut sweeps: Vec<DatasetSweep> = names
        .iter()
        .map(|n| DatasetSweep { dataset: n.clone(), cells: Vec::new() })
        .collect();
    let mut table = Vec::new();
    for (ci, (di, lambda, spec)) in cells.iter().enumerate() {
        let metrics: Vec<f64> = per_cell[ci].iter().map(|r| r.test_at_best).collect();
        if metrics.is_empty() {
            continue;
        }
        let (mean, std) = mean_std(&metrics)?;
        let stats = CellStats { mean, std };
        write_json(
            &spec.out.join("aggregate.json"),
            &serde_json::json!({"mean": mean, "std": std, "seeds": per_cell[ci].iter().map(|r| r.seed).collect::<Vec<_>>()}),
        )?;
        println!("  {} λ={lambda}: {} ± {}", names[*di], percent(mean), percent(std));
        sweeps[*di].cells.push((*lambda, stats));
        table.push((*di, *lambda, spec.ts.variant(), stats));
    }
    if !diverged.is_empty() {
        return Err(CliError::Diverged(diverged.join("; ")));
    }

    let stats = sweep_aggregate(&sweeps)?;
    let entries: Vec<CellEntry> = table
        .iter()
        .map(|&(di, lambda, variant, s)| CellEntry {
            dataset: names[di].clone(),
            backbone: cells[0].2.arch.backbone.to_string(),
            variant: variant.to_string(),
            lambda,
            treatment: s,
            baseline: Some(stats.baselines[di]),
        })
        .collect();
    write_json(&out.join("sweep_stats.json"), &stats)?;
    for p in emit_report(&out, &ReportInput::Sweep(&stats))?
        .into_iter()
        .chain(emit_report(&out, &ReportInput::Cells(&entries))?)
    {
        println!("wrote {}", p.display());
    }
    for p in &stats.points {
        println!(
            "  λ={}: median Δ {:.3} [IQR {:.3}, {:.3}]",
            p.lambda, p.summary.median, p.summary.q25, p.summary.q75
        );
    }
    Ok(())
}

fn ablation_cells(lambda: f64, battery: Battery) -> Vec<(&'static str, String, TsConfig)> {
    let reference = TsConfig::symmetric(lambda);
    let mut cells = Vec::new();
    if matches!(battery, Battery::All | Battery::Offset) {
        for off in OFFSET_GRID {
            let ll = ((-lambda + off) * 1e12).round() / 1e12 + 0.0;
            cells.push(("offset", format!("offset={off:+}"), reference.with_labeled(ll)));
        }
    }
    if matches!(battery, Battery::All | Battery::LabeledRemoved) {
        cells.push(("labeled-removed", "labeled-removed".into(), reference.with_labeled(0.0)));
    }
    if matches!(battery, Battery::All | Battery::Shannon) {
        cells.push(("shannon", "shannon".into(), reference.with_q(1)));
    }
    if matches!(battery, Battery::All | Battery::TestOnly) {
        cells.push((
            "test-only",
            "test-only".into(),
            reference.with_unlabeled_set(UnlabeledSet::TestAndExtra),
        ));
    }
    cells
}

pub fn ablate(args: &AblateArgs) -> Result<(), CliError> {
    let data = args.shared.data()?;
    let out = args.shared.out()?;
    let bundle = load(&data)?;
    let lambda = args.shared.lambda.unwrap_or(UNIVERSAL_LAMBDA);
    if lambda == 0.0 {
        return Err(CliError::Config("ablations need a nonzero λ".into()));
    }
    let reference = args
        .shared
        .spec(data.clone(), bundle.num_classes(), TsConfig::symmetric(lambda), out.join("reference"));
    reference.validate()?;
    echo(&reference);

    let mut diverged = Vec::new();
    let ref_summary = run_cell(&reference, &bundle, &reference.out, false)?;
    print_summary("reference", &ref_summary);
    if ref_summary.partial {
        diverged.push("reference".to_string());
    }
    let ref_stats = (!ref_summary.runs.is_empty()).then_some(CellStats {
        mean: ref_summary.mean,
        std: ref_summary.std,
    });

    let mut entries = Vec::new();
    for (battery, name, ts) in ablation_cells(lambda, args.battery) {
        let spec = RunSpec {
            ts,
            out: out.join(battery).join(&name),
            ..reference.clone()
        };
        let s = run_cell(&spec, &bundle, &spec.out, false)?;
        print_summary(&name, &s);
        if s.partial {
            diverged.push(name.clone());
        }
        if s.runs.is_empty() {
            continue;
        }
        entries.push(AblationEntry {
            battery: battery.to_string(),
            config: ts,
            stats: CellStats { mean: s.mean, std: s.std },
            reference: ref_stats,
        });
    }
    write_json(&out.join("ablation.json"), &entries)?;
    if !diverged.is_empty() {
        return Err(CliError::Diverged(format!("diverged cells: {}", diverged.join(", "))));
    }
    for p in emit_report(&out, &ReportInput::Ablation(&entries))? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn read_runs(dir: &Path) -> Result<Vec<RunRecord>, CliError> {
    let mut runs = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("run-") && n.ends_with(".epochs.jsonl") && !n.contains("partial"))
        })
        .collect();
    files.sort();
    for f in files {
        let name = f.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let seed: u64 = name
            .trim_start_matches("run-")
            .trim_end_matches(".epochs.jsonl")
            .parse()
            .map_err(|_| CliError::Config(format!("{}: cannot read seed from file name", f.display())))?;
        let text = std::fs::read_to_string(&f).map_err(|e| CliError::Config(format!("{}: {e}", f.display())))?;
        let epochs = text
            .lines()
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str::<EpochRecord>(l)
                    .map_err(|e| CliError::Config(format!("{}:{}: {e}", f.display(), i + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        runs.push(RunRecord {
            seed,
            variant: String::new(),
            epochs,
            best_epoch: 0,
            best_val: 0.0,
            test_at_best: 0.0,
            params_digest: String::new(),
        });
    }
    runs.sort_by_key(|r| r.seed);
    Ok(runs)
}

#[derive(Debug, Deserialize)]
struct Aggregate {
    mean: f64,
    std: f64,
}

fn cell_from_train_dir(dir: &Path) -> Result<(RunSpec, CellStats), CliError> {
    let spec: RunSpec = RunSpec::load(&dir.join("spec.json"))?;
    let agg: Aggregate = read_json(&dir.join("aggregate.json"))?;
    Ok((spec, CellStats { mean: agg.mean, std: agg.std }))
}

pub fn report(args: &ReportArgs) -> Result<(), CliError> {
    let paths = match args.kind {
        KindArg::EntropyCsv => {
            let runs = read_runs(&args.input)?;
            if runs.is_empty() {
                return Err(CliError::Config(format!("no run files in {}", args.input.display())));
            }
            emit_report(&args.out, &ReportInput::Entropy(&runs))?
        }
        KindArg::CellTable => {
            let (spec, treatment) = cell_from_train_dir(&args.input)?;
            let baseline = match &args.baseline {
                Some(b) => Some(cell_from_train_dir(b)?.1),
                None => None,
            };
            let dataset = spec
                .data
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let entry = CellEntry {
                dataset,
                backbone: spec.arch.backbone.to_string(),
                variant: spec.ts.variant().to_string(),
                lambda: spec.ts.lambda_unlabeled,
                treatment,
                baseline,
            };
            emit_report(&args.out, &ReportInput::Cells(&[entry]))?
        }
        KindArg::SweepCsv => {
            let stats: SweepStats = read_json(&args.input.join("sweep_stats.json"))?;
            emit_report(&args.out, &ReportInput::Sweep(&stats))?
        }
        KindArg::AblationDelta => {
            let entries: Vec<AblationEntry> = read_json(&args.input.join("ablation.json"))?;
            emit_report(&args.out, &ReportInput::Ablation(&entries))?
        }
    };
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}
