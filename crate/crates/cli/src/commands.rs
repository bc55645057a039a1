use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use featproto::eval::{km_table, median, RiskSummary};
use featproto::trainer::{ablation_run, ablation_table, cohort, predict_dataset, TrainOutcome};
use featproto::{
    c_index, generate_synthetic, km_curve, load_dataset, logrank_test, median_risk_split, predict, write_dataset,
    AblationVariant, Dataset64, Error, RunConfig, SynthSpec, TraceRecord,
};
use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::checkpoint::Checkpoint;
use crate::manifest::Manifest;
use crate::table::{from_table, to_table};
use crate::{EvalArgs, ExplainArgs, ExportArgs, ImportArgs, SynthArgs, TrainArgs, UsageError};

const TRAIN_FILE: &str = "train.tsv";
const VALIDATION_FILE: &str = "validation.tsv";
const DATASET_FILE: &str = "dataset.tsv";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn write(dir: &Path, name: &str, text: &str, manifest: &mut Manifest) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    manifest.output(name);
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load(path: &Path) -> Result<Dataset64> {
    load_dataset(path, None).with_context(|| format!("loading dataset {}", path.display()))
}

fn jsonl<I: IntoIterator<Item = String>>(lines: I) -> String {
    lines.into_iter().map(|l| l + "\n").collect()
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let mut manifest = Manifest::start("synth");
    let mut spec = match &args.spec {
        Some(path) => {
            manifest.input("spec", path);
            SynthSpec::from_toml(&read_text(path)?).with_context(|| format!("parsing spec {}", path.display()))?
        }
        None => SynthSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    let train_per_class = args.train_per_class.unwrap_or(spec.samples_per_class * 3 / 4);
    if train_per_class > spec.samples_per_class {
        return Err(UsageError(format!(
            "--train-per-class {train_per_class} exceeds samples_per_class {}",
            spec.samples_per_class
        ))
        .into());
    }
    manifest.seed = Some(spec.seed);
    manifest.config(&spec);

    let out = generate_synthetic::<f64>(&spec)?;
    let (train_idx, val_idx) = out.split_per_class(train_per_class);
    create_dir(&args.out)?;
    for (name, ds) in [
        (DATASET_FILE, out.dataset.clone()),
        (TRAIN_FILE, out.dataset.subset(&train_idx)),
        (VALIDATION_FILE, out.dataset.subset(&val_idx)),
    ] {
        write_dataset(args.out.join(name), &ds)?;
        manifest.output(name);
    }
    let mut latent = String::from("sample_id\tclass\tseverity\tlatent_time\n");
    for (i, r) in out.dataset.records.iter().enumerate() {
        writeln!(latent, "{}\t{}\t{}\t{}", r.sample_id, out.latent_class[i], out.severity[i], out.latent_time[i])?;
    }
    write(&args.out, "latent.tsv", &latent, &mut manifest)?;
    write(&args.out, "spec.toml", &spec.to_toml(), &mut manifest)?;
    println!(
        "wrote {} samples ({} train, {} validation) to {}",
        out.dataset.len(),
        train_idx.len(),
        val_idx.len(),
        args.out.display()
    );
    manifest.write(&args.out)
}

enum Ablation {
    One(AblationVariant),
    All,
}

fn parse_ablation(name: &Option<String>) -> Result<Ablation> {
    match name.as_deref() {
        None => Ok(Ablation::One(AblationVariant::Full)),
        Some("all") => Ok(Ablation::All),
        Some(s) => AblationVariant::parse(s).map(Ablation::One).ok_or_else(|| {
            let names: Vec<&str> = AblationVariant::ALL.iter().map(|v| v.as_str()).collect();
            UsageError(format!("unknown ablation `{s}` (expected all, {})", names.join(", "))).into()
        }),
    }
}

fn run_config(args: &TrainArgs, manifest: &mut Manifest) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            manifest.input("config", path);
            RunConfig::from_toml(&read_text(path)?).with_context(|| format!("parsing config {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.train.epochs = epochs;
    }
    Ok(cfg)
}

/// Bins `train` and applies its edges to `validation`.
fn bin(train: &mut Dataset64, validation: Option<&mut Dataset64>, k_time: usize) -> Result<()> {
    train.assign_bins(k_time).context("binning the training set")?;
    if let Some(v) = validation {
        v.apply_bins(train.bin_edges.as_ref().expect("just binned"));
    }
    Ok(())
}

/// Writes checkpoint, metrics and logs of one training run into `dir`.
fn save_run(dir: &Path, cfg: &RunConfig, train: &Dataset64, outcome: &TrainOutcome<f64>, manifest: &mut Manifest) -> Result<()> {
    let ckpt = Checkpoint {
        config: cfg.clone(),
        encoder: outcome.state.encoder.clone(),
        library: outcome.state.library.clone(),
        bins: train.bin_edges.clone().expect("trained on binned data"),
    };
    for name in ckpt.save(&dir.join("checkpoint"))? {
        manifest.output(format!("checkpoint/{name}"));
    }
    write(dir, "metrics.jsonl", &outcome.state.history_jsonl(), manifest)?;
    write(dir, "updates.jsonl", &jsonl(outcome.updates.iter().map(|u| u.to_json_line())), manifest)?;
    write(dir, "loss.jsonl", &jsonl(outcome.loss_log.iter().cloned()), manifest)?;
    Ok(())
}

fn train_once(
    dir: &Path,
    cfg: &RunConfig,
    train: &Dataset64,
    validation: Option<&Dataset64>,
    manifest: &mut Manifest,
) -> Result<TrainOutcome<f64>> {
    create_dir(dir)?;
    let outcome = match featproto::train(train, validation, &cfg.engine, &cfg.train) {
        Ok(o) => o,
        Err(Error::Diverged { epoch, step, dump }) => {
            fs::write(dir.join("divergence.txt"), &dump)?;
            return Err(Error::Diverged { epoch, step, dump }.into());
        }
        Err(e) => return Err(e.into()),
    };
    save_run(dir, cfg, train, &outcome, manifest)?;
    Ok(outcome)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("-".to_string(), |v| v.to_string())
}

#[derive(Serialize)]
struct FoldSummary {
    folds: Vec<FoldRow>,
    mean: Option<f64>,
    std: Option<f64>,
}

#[derive(Serialize)]
struct FoldRow {
    fold: usize,
    train_size: usize,
    validation_size: usize,
    train_c_index: Option<f64>,
    val_c_index: Option<f64>,
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        Some((values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt())
    } else {
        None
    };
    (Some(mean), std)
}

fn train_folds(args: &TrainArgs, folds: usize, cfg: &RunConfig, data: &Dataset64, mut manifest: Manifest) -> Result<()> {
    let n = data.len();
    let n_train = (n * 8 + 5) / 10;
    let mut rows = Vec::new();
    for fold in 0..folds {
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        rng.set_stream(fold as u64 + 1);
        idx.shuffle(&mut rng);
        let (tr, va) = idx.split_at(n_train);
        let mut train = data.subset(tr);
        let mut val = data.subset(va);
        bin(&mut train, Some(&mut val), cfg.engine.k_time)?;
        let dir = args.out.join(format!("fold-{fold}"));
        let mut fold_manifest = manifest.child();
        let outcome = train_once(&dir, cfg, &train, Some(&val), &mut fold_manifest)?;
        let last = outcome.state.history.last().expect("history has epoch 0");
        info!("fold {fold}: val C-index {}", fmt_opt(last.val_c_index));
        fold_manifest.write(&dir)?;
        manifest.output(format!("fold-{fold}/"));
        rows.push(FoldRow {
            fold,
            train_size: train.len(),
            validation_size: val.len(),
            train_c_index: last.train_c_index,
            val_c_index: last.val_c_index,
        });
    }
    let vals: Vec<f64> = rows.iter().filter_map(|r| r.val_c_index).collect();
    let (mean, std) = mean_std(&vals);
    let mut tsv = String::from("fold\ttrain_size\tvalidation_size\ttrain_c_index\tval_c_index\n");
    for r in &rows {
        writeln!(
            tsv,
            "{}\t{}\t{}\t{}\t{}",
            r.fold,
            r.train_size,
            r.validation_size,
            fmt_opt(r.train_c_index),
            fmt_opt(r.val_c_index)
        )?;
    }
    writeln!(tsv, "mean\t-\t-\t-\t{}", fmt_opt(mean))?;
    writeln!(tsv, "std\t-\t-\t-\t{}", fmt_opt(std))?;
    write(&args.out, "folds.tsv", &tsv, &mut manifest)?;
    let summary = FoldSummary { folds: rows, mean, std };
    write(&args.out, "folds.json", &(serde_json::to_string_pretty(&summary)? + "\n"), &mut manifest)?;
    println!(
        "{folds}-fold validation C-index: {} ± {}",
        mean.map_or("-".into(), |m| format!("{m:.4}")),
        std.map_or("-".into(), |s| format!("{s:.4}"))
    );
    manifest.write(&args.out)
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let mut manifest = Manifest::start("train");
    let mut cfg = run_config(args, &mut manifest)?;
    let ablation = parse_ablation(&args.ablation)?;
    if let Ablation::One(v) = ablation {
        cfg.engine = v.apply(&cfg.engine);
    }
    manifest.seed = Some(cfg.train.seed);
    manifest.config(&json!({
        "run": &cfg,
        "ablation": args.ablation.as_deref().unwrap_or("full"),
        "folds": args.folds,
    }));
    let is_dir = args.data.is_dir();
    create_dir(&args.out)?;

    if let Some(folds) = args.folds {
        if folds == 0 {
            return Err(UsageError("--folds must be at least 1".into()).into());
        }
        if matches!(ablation, Ablation::All) {
            return Err(UsageError("--folds cannot be combined with --ablation all".into()).into());
        }
        let path = if is_dir { args.data.join(DATASET_FILE) } else { args.data.clone() };
        manifest.input("data", &path);
        let data = load(&path)?;
        return train_folds(args, folds, &cfg, &data, manifest);
    }

    let train_path = if is_dir { args.data.join(TRAIN_FILE) } else { args.data.clone() };
    let val_path: Option<PathBuf> = match &args.validation {
        Some(p) => Some(p.clone()),
        None if is_dir && args.data.join(VALIDATION_FILE).exists() => Some(args.data.join(VALIDATION_FILE)),
        None => None,
    };
    manifest.input("train", &train_path);
    let mut train = load(&train_path)?;
    let mut val = match &val_path {
        Some(p) => {
            manifest.input("validation", p);
            Some(load(p)?)
        }
        None => None,
    };
    bin(&mut train, val.as_mut(), cfg.engine.k_time)?;

    match ablation {
        Ablation::All => {
            let val = val.as_ref().ok_or_else(|| UsageError("--ablation all needs a validation set".into()))?;
            let mut rows = Vec::new();
            for v in AblationVariant::ALL {
                let (row, outcome) = ablation_run(&train, val, &cfg.engine, &cfg.train, v)?;
                info!("{v}: val C-index {}", fmt_opt(row.val_c_index));
                write(&args.out, &format!("metrics-{v}.jsonl"), &outcome.state.history_jsonl(), &mut manifest)?;
                rows.push(row);
            }
            let table = ablation_table(&rows);
            write(&args.out, "ablation.tsv", &table, &mut manifest)?;
            print!("{table}");
        }
        Ablation::One(_) => {
            let outcome = train_once(&args.out, &cfg, &train, val.as_ref(), &mut manifest)?;
            let last = outcome.state.history.last().expect("history has epoch 0");
            println!(
                "trained {} epochs: train C-index {}, validation C-index {}, library v{}",
                outcome.state.epoch,
                fmt_opt(last.train_c_index),
                fmt_opt(last.val_c_index),
                outcome.state.library.version()
            );
        }
    }
    manifest.write(&args.out)
}

fn load_checkpoint(dir: &Path, manifest: &mut Manifest) -> Result<Checkpoint> {
    manifest.input("checkpoint", dir);
    let ckpt = Checkpoint::load(dir).with_context(|| format!("loading checkpoint {}", dir.display()))?;
    manifest.seed = Some(ckpt.config.train.seed);
    manifest.config(&ckpt.config);
    Ok(ckpt)
}

fn load_matching(path: &Path, width: usize, what: &str, manifest: &mut Manifest) -> Result<Dataset64> {
    manifest.input("data", path);
    let ds = load(path)?;
    if ds.input_dim() != width {
        bail!(
            "dataset {} has {} input features ({}) but the {what} expects {width}",
            path.display(),
            ds.input_dim(),
            ds.modalities.iter().map(|m| format!("{}:{}", m.name, m.dim)).collect::<Vec<_>>().join(" ")
        );
    }
    if ds.is_empty() {
        return Err(Error::Empty("evaluation dataset")).with_context(|| path.display().to_string());
    }
    Ok(ds)
}

#[derive(Serialize)]
struct GroupReport {
    n: usize,
    events: usize,
    median_survival: Option<f64>,
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let mut manifest = Manifest::start("eval");
    let ckpt = load_checkpoint(&args.checkpoint, &mut manifest)?;
    let ds = load_matching(&args.data, ckpt.encoder.in_dim(), "checkpoint encoder", &mut manifest)?;
    let engine = &ckpt.config.engine;
    let preds = predict_dataset(&ckpt.encoder, &ckpt.library, engine, &ds)?;
    create_dir(&args.out)?;

    let mut tsv = String::from("sample_id\tevent_time\tcensored\trisk\tpredicted_bin");
    for k in 0..engine.k_time {
        write!(tsv, "\tlogit_{k}")?;
    }
    tsv.push('\n');
    for (r, (p, _)) in ds.records.iter().zip(&preds) {
        write!(tsv, "{}\t{}\t{}\t{}\t{}", r.sample_id, r.event_time, u8::from(r.censored), p.risk, p.predicted_bin())?;
        for z in &p.logits {
            write!(tsv, "\t{z}")?;
        }
        tsv.push('\n');
    }
    write(&args.out, "predictions.tsv", &tsv, &mut manifest)?;

    let risks: Vec<f64> = preds.iter().map(|(p, _)| p.risk).collect();
    let samples = cohort(&ds, &risks);
    let c = match c_index(&samples) {
        Ok(c) => Some(c),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e.into()),
    };

    let group = |g: &[featproto::CohortSample<f64>]| -> Result<Option<(GroupReport, featproto::KmCurve<f64>)>> {
        if g.is_empty() {
            return Ok(None);
        }
        let km = km_curve(g)?;
        let report = GroupReport {
            n: g.len(),
            events: g.iter().filter(|s| !s.censored).count(),
            median_survival: km.median_time(),
        };
        Ok(Some((report, km)))
    };
    let (high, low) = if samples.len() >= 2 { median_risk_split(&samples)? } else { (Vec::new(), samples.clone()) };
    let all = group(&samples)?.expect("non-empty dataset");
    let hi = group(&high)?;
    let lo = group(&low)?;
    let mut curves = vec![("all", &all.1)];
    if let Some((_, km)) = &hi {
        curves.push(("high", km));
    }
    if let Some((_, km)) = &lo {
        curves.push(("low", km));
    }
    write(&args.out, "km.tsv", &km_table(&curves), &mut manifest)?;

    let logrank = if high.is_empty() || low.is_empty() {
        None
    } else {
        match logrank_test(&high, &low) {
            Ok(r) => Some(r),
            Err(Error::Undefined(_)) => None,
            Err(e) => return Err(e.into()),
        }
    };

    let mut summary = String::from("group\tn\tmin\tq1\tmedian\tq3\tmax\tmean\n");
    for (name, g) in [("all", &samples), ("high", &high), ("low", &low)] {
        let rs: Vec<f64> = g.iter().map(|s| s.risk).collect();
        if let Some(s) = RiskSummary::of(&rs) {
            writeln!(summary, "{name}\t{}\t{}\t{}\t{}\t{}\t{}\t{}", s.n, s.min, s.q1, s.median, s.q3, s.max, s.mean)?;
        }
    }
    write(&args.out, "risk_summary.tsv", &summary, &mut manifest)?;

    let report = json!({
        "n": ds.len(),
        "c_index": c,
        "median_risk": median(&risks),
        "all": all.0,
        "high": hi.as_ref().map(|g| &g.0),
        "low": lo.as_ref().map(|g| &g.0),
        "logrank": logrank.map(|r| json!({
            "chi_square": r.chi_square,
            "p_value": r.p_value,
            "observed_high": r.observed_a,
            "expected_high": r.expected_a,
        })),
    });
    write(&args.out, "eval.json", &(serde_json::to_string_pretty(&report)? + "\n"), &mut manifest)?;
    println!(
        "C-index {} on {} samples; log-rank p {}",
        c.map_or("-".into(), |v| format!("{v:.4}")),
        ds.len(),
        logrank.map_or("-".into(), |r| format!("{:.3e}", r.p_value))
    );
    manifest.write(&args.out)
}

pub fn explain(args: &ExplainArgs) -> Result<()> {
    let mut manifest = Manifest::start("explain");
    let ckpt = load_checkpoint(&args.checkpoint, &mut manifest)?;
    let mut engine = ckpt.config.engine.clone();
    if let Some(f) = args.top_f {
        if f == 0 {
            return Err(UsageError("--top-f must be positive".into()).into());
        }
        engine.top_f_sources = f;
    }
    let width = if args.fused { ckpt.library.dim() } else { ckpt.encoder.in_dim() };
    let what = if args.fused { "library" } else { "checkpoint encoder" };
    let ds = load_matching(&args.data, width, what, &mut manifest)?;
    let mut out = String::new();
    for r in &ds.records {
        let x = r.concatenated();
        let f = if args.fused { x } else { ckpt.encoder.encode(&x)? };
        let (pred, trace) = predict(&f, &ckpt.library, &engine)?;
        out.push_str(&TraceRecord::new(&r.sample_id, &pred, &trace).to_json_line());
        out.push('\n');
    }
    create_dir(&args.out)?;
    write(&args.out, "explanations.jsonl", &out, &mut manifest)?;
    println!("explained {} samples", ds.len());
    manifest.write(&args.out)
}

pub fn export(args: &ExportArgs) -> Result<()> {
    let mut manifest = Manifest::start("export");
    let ckpt = load_checkpoint(&args.checkpoint, &mut manifest)?;
    create_dir(&args.out)?;
    let table = to_table(&ckpt.library);
    write(&args.out, "prototypes.tsv", &table, &mut manifest)?;
    println!("exported {} prototypes", ckpt.library.entries().count());
    manifest.write(&args.out)
}

pub fn import(args: &ImportArgs) -> Result<()> {
    let mut manifest = Manifest::start("import");
    manifest.input("table", &args.table);
    let lib = from_table(&read_text(&args.table)?).with_context(|| format!("importing {}", args.table.display()))?;
    lib.validate()?;
    create_dir(&args.out)?;
    write(&args.out, "library.txt", &lib.to_canonical_text(), &mut manifest)?;
    println!("imported {} prototypes (library v{})", lib.entries().count(), lib.version());
    manifest.write(&args.out)
}
