//! Command-line front end. [`run`] parses arguments, executes one command
//! and returns the process exit code.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use crate::autodiff::checkpoint::{config_hash, load_checkpoint, save_checkpoint};
use crate::datasets::{
    self, balanced_test_set, generate_spurious_motif, read_records, write_records, Dataset, MotifSpec,
};
use crate::egib::write_edge_scores;
use crate::error::{Error, Result};
use crate::explain::{invariant_csv, motif_recall, score_dataset, to_dot};
use crate::generator::{generate_augmented_dataset, FragmentLibrary, GrowthMode};
use crate::trainer::report::{aggregate, collect_runs, render_csv, render_table, CONFIG_SECTION};
use crate::trainer::{self, evaluate, load_split, model_from_checkpoint, prepare_eval, ExperimentConfig};

/// Default parent directory for outputs when `--out` is omitted.
pub const OUT_ROOT_VAR: &str = "CAUEMO_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "cauemo", version, about = "Environment-modeling graph classifier for OOD molecular data")]
pub struct Cli {
    /// Log progress (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a Spurious-Motif dataset as train/val/test record files.
    GenMotif(GenMotifArgs),
    /// Grow environment-augmented molecules from a fragment library.
    Grow(GrowArgs),
    /// Train a model and write metrics, summary and checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test (and validation) part of a dataset.
    Eval(EvalArgs),
    /// Export per-edge environment probabilities and invariant edges.
    Explain(ExplainArgs),
    /// Aggregate finished runs into mean ± std tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenMotifArgs {
    /// Training graphs.
    #[arg(long, default_value_t = 3000)]
    pub n: usize,
    /// Validation graphs [default: n / 5].
    #[arg(long)]
    pub n_val: Option<usize>,
    /// Test graphs [default: n / 5].
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Base-motif agreement probability for train and validation.
    #[arg(long, default_value_t = 0.9)]
    pub b: f64,
    /// Draw the test part with b = 1/3 instead of b.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub balanced: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GrowArgs {
    /// Fragment library file, or `starter`.
    #[arg(long, default_value = "starter")]
    pub library: String,
    /// Input records file.
    #[arg(long)]
    pub input: PathBuf,
    /// Generated graphs per input molecule.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// knowledge, random or off.
    #[arg(long, default_value = "knowledge")]
    pub mode: GrowthMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output records file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Configuration file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Pre-split directory, TU directory or records file.
    #[arg(long)]
    pub data: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Extra `key=value` settings applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Ablation to apply: random, subgraph, noninter or nongcb.
    #[arg(long)]
    pub ablation: Vec<String>,
    /// Run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Directory for `eval.txt` and its manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Part of the data to explain: train, val, test or all.
    #[arg(long, default_value = "test")]
    pub part: String,
    /// Invariant edges listed per graph; defaults to 6, the largest motif,
    /// when graphs carry motif metadata, else 5.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Graphs drawn in the DOT file.
    #[arg(long, default_value_t = 20)]
    pub dot_graphs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory whose subdirectories are finished runs.
    #[arg(long)]
    pub runs_dir: PathBuf,
    /// Directory for `report.txt` and `report.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code: 0 success, 2 usage, 3 data or format, 4 numeric or
/// training failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging(cli.verbose);
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::GenMotif(a) => gen_motif(a),
        Command::Grow(a) => grow(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Explain(a) => explain(a),
        Command::Report(a) => report(a),
    }
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ROOT_VAR).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

fn out_dir(given: &Option<PathBuf>, default_name: String) -> Result<PathBuf> {
    let dir = given.clone().unwrap_or_else(|| out_root().join(default_name));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Manifest text: command, version, seed and extra fields, then the
/// configuration after a `[config]` line. Only `created_unix` and
/// `wall_time_s` vary between identical runs.
pub fn manifest_text(command: &str, seed: u64, fields: &[(&str, String)], config: Option<&str>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "command = {command}");
    let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "seed = {seed}");
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let _ = writeln!(s, "created_unix = {created}");
    for (k, v) in fields {
        let _ = writeln!(s, "{k} = {v}");
    }
    if let Some(cfg) = config {
        let hash: String = config_hash(cfg).iter().map(|b| format!("{b:02x}")).collect();
        let _ = writeln!(s, "config_sha256 = {hash}");
        let _ = writeln!(s, "{CONFIG_SECTION}");
        s.push_str(cfg);
    }
    s
}

fn gen_motif(a: &GenMotifArgs) -> Result<()> {
    let spec = MotifSpec::new(a.b);
    spec.validate()?;
    let n_val = a.n_val.unwrap_or(a.n / 5);
    let n_test = a.n_test.unwrap_or(a.n / 5);
    let dir = out_dir(&a.out, format!("spurious-motif-b{}-s{}", a.b, a.seed))?;
    let train = generate_spurious_motif(a.n, &spec, a.seed)?;
    write_records(&dir.join("train.jsonl"), &train.graphs)?;
    let val = if n_val > 0 {
        generate_spurious_motif(n_val, &spec, a.seed.wrapping_add(1))?.graphs
    } else {
        Vec::new()
    };
    write_records(&dir.join("val.jsonl"), &val)?;
    let test = if n_test == 0 {
        return Err(Error::arg("need --n-test >= 1"));
    } else if a.balanced {
        balanced_test_set(n_test, a.seed.wrapping_add(2))?
    } else {
        generate_spurious_motif(n_test, &spec, a.seed.wrapping_add(2))?
    };
    write_records(&dir.join("test.jsonl"), &test.graphs)?;
    let train_agree = datasets::motif::agreement_fraction(&train);
    let test_agree = datasets::motif::agreement_fraction(&test);
    write(
        &dir.join("manifest.txt"),
        &manifest_text(
            "gen-motif",
            a.seed,
            &[
                ("b", a.b.to_string()),
                ("n_train", a.n.to_string()),
                ("n_val", n_val.to_string()),
                ("n_test", n_test.to_string()),
                ("balanced_test", a.balanced.to_string()),
                ("train_agreement", train_agree.to_string()),
                ("test_agreement", test_agree.to_string()),
            ],
            None,
        ),
    )?;
    println!(
        "wrote {} train / {} val / {} test graphs to {} (agreement: train {:.3}, test {:.3})",
        a.n,
        n_val,
        n_test,
        dir.display(),
        train_agree,
        test_agree
    );
    Ok(())
}

fn grow(a: &GrowArgs) -> Result<()> {
    let library = match a.library.as_str() {
        "starter" => FragmentLibrary::starter(),
        path => FragmentLibrary::load(Path::new(path))?,
    };
    let input = read_records(&a.input)?;
    let out = match &a.out {
        Some(p) => p.clone(),
        None => out_dir(&None, format!("grow-{}-s{}", a.mode, a.seed))?.join("augmented.jsonl"),
    };
    let (graphs, summary) = generate_augmented_dataset(&input.graphs, &library, a.k, a.mode, a.seed)?;
    write_records(&out, &graphs)?;
    let valid = summary.generated - summary.invalid_graphs;
    let pct = if summary.generated == 0 {
        100.0
    } else {
        100.0 * valid as f64 / summary.generated as f64
    };
    for w in &summary.warnings {
        warn!("{w}");
    }
    let manifest_path = PathBuf::from(format!("{}.manifest.txt", out.display()));
    write(
        &manifest_path,
        &manifest_text(
            "grow",
            a.seed,
            &[
                ("library", a.library.clone()),
                ("input", a.input.display().to_string()),
                ("k", a.k.to_string()),
                ("mode", a.mode.to_string()),
                ("generated", summary.generated.to_string()),
                ("valence_violations", summary.invalid_graphs.to_string()),
                ("warnings", summary.warnings.len().to_string()),
            ],
            None,
        ),
    )?;
    println!(
        "mode {}: {} input graphs, {} generated, {} valence-valid ({pct:.2}%), {} with violations, {} skipped steps",
        a.mode,
        input.len(),
        summary.generated,
        valid,
        summary.invalid_graphs,
        summary.warnings.len()
    );
    println!("wrote {} graphs to {}", graphs.len(), out.display());
    Ok(())
}

/// Builds the configuration of a `train` invocation.
pub fn train_config(a: &TrainArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for kv in &a.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config {
            key: kv.clone(),
            message: "expected KEY=VALUE".into(),
        })?;
        cfg.set(k.trim(), v.trim())?;
    }
    for name in &a.ablation {
        cfg.apply_ablation(name)?;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train(a: &TrainArgs) -> Result<()> {
    let cfg = train_config(a)?;
    let started = Instant::now();
    let data = load_split(&a.data, &cfg)?;
    let dir = out_dir(&a.out, format!("train-{}-s{}", cfg.model, cfg.seed))?;
    info!(
        "training on {} / {} / {} graphs",
        data.train.len(),
        data.val.len(),
        data.test.len()
    );
    let outcome = trainer::train(&cfg, &data)?;
    let config_text = outcome.config.to_text();
    save_checkpoint(&dir.join("checkpoint.bin"), &outcome.model.store, &config_text)?;
    write(&dir.join("config.txt"), &config_text)?;
    write(&dir.join("metrics.csv"), &outcome.report.metrics_csv())?;
    let summary = outcome.report.summary_text();
    write(&dir.join("summary.txt"), &summary)?;
    write(
        &dir.join("manifest.txt"),
        &manifest_text(
            "train",
            cfg.seed,
            &[
                ("data", a.data.display().to_string()),
                ("wall_time_s", format!("{:.3}", started.elapsed().as_secs_f64())),
            ],
            Some(&config_text),
        ),
    )?;
    print!("{summary}");
    println!("run directory: {}", dir.display());
    Ok(())
}

fn eval_text(model: &crate::model::Model, cfg: &ExperimentConfig, data: &mut datasets::SplitData) -> Result<String> {
    prepare_eval(&mut data.test, cfg)?;
    let test = evaluate(model, &data.test, cfg.eval_batch_size)?;
    let val = if data.val.is_empty() {
        None
    } else {
        prepare_eval(&mut data.val, cfg)?;
        Some(evaluate(model, &data.val, cfg.eval_batch_size)?)
    };
    let opt = |x: Option<f64>| x.map_or_else(|| "nan".into(), |v| v.to_string());
    let mut s = String::new();
    let _ = writeln!(s, "val_acc = {}", opt(val.map(|v| v.accuracy)));
    let _ = writeln!(s, "val_auc = {}", opt(val.and_then(|v| v.auc)));
    let _ = writeln!(s, "test_acc = {}", test.accuracy);
    let _ = writeln!(s, "test_auc = {}", opt(test.auc));
    let _ = writeln!(s, "test_count = {}", test.count);
    Ok(s)
}

fn eval(a: &EvalArgs) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let (model, cfg) = model_from_checkpoint(&ck)?;
    let mut data = load_split(&a.data, &cfg)?;
    let text = eval_text(&model, &cfg, &mut data)?;
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write(&dir.join("eval.txt"), &text)?;
        write(
            &dir.join("manifest.txt"),
            &manifest_text(
                "eval",
                cfg.seed,
                &[
                    ("checkpoint", a.checkpoint.display().to_string()),
                    ("data", a.data.display().to_string()),
                ],
                Some(&ck.config_text),
            ),
        )?;
    }
    print!("{text}");
    Ok(())
}

fn pick_part(data: datasets::SplitData, part: &str) -> Result<Dataset> {
    Ok(match part {
        "train" => data.train,
        "val" => data.val,
        "test" => data.test,
        "all" => {
            let mut all = data.train;
            all.graphs.extend(data.val.graphs);
            all.graphs.extend(data.test.graphs);
            all
        }
        _ => return Err(Error::arg(format!("unknown part `{part}` (train|val|test|all)"))),
    })
}

fn explain(a: &ExplainArgs) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let (model, cfg) = model_from_checkpoint(&ck)?;
    if !model.has_extractor() {
        return Err(Error::arg("checkpoint holds a model without an edge extractor"));
    }
    let mut ds = pick_part(load_split(&a.data, &cfg)?, &a.part)?;
    if ds.is_empty() {
        return Err(Error::arg(format!("the {} part is empty", a.part)));
    }
    prepare_eval(&mut ds, &cfg)?;
    let dir = out_dir(&a.out, format!("explain-s{}", cfg.seed))?;
    let scores = score_dataset(&model, &ds, cfg.eval_batch_size)?;
    let recall = motif_recall(&ds, &scores);
    let k = a.top_k.unwrap_or(if recall.is_some() { 6 } else { 5 });

    let path = dir.join("edge_scores.csv");
    let mut buf = Vec::new();
    write_edge_scores(&mut buf, &scores).map_err(|e| Error::io(&path, e))?;
    fs::File::create(&path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Error::io(&path, e))?;
    write(&dir.join("invariant_edges.csv"), &invariant_csv(&scores, ds.len(), k))?;
    write(&dir.join("explanation.dot"), &to_dot(&ds, &scores, k, a.dot_graphs))?;

    let mut fields = vec![
        ("checkpoint", a.checkpoint.display().to_string()),
        ("data", a.data.display().to_string()),
        ("part", a.part.clone()),
        ("top_k", k.to_string()),
        ("graphs", ds.len().to_string()),
        ("edges", scores.len().to_string()),
    ];
    if let Some(r) = recall {
        fields.push(("motif_recall", r.model.to_string()));
        fields.push(("random_recall", r.random.to_string()));
        println!(
            "motif-edge recall {:.4} vs uniform-random {:.4} over {} graphs",
            r.model, r.random, r.graphs
        );
    }
    write(
        &dir.join("manifest.txt"),
        &manifest_text("explain", cfg.seed, &fields, Some(&ck.config_text)),
    )?;
    println!("wrote {} edge scores for {} graphs to {}", scores.len(), ds.len(), dir.display());
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let runs = collect_runs(&a.runs_dir)?;
    if runs.is_empty() {
        return Err(Error::arg(format!(
            "no finished runs (summary.txt + manifest.txt) under {}",
            a.runs_dir.display()
        )));
    }
    let rows = aggregate(&runs);
    let table = render_table(&rows);
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write(&dir.join("report.txt"), &table)?;
        write(&dir.join("report.csv"), &render_csv(&rows))?;
    }
    print!("{table}");
    Ok(())
}
