//! Training loop, evaluation, metric files and run aggregation.

pub mod config;
pub mod report;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rand::seq::SliceRandom;

use crate::autodiff::{rng_from_seed, softmax_in_place, Adam, Tape};
use crate::datasets::{self, detect_source, ood_split, read_records, Dataset, Source, SplitData, TuOptions};
use crate::error::{Error, Result};
use crate::generator::{generate_augmented_dataset, AugmentSummary, FragmentLibrary, GrowthMode};
use crate::gnn::PackedGraph;
use crate::graph::GraphBatch;
use crate::metrics::{accuracy, multiclass_auc};
use crate::model::{Mode, Model};

pub use config::{DataConfig, ExperimentConfig, GeneratorConfig};

/// Accuracy and AUC on one dataset. AUC is absent when fewer than two
/// classes occur.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub auc: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub temperature: f64,
    /// Batch-size-weighted means over the epoch.
    pub main_ce: f64,
    pub env_term: f64,
    pub kl_term: f64,
    pub total: f64,
    pub val: Option<EvalMetrics>,
    pub test: EvalMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub val: Option<EvalMetrics>,
    pub test: EvalMetrics,
    pub train_size: usize,
    pub augment: AugmentStats,
    /// Excluded from the metric files; reported in manifests only.
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AugmentStats {
    pub generated: usize,
    pub invalid: usize,
    pub warnings: usize,
}

impl From<&AugmentSummary> for AugmentStats {
    fn from(s: &AugmentSummary) -> Self {
        AugmentStats {
            generated: s.generated,
            invalid: s.invalid_graphs,
            warnings: s.warnings.len(),
        }
    }
}

pub struct TrainOutcome {
    pub model: Model,
    /// The configuration with data-dependent fields resolved; its canonical
    /// text is what the checkpoint stores.
    pub config: ExperimentConfig,
    pub report: MetricsReport,
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".into(), |v| v.to_string())
}

impl MetricsReport {
    /// `epoch,main_ce,env_term,kl_term,val_acc,val_auc,test_acc,test_auc`.
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("epoch,main_ce,env_term,kl_term,val_acc,val_auc,test_acc,test_auc\n");
        for r in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.epoch,
                r.main_ce,
                r.env_term,
                r.kl_term,
                fmt_opt(r.val.map(|v| v.accuracy)),
                fmt_opt(r.val.and_then(|v| v.auc)),
                r.test.accuracy,
                fmt_opt(r.test.auc),
            );
        }
        s
    }

    /// Final results as `key = value` lines.
    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "epochs_run = {}", self.epochs.len());
        let _ = writeln!(s, "best_epoch = {}", self.best_epoch);
        let _ = writeln!(s, "stopped_early = {}", self.stopped_early);
        let _ = writeln!(s, "train_size = {}", self.train_size);
        let _ = writeln!(s, "augment_generated = {}", self.augment.generated);
        let _ = writeln!(s, "augment_invalid = {}", self.augment.invalid);
        let _ = writeln!(s, "val_acc = {}", fmt_opt(self.val.map(|v| v.accuracy)));
        let _ = writeln!(s, "val_auc = {}", fmt_opt(self.val.and_then(|v| v.auc)));
        let _ = writeln!(s, "test_acc = {}", self.test.accuracy);
        let _ = writeln!(s, "test_auc = {}", fmt_opt(self.test.auc));
        s
    }
}

/// Loads the data at `path` and splits it according to `config`. Pre-split
/// directories are used as they are.
pub fn load_split(path: &Path, config: &ExperimentConfig) -> Result<SplitData> {
    let mut split = match detect_source(path)? {
        Source::PreSplit => SplitData {
            train: read_records(&path.join("train.jsonl"))?,
            val: read_records(&path.join("val.jsonl"))?,
            test: read_records(&path.join("test.jsonl"))?,
        },
        Source::Tu => {
            let options = TuOptions {
                elements: config.data.elements.clone(),
            };
            let ds = datasets::load_tu_dataset(path, &options)?;
            ood_split(&ds, &config.split, config.seed)?
        }
        Source::Records => ood_split(&read_records(path)?, &config.split, config.seed)?,
    };
    let classes = [&split.train, &split.val, &split.test]
        .iter()
        .map(|d| d.num_classes)
        .max()
        .unwrap_or(0);
    for part in [&mut split.train, &mut split.val, &mut split.test] {
        part.num_classes = classes;
    }
    Ok(split)
}

fn library(config: &GeneratorConfig) -> Result<FragmentLibrary> {
    match config.library.as_str() {
        "starter" => Ok(FragmentLibrary::starter()),
        path => FragmentLibrary::load(Path::new(path)),
    }
}

/// Fixes the feature scheme and class count and checks them against the
/// data.
fn resolve(config: &ExperimentConfig, data: &mut SplitData) -> Result<ExperimentConfig> {
    let mut resolved = config.clone();
    let scheme = match config.data.features {
        Some(s) => {
            for part in [&mut data.train, &mut data.val, &mut data.test] {
                part.featurize(s)?;
            }
            s
        }
        None => data
            .train
            .scheme()
            .ok_or_else(|| Error::arg("training set is empty"))?,
    };
    for part in [&data.train, &data.val, &data.test] {
        if let Some(other) = part.scheme() {
            if other != scheme {
                return Err(Error::Config {
                    key: "data.features".into(),
                    message: format!("parts use feature schemes {scheme} and {other}"),
                });
            }
        }
    }
    let observed = data.train.num_classes.max(data.val.num_classes).max(data.test.num_classes);
    let classes = match config.data.num_classes {
        Some(c) if c < observed => {
            return Err(Error::Config {
                key: "data.num_classes".into(),
                message: format!("{c} classes but labels reach {}", observed - 1),
            })
        }
        Some(c) => c,
        None => observed,
    };
    resolved.data.features = Some(scheme);
    resolved.data.num_classes = Some(classes);
    Ok(resolved)
}

fn augment(
    config: &ExperimentConfig,
    lib: Option<&FragmentLibrary>,
    train: &Dataset,
    seed: u64,
) -> Result<(Dataset, AugmentSummary)> {
    let Some(lib) = lib else {
        return Ok((train.clone(), AugmentSummary::default()));
    };
    let molecular = |g: &crate::graph::MolecularGraph| g.nodes().iter().all(|n| n.element().is_some());
    if !train.graphs.iter().any(molecular) {
        info!("growth skipped: training graphs carry no atom nodes");
        return Ok((train.clone(), AugmentSummary::default()));
    }
    let (graphs, summary) =
        generate_augmented_dataset(&train.graphs, lib, config.generator.per_graph, config.generator.mode, seed)?;
    let scheme = train.scheme();
    let mut out = Dataset {
        name: train.name.clone(),
        graphs,
        num_classes: train.num_classes,
    };
    if let Some(s) = scheme {
        out.featurize(s)?;
    }
    Ok((out, summary))
}

/// Class probabilities `[n, C]` in evaluation mode, computed in fixed
/// batches of `batch_size` in dataset order.
pub fn predict_probs(model: &Model, ds: &Dataset, batch_size: usize) -> Result<Vec<f64>> {
    let c = model.config.num_classes;
    let mut out = Vec::with_capacity(ds.len() * c);
    for chunk in ds.graphs.chunks(batch_size.max(1)) {
        let batch = GraphBatch::new(chunk.iter().collect())?;
        let packed = PackedGraph::from_batch(&batch)?;
        let tape = Tape::new();
        let fwd = model.forward(&tape, &packed, Mode::Eval)?;
        let mut logits = fwd.logits.value().data().to_vec();
        for row in logits.chunks_mut(c) {
            softmax_in_place(row);
        }
        out.extend(logits);
    }
    Ok(out)
}

pub fn evaluate(model: &Model, ds: &Dataset, batch_size: usize) -> Result<EvalMetrics> {
    if ds.is_empty() {
        return Err(Error::arg("cannot evaluate on an empty dataset"));
    }
    let labels = ds.labels()?;
    let c = model.config.num_classes;
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::arg(format!("label {bad} out of range for {c} classes")));
    }
    let probs = predict_probs(model, ds, batch_size)?;
    Ok(EvalMetrics {
        accuracy: accuracy(&probs, c, &labels)?,
        auc: multiclass_auc(&probs, c, &labels).ok(),
        count: ds.len(),
    })
}

/// Runs the full training procedure and returns the parameters of the
/// epoch with the best validation accuracy, rounded to checkpoint
/// precision, together with metrics computed from exactly those
/// parameters.
pub fn train(config: &ExperimentConfig, data: &SplitData) -> Result<TrainOutcome> {
    config.validate()?;
    let started = Instant::now();
    let mut data = data.clone();
    if data.train.is_empty() || data.test.is_empty() {
        return Err(Error::arg("training and test sets must be nonempty"));
    }
    let resolved = resolve(config, &mut data)?;
    let in_dim = resolved.data.features.expect("resolved").dim();
    let classes = resolved.data.num_classes.expect("resolved");
    let mut model = Model::new(resolved.model_config(in_dim, classes), resolved.seed)?;
    let adam = Adam::new(resolved.lr);

    let lib = match resolved.generator.mode {
        GrowthMode::Off => None,
        _ if resolved.generator.per_graph == 0 => None,
        _ => Some(library(&resolved.generator)?),
    };
    let (mut train_set, summary) = augment(&resolved, lib.as_ref(), &data.train, resolved.seed)?;
    for w in summary.warnings.iter().take(3) {
        warn!("augmentation: {w}");
    }
    if summary.warnings.len() > 3 {
        warn!("augmentation: {} more warnings", summary.warnings.len() - 3);
    }
    let augment_stats = AugmentStats::from(&summary);
    let train_labels_check = train_set.labels()?;
    if let Some(&bad) = train_labels_check.iter().find(|&&y| y >= classes) {
        return Err(Error::arg(format!("label {bad} out of range for {classes} classes")));
    }

    let mut rng = rng_from_seed(resolved.seed ^ 0x5E_ED0F_7EA1);
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, crate::autodiff::ParameterStore)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    let eval_bs = resolved.eval_batch_size;
    let has_val = !data.val.is_empty();

    for epoch in 1..=resolved.epochs {
        if epoch > 1 && resolved.generator.regrow_each_epoch && lib.is_some() {
            train_set = augment(&resolved, lib.as_ref(), &data.train, resolved.seed.wrapping_add(epoch as u64))?.0;
        }
        let temperature = resolved.egib.temperature(epoch - 1);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);
        let (mut main_ce, mut env_term, mut kl_term, mut total) = (0.0, 0.0, 0.0, 0.0);
        for chunk in order.chunks(resolved.batch_size) {
            let graphs: Vec<_> = chunk.iter().map(|&i| &train_set.graphs[i]).collect();
            let batch = GraphBatch::new(graphs)?;
            let labels = batch.labels()?;
            let packed = PackedGraph::from_batch(&batch)?;
            let tape = Tape::new();
            let fwd = model.forward(
                &tape,
                &packed,
                Mode::Train {
                    rng: &mut rng,
                    temperature,
                },
            )?;
            let terms = model.loss(&fwd, &labels)?;
            let loss = terms.total.item();
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("non-finite loss {loss}"),
                });
            }
            let w = chunk.len() as f64;
            main_ce += w * terms.main_ce.item();
            env_term += w * terms.env_term.item();
            kl_term += w * terms.kl_term.item();
            total += w * loss;
            tape.backward(terms.total, &mut model.store)
                .map_err(|e| Error::Training {
                    epoch,
                    message: e.to_string(),
                })?;
            adam.step(&mut model.store)?;
        }
        let n = train_set.len() as f64;
        let val = if has_val {
            Some(evaluate(&model, &data.val, eval_bs)?)
        } else {
            None
        };
        let test = evaluate(&model, &data.test, eval_bs)?;
        let record = EpochRecord {
            epoch,
            temperature,
            main_ce: main_ce / n,
            env_term: env_term / n,
            kl_term: kl_term / n,
            total: total / n,
            val,
            test,
        };
        info!(
            "epoch {epoch}: loss {:.4} (ce {:.4}, env {:.4}, kl {:.4}) val_acc {} test_acc {:.4}",
            record.total,
            record.main_ce,
            record.env_term,
            record.kl_term,
            fmt_opt(val.map(|v| v.accuracy)),
            test.accuracy
        );
        epochs.push(record);

        let score = val.map_or(f64::NEG_INFINITY, |v| v.accuracy);
        let improved = match &best {
            None => true,
            Some((b, _, _)) => !has_val || score > *b,
        };
        if improved {
            best = Some((score, epoch, model.store.quantized()));
            since_best = 0;
        } else {
            since_best += 1;
            if resolved.patience > 0 && since_best >= resolved.patience {
                stopped_early = true;
                info!("early stop after epoch {epoch}");
                break;
            }
        }
    }

    let (_, best_epoch, store) = best.expect("at least one epoch");
    let model = model.with_store(store)?;
    let val = if has_val {
        Some(evaluate(&model, &data.val, eval_bs)?)
    } else {
        None
    };
    let test = evaluate(&model, &data.test, eval_bs)?;
    let report = MetricsReport {
        seed: resolved.seed,
        epochs,
        best_epoch,
        stopped_early,
        val,
        test,
        train_size: train_set.len(),
        augment: augment_stats,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome {
        model,
        config: resolved,
        report,
    })
}

/// Rebuilds a model from a checkpoint's configuration and parameters.
pub fn model_from_checkpoint(ck: &crate::autodiff::checkpoint::Checkpoint) -> Result<(Model, ExperimentConfig)> {
    let config = ExperimentConfig::parse(&ck.config_text)?;
    let features = config.data.features.ok_or_else(|| {
        Error::Checkpoint("checkpoint config lacks a resolved data.features".into())
    })?;
    let classes = config.data.num_classes.ok_or_else(|| {
        Error::Checkpoint("checkpoint config lacks a resolved data.num_classes".into())
    })?;
    let model = Model::new(config.model_config(features.dim(), classes), ck.store.seed())?
        .with_store(ck.store.clone())?;
    Ok((model, config))
}

/// Applies the checkpoint's feature scheme to a dataset before evaluation.
pub fn prepare_eval(ds: &mut Dataset, config: &ExperimentConfig) -> Result<()> {
    if let Some(s) = config.data.features {
        if ds.scheme() != Some(s) {
            ds.featurize(s)?;
        }
    }
    Ok(())
}
