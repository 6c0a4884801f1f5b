//! Experiment configuration and its `key = value` text form.
//!
//! Lines are `dotted.key = value`; `#` starts a comment; blank lines are
//! ignored. Keys not listed in [`KEYS`] are rejected. Values omitted from a
//! file keep their defaults. [`ExperimentConfig::to_text`] prints every key
//! in a fixed order, and that canonical text is what checkpoints hash.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::datasets::{SplitCriterion, SplitSpec};
use crate::egib::EgibConfig;
use crate::error::{Error, Result};
use crate::generator::GrowthMode;
use crate::gnn::{Backbone, GnnConfig, Readout};
use crate::graph::{Element, FeatureScheme};
use crate::model::{ModelConfig, ModelKind, ObjectiveCenter};
use crate::sci::SciConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub mode: GrowthMode,
    pub per_graph: usize,
    /// Fragment library path, or `starter` for the bundled one.
    pub library: String,
    /// Regrow the augmentation before every epoch instead of once.
    pub regrow_each_epoch: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            mode: GrowthMode::Knowledge,
            per_graph: 1,
            library: "starter".into(),
            regrow_each_epoch: false,
        }
    }
}

/// Properties of the input data the model is built for.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataConfig {
    /// Node feature scheme; `None` means "take it from the data".
    pub features: Option<FeatureScheme>,
    /// `None` means "infer from labels".
    pub num_classes: Option<usize>,
    /// Element names for TU node labels, in label order.
    pub elements: Option<Vec<Element>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub lr: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub model: ModelKind,
    pub gnn: GnnConfig,
    pub egib: EgibConfig,
    pub objective_center: ObjectiveCenter,
    pub sci: SciConfig,
    pub generator: GeneratorConfig,
    pub split: SplitSpec,
    pub data: DataConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            epochs: 100,
            batch_size: 32,
            eval_batch_size: 64,
            lr: 1e-3,
            patience: 20,
            model: ModelKind::Cauemo,
            gnn: GnnConfig::default(),
            egib: EgibConfig::default(),
            objective_center: ObjectiveCenter::Environment,
            sci: SciConfig::default(),
            generator: GeneratorConfig::default(),
            split: SplitSpec::default(),
            data: DataConfig::default(),
        }
    }
}

/// Every accepted key, in canonical order.
pub const KEYS: &[&str] = &[
    "seed",
    "epochs",
    "batch_size",
    "eval_batch_size",
    "lr",
    "patience",
    "model",
    "gnn.backbone",
    "gnn.layers",
    "gnn.hidden_dim",
    "gnn.readout",
    "egib.beta",
    "egib.tau",
    "egib.tau_decay",
    "egib.tau_floor",
    "egib.prior_r",
    "egib.env_ce_cap",
    "egib.objective_center",
    "sci.heads",
    "sci.noise_std",
    "sci.interaction",
    "sci.bridge",
    "generator.mode",
    "generator.per_graph",
    "generator.library",
    "generator.regrow_each_epoch",
    "split.criterion",
    "split.train",
    "split.val",
    "split.test",
    "data.features",
    "data.num_classes",
    "data.elements",
];

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Config {
        key: key.into(),
        message: format!("cannot parse `{raw}`"),
    })
}

fn flag(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "on" | "yes" => Ok(true),
        "false" | "off" | "no" => Ok(false),
        _ => Err(Error::Config {
            key: key.into(),
            message: format!("expected true or false, found `{raw}`"),
        }),
    }
}

fn keyed<T>(key: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config { .. } => e,
        other => Error::Config {
            key: key.into(),
            message: other.to_string(),
        },
    })
}

fn optional<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "auto".into(), T::to_string)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, val) = line.split_once('=').ok_or_else(|| Error::Config {
                key: line.into(),
                message: format!("line {}: expected `key = value`", i + 1),
            })?;
            cfg.set(key.trim(), val.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = value(key, v)?,
            "epochs" => self.epochs = value(key, v)?,
            "batch_size" => self.batch_size = value(key, v)?,
            "eval_batch_size" => self.eval_batch_size = value(key, v)?,
            "lr" => self.lr = value(key, v)?,
            "patience" => self.patience = value(key, v)?,
            "model" => self.model = keyed(key, v.parse())?,
            "gnn.backbone" => self.gnn.backbone = keyed(key, v.parse::<Backbone>())?,
            "gnn.layers" => self.gnn.layers = value(key, v)?,
            "gnn.hidden_dim" => self.gnn.hidden_dim = value(key, v)?,
            "gnn.readout" => self.gnn.readout = keyed(key, v.parse::<Readout>())?,
            "egib.beta" => self.egib.beta = value(key, v)?,
            "egib.tau" => self.egib.tau = value(key, v)?,
            "egib.tau_decay" => self.egib.tau_decay = value(key, v)?,
            "egib.tau_floor" => self.egib.tau_floor = value(key, v)?,
            "egib.prior_r" => self.egib.prior_r = value(key, v)?,
            "egib.env_ce_cap" => {
                self.egib.env_ce_cap = match v {
                    "auto" => None,
                    _ => Some(value(key, v)?),
                }
            }
            "egib.objective_center" => self.objective_center = keyed(key, v.parse())?,
            "sci.heads" => self.sci.heads = value(key, v)?,
            "sci.noise_std" => self.sci.noise_std = value(key, v)?,
            "sci.interaction" => self.sci.interaction = flag(key, v)?,
            "sci.bridge" => self.sci.bridge = flag(key, v)?,
            "generator.mode" => self.generator.mode = keyed(key, v.parse())?,
            "generator.per_graph" => self.generator.per_graph = value(key, v)?,
            "generator.library" => self.generator.library = v.to_string(),
            "generator.regrow_each_epoch" => self.generator.regrow_each_epoch = flag(key, v)?,
            "split.criterion" => self.split.criterion = keyed(key, v.parse::<SplitCriterion>())?,
            "split.train" => self.split.train = value(key, v)?,
            "split.val" => self.split.val = value(key, v)?,
            "split.test" => self.split.test = value(key, v)?,
            "data.features" => {
                self.data.features = match v {
                    "auto" => None,
                    _ => Some(keyed(key, v.parse())?),
                }
            }
            "data.num_classes" => {
                self.data.num_classes = match v {
                    "auto" => None,
                    _ => Some(value(key, v)?),
                }
            }
            "data.elements" => {
                self.data.elements = match v {
                    "auto" | "" => None,
                    _ => Some(keyed(
                        key,
                        v.split(',').map(|s| s.trim().parse::<Element>()).collect(),
                    )?),
                }
            }
            _ => {
                return Err(Error::Config {
                    key: key.into(),
                    message: "unknown key".into(),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| -> Result<()> {
            Err(Error::Config {
                key: key.into(),
                message: message.into(),
            })
        };
        if self.epochs == 0 {
            return bad("epochs", "must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be >= 1");
        }
        if self.eval_batch_size == 0 {
            return bad("eval_batch_size", "must be >= 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be > 0");
        }
        self.gnn.validate()?;
        self.egib.validate()?;
        if self.model == ModelKind::Cauemo {
            self.sci.validate(self.gnn.hidden_dim)?;
        }
        keyed("split", self.split.validate())?;
        Ok(())
    }

    /// Canonical text listing every key.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let elements = self.data.elements.as_ref().map(|es| {
            es.iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join(",")
        });
        let values: Vec<String> = vec![
            self.seed.to_string(),
            self.epochs.to_string(),
            self.batch_size.to_string(),
            self.eval_batch_size.to_string(),
            self.lr.to_string(),
            self.patience.to_string(),
            self.model.to_string(),
            self.gnn.backbone.to_string(),
            self.gnn.layers.to_string(),
            self.gnn.hidden_dim.to_string(),
            self.gnn.readout.to_string(),
            self.egib.beta.to_string(),
            self.egib.tau.to_string(),
            self.egib.tau_decay.to_string(),
            self.egib.tau_floor.to_string(),
            self.egib.prior_r.to_string(),
            optional(&self.egib.env_ce_cap),
            self.objective_center.to_string(),
            self.sci.heads.to_string(),
            self.sci.noise_std.to_string(),
            self.sci.interaction.to_string(),
            self.sci.bridge.to_string(),
            self.generator.mode.to_string(),
            self.generator.per_graph.to_string(),
            self.generator.library.clone(),
            self.generator.regrow_each_epoch.to_string(),
            self.split.criterion.to_string(),
            self.split.train.to_string(),
            self.split.val.to_string(),
            self.split.test.to_string(),
            optional(&self.data.features),
            optional(&self.data.num_classes),
            optional(&elements),
        ];
        debug_assert_eq!(values.len(), KEYS.len());
        for (k, v) in KEYS.iter().zip(values) {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Model architecture for the given input width and class count.
    pub fn model_config(&self, in_dim: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            kind: self.model,
            gnn: self.gnn,
            egib: self.egib,
            sci: self.sci,
            objective: self.objective_center,
            in_dim,
            num_classes,
        }
    }

    /// Applies one of the named ablations: `random`, `subgraph`,
    /// `noninter`, `nongcb`.
    pub fn apply_ablation(&mut self, name: &str) -> Result<()> {
        match name {
            "random" => self.generator.mode = GrowthMode::Random,
            "subgraph" => self.objective_center = ObjectiveCenter::Subgraph,
            "noninter" => self.sci.interaction = false,
            "nongcb" => self.sci.bridge = false,
            _ => {
                return Err(Error::arg(format!(
                    "unknown ablation `{name}` (random|subgraph|noninter|nongcb)"
                )))
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_text_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.lr = 0.0005;
        cfg.egib.beta = 0.7;
        cfg.data.elements = Some(vec![Element::C, Element::N]);
        cfg.data.num_classes = Some(2);
        let text = cfg.to_text();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
        assert_eq!(text.lines().count(), KEYS.len());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::parse("seed = 1\negib.betta = 2\n").unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "egib.betta"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn comments_and_bad_values() {
        let cfg = ExperimentConfig::parse("# header\nepochs = 5 # short\n\nsci.bridge = off\n").unwrap();
        assert_eq!(cfg.epochs, 5);
        assert!(!cfg.sci.bridge);
        assert!(ExperimentConfig::parse("epochs = many").is_err());
        assert!(ExperimentConfig::parse("sci.heads = 5").is_err());
        assert!(ExperimentConfig::parse("just a line").is_err());
    }
}
