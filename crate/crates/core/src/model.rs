//! The full classifier and the plain GIN baseline.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{ParameterStore, Rng, Tape, Tensor};
use crate::egib::{
    egib_loss, sample_mask, EdgeExtractor, EdgeScore, EgibConfig, EnvironmentPredictor, Prior,
};
use crate::error::{Error, Result};
use crate::gnn::{GnnConfig, GnnEncoder, PackedGraph};
use crate::graph::GraphBatch;
use crate::sci::{sci_forward, Classifier, Representation, SciConfig, SciWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelKind {
    #[default]
    Cauemo,
    /// GIN encoder, readout and MLP head trained on cross-entropy alone.
    Gin,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Cauemo => "cauemo",
            ModelKind::Gin => "gin",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cauemo" => Ok(ModelKind::Cauemo),
            "gin" => Ok(ModelKind::Gin),
            _ => Err(Error::arg(format!("unknown model `{s}` (cauemo|gin)"))),
        }
    }
}

/// Which branch the bottleneck likelihood term acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ObjectiveCenter {
    /// Push label information out of the environment branch.
    #[default]
    Environment,
    /// Fit the label from the invariant branch instead.
    Subgraph,
}

impl fmt::Display for ObjectiveCenter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectiveCenter::Environment => "environment",
            ObjectiveCenter::Subgraph => "subgraph",
        })
    }
}

impl FromStr for ObjectiveCenter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "environment" => Ok(ObjectiveCenter::Environment),
            "subgraph" => Ok(ObjectiveCenter::Subgraph),
            _ => Err(Error::arg(format!(
                "unknown objective center `{s}` (environment|subgraph)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub gnn: GnnConfig,
    pub egib: EgibConfig,
    pub sci: SciConfig,
    pub objective: ObjectiveCenter,
    pub in_dim: usize,
    pub num_classes: usize,
}

#[derive(Debug, Clone)]
enum Parts {
    Cauemo {
        extractor: EdgeExtractor,
        predictor: EnvironmentPredictor,
        prior: Prior,
        sci: SciWeights,
        classifier: Classifier,
    },
    Gin {
        encoder: GnnEncoder,
        classifier: Classifier,
    },
}

/// Forward-pass mode. Training draws relaxed edge gates and attention noise
/// from `rng`; evaluation uses `alpha = p` and no noise.
pub enum Mode<'r> {
    Train { rng: &'r mut Rng, temperature: f64 },
    Eval,
}

#[derive(Debug, Clone, Copy)]
pub struct Forward<'t> {
    pub logits: Tensor<'t>,
    pub env_logits: Option<Tensor<'t>>,
    /// Clamped edge probabilities `[E, 1]`.
    pub p: Option<Tensor<'t>>,
    pub alpha: Option<Tensor<'t>>,
    pub prior: Option<Tensor<'t>>,
    pub repr: Option<Representation<'t>>,
    /// Invariant-branch logits, present under the subgraph objective.
    pub invariant_logits: Option<Tensor<'t>>,
}

/// Total loss and its additive parts: `total = main_ce + env_term + kl_term`.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms<'t> {
    pub total: Tensor<'t>,
    pub main_ce: Tensor<'t>,
    pub env_term: Tensor<'t>,
    /// `-beta * KL`.
    pub kl_term: Tensor<'t>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParameterStore,
    parts: Parts,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.gnn.validate()?;
        config.egib.validate()?;
        if config.num_classes < 2 {
            return Err(Error::Config {
                key: "data.num_classes".into(),
                message: format!("need at least 2 classes, got {}", config.num_classes),
            });
        }
        let d = config.gnn.hidden_dim;
        let mut store = ParameterStore::new(seed);
        let parts = match config.kind {
            ModelKind::Cauemo => {
                config.sci.validate(d)?;
                Parts::Cauemo {
                    extractor: EdgeExtractor::new(&mut store, config.in_dim, config.gnn)?,
                    predictor: EnvironmentPredictor::new(
                        &mut store,
                        config.in_dim,
                        config.gnn,
                        config.num_classes,
                    )?,
                    prior: Prior::new(&mut store, config.egib.prior_r)?,
                    sci: SciWeights::new(&mut store, d)?,
                    classifier: Classifier::new(&mut store, "classifier", d, config.num_classes)?,
                }
            }
            ModelKind::Gin => Parts::Gin {
                encoder: GnnEncoder::new(&mut store, "main.gnn", config.in_dim, config.gnn)?,
                classifier: Classifier::new(&mut store, "classifier", d, config.num_classes)?,
            },
        };
        Ok(Model {
            config,
            store,
            parts,
        })
    }

    /// Replaces the parameters with `store`, which must hold exactly the
    /// parameters this architecture registers, in order and with the same
    /// shapes.
    pub fn with_store(mut self, store: ParameterStore) -> Result<Self> {
        if store.len() != self.store.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameters, architecture expects {}",
                store.len(),
                self.store.len()
            )));
        }
        for (a, b) in self.store.iter().zip(store.iter()) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}` {:?} does not match expected `{}` {:?}",
                    b.name,
                    b.value.shape(),
                    a.name,
                    a.value.shape()
                )));
            }
        }
        self.store = store;
        Ok(self)
    }

    pub fn has_extractor(&self) -> bool {
        matches!(self.parts, Parts::Cauemo { .. })
    }

    pub fn sci_weights(&self) -> Option<SciWeights> {
        match &self.parts {
            Parts::Cauemo { sci, .. } => Some(*sci),
            Parts::Gin { .. } => None,
        }
    }

    pub fn forward<'t>(&self, tape: &'t Tape, graph: &PackedGraph, mode: Mode<'_>) -> Result<Forward<'t>> {
        let store = &self.store;
        let x = tape.constant(graph.features.clone());
        match &self.parts {
            Parts::Gin {
                encoder,
                classifier,
            } => {
                let z = encoder.encode_graphs(tape, store, graph, x, None)?;
                Ok(Forward {
                    logits: classifier.predict(tape, store, z)?,
                    env_logits: None,
                    p: None,
                    alpha: None,
                    prior: None,
                    repr: None,
                    invariant_logits: None,
                })
            }
            Parts::Cauemo {
                extractor,
                predictor,
                prior,
                sci,
                classifier,
            } => {
                let p = extractor.forward(tape, store, graph, x)?;
                let (mask, rng) = match mode {
                    Mode::Train { rng, temperature } => (sample_mask(p, temperature, Some(&mut *rng))?, Some(rng)),
                    Mode::Eval => (sample_mask(p, self.config.egib.tau_floor, None)?, None),
                };
                let (z_e, env_logits) = predictor.environment_embed(tape, store, graph, x, &mask)?;
                let z_c = predictor.invariant_embed(tape, store, graph, x, &mask)?;
                let invariant_logits = match self.config.objective {
                    ObjectiveCenter::Subgraph => Some(predictor.head.forward(tape, store, z_c)?),
                    ObjectiveCenter::Environment => None,
                };
                let out = sci_forward(
                    tape,
                    store,
                    z_e,
                    z_c,
                    &self.config.sci,
                    sci,
                    classifier,
                    rng,
                )?;
                Ok(Forward {
                    logits: out.logits,
                    env_logits: Some(env_logits),
                    p: Some(p),
                    alpha: Some(mask.alpha),
                    prior: Some(prior.forward(tape, store)),
                    repr: Some(out.repr),
                    invariant_logits,
                })
            }
        }
    }

    /// `CE(main) + E-GIB terms`. Under the environment objective the
    /// environment term is the environment head's label log-likelihood
    /// `-CE(env)`; under the subgraph objective it is `+CE` of the same head
    /// applied to the invariant embedding.
    pub fn loss<'t>(&self, fwd: &Forward<'t>, labels: &[usize]) -> Result<LossTerms<'t>> {
        let main_ce = fwd.logits.cross_entropy(labels)?;
        let tape = main_ce.tape;
        let (Some(env_logits), Some(p), Some(prior)) = (fwd.env_logits, fwd.p, fwd.prior) else {
            let zero = tape.constant(crate::autodiff::Array::scalar(0.0));
            return Ok(LossTerms {
                total: main_ce,
                main_ce,
                env_term: zero,
                kl_term: zero,
            });
        };
        let beta = self.config.egib.beta;
        let cap = self.config.egib.env_cap(self.config.num_classes);
        let terms = egib_loss(env_logits, labels, p, prior, beta, cap)?;
        let env_term = match (self.config.objective, fwd.invariant_logits) {
            (ObjectiveCenter::Environment, _) => terms.likelihood,
            (ObjectiveCenter::Subgraph, Some(inv)) => inv.cross_entropy(labels)?,
            (ObjectiveCenter::Subgraph, None) => {
                return Err(Error::State("subgraph objective without invariant logits".into()))
            }
        };
        let kl_term = terms.kl.scale(-beta);
        let total = main_ce.add(env_term)?.add(kl_term)?;
        Ok(LossTerms {
            total,
            main_ce,
            env_term,
            kl_term,
        })
    }

    /// Evaluation-mode edge probabilities for every graph in `batch`, in
    /// graph-local node indices.
    pub fn edge_scores(&self, batch: &GraphBatch<'_>, first_graph_id: usize) -> Result<Vec<EdgeScore>> {
        if !self.has_extractor() {
            return Err(Error::arg("model has no edge extractor"));
        }
        let packed = PackedGraph::from_batch(batch)?;
        let tape = Tape::new();
        let fwd = self.forward(&tape, &packed, Mode::Eval)?;
        let p = fwd.p.expect("extractor output").value();
        let mut out = Vec::with_capacity(batch.num_edges());
        for k in 0..batch.num_graphs() {
            let offset = batch.node_offsets[k];
            for e in batch.edge_offsets[k]..batch.edge_offsets[k + 1] {
                let edge = batch.edges[e];
                out.push(EdgeScore {
                    graph: first_graph_id + k,
                    u: edge.u - offset,
                    v: edge.v - offset,
                    p: p.data()[e],
                });
            }
        }
        Ok(out)
    }
}
