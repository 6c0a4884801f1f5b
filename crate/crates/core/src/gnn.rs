//! GIN and GCN message-passing encoders with mean or sum readout.

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use crate::autodiff::{Array, ParamId, ParameterStore, Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::GraphBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backbone {
    #[default]
    Gin,
    Gcn,
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backbone::Gin => "gin",
            Backbone::Gcn => "gcn",
        })
    }
}

impl FromStr for Backbone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gin" => Ok(Backbone::Gin),
            "gcn" => Ok(Backbone::Gcn),
            _ => Err(Error::arg(format!("unknown backbone `{s}` (gin|gcn)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Readout {
    #[default]
    Mean,
    Sum,
}

impl fmt::Display for Readout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Readout::Mean => "mean",
            Readout::Sum => "sum",
        })
    }
}

impl FromStr for Readout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Readout::Mean),
            "sum" => Ok(Readout::Sum),
            _ => Err(Error::arg(format!("unknown readout `{s}` (mean|sum)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnnConfig {
    pub backbone: Backbone,
    pub layers: usize,
    pub hidden_dim: usize,
    /// Self-loop weight offset of the GIN update; fixed, never trained.
    pub gin_epsilon: f64,
    pub readout: Readout,
}

impl Default for GnnConfig {
    fn default() -> Self {
        GnnConfig {
            backbone: Backbone::Gin,
            layers: 3,
            hidden_dim: 64,
            gin_epsilon: 0.0,
            readout: Readout::Mean,
        }
    }
}

impl GnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config {
                key: "gnn.layers".into(),
                message: "must be >= 1".into(),
            });
        }
        if self.hidden_dim == 0 {
            return Err(Error::Config {
                key: "gnn.hidden_dim".into(),
                message: "must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// Affine map `x W + b` with `W: [in, out]`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParameterStore, name: &str, fan_in: usize, fan_out: usize) -> Result<Self> {
        Ok(Linear {
            w: store.glorot(&format!("{name}.w"), fan_in, fan_out)?,
            b: store.zeros(&format!("{name}.b"), &[fan_out])?,
        })
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParameterStore, x: Tensor<'t>) -> Result<Tensor<'t>> {
        x.matmul(tape.param(store, self.w))?
            .add_bias(tape.param(store, self.b))
    }
}

/// Index structure of a batch in the form the encoder consumes.
#[derive(Debug, Clone)]
pub struct PackedGraph {
    pub num_nodes: usize,
    pub features: Array,
    pub src: Rc<[usize]>,
    pub dst: Rc<[usize]>,
    pub segments: Vec<(usize, usize)>,
}

impl PackedGraph {
    pub fn from_batch(batch: &GraphBatch<'_>) -> Result<Self> {
        Ok(PackedGraph {
            num_nodes: batch.num_nodes(),
            features: Array::new(&[batch.num_nodes(), batch.feature_dim()], batch.features())?,
            src: batch.edge_sources().into(),
            dst: batch.edge_targets().into(),
            segments: batch.segments(),
        })
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }

    pub fn num_graphs(&self) -> usize {
        self.segments.len()
    }
}

#[derive(Debug, Clone)]
enum Layer {
    Gin { first: Linear, second: Linear },
    Gcn(Linear),
}

/// Stack of message-passing layers. Edge weights, when supplied, scale each
/// message, so a weight of 0 removes the edge and a weight of 1 keeps it.
#[derive(Debug, Clone)]
pub struct GnnEncoder {
    pub config: GnnConfig,
    pub in_dim: usize,
    layers: Vec<Layer>,
}

impl GnnEncoder {
    pub fn new(store: &mut ParameterStore, prefix: &str, in_dim: usize, config: GnnConfig) -> Result<Self> {
        config.validate()?;
        let d = config.hidden_dim;
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let fan_in = if l == 0 { in_dim } else { d };
            layers.push(match config.backbone {
                Backbone::Gin => Layer::Gin {
                    first: Linear::new(store, &format!("{prefix}.layer{l}.mlp0"), fan_in, d)?,
                    second: Linear::new(store, &format!("{prefix}.layer{l}.mlp1"), d, d)?,
                },
                Backbone::Gcn => Layer::Gcn(Linear::new(store, &format!("{prefix}.layer{l}"), fan_in, d)?),
            });
        }
        Ok(GnnEncoder {
            config,
            in_dim,
            layers,
        })
    }

    /// Node embeddings `[N, hidden_dim]`.
    pub fn encode_nodes<'t>(
        &self,
        tape: &'t Tape,
        store: &ParameterStore,
        graph: &PackedGraph,
        x: Tensor<'t>,
        edge_weights: Option<Tensor<'t>>,
    ) -> Result<Tensor<'t>> {
        let shape = x.shape();
        if shape != [graph.num_nodes, self.in_dim] {
            return Err(Error::shape(format!(
                "encoder expects [{}, {}] features, got {shape:?}",
                graph.num_nodes, self.in_dim
            )));
        }
        if let Some(w) = edge_weights {
            if w.value().numel() != graph.num_edges() {
                return Err(Error::shape(format!(
                    "{} edge weights for {} edges",
                    w.value().numel(),
                    graph.num_edges()
                )));
            }
        }
        // GCN normalization depends only on the edge weights; share it across layers.
        let gcn_norm = match self.config.backbone {
            Backbone::Gcn => {
                let ones = tape.constant(Array::full(&[graph.num_nodes, 1], 1.0));
                let degree = ones
                    .propagate(edge_weights, &graph.src, &graph.dst)?
                    .add_scalar(1.0);
                Some(degree.powf(-0.5))
            }
            Backbone::Gin => None,
        };
        let mut h = x;
        for (l, layer) in self.layers.iter().enumerate() {
            h = match layer {
                Layer::Gin { first, second } => {
                    let agg = h.propagate(edge_weights, &graph.src, &graph.dst)?;
                    let z = h.scale(1.0 + self.config.gin_epsilon).add(agg)?;
                    let z = first.forward(tape, store, z)?.relu();
                    second.forward(tape, store, z)?
                }
                Layer::Gcn(lin) => {
                    let norm = gcn_norm.expect("gcn normalization");
                    let hw = h.matmul(tape.param(store, lin.w))?.scale_rows(norm)?;
                    let agg = hw.propagate(edge_weights, &graph.src, &graph.dst)?.add(hw)?;
                    agg.scale_rows(norm)?.add_bias(tape.param(store, lin.b))?
                }
            };
            if l + 1 < self.layers.len() {
                h = h.relu();
            }
        }
        Ok(h)
    }

    /// Graph embeddings `[B, hidden_dim]` for the batch.
    pub fn encode_graphs<'t>(
        &self,
        tape: &'t Tape,
        store: &ParameterStore,
        graph: &PackedGraph,
        x: Tensor<'t>,
        edge_weights: Option<Tensor<'t>>,
    ) -> Result<Tensor<'t>> {
        let h = self.encode_nodes(tape, store, graph, x, edge_weights)?;
        readout(h, &graph.segments, self.config.readout)
    }
}

/// Pools node rows into one row per graph; an empty graph pools to zeros.
pub fn readout<'t>(h: Tensor<'t>, segments: &[(usize, usize)], kind: Readout) -> Result<Tensor<'t>> {
    match kind {
        Readout::Mean => h.segment_mean(segments),
        Readout::Sum => h.segment_sum(segments),
    }
}
