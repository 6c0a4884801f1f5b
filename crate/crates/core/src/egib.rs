//! Environment extraction under an information bottleneck.
//!
//! An extractor scores every edge with the probability `p` that it belongs
//! to the environment subgraph. A relaxed Bernoulli gate `alpha` drawn from
//! `p` weights messages for the environment encoding, and `1 - alpha`
//! weights them for the complementary invariant encoding.

use std::io::Write;

use crate::autodiff::{binary_concrete_sample, Array, ParamId, ParameterStore, Rng, Tape, Tensor};
use crate::error::{Error, Result};
use crate::gnn::{GnnConfig, GnnEncoder, Linear, PackedGraph};

pub const P_MIN: f64 = 0.01;
pub const P_MAX: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgibConfig {
    pub beta: f64,
    /// Initial relaxation temperature.
    pub tau: f64,
    /// Per-epoch multiplicative decay of the temperature.
    pub tau_decay: f64,
    pub tau_floor: f64,
    /// Initial value of the learnable prior edge probability.
    pub prior_r: f64,
    /// Per-graph ceiling on the environment cross-entropy being maximized;
    /// `None` uses `ln C`, the loss of a uniform prediction.
    pub env_ce_cap: Option<f64>,
}

impl Default for EgibConfig {
    fn default() -> Self {
        EgibConfig {
            beta: 1.0,
            tau: 1.0,
            tau_decay: 0.97,
            tau_floor: 0.3,
            prior_r: 0.5,
            env_ce_cap: None,
        }
    }
}

impl EgibConfig {
    pub fn temperature(&self, epoch: usize) -> f64 {
        (self.tau * self.tau_decay.powi(epoch as i32)).max(self.tau_floor)
    }

    pub fn env_cap(&self, num_classes: usize) -> f64 {
        self.env_ce_cap.unwrap_or((num_classes as f64).ln())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| {
            Err(Error::Config {
                key: key.into(),
                message: message.into(),
            })
        };
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("egib.beta", "must be finite and >= 0");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("egib.tau", "must be > 0");
        }
        if !(self.tau_decay > 0.0 && self.tau_decay <= 1.0) {
            return bad("egib.tau_decay", "must be in (0, 1]");
        }
        if !(self.tau_floor > 0.0) {
            return bad("egib.tau_floor", "must be > 0");
        }
        if !(self.prior_r >= P_MIN && self.prior_r <= P_MAX) {
            return bad("egib.prior_r", "must be in [0.01, 0.99]");
        }
        if let Some(cap) = self.env_ce_cap {
            if !(cap > 0.0) {
                return bad("egib.env_ce_cap", "must be > 0");
            }
        }
        Ok(())
    }
}

/// Edge scorer `g_phi`: its own encoder followed by an MLP over endpoint
/// embedding pairs.
#[derive(Debug, Clone)]
pub struct EdgeExtractor {
    pub encoder: GnnEncoder,
    hidden: Linear,
    out: Linear,
}

impl EdgeExtractor {
    pub fn new(store: &mut ParameterStore, in_dim: usize, gnn: GnnConfig) -> Result<Self> {
        let d = gnn.hidden_dim;
        Ok(EdgeExtractor {
            encoder: GnnEncoder::new(store, "extractor.gnn", in_dim, gnn)?,
            hidden: Linear::new(store, "extractor.mlp0", 2 * d, d)?,
            out: Linear::new(store, "extractor.mlp1", d, 1)?,
        })
    }

    pub fn weights(&self) -> [ParamId; 4] {
        [self.hidden.w, self.hidden.b, self.out.w, self.out.b]
    }

    /// Per-edge environment probabilities `[E, 1]`.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParameterStore,
        graph: &PackedGraph,
        x: Tensor<'t>,
    ) -> Result<Tensor<'t>> {
        let h = self.encoder.encode_nodes(tape, store, graph, x, None)?;
        edge_probabilities(tape, store, h, graph, &self.hidden, &self.out)
    }
}

/// `clamp(sigmoid(s_uv))` where the edge score averages the MLP over both
/// endpoint orders, so the probability does not depend on which endpoint
/// carries the smaller index.
pub fn edge_probabilities<'t>(
    tape: &'t Tape,
    store: &ParameterStore,
    h: Tensor<'t>,
    graph: &PackedGraph,
    hidden: &Linear,
    out: &Linear,
) -> Result<Tensor<'t>> {
    let hu = h.gather_rows(&graph.src)?;
    let hv = h.gather_rows(&graph.dst)?;
    let score = |a: Tensor<'t>, b: Tensor<'t>| -> Result<Tensor<'t>> {
        let z = Tensor::concat(&[a, b], 1)?;
        let z = hidden.forward(tape, store, z)?.relu();
        out.forward(tape, store, z)
    };
    let s = score(hu, hv)?.add(score(hv, hu)?)?.scale(0.5);
    Ok(s.sigmoid().clamp(P_MIN, P_MAX))
}

#[derive(Debug, Clone, Copy)]
pub struct EdgeMask<'t> {
    pub p: Tensor<'t>,
    pub alpha: Tensor<'t>,
    pub temperature: f64,
}

/// Relaxed Bernoulli gates in training; the expected mask `alpha = p` when
/// `rng` is `None`.
pub fn sample_mask<'t>(p: Tensor<'t>, temperature: f64, rng: Option<&mut Rng>) -> Result<EdgeMask<'t>> {
    if temperature <= 0.0 || temperature.is_nan() {
        return Err(Error::arg(format!("temperature {temperature} must be > 0")));
    }
    let alpha = match rng {
        Some(rng) => binary_concrete_sample(p, temperature, rng)?,
        None => p,
    };
    Ok(EdgeMask {
        p,
        alpha,
        temperature,
    })
}

/// Environment predictor `f_theta`: one encoder used for both the
/// environment and the complementary invariant subgraph, plus a linear
/// classification head on the environment embedding.
#[derive(Debug, Clone)]
pub struct EnvironmentPredictor {
    pub encoder: GnnEncoder,
    pub head: Linear,
}

impl EnvironmentPredictor {
    pub fn new(store: &mut ParameterStore, in_dim: usize, gnn: GnnConfig, num_classes: usize) -> Result<Self> {
        Ok(EnvironmentPredictor {
            encoder: GnnEncoder::new(store, "predictor.gnn", in_dim, gnn)?,
            head: Linear::new(store, "predictor.head", gnn.hidden_dim, num_classes)?,
        })
    }

    /// `(Z_e, env logits)` with messages weighted by `alpha`.
    pub fn environment_embed<'t>(
        &self,
        tape: &'t Tape,
        store: &ParameterStore,
        graph: &PackedGraph,
        x: Tensor<'t>,
        mask: &EdgeMask<'t>,
    ) -> Result<(Tensor<'t>, Tensor<'t>)> {
        let z_e = self
            .encoder
            .encode_graphs(tape, store, graph, x, Some(mask.alpha))?;
        let logits = self.head.forward(tape, store, z_e)?;
        Ok((z_e, logits))
    }

    /// `Z_c` with messages weighted by `1 - alpha`.
    pub fn invariant_embed<'t>(
        &self,
        tape: &'t Tape,
        store: &ParameterStore,
        graph: &PackedGraph,
        x: Tensor<'t>,
        mask: &EdgeMask<'t>,
    ) -> Result<Tensor<'t>> {
        self.encoder
            .encode_graphs(tape, store, graph, x, Some(mask.alpha.complement()))
    }
}

/// Learnable prior edge probability `r = sigmoid(logit)`, kept inside the
/// same bounds as `p`.
#[derive(Debug, Clone, Copy)]
pub struct Prior {
    pub logit: ParamId,
}

impl Prior {
    pub fn new(store: &mut ParameterStore, r: f64) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::arg(format!("prior {r} outside (0, 1)")));
        }
        Ok(Prior {
            logit: store.add("prior.logit", Array::scalar((r / (1.0 - r)).ln()))?,
        })
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParameterStore) -> Tensor<'t> {
        tape.param(store, self.logit).sigmoid().clamp(P_MIN, P_MAX)
    }
}

/// The two pieces of the bottleneck objective.
#[derive(Debug, Clone, Copy)]
pub struct EgibTerms<'t> {
    /// Label log-likelihood under the environment head, `-CE`.
    pub likelihood: Tensor<'t>,
    /// Mean per-edge `KL(Bern(p) || Bern(r))`.
    pub kl: Tensor<'t>,
    /// `likelihood - beta * kl`.
    pub loss: Tensor<'t>,
}

pub fn egib_loss<'t>(
    env_logits: Tensor<'t>,
    labels: &[usize],
    p: Tensor<'t>,
    prior_r: Tensor<'t>,
    beta: f64,
    env_cap: f64,
) -> Result<EgibTerms<'t>> {
    let likelihood = env_logits.cross_entropy_capped(labels, env_cap)?.scale(-1.0);
    let kl = p.kl_bernoulli(prior_r)?;
    let loss = likelihood.sub(kl.scale(beta))?;
    Ok(EgibTerms {
        likelihood,
        kl,
        loss,
    })
}

/// One scored edge for explanation output, in graph-local node indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeScore {
    pub graph: usize,
    pub u: usize,
    pub v: usize,
    pub p: f64,
}

/// Writes `graph_id,u,v,p_uv` rows under a header line.
pub fn write_edge_scores(out: &mut impl Write, scores: &[EdgeScore]) -> std::io::Result<()> {
    writeln!(out, "graph_id,u,v,p_uv")?;
    for s in scores {
        writeln!(out, "{},{},{},{:.6}", s.graph, s.u, s.v, s.p)?;
    }
    Ok(())
}

/// Edges of one graph ordered by descending invariance score `1 - p`; ties
/// keep edge order.
pub fn rank_invariant_edges(scores: &[EdgeScore]) -> Vec<EdgeScore> {
    let mut ranked = scores.to_vec();
    ranked.sort_by(|a, b| a.p.total_cmp(&b.p));
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::rng_from_seed;
    use crate::graph::{batch_graphs, BondEdge, FeatureScheme, MolecularGraph, NodeKind};

    fn packed(edges: &[(usize, usize)], n: usize) -> (Vec<MolecularGraph>, PackedGraph) {
        let g = vec![MolecularGraph::new(
            vec![NodeKind::Feature(0); n],
            edges.iter().map(|&(u, v)| BondEdge::new(u, v, 1)).collect(),
            Some(1),
            FeatureScheme::Constant,
        )
        .unwrap()];
        let p = PackedGraph::from_batch(&batch_graphs(&g).unwrap()).unwrap();
        (g, p)
    }

    #[test]
    fn zero_mlp_gives_half() {
        let mut store = ParameterStore::new(1);
        let gnn = GnnConfig {
            hidden_dim: 4,
            ..GnnConfig::default()
        };
        let ex = EdgeExtractor::new(&mut store, 2, gnn).unwrap();
        for id in ex.weights() {
            let shape = store.value(id).shape().to_vec();
            store.set_value(id, Array::zeros(&shape)).unwrap();
        }
        let (_, pg) = packed(&[(0, 1), (1, 2)], 3);
        let tape = Tape::new();
        let p = ex
            .forward(&tape, &store, &pg, tape.constant(pg.features.clone()))
            .unwrap();
        assert_eq!(p.value().data(), &[0.5, 0.5]);
    }

    #[test]
    fn eval_mask_is_p_and_sampling_is_seeded() {
        let tape = Tape::new();
        let p = tape.constant(Array::new(&[3], vec![0.2, 0.5, 0.9]).unwrap());
        let m = sample_mask(p, 0.5, None).unwrap();
        assert_eq!(m.alpha.value().data(), p.value().data());
        let a = sample_mask(p, 0.5, Some(&mut rng_from_seed(4))).unwrap();
        let b = sample_mask(p, 0.5, Some(&mut rng_from_seed(4))).unwrap();
        assert_eq!(a.alpha.value().data(), b.alpha.value().data());
        assert!(sample_mask(p, 0.0, None).is_err());
    }

    #[test]
    fn loss_closed_forms() {
        let tape = Tape::new();
        let logits = tape.constant(Array::zeros(&[2, 2]));
        let p = tape.constant(Array::full(&[3], 0.3));
        let r = tape.constant(Array::scalar(0.3));
        let t = egib_loss(logits, &[0, 1], p, r, 1.0, f64::INFINITY).unwrap();
        assert!((t.likelihood.item() + std::f64::consts::LN_2).abs() < 1e-12);
        assert!(t.kl.item().abs() < 1e-12);
        assert!((t.loss.item() - t.likelihood.item()).abs() < 1e-12);
    }

    #[test]
    fn ranking_prefers_low_p() {
        let s = |u, p| EdgeScore { graph: 0, u, v: u + 1, p };
        let ranked = rank_invariant_edges(&[s(0, 0.9), s(1, 0.1), s(2, 0.5)]);
        assert_eq!(ranked.iter().map(|e| e.u).collect::<Vec<_>>(), vec![1, 2, 0]);
    }
}
