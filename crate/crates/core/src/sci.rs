//! Soft interaction between environment and invariant embeddings: chunked
//! cross attention with additive noise, a tanh-gated bridge, and the final
//! classifier.
//!
//! Each `d`-wide graph embedding is split into `H` tokens of width `d / H`,
//! and attention runs over those tokens within each graph.

use crate::autodiff::{gaussian_sample, ParamId, ParameterStore, Rng, Tape, Tensor};
use crate::error::{Error, Result};
use crate::gnn::Linear;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SciConfig {
    pub heads: usize,
    /// Standard deviation of the training-time noise on attention outputs.
    pub noise_std: f64,
    pub interaction: bool,
    pub bridge: bool,
}

impl Default for SciConfig {
    fn default() -> Self {
        SciConfig {
            heads: 4,
            noise_std: 1.0,
            interaction: true,
            bridge: true,
        }
    }
}

impl SciConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.heads == 0 || !d.is_multiple_of(self.heads) {
            return Err(Error::Config {
                key: "sci.heads".into(),
                message: format!("{} heads do not divide embedding width {d}", self.heads),
            });
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config {
                key: "sci.noise_std".into(),
                message: "must be finite and >= 0".into(),
            });
        }
        Ok(())
    }
}

/// `W^Q`, `W^K`, `W^V` and `W_gate`, all `[d, d]`.
#[derive(Debug, Clone, Copy)]
pub struct SciWeights {
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
    pub gate: ParamId,
}

impl SciWeights {
    pub fn new(store: &mut ParameterStore, d: usize) -> Result<Self> {
        Ok(SciWeights {
            query: store.glorot("sci.query", d, d)?,
            key: store.glorot("sci.key", d, d)?,
            value: store.glorot("sci.value", d, d)?,
            gate: store.glorot("sci.gate", d, d)?,
        })
    }
}

/// Two-layer perceptron head `psi`.
#[derive(Debug, Clone, Copy)]
pub struct Classifier {
    pub hidden: Linear,
    pub out: Linear,
}

impl Classifier {
    pub fn new(store: &mut ParameterStore, prefix: &str, d: usize, num_classes: usize) -> Result<Self> {
        Ok(Classifier {
            hidden: Linear::new(store, &format!("{prefix}.mlp0"), d, d)?,
            out: Linear::new(store, &format!("{prefix}.mlp1"), d, num_classes)?,
        })
    }

    /// Unnormalized logits `[B, C]`.
    pub fn predict<'t>(&self, tape: &'t Tape, store: &ParameterStore, z: Tensor<'t>) -> Result<Tensor<'t>> {
        let h = self.hidden.forward(tape, store, z)?.relu();
        self.out.forward(tape, store, h)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Representation<'t> {
    pub z_e: Tensor<'t>,
    pub z_c: Tensor<'t>,
    pub z_ce: Tensor<'t>,
}

pub fn qkv_project<'t>(
    z_e: Tensor<'t>,
    z_c: Tensor<'t>,
    w_q: Tensor<'t>,
    w_k: Tensor<'t>,
    w_v: Tensor<'t>,
) -> Result<(Tensor<'t>, Tensor<'t>, Tensor<'t>)> {
    Ok((z_e.matmul(w_q)?, z_c.matmul(w_k)?, z_c.matmul(w_v)?))
}

#[derive(Debug, Clone, Copy)]
pub struct CrossAttention<'t> {
    pub z_e: Tensor<'t>,
    pub z_c: Tensor<'t>,
    /// `[B, H, H]` attention of environment queries over invariant keys.
    pub attn_e: Tensor<'t>,
    /// `[B, H, H]` attention of invariant keys over environment queries.
    pub attn_c: Tensor<'t>,
}

/// Token-chunked cross attention. Both outputs read the invariant values.
/// Noise is added only when `rng` is given.
pub fn cross_attention<'t>(
    q: Tensor<'t>,
    k: Tensor<'t>,
    v: Tensor<'t>,
    heads: usize,
    noise_std: f64,
    rng: Option<&mut Rng>,
) -> Result<CrossAttention<'t>> {
    let shape = q.shape();
    if shape.len() != 2 || k.shape() != shape || v.shape() != shape {
        return Err(Error::shape(format!(
            "cross attention operands {:?}, {:?}, {:?}",
            shape,
            k.shape(),
            v.shape()
        )));
    }
    let (b, d) = (shape[0], shape[1]);
    if heads == 0 || d % heads != 0 {
        return Err(Error::Config {
            key: "sci.heads".into(),
            message: format!("{heads} heads do not divide embedding width {d}"),
        });
    }
    let dh = d / heads;
    let tokens = [b, heads, dh];
    let (qt, kt, vt) = (q.reshape(&tokens)?, k.reshape(&tokens)?, v.reshape(&tokens)?);
    let scale = 1.0 / (dh as f64).sqrt();
    let attn_e = qt.bmm(kt.transpose()?)?.scale(scale).softmax_rows()?;
    let attn_c = kt.bmm(qt.transpose()?)?.scale(scale).softmax_rows()?;
    let mut z_e = attn_e.bmm(vt)?.reshape(&[b, d])?;
    let mut z_c = attn_c.bmm(vt)?.reshape(&[b, d])?;
    if let Some(rng) = rng {
        let tape = q.tape;
        z_e = z_e.add(tape.constant(gaussian_sample(&[b, d], noise_std, rng)?))?;
        z_c = z_c.add(tape.constant(gaussian_sample(&[b, d], noise_std, rng)?))?;
    }
    Ok(CrossAttention {
        z_e,
        z_c,
        attn_e,
        attn_c,
    })
}

/// Sequential gated update:
/// `f = tanh(Z_e' W_gate^T)`, `Z_e'' = Z_e' + Z_c' * f`,
/// `Z_c'' = Z_c' + Z_e'' * f`, `Z_ce = Z_c'' * f`.
pub fn gated_bridge<'t>(z_e: Tensor<'t>, z_c: Tensor<'t>, w_gate: Tensor<'t>) -> Result<Representation<'t>> {
    let gate = z_e.matmul(w_gate.transpose()?)?.tanh();
    let z_e2 = z_e.add(z_c.mul(gate)?)?;
    let z_c2 = z_c.add(z_e2.mul(gate)?)?;
    let z_ce = z_c2.mul(gate)?;
    Ok(Representation {
        z_e: z_e2,
        z_c: z_c2,
        z_ce,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct SciOutput<'t> {
    pub logits: Tensor<'t>,
    pub repr: Representation<'t>,
    pub attention: Option<CrossAttention<'t>>,
}

/// Projection, cross attention, gated bridge and classifier. Disabling
/// `interaction` passes `Z_e`, `Z_c` straight to the bridge; disabling
/// `bridge` classifies `Z_c'` directly.
#[allow(clippy::too_many_arguments)]
pub fn sci_forward<'t>(
    tape: &'t Tape,
    store: &ParameterStore,
    z_e: Tensor<'t>,
    z_c: Tensor<'t>,
    config: &SciConfig,
    weights: &SciWeights,
    classifier: &Classifier,
    rng: Option<&mut Rng>,
) -> Result<SciOutput<'t>> {
    let d = z_e.shape().get(1).copied().unwrap_or(0);
    config.validate(d)?;
    let (z_e1, z_c1, attention) = if config.interaction {
        let (q, k, v) = qkv_project(
            z_e,
            z_c,
            tape.param(store, weights.query),
            tape.param(store, weights.key),
            tape.param(store, weights.value),
        )?;
        let ca = cross_attention(q, k, v, config.heads, config.noise_std, rng)?;
        (ca.z_e, ca.z_c, Some(ca))
    } else {
        (z_e, z_c, None)
    };
    let repr = if config.bridge {
        gated_bridge(z_e1, z_c1, tape.param(store, weights.gate))?
    } else {
        Representation {
            z_e: z_e1,
            z_c: z_c1,
            z_ce: z_c1,
        }
    };
    let logits = classifier.predict(tape, store, repr.z_ce)?;
    Ok(SciOutput {
        logits,
        repr,
        attention,
    })
}
