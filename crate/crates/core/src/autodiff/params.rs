use std::collections::HashMap;

use rand::Rng as _;
use rand::SeedableRng;

use super::array::Array;
use super::Rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Array,
    pub grad: Option<Vec<f64>>,
    /// First and second Adam moments.
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// Ordered, uniquely named collection of trainable arrays plus optimizer
/// state. Registration order is the checkpoint order.
#[derive(Debug, Clone)]
pub struct ParameterStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, usize>,
    seed: u64,
    rng: Rng,
    pub(crate) step: u64,
}

impl PartialEq for ParameterStore {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params && self.step == other.step
    }
}

impl ParameterStore {
    pub fn new(seed: u64) -> Self {
        ParameterStore {
            params: Vec::new(),
            by_name: HashMap::new(),
            seed,
            rng: Rng::seed_from_u64(seed),
            step: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn add(&mut self, name: &str, value: Array) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::arg(format!("duplicate parameter name `{name}`")));
        }
        let n = value.numel();
        self.params.push(Parameter {
            name: name.to_string(),
            value,
            grad: None,
            m: vec![0.0; n],
            v: vec![0.0; n],
        });
        self.by_name.insert(name.to_string(), self.params.len() - 1);
        Ok(ParamId(self.params.len() - 1))
    }

    /// Glorot-uniform `[fan_in, fan_out]` weight.
    pub fn glorot(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Result<ParamId> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| self.rng.random_range(-limit..=limit))
            .collect();
        self.add(name, Array::new(&[fan_in, fan_out], data)?)
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.add(name, Array::zeros(shape))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Array {
        &self.params[id.0].value
    }

    pub fn set_value(&mut self, id: ParamId, value: Array) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(Error::shape(format!(
                "parameter `{}`: {:?} vs {:?}",
                p.name,
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }

    pub fn grad(&self, id: ParamId) -> Option<&[f64]> {
        self.params[id.0].grad.as_deref()
    }

    pub(crate) fn set_grad(&mut self, id: ParamId, grad: Vec<f64>) -> Result<()> {
        let p = &mut self.params[id.0];
        if grad.len() != p.value.numel() {
            return Err(Error::shape(format!("gradient size for `{}`", p.name)));
        }
        if p.grad.is_some() {
            return Err(Error::State(format!(
                "parameter `{}` already holds a gradient",
                p.name
            )));
        }
        p.grad = Some(grad);
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.grad = None);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Copy with every value and moment rounded to `f32`, the checkpoint
    /// storage precision. Gradients are dropped.
    pub fn quantized(&self) -> Self {
        let round = |xs: &[f64]| xs.iter().map(|&x| x as f32 as f64).collect::<Vec<_>>();
        let mut out = self.clone();
        for p in &mut out.params {
            let data = round(p.value.data());
            p.value = Array::new(p.value.shape(), data).expect("same shape");
            p.m = round(&p.m);
            p.v = round(&p.v);
            p.grad = None;
        }
        out
    }

    pub(crate) fn push_loaded(&mut self, p: Parameter) -> Result<()> {
        if self.by_name.contains_key(&p.name) {
            return Err(Error::Checkpoint(format!("duplicate parameter `{}`", p.name)));
        }
        self.by_name.insert(p.name.clone(), self.params.len());
        self.params.push(p);
        Ok(())
    }
}
