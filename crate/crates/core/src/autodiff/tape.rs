//! Reverse-mode tape.
//!
//! Every operation appends a node holding its forward value and enough
//! context to pull a gradient back to its inputs. Node ids are assigned in
//! evaluation order, so a reverse sweep over ids is a valid topological
//! order for backpropagation.

use std::cell::{Cell, RefCell};
use std::collections::BTreeMap;
use std::rc::Rc;

use super::array::{gemm, Array};
use super::params::{ParamId, ParameterStore};
use crate::error::{Error, Result};

pub(crate) type Index = Rc<[usize]>;

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    MatMul(usize, usize),
    /// Batched matmul over the leading dimension: `[b, m, k] x [b, k, n]`.
    Bmm(usize, usize),
    /// Swap of the last two dimensions.
    Transpose(usize),
    Reshape(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// `[m, n] + [n]` broadcast over rows.
    AddBias(usize, usize),
    /// `[m, n] * [m]` broadcast over columns.
    ScaleRows(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Relu(usize),
    Sigmoid(usize),
    Tanh(usize),
    Powf(usize, f64),
    Clamp(usize, f64, f64),
    Concat {
        parts: Vec<usize>,
        axis: usize,
    },
    GatherRows(usize, Index),
    /// Undirected weighted neighbour sum, see [`super::Tensor::propagate`].
    Propagate {
        h: usize,
        weights: Option<usize>,
        src: Index,
        dst: Index,
    },
    SegmentSum(usize, Rc<[(usize, usize)]>),
    SegmentMean(usize, Rc<[(usize, usize)]>),
    MeanRows(usize),
    Sum(usize),
    Mean(usize),
    Softmax(usize),
    CrossEntropy {
        logits: usize,
        labels: Index,
        probs: Rc<Vec<f64>>,
        active: Rc<[bool]>,
    },
    KlBernoulli(usize, usize),
    BinaryConcrete {
        p: usize,
        temperature: f64,
    },
}

struct Node {
    value: Rc<Array>,
    op: Op,
    param: Option<ParamId>,
}

/// A recorded computation. Confined to one thread.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Tensor<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: usize,
}

impl std::fmt::Debug for Tensor<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            consumed: Cell::new(false),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn push(&self, value: Array, op: Op) -> Tensor<'_> {
        self.push_node(value, op, None)
    }

    fn push_node(&self, value: Array, op: Op, param: Option<ParamId>) -> Tensor<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            param,
        });
        Tensor {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    pub(crate) fn value_of(&self, id: usize) -> Rc<Array> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Records a constant input; gradients are still available through
    /// [`Tape::gradients`].
    pub fn constant(&self, value: Array) -> Tensor<'_> {
        self.push(value, Op::Leaf)
    }

    /// Records the current value of a stored parameter.
    pub fn param(&self, store: &ParameterStore, id: ParamId) -> Tensor<'_> {
        self.push_node(store.value(id).clone(), Op::Leaf, Some(id))
    }

    /// Backpropagates `loss` and writes gradients for every parameter bound
    /// to this tape into `store`. Parameters with no path to the loss get a
    /// zero gradient.
    ///
    /// A tape can be backpropagated into a store once; gradients already
    /// present in the store must be cleared (by an optimizer step or
    /// [`ParameterStore::zero_grad`]) first.
    pub fn backward(&self, loss: Tensor<'_>, store: &mut ParameterStore) -> Result<()> {
        if self.consumed.get() {
            return Err(Error::State("backward already ran on this tape".into()));
        }
        let bound: Vec<(usize, ParamId)> = self
            .nodes
            .borrow()
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|p| (i, p)))
            .collect();
        if let Some(&(_, p)) = bound.iter().find(|(_, p)| store.grad(*p).is_some()) {
            return Err(Error::State(format!(
                "parameter `{}` already holds a gradient; reset before a second backward",
                store.name(p)
            )));
        }
        let keep: Vec<usize> = bound.iter().map(|&(i, _)| i).collect();
        let grads = self.sweep(loss, &keep)?;
        self.consumed.set(true);
        // A parameter bound more than once receives the sum of its uses.
        let mut summed: BTreeMap<ParamId, Vec<f64>> = BTreeMap::new();
        for ((_, pid), g) in bound.into_iter().zip(grads) {
            match summed.get_mut(&pid) {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => {
                    summed.insert(pid, g);
                }
            }
        }
        for (pid, g) in summed {
            store.set_grad(pid, g)?;
        }
        Ok(())
    }

    /// Gradients of `loss` with respect to arbitrary recorded tensors.
    pub fn gradients(&self, loss: Tensor<'_>, wrt: &[Tensor<'_>]) -> Result<Vec<Array>> {
        let keep: Vec<usize> = wrt.iter().map(|t| t.id).collect();
        let grads = self.sweep(loss, &keep)?;
        Ok(wrt
            .iter()
            .zip(grads)
            .map(|(t, g)| Array::new(t.value().shape(), g).expect("grad shape"))
            .collect())
    }

    /// Reverse sweep from `loss`; returns the gradient of each id in `keep`
    /// (zeros when unreachable).
    fn sweep(&self, loss: Tensor<'_>, keep: &[usize]) -> Result<Vec<Vec<f64>>> {
        let nodes = self.nodes.borrow();
        let loss_value = &nodes[loss.id].value;
        if loss_value.numel() != 1 {
            return Err(Error::arg(format!(
                "loss must be scalar, got shape {:?}",
                loss_value.shape()
            )));
        }
        if !loss_value.is_finite() {
            return Err(Error::Numeric("loss is not finite".into()));
        }

        let mut kept: Vec<Option<Vec<f64>>> = vec![None; keep.len()];
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(vec![1.0]);

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else {
                continue;
            };
            for (slot, _) in keep.iter().enumerate().filter(|(_, &k)| k == id) {
                match &mut kept[slot] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => kept[slot] = Some(g.clone()),
                }
            }
            pull_back(&nodes, id, &g, &mut grads);
        }

        Ok(keep
            .iter()
            .zip(kept)
            .map(|(&id, g)| g.unwrap_or_else(|| vec![0.0; nodes[id].value.numel()]))
            .collect())
    }
}

fn grad_buf<'g>(nodes: &[Node], grads: &'g mut [Option<Vec<f64>>], id: usize) -> &'g mut [f64] {
    grads[id].get_or_insert_with(|| vec![0.0; nodes[id].value.numel()])
}

fn add_into(nodes: &[Node], grads: &mut [Option<Vec<f64>>], id: usize, g: &[f64]) {
    grad_buf(nodes, grads, id)
        .iter_mut()
        .zip(g)
        .for_each(|(a, b)| *a += b);
}

fn pull_back(nodes: &[Node], id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let out = &nodes[id].value;
    let val = |i: usize| &nodes[i].value;
    match &nodes[id].op {
        Op::Leaf => {}
        &Op::MatMul(a, b) => {
            let (m, k) = val(a).dims2().unwrap();
            let n = val(b).shape()[1];
            let (av, bv) = (val(a).data(), val(b).data());
            gemm(m, n, k, g, false, bv, true, grad_buf(nodes, grads, a), true);
            gemm(k, m, n, av, true, g, false, grad_buf(nodes, grads, b), true);
        }
        &Op::Bmm(a, b) => {
            let (batch, m, k) = dims3(val(a));
            let n = val(b).shape()[2];
            let (av, bv) = (val(a).data(), val(b).data());
            {
                let ga = grad_buf(nodes, grads, a);
                for t in 0..batch {
                    gemm(
                        m,
                        n,
                        k,
                        &g[t * m * n..],
                        false,
                        &bv[t * k * n..],
                        true,
                        &mut ga[t * m * k..],
                        true,
                    );
                }
            }
            let gb = grad_buf(nodes, grads, b);
            for t in 0..batch {
                gemm(
                    k,
                    m,
                    n,
                    &av[t * m * k..],
                    true,
                    &g[t * m * n..],
                    false,
                    &mut gb[t * k * n..],
                    true,
                );
            }
        }
        &Op::Transpose(a) => {
            let s = out.shape();
            let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
            let ga = grad_buf(nodes, grads, a);
            let block = r * c;
            for t in 0..out.numel() / block.max(1) {
                for i in 0..r {
                    for j in 0..c {
                        ga[t * block + j * r + i] += g[t * block + i * c + j];
                    }
                }
            }
        }
        &Op::Reshape(a) | &Op::AddScalar(a) => add_into(nodes, grads, a, g),
        &Op::Add(a, b) => {
            add_into(nodes, grads, a, g);
            add_into(nodes, grads, b, g);
        }
        &Op::Sub(a, b) => {
            add_into(nodes, grads, a, g);
            let gb = grad_buf(nodes, grads, b);
            gb.iter_mut().zip(g).for_each(|(x, y)| *x -= y);
        }
        &Op::Mul(a, b) => {
            let (av, bv) = (val(a).data(), val(b).data());
            let ga = grad_buf(nodes, grads, a);
            for i in 0..g.len() {
                ga[i] += g[i] * bv[i];
            }
            let gb = grad_buf(nodes, grads, b);
            for i in 0..g.len() {
                gb[i] += g[i] * av[i];
            }
        }
        &Op::AddBias(a, b) => {
            add_into(nodes, grads, a, g);
            let n = val(b).numel();
            let gb = grad_buf(nodes, grads, b);
            for row in g.chunks(n) {
                gb.iter_mut().zip(row).for_each(|(x, y)| *x += y);
            }
        }
        &Op::ScaleRows(a, s) => {
            let (av, sv) = (val(a).data(), val(s).data());
            let n = av.len() / sv.len().max(1);
            let ga = grad_buf(nodes, grads, a);
            for (i, &si) in sv.iter().enumerate() {
                for j in 0..n {
                    ga[i * n + j] += g[i * n + j] * si;
                }
            }
            let gs = grad_buf(nodes, grads, s);
            for i in 0..sv.len() {
                gs[i] += (0..n).map(|j| g[i * n + j] * av[i * n + j]).sum::<f64>();
            }
        }
        &Op::Scale(a, c) => {
            let ga = grad_buf(nodes, grads, a);
            ga.iter_mut().zip(g).for_each(|(x, y)| *x += c * y);
        }
        &Op::Relu(a) => {
            let av = val(a).data();
            let ga = grad_buf(nodes, grads, a);
            for i in 0..g.len() {
                if av[i] > 0.0 {
                    ga[i] += g[i];
                }
            }
        }
        &Op::Sigmoid(a) => {
            let y = out.data();
            let ga = grad_buf(nodes, grads, a);
            for i in 0..g.len() {
                ga[i] += g[i] * y[i] * (1.0 - y[i]);
            }
        }
        &Op::Tanh(a) => {
            let y = out.data();
            let ga = grad_buf(nodes, grads, a);
            for i in 0..g.len() {
                ga[i] += g[i] * (1.0 - y[i] * y[i]);
            }
        }
        &Op::Powf(a, e) => {
            let av = val(a).data();
            let ga = grad_buf(nodes, grads, a);
            for i in 0..g.len() {
                ga[i] += g[i] * e * av[i].powf(e - 1.0);
            }
        }
        &Op::Clamp(a, lo, hi) => {
            let av = val(a).data();
            let ga = grad_buf(nodes, grads, a);
            for i in 0..g.len() {
                if av[i] > lo && av[i] < hi {
                    ga[i] += g[i];
                }
            }
        }
        Op::Concat { parts, axis } => {
            let rows = out.shape()[0];
            let total_cols = out.shape()[1];
            let mut offset = 0;
            for &p in parts {
                let (pr, pc) = val(p).dims2().unwrap();
                let gp = grad_buf(nodes, grads, p);
                if *axis == 0 {
                    let span = pr * pc;
                    gp.iter_mut()
                        .zip(&g[offset..offset + span])
                        .for_each(|(x, y)| *x += y);
                    offset += span;
                } else {
                    for i in 0..rows {
                        for j in 0..pc {
                            gp[i * pc + j] += g[i * total_cols + offset + j];
                        }
                    }
                    offset += pc;
                }
            }
        }
        Op::GatherRows(a, idx) => {
            let d = out.shape()[1];
            let ga = grad_buf(nodes, grads, *a);
            for (r, &src) in idx.iter().enumerate() {
                for j in 0..d {
                    ga[src * d + j] += g[r * d + j];
                }
            }
        }
        Op::Propagate {
            h,
            weights,
            src,
            dst,
        } => {
            let d = out.shape()[1];
            let hv = val(*h).data();
            let wv = weights.map(|w| Rc::clone(&nodes[w].value));
            let weight = |e: usize| wv.as_ref().map_or(1.0, |w| w.data()[e]);
            {
                let gh = grad_buf(nodes, grads, *h);
                for (e, (&u, &v)) in src.iter().zip(dst.iter()).enumerate() {
                    let w = weight(e);
                    for j in 0..d {
                        gh[u * d + j] += w * g[v * d + j];
                        gh[v * d + j] += w * g[u * d + j];
                    }
                }
            }
            if let Some(w) = *weights {
                let gw = grad_buf(nodes, grads, w);
                for (e, (&u, &v)) in src.iter().zip(dst.iter()).enumerate() {
                    let mut acc = 0.0;
                    for j in 0..d {
                        acc += g[v * d + j] * hv[u * d + j] + g[u * d + j] * hv[v * d + j];
                    }
                    gw[e] += acc;
                }
            }
        }
        Op::SegmentSum(a, segs) | Op::SegmentMean(a, segs) => {
            let mean = matches!(nodes[id].op, Op::SegmentMean(..));
            let d = out.shape()[1];
            let ga = grad_buf(nodes, grads, *a);
            for (k, &(lo, hi)) in segs.iter().enumerate() {
                let scale = if mean && hi > lo {
                    1.0 / (hi - lo) as f64
                } else {
                    1.0
                };
                for r in lo..hi {
                    for j in 0..d {
                        ga[r * d + j] += scale * g[k * d + j];
                    }
                }
            }
        }
        &Op::MeanRows(a) => {
            let (m, n) = val(a).dims2().unwrap();
            let ga = grad_buf(nodes, grads, a);
            for i in 0..m {
                for j in 0..n {
                    ga[i * n + j] += g[j] / m as f64;
                }
            }
        }
        &Op::Sum(a) => {
            let ga = grad_buf(nodes, grads, a);
            ga.iter_mut().for_each(|x| *x += g[0]);
        }
        &Op::Mean(a) => {
            let ga = grad_buf(nodes, grads, a);
            let n = ga.len() as f64;
            ga.iter_mut().for_each(|x| *x += g[0] / n);
        }
        &Op::Softmax(a) => {
            let y = out.data();
            let n = *out.shape().last().unwrap();
            let ga = grad_buf(nodes, grads, a);
            for r in 0..y.len() / n.max(1) {
                let row = r * n..(r + 1) * n;
                let dot: f64 = y[row.clone()].iter().zip(&g[row.clone()]).map(|(a, b)| a * b).sum();
                for i in row {
                    ga[i] += y[i] * (g[i] - dot);
                }
            }
        }
        Op::CrossEntropy {
            logits,
            labels,
            probs,
            active,
        } => {
            let c = val(*logits).shape()[1];
            let m = labels.len() as f64;
            let gl = grad_buf(nodes, grads, *logits);
            for (r, &y) in labels.iter().enumerate() {
                if !active[r] {
                    continue;
                }
                for j in 0..c {
                    let target = if j == y { 1.0 } else { 0.0 };
                    gl[r * c + j] += g[0] * (probs[r * c + j] - target) / m;
                }
            }
        }
        &Op::KlBernoulli(p, r) => {
            let pv = val(p).data();
            let rv = val(r).item();
            let n = pv.len() as f64;
            {
                let gp = grad_buf(nodes, grads, p);
                for i in 0..pv.len() {
                    let d = (pv[i] / rv).ln() - ((1.0 - pv[i]) / (1.0 - rv)).ln();
                    gp[i] += g[0] * d / n;
                }
            }
            let dr: f64 = pv.iter().map(|&q| -q / rv + (1.0 - q) / (1.0 - rv)).sum();
            grad_buf(nodes, grads, r)[0] += g[0] * dr / n;
        }
        &Op::BinaryConcrete { p, temperature } => {
            let pv = val(p).data();
            let a = out.data();
            let gp = grad_buf(nodes, grads, p);
            for i in 0..pv.len() {
                gp[i] += g[i] * a[i] * (1.0 - a[i]) / (temperature * pv[i] * (1.0 - pv[i]));
            }
        }
    }
}

pub(crate) fn dims3(a: &Array) -> (usize, usize, usize) {
    let s = a.shape();
    (s[0], s[1], s[2])
}
