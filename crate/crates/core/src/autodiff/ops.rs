//! Forward definitions of the differentiable operations.

use std::rc::Rc;

use super::array::{gemm, Array};
use super::tape::{dims3, Op, Tensor};
use crate::error::{Error, Result};

fn same_shape(op: &str, a: &Array, b: &Array) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "{op}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'t> Tensor<'t> {
    pub fn value(&self) -> Rc<Array> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    /// Scalar value; panics on non-scalar tensors.
    pub fn item(&self) -> f64 {
        let v = self.value();
        assert_eq!(v.numel(), 1, "item() on non-scalar tensor");
        v.item()
    }

    fn unary(self, op: Op, f: impl Fn(f64) -> f64) -> Tensor<'t> {
        let v = self.value();
        let data = v.data().iter().map(|&x| f(x)).collect();
        self.tape
            .push(Array::new(v.shape(), data).expect("unary shape"), op)
    }

    fn binary(self, other: Tensor<'t>, name: &str, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Tensor<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape(name, &a, &b)?;
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(self.tape.push(Array::new(a.shape(), data)?, op))
    }

    pub fn matmul(self, other: Tensor<'t>) -> Result<Tensor<'t>> {
        let (a, b) = (self.value(), other.value());
        let (m, k) = a.dims2()?;
        let (k2, n) = b.dims2()?;
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul: [{m}x{k}] x [{k2}x{n}]"
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, a.data(), false, b.data(), false, &mut out, false);
        Ok(self.tape.push(Array::new(&[m, n], out)?, Op::MatMul(self.id, other.id)))
    }

    /// Batched product of `[b, m, k]` and `[b, k, n]`.
    pub fn bmm(self, other: Tensor<'t>) -> Result<Tensor<'t>> {
        let (a, b) = (self.value(), other.value());
        if a.shape().len() != 3 || b.shape().len() != 3 {
            return Err(Error::shape("bmm expects 3-D operands"));
        }
        let (batch, m, k) = dims3(&a);
        let (batch2, k2, n) = dims3(&b);
        if batch != batch2 || k != k2 {
            return Err(Error::shape(format!(
                "bmm: {:?} x {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let mut out = vec![0.0; batch * m * n];
        for t in 0..batch {
            gemm(
                m,
                k,
                n,
                &a.data()[t * m * k..],
                false,
                &b.data()[t * k * n..],
                false,
                &mut out[t * m * n..],
                false,
            );
        }
        Ok(self
            .tape
            .push(Array::new(&[batch, m, n], out)?, Op::Bmm(self.id, other.id)))
    }

    /// Swaps the last two dimensions.
    pub fn transpose(self) -> Result<Tensor<'t>> {
        let a = self.value();
        let s = a.shape();
        if s.len() < 2 {
            return Err(Error::shape("transpose needs at least 2 dimensions"));
        }
        let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
        let block = r * c;
        let mut out = vec![0.0; a.numel()];
        for t in 0..a.numel() / block.max(1) {
            for i in 0..r {
                for j in 0..c {
                    out[t * block + j * r + i] = a.data()[t * block + i * c + j];
                }
            }
        }
        let mut shape = s.to_vec();
        let len = shape.len();
        shape.swap(len - 2, len - 1);
        Ok(self.tape.push(Array::new(&shape, out)?, Op::Transpose(self.id)))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Tensor<'t>> {
        let v = self.value().reshaped(shape)?;
        Ok(self.tape.push(v, Op::Reshape(self.id)))
    }

    pub fn add(self, other: Tensor<'t>) -> Result<Tensor<'t>> {
        self.binary(other, "add", Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn sub(self, other: Tensor<'t>) -> Result<Tensor<'t>> {
        self.binary(other, "sub", Op::Sub(self.id, other.id), |a, b| a - b)
    }

    /// Elementwise product.
    pub fn mul(self, other: Tensor<'t>) -> Result<Tensor<'t>> {
        self.binary(other, "mul", Op::Mul(self.id, other.id), |a, b| a * b)
    }

    /// Adds a length-`n` bias to every row of an `[m, n]` matrix.
    pub fn add_bias(self, bias: Tensor<'t>) -> Result<Tensor<'t>> {
        let (a, b) = (self.value(), bias.value());
        let (_, n) = a.dims2()?;
        if b.numel() != n {
            return Err(Error::shape(format!(
                "add_bias: bias of {} for {n} columns",
                b.numel()
            )));
        }
        let mut out = a.data().to_vec();
        for row in out.chunks_mut(n.max(1)) {
            row.iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
        }
        Ok(self
            .tape
            .push(Array::new(a.shape(), out)?, Op::AddBias(self.id, bias.id)))
    }

    /// Multiplies row `i` of an `[m, n]` matrix by `scale[i]`.
    pub fn scale_rows(self, scale: Tensor<'t>) -> Result<Tensor<'t>> {
        let (a, s) = (self.value(), scale.value());
        let (m, n) = a.dims2()?;
        if s.numel() != m {
            return Err(Error::shape(format!(
                "scale_rows: {} factors for {m} rows",
                s.numel()
            )));
        }
        let mut out = a.data().to_vec();
        for (row, &f) in out.chunks_mut(n.max(1)).zip(s.data()) {
            row.iter_mut().for_each(|x| *x *= f);
        }
        Ok(self
            .tape
            .push(Array::new(a.shape(), out)?, Op::ScaleRows(self.id, scale.id)))
    }

    pub fn scale(self, c: f64) -> Tensor<'t> {
        self.unary(Op::Scale(self.id, c), |x| c * x)
    }

    pub fn add_scalar(self, c: f64) -> Tensor<'t> {
        self.unary(Op::AddScalar(self.id), |x| x + c)
    }

    /// `1 - x`.
    pub fn complement(self) -> Tensor<'t> {
        self.scale(-1.0).add_scalar(1.0)
    }

    pub fn relu(self) -> Tensor<'t> {
        self.unary(Op::Relu(self.id), |x| x.max(0.0))
    }

    pub fn sigmoid(self) -> Tensor<'t> {
        self.unary(Op::Sigmoid(self.id), sigmoid_scalar)
    }

    pub fn tanh(self) -> Tensor<'t> {
        self.unary(Op::Tanh(self.id), f64::tanh)
    }

    pub fn powf(self, e: f64) -> Tensor<'t> {
        self.unary(Op::Powf(self.id, e), |x| x.powf(e))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(self, lo: f64, hi: f64) -> Tensor<'t> {
        self.unary(Op::Clamp(self.id, lo, hi), |x| x.clamp(lo, hi))
    }

    /// Concatenates 2-D tensors along `axis` (0 = rows, 1 = columns).
    pub fn concat(parts: &[Tensor<'t>], axis: usize) -> Result<Tensor<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::arg("concat of nothing"))?;
        let values: Vec<Rc<Array>> = parts.iter().map(|p| p.value()).collect();
        let dims: Vec<(usize, usize)> = values.iter().map(|v| v.dims2()).collect::<Result<_>>()?;
        let out = match axis {
            0 => {
                let cols = dims[0].1;
                if dims.iter().any(|d| d.1 != cols) {
                    return Err(Error::shape("concat axis 0: column mismatch"));
                }
                let rows = dims.iter().map(|d| d.0).sum();
                let data = values.iter().flat_map(|v| v.data().iter().copied()).collect();
                Array::new(&[rows, cols], data)?
            }
            1 => {
                let rows = dims[0].0;
                if dims.iter().any(|d| d.0 != rows) {
                    return Err(Error::shape("concat axis 1: row mismatch"));
                }
                let cols: usize = dims.iter().map(|d| d.1).sum();
                let mut data = Vec::with_capacity(rows * cols);
                for i in 0..rows {
                    for v in &values {
                        data.extend_from_slice(v.row(i));
                    }
                }
                Array::new(&[rows, cols], data)?
            }
            _ => return Err(Error::arg(format!("concat axis {axis} unsupported"))),
        };
        let op = Op::Concat {
            parts: parts.iter().map(|p| p.id).collect(),
            axis,
        };
        Ok(first.tape.push(out, op))
    }

    /// Selects rows of an `[n, d]` matrix by index (repeats allowed).
    pub fn gather_rows(self, index: &[usize]) -> Result<Tensor<'t>> {
        let a = self.value();
        let (n, d) = a.dims2()?;
        let mut out = Vec::with_capacity(index.len() * d);
        for &i in index {
            if i >= n {
                return Err(Error::arg(format!("gather index {i} >= {n}")));
            }
            out.extend_from_slice(a.row(i));
        }
        Ok(self.tape.push(
            Array::new(&[index.len(), d], out)?,
            Op::GatherRows(self.id, index.into()),
        ))
    }

    /// Undirected weighted neighbour sum over `[n, d]` node rows: for every
    /// edge `e = (src[e], dst[e])`, row `dst[e]` receives `w[e] * h[src[e]]`
    /// and row `src[e]` receives `w[e] * h[dst[e]]`. Without weights every
    /// edge counts once.
    pub fn propagate(
        self,
        weights: Option<Tensor<'t>>,
        src: &Rc<[usize]>,
        dst: &Rc<[usize]>,
    ) -> Result<Tensor<'t>> {
        let h = self.value();
        let (n, d) = h.dims2()?;
        if src.len() != dst.len() {
            return Err(Error::shape("propagate: endpoint lists differ in length"));
        }
        let w = weights.map(|w| w.value());
        if let Some(w) = &w {
            if w.numel() != src.len() {
                return Err(Error::shape(format!(
                    "propagate: {} weights for {} edges",
                    w.numel(),
                    src.len()
                )));
            }
        }
        let mut out = vec![0.0; n * d];
        let hv = h.data();
        for (e, (&u, &v)) in src.iter().zip(dst.iter()).enumerate() {
            if u >= n || v >= n {
                return Err(Error::arg(format!("edge ({u}, {v}) outside {n} nodes")));
            }
            let we = w.as_ref().map_or(1.0, |w| w.data()[e]);
            for j in 0..d {
                out[v * d + j] += we * hv[u * d + j];
                out[u * d + j] += we * hv[v * d + j];
            }
        }
        let op = Op::Propagate {
            h: self.id,
            weights: weights.map(|w| w.id),
            src: Rc::clone(src),
            dst: Rc::clone(dst),
        };
        Ok(self.tape.push(Array::new(&[n, d], out)?, op))
    }

    fn segment_reduce(self, segments: &[(usize, usize)], mean: bool) -> Result<Tensor<'t>> {
        let a = self.value();
        let (n, d) = a.dims2()?;
        let mut out = vec![0.0; segments.len() * d];
        for (k, &(lo, hi)) in segments.iter().enumerate() {
            if lo > hi || hi > n {
                return Err(Error::shape(format!("segment {lo}..{hi} outside {n} rows")));
            }
            for r in lo..hi {
                for j in 0..d {
                    out[k * d + j] += a.data()[r * d + j];
                }
            }
            if mean && hi > lo {
                let inv = 1.0 / (hi - lo) as f64;
                out[k * d..(k + 1) * d].iter_mut().for_each(|x| *x *= inv);
            }
        }
        let segs: Rc<[(usize, usize)]> = segments.into();
        let op = if mean {
            Op::SegmentMean(self.id, segs)
        } else {
            Op::SegmentSum(self.id, segs)
        };
        Ok(self.tape.push(Array::new(&[segments.len(), d], out)?, op))
    }

    /// Per-segment row sums; an empty segment yields a zero row.
    pub fn segment_sum(self, segments: &[(usize, usize)]) -> Result<Tensor<'t>> {
        self.segment_reduce(segments, false)
    }

    /// Per-segment row means; an empty segment yields a zero row.
    pub fn segment_mean(self, segments: &[(usize, usize)]) -> Result<Tensor<'t>> {
        self.segment_reduce(segments, true)
    }

    /// Mean over the rows of an `[m, n]` matrix, giving `[1, n]`.
    pub fn mean_rows(self) -> Result<Tensor<'t>> {
        let a = self.value();
        let (m, n) = a.dims2()?;
        if m == 0 {
            return Err(Error::shape("mean_rows of an empty matrix"));
        }
        let mut out = vec![0.0; n];
        for i in 0..m {
            out.iter_mut().zip(a.row(i)).for_each(|(x, y)| *x += y);
        }
        out.iter_mut().for_each(|x| *x /= m as f64);
        Ok(self.tape.push(Array::new(&[1, n], out)?, Op::MeanRows(self.id)))
    }

    pub fn sum(self) -> Tensor<'t> {
        let s = self.value().data().iter().sum();
        self.tape.push(Array::scalar(s), Op::Sum(self.id))
    }

    pub fn mean(self) -> Tensor<'t> {
        let v = self.value();
        let s = v.data().iter().sum::<f64>() / v.numel().max(1) as f64;
        self.tape.push(Array::scalar(s), Op::Mean(self.id))
    }

    /// Softmax over the last dimension, stabilized by subtracting the row max.
    pub fn softmax_rows(self) -> Result<Tensor<'t>> {
        let a = self.value();
        if a.data().iter().any(|x| x.is_nan()) {
            return Err(Error::Numeric("softmax input contains NaN".into()));
        }
        let n = *a.shape().last().ok_or_else(|| Error::shape("softmax of a 0-D tensor"))?;
        let mut out = a.data().to_vec();
        for row in out.chunks_mut(n.max(1)) {
            softmax_in_place(row);
        }
        Ok(self.tape.push(Array::new(a.shape(), out)?, Op::Softmax(self.id)))
    }

    /// Mean negative log-likelihood of `labels` under softmax(`self`).
    pub fn cross_entropy(self, labels: &[usize]) -> Result<Tensor<'t>> {
        self.cross_entropy_capped(labels, f64::INFINITY)
    }

    /// Like [`Tensor::cross_entropy`], but each row's loss is `min(ce, cap)`.
    /// Rows at the cap contribute no gradient.
    pub fn cross_entropy_capped(self, labels: &[usize], cap: f64) -> Result<Tensor<'t>> {
        let a = self.value();
        let (m, c) = a.dims2()?;
        if labels.len() != m {
            return Err(Error::shape(format!(
                "cross_entropy: {} labels for {m} rows",
                labels.len()
            )));
        }
        if m == 0 {
            return Err(Error::arg("cross_entropy of an empty batch"));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(Error::arg(format!("label {bad} out of range for {c} classes")));
        }
        if !(cap > 0.0) {
            return Err(Error::arg(format!("cross_entropy cap {cap} must be positive")));
        }
        let mut probs = a.data().to_vec();
        let mut active = Vec::with_capacity(m);
        let mut total = 0.0;
        for (row, &y) in probs.chunks_mut(c).zip(labels) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            let ce = lse - row[y];
            active.push(ce < cap);
            total += ce.min(cap);
            softmax_in_place(row);
        }
        let op = Op::CrossEntropy {
            logits: self.id,
            labels: labels.into(),
            probs: Rc::new(probs),
            active: active.into(),
        };
        Ok(self.tape.push(Array::scalar(total / m as f64), op))
    }

    /// Mean Bernoulli KL divergence `KL(Bern(p) || Bern(r))` over the entries
    /// of `self`, against a scalar tensor `r`.
    pub fn kl_bernoulli(self, r: Tensor<'t>) -> Result<Tensor<'t>> {
        let (p, rv) = (self.value(), r.value());
        if rv.numel() != 1 {
            return Err(Error::shape("kl_bernoulli: prior must be scalar"));
        }
        let r0 = rv.item();
        if !(r0 > 0.0 && r0 < 1.0) {
            return Err(Error::Numeric(format!("prior {r0} outside (0, 1)")));
        }
        if let Some(bad) = p.data().iter().find(|&&q| !(q > 0.0 && q < 1.0)) {
            return Err(Error::Numeric(format!("probability {bad} outside (0, 1)")));
        }
        let n = p.numel().max(1) as f64;
        let kl: f64 = p
            .data()
            .iter()
            .map(|&q| q * (q / r0).ln() + (1.0 - q) * ((1.0 - q) / (1.0 - r0)).ln())
            .sum();
        Ok(self
            .tape
            .push(Array::scalar(kl / n), Op::KlBernoulli(self.id, r.id)))
    }

    /// Relaxed Bernoulli sample `sigmoid((logit(p) + noise) / temperature)`
    /// with externally supplied logistic noise `noise = logit(u)`. The noise
    /// is a constant; gradients flow to `p` only.
    pub fn binary_concrete(self, noise: &[f64], temperature: f64) -> Result<Tensor<'t>> {
        if temperature <= 0.0 || temperature.is_nan() {
            return Err(Error::arg(format!("temperature {temperature} must be > 0")));
        }
        let p = self.value();
        if noise.len() != p.numel() {
            return Err(Error::shape("binary_concrete: noise length mismatch"));
        }
        if let Some(bad) = p.data().iter().find(|&&q| !(q > 0.0 && q < 1.0)) {
            return Err(Error::Numeric(format!("probability {bad} outside (0, 1)")));
        }
        let out = p
            .data()
            .iter()
            .zip(noise)
            .map(|(&q, &l)| sigmoid_scalar(((q / (1.0 - q)).ln() + l) / temperature))
            .collect();
        Ok(self.tape.push(
            Array::new(p.shape(), out)?,
            Op::BinaryConcrete {
                p: self.id,
                temperature,
            },
        ))
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    row.iter_mut().for_each(|x| *x /= sum);
}
