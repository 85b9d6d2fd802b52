//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied during a forward pass. Values
//! are computed eagerly; [`Graph::backward`] walks the tape in reverse and
//! accumulates gradients into the [`ParamStore`] that supplied the parameters.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Owns every learnable tensor of a model.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        let grad = Tensor::zeros(value.shape());
        self.params.push(Parameter { name, value, grad });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    /// Copies values of every parameter whose name also exists in `other`.
    /// Returns the number of copied tensors.
    pub fn load_matching(&mut self, other: &ParamStore) -> Result<usize> {
        let mut copied = 0;
        for p in &mut self.params {
            if let Some(id) = other.find(&p.name) {
                let src = other.value(id);
                if src.shape() != p.value.shape() {
                    return Err(Error::Checkpoint(format!(
                        "parameter {} has shape {:?}, checkpoint has {:?}",
                        p.name,
                        p.value.shape(),
                        src.shape()
                    )));
                }
                p.value = src.clone();
                copied += 1;
            }
        }
        Ok(copied)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Permutation-invariant reduction over a set of rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Aggregator {
    Mean,
    Max,
    Sum,
}

impl Aggregator {
    pub fn name(self) -> &'static str {
        match self {
            Aggregator::Mean => "mean",
            Aggregator::Max => "max",
            Aggregator::Sum => "sum",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregator::Mean),
            "max" => Ok(Aggregator::Max),
            "sum" => Ok(Aggregator::Sum),
            other => Err(Error::Config(format!(
                "unknown aggregator {other:?} (expected mean, max or sum)"
            ))),
        }
    }
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    Relu(Var),
    MulConst(Var, Vec<f64>),
    Sum(Var),
    Mean(Var),
    ConcatCols(Var, Var),
    ConcatRows(Vec<Var>),
    Gather(Var, Vec<usize>),
    Segment {
        input: Var,
        segments: Vec<Vec<usize>>,
        agg: Aggregator,
        // Source row feeding each output cell under max; usize::MAX for empty.
        argmax: Vec<usize>,
    },
    BceWithLogits(Var, Vec<f64>),
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    CosineDistance(Var, Var),
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Operation tape for one forward/backward pass.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn require_rank2(op: &'static str, t: &Tensor) -> Result<()> {
    if t.rank() != 2 {
        return Err(Error::shape(op, format!("expected a matrix, got {:?}", t.shape())));
    }
    Ok(())
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

const NORM_FLOOR: f64 = 1e-12;

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor, name: &'static str) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::Numeric(name.to_string()));
        }
        self.nodes.push(Node { op, value });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` target with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push(Op::Leaf, t, "constant")
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        self.push(Op::Param(id), store.value(id).clone(), "param")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(Op::MatMul(a, b), out, "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape("add", ta, tb)?;
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(Op::Add(a, b), out, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape("sub", ta, tb)?;
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x - y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(Op::Sub(a, b), out, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape("mul", ta, tb)?;
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(Op::Mul(a, b), out, "mul")
    }

    /// Adds a `[m]` or `[1, m]` row vector to every row of an `[n, m]` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(row));
        require_rank2("add_row", ta)?;
        if tb.len() != ta.cols() || tb.rows() != 1 {
            return Err(Error::shape(
                "add_row",
                format!("{:?} + row {:?}", ta.shape(), tb.shape()),
            ));
        }
        let m = ta.cols();
        let mut data = ta.data().to_vec();
        for (i, v) in data.iter_mut().enumerate() {
            *v += tb.data()[i % m];
        }
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(Op::AddRow(a, row), out, "add_row")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v * c);
        self.push(Op::Scale(a, c), out, "scale")
    }

    /// Multiplies every element of `a` by the single-element tensor `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        let ts = self.value(s);
        if ts.len() != 1 {
            return Err(Error::shape("scale_by", format!("scalar expected, got {:?}", ts.shape())));
        }
        let c = ts.item();
        let out = self.value(a).map(|v| v * c);
        self.push(Op::ScaleBy(a, s), out, "scale_by")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(Op::Relu(a), out, "relu")
    }

    /// Elementwise product with a constant mask (used by dropout).
    pub fn mul_const(&mut self, a: Var, mask: Vec<f64>) -> Result<Var> {
        let ta = self.value(a);
        if mask.len() != ta.len() {
            return Err(Error::shape(
                "mul_const",
                format!("{:?} vs mask of {}", ta.shape(), mask.len()),
            ));
        }
        let data = ta.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(Op::MulConst(a, mask), out, "mul_const")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s), "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Op::Mean(a), Tensor::scalar(s), "mean")
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        require_rank2("concat_cols", ta)?;
        require_rank2("concat_cols", tb)?;
        if ta.rows() != tb.rows() {
            return Err(Error::shape(
                "concat_cols",
                format!("{:?} | {:?}", ta.shape(), tb.shape()),
            ));
        }
        let (n, ma, mb) = (ta.rows(), ta.cols(), tb.cols());
        let mut data = Vec::with_capacity(n * (ma + mb));
        for i in 0..n {
            data.extend_from_slice(ta.row(i));
            data.extend_from_slice(tb.row(i));
        }
        let out = Tensor::matrix(n, ma + mb, data)?;
        self.push(Op::ConcatCols(a, b), out, "concat_cols")
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat_rows", "no inputs"))?;
        let m = self.value(*first).cols();
        let mut data = Vec::new();
        let mut n = 0;
        for &p in parts {
            let t = self.value(p);
            require_rank2("concat_rows", t)?;
            if t.cols() != m {
                return Err(Error::shape(
                    "concat_rows",
                    format!("column count {} vs {}", t.cols(), m),
                ));
            }
            n += t.rows();
            data.extend_from_slice(t.data());
        }
        let out = Tensor::matrix(n, m, data)?;
        self.push(Op::ConcatRows(parts.to_vec()), out, "concat_rows")
    }

    /// Selects rows of a matrix; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, rows: Vec<usize>) -> Result<Var> {
        let t = self.value(a);
        require_rank2("gather_rows", t)?;
        let m = t.cols();
        let mut data = Vec::with_capacity(rows.len() * m);
        for &r in &rows {
            if r >= t.rows() {
                return Err(Error::shape(
                    "gather_rows",
                    format!("row {} out of range for {:?}", r, t.shape()),
                ));
            }
            data.extend_from_slice(t.row(r));
        }
        let out = Tensor::matrix(rows.len(), m, data)?;
        self.push(Op::Gather(a, rows), out, "gather_rows")
    }

    /// One output row per segment, reducing the listed input rows in list
    /// order. Empty segments produce a zero row. Under `Max`, ties go to the
    /// earliest listed row.
    pub fn segment_aggregate(
        &mut self,
        a: Var,
        segments: Vec<Vec<usize>>,
        agg: Aggregator,
    ) -> Result<Var> {
        let t = self.value(a);
        require_rank2("segment_aggregate", t)?;
        let m = t.cols();
        let mut data = vec![0.0; segments.len() * m];
        let mut argmax = Vec::new();
        if agg == Aggregator::Max {
            argmax = vec![usize::MAX; segments.len() * m];
        }
        for (s, seg) in segments.iter().enumerate() {
            let dst = &mut data[s * m..(s + 1) * m];
            for &r in seg {
                if r >= t.rows() {
                    return Err(Error::shape(
                        "segment_aggregate",
                        format!("row {} out of range for {:?}", r, t.shape()),
                    ));
                }
            }
            if seg.is_empty() {
                continue;
            }
            match agg {
                Aggregator::Sum | Aggregator::Mean => {
                    for &r in seg {
                        for (d, v) in dst.iter_mut().zip(t.row(r)) {
                            *d += v;
                        }
                    }
                    if agg == Aggregator::Mean {
                        let k = seg.len() as f64;
                        dst.iter_mut().for_each(|d| *d /= k);
                    }
                }
                Aggregator::Max => {
                    for j in 0..m {
                        let mut best = seg[0];
                        let mut best_v = t.get(seg[0], j);
                        for &r in &seg[1..] {
                            let v = t.get(r, j);
                            if v > best_v {
                                best_v = v;
                                best = r;
                            }
                        }
                        dst[j] = best_v;
                        argmax[s * m + j] = best;
                    }
                }
            }
        }
        let out = Tensor::matrix(segments.len(), m, data)?;
        self.push(
            Op::Segment {
                input: a,
                segments,
                agg,
                argmax,
            },
            out,
            "segment_aggregate",
        )
    }

    /// Mean binary cross entropy of logits against 0/1 labels, in the
    /// overflow-free form `max(z,0) - z*y + ln(1 + e^-|z|)`.
    pub fn bce_with_logits(&mut self, logits: Var, labels: Vec<f64>) -> Result<Var> {
        let t = self.value(logits);
        if t.len() != labels.len() || labels.is_empty() {
            return Err(Error::shape(
                "bce_with_logits",
                format!("{} logits vs {} labels", t.len(), labels.len()),
            ));
        }
        let mut total = 0.0;
        for (&z, &y) in t.data().iter().zip(&labels) {
            total += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        }
        let loss = total / labels.len() as f64;
        self.push(Op::BceWithLogits(logits, labels), Tensor::scalar(loss), "bce_with_logits")
    }

    /// Mean softmax cross entropy of `[n, C]` logits against class indices.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: Vec<usize>) -> Result<Var> {
        let t = self.value(logits);
        require_rank2("softmax_cross_entropy", t)?;
        let (n, c) = (t.rows(), t.cols());
        if n != labels.len() || n == 0 {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!("{} rows vs {} labels", n, labels.len()),
            ));
        }
        let mut probs = vec![0.0; n * c];
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            if y >= c {
                return Err(Error::shape(
                    "softmax_cross_entropy",
                    format!("label {y} out of range for {c} classes"),
                ));
            }
            let row = t.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (j, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                probs[i * c + j] = e;
                z += e;
            }
            for p in &mut probs[i * c..(i + 1) * c] {
                *p /= z;
            }
            total += -(row[y] - max - z.ln());
        }
        let loss = total / n as f64;
        self.push(
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            },
            Tensor::scalar(loss),
            "softmax_cross_entropy",
        )
    }

    /// Row-wise `1 - cos(a_i, b_i)`, shape `[n, 1]`.
    pub fn cosine_distance(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        require_rank2("cosine_distance", ta)?;
        same_shape("cosine_distance", ta, tb)?;
        let n = ta.rows();
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            let (ra, rb) = (ta.row(i), tb.row(i));
            let dot: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
            let na = ra.iter().map(|x| x * x).sum::<f64>().sqrt().max(NORM_FLOOR);
            let nb = rb.iter().map(|x| x * x).sum::<f64>().sqrt().max(NORM_FLOOR);
            data.push(1.0 - dot / (na * nb));
        }
        let out = Tensor::matrix(n, 1, data)?;
        self.push(Op::CosineDistance(a, b), out, "cosine_distance")
    }

    /// Accumulates `d loss / d param` into `store` for every parameter on the
    /// tape. Repeated calls without `zero_grad` keep accumulating.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads, store)?;
            grads[idx] = Some(g);
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if !g.all_finite() {
                    return Err(Error::Numeric(format!("gradient of tape node {i}")));
                }
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(
        &self,
        idx: usize,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
        store: &mut ParamStore,
    ) -> Result<()> {
        fn acc(grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        }
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => {
                store.params_mut()[id.0].grad.add_assign(g);
            }
            Op::MatMul(a, b) => {
                let ta = self.value(*a);
                let tb = self.value(*b);
                acc(grads, *a, g.matmul(&tb.transpose()?)?);
                acc(grads, *b, ta.transpose()?.matmul(g)?);
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let ga = g.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                let gb = g.data().iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                acc(grads, *a, Tensor::new(ta.shape().to_vec(), ga)?);
                acc(grads, *b, Tensor::new(tb.shape().to_vec(), gb)?);
            }
            Op::AddRow(a, row) => {
                acc(grads, *a, g.clone());
                let tr = self.value(*row);
                let m = tr.len();
                let mut gr = vec![0.0; m];
                for (i, v) in g.data().iter().enumerate() {
                    gr[i % m] += v;
                }
                acc(grads, *row, Tensor::new(tr.shape().to_vec(), gr)?);
            }
            Op::Scale(a, c) => acc(grads, *a, g.map(|v| v * c)),
            Op::ScaleBy(a, s) => {
                let c = self.value(*s).item();
                let ta = self.value(*a);
                acc(grads, *a, g.map(|v| v * c));
                let gs: f64 = g.data().iter().zip(ta.data()).map(|(x, y)| x * y).sum();
                acc(grads, *s, Tensor::new(self.value(*s).shape().to_vec(), vec![gs])?);
            }
            Op::Relu(a) => {
                let ta = self.value(*a);
                let data = g
                    .data()
                    .iter()
                    .zip(ta.data())
                    .map(|(gv, x)| if *x > 0.0 { *gv } else { 0.0 })
                    .collect();
                acc(grads, *a, Tensor::new(ta.shape().to_vec(), data)?);
            }
            Op::MulConst(a, mask) => {
                let data = g.data().iter().zip(mask).map(|(x, m)| x * m).collect();
                acc(grads, *a, Tensor::new(g.shape().to_vec(), data)?);
            }
            Op::Sum(a) => {
                let ta = self.value(*a);
                acc(grads, *a, Tensor::filled(ta.shape(), g.item()));
            }
            Op::Mean(a) => {
                let ta = self.value(*a);
                acc(grads, *a, Tensor::filled(ta.shape(), g.item() / ta.len() as f64));
            }
            Op::ConcatCols(a, b) => {
                let ma = self.value(*a).cols();
                let mb = self.value(*b).cols();
                let n = g.rows();
                let mut ga = Vec::with_capacity(n * ma);
                let mut gb = Vec::with_capacity(n * mb);
                for i in 0..n {
                    let r = g.row(i);
                    ga.extend_from_slice(&r[..ma]);
                    gb.extend_from_slice(&r[ma..]);
                }
                acc(grads, *a, Tensor::matrix(n, ma, ga)?);
                acc(grads, *b, Tensor::matrix(n, mb, gb)?);
            }
            Op::ConcatRows(parts) => {
                let m = g.cols();
                let mut offset = 0;
                for p in parts {
                    let rows = self.value(*p).rows();
                    let slice = g.data()[offset * m..(offset + rows) * m].to_vec();
                    acc(grads, *p, Tensor::matrix(rows, m, slice)?);
                    offset += rows;
                }
            }
            Op::Gather(a, rows) => {
                let ta = self.value(*a);
                let m = ta.cols();
                let mut ga = Tensor::zeros(ta.shape());
                for (i, &r) in rows.iter().enumerate() {
                    let dst = &mut ga.data_mut()[r * m..(r + 1) * m];
                    for (d, v) in dst.iter_mut().zip(g.row(i)) {
                        *d += v;
                    }
                }
                acc(grads, *a, ga);
            }
            Op::Segment {
                input,
                segments,
                agg,
                argmax,
            } => {
                let ta = self.value(*input);
                let m = ta.cols();
                let mut ga = Tensor::zeros(ta.shape());
                for (s, seg) in segments.iter().enumerate() {
                    if seg.is_empty() {
                        continue;
                    }
                    let gs = g.row(s);
                    match agg {
                        Aggregator::Sum | Aggregator::Mean => {
                            let k = if *agg == Aggregator::Mean {
                                seg.len() as f64
                            } else {
                                1.0
                            };
                            for &r in seg {
                                let dst = &mut ga.data_mut()[r * m..(r + 1) * m];
                                for (d, v) in dst.iter_mut().zip(gs) {
                                    *d += v / k;
                                }
                            }
                        }
                        Aggregator::Max => {
                            for j in 0..m {
                                let r = argmax[s * m + j];
                                ga.data_mut()[r * m + j] += gs[j];
                            }
                        }
                    }
                }
                acc(grads, *input, ga);
            }
            Op::BceWithLogits(logits, labels) => {
                let t = self.value(*logits);
                let n = labels.len() as f64;
                let scale = g.item() / n;
                let data = t
                    .data()
                    .iter()
                    .zip(labels)
                    .map(|(&z, &y)| (sigmoid(z) - y) * scale)
                    .collect();
                acc(grads, *logits, Tensor::new(t.shape().to_vec(), data)?);
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let t = self.value(*logits);
                let c = t.cols();
                let scale = g.item() / labels.len() as f64;
                let mut data = probs.clone();
                for (i, &y) in labels.iter().enumerate() {
                    data[i * c + y] -= 1.0;
                }
                data.iter_mut().for_each(|v| *v *= scale);
                acc(grads, *logits, Tensor::new(t.shape().to_vec(), data)?);
            }
            Op::CosineDistance(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (n, m) = (ta.rows(), ta.cols());
                let mut ga = vec![0.0; n * m];
                let mut gb = vec![0.0; n * m];
                for i in 0..n {
                    let (ra, rb) = (ta.row(i), tb.row(i));
                    let dot: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
                    let na = ra.iter().map(|x| x * x).sum::<f64>().sqrt().max(NORM_FLOOR);
                    let nb = rb.iter().map(|x| x * x).sum::<f64>().sqrt().max(NORM_FLOOR);
                    let cos = dot / (na * nb);
                    let gi = g.data()[i];
                    for j in 0..m {
                        // d(1 - cos)/da = -(b/(|a||b|) - cos a/|a|^2)
                        ga[i * m + j] = -gi * (rb[j] / (na * nb) - cos * ra[j] / (na * na));
                        gb[i * m + j] = -gi * (ra[j] / (na * nb) - cos * rb[j] / (nb * nb));
                    }
                }
                acc(grads, *a, Tensor::new(ta.shape().to_vec(), ga)?);
                acc(grads, *b, Tensor::new(tb.shape().to_vec(), gb)?);
            }
        }
        Ok(())
    }
}
