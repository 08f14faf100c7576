//! Tape-based reverse-mode differentiation over [`Tensor2`] values.
//!
//! Every operation appends a node holding its output and the ids of its
//! inputs. [`Tape::backward`] walks the nodes in reverse and applies each
//! op's backward rule, accumulating parameter gradients into a
//! [`ParamGrads`]. Parameters are never copied onto the tape: a parameter
//! leaf borrows the tensor from the [`ParamStore`] the tape was built over.

use std::collections::BTreeMap;

use super::tensor::{dot, matmul_acc, matmul_tn_acc, Tensor2};
use crate::error::{Error, Result};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of learnable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor2>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor2) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor2 {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor2)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    /// Total number of scalar entries.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor2::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor2::is_finite)
    }
}

/// Gradient storage for one parameter.
///
/// Parameters touched only through [`Tape::gather_rows`] keep a row-sparse
/// buffer, so the NCE output layer and the character table never allocate a
/// dense gradient per sentence.
#[derive(Clone, Debug, PartialEq)]
pub enum GradSlot {
    Dense(Tensor2),
    Rows {
        shape: (usize, usize),
        rows: BTreeMap<usize, Vec<f64>>,
    },
}

impl GradSlot {
    fn to_dense(&self) -> Tensor2 {
        match self {
            GradSlot::Dense(t) => t.clone(),
            GradSlot::Rows { shape, rows } => {
                let mut t = Tensor2::zeros(shape.0, shape.1);
                for (&r, v) in rows {
                    t.row_mut(r).copy_from_slice(v);
                }
                t
            }
        }
    }

    fn for_each_value(&self, mut f: impl FnMut(f64)) {
        match self {
            GradSlot::Dense(t) => t.data().iter().for_each(|&v| f(v)),
            GradSlot::Rows { rows, .. } => rows.values().flatten().for_each(|&v| f(v)),
        }
    }

    fn for_each_value_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        match self {
            GradSlot::Dense(t) => t.data_mut().iter_mut().for_each(&mut f),
            GradSlot::Rows { rows, .. } => rows.values_mut().flatten().for_each(f),
        }
    }
}

/// Accumulated gradients for every parameter of a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    shapes: Vec<(usize, usize)>,
    slots: Vec<Option<GradSlot>>,
}

impl ParamGrads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        ParamGrads {
            shapes: store.tensors.iter().map(Tensor2::shape).collect(),
            slots: vec![None; store.len()],
        }
    }

    pub fn slot(&self, id: ParamId) -> Option<&GradSlot> {
        self.slots[id.0].as_ref()
    }

    /// Dense copy of the gradient; zeros when the parameter was not reached.
    pub fn dense(&self, id: ParamId) -> Tensor2 {
        match &self.slots[id.0] {
            Some(s) => s.to_dense(),
            None => {
                let (r, c) = self.shapes[id.0];
                Tensor2::zeros(r, c)
            }
        }
    }

    pub fn get(&self, id: ParamId, row: usize, col: usize) -> f64 {
        match &self.slots[id.0] {
            None => 0.0,
            Some(GradSlot::Dense(t)) => t.get(row, col),
            Some(GradSlot::Rows { rows, .. }) => rows.get(&row).map_or(0.0, |v| v[col]),
        }
    }

    /// Row ids holding a sparse gradient, `None` for dense or absent slots.
    pub fn touched_rows(&self, id: ParamId) -> Option<Vec<usize>> {
        match &self.slots[id.0] {
            Some(GradSlot::Rows { rows, .. }) => Some(rows.keys().copied().collect()),
            _ => None,
        }
    }

    pub fn norm_sq(&self) -> f64 {
        let mut acc = 0.0;
        for slot in self.slots.iter().flatten() {
            slot.for_each_value(|v| acc += v * v);
        }
        acc
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        for slot in self.slots.iter().flatten() {
            slot.for_each_value(|v| ok &= v.is_finite());
        }
        ok
    }

    pub fn scale(&mut self, factor: f64) {
        for slot in self.slots.iter_mut().flatten() {
            slot.for_each_value_mut(|v| *v *= factor);
        }
    }

    /// Adds `other` into `self`. Summation order is deterministic.
    pub fn merge(&mut self, other: &ParamGrads) {
        for (i, slot) in other.slots.iter().enumerate() {
            let Some(slot) = slot else { continue };
            match slot {
                GradSlot::Dense(t) => self.dense_mut(ParamId(i)).add_assign(t),
                GradSlot::Rows { rows, .. } => {
                    for (&r, v) in rows {
                        for (a, b) in self.row_mut(ParamId(i), r).iter_mut().zip(v) {
                            *a += b;
                        }
                    }
                }
            }
        }
    }

    pub(crate) fn dense_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        let shape = self.shapes[id.0];
        let slot = &mut self.slots[id.0];
        if let Some(GradSlot::Rows { .. }) = slot {
            let dense = slot.as_ref().map(GradSlot::to_dense);
            *slot = dense.map(GradSlot::Dense);
        }
        match slot.get_or_insert_with(|| GradSlot::Dense(Tensor2::zeros(shape.0, shape.1))) {
            GradSlot::Dense(t) => t,
            GradSlot::Rows { .. } => unreachable!(),
        }
    }

    pub(crate) fn row_mut(&mut self, id: ParamId, row: usize) -> &mut [f64] {
        let shape = self.shapes[id.0];
        let slot = self.slots[id.0].get_or_insert_with(|| GradSlot::Rows {
            shape,
            rows: BTreeMap::new(),
        });
        match slot {
            GradSlot::Dense(t) => t.row_mut(row),
            GradSlot::Rows { rows, .. } => rows.entry(row).or_insert_with(|| vec![0.0; shape.1]),
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    LogSigmoid(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    StackRows(Vec<Var>),
    Row(Var, usize),
    GatherRows(Var, Vec<usize>),
    RowDot(Var, Var),
    Sum(Var),
    SoftmaxXent(Var, Vec<usize>),
}

struct Node {
    value: Option<Tensor2>,
    op: Op,
}

/// Pointwise operators, see [`Tape::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Sigmoid,
    Tanh,
    Relu,
    Add,
    Mul,
}

/// Single-owner record of one forward pass.
pub struct Tape<'a> {
    params: &'a ParamStore,
    nodes: Vec<Node>,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log σ(x)`, stable for large |x|.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn map(t: &Tensor2, f: impl Fn(f64) -> f64) -> Tensor2 {
    let data = t.data().iter().map(|&v| f(v)).collect();
    Tensor2::from_vec(t.rows(), t.cols(), data).expect("same shape")
}

fn zip_map(a: &Tensor2, b: &Tensor2, f: impl Fn(f64, f64) -> f64) -> Tensor2 {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor2::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

impl<'a> Tape<'a> {
    pub fn new(params: &'a ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'a ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            (None, _) => unreachable!("only parameter leaves borrow their value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn push(&mut self, value: Tensor2, op: Op) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    /// Leaf holding a constant or an input whose gradient may be queried.
    pub fn input(&mut self, value: Tensor2) -> Var {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`, the layout used for `(out × in)` weight matrices.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul_t(self.value(b))?;
        Ok(self.push(out, Op::MatMulT(a, b)))
    }

    fn check_same(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(op, sa, sb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("add", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("sub", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("mul", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = map(self.value(a), |x| x * factor);
        self.push(out, Op::Scale(a, factor))
    }

    /// Adds the `1 × n` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sb.0 != 1 || sa.1 != sb.1 {
            return Err(Error::shape("add_row", sa, sb));
        }
        let b = self.value(bias).data();
        let mut out = self.value(a).clone();
        for r in 0..sa.0 {
            for (o, v) in out.row_mut(r).iter_mut().zip(b) {
                *o += v;
            }
        }
        Ok(self.push(out, Op::AddRow(a, bias)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = map(self.value(a), sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = map(self.value(a), f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = map(self.value(a), |x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let out = map(self.value(a), log_sigmoid);
        self.push(out, Op::LogSigmoid(a))
    }

    /// Applies a pointwise operator; binary operators take exactly two inputs.
    pub fn elementwise(&mut self, op: Elementwise, inputs: &[Var]) -> Result<Var> {
        let arity = match op {
            Elementwise::Add | Elementwise::Mul => 2,
            _ => 1,
        };
        if inputs.len() != arity {
            return Err(Error::shape("elementwise arity", (arity, 0), (inputs.len(), 0)));
        }
        Ok(match op {
            Elementwise::Sigmoid => self.sigmoid(inputs[0]),
            Elementwise::Tanh => self.tanh(inputs[0]),
            Elementwise::Relu => self.relu(inputs[0]),
            Elementwise::Add => self.add(inputs[0], inputs[1])?,
            Elementwise::Mul => self.mul(inputs[0], inputs[1])?,
        })
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() {
            return Err(Error::shape("concat_cols", ta.shape(), tb.shape()));
        }
        let cols = ta.cols() + tb.cols();
        let mut data = Vec::with_capacity(ta.rows() * cols);
        for r in 0..ta.rows() {
            data.extend_from_slice(ta.row(r));
            data.extend_from_slice(tb.row(r));
        }
        let out = Tensor2::from_vec(ta.rows(), cols, data)?;
        Ok(self.push(out, Op::ConcatCols(a, b)))
    }

    /// Columns `start..start + len` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        if start + len > ta.cols() {
            return Err(Error::Index {
                what: "slice_cols",
                index: start + len,
                len: ta.cols(),
            });
        }
        let mut data = Vec::with_capacity(ta.rows() * len);
        for r in 0..ta.rows() {
            data.extend_from_slice(&ta.row(r)[start..start + len]);
        }
        let out = Tensor2::from_vec(ta.rows(), len, data)?;
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = rows.first().ok_or(Error::Empty("stack_rows input"))?;
        let cols = self.shape(*first).1;
        let mut data = Vec::new();
        for &r in rows {
            let t = self.value(r);
            if t.cols() != cols {
                return Err(Error::shape("stack_rows", (1, cols), t.shape()));
            }
            data.extend_from_slice(t.data());
        }
        let n = data.len() / cols.max(1);
        let out = Tensor2::from_vec(if cols == 0 { 0 } else { n }, cols, data)?;
        Ok(self.push(out, Op::StackRows(rows.to_vec())))
    }

    pub fn row(&mut self, a: Var, index: usize) -> Result<Var> {
        let ta = self.value(a);
        if index >= ta.rows() {
            return Err(Error::Index {
                what: "row",
                index,
                len: ta.rows(),
            });
        }
        let out = Tensor2::row_vector(ta.row(index).to_vec());
        Ok(self.push(out, Op::Row(a, index)))
    }

    /// Looks up rows of `table`; backward scatters into exactly those rows.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let mut data = Vec::with_capacity(indices.len() * t.cols());
        for &i in indices {
            if i >= t.rows() {
                return Err(Error::Index {
                    what: "gather_rows",
                    index: i,
                    len: t.rows(),
                });
            }
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor2::from_vec(indices.len(), t.cols(), data)?;
        Ok(self.push(out, Op::GatherRows(table, indices.to_vec())))
    }

    pub fn gather_row(&mut self, table: Var, index: usize) -> Result<Var> {
        self.gather_rows(table, &[index])
    }

    /// `r × 1` column of per-row dot products of two equally shaped tensors.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape("row_dot", ta.shape(), tb.shape()));
        }
        let data = (0..ta.rows()).map(|r| dot(ta.row(r), tb.row(r))).collect();
        let out = Tensor2::from_vec(ta.rows(), 1, data)?;
        Ok(self.push(out, Op::RowDot(a, b)))
    }

    /// Sum of all entries as a `1 × 1` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor2::row_vector(vec![s]), Op::Sum(a))
    }

    /// Summed softmax cross-entropy of each row of `logits` against `targets`.
    pub fn softmax_xent(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        if t.rows() != targets.len() {
            return Err(Error::shape("softmax_xent", t.shape(), (targets.len(), 1)));
        }
        let mut loss = 0.0;
        for (r, &y) in targets.iter().enumerate() {
            let row = t.row(r);
            if y >= row.len() {
                return Err(Error::Index {
                    what: "softmax_xent target",
                    index: y,
                    len: row.len(),
                });
            }
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[y];
        }
        Ok(self.push(
            Tensor2::row_vector(vec![loss]),
            Op::SoftmaxXent(logits, targets.to_vec()),
        ))
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::shape("backward (scalar loss)", shape, (1, 1)));
        }
        let mut sink = Sink {
            tape: self,
            nodes: (0..self.nodes.len()).map(|_| None).collect(),
            params: ParamGrads::zeros_like(self.params),
        };
        sink.nodes[loss.0] = Some(Tensor2::row_vector(vec![1.0]));

        for idx in (0..=loss.0).rev() {
            let Some(g) = sink.nodes[idx].take() else {
                continue;
            };
            let out = Var(idx);
            match &self.nodes[idx].op {
                Op::Input => {
                    sink.nodes[idx] = Some(g);
                }
                Op::Param(id) => sink.params.dense_mut(*id).add_assign(&g),
                Op::MatMul(a, b) => {
                    // dA += G·Bᵀ, dB += Aᵀ·G
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let da = g.matmul_t(vb)?;
                    sink.dense(*a).add_assign(&da);
                    matmul_tn_acc(va, &g, sink.dense(*b));
                }
                Op::MatMulT(a, b) => {
                    // out = A·Bᵀ: dA += G·B, dB += Gᵀ·A
                    let (va, vb) = (self.value(*a), self.value(*b));
                    matmul_acc(&g, vb, sink.dense(*a));
                    matmul_tn_acc(&g, va, sink.dense(*b));
                }
                Op::Add(a, b) => {
                    sink.dense(*a).add_assign(&g);
                    sink.dense(*b).add_assign(&g);
                }
                Op::Sub(a, b) => {
                    sink.dense(*a).add_assign(&g);
                    let mut neg = g;
                    neg.scale_assign(-1.0);
                    sink.dense(*b).add_assign(&neg);
                }
                Op::Mul(a, b) => {
                    let da = zip_map(&g, self.value(*b), |x, y| x * y);
                    let db = zip_map(&g, self.value(*a), |x, y| x * y);
                    sink.dense(*a).add_assign(&da);
                    sink.dense(*b).add_assign(&db);
                }
                Op::Scale(a, f) => {
                    let mut da = g;
                    da.scale_assign(*f);
                    sink.dense(*a).add_assign(&da);
                }
                Op::AddRow(a, bias) => {
                    sink.dense(*a).add_assign(&g);
                    let db = sink.dense(*bias);
                    for r in 0..g.rows() {
                        for (d, v) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                }
                Op::Sigmoid(a) => {
                    let d = zip_map(&g, self.value(out), |g, s| g * s * (1.0 - s));
                    sink.dense(*a).add_assign(&d);
                }
                Op::Tanh(a) => {
                    let d = zip_map(&g, self.value(out), |g, t| g * (1.0 - t * t));
                    sink.dense(*a).add_assign(&d);
                }
                Op::Relu(a) => {
                    let d = zip_map(&g, self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 });
                    sink.dense(*a).add_assign(&d);
                }
                Op::LogSigmoid(a) => {
                    let d = zip_map(&g, self.value(*a), |g, x| g * sigmoid(-x));
                    sink.dense(*a).add_assign(&d);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.shape(*a).1;
                    {
                        let da = sink.dense(*a);
                        for r in 0..g.rows() {
                            for (d, v) in da.row_mut(r).iter_mut().zip(&g.row(r)[..ca]) {
                                *d += v;
                            }
                        }
                    }
                    let db = sink.dense(*b);
                    for r in 0..g.rows() {
                        for (d, v) in db.row_mut(r).iter_mut().zip(&g.row(r)[ca..]) {
                            *d += v;
                        }
                    }
                }
                Op::SliceCols(a, start) => {
                    let da = sink.dense(*a);
                    for r in 0..g.rows() {
                        let dst = &mut da.row_mut(r)[*start..*start + g.cols()];
                        for (d, v) in dst.iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                }
                Op::StackRows(rows) => {
                    let mut offset = 0;
                    for &r in rows {
                        let n = self.shape(r).0;
                        let dr = sink.dense(r);
                        for i in 0..n {
                            for (d, v) in dr.row_mut(i).iter_mut().zip(g.row(offset + i)) {
                                *d += v;
                            }
                        }
                        offset += n;
                    }
                }
                Op::Row(a, index) => {
                    let dst = sink.dense(*a).row_mut(*index);
                    for (d, v) in dst.iter_mut().zip(g.data()) {
                        *d += v;
                    }
                }
                Op::GatherRows(table, indices) => {
                    for (k, &i) in indices.iter().enumerate() {
                        let dst = sink.row(*table, i);
                        for (d, v) in dst.iter_mut().zip(g.row(k)) {
                            *d += v;
                        }
                    }
                }
                Op::RowDot(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    {
                        let da = sink.dense(*a);
                        for r in 0..g.rows() {
                            let gr = g.data()[r];
                            for (d, v) in da.row_mut(r).iter_mut().zip(vb.row(r)) {
                                *d += gr * v;
                            }
                        }
                    }
                    let db = sink.dense(*b);
                    for r in 0..g.rows() {
                        let gr = g.data()[r];
                        for (d, v) in db.row_mut(r).iter_mut().zip(va.row(r)) {
                            *d += gr * v;
                        }
                    }
                }
                Op::Sum(a) => {
                    let gv = g.data()[0];
                    for d in sink.dense(*a).data_mut() {
                        *d += gv;
                    }
                }
                Op::SoftmaxXent(logits, targets) => {
                    let gv = g.data()[0];
                    let t = self.value(*logits);
                    let dl = sink.dense(*logits);
                    for (r, &y) in targets.iter().enumerate() {
                        let p = softmax_row(t.row(r));
                        for (k, (d, pk)) in dl.row_mut(r).iter_mut().zip(p).enumerate() {
                            let onehot = if k == y { 1.0 } else { 0.0 };
                            *d += gv * (pk - onehot);
                        }
                    }
                }
            }
        }

        Ok(Gradients {
            nodes: sink.nodes,
            params: sink.params,
        })
    }
}

struct Sink<'t, 'a> {
    tape: &'t Tape<'a>,
    nodes: Vec<Option<Tensor2>>,
    params: ParamGrads,
}

impl Sink<'_, '_> {
    fn dense(&mut self, v: Var) -> &mut Tensor2 {
        if let Op::Param(id) = self.tape.nodes[v.0].op {
            return self.params.dense_mut(id);
        }
        let (r, c) = self.tape.shape(v);
        self.nodes[v.0].get_or_insert_with(|| Tensor2::zeros(r, c))
    }

    fn row(&mut self, v: Var, row: usize) -> &mut [f64] {
        if let Op::Param(id) = self.tape.nodes[v.0].op {
            return self.params.row_mut(id, row);
        }
        self.dense(v).row_mut(row)
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    nodes: Vec<Option<Tensor2>>,
    pub params: ParamGrads,
}

impl Gradients {
    /// Gradient with respect to an [`Tape::input`] leaf.
    pub fn wrt(&self, v: Var) -> Option<&Tensor2> {
        self.nodes[v.0].as_ref()
    }

    pub fn into_params(self) -> ParamGrads {
        self.params
    }
}

/// Dot product of two rows, exposed for probes that work on raw vectors.
pub fn dot_product(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(t: Tensor2) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("w", t);
        (s, id)
    }

    #[test]
    fn sigmoid_and_relu_values() {
        let s = ParamStore::new();
        let mut tape = Tape::new(&s);
        let x = tape.input(Tensor2::row_vector(vec![0.0, -3.0, 3.0]));
        let sg = tape.sigmoid(x);
        let r = tape.relu(x);
        assert_eq!(tape.value(sg).get(0, 0), 0.5);
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 3.0]);
    }

    #[test]
    fn concat_with_empty_is_neutral() {
        let s = ParamStore::new();
        let mut tape = Tape::new(&s);
        let a = tape.input(Tensor2::row_vector(vec![1.0, 2.0]));
        let b = tape.input(Tensor2::row_vector(vec![3.0]));
        let e = tape.input(Tensor2::zeros(1, 0));
        let ab = tape.concat_cols(a, b).unwrap();
        assert_eq!(tape.value(ab).data(), &[1.0, 2.0, 3.0]);
        let ae = tape.concat_cols(a, e).unwrap();
        assert_eq!(tape.value(ae), tape.value(a));
    }

    #[test]
    fn concat_backward_splits_gradient() {
        let s = ParamStore::new();
        let mut tape = Tape::new(&s);
        let a = tape.input(Tensor2::row_vector(vec![1.0, 2.0]));
        let b = tape.input(Tensor2::row_vector(vec![3.0]));
        let ab = tape.concat_cols(a, b).unwrap();
        let w = tape.input(Tensor2::row_vector(vec![0.5, -2.0, 4.0]));
        let p = tape.mul(ab, w).unwrap();
        let loss = tape.sum(p);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(a).unwrap().data(), &[0.5, -2.0]);
        assert_eq!(g.wrt(b).unwrap().data(), &[4.0]);
        let split = g.wrt(a).unwrap().norm_sq() + g.wrt(b).unwrap().norm_sq();
        assert_eq!(split, 0.25 + 4.0 + 16.0);
    }

    #[test]
    fn gather_identity_row() {
        let (s, id) = store_with(Tensor2::identity(3));
        let mut tape = Tape::new(&s);
        let t = tape.param(id);
        let r = tape.gather_row(t, 1).unwrap();
        assert_eq!(tape.value(r).data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn gather_twice_accumulates_and_leaves_other_rows_zero() {
        let (s, id) = store_with(Tensor2::identity(3));
        let mut tape = Tape::new(&s);
        let t = tape.param(id);
        let r1 = tape.gather_row(t, 2).unwrap();
        let r2 = tape.gather_row(t, 2).unwrap();
        let both = tape.add(r1, r2).unwrap();
        let loss = tape.sum(both);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.params.touched_rows(id), Some(vec![2]));
        let dense = g.params.dense(id);
        assert_eq!(dense.row(2), &[2.0, 2.0, 2.0]);
        assert!(dense.row(0).iter().chain(dense.row(1)).all(|&v| v == 0.0));
    }

    #[test]
    fn gather_out_of_range_is_error() {
        let (s, id) = store_with(Tensor2::identity(3));
        let mut tape = Tape::new(&s);
        let t = tape.param(id);
        assert!(matches!(tape.gather_row(t, 3), Err(Error::Index { .. })));
    }

    #[test]
    fn binary_shape_mismatch_is_error() {
        let s = ParamStore::new();
        let mut tape = Tape::new(&s);
        let a = tape.input(Tensor2::zeros(1, 2));
        let b = tape.input(Tensor2::zeros(1, 3));
        assert!(tape.add(a, b).is_err());
        assert!(tape.mul(a, b).is_err());
        let c = tape.input(Tensor2::zeros(2, 1));
        assert!(tape.concat_cols(a, c).is_err());
        assert!(tape.elementwise(Elementwise::Add, &[a]).is_err());
    }

    #[test]
    fn clear_empties_tape() {
        let s = ParamStore::new();
        let mut tape = Tape::new(&s);
        tape.input(Tensor2::zeros(1, 1));
        assert_eq!(tape.len(), 1);
        tape.clear();
        assert!(tape.is_empty());
    }

    #[test]
    fn softmax_xent_uniform_logits() {
        let s = ParamStore::new();
        let mut tape = Tape::new(&s);
        let x = tape.input(Tensor2::row_vector(vec![0.0; 4]));
        let l = tape.softmax_xent(x, &[2]).unwrap();
        assert!((tape.value(l).get(0, 0) - 4f64.ln()).abs() < 1e-15);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[0.25, 0.25, -0.75, 0.25]);
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) + 2f64.ln()).abs() < 1e-15);
        assert!(log_sigmoid(-800.0).is_finite());
        assert_eq!(log_sigmoid(800.0), 0.0);
    }
}
