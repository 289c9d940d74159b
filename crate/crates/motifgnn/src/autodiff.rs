//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records matrix-granular operations as they are built; the
//! construction order is the topological order. `forward` evaluates all
//! nodes, `backward` accumulates exact adjoints for every parameter
//! reachable from a scalar loss. Sparse operands enter as constants
//! (gradients never flow into adjacency or raw-feature matrices).
//!
//! Evaluation is single-threaded with fixed reduction order, so results
//! are bit-reproducible for identical inputs and dropout seeds.

use std::sync::Arc;

use ndarray::{Array2, Axis};
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

use crate::tensor::{CsrMatrix, DMat};
use crate::{Error, Result};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f64 = 1e-12;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    /// Constant input; no gradient.
    Constant,
    /// Trainable leaf; gradient collected.
    Param,
    MatMul(Var, Var),
    /// sparse constant × dense
    SpMm(Arc<CsrMatrix>, Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// elementwise product
    Mul(Var, Var),
    /// matrix + broadcast 1×D row
    AddRow(Var, Var),
    /// rows of `.1` scaled by the n×1 column `.0`
    MulCol(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Relu(Var),
    RowSoftmax(Var),
    /// horizontal concatenation: each output row is [a_row ‖ b_row]
    ConcatCols(Var, Var),
    GatherRows(Var, Arc<Vec<usize>>),
    GatherCols(Var, Arc<Vec<usize>>),
    SumAll(Var),
    MeanAll(Var),
    /// column means -> 1×D
    MeanRows(Var),
    /// per-row sums -> n×1
    SumCols(Var),
    /// elementwise −[y·ln p̂ + (1−y)·ln(1−p̂)] with p̂ = clamp(p)
    BceFromProb(Var, Arc<DMat>),
    /// per-row −log softmax(logits)[label] -> n×1
    CeFromLogits(Var, Arc<Vec<usize>>),
    /// train-mode inverted dropout; mask drawn once at node creation
    Dropout(Var, Arc<DMat>),
}

struct Node {
    op: Op,
    shape: (usize, usize),
}

/// Reverse-mode tape. Build ops through the methods below, then call
/// [`Tape::forward`] and [`Tape::backward`].
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    values: Vec<Option<DMat>>,
    has_dropout: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].shape
    }

    pub fn has_dropout(&self) -> bool {
        self.has_dropout
    }

    fn push(&mut self, op: Op, shape: (usize, usize)) -> Var {
        self.nodes.push(Node { op, shape });
        self.values.push(None);
        Var(self.nodes.len() - 1)
    }

    fn push_leaf(&mut self, op: Op, value: DMat) -> Var {
        let shape = (value.nrows(), value.ncols());
        self.nodes.push(Node { op, shape });
        self.values.push(Some(value));
        Var(self.nodes.len() - 1)
    }

    /// Non-trainable input.
    pub fn constant(&mut self, value: DMat) -> Var {
        self.push_leaf(Op::Constant, value)
    }

    /// Trainable leaf; its adjoint is reported by [`Tape::backward`].
    pub fn param(&mut self, value: DMat) -> Var {
        self.push_leaf(Op::Param, value)
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<(usize, usize)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Shape {
                op: op.into(),
                details: format!("{}x{} vs {}x{}", sa.0, sa.1, sb.0, sb.1),
            });
        }
        Ok(sa)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(Error::Shape {
                op: "matmul".into(),
                details: format!("{}x{} × {}x{}", sa.0, sa.1, sb.0, sb.1),
            });
        }
        Ok(self.push(Op::MatMul(a, b), (sa.0, sb.1)))
    }

    pub fn spmm(&mut self, s: Arc<CsrMatrix>, b: Var) -> Result<Var> {
        let sb = self.shape(b);
        if s.cols() != sb.0 {
            return Err(Error::Shape {
                op: "sparse × dense".into(),
                details: format!("{}x{} × {}x{}", s.rows(), s.cols(), sb.0, sb.1),
            });
        }
        let shape = (s.rows(), sb.1);
        Ok(self.push(Op::SpMm(s, b), shape))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let s = self.same_shape("add", a, b)?;
        Ok(self.push(Op::Add(a, b), s))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let s = self.same_shape("sub", a, b)?;
        Ok(self.push(Op::Sub(a, b), s))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let s = self.same_shape("mul", a, b)?;
        Ok(self.push(Op::Mul(a, b), s))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr.0 != 1 || sr.1 != sa.1 {
            return Err(Error::Shape {
                op: "add_row".into(),
                details: format!("{}x{} + {}x{}", sa.0, sa.1, sr.0, sr.1),
            });
        }
        Ok(self.push(Op::AddRow(a, row), sa))
    }

    pub fn mul_col(&mut self, col: Var, a: Var) -> Result<Var> {
        let (sc, sa) = (self.shape(col), self.shape(a));
        if sc.1 != 1 || sc.0 != sa.0 {
            return Err(Error::Shape {
                op: "mul_col".into(),
                details: format!("{}x{} scaling {}x{}", sc.0, sc.1, sa.0, sa.1),
            });
        }
        Ok(self.push(Op::MulCol(col, a), sa))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let s = self.shape(a);
        self.push(Op::Scale(a, k), s)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let s = self.shape(a);
        self.push(Op::Sigmoid(a), s)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let s = self.shape(a);
        self.push(Op::Relu(a), s)
    }

    pub fn row_softmax(&mut self, a: Var) -> Var {
        let s = self.shape(a);
        self.push(Op::RowSoftmax(a), s)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.0 != sb.0 {
            return Err(Error::Shape {
                op: "concat_cols".into(),
                details: format!("{} rows vs {} rows", sa.0, sb.0),
            });
        }
        Ok(self.push(Op::ConcatCols(a, b), (sa.0, sa.1 + sb.1)))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Arc<Vec<usize>>) -> Result<Var> {
        let sa = self.shape(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= sa.0) {
            return Err(Error::Shape {
                op: "gather_rows".into(),
                details: format!("row {bad} out of {}", sa.0),
            });
        }
        let shape = (idx.len(), sa.1);
        Ok(self.push(Op::GatherRows(a, idx), shape))
    }

    pub fn gather_cols(&mut self, a: Var, idx: Arc<Vec<usize>>) -> Result<Var> {
        let sa = self.shape(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= sa.1) {
            return Err(Error::Shape {
                op: "gather_cols".into(),
                details: format!("column {bad} out of {}", sa.1),
            });
        }
        let shape = (sa.0, idx.len());
        Ok(self.push(Op::GatherCols(a, idx), shape))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        self.push(Op::SumAll(a), (1, 1))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        self.push(Op::MeanAll(a), (1, 1))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let s = self.shape(a);
        self.push(Op::MeanRows(a), (1, s.1))
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let s = self.shape(a);
        self.push(Op::SumCols(a), (s.0, 1))
    }

    /// Elementwise binary cross-entropy from probabilities against
    /// constant targets in `{0, 1}` (soft targets allowed).
    pub fn bce_from_prob(&mut self, p: Var, targets: Arc<DMat>) -> Result<Var> {
        let sp = self.shape(p);
        if (targets.nrows(), targets.ncols()) != sp {
            return Err(Error::Shape {
                op: "bce_from_prob".into(),
                details: format!(
                    "probabilities {}x{} vs targets {}x{}",
                    sp.0,
                    sp.1,
                    targets.nrows(),
                    targets.ncols()
                ),
            });
        }
        Ok(self.push(Op::BceFromProb(p, targets), sp))
    }

    /// Per-row categorical cross-entropy from logits -> n×1 column.
    pub fn ce_from_logits(&mut self, logits: Var, labels: Arc<Vec<usize>>) -> Result<Var> {
        let s = self.shape(logits);
        if labels.len() != s.0 {
            return Err(Error::Shape {
                op: "ce_from_logits".into(),
                details: format!("{} logit rows vs {} labels", s.0, labels.len()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&c| c >= s.1) {
            return Err(Error::Shape {
                op: "ce_from_logits".into(),
                details: format!("label {bad} out of {} classes", s.1),
            });
        }
        Ok(self.push(Op::CeFromLogits(logits, labels), (s.0, 1)))
    }

    /// Inverted dropout with keep-scaling; the mask is drawn here so the
    /// node is a fixed (differentiable) linear map thereafter.
    pub fn dropout(&mut self, a: Var, rate: f64, seed: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Contract(format!("dropout rate {rate} outside [0, 1)")));
        }
        let s = self.shape(a);
        let mut rng = SmallRng::seed_from_u64(seed);
        let keep = 1.0 - rate;
        let mask = DMat::from_shape_fn(s, |_| {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        self.has_dropout = true;
        Ok(self.push(Op::Dropout(a, Arc::new(mask)), s))
    }

    fn value(&self, v: Var) -> &DMat {
        self.values[v.0].as_ref().expect("forward() not yet run")
    }

    /// Evaluate every node. Leaf values are kept from construction.
    pub fn forward(&mut self) -> Result<()> {
        for i in 0..self.nodes.len() {
            if self.values[i].is_some() {
                continue;
            }
            let out = self.eval_node(i)?;
            self.values[i] = Some(out);
        }
        Ok(())
    }

    /// Value of a node after [`Tape::forward`].
    pub fn output(&self, v: Var) -> &DMat {
        self.value(v)
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        let m = self.value(v);
        if m.dim() != (1, 1) {
            return Err(Error::Contract(format!(
                "expected scalar output, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(m[[0, 0]])
    }

    fn eval_node(&self, i: usize) -> Result<DMat> {
        Ok(match &self.nodes[i].op {
            Op::Constant | Op::Param => unreachable!("leaves hold values"),
            Op::MatMul(a, b) => self.value(*a).dot(self.value(*b)),
            Op::SpMm(s, b) => s.matmul_dense(self.value(*b))?,
            Op::Add(a, b) => self.value(*a) + self.value(*b),
            Op::Sub(a, b) => self.value(*a) - self.value(*b),
            Op::Mul(a, b) => self.value(*a) * self.value(*b),
            Op::AddRow(a, r) => {
                let row = self.value(*r).row(0);
                let mut out = self.value(*a).clone();
                for mut orow in out.rows_mut() {
                    orow += &row;
                }
                out
            }
            Op::MulCol(c, a) => {
                let col = self.value(*c);
                let mut out = self.value(*a).clone();
                for (mut orow, &k) in out.rows_mut().into_iter().zip(col.column(0)) {
                    orow *= k;
                }
                out
            }
            Op::Scale(a, k) => self.value(*a) * *k,
            Op::Sigmoid(a) => self.value(*a).mapv(sigmoid),
            Op::Relu(a) => self.value(*a).mapv(|x| x.max(0.0)),
            Op::RowSoftmax(a) => {
                let mut out = self.value(*a).clone();
                for mut row in out.rows_mut() {
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    row.mapv_inplace(|x| (x - max).exp());
                    let z: f64 = row.sum();
                    row.mapv_inplace(|x| x / z);
                }
                out
            }
            Op::ConcatCols(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                ndarray::concatenate(Axis(1), &[va.view(), vb.view()])
                    .expect("row counts checked at build time")
            }
            Op::GatherRows(a, idx) => {
                let v = self.value(*a);
                let mut out = DMat::zeros((idx.len(), v.ncols()));
                for (o, &r) in idx.iter().enumerate() {
                    out.row_mut(o).assign(&v.row(r));
                }
                out
            }
            Op::GatherCols(a, idx) => {
                let v = self.value(*a);
                let mut out = DMat::zeros((v.nrows(), idx.len()));
                for (o, &c) in idx.iter().enumerate() {
                    out.column_mut(o).assign(&v.column(c));
                }
                out
            }
            Op::SumAll(a) => DMat::from_elem((1, 1), self.value(*a).sum()),
            Op::MeanAll(a) => {
                let v = self.value(*a);
                DMat::from_elem((1, 1), v.sum() / v.len() as f64)
            }
            Op::MeanRows(a) => {
                let v = self.value(*a);
                let mean = v.mean_axis(Axis(0)).expect("non-empty");
                mean.insert_axis(Axis(0))
            }
            Op::SumCols(a) => {
                let v = self.value(*a);
                let sums = v.sum_axis(Axis(1));
                sums.insert_axis(Axis(1))
            }
            Op::BceFromProb(p, y) => {
                let v = self.value(*p);
                let mut out = DMat::zeros(v.raw_dim());
                ndarray::Zip::from(&mut out)
                    .and(v)
                    .and(y.as_ref())
                    .for_each(|o, &p, &y| {
                        let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
                        *o = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
                    });
                out
            }
            Op::CeFromLogits(l, labels) => {
                let v = self.value(*l);
                let mut out = DMat::zeros((v.nrows(), 1));
                for (i, row) in v.rows().into_iter().enumerate() {
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                    out[[i, 0]] = lse - row[labels[i]];
                }
                out
            }
            Op::Dropout(a, mask) => self.value(*a) * mask.as_ref(),
        })
    }

    /// Reverse pass from a scalar loss. Returns the adjoint of every
    /// node; parameters not reachable from the loss get zero gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            let (r, c) = self.shape(loss);
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got {r}x{c}"
            )));
        }
        let mut grads: Vec<Option<DMat>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(DMat::from_elem((1, 1), 1.0));

        for i in (0..=loss.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.push_adjoints(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(grads: &mut [Option<DMat>], v: Var, delta: DMat) {
        match &mut grads[v.0] {
            Some(g) => *g += &delta,
            slot @ None => *slot = Some(delta),
        }
    }

    fn push_adjoints(&self, i: usize, g: &DMat, grads: &mut Vec<Option<DMat>>) {
        match &self.nodes[i].op {
            Op::Constant | Op::Param => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                Self::accumulate(grads, *a, g.dot(&vb.t()));
                Self::accumulate(grads, *b, va.t().dot(g));
            }
            Op::SpMm(s, b) => {
                let gb = s
                    .transpose_matmul_dense(g)
                    .expect("shapes validated at build time");
                Self::accumulate(grads, *b, gb);
            }
            Op::Add(a, b) => {
                Self::accumulate(grads, *a, g.clone());
                Self::accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                Self::accumulate(grads, *a, g.clone());
                Self::accumulate(grads, *b, -g);
            }
            Op::Mul(a, b) => {
                Self::accumulate(grads, *a, g * self.value(*b));
                Self::accumulate(grads, *b, g * self.value(*a));
            }
            Op::AddRow(a, r) => {
                Self::accumulate(grads, *a, g.clone());
                let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                Self::accumulate(grads, *r, gr);
            }
            Op::MulCol(c, a) => {
                let (vc, va) = (self.value(*c), self.value(*a));
                let gc = (g * va).sum_axis(Axis(1)).insert_axis(Axis(1));
                Self::accumulate(grads, *c, gc);
                let mut ga = g.clone();
                for (mut row, &k) in ga.rows_mut().into_iter().zip(vc.column(0)) {
                    row *= k;
                }
                Self::accumulate(grads, *a, ga);
            }
            Op::Scale(a, k) => Self::accumulate(grads, *a, g * *k),
            Op::Sigmoid(a) => {
                let out = self.value(Var(i));
                Self::accumulate(grads, *a, g * out * (1.0 - out));
            }
            Op::Relu(a) => {
                let va = self.value(*a);
                Self::accumulate(grads, *a, g * va.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 }));
            }
            Op::RowSoftmax(a) => {
                let out = self.value(Var(i));
                let mut ga = DMat::zeros(out.raw_dim());
                for ((mut grow, orow), urow) in ga
                    .rows_mut()
                    .into_iter()
                    .zip(out.rows())
                    .zip(g.rows())
                {
                    let dot: f64 = orow.iter().zip(urow.iter()).map(|(o, u)| o * u).sum();
                    for ((gd, &o), &u) in grow.iter_mut().zip(orow).zip(urow) {
                        *gd = o * (u - dot);
                    }
                }
                Self::accumulate(grads, *a, ga);
            }
            Op::ConcatCols(a, b) => {
                let ca = self.shape(*a).1;
                let ga = g.slice(ndarray::s![.., ..ca]).to_owned();
                let gb = g.slice(ndarray::s![.., ca..]).to_owned();
                Self::accumulate(grads, *a, ga);
                Self::accumulate(grads, *b, gb);
            }
            Op::GatherRows(a, idx) => {
                let sa = self.shape(*a);
                let mut ga = DMat::zeros(sa);
                for (o, &r) in idx.iter().enumerate() {
                    let mut dst = ga.row_mut(r);
                    dst += &g.row(o);
                }
                Self::accumulate(grads, *a, ga);
            }
            Op::GatherCols(a, idx) => {
                let sa = self.shape(*a);
                let mut ga = DMat::zeros(sa);
                for (o, &c) in idx.iter().enumerate() {
                    let mut dst = ga.column_mut(c);
                    dst += &g.column(o);
                }
                Self::accumulate(grads, *a, ga);
            }
            Op::SumAll(a) => {
                let sa = self.shape(*a);
                Self::accumulate(grads, *a, DMat::from_elem(sa, g[[0, 0]]));
            }
            Op::MeanAll(a) => {
                let sa = self.shape(*a);
                let k = g[[0, 0]] / (sa.0 * sa.1) as f64;
                Self::accumulate(grads, *a, DMat::from_elem(sa, k));
            }
            Op::MeanRows(a) => {
                let sa = self.shape(*a);
                let mut ga = DMat::zeros(sa);
                let gr = g.row(0);
                for mut row in ga.rows_mut() {
                    row.assign(&gr);
                    row /= sa.0 as f64;
                }
                Self::accumulate(grads, *a, ga);
            }
            Op::SumCols(a) => {
                let sa = self.shape(*a);
                let mut ga = DMat::zeros(sa);
                for (mut row, &u) in ga.rows_mut().into_iter().zip(g.column(0)) {
                    row.fill(u);
                }
                Self::accumulate(grads, *a, ga);
            }
            Op::BceFromProb(p, y) => {
                let vp = self.value(*p);
                let mut gp = DMat::zeros(vp.raw_dim());
                ndarray::Zip::from(&mut gp)
                    .and(vp)
                    .and(y.as_ref())
                    .and(g)
                    .for_each(|gd, &p, &y, &u| {
                        // exact derivative of the clamped composite: zero
                        // in the saturated region
                        if (PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
                            *gd = u * (-y / p + (1.0 - y) / (1.0 - p));
                        }
                    });
                Self::accumulate(grads, *p, gp);
            }
            Op::CeFromLogits(l, labels) => {
                let v = self.value(*l);
                let mut gl = DMat::zeros(v.raw_dim());
                for (r, row) in v.rows().into_iter().enumerate() {
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = row.iter().map(|x| (x - max).exp()).sum();
                    let u = g[[r, 0]];
                    for (c, (gd, &x)) in gl.row_mut(r).iter_mut().zip(row).enumerate() {
                        let soft = (x - max).exp() / z;
                        *gd = u * (soft - if c == labels[r] { 1.0 } else { 0.0 });
                    }
                }
                Self::accumulate(grads, *l, gl);
            }
            Op::Dropout(a, mask) => {
                Self::accumulate(grads, *a, g * mask.as_ref());
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<DMat>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`. Zero-filled if the
    /// node never received an adjoint (unreachable from the loss).
    pub fn get(&self, tape: &Tape, v: Var) -> DMat {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| DMat::zeros(tape.shape(v)))
    }

    pub fn get_ref(&self, v: Var) -> Option<&DMat> {
        self.grads[v.0].as_ref()
    }
}

/// Report from a finite-difference gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// (parameter label, max relative error over the probed coordinates)
    pub per_param: Vec<(String, f64)>,
    pub max_rel_error: f64,
}

/// Compare reverse-mode adjoints of a freshly built loss against central
/// finite differences on a subsample of coordinates per parameter.
///
/// `build` must construct the same expression for the same parameter
/// values (sampling frozen, dropout off); it returns the tape, the
/// scalar loss node, and the parameter vars in `params` order.
pub fn grad_check<F>(
    params: &mut [(String, DMat)],
    eps: f64,
    max_coords: usize,
    seed: u64,
    build: F,
) -> Result<GradCheckReport>
where
    F: Fn(&[(String, DMat)]) -> Result<(Tape, Var, Vec<Var>)>,
{
    let (mut tape, loss, vars) = build(params)?;
    if tape.has_dropout() {
        return Err(Error::Contract(
            "gradient check refused: expression contains active dropout".into(),
        ));
    }
    tape.forward()?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<DMat> = vars.iter().map(|&v| grads.get(&tape, v)).collect();

    let mut rng = SmallRng::seed_from_u64(seed);
    let mut per_param = Vec::with_capacity(params.len());
    let mut max_rel = 0.0f64;
    for (pi, ana) in analytic.iter().enumerate() {
        let total = ana.len();
        let mut coords: Vec<usize> = (0..total).collect();
        if total > max_coords {
            // partial Fisher–Yates for a uniform subsample
            for i in 0..max_coords {
                let j = rng.random_range(i..total);
                coords.swap(i, j);
            }
            coords.truncate(max_coords);
        }
        let mut worst = 0.0f64;
        for &flat in &coords {
            let (r, c) = (flat / ana.ncols(), flat % ana.ncols());
            let orig = params[pi].1[[r, c]];

            params[pi].1[[r, c]] = orig + eps;
            let (mut tp, lp, _) = build(params)?;
            tp.forward()?;
            let fp = tp.scalar(lp)?;

            params[pi].1[[r, c]] = orig - eps;
            let (mut tm, lm, _) = build(params)?;
            tm.forward()?;
            let fm = tm.scalar(lm)?;

            params[pi].1[[r, c]] = orig;

            let numeric = (fp - fm) / (2.0 * eps);
            let a = ana[[r, c]];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
            worst = worst.max(rel);
        }
        max_rel = max_rel.max(worst);
        per_param.push((params[pi].0.clone(), worst));
    }
    Ok(GradCheckReport {
        per_param,
        max_rel_error: max_rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sigmoid_of_zero_is_half() {
        let mut t = Tape::new();
        let x = t.constant(DMat::zeros((2, 3)));
        let s = t.sigmoid(x);
        t.forward().unwrap();
        assert!(t.output(s).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn row_softmax_of_equal_logits_is_uniform() {
        let mut t = Tape::new();
        let x = t.constant(DMat::from_elem((3, 4), 7.0));
        let s = t.row_softmax(x);
        t.forward().unwrap();
        assert!(t.output(s).iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn sparse_identity_times_dense_is_identity() {
        let x = array![[1.0, -2.0], [0.5, 3.0], [0.0, 4.0]];
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let y = t.spmm(Arc::new(CsrMatrix::identity(3)), xv).unwrap();
        t.forward().unwrap();
        assert_eq!(t.output(y), &x);
    }

    #[test]
    fn grad_of_half_squared_norm_is_the_matrix() {
        let w = array![[1.0, -2.0], [3.0, 0.5]];
        let mut t = Tape::new();
        let wv = t.param(w.clone());
        let sq = t.mul(wv, wv).unwrap();
        let sum = t.sum_all(sq);
        let loss = t.scale(sum, 0.5);
        t.forward().unwrap();
        let g = t.backward(loss).unwrap();
        let gw = g.get(&t, wv);
        assert!((&gw - &w).iter().all(|&d| d.abs() < 1e-14));
    }

    #[test]
    fn grad_of_sum_sigmoid_at_zero_is_quarter() {
        let mut t = Tape::new();
        let x = t.param(DMat::zeros((2, 2)));
        let s = t.sigmoid(x);
        let loss = t.sum_all(s);
        t.forward().unwrap();
        let g = t.backward(loss).unwrap();
        assert!(g.get(&t, x).iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let x = t.param(DMat::zeros((2, 2)));
        t.forward().unwrap();
        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn unreached_parameter_gets_zero_gradient() {
        let mut t = Tape::new();
        let a = t.param(array![[2.0]]);
        let b = t.param(array![[5.0]]);
        let loss = t.scale(a, 3.0);
        t.forward().unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(&t, b), array![[0.0]]);
        assert_eq!(g.get(&t, a), array![[3.0]]);
    }

    #[test]
    fn softmax_row_gradient_sums_to_zero() {
        // constant upstream adjoint per row -> adjoint rows sum to zero
        let mut t = Tape::new();
        let x = t.param(array![[0.3, -1.2, 2.0], [0.0, 0.1, -0.1]]);
        let s = t.row_softmax(x);
        let picked = t.gather_cols(s, Arc::new(vec![0])).unwrap();
        let loss = t.sum_all(picked);
        t.forward().unwrap();
        let _ = loss;
        // use a uniform upstream instead: sum of all entries
        let mut t2 = Tape::new();
        let x2 = t2.param(array![[0.3, -1.2, 2.0], [0.0, 0.1, -0.1]]);
        let s2 = t2.row_softmax(x2);
        let loss2 = t2.sum_all(s2);
        t2.forward().unwrap();
        let g = t2.backward(loss2).unwrap();
        for row in g.get(&t2, x2).rows() {
            assert!(row.sum().abs() < 1e-14);
        }
    }

    #[test]
    fn dropout_refused_by_grad_check() {
        let mut params = vec![("w".to_string(), array![[1.0, 2.0]])];
        let err = grad_check(&mut params, 1e-4, 8, 0, |ps| {
            let mut t = Tape::new();
            let w = t.param(ps[0].1.clone());
            let d = t.dropout(w, 0.5, 1)?;
            let loss = t.sum_all(d);
            Ok((t, loss, vec![w]))
        })
        .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn linear_map_grad_check_is_exact() {
        let mut params = vec![(
            "w".to_string(),
            array![[0.5, -1.0, 2.0], [1.5, 0.25, -0.75]],
        )];
        let x = array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]];
        let report = grad_check(&mut params, 1e-4, 64, 7, move |ps| {
            let mut t = Tape::new();
            let w = t.param(ps[0].1.clone());
            let xv = t.constant(x.clone());
            let y = t.matmul(w, xv)?;
            let loss = t.sum_all(y);
            Ok((t, loss, vec![w]))
        })
        .unwrap();
        assert!(
            report.max_rel_error < 1e-10,
            "linear map error {}",
            report.max_rel_error
        );
    }

    #[test]
    fn random_three_layer_expression_matches_finite_differences() {
        use rand::rngs::SmallRng;
        use rand::SeedableRng;
        let mut rng = SmallRng::seed_from_u64(42);
        let mut randmat = |r: usize, c: usize| {
            DMat::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
        };
        let x = randmat(5, 4);
        let labels = Arc::new(vec![0usize, 2, 1, 0, 2]);
        let mut params = vec![
            ("w1".to_string(), randmat(4, 6)),
            ("b1".to_string(), randmat(1, 6)),
            ("w2".to_string(), randmat(6, 6)),
            ("w3".to_string(), randmat(6, 3)),
        ];
        let report = grad_check(&mut params, 1e-4, 64, 3, move |ps| {
            let mut t = Tape::new();
            let xv = t.constant(x.clone());
            let w1 = t.param(ps[0].1.clone());
            let b1 = t.param(ps[1].1.clone());
            let w2 = t.param(ps[2].1.clone());
            let w3 = t.param(ps[3].1.clone());
            let h1 = t.matmul(xv, w1)?;
            let h1 = t.add_row(h1, b1)?;
            let h1 = t.relu(h1);
            let h2 = t.matmul(h1, w2)?;
            let h2 = t.sigmoid(h2);
            let logits = t.matmul(h2, w3)?;
            let ce = t.ce_from_logits(logits, labels.clone())?;
            let loss = t.mean_all(ce);
            Ok((t, loss, vec![w1, b1, w2, w3]))
        })
        .unwrap();
        assert!(
            report.max_rel_error < 1e-4,
            "three-layer expression error {}",
            report.max_rel_error
        );
    }

    #[test]
    fn every_primitive_matches_finite_differences() {
        use rand::rngs::SmallRng;
        use rand::SeedableRng;
        let mut rng = SmallRng::seed_from_u64(9);
        let mut randmat = |r: usize, c: usize| {
            DMat::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
        };
        let sparse = Arc::new(
            CsrMatrix::from_triplets(4, 4, vec![(0, 0, 1.5), (1, 2, -0.5), (2, 1, 2.0), (3, 3, 1.0)])
                .unwrap(),
        );
        let targets = Arc::new(DMat::from_shape_fn((4, 3), |(i, j)| {
            if (i + j) % 2 == 0 {
                1.0
            } else {
                0.0
            }
        }));
        let labels = Arc::new(vec![0usize, 1, 2, 1]);
        let idx_rows = Arc::new(vec![2usize, 0, 3, 1, 2]);
        let idx_cols = Arc::new(vec![1usize, 1, 0]);
        let mut params = vec![
            ("a".to_string(), randmat(4, 3)),
            ("b".to_string(), randmat(4, 3)),
            ("row".to_string(), randmat(1, 3)),
            ("col".to_string(), randmat(4, 1)),
            ("m".to_string(), randmat(3, 4)),
        ];
        let report = grad_check(&mut params, 1e-5, 64, 11, move |ps| {
            let mut t = Tape::new();
            let a = t.param(ps[0].1.clone());
            let b = t.param(ps[1].1.clone());
            let row = t.param(ps[2].1.clone());
            let col = t.param(ps[3].1.clone());
            let m = t.param(ps[4].1.clone());

            let s1 = t.add(a, b)?;
            let s2 = t.sub(s1, b)?;
            let s3 = t.mul(s2, a)?;
            let s4 = t.add_row(s3, row)?;
            let s5 = t.mul_col(col, s4)?;
            let s6 = t.scale(s5, 0.7);
            let mm = t.matmul(s6, m)?; // 4x4
            let sp = t.spmm(sparse.clone(), mm)?; // 4x4
            let cat = t.concat_cols(sp, s6)?; // 4x7
            let gr = t.gather_rows(cat, idx_rows.clone())?; // 5x7
            let gc = t.gather_cols(gr, idx_cols.clone())?; // 5x3
            let sm = t.row_softmax(gc);
            let sg = t.sigmoid(sm);
            let rl = t.relu(sg);
            let mr = t.mean_rows(rl); // 1x3
            let sc = t.sum_cols(rl); // 5x1
            let p = t.sigmoid(s6);
            let bce = t.bce_from_prob(p, targets.clone())?;
            let ce = t.ce_from_logits(mm, labels.clone())?;

            let l1 = t.sum_all(bce);
            let l2 = t.mean_all(ce);
            let l3 = t.sum_all(mr);
            let l4 = t.mean_all(sc);
            let l12 = t.add(l1, l2)?;
            let l34 = t.add(l3, l4)?;
            let loss = t.add(l12, l34)?;
            Ok((t, loss, vec![a, b, row, col, m]))
        })
        .unwrap();
        assert!(
            report.max_rel_error < 1e-6,
            "primitive adjoint error {}",
            report.max_rel_error
        );
    }

    #[test]
    fn forward_is_deterministic_with_fixed_dropout_seed() {
        let run = || {
            let mut t = Tape::new();
            let x = t.constant(DMat::from_elem((8, 8), 1.0));
            let d = t.dropout(x, 0.5, 1234).unwrap();
            let s = t.sum_all(d);
            t.forward().unwrap();
            t.scalar(s).unwrap()
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }
}
