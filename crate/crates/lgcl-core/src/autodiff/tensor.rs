//! Tape-based tensors. Ops record nodes on an append-only tape (already a
//! topological order); `backward` sweeps it once in reverse, accumulating
//! gradients additively on fan-out.

use std::cell::RefCell;
use std::sync::Arc;

use ndarray::{Array2, Axis};

use crate::{Error, Result};

const NONE: usize = usize::MAX;
const COSINE_EPS: f64 = 1e-12;

/// A dense 2-D value plus its handle into the tape that produced it.
#[derive(Clone)]
pub struct Tensor {
    value: Arc<Array2<f64>>,
    pub(crate) idx: usize,
}

impl Tensor {
    pub fn value(&self) -> &Array2<f64> {
        &self.value
    }

    pub fn nrows(&self) -> usize {
        self.value.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.value.ncols()
    }

    pub fn shape2(&self) -> (usize, usize) {
        (self.value.nrows(), self.value.ncols())
    }

    /// The single element of a 1x1 tensor.
    pub fn scalar(&self) -> f64 {
        assert_eq!(self.shape2(), (1, 1), "scalar() on non-1x1 tensor");
        self.value[(0, 0)]
    }

    /// Tape handle, usable as a backward seed target.
    pub fn node_id(&self) -> usize {
        self.idx
    }
}

enum Op {
    Leaf,
    Matmul,
    Add,
    AddRowBroadcast,
    Sub,
    MulElem,
    Scale(f64),
    Relu,
    Tanh,
    Sigmoid,
    Exp,
    Log,
    ConcatCols(usize),
    ConcatRows(usize),
    GatherRows(Vec<usize>),
    SumAll,
    MeanAll,
    SumRows,
    Transpose,
    Reshape,
    CosineMatrix,
    BceWithLogits(Array2<f64>),
}

struct Node {
    op: Op,
    parents: [usize; 2],
    value: Arc<Array2<f64>>,
}

/// Recording tape. Single-owner: not shared across threads (a whole tape may
/// move between threads). `Tape::checked()` rejects non-finite leaf values
/// and zero-norm cosine inputs; the default guards cosine norms with a small
/// epsilon instead.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    checked: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Per-node gradients produced by a backward sweep. Only leaves and seeded
/// nodes retain entries.
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn wrt(&self, t: &Tensor) -> Option<&Array2<f64>> {
        self.grads.get(t.idx).and_then(|g| g.as_ref())
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            checked: false,
        }
    }

    pub fn checked() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            checked: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, op: Op, parents: [usize; 2], value: Array2<f64>) -> Tensor {
        let value = Arc::new(value);
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op,
            parents,
            value: Arc::clone(&value),
        });
        Tensor {
            value,
            idx: nodes.len() - 1,
        }
    }

    /// Track a new input value (parameter, features, constants).
    pub fn leaf(&self, value: Array2<f64>) -> Result<Tensor> {
        if self.checked && !value.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("leaf tensor".into()));
        }
        Ok(self.push(Op::Leaf, [NONE, NONE], value))
    }

    pub fn leaf_from(&self, value: &Array2<f64>) -> Result<Tensor> {
        self.leaf(value.clone())
    }

    pub fn zeros(&self, rows: usize, cols: usize) -> Tensor {
        self.push(Op::Leaf, [NONE, NONE], Array2::zeros((rows, cols)))
    }

    pub fn matmul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.ncols() != b.nrows() {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: a.shape2(),
                right: b.shape2(),
            });
        }
        let v = a.value().dot(b.value());
        Ok(self.push(Op::Matmul, [a.idx, b.idx], v))
    }

    /// Elementwise add; `b` may be `1 x m` against `n x m` (bias row).
    pub fn add(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.shape2() == b.shape2() {
            let v = a.value() + b.value();
            return Ok(self.push(Op::Add, [a.idx, b.idx], v));
        }
        if b.nrows() == 1 && b.ncols() == a.ncols() {
            let v = a.value() + &b.value().row(0);
            return Ok(self.push(Op::AddRowBroadcast, [a.idx, b.idx], v));
        }
        Err(Error::ShapeMismatch {
            op: "add",
            left: a.shape2(),
            right: b.shape2(),
        })
    }

    pub fn sub(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.shape2() != b.shape2() {
            return Err(Error::ShapeMismatch {
                op: "sub",
                left: a.shape2(),
                right: b.shape2(),
            });
        }
        let v = a.value() - b.value();
        Ok(self.push(Op::Sub, [a.idx, b.idx], v))
    }

    pub fn mul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.shape2() != b.shape2() {
            return Err(Error::ShapeMismatch {
                op: "mul",
                left: a.shape2(),
                right: b.shape2(),
            });
        }
        let v = a.value() * b.value();
        Ok(self.push(Op::MulElem, [a.idx, b.idx], v))
    }

    pub fn scale(&self, a: &Tensor, k: f64) -> Tensor {
        let v = a.value() * k;
        self.push(Op::Scale(k), [a.idx, NONE], v)
    }

    pub fn relu(&self, a: &Tensor) -> Tensor {
        let v = a.value().mapv(|x| x.max(0.0));
        self.push(Op::Relu, [a.idx, NONE], v)
    }

    pub fn tanh(&self, a: &Tensor) -> Tensor {
        let v = a.value().mapv(f64::tanh);
        self.push(Op::Tanh, [a.idx, NONE], v)
    }

    pub fn sigmoid(&self, a: &Tensor) -> Tensor {
        let v = a.value().mapv(stable_sigmoid);
        self.push(Op::Sigmoid, [a.idx, NONE], v)
    }

    pub fn exp(&self, a: &Tensor) -> Tensor {
        let v = a.value().mapv(f64::exp);
        self.push(Op::Exp, [a.idx, NONE], v)
    }

    pub fn log(&self, a: &Tensor) -> Tensor {
        let v = a.value().mapv(f64::ln);
        self.push(Op::Log, [a.idx, NONE], v)
    }

    pub fn concat_cols(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.nrows() != b.nrows() {
            return Err(Error::ShapeMismatch {
                op: "concat_cols",
                left: a.shape2(),
                right: b.shape2(),
            });
        }
        let mut v = Array2::zeros((a.nrows(), a.ncols() + b.ncols()));
        v.slice_mut(ndarray::s![.., ..a.ncols()]).assign(a.value());
        v.slice_mut(ndarray::s![.., a.ncols()..]).assign(b.value());
        Ok(self.push(Op::ConcatCols(a.ncols()), [a.idx, b.idx], v))
    }

    pub fn concat_rows(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.ncols() != b.ncols() {
            return Err(Error::ShapeMismatch {
                op: "concat_rows",
                left: a.shape2(),
                right: b.shape2(),
            });
        }
        let mut v = Array2::zeros((a.nrows() + b.nrows(), a.ncols()));
        v.slice_mut(ndarray::s![..a.nrows(), ..]).assign(a.value());
        v.slice_mut(ndarray::s![a.nrows().., ..]).assign(b.value());
        Ok(self.push(Op::ConcatRows(a.nrows()), [a.idx, b.idx], v))
    }

    /// Select rows by index; duplicates allowed (backward accumulates).
    pub fn gather_rows(&self, a: &Tensor, indices: &[usize]) -> Result<Tensor> {
        for &i in indices {
            if i >= a.nrows() {
                return Err(Error::InvalidArgument(format!(
                    "gather_rows index {i} out of range ({} rows)",
                    a.nrows()
                )));
            }
        }
        let mut v = Array2::zeros((indices.len(), a.ncols()));
        for (r, &i) in indices.iter().enumerate() {
            v.row_mut(r).assign(&a.value().row(i));
        }
        Ok(self.push(Op::GatherRows(indices.to_vec()), [a.idx, NONE], v))
    }

    pub fn sum(&self, a: &Tensor) -> Tensor {
        let v = Array2::from_elem((1, 1), a.value().sum());
        self.push(Op::SumAll, [a.idx, NONE], v)
    }

    pub fn mean(&self, a: &Tensor) -> Tensor {
        let n = (a.nrows() * a.ncols()) as f64;
        let v = Array2::from_elem((1, 1), a.value().sum() / n);
        self.push(Op::MeanAll, [a.idx, NONE], v)
    }

    /// Row sums: `n x m -> n x 1`.
    pub fn sum_rows(&self, a: &Tensor) -> Tensor {
        let sums = a.value().sum_axis(Axis(1));
        let v = sums.insert_axis(Axis(1));
        self.push(Op::SumRows, [a.idx, NONE], v)
    }

    pub fn transpose(&self, a: &Tensor) -> Tensor {
        let v = a.value().t().to_owned();
        self.push(Op::Transpose, [a.idx, NONE], v)
    }

    pub fn reshape(&self, a: &Tensor, rows: usize, cols: usize) -> Result<Tensor> {
        if rows * cols != a.nrows() * a.ncols() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: a.shape2(),
                right: (rows, cols),
            });
        }
        let flat: Vec<f64> = a.value().iter().copied().collect();
        let v = Array2::from_shape_vec((rows, cols), flat).expect("checked size");
        Ok(self.push(Op::Reshape, [a.idx, NONE], v))
    }

    /// Pairwise cosine similarities between the rows of `a` and of `b`:
    /// `(n x d, m x d) -> n x m`. Zero-norm rows error in checked mode and
    /// are epsilon-guarded otherwise.
    pub fn cosine_matrix(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.ncols() != b.ncols() {
            return Err(Error::ShapeMismatch {
                op: "cosine_matrix",
                left: a.shape2(),
                right: b.shape2(),
            });
        }
        let na = row_norms(a.value());
        let nb = row_norms(b.value());
        if self.checked && (na.iter().any(|&x| x == 0.0) || nb.iter().any(|&x| x == 0.0)) {
            return Err(Error::InvalidArgument(
                "cosine of zero-norm vector (checked mode)".into(),
            ));
        }
        let mut v = a.value().dot(&b.value().t());
        for (i, mut row) in v.rows_mut().into_iter().enumerate() {
            let da = na[i].max(COSINE_EPS);
            for (j, x) in row.iter_mut().enumerate() {
                *x /= da * nb[j].max(COSINE_EPS);
            }
        }
        Ok(self.push(Op::CosineMatrix, [a.idx, b.idx], v))
    }

    /// Cosine similarity of two row vectors, as a 1x1 tensor.
    pub fn cosine_similarity(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.nrows() != 1 || b.nrows() != 1 {
            return Err(Error::ShapeMismatch {
                op: "cosine_similarity",
                left: a.shape2(),
                right: b.shape2(),
            });
        }
        self.cosine_matrix(a, b)
    }

    /// Elementwise binary cross-entropy from logits against constant 0/1
    /// targets, in the log-sum-exp-stable form. Backward is `sigma(x) - y`.
    pub fn bce_with_logits(&self, logits: &Tensor, targets: &Array2<f64>) -> Result<Tensor> {
        if logits.shape2() != (targets.nrows(), targets.ncols()) {
            return Err(Error::ShapeMismatch {
                op: "bce_with_logits",
                left: logits.shape2(),
                right: (targets.nrows(), targets.ncols()),
            });
        }
        let mut v = Array2::zeros(logits.shape2());
        for ((r, c), out) in v.indexed_iter_mut() {
            let x = logits.value()[(r, c)];
            let y = targets[(r, c)];
            *out = x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
        }
        Ok(self.push(
            Op::BceWithLogits(targets.clone()),
            [logits.idx, NONE],
            v,
        ))
    }

    /// Backward from a 1x1 output with seed 1.
    pub fn backward_scalar(&self, out: &Tensor) -> Result<Gradients> {
        if out.shape2() != (1, 1) {
            return Err(Error::InvalidArgument(format!(
                "backward_scalar needs a 1x1 output, got {:?}",
                out.shape2()
            )));
        }
        self.backward(&[(out.idx, Array2::from_elem((1, 1), 1.0))])
    }

    /// Reverse sweep seeded with cotangents at arbitrary nodes. Each node is
    /// visited once; fan-out gradients accumulate additively. Leaf gradients
    /// are retained in the result.
    pub fn backward(&self, seeds: &[(usize, Array2<f64>)]) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; nodes.len()];
        for (idx, seed) in seeds {
            let node = nodes.get(*idx).ok_or_else(|| {
                Error::InvalidArgument(format!("backward seed {idx} out of range"))
            })?;
            let shape = (node.value.nrows(), node.value.ncols());
            if (seed.nrows(), seed.ncols()) != shape {
                return Err(Error::ShapeMismatch {
                    op: "backward seed",
                    left: (seed.nrows(), seed.ncols()),
                    right: shape,
                });
            }
            accumulate(&mut grads[*idx], seed.clone());
        }

        for i in (0..nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g); // keep for the caller
                    continue;
                }
                Op::Matmul => {
                    let a = &nodes[node.parents[0]].value;
                    let b = &nodes[node.parents[1]].value;
                    accumulate(&mut grads[node.parents[0]], g.dot(&b.t()));
                    accumulate(&mut grads[node.parents[1]], a.t().dot(&g));
                }
                Op::Add => {
                    accumulate(&mut grads[node.parents[0]], g.clone());
                    accumulate(&mut grads[node.parents[1]], g);
                }
                Op::AddRowBroadcast => {
                    let col_sums = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads[node.parents[1]], col_sums);
                    accumulate(&mut grads[node.parents[0]], g);
                }
                Op::Sub => {
                    accumulate(&mut grads[node.parents[0]], g.clone());
                    accumulate(&mut grads[node.parents[1]], -&g);
                }
                Op::MulElem => {
                    let a = &nodes[node.parents[0]].value;
                    let b = &nodes[node.parents[1]].value;
                    accumulate(&mut grads[node.parents[0]], &g * b.as_ref());
                    accumulate(&mut grads[node.parents[1]], &g * a.as_ref());
                }
                Op::Scale(k) => {
                    accumulate(&mut grads[node.parents[0]], &g * *k);
                }
                Op::Relu => {
                    let x = &nodes[node.parents[0]].value;
                    let mask = x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    accumulate(&mut grads[node.parents[0]], &g * &mask);
                }
                Op::Tanh => {
                    let y = &node.value;
                    let d = y.mapv(|v| 1.0 - v * v);
                    accumulate(&mut grads[node.parents[0]], &g * &d);
                }
                Op::Sigmoid => {
                    let y = &node.value;
                    let d = y.mapv(|v| v * (1.0 - v));
                    accumulate(&mut grads[node.parents[0]], &g * &d);
                }
                Op::Exp => {
                    accumulate(&mut grads[node.parents[0]], &g * node.value.as_ref());
                }
                Op::Log => {
                    let x = &nodes[node.parents[0]].value;
                    accumulate(&mut grads[node.parents[0]], &g / x.as_ref());
                }
                Op::ConcatCols(lc) => {
                    let ga = g.slice(ndarray::s![.., ..*lc]).to_owned();
                    let gb = g.slice(ndarray::s![.., *lc..]).to_owned();
                    accumulate(&mut grads[node.parents[0]], ga);
                    accumulate(&mut grads[node.parents[1]], gb);
                }
                Op::ConcatRows(lr) => {
                    let ga = g.slice(ndarray::s![..*lr, ..]).to_owned();
                    let gb = g.slice(ndarray::s![*lr.., ..]).to_owned();
                    accumulate(&mut grads[node.parents[0]], ga);
                    accumulate(&mut grads[node.parents[1]], gb);
                }
                Op::GatherRows(indices) => {
                    let parent = &nodes[node.parents[0]].value;
                    let mut ga = Array2::zeros((parent.nrows(), parent.ncols()));
                    for (r, &src) in indices.iter().enumerate() {
                        let mut row = ga.row_mut(src);
                        row += &g.row(r);
                    }
                    accumulate(&mut grads[node.parents[0]], ga);
                }
                Op::SumAll => {
                    let parent = &nodes[node.parents[0]].value;
                    let ga = Array2::from_elem((parent.nrows(), parent.ncols()), g[(0, 0)]);
                    accumulate(&mut grads[node.parents[0]], ga);
                }
                Op::MeanAll => {
                    let parent = &nodes[node.parents[0]].value;
                    let n = (parent.nrows() * parent.ncols()) as f64;
                    let ga = Array2::from_elem((parent.nrows(), parent.ncols()), g[(0, 0)] / n);
                    accumulate(&mut grads[node.parents[0]], ga);
                }
                Op::SumRows => {
                    let parent = &nodes[node.parents[0]].value;
                    let mut ga = Array2::zeros((parent.nrows(), parent.ncols()));
                    for (r, mut row) in ga.rows_mut().into_iter().enumerate() {
                        row.fill(g[(r, 0)]);
                    }
                    accumulate(&mut grads[node.parents[0]], ga);
                }
                Op::Transpose => {
                    accumulate(&mut grads[node.parents[0]], g.t().to_owned());
                }
                Op::Reshape => {
                    let parent = &nodes[node.parents[0]].value;
                    let flat: Vec<f64> = g.iter().copied().collect();
                    let ga = Array2::from_shape_vec((parent.nrows(), parent.ncols()), flat)
                        .expect("same size");
                    accumulate(&mut grads[node.parents[0]], ga);
                }
                Op::CosineMatrix => {
                    let a = &nodes[node.parents[0]].value;
                    let b = &nodes[node.parents[1]].value;
                    let m = &node.value;
                    let na = row_norms(a).mapv(|x| x.max(COSINE_EPS));
                    let nb = row_norms(b).mapv(|x| x.max(COSINE_EPS));
                    let mut a_hat = a.as_ref().clone();
                    for (i, mut row) in a_hat.rows_mut().into_iter().enumerate() {
                        row /= na[i];
                    }
                    let mut b_hat = b.as_ref().clone();
                    for (j, mut row) in b_hat.rows_mut().into_iter().enumerate() {
                        row /= nb[j];
                    }
                    let gm = &g * m.as_ref();
                    let row_dots = gm.sum_axis(Axis(1)); // n
                    let col_dots = gm.sum_axis(Axis(0)); // m
                    let mut ga = g.dot(&b_hat);
                    for (i, mut row) in ga.rows_mut().into_iter().enumerate() {
                        row -= &(&a_hat.row(i) * row_dots[i]);
                        row /= na[i];
                    }
                    let mut gb = g.t().dot(&a_hat);
                    for (j, mut row) in gb.rows_mut().into_iter().enumerate() {
                        row -= &(&b_hat.row(j) * col_dots[j]);
                        row /= nb[j];
                    }
                    accumulate(&mut grads[node.parents[0]], ga);
                    accumulate(&mut grads[node.parents[1]], gb);
                }
                Op::BceWithLogits(targets) => {
                    let x = &nodes[node.parents[0]].value;
                    let mut ga = Array2::zeros(g.dim());
                    for ((r, c), out) in ga.indexed_iter_mut() {
                        *out = g[(r, c)] * (stable_sigmoid(x[(r, c)]) - targets[(r, c)]);
                    }
                    accumulate(&mut grads[node.parents[0]], ga);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
    match slot {
        Some(existing) => *existing += &g,
        None => *slot = Some(g),
    }
}

fn row_norms(a: &Array2<f64>) -> ndarray::Array1<f64> {
    a.rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .collect::<ndarray::Array1<f64>>()
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
