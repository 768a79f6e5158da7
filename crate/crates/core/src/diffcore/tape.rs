//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive as it is evaluated. Nodes are appended
//! in evaluation order, so walking the node list backwards is a valid reverse
//! topological order and [`Tape::backward`] needs no explicit sort.
//!
//! Binary elementwise primitives (`add`, `sub`, `mul`) accept a `1 × C` right
//! operand against an `R × C` left operand and broadcast it over rows; this
//! covers layer biases and per-column gains.

use ndarray::linalg::general_mat_mul;
use ndarray::{concatenate, s, Array2, ArrayView2, Axis, Zip};

use super::tensor::all_finite;
use super::{DiffError, Tensor};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Transpose(Var),
    LeakyRelu(Var, f64),
    Relu(Var),
    Abs(Var),
    Sum(Var),
    Pow(Var, f64),
    FrobeniusSq(Var),
    RowNormalize(Var),
    ConcatCols(Var, Var),
    SliceRows(Var, usize, usize),
    Reshape(Var),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

/// Ordered record of primitive evaluations with their values.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Adjoints of the leaves reached by a backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient with respect to `var`, zero-filled when the output does not
    /// depend on it. Fails if the adjoint picked up a non-finite entry.
    pub fn wrt(&self, var: Var) -> Result<Tensor, DiffError> {
        match self.grads.get(var.0).and_then(Option::as_ref) {
            Some(g) => Tensor::new(g.clone()).map_err(|_| DiffError::NonFinite { op: "backward" }),
            None => {
                let (r, c) = self.shapes[var.0];
                Ok(Tensor::zeros(r, c))
            }
        }
    }

    /// Raw adjoint array, `None` when the output does not depend on `var`.
    pub fn raw(&self, var: Var) -> Option<&Array2<f64>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Moves the adjoint out, zero-filled when absent. Does not check finiteness.
    pub fn take_array(&mut self, var: Var) -> Array2<f64> {
        self.grads[var.0]
            .take()
            .unwrap_or_else(|| Array2::zeros(self.shapes[var.0]))
    }
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

    /// Records a differentiable input.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t.into_inner(), Op::Leaf, true)
    }

    /// Records an input that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t.into_inner(), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Copy of a node's value as a tensor.
    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.nodes[v.0].value.clone()).expect("tape values are finite")
    }

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    fn push(&mut self, value: Array2<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, value: Array2<f64>, op: Op, name: &'static str) -> Result<Var, DiffError> {
        if !all_finite(&value.view()) {
            return Err(DiffError::NonFinite { op: name });
        }
        let needs_grad = op_inputs(op).iter().flatten().any(|v| self.nodes[v.0].needs_grad);
        Ok(self.push(value, op, needs_grad))
    }

    fn check_elementwise(&self, op: &'static str, a: Var, b: Var) -> Result<(), DiffError> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if (ra, ca) == (rb, cb) || (rb == 1 && cb == ca) {
            Ok(())
        } else {
            Err(DiffError::Shape {
                op,
                lhs: (ra, ca),
                rhs: (rb, cb),
            })
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if ca != rb {
            return Err(DiffError::Shape {
                op: "matmul",
                lhs: (ra, ca),
                rhs: (rb, cb),
            });
        }
        let value = self.value(a).dot(self.value(b));
        self.record(value, Op::MatMul(a, b), "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.check_elementwise("add", a, b)?;
        let value = self.value(a) + self.value(b);
        self.record(value, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.check_elementwise("sub", a, b)?;
        let value = self.value(a) - self.value(b);
        self.record(value, Op::Sub(a, b), "sub")
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.check_elementwise("mul", a, b)?;
        let value = self.value(a) * self.value(b);
        self.record(value, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, DiffError> {
        let value = self.value(a) * c;
        self.record(value, Op::Scale(a, c), "scale")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, DiffError> {
        let value = self.value(a).t().as_standard_layout().into_owned();
        self.record(value, Op::Transpose(a), "transpose")
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var, DiffError> {
        let value = self.value(a).mapv(|x| if x >= 0.0 { x } else { slope * x });
        self.record(value, Op::LeakyRelu(a, slope), "leaky_relu")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, DiffError> {
        let value = self.value(a).mapv(|x| x.max(0.0));
        self.record(value, Op::Relu(a), "relu")
    }

    pub fn abs(&mut self, a: Var) -> Result<Var, DiffError> {
        let value = self.value(a).mapv(f64::abs);
        self.record(value, Op::Abs(a), "abs")
    }

    /// Sum of all entries, as a `1 × 1` node.
    pub fn sum(&mut self, a: Var) -> Result<Var, DiffError> {
        let value = Array2::from_elem((1, 1), self.value(a).sum());
        self.record(value, Op::Sum(a), "sum")
    }

    /// Elementwise power with a constant exponent.
    pub fn pow(&mut self, a: Var, p: f64) -> Result<Var, DiffError> {
        let value = self.value(a).mapv(|x| x.powf(p));
        self.record(value, Op::Pow(a, p), "pow")
    }

    /// Squared Frobenius norm, as a `1 × 1` node.
    pub fn frobenius_sq(&mut self, a: Var) -> Result<Var, DiffError> {
        let fro = self.value(a).iter().map(|x| x * x).sum();
        self.record(Array2::from_elem((1, 1), fro), Op::FrobeniusSq(a), "frobenius_sq")
    }

    /// Divides each row by its sum. Rows summing to exactly zero map to the
    /// uniform row `1/C` and pass no gradient.
    pub fn row_normalize(&mut self, a: Var) -> Result<Var, DiffError> {
        let mut value = self.value(a).clone();
        let cols = value.ncols() as f64;
        for mut row in value.rows_mut() {
            let total: f64 = row.sum();
            if total == 0.0 {
                row.fill(1.0 / cols);
            } else {
                row.mapv_inplace(|x| x / total);
            }
        }
        self.record(value, Op::RowNormalize(a), "row_normalize")
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if ra != rb {
            return Err(DiffError::Shape {
                op: "concat_cols",
                lhs: (ra, ca),
                rhs: (rb, cb),
            });
        }
        let value = concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()]).expect("row counts checked");
        self.record(value, Op::ConcatCols(a, b), "concat_cols")
    }

    /// Rows `start..end` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var, DiffError> {
        let shape = self.shape(a);
        if start > end || end > shape.0 {
            return Err(DiffError::Shape {
                op: "slice_rows",
                lhs: shape,
                rhs: (start, end),
            });
        }
        let value = self.value(a).slice(s![start..end, ..]).to_owned();
        self.record(value, Op::SliceRows(a, start, end), "slice_rows")
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var, DiffError> {
        let shape = self.shape(a);
        if shape.0 * shape.1 != rows * cols {
            return Err(DiffError::Shape {
                op: "reshape",
                lhs: shape,
                rhs: (rows, cols),
            });
        }
        let value = self
            .value(a)
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((rows, cols))
            .expect("element count checked");
        self.record(value, Op::Reshape(a), "reshape")
    }

    /// Propagates `seed` (the adjoint of `output`) back to every leaf.
    ///
    /// A tape supports a single backward pass.
    pub fn backward(&mut self, output: Var, seed: &Tensor) -> Result<Gradients, DiffError> {
        if self.consumed {
            return Err(DiffError::TapeConsumed);
        }
        let out_shape = self.shape(output);
        if seed.shape() != out_shape {
            return Err(DiffError::Shape {
                op: "backward seed",
                lhs: out_shape,
                rhs: seed.shape(),
            });
        }
        self.consumed = true;

        let shapes: Vec<_> = self.nodes.iter().map(|n| n.value.dim()).collect();
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(seed.values().clone());

        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node.op, i, g, &mut grads);
        }
        Ok(Gradients { grads, shapes })
    }

    /// Backward pass from a scalar output with unit seed.
    pub fn backward_scalar(&mut self, output: Var) -> Result<Gradients, DiffError> {
        let seed = Tensor::filled(1, 1, 1.0);
        self.backward(output, &seed)
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, op: Op, idx: usize, g: Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match op {
            Op::Leaf => grads[idx] = Some(g),
            Op::MatMul(a, b) => {
                if self.wants(a) {
                    accumulate_product(&mut grads[a.0], g.view(), val(b).t());
                }
                if self.wants(b) {
                    accumulate_product(&mut grads[b.0], val(a).t(), g.view());
                }
            }
            Op::Add(a, b) => {
                if self.wants(b) {
                    accumulate(&mut grads[b.0], reduce_broadcast(&g, val(b).dim()));
                }
                if self.wants(a) {
                    accumulate(&mut grads[a.0], g);
                }
            }
            Op::Sub(a, b) => {
                if self.wants(b) {
                    accumulate(&mut grads[b.0], -reduce_broadcast(&g, val(b).dim()));
                }
                if self.wants(a) {
                    accumulate(&mut grads[a.0], g);
                }
            }
            Op::Mul(a, b) => {
                if self.wants(a) {
                    accumulate(&mut grads[a.0], &g * val(b));
                }
                if self.wants(b) {
                    let full = &g * val(a);
                    accumulate(&mut grads[b.0], reduce_broadcast(&full, val(b).dim()));
                }
            }
            Op::Scale(a, c) => accumulate(&mut grads[a.0], g * c),
            Op::Transpose(a) => accumulate(&mut grads[a.0], g.t().as_standard_layout().into_owned()),
            Op::LeakyRelu(a, slope) => {
                let mut g = g;
                Zip::from(&mut g).and(val(a)).for_each(|gi, &x| {
                    if x < 0.0 {
                        *gi *= slope;
                    }
                });
                accumulate(&mut grads[a.0], g);
            }
            Op::Relu(a) => {
                let mut g = g;
                Zip::from(&mut g).and(val(a)).for_each(|gi, &x| {
                    if x < 0.0 {
                        *gi = 0.0;
                    }
                });
                accumulate(&mut grads[a.0], g);
            }
            Op::Abs(a) => {
                let mut g = g;
                Zip::from(&mut g).and(val(a)).for_each(|gi, &x| {
                    if x < 0.0 {
                        *gi = -*gi;
                    }
                });
                accumulate(&mut grads[a.0], g);
            }
            Op::Sum(a) => {
                let g0 = g[[0, 0]];
                accumulate(&mut grads[a.0], Array2::from_elem(val(a).dim(), g0));
            }
            Op::Pow(a, p) => {
                let mut g = g;
                Zip::from(&mut g)
                    .and(val(a))
                    .for_each(|gi, &x| *gi *= p * x.powf(p - 1.0));
                accumulate(&mut grads[a.0], g);
            }
            Op::FrobeniusSq(a) => {
                let g0 = 2.0 * g[[0, 0]];
                accumulate(&mut grads[a.0], val(a) * g0);
            }
            Op::RowNormalize(a) => {
                let x = val(a);
                let y = &self.nodes[idx].value;
                let mut out = Array2::zeros(x.dim());
                for (r, mut row) in out.rows_mut().into_iter().enumerate() {
                    let total: f64 = x.row(r).sum();
                    if total == 0.0 {
                        continue;
                    }
                    let gy: f64 = g.row(r).dot(&y.row(r));
                    Zip::from(&mut row)
                        .and(g.row(r))
                        .for_each(|o, &gi| *o = (gi - gy) / total);
                }
                accumulate(&mut grads[a.0], out);
            }
            Op::ConcatCols(a, b) => {
                let ca = val(a).ncols();
                if self.wants(a) {
                    accumulate(&mut grads[a.0], g.slice(s![.., ..ca]).to_owned());
                }
                if self.wants(b) {
                    accumulate(&mut grads[b.0], g.slice(s![.., ca..]).to_owned());
                }
            }
            Op::SliceRows(a, start, end) => {
                let full = grads[a.0].get_or_insert_with(|| Array2::zeros(val(a).dim()));
                let mut part = full.slice_mut(s![start..end, ..]);
                part += &g;
            }
            Op::Reshape(a) => {
                let shape = val(a).dim();
                let g = g
                    .as_standard_layout()
                    .into_owned()
                    .into_shape_with_order(shape)
                    .expect("reshape preserves element count");
                accumulate(&mut grads[a.0], g);
            }
        }
    }
}

fn op_inputs(op: Op) -> [Option<Var>; 2] {
    match op {
        Op::Leaf => [None, None],
        Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::ConcatCols(a, b) => [Some(a), Some(b)],
        Op::Scale(a, _)
        | Op::Transpose(a)
        | Op::LeakyRelu(a, _)
        | Op::Relu(a)
        | Op::Abs(a)
        | Op::Sum(a)
        | Op::Pow(a, _)
        | Op::FrobeniusSq(a)
        | Op::RowNormalize(a)
        | Op::SliceRows(a, _, _)
        | Op::Reshape(a) => [Some(a), None],
    }
}

fn accumulate(slot: &mut Option<Array2<f64>>, contrib: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &contrib,
        None => *slot = Some(contrib),
    }
}

/// Adds `lhs · rhs` into `slot` without a temporary when it already holds a value.
fn accumulate_product(slot: &mut Option<Array2<f64>>, lhs: ArrayView2<'_, f64>, rhs: ArrayView2<'_, f64>) {
    match slot {
        Some(acc) => general_mat_mul(1.0, &lhs, &rhs, 1.0, acc),
        None => *slot = Some(lhs.dot(&rhs)),
    }
}

/// Sums a full-size adjoint down to a broadcast row operand's shape.
fn reduce_broadcast(g: &Array2<f64>, target: (usize, usize)) -> Array2<f64> {
    if g.dim() == target {
        g.clone()
    } else {
        g.sum_axis(Axis(0)).insert_axis(Axis(0))
    }
}

/// Output of [`record_forward`]: the evaluated graph plus what is needed to
/// differentiate it.
#[derive(Debug)]
pub struct Recording {
    pub output: Tensor,
    pub tape: Tape,
    pub inputs: Vec<Var>,
    pub output_var: Var,
}

impl Recording {
    /// Vector-Jacobian product of the recorded graph, one gradient per input.
    pub fn backward(&mut self, seed: &Tensor) -> Result<Vec<Tensor>, DiffError> {
        let grads = self.tape.backward(self.output_var, seed)?;
        self.inputs.iter().map(|&v| grads.wrt(v)).collect()
    }
}

/// Evaluates `graph` on `inputs`, recording every primitive.
///
/// All inputs are differentiable leaves, in order.
pub fn record_forward<F>(inputs: &[Tensor], graph: F) -> Result<Recording, DiffError>
where
    F: FnOnce(&mut Tape, &[Var]) -> Result<Var, DiffError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let output_var = graph(&mut tape, &vars)?;
    Ok(Recording {
        output: tape.tensor(output_var),
        tape,
        inputs: vars,
        output_var,
    })
}
