//! Define-by-run reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every forward operation together with the parent node
//! ids it consumed; [`Tape::backward`] replays the record in reverse and
//! accumulates gradients into a [`ParamStore`](super::ParamStore). Tapes are
//! rebuilt per forward pass, so graph shapes may vary freely between passes.

use rand::Rng;

use super::matrix::Matrix;
use super::params::{ParamId, ParamStore};
use super::TensorError;

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Sparse 0/1 matrix with exactly one nonzero per column, stored as the row
/// index of each column's nonzero. Shape is `rows x row_of_col.len()`.
#[derive(Debug, Clone)]
pub struct ColumnMap {
    pub rows: usize,
    pub row_of_col: Vec<usize>,
}

impl ColumnMap {
    pub fn new(rows: usize, row_of_col: Vec<usize>) -> Result<Self, TensorError> {
        if let Some(&bad) = row_of_col.iter().find(|&&r| r >= rows) {
            return Err(TensorError::Shape(format!(
                "column map row index {bad} out of range for {rows} rows"
            )));
        }
        Ok(Self { rows, row_of_col })
    }

    pub fn cols(&self) -> usize {
        self.row_of_col.len()
    }

    /// Dense materialization, mainly for tests.
    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols());
        for (col, &row) in self.row_of_col.iter().enumerate() {
            m.set(row, col, 1.0);
        }
        m
    }
}

enum Op {
    Constant,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Matmul(Var, Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    ScaleRows(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Dropout(Var, Vec<f64>),
    RowSelect(Var, Vec<usize>),
    TileRows(Var),
    SparseMatmul(ColumnMap, Var),
    SparseMatmulT(ColumnMap, Var),
    SumAll(Var),
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Records forward operations for one reverse pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Value of a 1x1 node as a plain float.
    pub fn scalar(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].value.shape(), (1, 1));
        self.nodes[v.0].value.get(0, 0)
    }

    fn push(&mut self, value: Matrix, op: Op) -> Result<Var, TensorError> {
        if !value.all_finite() {
            return Err(TensorError::NonFinite(op_name(&op)));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A constant leaf; no gradient flows into it.
    pub fn constant(&mut self, value: Matrix) -> Result<Var, TensorError> {
        self.push(value, Op::Constant)
    }

    /// A parameter leaf. `backward` accumulates its gradient into the store
    /// entry identified by `id`.
    pub fn param(&mut self, id: ParamId, value: &Matrix) -> Result<Var, TensorError> {
        self.push(value.clone(), Op::Param(id))
    }

    fn binary_shape_check(&self, op: &str, a: Var, b: Var) -> Result<(), TensorError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(TensorError::Shape(format!(
                "{op}: {}x{} vs {}x{}",
                sa.0, sa.1, sb.0, sb.1
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary_shape_check("add", a, b)?;
        let value = self.value(a).add(self.value(b));
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary_shape_check("sub", a, b)?;
        let value = self.value(a).sub(self.value(b));
        self.push(value, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary_shape_check("mul", a, b)?;
        let value = self.value(a).hadamard(self.value(b));
        self.push(value, Op::Mul(a, b))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.1 != sb.0 {
            return Err(TensorError::Shape(format!(
                "matmul: {}x{} * {}x{}",
                sa.0, sa.1, sb.0, sb.1
            )));
        }
        let value = self.value(a).matmul(self.value(b));
        self.push(value, Op::Matmul(a, b))
    }

    /// Concatenates parts side by side; all parts must share a row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Shape("concat_cols: no parts".into()));
        }
        let rows = self.value(parts[0]).rows();
        let mut cols = 0;
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(TensorError::Shape("concat_cols: row count mismatch".into()));
            }
            cols += self.value(p).cols();
        }
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let dst = out.row_mut(r);
            let mut offset = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                dst[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    /// Stacks parts vertically; all parts must share a column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Shape("concat_rows: no parts".into()));
        }
        let cols = self.value(parts[0]).cols();
        let mut rows = 0;
        for &p in parts {
            if self.value(p).cols() != cols {
                return Err(TensorError::Shape(
                    "concat_rows: column count mismatch".into(),
                ));
            }
            rows += self.value(p).rows();
        }
        let mut out = Matrix::zeros(rows, cols);
        let mut r = 0;
        for &p in parts {
            for pr in 0..self.value(p).rows() {
                let src = self.value(p).row(pr).to_vec();
                out.row_mut(r).copy_from_slice(&src);
                r += 1;
            }
        }
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    /// Scales row `i` of `x` by the scalar in row `i` of `scales` (an `n x 1`
    /// column).
    pub fn scale_rows(&mut self, x: Var, scales: Var) -> Result<Var, TensorError> {
        let (sx, ss) = (self.value(x).shape(), self.value(scales).shape());
        if ss != (sx.0, 1) {
            return Err(TensorError::Shape(format!(
                "scale_rows: {}x{} with scales {}x{}",
                sx.0, sx.1, ss.0, ss.1
            )));
        }
        let mut out = self.value(x).clone();
        for r in 0..sx.0 {
            let s = self.value(scales).get(r, 0);
            for v in out.row_mut(r) {
                *v *= s;
            }
        }
        self.push(out, Op::ScaleRows(x, scales))
    }

    /// Multiplies every entry by a constant.
    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var, TensorError> {
        let value = self.value(x).map(|v| v * c);
        self.push(value, Op::Scale(x, c))
    }

    /// Adds a constant to every entry.
    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var, TensorError> {
        let value = self.value(x).map(|v| v + c);
        self.push(value, Op::AddScalar(x))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(value, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, TensorError> {
        let value = self.value(x).map(f64::tanh);
        self.push(value, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, TensorError> {
        let value = self.value(x).map(|v| 1.0 / (1.0 + (-v).exp()));
        self.push(value, Op::Sigmoid(x))
    }

    /// Inverted dropout. In eval mode (`train == false`) this is the
    /// identity; in train mode entries are zeroed with probability `p` and
    /// survivors are scaled by `1/(1-p)`.
    pub fn dropout(
        &mut self,
        x: Var,
        p: f64,
        train: bool,
        rng: &mut impl Rng,
    ) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::Shape(format!(
                "dropout: probability {p} outside [0, 1)"
            )));
        }
        if !train || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let mut value = self.value(x).clone();
        for (v, &m) in value.as_mut_slice().iter_mut().zip(mask.iter()) {
            *v *= m;
        }
        self.push(value, Op::Dropout(x, mask))
    }

    /// Gathers the listed rows of `x` into a new matrix, one output row per
    /// index (indices may repeat).
    pub fn row_select(&mut self, x: Var, indices: &[usize]) -> Result<Var, TensorError> {
        let src = self.value(x);
        if let Some(&bad) = indices.iter().find(|&&i| i >= src.rows()) {
            return Err(TensorError::Shape(format!(
                "row_select: index {bad} out of range for {} rows",
                src.rows()
            )));
        }
        let mut out = Matrix::zeros(indices.len(), src.cols());
        for (r, &i) in indices.iter().enumerate() {
            let row = src.row(i).to_vec();
            out.row_mut(r).copy_from_slice(&row);
        }
        self.push(out, Op::RowSelect(x, indices.to_vec()))
    }

    /// Repeats a `1 x d` row `n` times.
    pub fn tile_rows(&mut self, x: Var, n: usize) -> Result<Var, TensorError> {
        let src = self.value(x);
        if src.rows() != 1 {
            return Err(TensorError::Shape(format!(
                "tile_rows: expected a single row, got {} rows",
                src.rows()
            )));
        }
        let mut out = Matrix::zeros(n, src.cols());
        for r in 0..n {
            let row = src.row(0).to_vec();
            out.row_mut(r).copy_from_slice(&row);
        }
        self.push(out, Op::TileRows(x))
    }

    /// `map * x` where `map` is a sparse 0/1 matrix with one nonzero per
    /// column. `x` must have one row per map column; the result has
    /// `map.rows` rows. Columns are accumulated in ascending order, so the
    /// result is deterministic for a fixed column order.
    pub fn sparse_matmul(&mut self, map: &ColumnMap, x: Var) -> Result<Var, TensorError> {
        let src = self.value(x);
        if src.rows() != map.cols() {
            return Err(TensorError::Shape(format!(
                "sparse_matmul: map is {}x{} but rhs has {} rows",
                map.rows,
                map.cols(),
                src.rows()
            )));
        }
        let mut out = Matrix::zeros(map.rows, src.cols());
        for (col, &row) in map.row_of_col.iter().enumerate() {
            let src_row = src.row(col).to_vec();
            for (d, s) in out.row_mut(row).iter_mut().zip(src_row.iter()) {
                *d += s;
            }
        }
        self.push(out, Op::SparseMatmul(map.clone(), x))
    }

    /// `map^T * x`: a pure gather, one output row per map column.
    pub fn sparse_matmul_t(&mut self, map: &ColumnMap, x: Var) -> Result<Var, TensorError> {
        let src = self.value(x);
        if src.rows() != map.rows {
            return Err(TensorError::Shape(format!(
                "sparse_matmul_t: map is {}x{} but rhs has {} rows",
                map.rows,
                map.cols(),
                src.rows()
            )));
        }
        let mut out = Matrix::zeros(map.cols(), src.cols());
        for (col, &row) in map.row_of_col.iter().enumerate() {
            let src_row = src.row(row).to_vec();
            out.row_mut(col).copy_from_slice(&src_row);
        }
        self.push(out, Op::SparseMatmulT(map.clone(), x))
    }

    /// Sum of all entries as a 1x1 node.
    pub fn sum_all(&mut self, x: Var) -> Result<Var, TensorError> {
        let value = Matrix::from_vec(1, 1, vec![self.value(x).sum()])?;
        self.push(value, Op::SumAll(x))
    }

    /// Runs the reverse pass from `loss` (which must be 1x1) and accumulates
    /// d loss / d param into the store for every parameter leaf on the tape.
    /// Consumes the tape: a second call without a new forward pass fails.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<(), TensorError> {
        if self.consumed {
            return Err(TensorError::TapeConsumed);
        }
        if self.nodes.is_empty() {
            return Err(TensorError::Shape("backward: empty tape".into()));
        }
        if self.value(loss).shape() != (1, 1) {
            let (r, c) = self.value(loss).shape();
            return Err(TensorError::Shape(format!(
                "backward: loss must be 1x1, got {r}x{c}"
            )));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Matrix>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match &self.nodes[idx].op {
                Op::Constant => {}
                Op::Param(id) => store.accumulate_grad(*id, &g),
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, &g, 1.0);
                    accumulate(&mut grads, *b, &g, 1.0);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, &g, 1.0);
                    accumulate(&mut grads, *b, &g, -1.0);
                }
                Op::Mul(a, b) => {
                    let ga = g.hadamard(&self.nodes[b.0].value);
                    let gb = g.hadamard(&self.nodes[a.0].value);
                    accumulate(&mut grads, *a, &ga, 1.0);
                    accumulate(&mut grads, *b, &gb, 1.0);
                }
                Op::Matmul(a, b) => {
                    let ga = g.matmul_nt(&self.nodes[b.0].value);
                    let gb = self.nodes[a.0].value.matmul_tn(&g);
                    accumulate(&mut grads, *a, &ga, 1.0);
                    accumulate(&mut grads, *b, &gb, 1.0);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (rows, cols) = self.nodes[p.0].value.shape();
                        let mut gp = Matrix::zeros(rows, cols);
                        for r in 0..rows {
                            gp.row_mut(r)
                                .copy_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        accumulate(&mut grads, p, &gp, 1.0);
                        offset += cols;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (rows, cols) = self.nodes[p.0].value.shape();
                        let mut gp = Matrix::zeros(rows, cols);
                        for r in 0..rows {
                            gp.row_mut(r).copy_from_slice(g.row(offset + r));
                        }
                        accumulate(&mut grads, p, &gp, 1.0);
                        offset += rows;
                    }
                }
                Op::ScaleRows(x, scales) => {
                    let xv = &self.nodes[x.0].value;
                    let sv = &self.nodes[scales.0].value;
                    let mut gx = g.clone();
                    let mut gs = Matrix::zeros(sv.rows(), 1);
                    for r in 0..xv.rows() {
                        let s = sv.get(r, 0);
                        let mut dot = 0.0;
                        for (gr, xr) in gx.row_mut(r).iter_mut().zip(xv.row(r).iter()) {
                            dot += *gr * *xr;
                            *gr *= s;
                        }
                        gs.set(r, 0, dot);
                    }
                    accumulate(&mut grads, *x, &gx, 1.0);
                    accumulate(&mut grads, *scales, &gs, 1.0);
                }
                Op::Scale(x, c) => accumulate(&mut grads, *x, &g, *c),
                Op::AddScalar(x) => accumulate(&mut grads, *x, &g, 1.0),
                Op::Relu(x) => {
                    let mask = self.nodes[x.0].value.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    accumulate(&mut grads, *x, &g.hadamard(&mask), 1.0);
                }
                Op::Tanh(x) => {
                    let deriv = self.nodes[idx].value.map(|y| 1.0 - y * y);
                    accumulate(&mut grads, *x, &g.hadamard(&deriv), 1.0);
                }
                Op::Sigmoid(x) => {
                    let deriv = self.nodes[idx].value.map(|y| y * (1.0 - y));
                    accumulate(&mut grads, *x, &g.hadamard(&deriv), 1.0);
                }
                Op::Dropout(x, mask) => {
                    let mut gx = g.clone();
                    for (v, &m) in gx.as_mut_slice().iter_mut().zip(mask.iter()) {
                        *v *= m;
                    }
                    accumulate(&mut grads, *x, &gx, 1.0);
                }
                Op::RowSelect(x, indices) => {
                    let (rows, cols) = self.nodes[x.0].value.shape();
                    let mut gx = Matrix::zeros(rows, cols);
                    for (r, &i) in indices.iter().enumerate() {
                        for (d, s) in gx.row_mut(i).iter_mut().zip(g.row(r).iter()) {
                            *d += s;
                        }
                    }
                    accumulate(&mut grads, *x, &gx, 1.0);
                }
                Op::TileRows(x) => {
                    let cols = self.nodes[x.0].value.cols();
                    let mut gx = Matrix::zeros(1, cols);
                    for r in 0..g.rows() {
                        for (d, s) in gx.row_mut(0).iter_mut().zip(g.row(r).iter()) {
                            *d += s;
                        }
                    }
                    accumulate(&mut grads, *x, &gx, 1.0);
                }
                Op::SparseMatmul(map, x) => {
                    // out[row_of_col[j]] += x[j]  =>  gx[j] = g[row_of_col[j]]
                    let cols = g.cols();
                    let mut gx = Matrix::zeros(map.cols(), cols);
                    for (col, &row) in map.row_of_col.iter().enumerate() {
                        let src = g.row(row).to_vec();
                        gx.row_mut(col).copy_from_slice(&src);
                    }
                    accumulate(&mut grads, *x, &gx, 1.0);
                }
                Op::SparseMatmulT(map, x) => {
                    // out[j] = x[row_of_col[j]]  =>  gx[row_of_col[j]] += g[j]
                    let cols = g.cols();
                    let mut gx = Matrix::zeros(map.rows, cols);
                    for (col, &row) in map.row_of_col.iter().enumerate() {
                        for (d, s) in gx.row_mut(row).iter_mut().zip(g.row(col).iter()) {
                            *d += s;
                        }
                    }
                    accumulate(&mut grads, *x, &gx, 1.0);
                }
                Op::SumAll(x) => {
                    let (rows, cols) = self.nodes[x.0].value.shape();
                    let gx = Matrix::filled(rows, cols, g.get(0, 0));
                    accumulate(&mut grads, *x, &gx, 1.0);
                }
            }
        }

        // Leased parameters that never reached the loss have zero gradient;
        // report them as such so optimizer state checks stay simple.
        for node in &self.nodes {
            if let Op::Param(id) = node.op {
                store.ensure_grad(id, node.value.shape());
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Matrix>], target: Var, g: &Matrix, scale: f64) {
    match &mut grads[target.0] {
        Some(existing) => existing.add_assign_scaled(g, scale),
        slot => {
            let mut m = Matrix::zeros(g.rows(), g.cols());
            m.add_assign_scaled(g, scale);
            *slot = Some(m);
        }
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Constant => "constant",
        Op::Param(_) => "param",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Matmul(..) => "matmul",
        Op::ConcatCols(_) => "concat_cols",
        Op::ConcatRows(_) => "concat_rows",
        Op::ScaleRows(..) => "scale_rows",
        Op::Scale(..) => "scale",
        Op::AddScalar(_) => "add_scalar",
        Op::Relu(_) => "relu",
        Op::Tanh(_) => "tanh",
        Op::Sigmoid(_) => "sigmoid",
        Op::Dropout(..) => "dropout",
        Op::RowSelect(..) => "row_select",
        Op::TileRows(_) => "tile_rows",
        Op::SparseMatmul(..) => "sparse_matmul",
        Op::SparseMatmulT(..) => "sparse_matmul_t",
        Op::SumAll(_) => "sum_all",
    }
}
