//! A differentiable gated recurrent unit cell built from tape primitives.

use super::matrix::Matrix;
use super::tape::{Tape, Var};
use super::TensorError;

/// Tape handles for one GRU cell's parameters, all of width `d`:
/// three `d x d` input weights, three `d x d` hidden weights, three `1 x d`
/// biases.
#[derive(Debug, Clone, Copy)]
pub struct GruCellVars {
    pub w_xr: Var,
    pub w_hr: Var,
    pub b_r: Var,
    pub w_xz: Var,
    pub w_hz: Var,
    pub b_z: Var,
    pub w_xn: Var,
    pub w_hn: Var,
    pub b_n: Var,
}

/// One GRU step over row vectors:
///
/// ```text
/// r  = sigmoid(x W_xr + h W_hr + b_r)        reset gate
/// z  = sigmoid(x W_xz + h W_hz + b_z)        update gate
/// n  = tanh(x W_xn + (r . h) W_hn + b_n)     candidate
/// h' = (1 - z) . n + z . h
/// ```
pub fn gru_cell(tape: &mut Tape, x: Var, hidden: Var, p: &GruCellVars) -> Result<Var, TensorError> {
    let width = tape.value(x).cols();
    if tape.value(x).rows() != 1 || tape.value(hidden).shape() != (1, width) {
        return Err(TensorError::Shape(format!(
            "gru_cell: x is {}x{}, hidden is {}x{}",
            tape.value(x).rows(),
            tape.value(x).cols(),
            tape.value(hidden).rows(),
            tape.value(hidden).cols()
        )));
    }

    let gate = |tape: &mut Tape, wx: Var, wh: Var, b: Var, h_in: Var| -> Result<Var, TensorError> {
        let xs = tape.matmul(x, wx)?;
        let hs = tape.matmul(h_in, wh)?;
        let sum = tape.add(xs, hs)?;
        tape.add(sum, b)
    };

    let r_pre = gate(tape, p.w_xr, p.w_hr, p.b_r, hidden)?;
    let r = tape.sigmoid(r_pre)?;
    let z_pre = gate(tape, p.w_xz, p.w_hz, p.b_z, hidden)?;
    let z = tape.sigmoid(z_pre)?;

    let gated_hidden = tape.mul(r, hidden)?;
    let n_pre = gate(tape, p.w_xn, p.w_hn, p.b_n, gated_hidden)?;
    let n = tape.tanh(n_pre)?;

    let ones = tape.constant(Matrix::filled(1, width, 1.0))?;
    let one_minus_z = tape.sub(ones, z)?;
    let new_part = tape.mul(one_minus_z, n)?;
    let kept_part = tape.mul(z, hidden)?;
    tape.add(new_part, kept_part)
}
