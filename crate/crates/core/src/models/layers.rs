//! Layer building blocks recorded on a [`Tape`].
//!
//! Sequences are `T×d` matrices with one timestep per row; vectors are
//! `1×n` rows.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// One bank of 1-D filters of width `filter_size`.
///
/// `weight` is `(filter_size·d)×filters`, row `j·d + c` holding the weights
/// for timestep offset `j` and input channel `c`; `bias` has `filters` values.
#[derive(Debug, Clone, Copy)]
pub struct Conv1dLayer {
    pub filter_size: usize,
    pub weight: Var,
    pub bias: Var,
}

/// Valid (unpadded) cross-correlation over time:
/// `out[t, f] = bias[f] + Σ_{j<h, c<d} seq[t+j, c] · W[j, c, f]`,
/// giving `(T-h+1)×filters`. The activation is left to the caller.
pub fn conv1d_forward(tape: &mut Tape, seq: Var, layer: &Conv1dLayer) -> Result<Var> {
    let (len, _) = tape.value(seq).dims2()?;
    if len < layer.filter_size {
        return Err(Error::Shape(format!(
            "sequence of length {len} is shorter than filter size {}",
            layer.filter_size
        )));
    }
    let windows = tape.unfold(seq, layer.filter_size)?;
    let mapped = tape.matmul(windows, layer.weight)?;
    tape.add_bias(mapped, layer.bias)
}

/// Per-channel maximum over time, `T×F → 1×F`.
pub fn global_max_pool(tape: &mut Tape, features: Var) -> Result<Var> {
    tape.max_rows(features)
}

/// LSTM weights with gates laid out in column blocks (input, forget,
/// candidate, output): `input_weights` is `d×4U`, `recurrent_weights`
/// `U×4U`, `bias` has `4U` values.
#[derive(Debug, Clone, Copy)]
pub struct LstmCell {
    pub units: usize,
    pub input_weights: Var,
    pub recurrent_weights: Var,
    pub bias: Var,
}

/// One timestep:
///
/// ```text
/// z = x·W + (h_prev ⊙ mask)·U + b
/// i, f, o = hard_sigmoid(z_i, z_f, z_o);  g = tanh(z_g)
/// c = f ⊙ c_prev + i ⊙ g;  h = o ⊙ tanh(c)
/// ```
pub fn lstm_step(
    tape: &mut Tape,
    cell: &LstmCell,
    x_t: Var,
    h_prev: Var,
    c_prev: Var,
    recurrent_mask: Option<&[f64]>,
) -> Result<(Var, Var)> {
    let projected = tape.matmul(x_t, cell.input_weights)?;
    let projected = tape.add_bias(projected, cell.bias)?;
    step_projected(tape, cell, projected, h_prev, c_prev, recurrent_mask)
}

// Same as `lstm_step` with `x·W + b` already computed.
fn step_projected(
    tape: &mut Tape,
    cell: &LstmCell,
    projected: Var,
    h_prev: Var,
    c_prev: Var,
    recurrent_mask: Option<&[f64]>,
) -> Result<(Var, Var)> {
    let u = cell.units;
    let h_in = match recurrent_mask {
        Some(mask) => tape.mul_const(h_prev, mask.to_vec())?,
        None => h_prev,
    };
    let recurrent = tape.matmul(h_in, cell.recurrent_weights)?;
    let z = tape.add(projected, recurrent)?;

    let zi = tape.slice(z, 1, 0, u)?;
    let zf = tape.slice(z, 1, u, u)?;
    let zg = tape.slice(z, 1, 2 * u, u)?;
    let zo = tape.slice(z, 1, 3 * u, u)?;
    let i = tape.hard_sigmoid(zi);
    let f = tape.hard_sigmoid(zf);
    let g = tape.tanh(zg);
    let o = tape.hard_sigmoid(zo);

    let kept = tape.mul(f, c_prev)?;
    let written = tape.mul(i, g)?;
    let c = tape.add(kept, written)?;
    let squashed = tape.tanh(c);
    let h = tape.mul(o, squashed)?;
    Ok((h, c))
}

/// Runs `cell` over every row of `seq` from zero state and stacks the
/// hidden states into `T×U`. In training mode one recurrent-dropout mask is
/// drawn for the whole sequence.
pub fn lstm_sequence<R: Rng + ?Sized>(
    tape: &mut Tape,
    seq: Var,
    cell: &LstmCell,
    recurrent_dropout: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    let (len, _) = tape.value(seq).dims2()?;
    let mask = crate::tensor::dropout_mask(cell.units, recurrent_dropout, training, rng)?;
    let projected = tape.matmul(seq, cell.input_weights)?;
    let projected = tape.add_bias(projected, cell.bias)?;

    let mut h = tape.leaf(Tensor::zeros(&[1, cell.units]));
    let mut c = tape.leaf(Tensor::zeros(&[1, cell.units]));
    let mut states = Vec::with_capacity(len);
    for t in 0..len {
        let x_t = tape.slice(projected, 0, t, 1)?;
        (h, c) = step_projected(tape, cell, x_t, h, c, mask.as_deref())?;
        states.push(h);
    }
    tape.concat(&states, 0)
}

/// Rows of `x` in reverse order.
pub fn reverse_rows(tape: &mut Tape, x: Var) -> Result<Var> {
    let (len, _) = tape.value(x).dims2()?;
    let rows = (0..len)
        .rev()
        .map(|t| tape.slice(x, 0, t, 1))
        .collect::<Result<Vec<_>>>()?;
    tape.concat(&rows, 0)
}

/// Forward cell over `seq`, backward cell over the time-reversed `seq` with
/// its states re-reversed, concatenated per timestep into `T×2U`.
pub fn bilstm_forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    seq: Var,
    forward: &LstmCell,
    backward: &LstmCell,
    recurrent_dropout: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    let ahead = lstm_sequence(tape, seq, forward, recurrent_dropout, training, rng)?;
    let reversed = reverse_rows(tape, seq)?;
    let behind = lstm_sequence(tape, reversed, backward, recurrent_dropout, training, rng)?;
    let behind = reverse_rows(tape, behind)?;
    tape.concat(&[ahead, behind], 1)
}
