//! Gated recurrent sequence encoder.
//!
//! One step, with `x` the token embedding and `h` the previous state:
//!
//! ```text
//! z  = sigmoid(x Wz + h Uz + bz)
//! r  = sigmoid(x Wr + h Ur + br)
//! h~ = tanh(x Wh + (r * h) Uh + bh)
//! h' = h + z * (h~ - h)
//! ```
//!
//! The input weights of all three gates live in one `input x 3H` matrix
//! (`w_x`, columns ordered z, r, candidate); `u_zr` holds the recurrent
//! weights for z and r, `u_h` the candidate's. Batches of sequences with
//! different lengths are run to the longest one, and a row stops updating
//! once its own sequence is exhausted.

use rand::Rng;

use crate::error::{NeuralError, Result};
use crate::graph::{Graph, Var};
use crate::init::xavier_uniform;
use crate::params::{Bindings, ParamBundle};
use crate::tensor::Tensor;

pub fn init_gru<R: Rng + ?Sized>(
    bundle: &mut ParamBundle,
    prefix: &str,
    input: usize,
    hidden: usize,
    rng: &mut R,
) -> Result<()> {
    bundle.insert(format!("{prefix}.w_x"), xavier_uniform(rng, input, 3 * hidden))?;
    bundle.insert(format!("{prefix}.u_zr"), xavier_uniform(rng, hidden, 2 * hidden))?;
    bundle.insert(format!("{prefix}.u_h"), xavier_uniform(rng, hidden, hidden))?;
    bundle.insert(format!("{prefix}.b"), Tensor::zeros(1, 3 * hidden))?;
    Ok(())
}

/// Runs the GRU named `prefix` over each token sequence, looking tokens up
/// in `table`, and returns the final hidden states as an `n x H` matrix.
/// The initial state is zero.
pub fn gru_encode(g: &mut Graph, params: &Bindings, prefix: &str, table: Var, seqs: &[Vec<usize>]) -> Result<Var> {
    if seqs.is_empty() || seqs.iter().any(Vec::is_empty) {
        return Err(NeuralError::EmptySequence);
    }
    let rows = g.value(table).rows();
    if let Some(&id) = seqs.iter().flatten().find(|id| **id >= rows) {
        return Err(NeuralError::UnknownTokenId { id, rows });
    }
    let w_x = params.var(&format!("{prefix}.w_x"))?;
    let u_zr = params.var(&format!("{prefix}.u_zr"))?;
    let u_h = params.var(&format!("{prefix}.u_h"))?;
    let b = params.var(&format!("{prefix}.b"))?;
    let hidden = g.value(u_h).rows();
    if g.value(w_x).rows() != g.value(table).cols() {
        return Err(NeuralError::ShapeMismatch {
            op: "gru_encode",
            detail: format!(
                "embedding width {} vs input weight rows {}",
                g.value(table).cols(),
                g.value(w_x).rows()
            ),
        });
    }

    let n = seqs.len();
    let longest = seqs.iter().map(Vec::len).max().unwrap_or(0);
    let mut h = g.constant(Tensor::zeros(n, hidden));
    for t in 0..longest {
        let ids: Vec<usize> = seqs.iter().map(|s| s.get(t).copied().unwrap_or(0)).collect();
        let mask: Vec<bool> = seqs.iter().map(|s| t < s.len()).collect();

        let x = g.gather_rows(table, &ids)?;
        let gates_x = g.affine(x, w_x, b)?;
        let gates_h = g.matmul(h, u_zr)?;

        let zx = g.slice_cols(gates_x, 0..hidden)?;
        let zh = g.slice_cols(gates_h, 0..hidden)?;
        let z_pre = g.add(zx, zh)?;
        let z = g.sigmoid(z_pre);

        let rx = g.slice_cols(gates_x, hidden..2 * hidden)?;
        let rh = g.slice_cols(gates_h, hidden..2 * hidden)?;
        let r_pre = g.add(rx, rh)?;
        let r = g.sigmoid(r_pre);

        let cx = g.slice_cols(gates_x, 2 * hidden..3 * hidden)?;
        let rh_prod = g.mul(r, h)?;
        let ch = g.matmul(rh_prod, u_h)?;
        let c_pre = g.add(cx, ch)?;
        let cand = g.tanh(c_pre);

        let delta = g.sub(cand, h)?;
        let step = g.mul(z, delta)?;
        let next = g.add(h, step)?;
        h = if mask.iter().all(|m| *m) {
            next
        } else {
            g.select_rows(h, next, &mask)?
        };
    }
    Ok(h)
}
