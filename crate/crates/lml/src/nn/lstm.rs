//! Single LSTM cell. Gate order is (i, f, g, o), fixed for checkpoint
//! interoperability.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::init::uniform_fan_in;
use crate::tensor::{Graph, Tensor, Var};

/// Input-to-gate weights [4k, d_in], hidden-to-gate weights [4k, k],
/// biases [4k].
#[derive(Debug, Clone)]
pub struct LstmCellParams {
    pub w_x: Tensor,
    pub w_h: Tensor,
    pub b: Tensor,
}

impl LstmCellParams {
    pub fn init(rng: &mut ChaCha8Rng, d_in: usize, d_hidden: usize) -> Self {
        LstmCellParams {
            w_x: uniform_fan_in(rng, &[4 * d_hidden, d_in], d_in),
            w_h: uniform_fan_in(rng, &[4 * d_hidden, d_hidden], d_hidden),
            b: Tensor::zeros(&[4 * d_hidden]),
        }
    }

    pub fn zeros(d_in: usize, d_hidden: usize) -> Self {
        LstmCellParams {
            w_x: Tensor::zeros(&[4 * d_hidden, d_in]),
            w_h: Tensor::zeros(&[4 * d_hidden, d_hidden]),
            b: Tensor::zeros(&[4 * d_hidden]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.shape()[1]
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_h.shape()[1]
    }

    /// Same order as `bind` registers leaves.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w_x, &mut self.w_h, &mut self.b]
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.w_x, &self.w_h, &self.b]
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> LstmCellVars {
        let k = self.hidden_dim();
        let w_x = g.leaf(self.w_x.clone(), trainable);
        let w_h = g.leaf(self.w_h.clone(), trainable);
        let b_flat = g.leaf(self.b.clone(), trainable);
        LstmCellVars {
            w_x,
            w_h,
            b_flat,
            b_col_shape: vec![4 * k, 1],
        }
    }
}

#[derive(Debug, Clone)]
pub struct LstmCellVars {
    pub w_x: Var,
    pub w_h: Var,
    pub b_flat: Var,
    b_col_shape: Vec<usize>,
}

impl LstmCellVars {
    pub fn leaves(&self) -> Vec<Var> {
        vec![self.w_x, self.w_h, self.b_flat]
    }
}

/// One recurrence step. `x` is [d_in, 1]; `h_prev`, `c_prev` are [k, 1].
/// Returns (h, c); every h coordinate lies in (−1, 1).
pub fn lstm_cell(
    g: &mut Graph,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    vars: &LstmCellVars,
) -> Result<(Var, Var)> {
    let k4 = g.shape(vars.w_x)[0];
    let k = k4 / 4;
    if g.shape(x) != [g.shape(vars.w_x)[1], 1] {
        return Err(Error::ShapeMismatch {
            op: "lstm_cell",
            detail: format!("x {:?} vs W_x {:?}", g.shape(x), g.shape(vars.w_x)),
        });
    }
    if g.shape(h_prev) != [k, 1] || g.shape(c_prev) != [k, 1] {
        return Err(Error::ShapeMismatch {
            op: "lstm_cell",
            detail: format!(
                "state h {:?} / c {:?}, expected [{k}, 1]",
                g.shape(h_prev),
                g.shape(c_prev)
            ),
        });
    }
    let gx = g.matmul(vars.w_x, x)?;
    let gh = g.matmul(vars.w_h, h_prev)?;
    let pre = g.add(gx, gh)?;
    let b = g.reshape(vars.b_flat, vars.b_col_shape.clone())?;
    let pre = g.add(pre, b)?;

    // gate order (i, f, g, o)
    let i = g.slice0(pre, 0, k)?;
    let f = g.slice0(pre, k, k)?;
    let cc = g.slice0(pre, 2 * k, k)?;
    let o = g.slice0(pre, 3 * k, k)?;
    let i = g.sigmoid(i)?;
    let f = g.sigmoid(f)?;
    let cc = g.tanh(cc)?;
    let o = g.sigmoid(o)?;

    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cc)?;
    let c = g.add(keep, write)?;
    let ct = g.tanh(c)?;
    let h = g.mul(o, ct)?;
    Ok((h, c))
}
