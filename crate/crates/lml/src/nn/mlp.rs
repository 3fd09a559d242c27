//! Plain fully-connected stacks.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::init::uniform_fan_in;
use crate::tensor::{Graph, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    None,
    Tanh,
    Sigmoid,
    LeakyRelu(f64),
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: Var) -> Result<Var> {
        match self {
            Activation::None => Ok(x),
            Activation::Tanh => g.tanh(x),
            Activation::Sigmoid => g.sigmoid(x),
            Activation::LeakyRelu(s) => g.leaky_relu(x, s),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlpLayer {
    pub w: Tensor, // [out, in]
    pub b: Tensor, // [out]
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct MlpParams {
    pub layers: Vec<MlpLayer>,
}

impl MlpParams {
    /// `dims` chains layer sizes, e.g. [in, hidden, out].
    pub fn init(rng: &mut ChaCha8Rng, dims: &[usize], hidden_act: Activation, final_act: Activation) -> Self {
        assert!(dims.len() >= 2);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, pair)| MlpLayer {
                w: uniform_fan_in(rng, &[pair[1], pair[0]], pair[0]),
                b: Tensor::zeros(&[pair[1]]),
                activation: if i + 2 == dims.len() { final_act } else { hidden_act },
            })
            .collect();
        MlpParams { layers }
    }

    /// Identity-weight stack for tests and the z-mode mapping network.
    pub fn identity(dim: usize, depth: usize, activation: Activation) -> Self {
        MlpParams {
            layers: (0..depth)
                .map(|_| MlpLayer {
                    w: Tensor::eye(dim),
                    b: Tensor::zeros(&[dim]),
                    activation,
                })
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").w.shape()[0]
    }

    /// Same order as `bind` registers leaves.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.w, &mut l.b])
            .collect()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> MlpVars {
        MlpVars {
            layers: self
                .layers
                .iter()
                .map(|l| {
                    (
                        g.leaf(l.w.clone(), trainable),
                        g.leaf(l.b.clone(), trainable),
                        l.activation,
                    )
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlpVars {
    pub layers: Vec<(Var, Var, Activation)>,
}

impl MlpVars {
    pub fn leaves(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|(w, b, _)| [*w, *b]).collect()
    }
}

/// Forward through the stack; `x` is a column vector [in, 1].
pub fn mlp_forward(g: &mut Graph, x: Var, vars: &MlpVars) -> Result<Var> {
    let mut cur = x;
    for &(w, b, act) in &vars.layers {
        let out_dim = g.shape(w)[0];
        if g.shape(cur) != [g.shape(w)[1], 1] {
            return Err(Error::ShapeMismatch {
                op: "mlp_forward",
                detail: format!("x {:?} vs W {:?}", g.shape(cur), g.shape(w)),
            });
        }
        let z = g.matmul(w, cur)?;
        let b_col = g.reshape(b, vec![out_dim, 1])?;
        let z = g.add(z, b_col)?;
        cur = act.apply(g, z)?;
    }
    Ok(cur)
}
