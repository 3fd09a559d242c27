//! Reverse-mode tape.
//!
//! A [`Graph`] records every op as it executes; node indices are already a
//! topological order, so [`Graph::backward`] is a single reverse sweep.
//! One graph is confined to one thread; independent graphs may run in
//! parallel.

use crate::error::{Error, Result};
use crate::tensor::{matmul_data, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

pub(crate) struct BackCtx<'a> {
    pub parents: &'a [Tensor],
    pub value: &'a Tensor,
    pub grad: &'a Tensor,
    pub needs: &'a [bool],
}

type BackFn = Box<dyn Fn(&BackCtx) -> Vec<Option<Tensor>>>;

struct Node {
    value: Tensor,
    parents: Vec<Var>,
    backward: Option<BackFn>,
    requires_grad: bool,
    op: &'static str,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Inserts a leaf tensor. Gradients are collected for it iff `requires_grad`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push_node(Node {
            value,
            parents: Vec::new(),
            backward: None,
            requires_grad,
            op: "leaf",
        })
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Re-inserts a value with the gradient link severed.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    fn push_node(&mut self, node: Node) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn record(
        &mut self,
        op: &'static str,
        parents: Vec<Var>,
        value: Tensor,
        backward: BackFn,
    ) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op });
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        Ok(self.push_node(Node {
            value,
            parents,
            backward: if requires_grad { Some(backward) } else { None },
            requires_grad,
            op,
        }))
    }

    /// Runs the reverse sweep from a scalar loss. Gradients accumulate
    /// additively across uses; query them with [`Graph::grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::DetachedNode(loss.0));
        }
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::NonScalarLoss(
                self.nodes[loss.0].value.shape().to_vec(),
            ));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..self.nodes.len()).rev() {
            let Some(grad) = self.grads[idx].take() else {
                continue;
            };
            let (before, rest) = self.nodes.split_at(idx);
            let node = &rest[0];
            if let Some(back) = &node.backward {
                let parent_vals: Vec<Tensor> = node
                    .parents
                    .iter()
                    .map(|p| before[p.0].value.clone())
                    .collect();
                let needs: Vec<bool> = node
                    .parents
                    .iter()
                    .map(|p| before[p.0].requires_grad)
                    .collect();
                let ctx = BackCtx {
                    parents: &parent_vals,
                    value: &node.value,
                    grad: &grad,
                    needs: &needs,
                };
                let parent_grads = back(&ctx);
                debug_assert_eq!(parent_grads.len(), node.parents.len());
                let parents = node.parents.clone();
                let op = node.op;
                for (p, g) in parents.iter().zip(parent_grads) {
                    let Some(g) = g else { continue };
                    if !self.nodes[p.0].requires_grad {
                        continue;
                    }
                    if !g.is_finite() {
                        return Err(Error::NonFinite { op });
                    }
                    match &mut self.grads[p.0] {
                        Some(acc) => {
                            let acc_data = acc.data_mut();
                            for (a, b) in acc_data.iter_mut().zip(g.data()) {
                                *a += b;
                            }
                        }
                        slot @ None => *slot = Some(g),
                    }
                }
            }
            self.grads[idx] = Some(grad);
        }
        Ok(())
    }

    /// Gradient of the last `backward` loss w.r.t. `v`, if any flowed there.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

// ---------------------------------------------------------------------------
// Broadcasting for binary elementwise ops: identical shapes, a 1-element
// scalar on either side, or the smaller shape a suffix of the larger
// (leading-dim expansion only).
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq)]
enum Bcast {
    Same,
    ScalarLhs,
    ScalarRhs,
    /// rhs repeats over lhs's leading dims
    SuffixRhs,
    /// lhs repeats over rhs's leading dims
    SuffixLhs,
}

fn bcast_kind(op: &'static str, a: &[usize], b: &[usize]) -> Result<Bcast> {
    let an: usize = a.iter().product();
    let bn: usize = b.iter().product();
    if a == b {
        return Ok(Bcast::Same);
    }
    if an == 1 {
        return Ok(Bcast::ScalarLhs);
    }
    if bn == 1 {
        return Ok(Bcast::ScalarRhs);
    }
    if a.len() > b.len() && a.ends_with(b) {
        return Ok(Bcast::SuffixRhs);
    }
    if b.len() > a.len() && b.ends_with(a) {
        return Ok(Bcast::SuffixLhs);
    }
    Err(Error::ShapeMismatch {
        op,
        detail: format!("{a:?} vs {b:?} are not broadcast-compatible"),
    })
}

/// Sums `g` down to `shape` (inverse of broadcast expansion).
fn reduce_to(g: &Tensor, shape: &[usize]) -> Tensor {
    let target: usize = shape.iter().product();
    if g.numel() == target {
        return g.clone().reshape(shape.to_vec()).expect("same numel");
    }
    let mut out = vec![0.0; target];
    for (i, &v) in g.data().iter().enumerate() {
        out[i % target] += v;
    }
    Tensor::new(shape.to_vec(), out).expect("reduce_to shape")
}

fn binary_apply(
    a: &Tensor,
    b: &Tensor,
    kind: Bcast,
    f: impl Fn(f64, f64) -> f64,
) -> Tensor {
    match kind {
        Bcast::Same => {
            let data = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(&x, &y)| f(x, y))
                .collect();
            Tensor::new(a.shape().to_vec(), data).unwrap()
        }
        Bcast::ScalarLhs => {
            let x = a.data()[0];
            b.map(|y| f(x, y))
        }
        Bcast::ScalarRhs => {
            let y = b.data()[0];
            a.map(|x| f(x, y))
        }
        Bcast::SuffixRhs => {
            let bn = b.numel();
            let data = a
                .data()
                .iter()
                .enumerate()
                .map(|(i, &x)| f(x, b.data()[i % bn]))
                .collect();
            Tensor::new(a.shape().to_vec(), data).unwrap()
        }
        Bcast::SuffixLhs => {
            let an = a.numel();
            let data = b
                .data()
                .iter()
                .enumerate()
                .map(|(i, &y)| f(a.data()[i % an], y))
                .collect();
            Tensor::new(b.shape().to_vec(), data).unwrap()
        }
    }
}

impl Graph {
    fn binary(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64 + 'static,
        // (a_val, b_val, out_grad) -> (da_full, db_full), both in the output shape
        dfdx: impl Fn(f64, f64) -> f64 + 'static,
        dfdy: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Result<Var> {
        let kind = bcast_kind(op, self.shape(a), self.shape(b))?;
        let value = binary_apply(self.value(a), self.value(b), kind, f);
        let a_shape = self.shape(a).to_vec();
        let b_shape = self.shape(b).to_vec();
        self.record(
            op,
            vec![a, b],
            value,
            Box::new(move |ctx| {
                let (av, bv) = (&ctx.parents[0], &ctx.parents[1]);
                let da = if ctx.needs[0] {
                    let full = binary_apply(av, bv, kind, &dfdx);
                    let mut g = binary_apply(&full, ctx.grad, Bcast::Same, |p, q| p * q);
                    if g.shape() != a_shape.as_slice() {
                        g = reduce_to(&g, &a_shape);
                    }
                    Some(g)
                } else {
                    None
                };
                let db = if ctx.needs[1] {
                    let full = binary_apply(av, bv, kind, &dfdy);
                    let mut g = binary_apply(&full, ctx.grad, Bcast::Same, |p, q| p * q);
                    if g.shape() != b_shape.as_slice() {
                        g = reduce_to(&g, &b_shape);
                    }
                    Some(g)
                } else {
                    None
                };
                vec![da, db]
            }),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, |_, _| 1.0, |_, _| 1.0)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, |_, _| 1.0, |_, _| -1.0)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, |_, y| y, |x, _| x)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(b).data().iter().any(|&v| v == 0.0) {
            return Err(Error::Domain {
                op: "div",
                detail: "division by zero".into(),
            });
        }
        self.binary(
            "div",
            a,
            b,
            |x, y| x / y,
            |_, y| 1.0 / y,
            |x, y| -x / (y * y),
        )
    }

    fn unary(
        &mut self,
        op: &'static str,
        a: Var,
        f: impl Fn(f64) -> f64,
        // derivative as a function of (input, output)
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Result<Var> {
        let value = self.value(a).map(f);
        self.record(
            op,
            vec![a],
            value,
            Box::new(move |ctx| {
                let g = Tensor::new(
                    ctx.value.shape().to_vec(),
                    ctx.parents[0]
                        .data()
                        .iter()
                        .zip(ctx.value.data())
                        .zip(ctx.grad.data())
                        .map(|((&x, &y), &go)| df(x, y) * go)
                        .collect(),
                )
                .unwrap();
                vec![Some(g)]
            }),
        )
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.unary("scale", a, move |x| x * s, move |_, _| s)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        self.unary("add_scalar", a, move |x| x + s, |_, _| 1.0)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        self.unary(
            "leaky_relu",
            a,
            move |x| if x >= 0.0 { x } else { slope * x },
            move |x, _| if x >= 0.0 { 1.0 } else { slope },
        )
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary("exp", a, f64::exp, |_, y| y)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if self.value(a).data().iter().any(|&v| v <= 0.0) {
            return Err(Error::Domain {
                op: "log",
                detail: "log on non-positive input".into(),
            });
        }
        self.unary("log", a, f64::ln, |x, _| 1.0 / x)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        if self.value(a).data().iter().any(|&v| v < 0.0) {
            return Err(Error::Domain {
                op: "sqrt",
                detail: "sqrt on negative input".into(),
            });
        }
        self.unary("sqrt", a, f64::sqrt, |_, y| 0.5 / y)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary("square", a, |x| x * x, |x, _| 2.0 * x)
    }

    /// Numerically stable ln(1 + e^x); derivative is sigmoid(x).
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary("softplus", a, softplus, |x, _| sigmoid(x))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                detail: format!("{sa:?} x {sb:?}"),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = matmul_data(self.value(a).data(), self.value(b).data(), m, k, n);
        let value = Tensor::new(vec![m, n], data)?;
        self.record(
            "matmul",
            vec![a, b],
            value,
            Box::new(move |ctx| {
                let (av, bv, go) = (&ctx.parents[0], &ctx.parents[1], ctx.grad);
                // dA = dC · Bᵀ ; dB = Aᵀ · dC
                let da = ctx.needs[0].then(|| {
                    let bt = transpose_data(bv.data(), k, n);
                    Tensor::new(vec![m, k], matmul_data(go.data(), &bt, m, n, k)).unwrap()
                });
                let db = ctx.needs[1].then(|| {
                    let at = transpose_data(av.data(), m, k);
                    Tensor::new(vec![k, n], matmul_data(&at, go.data(), k, m, n)).unwrap()
                });
                vec![da, db]
            }),
        )
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        let orig = self.shape(a).to_vec();
        self.record(
            "reshape",
            vec![a],
            value,
            Box::new(move |ctx| {
                vec![Some(ctx.grad.clone().reshape(orig.clone()).unwrap())]
            }),
        )
    }

    pub fn transpose2d(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "transpose2d",
                detail: format!("{s:?}"),
            });
        }
        let (r, c) = (s[0], s[1]);
        let value = Tensor::new(vec![c, r], transpose_data(self.value(a).data(), r, c))?;
        self.record(
            "transpose2d",
            vec![a],
            value,
            Box::new(move |ctx| {
                vec![Some(
                    Tensor::new(vec![r, c], transpose_data(ctx.grad.data(), c, r)).unwrap(),
                )]
            }),
        )
    }

    /// Concatenates along axis 0; all other extents must agree.
    pub fn concat0(&mut self, vars: &[Var]) -> Result<Var> {
        if vars.is_empty() {
            return Err(Error::ShapeMismatch {
                op: "concat0",
                detail: "empty input list".into(),
            });
        }
        let tail = self.shape(vars[0])[1..].to_vec();
        let mut total0 = 0;
        let mut data = Vec::new();
        let mut part_lens = Vec::with_capacity(vars.len());
        for &v in vars {
            let s = self.shape(v);
            if s[1..] != tail[..] {
                return Err(Error::ShapeMismatch {
                    op: "concat0",
                    detail: format!("{:?} vs tail {:?}", s, tail),
                });
            }
            total0 += s[0];
            part_lens.push(self.value(v).numel());
            data.extend_from_slice(self.value(v).data());
        }
        let mut shape = vec![total0];
        shape.extend_from_slice(&tail);
        let shapes: Vec<Vec<usize>> = vars.iter().map(|&v| self.shape(v).to_vec()).collect();
        let value = Tensor::new(shape, data)?;
        self.record(
            "concat0",
            vars.to_vec(),
            value,
            Box::new(move |ctx| {
                let mut out = Vec::with_capacity(part_lens.len());
                let mut off = 0;
                for (len, shape) in part_lens.iter().zip(&shapes) {
                    let g = Tensor::new(
                        shape.clone(),
                        ctx.grad.data()[off..off + len].to_vec(),
                    )
                    .unwrap();
                    off += len;
                    out.push(Some(g));
                }
                out
            }),
        )
    }

    /// Stacks equal-shape tensors along a new leading axis.
    pub fn stack0(&mut self, vars: &[Var]) -> Result<Var> {
        if vars.is_empty() {
            return Err(Error::ShapeMismatch {
                op: "stack0",
                detail: "empty input list".into(),
            });
        }
        let inner = self.shape(vars[0]).to_vec();
        let mut data = Vec::new();
        for &v in vars {
            if self.shape(v) != inner.as_slice() {
                return Err(Error::ShapeMismatch {
                    op: "stack0",
                    detail: format!("{:?} vs {:?}", self.shape(v), inner),
                });
            }
            data.extend_from_slice(self.value(v).data());
        }
        let mut shape = vec![vars.len()];
        shape.extend_from_slice(&inner);
        let part = inner.iter().product::<usize>();
        let inner_clone = inner.clone();
        let value = Tensor::new(shape, data)?;
        self.record(
            "stack0",
            vars.to_vec(),
            value,
            Box::new(move |ctx| {
                (0..ctx.parents.len())
                    .map(|i| {
                        Some(
                            Tensor::new(
                                inner_clone.clone(),
                                ctx.grad.data()[i * part..(i + 1) * part].to_vec(),
                            )
                            .unwrap(),
                        )
                    })
                    .collect()
            }),
        )
    }

    /// Slices `len` rows starting at `start` along axis 0.
    pub fn slice0(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if start + len > s[0] {
            return Err(Error::ShapeMismatch {
                op: "slice0",
                detail: format!("slice {start}..{} out of {:?}", start + len, s),
            });
        }
        let stride: usize = s[1..].iter().product();
        let mut shape = vec![len];
        shape.extend_from_slice(&s[1..]);
        let value = Tensor::new(
            shape,
            self.value(a).data()[start * stride..(start + len) * stride].to_vec(),
        )?;
        let full = s.clone();
        self.record(
            "slice0",
            vec![a],
            value,
            Box::new(move |ctx| {
                let mut g = Tensor::zeros(&full);
                g.data_mut()[start * stride..(start + len) * stride]
                    .copy_from_slice(ctx.grad.data());
                vec![Some(g)]
            }),
        )
    }

    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if perm.len() != s.len() {
            return Err(Error::ShapeMismatch {
                op: "permute",
                detail: format!("perm {perm:?} vs shape {s:?}"),
            });
        }
        let value = permute_data(self.value(a), perm)?;
        let mut inv = vec![0usize; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        self.record(
            "permute",
            vec![a],
            value,
            Box::new(move |ctx| vec![Some(permute_data(ctx.grad, &inv).unwrap())]),
        )
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let total: f64 = self.value(a).data().iter().sum();
        let shape = self.shape(a).to_vec();
        self.record(
            "sum_all",
            vec![a],
            Tensor::scalar(total),
            Box::new(move |ctx| {
                vec![Some(Tensor::full(&shape, ctx.grad.item()))]
            }),
        )
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).numel() as f64;
        let s = self.sum_all(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Row sums of a [r, c] matrix -> [r].
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "row_sum",
                detail: format!("{s:?}"),
            });
        }
        let (r, c) = (s[0], s[1]);
        let data: Vec<f64> = self
            .value(a)
            .data()
            .chunks(c)
            .map(|row| row.iter().sum())
            .collect();
        self.record(
            "row_sum",
            vec![a],
            Tensor::new(vec![r], data)?,
            Box::new(move |ctx| {
                let mut g = vec![0.0; r * c];
                for (i, chunk) in g.chunks_mut(c).enumerate() {
                    chunk.fill(ctx.grad.data()[i]);
                }
                vec![Some(Tensor::new(vec![r, c], g).unwrap())]
            }),
        )
    }

    // -- small composites ---------------------------------------------------

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let p = self.mul(a, b)?;
        self.sum_all(p)
    }

    /// ||a||₂ with an epsilon floor inside the sqrt for a usable gradient.
    pub fn l2_norm(&mut self, a: Var, eps: f64) -> Result<Var> {
        let sq = self.square(a)?;
        let s = self.sum_all(sq)?;
        let s = self.add_scalar(s, eps)?;
        self.sqrt(s)
    }

    /// Cosine similarity between two same-shape vectors, scalar output.
    pub fn cosine_sim(&mut self, a: Var, b: Var) -> Result<Var> {
        let num = self.dot(a, b)?;
        let na = self.l2_norm(a, 1e-12)?;
        let nb = self.l2_norm(b, 1e-12)?;
        let denom = self.mul(na, nb)?;
        self.div(num, denom)
    }

    /// a / ||a||₂ — unit-normalized vector.
    pub fn l2_normalize(&mut self, a: Var) -> Result<Var> {
        let n = self.l2_norm(a, 1e-12)?;
        self.div(a, n)
    }

    /// log σ(x) = −softplus(−x), elementwise.
    pub fn log_sigmoid(&mut self, a: Var) -> Result<Var> {
        let neg = self.neg(a)?;
        let sp = self.softplus(neg)?;
        self.neg(sp)
    }
}

pub(crate) fn transpose_data(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

fn permute_data(t: &Tensor, perm: &[usize]) -> Result<Tensor> {
    let s = t.shape();
    let rank = s.len();
    let out_shape: Vec<usize> = perm.iter().map(|&p| s[p]).collect();
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * s[i + 1];
    }
    let mut out_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        out_strides[i] = out_strides[i + 1] * out_shape[i + 1];
    }
    let mut data = vec![0.0; t.numel()];
    let mut idx = vec![0usize; rank];
    for (out_pos, slot) in data.iter_mut().enumerate() {
        let mut rem = out_pos;
        for i in 0..rank {
            idx[i] = rem / out_strides[i];
            rem %= out_strides[i];
        }
        let mut in_pos = 0;
        for (i, &p) in perm.iter().enumerate() {
            in_pos += idx[i] * in_strides[p];
        }
        *slot = t.data()[in_pos];
    }
    Tensor::new(out_shape, data)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn randn(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let u1: f64 = rng.gen_range(1e-10..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect();
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut g = Graph::new();
        let i3 = g.constant(Tensor::eye(3));
        let b = g.constant(Tensor::new(vec![3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap());
        let c = g.matmul(i3, b).unwrap();
        assert_eq!(g.value(c), g.value(b));
    }

    #[test]
    fn matmul_zero() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::zeros(&[2, 3]));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = g.constant(randn(&mut rng, &[3, 4]));
        let c = g.matmul(z, b).unwrap();
        assert_eq!(g.value(c), &Tensor::zeros(&[2, 4]));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = randn(&mut rng, &[3, 2]);
        let b = randn(&mut rng, &[2, 3]);
        // nested-loop reference
        let mut expect = vec![0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                for p in 0..2 {
                    expect[i * 3 + j] += a.data()[i * 2 + p] * b.data()[p * 3 + j];
                }
            }
        }
        let mut g = Graph::new();
        let av = g.constant(a);
        let bv = g.constant(b);
        let c = g.matmul(av, bv).unwrap();
        for (got, want) in g.value(c).data().iter().zip(&expect) {
            assert!((got - want).abs() < 1e-6);
        }
    }

    #[test]
    fn tanh_is_odd_at_zero() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::scalar(0.0));
        let y = g.tanh(x).unwrap();
        assert_eq!(g.value(y).item(), 0.0);
    }

    #[test]
    fn leaky_relu_negative_slope() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::scalar(-1.0));
        let y = g.leaky_relu(x, 0.2).unwrap();
        assert!((g.value(y).item() + 0.2).abs() < 1e-12);
    }

    #[test]
    fn tanh_grad_matches_central_difference() {
        let x0: f64 = 0.3;
        let eps = 1e-6;
        let numeric = ((x0 + eps).tanh() - (x0 - eps).tanh()) / (2.0 * eps);
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(x0), true);
        let y = g.tanh(x).unwrap();
        g.backward(y).unwrap();
        let analytic = g.grad(x).unwrap().item();
        assert!((analytic - numeric).abs() < 1e-6);
    }

    #[test]
    fn backward_sum_of_squares() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(vec![1.0, -2.0, 3.0]), true);
        let sq = g.square(x).unwrap();
        let loss = g.sum_all(sq).unwrap();
        g.backward(loss).unwrap();
        let grad = g.grad(x).unwrap();
        assert_eq!(grad.data(), &[2.0, -4.0, 6.0]);
    }

    #[test]
    fn backward_constant_has_no_grads() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(vec![1.0, 2.0]), true);
        let c = g.constant(Tensor::scalar(5.0));
        g.sum_all(x).unwrap(); // unrelated use
        g.backward(c).unwrap();
        assert!(g.grad(x).is_none());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(vec![1.0, 2.0]), true);
        let y = g.square(x).unwrap();
        assert!(matches!(g.backward(y), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn grad_accumulates_across_uses() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(2.0), true);
        let a = g.square(x).unwrap(); // x²
        let b = g.scale(x, 3.0).unwrap(); // 3x
        let s = g.add(a, b).unwrap();
        g.backward(s).unwrap();
        // d/dx (x² + 3x) = 2x + 3 = 7
        assert!((g.grad(x).unwrap().item() - 7.0).abs() < 1e-12);
    }

    #[test]
    fn backward_is_linear_in_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xv = randn(&mut rng, &[5]);
        let (alpha, beta) = (0.7, -1.3);

        let run = |a: f64, b: f64| -> Tensor {
            let mut g = Graph::new();
            let x = g.leaf(xv.clone(), true);
            let t = g.tanh(x).unwrap();
            let l1 = g.sum_all(t).unwrap();
            let sq = g.square(x).unwrap();
            let l2 = g.sum_all(sq).unwrap();
            let l1s = g.scale(l1, a).unwrap();
            let l2s = g.scale(l2, b).unwrap();
            let loss = g.add(l1s, l2s).unwrap();
            g.backward(loss).unwrap();
            g.grad(x).unwrap().clone()
        };

        let combined = run(alpha, beta);
        let g1 = run(1.0, 0.0);
        let g2 = run(0.0, 1.0);
        for i in 0..5 {
            let lin = alpha * g1.data()[i] + beta * g2.data()[i];
            assert!((combined.data()[i] - lin).abs() < 1e-6);
        }
    }

    #[test]
    fn nan_fails_fast_with_op_name() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::scalar(1e308));
        let err = g.exp(x).unwrap_err();
        assert!(err.to_string().contains("exp"));
    }

    #[test]
    fn log_rejects_non_positive() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::scalar(0.0));
        assert!(matches!(g.log(x), Err(Error::Domain { .. })));
    }

    #[test]
    fn suffix_broadcast_add_bias() {
        let mut g = Graph::new();
        let x = g.leaf(
            Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap(),
            true,
        );
        let b = g.leaf(Tensor::from_vec(vec![10., 20., 30.]), true);
        let y = g.add(x, b).unwrap();
        assert_eq!(g.value(y).data(), &[11., 22., 33., 14., 25., 36.]);
        let s = g.sum_all(y).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(b).unwrap().data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn permute_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = randn(&mut rng, &[2, 3, 4]);
        let mut g = Graph::new();
        let x = g.constant(t.clone());
        let p = g.permute(x, &[2, 0, 1]).unwrap();
        assert_eq!(g.shape(p), &[4, 2, 3]);
        let back = g.permute(p, &[1, 2, 0]).unwrap();
        assert_eq!(g.value(back), &t);
    }

    #[test]
    fn cosine_sim_of_self_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = randn(&mut rng, &[16]);
        let mut g = Graph::new();
        let a = g.constant(t.clone());
        let b = g.constant(t);
        let s = g.cosine_sim(a, b).unwrap();
        assert!((g.value(s).item() - 1.0).abs() < 1e-9);
    }
}
