//! 3-D convolution (im2col + matmul), average pooling and instance norm.
//!
//! The nested-loop reference convolution lives in the test module and is the
//! oracle the im2col path is checked against.

use crate::error::{Error, Result};
use crate::tensor::graph::{Graph, Var};
use crate::tensor::{matmul_data, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv3dSpec {
    pub stride: (usize, usize, usize),
    pub pad: (usize, usize, usize),
}

pub fn out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

struct ConvDims {
    c_in: usize,
    c_out: usize,
    t: usize,
    h: usize,
    w: usize,
    kt: usize,
    kh: usize,
    kw: usize,
    ot: usize,
    oh: usize,
    ow: usize,
    spec: Conv3dSpec,
}

impl ConvDims {
    fn ck(&self) -> usize {
        self.c_in * self.kt * self.kh * self.kw
    }
    fn positions(&self) -> usize {
        self.ot * self.oh * self.ow
    }
}

fn conv_dims(input: &[usize], kernel: &[usize], spec: Conv3dSpec) -> Result<ConvDims> {
    if input.len() != 4 || kernel.len() != 5 {
        return Err(Error::ShapeMismatch {
            op: "conv3d",
            detail: format!("input {:?}, kernel {:?}", input, kernel),
        });
    }
    if input[0] != kernel[1] {
        return Err(Error::ShapeMismatch {
            op: "conv3d",
            detail: format!("input channels {} != kernel C_in {}", input[0], kernel[1]),
        });
    }
    let (t, h, w) = (input[1], input[2], input[3]);
    let (kt, kh, kw) = (kernel[2], kernel[3], kernel[4]);
    let (st, sh, sw) = spec.stride;
    let (pt, ph, pw) = spec.pad;
    let ot = out_extent(t, kt, st, pt);
    let oh = out_extent(h, kh, sh, ph);
    let ow = out_extent(w, kw, sw, pw);
    match (ot, oh, ow) {
        (Some(ot), Some(oh), Some(ow)) if ot >= 1 && oh >= 1 && ow >= 1 => Ok(ConvDims {
            c_in: input[0],
            c_out: kernel[0],
            t,
            h,
            w,
            kt,
            kh,
            kw,
            ot,
            oh,
            ow,
            spec,
        }),
        _ => Err(Error::ShapeMismatch {
            op: "conv3d",
            detail: format!(
                "output extent < 1 for input {:?}, kernel {:?}, stride {:?}, pad {:?}",
                input, kernel, spec.stride, spec.pad
            ),
        }),
    }
}

/// cols[ck, p]: column p holds the receptive field for output position p.
fn im2col(x: &[f64], d: &ConvDims) -> Vec<f64> {
    let (st, sh, sw) = d.spec.stride;
    let (pt, ph, pw) = d.spec.pad;
    let positions = d.positions();
    let mut cols = vec![0.0; d.ck() * positions];
    let hw = d.h * d.w;
    let thw = d.t * hw;
    let mut row = 0;
    for c in 0..d.c_in {
        for dt in 0..d.kt {
            for dh in 0..d.kh {
                for dw in 0..d.kw {
                    let dst = &mut cols[row * positions..(row + 1) * positions];
                    let mut p = 0;
                    for ot in 0..d.ot {
                        let it = (ot * st + dt) as isize - pt as isize;
                        for oh in 0..d.oh {
                            let ih = (oh * sh + dh) as isize - ph as isize;
                            for ow in 0..d.ow {
                                let iw = (ow * sw + dw) as isize - pw as isize;
                                if it >= 0
                                    && (it as usize) < d.t
                                    && ih >= 0
                                    && (ih as usize) < d.h
                                    && iw >= 0
                                    && (iw as usize) < d.w
                                {
                                    dst[p] = x[c * thw
                                        + it as usize * hw
                                        + ih as usize * d.w
                                        + iw as usize];
                                }
                                p += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
    cols
}

/// Scatter-add of column gradients back to the input layout.
fn col2im(dcols: &[f64], d: &ConvDims) -> Vec<f64> {
    let (st, sh, sw) = d.spec.stride;
    let (pt, ph, pw) = d.spec.pad;
    let positions = d.positions();
    let hw = d.h * d.w;
    let thw = d.t * hw;
    let mut dx = vec![0.0; d.c_in * thw];
    let mut row = 0;
    for c in 0..d.c_in {
        for dt in 0..d.kt {
            for dh in 0..d.kh {
                for dw in 0..d.kw {
                    let src = &dcols[row * positions..(row + 1) * positions];
                    let mut p = 0;
                    for ot in 0..d.ot {
                        let it = (ot * st + dt) as isize - pt as isize;
                        for oh in 0..d.oh {
                            let ih = (oh * sh + dh) as isize - ph as isize;
                            for ow in 0..d.ow {
                                let iw = (ow * sw + dw) as isize - pw as isize;
                                if it >= 0
                                    && (it as usize) < d.t
                                    && ih >= 0
                                    && (ih as usize) < d.h
                                    && iw >= 0
                                    && (iw as usize) < d.w
                                {
                                    dx[c * thw
                                        + it as usize * hw
                                        + ih as usize * d.w
                                        + iw as usize] += src[p];
                                }
                                p += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
    dx
}

impl Graph {
    /// 3-D convolution: input [C_in, T, H, W], kernel [C_out, C_in, kt, kh, kw].
    pub fn conv3d(&mut self, input: Var, kernel: Var, spec: Conv3dSpec) -> Result<Var> {
        let d = conv_dims(self.shape(input), self.shape(kernel), spec)?;
        let positions = d.positions();
        let ck = d.ck();
        let cols = im2col(self.value(input).data(), &d);
        let out = matmul_data(self.value(kernel).data(), &cols, d.c_out, ck, positions);
        let value = Tensor::new(vec![d.c_out, d.ot, d.oh, d.ow], out)?;
        let in_shape = self.shape(input).to_vec();
        let k_shape = self.shape(kernel).to_vec();
        self.record(
            "conv3d",
            vec![input, kernel],
            value,
            Box::new(move |ctx| {
                let d = conv_dims(&in_shape, &k_shape, spec).expect("dims revalidate");
                let go = ctx.grad.data();
                let dk = ctx.needs[1].then(|| {
                    // dW = dOut · colsᵀ, recomputing cols from the saved input
                    let cols = im2col(ctx.parents[0].data(), &d);
                    let colst = super::graph::transpose_data(&cols, ck, positions);
                    Tensor::new(
                        k_shape.clone(),
                        matmul_data(go, &colst, d.c_out, positions, ck),
                    )
                    .unwrap()
                });
                let dx = ctx.needs[0].then(|| {
                    let wt =
                        super::graph::transpose_data(ctx.parents[1].data(), d.c_out, ck);
                    let dcols = matmul_data(&wt, go, ck, d.c_out, positions);
                    Tensor::new(in_shape.clone(), col2im(&dcols, &d)).unwrap()
                });
                vec![dx, dk]
            }),
        )
    }

    /// Adds a per-channel bias to a [C, ...] tensor.
    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let bs = self.shape(bias).to_vec();
        if bs.len() != 1 || bs[0] != xs[0] {
            return Err(Error::ShapeMismatch {
                op: "add_channel_bias",
                detail: format!("x {:?}, bias {:?}", xs, bs),
            });
        }
        let per: usize = xs[1..].iter().product();
        let mut data = self.value(x).data().to_vec();
        for (c, chunk) in data.chunks_mut(per).enumerate() {
            let b = self.value(bias).data()[c];
            for v in chunk {
                *v += b;
            }
        }
        let c = xs[0];
        let value = Tensor::new(xs.clone(), data)?;
        self.record(
            "add_channel_bias",
            vec![x, bias],
            value,
            Box::new(move |ctx| {
                let dx = ctx.needs[0].then(|| ctx.grad.clone());
                let db = ctx.needs[1].then(|| {
                    let sums: Vec<f64> = ctx
                        .grad
                        .data()
                        .chunks(per)
                        .map(|ch| ch.iter().sum())
                        .collect();
                    Tensor::new(vec![c], sums).unwrap()
                });
                vec![dx, db]
            }),
        )
    }

    /// 2x average pooling over the trailing two (spatial) dims of [.., H, W].
    pub fn avg_pool_hw2(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let rank = s.len();
        if rank < 2 || s[rank - 2] < 2 || s[rank - 1] < 2 {
            return Err(Error::ShapeMismatch {
                op: "avg_pool_hw2",
                detail: format!("{s:?}"),
            });
        }
        let (h, w) = (s[rank - 2], s[rank - 1]);
        let (oh, ow) = (h / 2, w / 2);
        let lead: usize = s[..rank - 2].iter().product();
        let mut out = vec![0.0; lead * oh * ow];
        let xd = self.value(x).data();
        for l in 0..lead {
            for i in 0..oh {
                for j in 0..ow {
                    let base = l * h * w + 2 * i * w + 2 * j;
                    out[l * oh * ow + i * ow + j] =
                        0.25 * (xd[base] + xd[base + 1] + xd[base + w] + xd[base + w + 1]);
                }
            }
        }
        let mut out_shape = s[..rank - 2].to_vec();
        out_shape.push(oh);
        out_shape.push(ow);
        let in_shape = s.clone();
        let value = Tensor::new(out_shape, out)?;
        self.record(
            "avg_pool_hw2",
            vec![x],
            value,
            Box::new(move |ctx| {
                let mut dx = vec![0.0; in_shape.iter().product()];
                let go = ctx.grad.data();
                for l in 0..lead {
                    for i in 0..oh {
                        for j in 0..ow {
                            let g = 0.25 * go[l * oh * ow + i * ow + j];
                            let base = l * h * w + 2 * i * w + 2 * j;
                            dx[base] += g;
                            dx[base + 1] += g;
                            dx[base + w] += g;
                            dx[base + w + 1] += g;
                        }
                    }
                }
                vec![Some(Tensor::new(in_shape.clone(), dx).unwrap())]
            }),
        )
    }

    /// Per-channel standardization of [C, T, H, W] over T·H·W, no learned affine.
    pub fn instance_norm3d(&mut self, x: Var, eps: f64) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return Err(Error::ShapeMismatch {
                op: "instance_norm3d",
                detail: format!("{s:?}"),
            });
        }
        let per: usize = s[1..].iter().product();
        if per < 2 {
            return Err(Error::Domain {
                op: "instance_norm3d",
                detail: "single-element channel".into(),
            });
        }
        let c = s[0];
        let xd = self.value(x).data();
        let mut out = vec![0.0; xd.len()];
        let mut inv_std = vec![0.0; c];
        for ch in 0..c {
            let chunk = &xd[ch * per..(ch + 1) * per];
            let mean = chunk.iter().sum::<f64>() / per as f64;
            let var = chunk.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / per as f64;
            let istd = 1.0 / (var + eps).sqrt();
            inv_std[ch] = istd;
            for (o, &v) in out[ch * per..(ch + 1) * per].iter_mut().zip(chunk) {
                *o = (v - mean) * istd;
            }
        }
        let value = Tensor::new(s.clone(), out)?;
        self.record(
            "instance_norm3d",
            vec![x],
            value,
            Box::new(move |ctx| {
                let y = ctx.value.data();
                let go = ctx.grad.data();
                let mut dx = vec![0.0; go.len()];
                let n = per as f64;
                for ch in 0..c {
                    let ys = &y[ch * per..(ch + 1) * per];
                    let gs = &go[ch * per..(ch + 1) * per];
                    let mean_g = gs.iter().sum::<f64>() / n;
                    let mean_gy = gs.iter().zip(ys).map(|(g, yv)| g * yv).sum::<f64>() / n;
                    for ((d, &g), &yv) in dx[ch * per..(ch + 1) * per]
                        .iter_mut()
                        .zip(gs)
                        .zip(ys)
                    {
                        *d = inv_std[ch] * (g - mean_g - yv * mean_gy);
                    }
                }
                vec![Some(Tensor::new(ctx.value.shape().to_vec(), dx).unwrap())]
            }),
        )
    }
}
