//! The two discriminators and the contrastive machinery.
//!
//! `VideoDisc` is a multi-scale PatchGAN over 3-D patches: each scale owns an
//! independent conv stack and sees the input average-pooled 2^s times in
//! space. `ImageDisc` is a strided 2-D conv stack with a linear head; its
//! trunk doubles as the contrastive embedder backbone (the projection head
//! replaces the final block + head). A FIFO memory bank and a momentum copy
//! of the embedder supply contrastive negatives and stable keys.

use std::collections::VecDeque;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::init::conv_init;
use crate::nn::mlp::{mlp_forward, Activation, MlpParams, MlpVars};
use crate::tensor::{Conv3dSpec, Graph, Tensor, Var};

pub const LEAKY_SLOPE: f64 = 0.2;
pub const NORM_EPS: f64 = 1e-5;

/// Static plan for one conv layer: kernel extents after the clamp rule,
/// stride/pad, whether instance norm and the activation apply, and the
/// output extents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvPlan {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: (usize, usize, usize),
    pub spec: Conv3dSpec,
    pub norm: bool,
    pub act: bool,
    pub out: (usize, usize, usize),
}

/// Per-dimension clamp: a nominal kernel/pad that would not fit the padded
/// extent degrades to kernel = extent, pad = 0.
fn clamp_dim(extent: usize, kernel: usize, pad: usize) -> (usize, usize) {
    if extent + 2 * pad < kernel {
        (extent, 0)
    } else {
        (kernel, pad)
    }
}

/// Plans a PatchGAN-style stack: nominal 4^3 kernels with pad 1, stride 2
/// everywhere except the last two layers (stride 1), LeakyReLU on all but
/// the final layer, instance norm on the middle layers wherever the output
/// is bigger than a single cell.
pub fn plan_video_stack(
    input: (usize, usize, usize, usize),
    channels: &[usize],
) -> Result<Vec<ConvPlan>> {
    if channels.len() < 2 {
        return Err(Error::Config("discriminator needs >= 2 layers".into()));
    }
    let (c_in, mut t, mut h, mut w) = input;
    let n = channels.len();
    let mut plans = Vec::with_capacity(n);
    let mut prev_ch = c_in;
    for (i, &ch) in channels.iter().enumerate() {
        let stride = if i + 2 < n { 2 } else { 1 };
        let (kt, pt) = clamp_dim(t, 4, 1);
        let (kh, ph) = clamp_dim(h, 4, 1);
        let (kw, pw) = clamp_dim(w, 4, 1);
        let spec = Conv3dSpec {
            stride: (stride.min(kt.max(1)), stride, stride),
            pad: (pt, ph, pw),
        };
        let ot = (t + 2 * pt - kt) / spec.stride.0 + 1;
        let oh = (h + 2 * ph - kh) / spec.stride.1 + 1;
        let ow = (w + 2 * pw - kw) / spec.stride.2 + 1;
        if ot < 1 || oh < 1 || ow < 1 {
            return Err(Error::Config(format!(
                "input {input:?} too small for a {n}-layer stack"
            )));
        }
        let last = i + 1 == n;
        let middle = i >= 1 && i + 1 < n;
        plans.push(ConvPlan {
            in_ch: prev_ch,
            out_ch: ch,
            kernel: (kt, kh, kw),
            spec,
            norm: middle && ot * oh * ow > 1,
            act: !last,
            out: (ot, oh, ow),
        });
        prev_ch = ch;
        t = ot;
        h = oh;
        w = ow;
    }
    Ok(plans)
}

#[derive(Debug, Clone)]
pub struct ConvLayerParams {
    pub weight: Tensor, // [C_out, C_in, kt, kh, kw]
    pub bias: Tensor,   // [C_out]
    pub plan: ConvPlan,
}

impl ConvLayerParams {
    fn init(rng: &mut ChaCha8Rng, plan: ConvPlan) -> Self {
        let (kt, kh, kw) = plan.kernel;
        ConvLayerParams {
            weight: conv_init(rng, &[plan.out_ch, plan.in_ch, kt, kh, kw]),
            bias: Tensor::zeros(&[plan.out_ch]),
            plan,
        }
    }
}

pub struct ConvLayerVars {
    pub weight: Var,
    pub bias: Var,
    pub plan: ConvPlan,
}

fn bind_stack(layers: &[ConvLayerParams], g: &mut Graph, trainable: bool) -> Vec<ConvLayerVars> {
    layers
        .iter()
        .map(|l| ConvLayerVars {
            weight: g.leaf(l.weight.clone(), trainable),
            bias: g.leaf(l.bias.clone(), trainable),
            plan: l.plan.clone(),
        })
        .collect()
}

fn stack_forward(g: &mut Graph, x: Var, layers: &[ConvLayerVars]) -> Result<Vec<Var>> {
    let mut activations = Vec::with_capacity(layers.len());
    let mut cur = x;
    for layer in layers {
        let z = g.conv3d(cur, layer.weight, layer.plan.spec)?;
        let z = g.add_channel_bias(z, layer.bias)?;
        let z = if layer.plan.norm {
            g.instance_norm3d(z, NORM_EPS)?
        } else {
            z
        };
        cur = if layer.plan.act {
            g.leaky_relu(z, LEAKY_SLOPE)?
        } else {
            z
        };
        activations.push(cur);
    }
    Ok(activations)
}

// ---------------------------------------------------------------------------
// video discriminator
// ---------------------------------------------------------------------------

/// Multi-scale 3-D patch discriminator. Scale s sees the input pooled 2^s
/// times in H and W. Each scale owns independent weights by default; with
/// `shared` a single stack is reused across scales (gradients accumulate),
/// which requires the per-scale kernel plans to agree in shape.
#[derive(Debug, Clone)]
pub struct VideoDiscParams {
    /// Weight stacks; length 1 when `shared`, else one per scale.
    pub scales: Vec<Vec<ConvLayerParams>>,
    /// Layer plans for every scale, including output extents.
    pub plans: Vec<Vec<ConvPlan>>,
    pub shared: bool,
    pub input: (usize, usize, usize, usize),
}

impl VideoDiscParams {
    pub fn init(
        rng: &mut ChaCha8Rng,
        input: (usize, usize, usize, usize),
        channels: &[usize],
        num_scales: usize,
        shared: bool,
    ) -> Result<Self> {
        if num_scales == 0 {
            return Err(Error::Config("need at least one scale".into()));
        }
        let (c, t, mut h, mut w) = input;
        let mut plans = Vec::with_capacity(num_scales);
        for s in 0..num_scales {
            if s > 0 {
                if h % 2 != 0 || w % 2 != 0 {
                    return Err(Error::Config(format!(
                        "spatial size {h}x{w} not divisible for scale {s}"
                    )));
                }
                h /= 2;
                w /= 2;
            }
            plans.push(plan_video_stack((c, t, h, w), channels)?);
        }
        if shared {
            for (s, ps) in plans.iter().enumerate().skip(1) {
                let same = ps.len() == plans[0].len()
                    && ps.iter().zip(&plans[0]).all(|(a, b)| {
                        a.in_ch == b.in_ch
                            && a.out_ch == b.out_ch
                            && a.kernel == b.kernel
                            && a.spec == b.spec
                    });
                if !same {
                    return Err(Error::Config(format!(
                        "scale {s} kernel plan differs from scale 0; cannot share weights"
                    )));
                }
            }
        }
        let stacks = if shared { 1 } else { num_scales };
        let scales = plans[..stacks]
            .iter()
            .map(|ps| ps.iter().map(|p| ConvLayerParams::init(rng, p.clone())).collect())
            .collect();
        Ok(VideoDiscParams { scales, plans, shared, input })
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.scales
            .iter_mut()
            .flatten()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.scales
            .iter()
            .flatten()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> VideoDiscVars {
        let scales = if self.shared {
            // one set of leaves, re-planned per scale so gradients accumulate
            let bound = bind_stack(&self.scales[0], g, trainable);
            self.plans
                .iter()
                .map(|ps| {
                    ps.iter()
                        .zip(&bound)
                        .map(|(plan, v)| ConvLayerVars {
                            weight: v.weight,
                            bias: v.bias,
                            plan: plan.clone(),
                        })
                        .collect()
                })
                .collect()
        } else {
            self.scales.iter().map(|s| bind_stack(s, g, trainable)).collect()
        };
        VideoDiscVars { scales, shared: self.shared, input: self.input }
    }
}

pub struct VideoDiscVars {
    pub scales: Vec<Vec<ConvLayerVars>>,
    pub shared: bool,
    pub input: (usize, usize, usize, usize),
}

impl VideoDiscVars {
    /// Distinct trainable leaves, in the same order as
    /// [`VideoDiscParams::tensors`].
    pub fn leaves(&self) -> Vec<Var> {
        let stacks = if self.shared { &self.scales[..1] } else { &self.scales[..] };
        stacks
            .iter()
            .flatten()
            .flat_map(|l| [l.weight, l.bias])
            .collect()
    }
}

/// Per-scale patch-logit grids for a video volume [C, T, H, W].
pub fn video_disc_forward(g: &mut Graph, x: Var, vars: &VideoDiscVars) -> Result<Vec<Var>> {
    let expect = [vars.input.0, vars.input.1, vars.input.2, vars.input.3];
    if g.shape(x) != expect {
        return Err(Error::ShapeMismatch {
            op: "video_disc",
            detail: format!("input {:?}, expected {:?}", g.shape(x), expect),
        });
    }
    let mut cur = x;
    let mut out = Vec::with_capacity(vars.scales.len());
    for (s, stack) in vars.scales.iter().enumerate() {
        if s > 0 {
            cur = g.avg_pool_hw2(cur)?;
        }
        let acts = stack_forward(g, cur, stack)?;
        out.push(*acts.last().expect("nonempty stack"));
    }
    Ok(out)
}

/// Mean patch logit, averaged uniformly over scales.
pub fn video_disc_score(g: &mut Graph, logits: &[Var]) -> Result<Var> {
    let mut means = Vec::with_capacity(logits.len());
    for &l in logits {
        means.push(g.mean_all(l)?);
    }
    let stacked = g.concat0(&means)?;
    g.mean_all(stacked)
}

/// In-domain conditioning: frame 1 is stacked channel-wise with each of the
/// remaining frames, giving [2c, n-1, h, w].
pub fn in_domain_video_input(g: &mut Graph, frames: &[Var]) -> Result<Var> {
    if frames.len() < 2 {
        return Err(Error::ShapeMismatch {
            op: "video_input",
            detail: format!("need >= 2 frames, got {}", frames.len()),
        });
    }
    let mut pairs = Vec::with_capacity(frames.len() - 1);
    for &f in &frames[1..] {
        pairs.push(g.concat0(&[frames[0], f])?);
    }
    let stacked = g.stack0(&pairs)?; // [n-1, 2c, h, w]
    g.permute(stacked, &[1, 0, 2, 3])
}

/// Cross-domain input: all frames as they are, [c, n, h, w].
pub fn cross_domain_video_input(g: &mut Graph, frames: &[Var]) -> Result<Var> {
    if frames.is_empty() {
        return Err(Error::ShapeMismatch {
            op: "video_input",
            detail: "empty frame list".into(),
        });
    }
    let stacked = g.stack0(frames)?; // [n, c, h, w]
    g.permute(stacked, &[1, 0, 2, 3])
}

// ---------------------------------------------------------------------------
// image discriminator
// ---------------------------------------------------------------------------

/// 2-D conv trunk (channel-doubling, stride 2) with a linear head on the
/// globally sum-pooled final features.
#[derive(Debug, Clone)]
pub struct ImageDiscParams {
    pub blocks: Vec<ConvLayerParams>,
    pub head_w: Tensor, // [1, C_last]
    pub head_b: Tensor, // [1]
    pub input: (usize, usize, usize),
}

/// 2-D stacks reuse the 3-D planner with a singleton time axis.
fn plan_image_stack(input: (usize, usize, usize), blocks: usize, base: usize) -> Result<Vec<ConvPlan>> {
    let channels: Vec<usize> = (0..blocks).map(|i| base << i).collect();
    let mut plans = plan_video_stack((input.0, 1, input.1, input.2), &channels)?;
    for p in &mut plans {
        // trunk blocks all activate and all stride 2 where they fit; no norm
        p.act = true;
        p.norm = false;
    }
    Ok(plans)
}

impl ImageDiscParams {
    pub fn init(
        rng: &mut ChaCha8Rng,
        input: (usize, usize, usize),
        blocks: usize,
        base_channels: usize,
    ) -> Result<Self> {
        if blocks < 2 {
            return Err(Error::Config("image discriminator needs >= 2 blocks".into()));
        }
        let plans = plan_image_stack(input, blocks, base_channels)?;
        let last = plans.last().expect("nonempty").out_ch;
        Ok(ImageDiscParams {
            blocks: plans.into_iter().map(|p| ConvLayerParams::init(rng, p)).collect(),
            head_w: conv_init(rng, &[1, last]),
            head_b: Tensor::zeros(&[1]),
            input,
        })
    }

    pub fn trunk_dim(&self) -> usize {
        self.blocks.last().expect("nonempty").plan.out_ch
    }

    /// Channel count after the trunk minus its final block (the embedder
    /// attachment point).
    pub fn penultimate_dim(&self) -> usize {
        let n = self.blocks.len();
        self.blocks[n - 2].plan.out_ch
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self
            .blocks
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect();
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self
            .blocks
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect();
        out.push(&self.head_w);
        out.push(&self.head_b);
        out
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> ImageDiscVars {
        ImageDiscVars {
            blocks: bind_stack(&self.blocks, g, trainable),
            head_w: g.leaf(self.head_w.clone(), trainable),
            head_b: g.leaf(self.head_b.clone(), trainable),
            input: self.input,
        }
    }
}

pub struct ImageDiscVars {
    pub blocks: Vec<ConvLayerVars>,
    pub head_w: Var,
    pub head_b: Var,
    pub input: (usize, usize, usize),
}

impl ImageDiscVars {
    pub fn leaves(&self) -> Vec<Var> {
        let mut out: Vec<Var> = self
            .blocks
            .iter()
            .flat_map(|l| [l.weight, l.bias])
            .collect();
        out.push(self.head_w);
        out.push(self.head_b);
        out
    }
}

/// Global average pool [C, T, H, W] -> column [C, 1].
pub fn global_avg_pool(g: &mut Graph, x: Var) -> Result<Var> {
    let s = g.shape(x).to_vec();
    if s.len() != 4 {
        return Err(Error::ShapeMismatch {
            op: "global_avg_pool",
            detail: format!("want rank 4, got {s:?}"),
        });
    }
    let per: usize = s[1..].iter().product();
    let flat = g.reshape(x, vec![s[0], per])?;
    let sums = g.row_sum(flat)?;
    let col = g.reshape(sums, vec![s[0], 1])?;
    g.scale(col, 1.0 / per as f64)
}

/// Scalar logit plus every block activation (for feature matching and the
/// contrastive trunk). Image is [c, h, w].
pub fn image_disc_forward(
    g: &mut Graph,
    image: Var,
    vars: &ImageDiscVars,
) -> Result<(Var, Vec<Var>)> {
    let (c, h, w) = vars.input;
    if g.shape(image) != [c, h, w] {
        return Err(Error::ShapeMismatch {
            op: "image_disc",
            detail: format!("input {:?}, expected [{c}, {h}, {w}]", g.shape(image)),
        });
    }
    let vol = g.reshape(image, vec![c, 1, h, w])?;
    let acts = stack_forward(g, vol, &vars.blocks)?;
    let last = *acts.last().expect("nonempty");
    let ls = g.shape(last).to_vec();
    let per: usize = ls[1..].iter().product();
    let flat = g.reshape(last, vec![ls[0], per])?;
    let sums = g.row_sum(flat)?; // global sum pool
    let pooled = g.reshape(sums, vec![ls[0], 1])?;
    let logit = g.matmul(vars.head_w, pooled)?;
    let bias = g.reshape(vars.head_b, vec![1, 1])?;
    let logit = g.add(logit, bias)?;
    let logit = g.reshape(logit, vec![])?;
    Ok((logit, acts))
}

// ---------------------------------------------------------------------------
// contrastive embedder, momentum copy, memory bank
// ---------------------------------------------------------------------------

/// Embedder = image-discriminator trunk minus its final block, average
/// pooled, then a projection MLP, then L2 normalization.
#[derive(Debug, Clone)]
pub struct ContrastiveEncoderParams {
    pub disc: ImageDiscParams,
    pub projection: MlpParams,
}

impl ContrastiveEncoderParams {
    pub fn init(
        rng: &mut ChaCha8Rng,
        disc: &ImageDiscParams,
        proj_hidden: usize,
        embed_dim: usize,
    ) -> Self {
        ContrastiveEncoderParams {
            disc: disc.clone(),
            projection: MlpParams::init(
                rng,
                &[disc.penultimate_dim(), proj_hidden, embed_dim],
                Activation::LeakyRelu(LEAKY_SLOPE),
                Activation::None,
            ),
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.projection.output_dim()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.disc.tensors_mut();
        out.extend(self.projection.tensors_mut());
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = self.disc.tensors();
        out.extend(self.projection.tensors());
        out
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> ContrastiveEncoderVars {
        ContrastiveEncoderVars {
            disc: self.disc.bind(g, trainable),
            projection: self.projection.bind(g, trainable),
        }
    }

    /// Data-level convenience: embeds one frame on a private graph.
    pub fn embed(&self, image: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let img = g.constant(image.clone());
        let e = embed_image(&mut g, img, &vars)?;
        Ok(g.value(e).clone())
    }
}

pub struct ContrastiveEncoderVars {
    pub disc: ImageDiscVars,
    pub projection: MlpVars,
}

impl ContrastiveEncoderVars {
    pub fn leaves(&self) -> Vec<Var> {
        let mut out = self.disc.leaves();
        out.extend(self.projection.leaves());
        out
    }
}

/// Unit-norm embedding column [e, 1] for an image [c, h, w].
pub fn embed_image(g: &mut Graph, image: Var, vars: &ContrastiveEncoderVars) -> Result<Var> {
    let (c, h, w) = vars.disc.input;
    if g.shape(image) != [c, h, w] {
        return Err(Error::ShapeMismatch {
            op: "embed_image",
            detail: format!("input {:?}, expected [{c}, {h}, {w}]", g.shape(image)),
        });
    }
    let vol = g.reshape(image, vec![c, 1, h, w])?;
    let n = vars.disc.blocks.len();
    let acts = stack_forward(g, vol, &vars.disc.blocks[..n - 1])?;
    let pooled = global_avg_pool(g, *acts.last().expect("trunk"))?;
    let proj = mlp_forward(g, pooled, &vars.projection)?;
    // normalize twice: the epsilon floor inside the norm is visible when the
    // raw projection is tiny, and the second pass removes that bias
    let once = g.l2_normalize(proj)?;
    g.l2_normalize(once)
}

/// target <- m * target + (1 - m) * online, elementwise over all tensors.
pub fn momentum_update(
    target: &mut ContrastiveEncoderParams,
    online: &ContrastiveEncoderParams,
    m: f64,
) -> Result<()> {
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::Config(format!("momentum must be in [0, 1], got {m}")));
    }
    let src = online.tensors();
    let mut dst = target.tensors_mut();
    if src.len() != dst.len() {
        return Err(Error::ShapeMismatch {
            op: "momentum_update",
            detail: format!("{} vs {} tensors", dst.len(), src.len()),
        });
    }
    for (d, s) in dst.iter_mut().zip(src) {
        if d.shape() != s.shape() {
            return Err(Error::ShapeMismatch {
                op: "momentum_update",
                detail: format!("{:?} vs {:?}", d.shape(), s.shape()),
            });
        }
        for (dv, sv) in d.data_mut().iter_mut().zip(s.data()) {
            *dv = m * *dv + (1.0 - m) * sv;
        }
    }
    Ok(())
}

/// Fixed-capacity FIFO of unit-norm embeddings.
#[derive(Debug, Clone)]
pub struct MemoryBank {
    entries: VecDeque<Vec<f64>>,
    capacity: usize,
    dim: usize,
}

impl MemoryBank {
    pub fn new(capacity: usize, dim: usize) -> Result<Self> {
        if capacity == 0 || dim == 0 {
            return Err(Error::Config("memory bank needs capacity > 0, dim > 0".into()));
        }
        Ok(MemoryBank {
            entries: VecDeque::with_capacity(capacity),
            capacity,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Normalizes and appends; evicts the oldest entry when full.
    pub fn push(&mut self, embedding: &Tensor) -> Result<()> {
        if embedding.numel() != self.dim {
            return Err(Error::ShapeMismatch {
                op: "memory_bank",
                detail: format!("embedding has {} elements, want {}", embedding.numel(), self.dim),
            });
        }
        let norm = embedding.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::Domain {
                op: "memory_bank",
                detail: "embedding norm is zero or non-finite".into(),
            });
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries
            .push_back(embedding.data().iter().map(|v| v / norm).collect());
        Ok(())
    }

    /// All stored embeddings as rows, oldest first: [len, dim].
    pub fn negatives(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.entries.len() * self.dim);
        for e in &self.entries {
            data.extend_from_slice(e);
        }
        Tensor::new(vec![self.entries.len(), self.dim], data).expect("bank shape")
    }
}
