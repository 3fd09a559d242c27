//! The fixed image generator.
//!
//! Training never updates these parameters; frames stay differentiable with
//! respect to the latent code so motion learning and inversion can reach
//! back through the decoder. The built-in blob decoders give analytic
//! ground truth (position, size, brightness) for motion tests; external
//! decoders load an MLP from an MCKP checkpoint.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::checkpoint::ModelCheckpoint;
use crate::nn::init::normal;
use crate::nn::mlp::{mlp_forward, Activation, MlpLayer, MlpParams};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentMode {
    ZSpace,
    WSpace,
}

#[derive(Debug, Clone)]
pub struct GeneratorSpec {
    pub latent_dim: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub mode: LatentMode,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height < 8 || self.width < 8 {
            return Err(Error::Config(format!(
                "generator image size {}x{} below minimum 8",
                self.height, self.width
            )));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::Config(format!(
                "generator channels must be 1 or 3, got {}",
                self.channels
            )));
        }
        Ok(())
    }
}

/// Frames [n, c, h, w] in [-1, 1] plus frame-rate metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    pub frames: Tensor,
    pub fps: f64,
}

impl VideoClip {
    pub fn new(frames: Tensor, fps: f64) -> Result<Self> {
        if frames.shape().len() != 4 || frames.shape()[0] < 1 {
            return Err(Error::ShapeMismatch {
                op: "video_clip",
                detail: format!("expected [n, c, h, w] with n >= 1, got {:?}", frames.shape()),
            });
        }
        Ok(VideoClip { frames, fps })
    }

    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame_shape(&self) -> [usize; 3] {
        let s = self.frames.shape();
        [s[1], s[2], s[3]]
    }

    pub fn frame(&self, t: usize) -> Tensor {
        let [c, h, w] = self.frame_shape();
        let per = c * h * w;
        Tensor::new(
            vec![c, h, w],
            self.frames.data()[t * per..(t + 1) * per].to_vec(),
        )
        .expect("frame slice")
    }
}

/// Four seeded projection rows map the code to (cx, cy, radius, intensity).
#[derive(Debug, Clone)]
pub struct BlobDecoderParams {
    pub projection: Tensor, // [4, d]
    pub bias: Tensor,       // [4]
    pub tints: Vec<f64>,
    pub spec: GeneratorSpec,
}

impl BlobDecoderParams {
    pub fn seeded(spec: GeneratorSpec, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // column scale keeps A·z in a usable tanh range for unit-normal z
        let projection = normal(&mut rng, &[4, spec.latent_dim], 1.0 / (spec.latent_dim as f64).sqrt());
        let bias = Tensor::zeros(&[4]);
        let tints = match spec.channels {
            1 => vec![1.0],
            _ => vec![1.0, 0.85, 0.7],
        };
        Ok(BlobDecoderParams {
            projection,
            bias,
            tints,
            spec,
        })
    }
}

#[derive(Debug, Clone)]
pub enum ImageGenerator {
    Blob(BlobDecoderParams),
    /// Two independent blobs, 8 effective factors; exercises the
    /// entangled-content failure mode.
    TwoBlob {
        first: BlobDecoderParams,
        second: BlobDecoderParams,
    },
    /// MLP decoder loaded from a checkpoint (layer schema: `layer{i}.w`,
    /// `layer{i}.b`, tanh activations, final tanh to c*h*w).
    External {
        mlp: MlpParams,
        spec: GeneratorSpec,
    },
}

impl ImageGenerator {
    pub fn blob(spec: GeneratorSpec, seed: u64) -> Result<Self> {
        Ok(ImageGenerator::Blob(BlobDecoderParams::seeded(spec, seed)?))
    }

    pub fn two_blob(spec: GeneratorSpec, seed: u64) -> Result<Self> {
        let first = BlobDecoderParams::seeded(spec.clone(), seed)?;
        let mut second = BlobDecoderParams::seeded(spec, seed.wrapping_add(1))?;
        second.tints = second.tints.iter().map(|t| t * 0.9).collect();
        Ok(ImageGenerator::TwoBlob { first, second })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        match self {
            ImageGenerator::Blob(p) => &p.spec,
            ImageGenerator::TwoBlob { first, .. } => &first.spec,
            ImageGenerator::External { spec, .. } => spec,
        }
    }

    /// Archive of every frozen parameter; hashing this asserts immutability.
    pub fn params_checkpoint(&self) -> ModelCheckpoint {
        let mut ck = ModelCheckpoint::new(0, 0);
        match self {
            ImageGenerator::Blob(p) => {
                ck.insert("blob.projection", p.projection.clone()).unwrap();
                ck.insert("blob.bias", p.bias.clone()).unwrap();
                ck.insert("blob.tints", Tensor::from_vec(p.tints.clone())).unwrap();
            }
            ImageGenerator::TwoBlob { first, second } => {
                ck.insert("blob1.projection", first.projection.clone()).unwrap();
                ck.insert("blob1.bias", first.bias.clone()).unwrap();
                ck.insert("blob1.tints", Tensor::from_vec(first.tints.clone())).unwrap();
                ck.insert("blob2.projection", second.projection.clone()).unwrap();
                ck.insert("blob2.bias", second.bias.clone()).unwrap();
                ck.insert("blob2.tints", Tensor::from_vec(second.tints.clone())).unwrap();
            }
            ImageGenerator::External { mlp, .. } => {
                for (i, l) in mlp.layers.iter().enumerate() {
                    ck.insert(format!("layer{i}.w"), l.w.clone()).unwrap();
                    ck.insert(format!("layer{i}.b"), l.b.clone()).unwrap();
                }
            }
        }
        ck
    }

    pub fn load_external(path: &std::path::Path, spec: GeneratorSpec) -> Result<Self> {
        spec.validate()?;
        let ck = ModelCheckpoint::load(path)?;
        let mut layers = Vec::new();
        let mut i = 0;
        while let Some(w) = ck.get(&format!("layer{i}.w")) {
            let b = ck.require(&format!("layer{i}.b"))?;
            layers.push(MlpLayer {
                w: w.clone(),
                b: b.clone(),
                activation: Activation::Tanh,
            });
            i += 1;
        }
        if layers.is_empty() {
            return Err(Error::corrupt(
                path.display().to_string(),
                "no layer{i}.w records found",
            ));
        }
        let mlp = MlpParams { layers };
        let out = spec.channels * spec.height * spec.width;
        if mlp.input_dim() != spec.latent_dim || mlp.output_dim() != out {
            return Err(Error::Config(format!(
                "external generator maps {} -> {}, spec wants {} -> {}",
                mlp.input_dim(),
                mlp.output_dim(),
                spec.latent_dim,
                out
            )));
        }
        Ok(ImageGenerator::External { mlp, spec })
    }

    /// Builds the frame for `code` inside `g`. The output [c, h, w] is
    /// differentiable w.r.t. `code`; generator parameters enter as
    /// constants and receive no gradient.
    pub fn synthesize_graph(&self, g: &mut Graph, code: Var) -> Result<Var> {
        let spec = self.spec();
        if g.value(code).numel() != spec.latent_dim {
            return Err(Error::ShapeMismatch {
                op: "synthesize",
                detail: format!(
                    "code has {} elements, generator wants {}",
                    g.value(code).numel(),
                    spec.latent_dim
                ),
            });
        }
        let code_col = g.reshape(code, vec![spec.latent_dim, 1])?;
        match self {
            ImageGenerator::Blob(p) => {
                let blob = blob_mass_graph(g, code_col, p)?;
                blob_to_image(g, &blob, p)
            }
            ImageGenerator::TwoBlob { first, second } => {
                let b1 = blob_mass_graph(g, code_col, first)?;
                let b2 = blob_mass_graph(g, code_col, second)?;
                let spec = &first.spec;
                let hw = spec.height * spec.width;
                let mut channels = Vec::with_capacity(spec.channels);
                for ch in 0..spec.channels {
                    let s1 = g.scale(b1.intensity, first.tints[ch])?;
                    let s2 = g.scale(b2.intensity, second.tints[ch])?;
                    let c1 = g.mul(b1.mass, s1)?;
                    let c2 = g.mul(b2.mass, s2)?;
                    // sum of two contributions in [0, 2) keeps pixels in [-1, 1)
                    let sum = g.add(c1, c2)?;
                    let px = g.add_scalar(sum, -1.0)?;
                    channels.push(g.reshape(px, vec![1, hw])?);
                }
                let img = g.concat0(&channels)?;
                g.reshape(img, vec![spec.channels, spec.height, spec.width])
            }
            ImageGenerator::External { mlp, spec } => {
                let vars = mlp.bind(g, false);
                let flat = mlp_forward(g, code_col, &vars)?;
                g.reshape(flat, vec![spec.channels, spec.height, spec.width])
            }
        }
    }

    /// Non-graph convenience forward.
    pub fn synthesize(&self, code: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let c = g.constant(code.clone());
        let img = self.synthesize_graph(&mut g, c)?;
        Ok(g.value(img).clone())
    }

    /// Decodes each trajectory row ([n, d]) into a frame.
    pub fn synthesize_video(&self, codes: &Tensor, fps: f64) -> Result<VideoClip> {
        let shape = codes.shape();
        if shape.len() != 2 || shape[0] < 1 {
            return Err(Error::ShapeMismatch {
                op: "synthesize_video",
                detail: format!("expected nonempty [n, d] codes, got {shape:?}"),
            });
        }
        let (n, d) = (shape[0], shape[1]);
        let spec = self.spec();
        let mut frames = Vec::with_capacity(n * spec.channels * spec.height * spec.width);
        for t in 0..n {
            let code = Tensor::from_vec(codes.data()[t * d..(t + 1) * d].to_vec());
            frames.extend_from_slice(self.synthesize(&code)?.data());
        }
        VideoClip::new(
            Tensor::new(
                vec![n, spec.channels, spec.height, spec.width],
                frames,
            )?,
            fps,
        )
    }

    /// Blob-parameter vector u = tanh(A·code + b) for oracle tests;
    /// only defined for the single-blob decoder.
    pub fn blob_factors(&self, code: &Tensor) -> Option<[f64; 4]> {
        let ImageGenerator::Blob(p) = self else {
            return None;
        };
        let mut u = [0.0; 4];
        let d = p.spec.latent_dim;
        for i in 0..4 {
            let mut acc = p.bias.data()[i];
            for j in 0..d {
                acc += p.projection.data()[i * d + j] * code.data()[j];
            }
            u[i] = acc.tanh();
        }
        Some(u)
    }
}

struct BlobMass {
    /// exp(-dist²/(2r²)) over the pixel grid, [h*w]
    mass: Var,
    /// scalar brightness a in (0, 1)
    intensity: Var,
}

/// u = tanh(A·code + b); center, radius, intensity from u; gaussian mass
/// over the pixel grid.
fn blob_mass_graph(g: &mut Graph, code_col: Var, p: &BlobDecoderParams) -> Result<BlobMass> {
    let spec = &p.spec;
    let (h, w) = (spec.height, spec.width);
    let proj = g.constant(p.projection.clone());
    let bias = g.constant(p.bias.clone().reshape(vec![4, 1])?);
    let pre = g.matmul(proj, code_col)?;
    let pre = g.add(pre, bias)?;
    let u = g.tanh(pre)?;

    let u1 = g.slice0(u, 0, 1)?;
    let u2 = g.slice0(u, 1, 1)?;
    let u3 = g.slice0(u, 2, 1)?;
    let u4 = g.slice0(u, 3, 1)?;

    // cx = (u1+1)/2·(w−1); cy = (u2+1)/2·(h−1)
    let cx = affine(g, u1, 0.5 * (w as f64 - 1.0), 0.5 * (w as f64 - 1.0))?;
    let cy = affine(g, u2, 0.5 * (h as f64 - 1.0), 0.5 * (h as f64 - 1.0))?;
    // r = 2 + 3·(u3+1)/2
    let r = affine(g, u3, 1.5, 3.5)?;
    // a = (u4+1)/2
    let intensity = affine(g, u4, 0.5, 0.5)?;

    let mut xs = Vec::with_capacity(h * w);
    let mut ys = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            xs.push(x as f64);
            ys.push(y as f64);
        }
    }
    let xgrid = g.constant(Tensor::from_vec(xs));
    let ygrid = g.constant(Tensor::from_vec(ys));

    let dx = g.sub(xgrid, cx)?;
    let dy = g.sub(ygrid, cy)?;
    let dx2 = g.square(dx)?;
    let dy2 = g.square(dy)?;
    let dist2 = g.add(dx2, dy2)?;
    let r2 = g.square(r)?;
    let denom = g.scale(r2, 2.0)?;
    let ratio = g.div(dist2, denom)?;
    let negr = g.neg(ratio)?;
    let mass = g.exp(negr)?;
    Ok(BlobMass { mass, intensity })
}

fn affine(g: &mut Graph, x: Var, scale: f64, shift: f64) -> Result<Var> {
    let s = g.scale(x, scale)?;
    g.add_scalar(s, shift)
}

fn blob_to_image(g: &mut Graph, blob: &BlobMass, p: &BlobDecoderParams) -> Result<Var> {
    let spec = &p.spec;
    let hw = spec.height * spec.width;
    let mut channels = Vec::with_capacity(spec.channels);
    for ch in 0..spec.channels {
        // pixel = 2·tint·a·mass − 1
        let amp = g.scale(blob.intensity, 2.0 * p.tints[ch])?;
        let px = g.mul(blob.mass, amp)?;
        let px = g.add_scalar(px, -1.0)?;
        channels.push(g.reshape(px, vec![1, hw])?);
    }
    let img = g.concat0(&channels)?;
    g.reshape(img, vec![spec.channels, spec.height, spec.width])
}

/// Intensity-weighted centroid (cx, cy) of a [c, h, w] frame in [-1, 1].
pub fn frame_centroid(frame: &Tensor) -> Option<(f64, f64)> {
    let s = frame.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let mut total = 0.0;
    let (mut sx, mut sy) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let mut v = 0.0;
            for ch in 0..c {
                v += (frame.data()[ch * h * w + y * w + x] + 1.0) / 2.0;
            }
            total += v;
            sx += v * x as f64;
            sy += v * y as f64;
        }
    }
    if total <= 1e-9 {
        return None;
    }
    Some((sx / total, sy / total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngCore, SeedableRng};

    fn toy_spec() -> GeneratorSpec {
        GeneratorSpec {
            latent_dim: 8,
            channels: 3,
            height: 16,
            width: 16,
            mode: LatentMode::ZSpace,
        }
    }

    fn toy_code(seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        crate::nn::init::standard_normal_vec(&mut rng, 8)
    }

    #[test]
    fn same_code_same_image() {
        let gen = ImageGenerator::blob(toy_spec(), 0).unwrap();
        let code = toy_code(1);
        assert_eq!(gen.synthesize(&code).unwrap(), gen.synthesize(&code).unwrap());
    }

    #[test]
    fn small_perturbation_small_change() {
        let gen = ImageGenerator::blob(toy_spec(), 0).unwrap();
        let code = toy_code(2);
        let img = gen.synthesize(&code).unwrap();
        let mut code2 = code.clone();
        code2.data_mut()[0] += 1e-6;
        let img2 = gen.synthesize(&code2).unwrap();
        let diff = img.max_abs_diff(&img2);
        assert!(diff > 0.0 && diff < 1e-4, "diff {diff}");
    }

    #[test]
    fn zero_u_centers_blob() {
        // zero code with zero bias gives u = 0: center pixel, mid radius
        let mut p = BlobDecoderParams::seeded(toy_spec(), 0).unwrap();
        p.projection = Tensor::zeros(&[4, 8]);
        let gen = ImageGenerator::Blob(p);
        let img = gen.synthesize(&Tensor::zeros(&[8])).unwrap();
        let (cx, cy) = frame_centroid(&img).unwrap();
        assert!((cx - 7.5).abs() < 0.1, "cx {cx}");
        assert!((cy - 7.5).abs() < 0.1, "cy {cy}");
    }

    #[test]
    fn zero_intensity_gives_black_image() {
        let mut p = BlobDecoderParams::seeded(toy_spec(), 0).unwrap();
        p.projection = Tensor::zeros(&[4, 8]);
        // u4 -> -inf is unreachable through tanh; emulate a = 0 by a large
        // negative bias, which drives every pixel to -1 within tolerance
        p.bias = Tensor::from_vec(vec![0.0, 0.0, 0.0, -20.0]);
        let gen = ImageGenerator::Blob(p);
        let img = gen.synthesize(&Tensor::zeros(&[8])).unwrap();
        for &v in img.data() {
            assert!((v + 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn u1_sign_flip_mirrors_horizontally() {
        let spec = toy_spec();
        let mut p = BlobDecoderParams::seeded(spec, 0).unwrap();
        p.projection = Tensor::zeros(&[4, 8]);
        let gen_pos = {
            let mut p = p.clone();
            p.bias = Tensor::from_vec(vec![0.7, 0.0, 0.0, 0.0]);
            ImageGenerator::Blob(p)
        };
        let gen_neg = {
            let mut p = p.clone();
            p.bias = Tensor::from_vec(vec![-0.7, 0.0, 0.0, 0.0]);
            ImageGenerator::Blob(p)
        };
        let a = gen_pos.synthesize(&Tensor::zeros(&[8])).unwrap();
        let b = gen_neg.synthesize(&Tensor::zeros(&[8])).unwrap();
        let (h, w) = (16, 16);
        for ch in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    let va = a.data()[ch * h * w + y * w + x];
                    let vb = b.data()[ch * h * w + y * w + (w - 1 - x)];
                    assert!((va - vb).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn pixel_range_within_bounds() {
        let gen = ImageGenerator::blob(toy_spec(), 3).unwrap();
        for seed in 0..20 {
            let img = gen.synthesize(&toy_code(seed)).unwrap();
            for &v in img.data() {
                assert!((-1.0..=1.0).contains(&v), "pixel {v} out of range");
            }
        }
    }

    #[test]
    fn autodiff_matches_closed_form_gradient() {
        // d(sum pixels)/d(code) via the chain rule on the blob formula
        let gen = ImageGenerator::blob(toy_spec(), 5).unwrap();
        let ImageGenerator::Blob(p) = &gen else { unreachable!() };
        let code = toy_code(7);
        let d = 8;
        let (h, w) = (16.0 - 1.0, 16.0 - 1.0);

        // forward scalars
        let mut pre = [0.0f64; 4];
        for i in 0..4 {
            pre[i] = p.bias.data()[i];
            for j in 0..d {
                pre[i] += p.projection.data()[i * d + j] * code.data()[j];
            }
        }
        let u: Vec<f64> = pre.iter().map(|v| v.tanh()).collect();
        let cx = (u[0] + 1.0) / 2.0 * w;
        let cy = (u[1] + 1.0) / 2.0 * h;
        let r = 2.0 + 3.0 * (u[2] + 1.0) / 2.0;
        let a = (u[3] + 1.0) / 2.0;

        // dL/du for L = sum over pixels and channels
        let tint_sum: f64 = p.tints.iter().sum();
        let mut dl_du = [0.0f64; 4];
        for y in 0..16 {
            for x in 0..16 {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let dist2 = dx * dx + dy * dy;
                let mass = (-dist2 / (2.0 * r * r)).exp();
                let damp = 2.0 * tint_sum;
                // pixel = damp·a·mass − 1 summed over channels
                let dmass_dcx = mass * dx / (r * r);
                let dmass_dcy = mass * dy / (r * r);
                let dmass_dr = mass * dist2 / (r * r * r);
                dl_du[0] += damp * a * dmass_dcx * (w / 2.0);
                dl_du[1] += damp * a * dmass_dcy * (h / 2.0);
                dl_du[2] += damp * a * dmass_dr * 1.5;
                dl_du[3] += damp * mass * 0.5;
            }
        }
        let mut want = vec![0.0; d];
        for i in 0..4 {
            let dtanh = 1.0 - u[i] * u[i];
            for j in 0..d {
                want[j] += dl_du[i] * dtanh * p.projection.data()[i * d + j];
            }
        }

        let mut g = Graph::new();
        let cv = g.leaf(code, true);
        let img = gen.synthesize_graph(&mut g, cv).unwrap();
        let loss = g.sum_all(img).unwrap();
        g.backward(loss).unwrap();
        let got = g.grad(cv).unwrap();
        for j in 0..d {
            assert!(
                (got.data()[j] - want[j]).abs() < 1e-6,
                "coord {j}: {} vs {}",
                got.data()[j],
                want[j]
            );
        }
    }

    #[test]
    fn generator_params_get_no_gradient() {
        let gen = ImageGenerator::blob(toy_spec(), 1).unwrap();
        let before = {
            let mut buf = Vec::new();
            gen.params_checkpoint()
                .write_to(&mut buf, crate::tensor::Dtype::F64)
                .unwrap();
            buf
        };
        let mut g = Graph::new();
        let cv = g.leaf(toy_code(3), true);
        let img = gen.synthesize_graph(&mut g, cv).unwrap();
        let loss = g.sum_all(img).unwrap();
        g.backward(loss).unwrap();
        assert!(g.grad(cv).is_some());
        let after = {
            let mut buf = Vec::new();
            gen.params_checkpoint()
                .write_to(&mut buf, crate::tensor::Dtype::F64)
                .unwrap();
            buf
        };
        assert_eq!(before, after);
    }

    #[test]
    fn constant_trajectory_gives_identical_frames() {
        let gen = ImageGenerator::blob(toy_spec(), 2).unwrap();
        let code = toy_code(9);
        let n = 4;
        let mut codes = Vec::new();
        for _ in 0..n {
            codes.extend_from_slice(code.data());
        }
        let clip = gen
            .synthesize_video(&Tensor::new(vec![n, 8], codes).unwrap(), 8.0)
            .unwrap();
        let f0 = clip.frame(0);
        for t in 1..n {
            assert_eq!(clip.frame(t), f0);
        }
    }

    #[test]
    fn single_frame_clip() {
        let gen = ImageGenerator::blob(toy_spec(), 2).unwrap();
        let code = toy_code(4);
        let clip = gen
            .synthesize_video(
                &Tensor::new(vec![1, 8], code.data().to_vec()).unwrap(),
                8.0,
            )
            .unwrap();
        assert_eq!(clip.len(), 1);
        assert_eq!(clip.frame(0), gen.synthesize(&code).unwrap());
    }

    #[test]
    fn lipschitz_probe_on_bounded_ball() {
        let gen = ImageGenerator::blob(toy_spec(), 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let code = crate::nn::init::standard_normal_vec(&mut rng, 8);
            let mut code2 = code.clone();
            let idx = (rng.next_u32() as usize) % 8;
            code2.data_mut()[idx] += 1e-4;
            let a = gen.synthesize(&code).unwrap();
            let b = gen.synthesize(&code2).unwrap();
            worst = worst.max(a.max_abs_diff(&b) / 1e-4);
        }
        assert!(worst < 50.0, "perturbation ratio {worst}");
    }

    #[test]
    fn two_blob_range_and_determinism() {
        let gen = ImageGenerator::two_blob(toy_spec(), 11).unwrap();
        let code = toy_code(13);
        let a = gen.synthesize(&code).unwrap();
        let b = gen.synthesize(&code).unwrap();
        assert_eq!(a, b);
        for &v in a.data() {
            assert!((-1.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn external_round_trip() {
        use rand::SeedableRng;
        let spec = GeneratorSpec {
            latent_dim: 4,
            channels: 1,
            height: 8,
            width: 8,
            mode: LatentMode::ZSpace,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mlp = MlpParams::init(&mut rng, &[4, 16, 64], Activation::Tanh, Activation::Tanh);
        let gen = ImageGenerator::External {
            mlp,
            spec: spec.clone(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gen.mckp");
        gen.params_checkpoint().save(&path).unwrap();
        let loaded = ImageGenerator::load_external(&path, spec).unwrap();
        let code = Tensor::from_vec(vec![0.1, -0.2, 0.3, 0.4]);
        assert_eq!(gen.synthesize(&code).unwrap(), loaded.synthesize(&code).unwrap());
    }
}
