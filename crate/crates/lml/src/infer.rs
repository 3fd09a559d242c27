//! Inference paths: free generation, long unrolls, trajectory
//! interpolation, latent inversion and video prediction from a still.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adversaries::{image_disc_forward, ImageDiscParams};
use crate::error::{Error, Result};
use crate::generator::{ImageGenerator, VideoClip};
use crate::metrics::psnr;
use crate::motion::{generate_trajectory, MotionGeneratorParams, Trajectory};
use crate::nn::init::standard_normal_vec;
use crate::tensor::{AdamState, Graph, Tensor};

/// Frames for a fresh z1 and fresh noise, both drawn from `rng`.
pub fn generate_video(
    motion: &MotionGeneratorParams,
    gen: &ImageGenerator,
    rng: &mut ChaCha8Rng,
    frames: usize,
    fps: f64,
) -> Result<(VideoClip, Trajectory)> {
    if frames == 0 {
        return Err(Error::Config("need at least one frame".into()));
    }
    let d = motion.latent_dim();
    let z1 = standard_normal_vec(rng, d);
    let eps = standard_normal_vec(rng, (frames - 1) * d).reshape(vec![frames - 1, d])?;
    unroll(motion, gen, &z1, &eps, fps)
}

/// Walks the trajectory defined by (z1, eps) and decodes every code. The
/// output is prefix-stable: truncating `eps` reproduces the same leading
/// frames bit for bit.
pub fn unroll(
    motion: &MotionGeneratorParams,
    gen: &ImageGenerator,
    z1: &Tensor,
    eps: &Tensor,
    fps: f64,
) -> Result<(VideoClip, Trajectory)> {
    let traj = generate_trajectory(z1, eps, motion)?;
    let clip = gen.synthesize_video(&traj.codes, fps)?;
    Ok((clip, traj))
}

/// Linear in-between codes: `factor` sub-steps per original step. Original
/// codes appear unchanged every `factor` rows; step norms shrink by exactly
/// `factor`.
pub fn interpolate_trajectory(codes: &Tensor, factor: usize) -> Result<Tensor> {
    let s = codes.shape();
    if s.len() != 2 || s[0] < 2 {
        return Err(Error::ShapeMismatch {
            op: "interpolate",
            detail: format!("want [n >= 2, d] codes, got {s:?}"),
        });
    }
    if factor == 0 {
        return Err(Error::Config("interpolation factor must be >= 1".into()));
    }
    let (n, d) = (s[0], s[1]);
    let out_rows = (n - 1) * factor + 1;
    let mut out = Vec::with_capacity(out_rows * d);
    for t in 0..n - 1 {
        let a = &codes.data()[t * d..(t + 1) * d];
        let b = &codes.data()[(t + 1) * d..(t + 2) * d];
        for k in 0..factor {
            if k == 0 {
                out.extend_from_slice(a);
            } else {
                let alpha = k as f64 / factor as f64;
                out.extend(a.iter().zip(b).map(|(x, y)| x + alpha * (y - x)));
            }
        }
    }
    out.extend_from_slice(&codes.data()[(n - 1) * d..]);
    Tensor::new(vec![out_rows, d], out)
}

#[derive(Debug, Clone)]
pub struct InversionConfig {
    pub iters: usize,
    pub lr: f64,
    pub seed: u64,
    /// Weight of the perceptual term; only used when a discriminator is
    /// supplied to `invert_frame`.
    pub perceptual_weight: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            iters: 2000,
            lr: 0.01,
            seed: 0,
            perceptual_weight: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InversionResult {
    /// Best code found (lowest loss seen over all iterations).
    pub code: Tensor,
    pub loss: f64,
    pub psnr: f64,
}

/// Optimizes a latent code so the generator reproduces `target` ([c, h, w]).
/// Plain pixel MSE by default; pass `perceptual` to add a feature-space MSE
/// through a discriminator trunk.
pub fn invert_frame(
    gen: &ImageGenerator,
    target: &Tensor,
    perceptual: Option<&ImageDiscParams>,
    cfg: &InversionConfig,
) -> Result<InversionResult> {
    let spec = gen.spec();
    let want = [spec.channels, spec.height, spec.width];
    if target.shape() != want {
        return Err(Error::ShapeMismatch {
            op: "invert_frame",
            detail: format!("target {:?}, generator makes {want:?}", target.shape()),
        });
    }
    if cfg.iters == 0 {
        return Err(Error::Config("inversion needs at least one iteration".into()));
    }

    // reference features for the perceptual term, computed once
    let target_feats: Vec<Tensor> = match perceptual {
        Some(disc) => {
            let mut g = Graph::new();
            let vars = disc.bind(&mut g, false);
            let img = g.constant(target.clone());
            let (_, feats) = image_disc_forward(&mut g, img, &vars)?;
            feats.iter().map(|&f| g.value(f).clone()).collect()
        }
        None => Vec::new(),
    };

    let d = spec.latent_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut code = standard_normal_vec(&mut rng, d);
    let mut adam = AdamState::new(&[vec![d]], cfg.lr, 0.9, 0.999);

    let mut best_code = code.clone();
    let mut best_loss = f64::INFINITY;

    for _ in 0..cfg.iters {
        let mut g = Graph::new();
        let z = g.leaf(code.clone(), true);
        let img = gen.synthesize_graph(&mut g, z)?;
        let tgt = g.constant(target.clone());
        let diff = g.sub(img, tgt)?;
        let sq = g.square(diff)?;
        let mut loss = g.mean_all(sq)?;

        if let Some(disc) = perceptual {
            let vars = disc.bind(&mut g, false);
            let (_, feats) = image_disc_forward(&mut g, img, &vars)?;
            let mut terms = Vec::with_capacity(feats.len());
            for (f, tf) in feats.iter().zip(&target_feats) {
                let c = g.constant(tf.clone());
                let fd = g.sub(*f, c)?;
                let fsq = g.square(fd)?;
                terms.push(g.mean_all(fsq)?);
            }
            let stacked = g.concat0(&terms)?;
            let pm = g.mean_all(stacked)?;
            let pm = g.scale(pm, cfg.perceptual_weight)?;
            loss = g.add(loss, pm)?;
        }

        let loss_val = g.value(loss).item();
        if loss_val < best_loss {
            best_loss = loss_val;
            best_code = code.clone();
        }
        g.backward(loss)?;
        let grad = g.take_grad(z);
        adam.step(&mut [&mut code], &[grad])?;
    }
    // the final iterate may beat everything seen before the last update
    {
        let recon = gen.synthesize(&code)?;
        let final_loss = crate::metrics::mse(&recon, target)?;
        if final_loss < best_loss {
            best_loss = final_loss;
            best_code = code;
        }
    }

    let recon = gen.synthesize(&best_code)?;
    Ok(InversionResult {
        psnr: psnr(&recon, target)?,
        code: best_code,
        loss: best_loss,
    })
}

/// Inverts the conditioning frame, then unrolls motion from the recovered
/// code. Frame 1 of the result is exactly `gen.synthesize(&code)`.
pub fn predict_video(
    motion: &MotionGeneratorParams,
    gen: &ImageGenerator,
    first_frame: &Tensor,
    perceptual: Option<&ImageDiscParams>,
    inv_cfg: &InversionConfig,
    noise_seed: u64,
    frames: usize,
    fps: f64,
) -> Result<(VideoClip, InversionResult)> {
    if frames == 0 {
        return Err(Error::Config("need at least one frame".into()));
    }
    let inv = invert_frame(gen, first_frame, perceptual, inv_cfg)?;
    let d = motion.latent_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let eps = standard_normal_vec(&mut rng, (frames - 1) * d).reshape(vec![frames - 1, d])?;
    let (clip, _) = unroll(motion, gen, &inv.code, &eps, fps)?;
    Ok((clip, inv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{GeneratorSpec, LatentMode};
    use crate::latent::{compute_pca_basis, sample_z};
    use crate::motion::MotionGeneratorParams;

    fn spec() -> GeneratorSpec {
        GeneratorSpec {
            latent_dim: 6,
            channels: 1,
            height: 16,
            width: 16,
            mode: LatentMode::ZSpace,
        }
    }

    fn toy_motion(seed: u64) -> MotionGeneratorParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = sample_z(&mut rng, 200, 6);
        let basis = compute_pca_basis(&samples, 4).unwrap();
        MotionGeneratorParams::init(&mut rng, 6, basis, 0.5, 12).unwrap()
    }

    #[test]
    fn unroll_prefix_is_bit_exact() {
        let motion = toy_motion(1);
        let gen = ImageGenerator::blob(spec(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z1 = standard_normal_vec(&mut rng, 6);
        let eps_long = standard_normal_vec(&mut rng, 12 * 6).reshape(vec![12, 6]).unwrap();
        let eps_short = Tensor::new(vec![3, 6], eps_long.data()[..18].to_vec()).unwrap();

        let (long, _) = unroll(&motion, &gen, &z1, &eps_long, 8.0).unwrap();
        let (short, _) = unroll(&motion, &gen, &z1, &eps_short, 8.0).unwrap();
        assert_eq!(long.len(), 13);
        assert_eq!(short.len(), 4);
        for t in 0..short.len() {
            assert_eq!(long.frame(t), short.frame(t), "frame {t} diverged");
        }
    }

    #[test]
    fn interpolation_endpoints_and_step_norms() {
        let motion = toy_motion(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z1 = standard_normal_vec(&mut rng, 6);
        let eps = standard_normal_vec(&mut rng, 5 * 6).reshape(vec![5, 6]).unwrap();
        let traj = crate::motion::generate_trajectory(&z1, &eps, &motion).unwrap();

        let dense = interpolate_trajectory(&traj.codes, 2).unwrap();
        assert_eq!(dense.shape(), [11, 6]);
        // originals preserved at even rows
        for t in 0..6 {
            let orig = &traj.codes.data()[t * 6..(t + 1) * 6];
            let got = &dense.data()[2 * t * 6..(2 * t + 1) * 6];
            assert_eq!(orig, got);
        }
        // each dense step is exactly half the coarse step
        let coarse = traj.step_norms();
        let dense_traj = crate::motion::Trajectory {
            codes: dense.clone(),
            eps: Tensor::new(vec![10, 6], vec![0.0; 60]).unwrap(),
            hidden: Tensor::new(vec![10, 4], vec![0.0; 40]).unwrap(),
        };
        let fine = dense_traj.step_norms();
        for (t, &c) in coarse.iter().enumerate() {
            assert!((fine[2 * t] - c / 2.0).abs() < 1e-12);
            assert!((fine[2 * t + 1] - c / 2.0).abs() < 1e-12);
        }
        // factor 1 is the identity
        let same = interpolate_trajectory(&traj.codes, 1).unwrap();
        assert_eq!(same, traj.codes);
    }

    #[test]
    fn inversion_recovers_blob_frame() {
        let gen = ImageGenerator::blob(spec(), 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let z_true = standard_normal_vec(&mut rng, 6);
        let target = gen.synthesize(&z_true).unwrap();
        let cfg = InversionConfig {
            iters: 600,
            lr: 0.05,
            seed: 8,
            perceptual_weight: 0.0,
        };
        let res = invert_frame(&gen, &target, None, &cfg).unwrap();
        assert!(res.psnr > 30.0, "psnr {:.1} dB", res.psnr);
        assert!(res.loss < 1e-3);
    }

    #[test]
    fn inversion_is_deterministic() {
        let gen = ImageGenerator::blob(spec(), 9).unwrap();
        let target = gen.synthesize(&standard_normal_vec(
            &mut ChaCha8Rng::seed_from_u64(10),
            6,
        ))
        .unwrap();
        let cfg = InversionConfig {
            iters: 50,
            lr: 0.05,
            seed: 11,
            perceptual_weight: 0.0,
        };
        let a = invert_frame(&gen, &target, None, &cfg).unwrap();
        let b = invert_frame(&gen, &target, None, &cfg).unwrap();
        assert_eq!(a.code, b.code);
    }

    #[test]
    fn prediction_first_frame_matches_inversion_exactly() {
        let motion = toy_motion(12);
        let gen = ImageGenerator::blob(spec(), 13).unwrap();
        let target = gen
            .synthesize(&standard_normal_vec(&mut ChaCha8Rng::seed_from_u64(14), 6))
            .unwrap();
        let cfg = InversionConfig {
            iters: 100,
            lr: 0.05,
            seed: 15,
            perceptual_weight: 0.0,
        };
        let (clip, inv) = predict_video(&motion, &gen, &target, None, &cfg, 16, 5, 8.0).unwrap();
        assert_eq!(clip.len(), 5);
        let direct = gen.synthesize(&inv.code).unwrap();
        // bit-exact, not approximately equal
        assert_eq!(clip.frame(0), direct);
    }

    #[test]
    fn bad_inputs_rejected() {
        let gen = ImageGenerator::blob(spec(), 17).unwrap();
        let cfg = InversionConfig::default();
        let bad = Tensor::zeros(&[1, 8, 8]);
        assert!(invert_frame(&gen, &bad, None, &cfg).is_err());
        let codes = Tensor::new(vec![1, 6], vec![0.0; 6]).unwrap();
        assert!(interpolate_trajectory(&codes, 2).is_err());
        let codes = Tensor::new(vec![3, 6], vec![0.0; 18]).unwrap();
        assert!(interpolate_trajectory(&codes, 0).is_err());
    }
}
