//! Command-line front end: subcommand definitions and dispatch.
//!
//! Every run is driven by a config document plus a handful of overrides;
//! the fully resolved config is echoed into the output directory so runs
//! are reproducible from their artifacts alone.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{EvalEmbedder, RunConfig};
use crate::dataset::{load_video_folders, make_synthetic_dataset};
use crate::error::{Error, Result};
use crate::export::{save_frames_png, save_gif};
use crate::generator::VideoClip;
use crate::infer::{generate_video, interpolate_trajectory, predict_video, unroll};
use crate::latent::{compute_pca_basis, sample_z, variance_report, PcaBasis};
use crate::metrics::{acd, diversity_std_per_frame, psnr, ssim};
use crate::motion::MotionGeneratorParams;
use crate::nn::checkpoint::ModelCheckpoint;
use crate::nn::init::standard_normal_vec;
use crate::tensor::Tensor;
use crate::training::{CsvLogger, DomainMode, Trainer};

#[derive(Parser)]
#[command(name = "lml", version, about = "Video synthesis as latent trajectory discovery")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand.
#[derive(Args)]
pub struct Common {
    /// Config file (`section.key = value` lines); defaults apply if omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the global seed (`io.seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the output directory (`io.out_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum DomainModeArg {
    In,
    Cross,
}

#[derive(Subcommand)]
pub enum Command {
    /// Sample latent codes and extract the PCA motion basis.
    Pca {
        #[command(flatten)]
        common: Common,
    },
    /// Train the motion generator and discriminators.
    Train {
        #[command(flatten)]
        common: Common,
        /// Override `training.steps`.
        #[arg(long)]
        steps: Option<usize>,
        /// Train on a folder of per-video PNG subfolders instead of the
        /// synthetic dataset.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Disable the mutual-information loss.
        #[arg(long)]
        no_lm: bool,
        /// Disable the contrastive loss.
        #[arg(long)]
        no_lcontr: bool,
        /// Disable the image discriminator branch.
        #[arg(long)]
        no_di: bool,
        /// Disable the video discriminator branch.
        #[arg(long)]
        no_dv: bool,
        /// Step directly to h_t instead of the residual update.
        #[arg(long)]
        no_residual: bool,
        #[arg(long, value_enum)]
        domain_mode: Option<DomainModeArg>,
    },
    /// Decode a video from a trained checkpoint.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Seed for the starting code z1 (default: global seed).
        #[arg(long)]
        z1_seed: Option<u64>,
        /// Seed for the per-step noise (default: z1 seed + 1).
        #[arg(long)]
        eps_seed: Option<u64>,
        /// Frames to generate (default: `training.frames`).
        #[arg(long)]
        frames: Option<usize>,
        /// Unroll this many frames instead (long-sequence mode).
        #[arg(long)]
        long_frames: Option<usize>,
        /// Insert factor-1 interpolated codes between steps.
        #[arg(long)]
        interpolate_factor: Option<usize>,
        /// Replay a saved trajectory archive instead of sampling one.
        #[arg(long)]
        from_trajectory: Option<PathBuf>,
    },
    /// Invert a still frame and predict a video from it.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input PNG, sized like the generator output.
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        eps_seed: Option<u64>,
    },
    /// Compute the metric report for a trained checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Render a synthetic blob dataset to clip folders.
    Dataset {
        #[command(flatten)]
        common: Common,
        /// Override `training.data_clips`.
        #[arg(long)]
        clips: Option<usize>,
    },
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.io.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.io.out_dir = out.display().to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The PCA basis is a pure function of the config: a seeded latent sample
/// fed through the eigensolver. `pca` persists it; `train` recomputes it.
fn basis_for(cfg: &RunConfig) -> Result<PcaBasis> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.io.seed);
    let samples = sample_z(&mut rng, cfg.motion.pca_samples, cfg.generator.latent_dim);
    compute_pca_basis(&samples, cfg.motion.components)
}

fn build_trainer(cfg: &RunConfig) -> Result<Trainer> {
    let gen = cfg.build_generator()?;
    let basis = basis_for(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.io.seed.wrapping_add(1));
    let mut motion = MotionGeneratorParams::init(
        &mut rng,
        cfg.generator.latent_dim,
        basis,
        cfg.motion.lambda,
        cfg.motion.mapper_hidden,
    )?;
    motion.detach_prev = cfg.motion.detach_prev;
    motion.residual_enabled = cfg.motion.residual;
    Trainer::new(cfg.train_config(), motion, gen)
}

fn restore_trainer(cfg: &RunConfig, checkpoint: &Path) -> Result<Trainer> {
    let mut trainer = build_trainer(cfg)?;
    let ck = ModelCheckpoint::load(checkpoint)?;
    trainer.restore(&ck)?;
    Ok(trainer)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.io.out_dir);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    cfg.write_resolved(&dir)?;
    Ok(dir)
}

fn load_png(path: &Path, channels: usize) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0; channels * h * w];
    match channels {
        1 => {
            for (i, p) in img.to_luma8().pixels().enumerate() {
                data[i] = p.0[0] as f64 / 127.5 - 1.0;
            }
        }
        3 => {
            for (i, p) in img.to_rgb8().pixels().enumerate() {
                for ch in 0..3 {
                    data[ch * h * w + i] = p.0[ch] as f64 / 127.5 - 1.0;
                }
            }
        }
        _ => return Err(Error::Image(format!("unsupported channel count {channels}"))),
    }
    Tensor::new(vec![channels, h, w], data)
}

fn save_trajectory(path: &Path, hash: u64, codes: &Tensor, eps: &Tensor) -> Result<()> {
    let mut ck = ModelCheckpoint::new(hash, 0);
    ck.insert("codes", codes.clone())?;
    ck.insert("eps", eps.clone())?;
    ck.save(path)
}

fn export_clip(dir: &Path, clip: &VideoClip) -> Result<()> {
    save_frames_png(clip, &dir.join("frames"))?;
    save_gif(clip, &dir.join("video.gif"))
}

fn run_pca(common: &Common) -> Result<()> {
    let cfg = resolve(common)?;
    let dir = out_dir(&cfg)?;
    let basis = basis_for(&cfg)?;
    basis.save(&dir.join("basis.mckp"), cfg.hash())?;
    let report = variance_report(&basis);
    let path = dir.join("pca_variance.csv");
    let mut f = std::fs::File::create(&path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    writeln!(f, "component,cumulative_ratio").map_err(|e| Error::io("pca csv", e))?;
    for (i, r) in report.iter().enumerate() {
        writeln!(f, "{},{r:.9}", i + 1).map_err(|e| Error::io("pca csv", e))?;
    }
    println!(
        "wrote {} components (capture {:.4}) to {}",
        basis.k(),
        report.last().copied().unwrap_or(0.0),
        dir.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_train(
    common: &Common,
    steps: Option<usize>,
    data: &Option<PathBuf>,
    no_lm: bool,
    no_lcontr: bool,
    no_di: bool,
    no_dv: bool,
    no_residual: bool,
    domain_mode: Option<DomainModeArg>,
) -> Result<()> {
    let mut cfg = resolve(common)?;
    if let Some(s) = steps {
        cfg.training.steps = s;
    }
    cfg.training.use_lm &= !no_lm;
    cfg.training.use_lcontr &= !no_lcontr;
    cfg.training.use_di &= !no_di;
    cfg.training.use_dv &= !no_dv;
    cfg.motion.residual &= !no_residual;
    if let Some(dm) = domain_mode {
        cfg.training.domain_mode = match dm {
            DomainModeArg::In => DomainMode::InDomain,
            DomainModeArg::Cross => DomainMode::CrossDomain,
        };
    }
    cfg.validate()?;
    let dir = out_dir(&cfg)?;

    let clips: Vec<VideoClip> = match data {
        Some(root) => load_video_folders(
            root,
            cfg.generator.channels,
            2,
            cfg.training.frames,
            cfg.training.data_fps,
        )?,
        None => make_synthetic_dataset(&cfg.synthetic_config())?.clips,
    };

    let mut trainer = build_trainer(&cfg)?;
    let log_path = dir.join("train_log.csv");
    let log_file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(log_path.display().to_string(), e))?;
    let mut logger =
        CsvLogger::new(log_file).map_err(|e| Error::io(log_path.display().to_string(), e))?;

    let ck_path = dir.join("checkpoint.mckp");
    let total = cfg.training.steps;
    let batch_size = cfg.training.batch;
    for s in 0..total {
        let batch: Vec<&VideoClip> = (0..batch_size)
            .map(|i| &clips[(s * batch_size + i) % clips.len()])
            .collect();
        let stats = trainer.train_step(&batch)?;
        logger.log(&stats).map_err(|e| Error::io("train log", e))?;
        if (s + 1) % cfg.io.checkpoint_every == 0 {
            trainer.to_checkpoint(cfg.hash())?.save(&ck_path)?;
        }
    }
    trainer.to_checkpoint(cfg.hash())?.save(&ck_path)?;
    println!(
        "trained {total} steps on {} clips; checkpoint at {}",
        clips.len(),
        ck_path.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_generate(
    common: &Common,
    checkpoint: &Path,
    z1_seed: Option<u64>,
    eps_seed: Option<u64>,
    frames: Option<usize>,
    long_frames: Option<usize>,
    interpolate_factor: Option<usize>,
    from_trajectory: &Option<PathBuf>,
) -> Result<()> {
    let cfg = resolve(common)?;
    let dir = out_dir(&cfg)?;
    let trainer = restore_trainer(&cfg, checkpoint)?;
    let fps = cfg.training.data_fps;

    let (codes, eps) = match from_trajectory {
        Some(path) => {
            let ck = ModelCheckpoint::load(path)?;
            (ck.require("codes")?.clone(), ck.require("eps")?.clone())
        }
        None => {
            let n = long_frames.or(frames).unwrap_or(cfg.training.frames);
            if n < 2 {
                return Err(Error::Config("need at least two frames".into()));
            }
            let d = cfg.generator.latent_dim;
            let z1_seed = z1_seed.unwrap_or(cfg.io.seed);
            let eps_seed = eps_seed.unwrap_or(z1_seed.wrapping_add(1));
            let z1 = standard_normal_vec(&mut ChaCha8Rng::seed_from_u64(z1_seed), d);
            let eps = standard_normal_vec(&mut ChaCha8Rng::seed_from_u64(eps_seed), (n - 1) * d)
                .reshape(vec![n - 1, d])?;
            let (_, traj) = unroll(&trainer.motion, &trainer.image_gen, &z1, &eps, fps)?;
            (traj.codes, traj.eps)
        }
    };
    let codes = match interpolate_factor {
        Some(f) if f > 1 => interpolate_trajectory(&codes, f)?,
        _ => codes,
    };
    let clip = trainer.image_gen.synthesize_video(&codes, fps)?;
    export_clip(&dir, &clip)?;
    save_trajectory(&dir.join("trajectory.mckp"), cfg.hash(), &codes, &eps)?;
    println!("generated {} frames into {}", clip.len(), dir.display());
    Ok(())
}

fn run_predict(
    common: &Common,
    checkpoint: &Path,
    image: &Path,
    frames: Option<usize>,
    eps_seed: Option<u64>,
) -> Result<()> {
    let cfg = resolve(common)?;
    let dir = out_dir(&cfg)?;
    let trainer = restore_trainer(&cfg, checkpoint)?;
    let target = load_png(image, cfg.generator.channels)?;
    let n = frames.unwrap_or(cfg.training.frames);
    let inv_cfg = cfg.inversion_config();
    let perceptual = (cfg.eval.perceptual_weight > 0.0).then_some(&trainer.encoder.disc);
    let (clip, inv) = predict_video(
        &trainer.motion,
        &trainer.image_gen,
        &target,
        perceptual,
        &inv_cfg,
        eps_seed.unwrap_or(cfg.io.seed),
        n,
        cfg.training.data_fps,
    )?;
    export_clip(&dir, &clip)?;
    println!(
        "predicted {} frames (inversion psnr {:.2} dB) into {}",
        clip.len(),
        inv.psnr,
        dir.display()
    );
    Ok(())
}

fn mean_metric(
    a: &VideoClip,
    b: &VideoClip,
    f: impl Fn(&Tensor, &Tensor) -> Result<f64>,
) -> Result<f64> {
    let n = a.len().min(b.len());
    let mut acc = 0.0;
    for t in 0..n {
        acc += f(&a.frame(t), &b.frame(t))?;
    }
    Ok(acc / n as f64)
}

fn run_eval(common: &Common, checkpoint: &Path) -> Result<()> {
    let cfg = resolve(common)?;
    let dir = out_dir(&cfg)?;
    let trainer = restore_trainer(&cfg, checkpoint)?;
    let fps = cfg.training.data_fps;
    let n = cfg.eval.frames;

    // reference clip, then predict it back from its own first frame
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.io.seed);
    let (reference, _) = generate_video(&trainer.motion, &trainer.image_gen, &mut rng, n, fps)?;
    let inv_cfg = cfg.inversion_config();
    let perceptual = (cfg.eval.perceptual_weight > 0.0).then_some(&trainer.encoder.disc);
    let (predicted, _) = predict_video(
        &trainer.motion,
        &trainer.image_gen,
        &reference.frame(0),
        perceptual,
        &inv_cfg,
        cfg.io.seed,
        n,
        fps,
    )?;
    let psnr_val = mean_metric(&reference, &predicted, |a, b| psnr(a, b))?;
    let ssim_val = mean_metric(&reference, &predicted, |a, b| ssim(a, b))?;

    let embed = |frame: &Tensor| trainer.encoder.embed(frame);
    let acd_val = match cfg.eval.embedder {
        EvalEmbedder::Model => acd(&reference, Some(&embed))?,
        EvalEmbedder::Pixel => acd(&reference, None)?,
    };

    // diversity: one z1, many eps seeds
    let d = cfg.generator.latent_dim;
    let z1 = standard_normal_vec(&mut ChaCha8Rng::seed_from_u64(cfg.io.seed), d);
    let mut variants = Vec::with_capacity(cfg.eval.clips);
    for i in 0..cfg.eval.clips {
        let seed = cfg.io.seed.wrapping_add(1000 + i as u64);
        let eps = standard_normal_vec(&mut ChaCha8Rng::seed_from_u64(seed), (n - 1) * d)
            .reshape(vec![n - 1, d])?;
        let (clip, _) = unroll(&trainer.motion, &trainer.image_gen, &z1, &eps, fps)?;
        variants.push(clip);
    }
    let diversity = diversity_std_per_frame(&variants)?;

    let div_json = diversity
        .iter()
        .map(|v| format!("{v:.9}"))
        .collect::<Vec<_>>()
        .join(", ");
    let json = format!(
        "{{\n  \"psnr\": {psnr_val:.6},\n  \"ssim\": {ssim_val:.6},\n  \"acd\": {acd_val:.6},\n  \
         \"diversity_std_per_frame\": [{div_json}],\n  \"config_hash\": \"{:016x}\"\n}}\n",
        cfg.hash()
    );
    let path = dir.join("eval.json");
    std::fs::write(&path, &json).map_err(|e| Error::io(path.display().to_string(), e))?;
    print!("{json}");
    Ok(())
}

fn run_dataset(common: &Common, clips: Option<usize>) -> Result<()> {
    let mut cfg = resolve(common)?;
    if let Some(c) = clips {
        cfg.training.data_clips = c;
    }
    cfg.validate()?;
    let dir = out_dir(&cfg)?;
    let ds = make_synthetic_dataset(&cfg.synthetic_config())?;
    for (i, clip) in ds.clips.iter().enumerate() {
        save_frames_png(clip, &dir.join(format!("clip_{i:03}")))?;
    }
    println!(
        "wrote {} clips (mean centroid step {:.3} px) to {}",
        ds.clips.len(),
        ds.mean_step,
        dir.display()
    );
    Ok(())
}

/// Runs one parsed command; callers map the error to an exit code.
pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Pca { common } => run_pca(common),
        Command::Train {
            common,
            steps,
            data,
            no_lm,
            no_lcontr,
            no_di,
            no_dv,
            no_residual,
            domain_mode,
        } => run_train(
            common, *steps, data, *no_lm, *no_lcontr, *no_di, *no_dv, *no_residual, *domain_mode,
        ),
        Command::Generate {
            common,
            checkpoint,
            z1_seed,
            eps_seed,
            frames,
            long_frames,
            interpolate_factor,
            from_trajectory,
        } => run_generate(
            common,
            checkpoint,
            *z1_seed,
            *eps_seed,
            *frames,
            *long_frames,
            *interpolate_factor,
            from_trajectory,
        ),
        Command::Predict {
            common,
            checkpoint,
            image,
            frames,
            eps_seed,
        } => run_predict(common, checkpoint, image, *frames, *eps_seed),
        Command::Eval { common, checkpoint } => run_eval(common, checkpoint),
        Command::Dataset { common, clips } => run_dataset(common, *clips),
    }
}

/// 0 success, 1 validation error, 2 runtime failure.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 1,
        _ => 2,
    }
}
