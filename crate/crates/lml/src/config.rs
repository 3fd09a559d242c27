//! Flat INI-style run configuration.
//!
//! A config file is a list of `section.key = value` lines with `#` comments.
//! Unknown keys are rejected (pointing at the offending line), every value
//! has a default, and `dump` echoes the fully resolved document so a run
//! directory always records exactly what it ran with.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::augment::AugmentConfig;
use crate::dataset::{MotionKind, SyntheticConfig};
use crate::error::{Error, Result};
use crate::generator::{GeneratorSpec, ImageGenerator, LatentMode};
use crate::infer::InversionConfig;
use crate::losses::{ContrastiveForm, GenLossForm};
use crate::training::{DomainMode, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    Blob,
    TwoBlob,
    External,
}

/// Which embedder the ACD metric uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalEmbedder {
    /// Trained contrastive embedder from the checkpoint.
    Model,
    /// Downsampled-pixel fallback; needs no model.
    Pixel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    pub latent_dim: usize,
    pub image_size: usize,
    pub channels: usize,
    pub latent_mode: LatentMode,
    pub seed: u64,
    /// MCKP checkpoint path, required when `kind = external`.
    pub external_path: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionConfig {
    /// Step scale λ.
    pub lambda: f64,
    /// Number of PCA components k.
    pub components: usize,
    pub mapper_hidden: usize,
    /// Latent samples drawn when computing the PCA basis.
    pub pca_samples: usize,
    /// Detach z_{t-1} in each step (truncated backprop).
    pub detach_prev: bool,
    /// Residual stepping; false switches to z_t = h_t·V.
    pub residual: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorConfig {
    pub dv_channels: Vec<usize>,
    pub dv_scales: usize,
    pub dv_shared_scales: bool,
    pub di_blocks: usize,
    pub di_base: usize,
    pub proj_hidden: usize,
    pub embed_dim: usize,
    pub bank_capacity: usize,
    pub momentum: f64,
    pub augment: AugmentConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub steps: usize,
    pub batch: usize,
    pub frames: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda_m: f64,
    pub lambda_contr: f64,
    pub lambda_f: f64,
    pub tau: f64,
    pub domain_mode: DomainMode,
    pub gen_loss: GenLossForm,
    pub contrastive: ContrastiveForm,
    pub use_lm: bool,
    pub use_lcontr: bool,
    pub use_di: bool,
    pub use_dv: bool,
    /// Synthetic dataset size when no frame folder is supplied.
    pub data_clips: usize,
    pub data_motion: MotionKind,
    pub data_fps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Videos generated per z1 for the diversity metric.
    pub clips: usize,
    pub frames: usize,
    pub inversion_iters: usize,
    pub inversion_lr: f64,
    pub perceptual_weight: f64,
    pub embedder: EvalEmbedder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IoConfig {
    pub out_dir: String,
    /// Global seed; every RNG stream in a run derives from it.
    pub seed: u64,
    pub checkpoint_every: usize,
}

/// Fully resolved run configuration; `Default` gives the desk-scale toy
/// setup.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub motion: MotionConfig,
    pub discriminators: DiscriminatorConfig,
    pub training: TrainingConfig,
    pub eval: EvalConfig,
    pub io: IoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            generator: GeneratorConfig {
                kind: GeneratorKind::Blob,
                latent_dim: 8,
                image_size: 32,
                channels: 1,
                latent_mode: LatentMode::ZSpace,
                seed: 1,
                external_path: String::new(),
            },
            motion: MotionConfig {
                lambda: 0.5,
                components: 6,
                mapper_hidden: 16,
                pca_samples: 1024,
                detach_prev: false,
                residual: true,
            },
            discriminators: DiscriminatorConfig {
                dv_channels: vec![8, 16, 32, 32, 1],
                dv_scales: 2,
                dv_shared_scales: false,
                di_blocks: 4,
                di_base: 8,
                proj_hidden: 32,
                embed_dim: 16,
                bank_capacity: 512,
                momentum: 0.999,
                augment: AugmentConfig::default(),
            },
            training: TrainingConfig {
                steps: 200,
                batch: 8,
                frames: 8,
                lr: 1e-4,
                beta1: 0.5,
                beta2: 0.999,
                lambda_m: 1.0,
                lambda_contr: 1.0,
                lambda_f: 1.0,
                tau: 0.07,
                domain_mode: DomainMode::CrossDomain,
                gen_loss: GenLossForm::NonSaturating,
                contrastive: ContrastiveForm::Literal,
                use_lm: true,
                use_lcontr: true,
                use_di: true,
                use_dv: true,
                data_clips: 16,
                data_motion: MotionKind::Linear,
                data_fps: 8.0,
            },
            eval: EvalConfig {
                clips: 10,
                frames: 8,
                inversion_iters: 2000,
                inversion_lr: 0.01,
                perceptual_weight: 0.1,
                embedder: EvalEmbedder::Pixel,
            },
            io: IoConfig {
                out_dir: "out".into(),
                seed: 7,
                checkpoint_every: 100,
            },
        }
    }
}

fn parse_num<T: std::str::FromStr>(line_no: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| {
        Error::Config(format!(
            "line {line_no}: value `{value}` for `{key}` is not a valid number"
        ))
    })
}

fn parse_bool(line_no: usize, key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!(
            "line {line_no}: value `{value}` for `{key}` must be true or false"
        ))),
    }
}

fn parse_list(line_no: usize, key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|p| parse_num(line_no, key, p.trim()))
        .collect()
}

fn bad_choice(line_no: usize, key: &str, value: &str, options: &str) -> Error {
    Error::Config(format!(
        "line {line_no}: value `{value}` for `{key}` must be one of: {options}"
    ))
}

fn fmt_list(v: &[usize]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Parses a config document on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {line_no}: expected `section.key = value`, got `{raw}`"))
            })?;
            cfg.apply(line_no, key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and parses a config file; a missing path is an error.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    fn apply(&mut self, n: usize, key: &str, value: &str) -> Result<()> {
        let g = &mut self.generator;
        let m = &mut self.motion;
        let d = &mut self.discriminators;
        let t = &mut self.training;
        let e = &mut self.eval;
        let io = &mut self.io;
        match key {
            "generator.kind" => {
                g.kind = match value {
                    "blob" => GeneratorKind::Blob,
                    "two_blob" => GeneratorKind::TwoBlob,
                    "external" => GeneratorKind::External,
                    _ => return Err(bad_choice(n, key, value, "blob, two_blob, external")),
                }
            }
            "generator.latent_dim" => g.latent_dim = parse_num(n, key, value)?,
            "generator.image_size" => g.image_size = parse_num(n, key, value)?,
            "generator.channels" => g.channels = parse_num(n, key, value)?,
            "generator.latent_mode" => {
                g.latent_mode = match value {
                    "z" => LatentMode::ZSpace,
                    "w" => LatentMode::WSpace,
                    _ => return Err(bad_choice(n, key, value, "z, w")),
                }
            }
            "generator.seed" => g.seed = parse_num(n, key, value)?,
            "generator.external_path" => g.external_path = value.to_string(),

            "motion.lambda" => m.lambda = parse_num(n, key, value)?,
            "motion.components" => m.components = parse_num(n, key, value)?,
            "motion.mapper_hidden" => m.mapper_hidden = parse_num(n, key, value)?,
            "motion.pca_samples" => m.pca_samples = parse_num(n, key, value)?,
            "motion.detach_prev" => m.detach_prev = parse_bool(n, key, value)?,
            "motion.residual" => m.residual = parse_bool(n, key, value)?,

            "discriminators.dv_channels" => d.dv_channels = parse_list(n, key, value)?,
            "discriminators.dv_scales" => d.dv_scales = parse_num(n, key, value)?,
            "discriminators.dv_shared_scales" => d.dv_shared_scales = parse_bool(n, key, value)?,
            "discriminators.di_blocks" => d.di_blocks = parse_num(n, key, value)?,
            "discriminators.di_base" => d.di_base = parse_num(n, key, value)?,
            "discriminators.proj_hidden" => d.proj_hidden = parse_num(n, key, value)?,
            "discriminators.embed_dim" => d.embed_dim = parse_num(n, key, value)?,
            "discriminators.bank_capacity" => d.bank_capacity = parse_num(n, key, value)?,
            "discriminators.momentum" => d.momentum = parse_num(n, key, value)?,
            "discriminators.aug_rotate_max_deg" => {
                d.augment.rotate_max_deg = parse_num(n, key, value)?
            }
            "discriminators.aug_translate_max" => {
                d.augment.translate_max = parse_num(n, key, value)?
            }
            "discriminators.aug_scale_min" => d.augment.scale_range.0 = parse_num(n, key, value)?,
            "discriminators.aug_scale_max" => d.augment.scale_range.1 = parse_num(n, key, value)?,
            "discriminators.aug_brightness_max" => {
                d.augment.brightness_max = parse_num(n, key, value)?
            }
            "discriminators.aug_color_max" => d.augment.color_max = parse_num(n, key, value)?,
            "discriminators.aug_cutout_max_area" => {
                d.augment.cutout_max_area = parse_num(n, key, value)?
            }
            "discriminators.aug_hflip_prob" => d.augment.hflip_prob = parse_num(n, key, value)?,

            "training.steps" => t.steps = parse_num(n, key, value)?,
            "training.batch" => t.batch = parse_num(n, key, value)?,
            "training.frames" => t.frames = parse_num(n, key, value)?,
            "training.lr" => t.lr = parse_num(n, key, value)?,
            "training.beta1" => t.beta1 = parse_num(n, key, value)?,
            "training.beta2" => t.beta2 = parse_num(n, key, value)?,
            "training.lambda_m" => t.lambda_m = parse_num(n, key, value)?,
            "training.lambda_contr" => t.lambda_contr = parse_num(n, key, value)?,
            "training.lambda_f" => t.lambda_f = parse_num(n, key, value)?,
            "training.tau" => t.tau = parse_num(n, key, value)?,
            "training.domain_mode" => {
                t.domain_mode = match value {
                    "in" => DomainMode::InDomain,
                    "cross" => DomainMode::CrossDomain,
                    _ => return Err(bad_choice(n, key, value, "in, cross")),
                }
            }
            "training.gen_loss" => {
                t.gen_loss = match value {
                    "non_saturating" => GenLossForm::NonSaturating,
                    "saturating" => GenLossForm::Saturating,
                    _ => return Err(bad_choice(n, key, value, "non_saturating, saturating")),
                }
            }
            "training.contrastive" => {
                t.contrastive = match value {
                    "literal" => ContrastiveForm::Literal,
                    "standard" => ContrastiveForm::Standard,
                    _ => return Err(bad_choice(n, key, value, "literal, standard")),
                }
            }
            "training.use_lm" => t.use_lm = parse_bool(n, key, value)?,
            "training.use_lcontr" => t.use_lcontr = parse_bool(n, key, value)?,
            "training.use_di" => t.use_di = parse_bool(n, key, value)?,
            "training.use_dv" => t.use_dv = parse_bool(n, key, value)?,
            "training.data_clips" => t.data_clips = parse_num(n, key, value)?,
            "training.data_motion" => {
                t.data_motion = match value {
                    "linear" => MotionKind::Linear,
                    "sinusoidal" => MotionKind::Sinusoidal,
                    _ => return Err(bad_choice(n, key, value, "linear, sinusoidal")),
                }
            }
            "training.data_fps" => t.data_fps = parse_num(n, key, value)?,

            "eval.clips" => e.clips = parse_num(n, key, value)?,
            "eval.frames" => e.frames = parse_num(n, key, value)?,
            "eval.inversion_iters" => e.inversion_iters = parse_num(n, key, value)?,
            "eval.inversion_lr" => e.inversion_lr = parse_num(n, key, value)?,
            "eval.perceptual_weight" => e.perceptual_weight = parse_num(n, key, value)?,
            "eval.embedder" => {
                e.embedder = match value {
                    "model" => EvalEmbedder::Model,
                    "pixel" => EvalEmbedder::Pixel,
                    _ => return Err(bad_choice(n, key, value, "model, pixel")),
                }
            }

            "io.out_dir" => io.out_dir = value.to_string(),
            "io.seed" => io.seed = parse_num(n, key, value)?,
            "io.checkpoint_every" => io.checkpoint_every = parse_num(n, key, value)?,

            _ => return Err(Error::Config(format!("line {n}: unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |key: &str, why: String| Err(Error::Config(format!("{key}: {why}")));
        let g = &self.generator;
        if g.latent_dim == 0 {
            return fail("generator.latent_dim", "must be >= 1".into());
        }
        if g.image_size < 8 {
            return fail("generator.image_size", format!("{} below minimum 8", g.image_size));
        }
        if g.channels != 1 && g.channels != 3 {
            return fail("generator.channels", format!("must be 1 or 3, got {}", g.channels));
        }
        if g.kind == GeneratorKind::External && g.external_path.is_empty() {
            return fail("generator.external_path", "required when kind = external".into());
        }
        let m = &self.motion;
        if m.lambda < 0.0 {
            return fail("motion.lambda", format!("must be >= 0, got {}", m.lambda));
        }
        if m.components == 0 || m.components > g.latent_dim {
            return fail(
                "motion.components",
                format!("must be in 1..={}, got {}", g.latent_dim, m.components),
            );
        }
        if m.mapper_hidden == 0 || m.pca_samples < 2 {
            return fail("motion.mapper_hidden", "mapper_hidden >= 1 and pca_samples >= 2".into());
        }
        let d = &self.discriminators;
        if d.dv_channels.len() < 2 || d.dv_scales == 0 {
            return fail("discriminators.dv_channels", "need >= 2 layers and >= 1 scale".into());
        }
        if d.di_blocks == 0 || d.di_base == 0 || d.embed_dim == 0 || d.proj_hidden == 0 {
            return fail("discriminators.di_blocks", "image-branch sizes must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&d.momentum) {
            return fail("discriminators.momentum", format!("{} outside [0, 1]", d.momentum));
        }
        d.augment.validate()?;
        let t = &self.training;
        if t.batch == 0 || t.frames < 2 {
            return fail("training.frames", "batch >= 1 and frames >= 2".into());
        }
        if t.batch < 2 && t.use_lcontr && t.use_di {
            return fail("training.batch", "contrastive loss needs batch >= 2".into());
        }
        if t.lr <= 0.0 || t.tau <= 0.0 {
            return fail("training.tau", "lr and tau must be positive".into());
        }
        if t.lambda_m < 0.0 || t.lambda_contr < 0.0 || t.lambda_f < 0.0 {
            return fail("training.lambda_m", "loss weights must be >= 0".into());
        }
        if t.data_clips == 0 || t.data_fps <= 0.0 {
            return fail("training.data_clips", "need clips >= 1 and fps > 0".into());
        }
        let e = &self.eval;
        if e.clips < 2 || e.frames < 2 {
            return fail("eval.clips", "clips >= 2 and frames >= 2".into());
        }
        if e.inversion_iters == 0 || e.inversion_lr <= 0.0 || e.perceptual_weight < 0.0 {
            return fail("eval.inversion_iters", "iters >= 1, lr > 0, weight >= 0".into());
        }
        if self.io.checkpoint_every == 0 {
            return fail("io.checkpoint_every", "must be >= 1".into());
        }
        Ok(())
    }

    /// Full resolved document; `parse(dump(cfg)) == cfg`.
    pub fn dump(&self) -> String {
        let g = &self.generator;
        let m = &self.motion;
        let d = &self.discriminators;
        let t = &self.training;
        let e = &self.eval;
        let io = &self.io;
        let mut s = String::new();
        let kind = match g.kind {
            GeneratorKind::Blob => "blob",
            GeneratorKind::TwoBlob => "two_blob",
            GeneratorKind::External => "external",
        };
        let mode = match g.latent_mode {
            LatentMode::ZSpace => "z",
            LatentMode::WSpace => "w",
        };
        let _ = writeln!(s, "generator.kind = {kind}");
        let _ = writeln!(s, "generator.latent_dim = {}", g.latent_dim);
        let _ = writeln!(s, "generator.image_size = {}", g.image_size);
        let _ = writeln!(s, "generator.channels = {}", g.channels);
        let _ = writeln!(s, "generator.latent_mode = {mode}");
        let _ = writeln!(s, "generator.seed = {}", g.seed);
        let _ = writeln!(s, "generator.external_path = {}", g.external_path);
        let _ = writeln!(s, "motion.lambda = {}", m.lambda);
        let _ = writeln!(s, "motion.components = {}", m.components);
        let _ = writeln!(s, "motion.mapper_hidden = {}", m.mapper_hidden);
        let _ = writeln!(s, "motion.pca_samples = {}", m.pca_samples);
        let _ = writeln!(s, "motion.detach_prev = {}", m.detach_prev);
        let _ = writeln!(s, "motion.residual = {}", m.residual);
        let _ = writeln!(s, "discriminators.dv_channels = {}", fmt_list(&d.dv_channels));
        let _ = writeln!(s, "discriminators.dv_scales = {}", d.dv_scales);
        let _ = writeln!(s, "discriminators.dv_shared_scales = {}", d.dv_shared_scales);
        let _ = writeln!(s, "discriminators.di_blocks = {}", d.di_blocks);
        let _ = writeln!(s, "discriminators.di_base = {}", d.di_base);
        let _ = writeln!(s, "discriminators.proj_hidden = {}", d.proj_hidden);
        let _ = writeln!(s, "discriminators.embed_dim = {}", d.embed_dim);
        let _ = writeln!(s, "discriminators.bank_capacity = {}", d.bank_capacity);
        let _ = writeln!(s, "discriminators.momentum = {}", d.momentum);
        let a = &d.augment;
        let _ = writeln!(s, "discriminators.aug_rotate_max_deg = {}", a.rotate_max_deg);
        let _ = writeln!(s, "discriminators.aug_translate_max = {}", a.translate_max);
        let _ = writeln!(s, "discriminators.aug_scale_min = {}", a.scale_range.0);
        let _ = writeln!(s, "discriminators.aug_scale_max = {}", a.scale_range.1);
        let _ = writeln!(s, "discriminators.aug_brightness_max = {}", a.brightness_max);
        let _ = writeln!(s, "discriminators.aug_color_max = {}", a.color_max);
        let _ = writeln!(s, "discriminators.aug_cutout_max_area = {}", a.cutout_max_area);
        let _ = writeln!(s, "discriminators.aug_hflip_prob = {}", a.hflip_prob);
        let _ = writeln!(s, "training.steps = {}", t.steps);
        let _ = writeln!(s, "training.batch = {}", t.batch);
        let _ = writeln!(s, "training.frames = {}", t.frames);
        let _ = writeln!(s, "training.lr = {}", t.lr);
        let _ = writeln!(s, "training.beta1 = {}", t.beta1);
        let _ = writeln!(s, "training.beta2 = {}", t.beta2);
        let _ = writeln!(s, "training.lambda_m = {}", t.lambda_m);
        let _ = writeln!(s, "training.lambda_contr = {}", t.lambda_contr);
        let _ = writeln!(s, "training.lambda_f = {}", t.lambda_f);
        let _ = writeln!(s, "training.tau = {}", t.tau);
        let dm = match t.domain_mode {
            DomainMode::InDomain => "in",
            DomainMode::CrossDomain => "cross",
        };
        let gl = match t.gen_loss {
            GenLossForm::NonSaturating => "non_saturating",
            GenLossForm::Saturating => "saturating",
        };
        let cf = match t.contrastive {
            ContrastiveForm::Literal => "literal",
            ContrastiveForm::Standard => "standard",
        };
        let mk = match t.data_motion {
            MotionKind::Linear => "linear",
            MotionKind::Sinusoidal => "sinusoidal",
        };
        let _ = writeln!(s, "training.domain_mode = {dm}");
        let _ = writeln!(s, "training.gen_loss = {gl}");
        let _ = writeln!(s, "training.contrastive = {cf}");
        let _ = writeln!(s, "training.use_lm = {}", t.use_lm);
        let _ = writeln!(s, "training.use_lcontr = {}", t.use_lcontr);
        let _ = writeln!(s, "training.use_di = {}", t.use_di);
        let _ = writeln!(s, "training.use_dv = {}", t.use_dv);
        let _ = writeln!(s, "training.data_clips = {}", t.data_clips);
        let _ = writeln!(s, "training.data_motion = {mk}");
        let _ = writeln!(s, "training.data_fps = {}", t.data_fps);
        let _ = writeln!(s, "eval.clips = {}", e.clips);
        let _ = writeln!(s, "eval.frames = {}", e.frames);
        let _ = writeln!(s, "eval.inversion_iters = {}", e.inversion_iters);
        let _ = writeln!(s, "eval.inversion_lr = {}", e.inversion_lr);
        let _ = writeln!(s, "eval.perceptual_weight = {}", e.perceptual_weight);
        let emb = match e.embedder {
            EvalEmbedder::Model => "model",
            EvalEmbedder::Pixel => "pixel",
        };
        let _ = writeln!(s, "eval.embedder = {emb}");
        let _ = writeln!(s, "io.out_dir = {}", io.out_dir);
        let _ = writeln!(s, "io.seed = {}", io.seed);
        let _ = writeln!(s, "io.checkpoint_every = {}", io.checkpoint_every);
        s
    }

    /// FNV-1a over the resolved document; stable across runs with the same
    /// settings. The output directory is excluded so relocating a run does
    /// not change its identity.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for line in self.dump().lines() {
            if line.starts_with("io.out_dir") {
                continue;
            }
            for b in line.bytes().chain([b'\n']) {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    /// Writes the resolved document to `<dir>/resolved.cfg`.
    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let path = dir.join("resolved.cfg");
        std::fs::write(&path, self.dump())
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(path)
    }

    pub fn generator_spec(&self) -> GeneratorSpec {
        GeneratorSpec {
            latent_dim: self.generator.latent_dim,
            channels: self.generator.channels,
            height: self.generator.image_size,
            width: self.generator.image_size,
            mode: self.generator.latent_mode,
        }
    }

    pub fn build_generator(&self) -> Result<ImageGenerator> {
        let spec = self.generator_spec();
        match self.generator.kind {
            GeneratorKind::Blob => ImageGenerator::blob(spec, self.generator.seed),
            GeneratorKind::TwoBlob => ImageGenerator::two_blob(spec, self.generator.seed),
            GeneratorKind::External => {
                ImageGenerator::load_external(Path::new(&self.generator.external_path), spec)
            }
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let d = &self.discriminators;
        let t = &self.training;
        TrainConfig {
            steps: t.steps,
            batch: t.batch,
            frames: t.frames,
            lr: t.lr,
            beta1: t.beta1,
            beta2: t.beta2,
            lambda_m: t.lambda_m,
            lambda_contr: t.lambda_contr,
            lambda_f: t.lambda_f,
            tau: t.tau,
            bank_capacity: d.bank_capacity,
            momentum: d.momentum,
            domain_mode: t.domain_mode,
            gen_loss_form: t.gen_loss,
            contrastive_form: t.contrastive,
            use_lm: t.use_lm,
            use_lcontr: t.use_lcontr,
            use_di: t.use_di,
            use_dv: t.use_dv,
            residual: self.motion.residual,
            dv_channels: d.dv_channels.clone(),
            dv_scales: d.dv_scales,
            dv_shared_scales: d.dv_shared_scales,
            di_blocks: d.di_blocks,
            di_base: d.di_base,
            proj_hidden: d.proj_hidden,
            embed_dim: d.embed_dim,
            augment: d.augment,
            seed: self.io.seed,
        }
    }

    pub fn synthetic_config(&self) -> SyntheticConfig {
        SyntheticConfig {
            num_clips: self.training.data_clips,
            frames: self.training.frames,
            channels: self.generator.channels,
            height: self.generator.image_size,
            width: self.generator.image_size,
            motion: self.training.data_motion,
            fps: self.training.data_fps,
            seed: self.io.seed,
        }
    }

    pub fn inversion_config(&self) -> InversionConfig {
        InversionConfig {
            iters: self.eval.inversion_iters,
            lr: self.eval.inversion_lr,
            seed: self.io.seed,
            perceptual_weight: self.eval.perceptual_weight,
        }
    }
}
