//! Adversarial training loop.
//!
//! Per step, in order: update the video discriminator, update the image
//! discriminator together with the contrastive head, refresh the momentum
//! encoder and the memory bank, then update the motion generator. The image
//! generator stays frozen throughout. Each phase builds its own graph, so
//! memory is released between phases.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adversaries::{
    cross_domain_video_input, embed_image, image_disc_forward, in_domain_video_input,
    momentum_update, video_disc_forward, ContrastiveEncoderParams, ImageDiscParams, MemoryBank,
    VideoDiscParams,
};
use crate::augment::{augment_frame, AugmentConfig};
use crate::error::{Error, Result};
use crate::generator::{ImageGenerator, VideoClip};
use crate::losses::{
    contrastive_loss, disc_accuracy, disc_loss, feature_matching_score, gen_adv_loss,
    ContrastiveForm, GenLossForm,
};
use crate::motion::{generate_trajectory_graph, mutual_info_loss, MotionGeneratorParams};
use crate::nn::checkpoint::ModelCheckpoint;
use crate::nn::init::standard_normal_vec;
use crate::tensor::{AdamState, Graph, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainMode {
    /// Generated videos start from a real still: the discriminator sees
    /// frame 1 stacked with each later frame (2c channels, n-1 steps).
    InDomain,
    /// Free generation: the discriminator sees all n frames as they are.
    CrossDomain,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub steps: usize,
    /// Videos per step (batch size N).
    pub batch: usize,
    /// Frames per generated video (n).
    pub frames: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda_m: f64,
    pub lambda_contr: f64,
    pub lambda_f: f64,
    pub tau: f64,
    pub bank_capacity: usize,
    pub momentum: f64,
    pub domain_mode: DomainMode,
    pub gen_loss_form: GenLossForm,
    pub contrastive_form: ContrastiveForm,
    pub use_lm: bool,
    pub use_lcontr: bool,
    pub use_di: bool,
    pub use_dv: bool,
    pub residual: bool,
    pub dv_channels: Vec<usize>,
    pub dv_scales: usize,
    pub dv_shared_scales: bool,
    pub di_blocks: usize,
    pub di_base: usize,
    pub proj_hidden: usize,
    pub embed_dim: usize,
    pub augment: AugmentConfig,
    pub seed: u64,
}

impl TrainConfig {
    /// Desk-scale defaults; training at this size stays in CPU budget.
    pub fn toy() -> Self {
        TrainConfig {
            steps: 200,
            batch: 2,
            frames: 8,
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            lambda_m: 1.0,
            lambda_contr: 1.0,
            lambda_f: 1.0,
            tau: 0.07,
            bank_capacity: 512,
            momentum: 0.999,
            domain_mode: DomainMode::CrossDomain,
            gen_loss_form: GenLossForm::NonSaturating,
            contrastive_form: ContrastiveForm::Literal,
            use_lm: true,
            use_lcontr: true,
            use_di: true,
            use_dv: true,
            residual: true,
            dv_channels: vec![8, 16, 32, 32, 1],
            dv_scales: 2,
            dv_shared_scales: false,
            di_blocks: 4,
            di_base: 8,
            proj_hidden: 32,
            embed_dim: 16,
            augment: AugmentConfig::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.frames < 2 {
            return Err(Error::Config("need batch >= 1 and frames >= 2".into()));
        }
        if self.tau <= 0.0 || self.lr <= 0.0 {
            return Err(Error::Config("lr and tau must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum {} outside [0, 1]",
                self.momentum
            )));
        }
        self.augment.validate()
    }
}

/// Per-step scalar diagnostics; disabled branches report None.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub step: u64,
    pub loss_dv: Option<f64>,
    pub loss_di: Option<f64>,
    pub loss_contr: Option<f64>,
    pub loss_m: Option<f64>,
    pub loss_f: Option<f64>,
    pub acc_dv: Option<f64>,
}

/// CSV sink: `step,loss_dv,loss_di,loss_contr,loss_m,loss_f,acc_dv` with
/// empty fields for disabled losses.
pub struct CsvLogger<W: Write> {
    out: W,
}

impl<W: Write> CsvLogger<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "step,loss_dv,loss_di,loss_contr,loss_m,loss_f,acc_dv")?;
        Ok(CsvLogger { out })
    }

    pub fn log(&mut self, s: &StepStats) -> std::io::Result<()> {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        writeln!(
            self.out,
            "{},{},{},{},{},{},{}",
            s.step,
            f(s.loss_dv),
            f(s.loss_di),
            f(s.loss_contr),
            f(s.loss_m),
            f(s.loss_f),
            f(s.acc_dv)
        )
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub motion: MotionGeneratorParams,
    pub image_gen: ImageGenerator,
    pub dv: VideoDiscParams,
    /// Online image discriminator + projection head; its `disc` half is the
    /// adversarial image discriminator.
    pub encoder: ContrastiveEncoderParams,
    /// Momentum (key) copy of `encoder`.
    pub key_encoder: ContrastiveEncoderParams,
    pub bank: MemoryBank,
    pub step: u64,
    adam_motion: AdamState,
    adam_dv: AdamState,
    adam_enc: AdamState,
    rng: ChaCha8Rng,
}

fn shapes(tensors: &[&Tensor]) -> Vec<Vec<usize>> {
    tensors.iter().map(|t| t.shape().to_vec()).collect()
}

impl Trainer {
    pub fn new(
        cfg: TrainConfig,
        mut motion: MotionGeneratorParams,
        image_gen: ImageGenerator,
    ) -> Result<Self> {
        cfg.validate()?;
        motion.residual_enabled = cfg.residual;
        let spec = image_gen.spec().clone();
        if spec.latent_dim != motion.latent_dim() {
            return Err(Error::Config(format!(
                "motion generator dim {} vs image generator dim {}",
                motion.latent_dim(),
                spec.latent_dim
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let dv_input = match cfg.domain_mode {
            DomainMode::InDomain => (2 * spec.channels, cfg.frames - 1, spec.height, spec.width),
            DomainMode::CrossDomain => (spec.channels, cfg.frames, spec.height, spec.width),
        };
        let dv = VideoDiscParams::init(
            &mut rng,
            dv_input,
            &cfg.dv_channels,
            cfg.dv_scales,
            cfg.dv_shared_scales,
        )?;
        let di = ImageDiscParams::init(
            &mut rng,
            (spec.channels, spec.height, spec.width),
            cfg.di_blocks,
            cfg.di_base,
        )?;
        let encoder = ContrastiveEncoderParams::init(&mut rng, &di, cfg.proj_hidden, cfg.embed_dim);
        let key_encoder = encoder.clone();
        let bank = MemoryBank::new(cfg.bank_capacity, cfg.embed_dim)?;

        let adam_motion = AdamState::new(&shapes(&motion.tensors()), cfg.lr, cfg.beta1, cfg.beta2);
        let adam_dv = AdamState::new(&shapes(&dv.tensors()), cfg.lr, cfg.beta1, cfg.beta2);
        let adam_enc = AdamState::new(&shapes(&encoder.tensors()), cfg.lr, cfg.beta1, cfg.beta2);

        Ok(Trainer {
            cfg,
            motion,
            image_gen,
            dv,
            encoder,
            key_encoder,
            bank,
            step: 0,
            adam_motion,
            adam_dv,
            adam_enc,
            rng,
        })
    }

    fn latent_dim(&self) -> usize {
        self.motion.latent_dim()
    }

    /// Draws (z1, eps) noise for one video.
    fn sample_noise(&mut self) -> (Tensor, Tensor) {
        let d = self.latent_dim();
        let z1 = standard_normal_vec(&mut self.rng, d);
        let eps = standard_normal_vec(&mut self.rng, (self.cfg.frames - 1) * d)
            .reshape(vec![self.cfg.frames - 1, d])
            .expect("eps shape");
        (z1, eps)
    }

    /// Samples one generated clip outside any graph (for discriminator
    /// updates, where generator gradients are not needed).
    pub fn sample_fake_clip(&mut self) -> Result<(VideoClip, Tensor, Tensor)> {
        let (z1, eps) = self.sample_noise();
        let traj = crate::motion::generate_trajectory(&z1, &eps, &self.motion)?;
        let clip = self.image_gen.synthesize_video(&traj.codes, 8.0)?;
        Ok((clip, z1, eps))
    }

    /// Assembles the discriminator input volume for a clip's first n frames.
    fn video_input(&self, g: &mut Graph, clip: &VideoClip) -> Result<Var> {
        if clip.len() < self.cfg.frames {
            return Err(Error::Dataset(format!(
                "clip has {} frames, config needs {}",
                clip.len(),
                self.cfg.frames
            )));
        }
        let frames: Vec<Var> = (0..self.cfg.frames)
            .map(|t| g.constant(clip.frame(t)))
            .collect();
        match self.cfg.domain_mode {
            DomainMode::InDomain => in_domain_video_input(g, &frames),
            DomainMode::CrossDomain => cross_domain_video_input(g, &frames),
        }
    }

    fn step_video_disc(&mut self, reals: &[&VideoClip], fakes: &[VideoClip]) -> Result<(f64, f64)> {
        let mut g = Graph::new();
        let vars = self.dv.bind(&mut g, true);
        let mut real_logits = Vec::new();
        let mut fake_logits = Vec::new();
        for clip in reals {
            let x = self.video_input(&mut g, clip)?;
            real_logits.extend(video_disc_forward(&mut g, x, &vars)?);
        }
        for clip in fakes {
            let x = self.video_input(&mut g, clip)?;
            fake_logits.extend(video_disc_forward(&mut g, x, &vars)?);
        }
        let loss = disc_loss(&mut g, &real_logits, &fake_logits)?;
        let loss_val = g.value(loss).item();
        let real_vals: Vec<Tensor> = real_logits.iter().map(|&v| g.value(v).clone()).collect();
        let fake_vals: Vec<Tensor> = fake_logits.iter().map(|&v| g.value(v).clone()).collect();
        let acc = disc_accuracy(
            &real_vals.iter().collect::<Vec<_>>(),
            &fake_vals.iter().collect::<Vec<_>>(),
        );
        g.backward(loss)?;
        let grads: Vec<Option<Tensor>> = vars.leaves().iter().map(|&l| g.take_grad(l)).collect();
        self.adam_dv.step(&mut self.dv.tensors_mut(), &grads)?;
        Ok((loss_val, acc))
    }

    fn step_image_disc(
        &mut self,
        reals: &[&VideoClip],
        fakes: &[VideoClip],
    ) -> Result<(f64, Option<f64>)> {
        let n = self.cfg.frames;
        // choose frames and build augmented views up front (RNG order fixed)
        let real_frames: Vec<Tensor> = reals
            .iter()
            .map(|c| c.frame(self.rng.gen_range(0..n)))
            .collect();
        let fake_frames: Vec<Tensor> = fakes
            .iter()
            .map(|c| c.frame(self.rng.gen_range(0..n)))
            .collect();
        let mut views = Vec::new();
        if self.cfg.use_lcontr {
            for f in &real_frames {
                let v1 = augment_frame(&mut self.rng, f, &self.cfg.augment)?;
                let v2 = augment_frame(&mut self.rng, f, &self.cfg.augment)?;
                views.push((v1, v2));
            }
        }

        let mut g = Graph::new();
        let vars = self.encoder.bind(&mut g, true);
        let mut real_logits = Vec::new();
        let mut fake_logits = Vec::new();
        for f in &real_frames {
            let img = g.constant(f.clone());
            real_logits.push(image_disc_forward(&mut g, img, &vars.disc)?.0);
        }
        for f in &fake_frames {
            let img = g.constant(f.clone());
            fake_logits.push(image_disc_forward(&mut g, img, &vars.disc)?.0);
        }
        let mut total = disc_loss(&mut g, &real_logits, &fake_logits)?;
        let loss_di = g.value(total).item();

        let mut loss_contr = None;
        let mut keys = Vec::new();
        if self.cfg.use_lcontr && (views.len() >= 2 || !self.bank.is_empty()) {
            let mut pairs = Vec::with_capacity(views.len());
            for (v1, v2) in &views {
                let anchor_img = g.constant(v1.clone());
                let anchor = embed_image(&mut g, anchor_img, &vars)?;
                let key = self.key_encoder.embed(v2)?;
                let key_var = g.constant(key.clone());
                pairs.push((anchor, key_var));
                keys.push(key);
            }
            let bank_negs = self.bank.negatives();
            let bank_opt = if self.bank.is_empty() { None } else { Some(&bank_negs) };
            let contr = contrastive_loss(
                &mut g,
                &pairs,
                bank_opt,
                self.cfg.tau,
                self.cfg.contrastive_form,
            )?;
            loss_contr = Some(g.value(contr).item());
            let weighted = g.scale(contr, self.cfg.lambda_contr)?;
            total = g.add(total, weighted)?;
        }

        g.backward(total)?;
        let grads: Vec<Option<Tensor>> = vars.leaves().iter().map(|&l| g.take_grad(l)).collect();
        self.adam_enc.step(&mut self.encoder.tensors_mut(), &grads)?;

        momentum_update(&mut self.key_encoder, &self.encoder, self.cfg.momentum)?;
        for k in &keys {
            self.bank.push(k)?;
        }
        Ok((loss_di, loss_contr))
    }

    fn step_motion(&mut self, noise: &[(Tensor, Tensor)]) -> Result<(Option<f64>, Option<f64>)> {
        let cfg = &self.cfg;
        let d = self.latent_dim();
        let mut g = Graph::new();
        let mv = self.motion.bind(&mut g, true);
        let dv_vars = cfg.use_dv.then(|| self.dv.bind(&mut g, false));
        let enc_vars = cfg.use_di.then(|| self.encoder.bind(&mut g, false));

        let mut dv_logits = Vec::new();
        let mut di_logits = Vec::new();
        let mut fm_scores = Vec::new();
        let mut mi_terms = Vec::new();

        for (z1, eps) in noise {
            let z1v = g.constant(z1.clone().reshape(vec![d, 1])?);
            let eps_vars: Vec<Var> = (0..cfg.frames - 1)
                .map(|t| {
                    let row = Tensor::from_vec(eps.data()[t * d..(t + 1) * d].to_vec());
                    g.constant(row.reshape(vec![d, 1]).expect("eps row"))
                })
                .collect();
            let traj = generate_trajectory_graph(&mut g, z1v, &eps_vars, &mv)?;
            let frames: Vec<Var> = traj
                .codes
                .iter()
                .map(|&c| self.image_gen.synthesize_graph(&mut g, c))
                .collect::<Result<_>>()?;

            if let Some(dv_vars) = &dv_vars {
                let x = match cfg.domain_mode {
                    DomainMode::InDomain => in_domain_video_input(&mut g, &frames)?,
                    DomainMode::CrossDomain => cross_domain_video_input(&mut g, &frames)?,
                };
                dv_logits.extend(video_disc_forward(&mut g, x, dv_vars)?);
            }
            if let Some(enc_vars) = &enc_vars {
                // frame 1 acts as the in-batch reference; detached so only
                // the later frames drive the feature-matching gradient
                let ref_frame = g.detach(frames[0]);
                let (_, ref_feats) = image_disc_forward(&mut g, ref_frame, &enc_vars.disc)?;
                for &f in &frames[1..] {
                    let (logit, feats) = image_disc_forward(&mut g, f, &enc_vars.disc)?;
                    di_logits.push(logit);
                    fm_scores.push(feature_matching_score(&mut g, &feats, &ref_feats)?);
                }
            }
            if cfg.use_lm {
                mi_terms.push(mutual_info_loss(&mut g, &traj.hidden, &traj.eps, &mv.mapper)?);
            }
        }

        let mut total: Option<Var> = None;
        let add = |g: &mut Graph, total: &mut Option<Var>, v: Var| -> Result<()> {
            *total = Some(match *total {
                None => v,
                Some(t) => g.add(t, v)?,
            });
            Ok(())
        };

        if !dv_logits.is_empty() {
            let adv = gen_adv_loss(&mut g, &dv_logits, cfg.gen_loss_form)?;
            add(&mut g, &mut total, adv)?;
        }
        if !di_logits.is_empty() {
            let adv = gen_adv_loss(&mut g, &di_logits, cfg.gen_loss_form)?;
            add(&mut g, &mut total, adv)?;
        }
        let mut loss_f = None;
        if !fm_scores.is_empty() {
            let stacked = g.concat0(&fm_scores)?;
            let score = g.mean_all(stacked)?;
            loss_f = Some(g.value(score).item());
            // maximize the similarity -> minimize its negation
            let term = g.scale(score, -cfg.lambda_f)?;
            add(&mut g, &mut total, term)?;
        }
        let mut loss_m = None;
        if !mi_terms.is_empty() {
            let stacked = g.concat0(&mi_terms)?;
            let score = g.mean_all(stacked)?;
            loss_m = Some(g.value(score).item());
            let term = g.scale(score, -cfg.lambda_m)?;
            add(&mut g, &mut total, term)?;
        }

        if let Some(total) = total {
            g.backward(total)?;
            let grads: Vec<Option<Tensor>> = mv.leaves().iter().map(|&l| g.take_grad(l)).collect();
            self.adam_motion.step(&mut self.motion.tensors_mut(), &grads)?;
        }
        Ok((loss_m, loss_f))
    }

    /// One full optimization step over a batch of real clips.
    pub fn train_step(&mut self, reals: &[&VideoClip]) -> Result<StepStats> {
        if reals.len() != self.cfg.batch {
            return Err(Error::Config(format!(
                "got {} real clips, batch size is {}",
                reals.len(),
                self.cfg.batch
            )));
        }
        // noise is drawn once and shared by the D_V and G_M phases
        let mut noise = Vec::with_capacity(self.cfg.batch);
        let mut fakes = Vec::with_capacity(self.cfg.batch);
        for _ in 0..self.cfg.batch {
            let (clip, z1, eps) = self.sample_fake_clip()?;
            fakes.push(clip);
            noise.push((z1, eps));
        }

        let (mut loss_dv, mut acc_dv) = (None, None);
        if self.cfg.use_dv {
            let (l, a) = self.step_video_disc(reals, &fakes)?;
            loss_dv = Some(l);
            acc_dv = Some(a);
        }
        let (mut loss_di, mut loss_contr) = (None, None);
        if self.cfg.use_di {
            let (l, c) = self.step_image_disc(reals, &fakes)?;
            loss_di = Some(l);
            loss_contr = c;
        }
        let (loss_m, loss_f) = self.step_motion(&noise)?;

        self.step += 1;
        Ok(StepStats {
            step: self.step,
            loss_dv,
            loss_di,
            loss_contr,
            loss_m,
            loss_f,
            acc_dv,
        })
    }

    /// Runs `cfg.steps` steps, cycling through the dataset in order.
    pub fn train<W: Write>(
        &mut self,
        clips: &[VideoClip],
        logger: &mut CsvLogger<W>,
    ) -> Result<StepStats> {
        if clips.len() < self.cfg.batch {
            return Err(Error::Dataset(format!(
                "{} clips but batch size {}",
                clips.len(),
                self.cfg.batch
            )));
        }
        let mut last = None;
        for s in 0..self.cfg.steps {
            let batch: Vec<&VideoClip> = (0..self.cfg.batch)
                .map(|i| &clips[(s * self.cfg.batch + i) % clips.len()])
                .collect();
            let stats = self.train_step(&batch)?;
            logger.log(&stats).map_err(|e| Error::io("train log", e))?;
            last = Some(stats);
        }
        Ok(last.expect("steps >= 1"))
    }

    // -- persistence --------------------------------------------------------

    pub fn to_checkpoint(&self, config_hash: u64) -> Result<ModelCheckpoint> {
        let mut ck = ModelCheckpoint::new(config_hash, self.step);
        record(&mut ck, "motion", &self.motion.tensors())?;
        ck.insert("motion.basis", self.motion.basis.basis.clone())?;
        ck.insert(
            "motion.basis.ev",
            Tensor::from_vec(self.motion.basis.explained_variance.clone()),
        )?;
        ck.insert("motion.basis.mean", self.motion.basis.sample_mean.clone())?;
        ck.insert(
            "motion.basis.meta",
            Tensor::from_vec(vec![
                self.motion.basis.sample_count as f64,
                self.motion.basis.total_variance,
            ]),
        )?;
        record(&mut ck, "dv", &self.dv.tensors())?;
        record(&mut ck, "enc", &self.encoder.tensors())?;
        record(&mut ck, "key", &self.key_encoder.tensors())?;
        for (name, t) in self.image_gen.params_checkpoint().records() {
            ck.insert(format!("gen.{name}"), t.clone())?;
        }
        Ok(ck)
    }

    /// Restores every trainable tensor from a checkpoint produced by
    /// `to_checkpoint` on an identically configured trainer.
    pub fn restore(&mut self, ck: &ModelCheckpoint) -> Result<()> {
        assign(ck, "motion", self.motion.tensors_mut())?;
        self.motion.basis.basis = ck.require("motion.basis")?.clone();
        self.motion.basis.explained_variance = ck.require("motion.basis.ev")?.data().to_vec();
        self.motion.basis.sample_mean = ck.require("motion.basis.mean")?.clone();
        let meta = ck.require("motion.basis.meta")?;
        self.motion.basis.sample_count = meta.data()[0] as usize;
        self.motion.basis.total_variance = meta.data()[1];
        assign(ck, "dv", self.dv.tensors_mut())?;
        assign(ck, "enc", self.encoder.tensors_mut())?;
        assign(ck, "key", self.key_encoder.tensors_mut())?;
        self.step = ck.step;
        Ok(())
    }
}

fn record(ck: &mut ModelCheckpoint, prefix: &str, tensors: &[&Tensor]) -> Result<()> {
    for (i, t) in tensors.iter().enumerate() {
        ck.insert(format!("{prefix}.{i}"), (*t).clone())?;
    }
    Ok(())
}

fn assign(ck: &ModelCheckpoint, prefix: &str, mut tensors: Vec<&mut Tensor>) -> Result<()> {
    for (i, t) in tensors.iter_mut().enumerate() {
        let src = ck.require(&format!("{prefix}.{i}"))?;
        if src.shape() != t.shape() {
            return Err(Error::corrupt(
                "checkpoint",
                format!(
                    "{prefix}.{i}: shape {:?} does not match model {:?}",
                    src.shape(),
                    t.shape()
                ),
            ));
        }
        **t = src.clone();
    }
    Ok(())
}
