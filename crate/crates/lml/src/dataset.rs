//! Training data: a synthetic moving-blob corpus with known motion, and a
//! loader for folders of PNG frames.
//!
//! Synthetic clips are generated per-clip from a seed derived only from the
//! base seed and the clip index, so the result is identical no matter how
//! many worker threads run (`LML_THREADS`, default 1).

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::generator::VideoClip;
use crate::tensor::Tensor;

pub const THREADS_ENV: &str = "LML_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionKind {
    /// Constant velocity, reflecting off the frame borders.
    Linear,
    /// Sinusoidal sweep around the frame center.
    Sinusoidal,
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub num_clips: usize,
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub motion: MotionKind,
    pub fps: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_clips == 0 || self.frames == 0 {
            return Err(Error::Dataset("need at least one clip and one frame".into()));
        }
        if self.height < 8 || self.width < 8 {
            return Err(Error::Dataset(format!(
                "frames must be at least 8x8, got {}x{}",
                self.height, self.width
            )));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::Dataset(format!(
                "channels must be 1 or 3, got {}",
                self.channels
            )));
        }
        Ok(())
    }
}

/// Synthetic corpus plus its ground truth: the blob center path of every
/// clip and the mean per-frame centroid displacement.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub clips: Vec<VideoClip>,
    /// Per clip, per frame, the true blob center (x, y) in pixels.
    pub centers: Vec<Vec<(f64, f64)>>,
    /// Mean over clips and steps of |center_{t+1} - center_t|.
    pub mean_step: f64,
}

fn render_blob(
    cfg: &SyntheticConfig,
    center: (f64, f64),
    radius: f64,
    amp: f64,
    tints: &[f64],
) -> Vec<f64> {
    let (h, w) = (cfg.height, cfg.width);
    let mut out = vec![0.0; cfg.channels * h * w];
    for ch in 0..cfg.channels {
        let tint = tints[ch];
        for y in 0..h {
            for x in 0..w {
                let dx = x as f64 - center.0;
                let dy = y as f64 - center.1;
                let mass = (-(dx * dx + dy * dy) / (2.0 * radius * radius)).exp();
                out[ch * h * w + y * w + x] = 2.0 * tint * amp * mass - 1.0;
            }
        }
    }
    out
}

/// Reflects `p` into [lo, hi] (one bounce is enough for the speeds used).
fn reflect(p: f64, lo: f64, hi: f64) -> f64 {
    if p < lo {
        lo + (lo - p)
    } else if p > hi {
        hi - (p - hi)
    } else {
        p
    }
}

fn clip_centers(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let (h, w) = (cfg.height as f64, cfg.width as f64);
    let margin = 0.2;
    match cfg.motion {
        MotionKind::Linear => {
            let x0 = rng.gen_range(margin * w..(1.0 - margin) * w);
            let y0 = rng.gen_range(margin * h..(1.0 - margin) * h);
            let speed = rng.gen_range(0.01..0.05);
            let dir = rng.gen_range(0.0..std::f64::consts::TAU);
            let (vx, vy) = (speed * w * dir.cos(), speed * h * dir.sin());
            (0..cfg.frames)
                .map(|t| {
                    let x = reflect(x0 + vx * t as f64, 1.0, w - 2.0);
                    let y = reflect(y0 + vy * t as f64, 1.0, h - 2.0);
                    (x, y)
                })
                .collect()
        }
        MotionKind::Sinusoidal => {
            let ax = rng.gen_range(0.1..0.3) * w;
            let ay = rng.gen_range(0.1..0.3) * h;
            let om = rng.gen_range(0.2..0.6);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            (0..cfg.frames)
                .map(|t| {
                    let a = om * t as f64 + phase;
                    (w / 2.0 + ax * a.sin(), h / 2.0 + ay * (1.3 * a).cos())
                })
                .collect()
        }
    }
}

fn make_clip(cfg: &SyntheticConfig, index: usize) -> Result<(VideoClip, Vec<(f64, f64)>)> {
    // per-clip stream: depends only on the base seed and the clip index
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index as u64 + 1)));
    let centers = clip_centers(cfg, &mut rng);
    let radius = rng.gen_range(0.08..0.16) * cfg.width.min(cfg.height) as f64;
    let amp = rng.gen_range(0.6..1.0);
    let tints: Vec<f64> = (0..cfg.channels).map(|_| rng.gen_range(0.5..1.0)).collect();

    let per = cfg.channels * cfg.height * cfg.width;
    let mut data = Vec::with_capacity(cfg.frames * per);
    for &c in &centers {
        data.extend(render_blob(cfg, c, radius, amp, &tints));
    }
    let frames = Tensor::new(vec![cfg.frames, cfg.channels, cfg.height, cfg.width], data)?;
    Ok((VideoClip::new(frames, cfg.fps)?, centers))
}

/// Worker-thread count: `LML_THREADS` if set and valid, otherwise 1.
pub fn worker_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

pub fn make_synthetic_dataset(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let threads = worker_threads().min(cfg.num_clips);
    let mut slots: Vec<Option<(VideoClip, Vec<(f64, f64)>)>> = (0..cfg.num_clips).map(|_| None).collect();

    if threads <= 1 {
        for (i, slot) in slots.iter_mut().enumerate() {
            *slot = Some(make_clip(cfg, i)?);
        }
    } else {
        let chunk = cfg.num_clips.div_ceil(threads);
        let results: Vec<Result<Vec<(usize, (VideoClip, Vec<(f64, f64)>))>>> =
            std::thread::scope(|scope| {
                let handles: Vec<_> = (0..threads)
                    .map(|t| {
                        let cfg = cfg.clone();
                        scope.spawn(move || {
                            let lo = t * chunk;
                            let hi = ((t + 1) * chunk).min(cfg.num_clips);
                            (lo..hi)
                                .map(|i| make_clip(&cfg, i).map(|c| (i, c)))
                                .collect()
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
            });
        for res in results {
            for (i, clip) in res? {
                slots[i] = Some(clip);
            }
        }
    }

    let mut clips = Vec::with_capacity(cfg.num_clips);
    let mut centers = Vec::with_capacity(cfg.num_clips);
    for slot in slots {
        let (clip, c) = slot.expect("all clips generated");
        clips.push(clip);
        centers.push(c);
    }

    let mut total = 0.0;
    let mut steps = 0usize;
    for path in &centers {
        for w in path.windows(2) {
            total += ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
            steps += 1;
        }
    }
    let mean_step = if steps == 0 { 0.0 } else { total / steps as f64 };
    Ok(SyntheticDataset { clips, centers, mean_step })
}

// ---------------------------------------------------------------------------
// PNG folders
// ---------------------------------------------------------------------------

/// Loads one clip from a folder of PNG frames, sorted by file name and
/// subsampled by `stride`. Returns None (with a warning on stderr) when
/// fewer than `min_frames` frames survive.
pub fn load_frame_folder(
    dir: &Path,
    channels: usize,
    stride: usize,
    min_frames: usize,
    fps: f64,
) -> Result<Option<VideoClip>> {
    if stride == 0 {
        return Err(Error::Dataset("stride must be >= 1".into()));
    }
    if channels != 1 && channels != 3 {
        return Err(Error::Dataset(format!("channels must be 1 or 3, got {channels}")));
    }
    let mut names: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir.display().to_string(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .map(|e| e.eq_ignore_ascii_case("png"))
                .unwrap_or(false)
        })
        .collect();
    names.sort();

    let picked: Vec<_> = names.iter().step_by(stride).collect();
    if picked.len() < min_frames {
        eprintln!(
            "warning: skipping {} ({} frames after stride {stride}, need {min_frames})",
            dir.display(),
            picked.len()
        );
        return Ok(None);
    }

    let mut frames: Vec<f64> = Vec::new();
    let mut dims: Option<(usize, usize)> = None;
    for path in &picked {
        let img = image::open(path)
            .map_err(|e| Error::corrupt(path.display().to_string(), e.to_string()))?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        match dims {
            None => dims = Some((h, w)),
            Some(d) if d != (h, w) => {
                return Err(Error::Dataset(format!(
                    "frame size mismatch in {}: {}x{} vs {}x{}",
                    dir.display(),
                    h,
                    w,
                    d.0,
                    d.1
                )))
            }
            _ => {}
        }
        // planar [c, h, w], pixel byte -> [-1, 1]
        let to_unit = |b: u8| b as f64 / 127.5 - 1.0;
        if channels == 1 {
            let gray = img.to_luma8();
            frames.extend(gray.pixels().map(|p| to_unit(p.0[0])));
        } else {
            let rgb = img.to_rgb8();
            for ch in 0..3 {
                frames.extend(rgb.pixels().map(|p| to_unit(p.0[ch])));
            }
        }
    }
    let (h, w) = dims.expect("at least min_frames frames");
    let t = Tensor::new(vec![picked.len(), channels, h, w], frames)?;
    Ok(Some(VideoClip::new(t, fps)?))
}

/// Every immediate subdirectory of `root` is one candidate clip; short ones
/// are skipped with a warning.
pub fn load_video_folders(
    root: &Path,
    channels: usize,
    stride: usize,
    min_frames: usize,
    fps: f64,
) -> Result<Vec<VideoClip>> {
    let mut dirs: Vec<_> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root.display().to_string(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut clips = Vec::new();
    for d in dirs {
        if let Some(clip) = load_frame_folder(&d, channels, stride, min_frames, fps)? {
            clips.push(clip);
        }
    }
    if clips.is_empty() {
        return Err(Error::Dataset(format!("no usable clips under {}", root.display())));
    }
    Ok(clips)
}
