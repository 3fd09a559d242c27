//! Image and video quality metrics. Frames are [c, h, w] in [-1, 1]
//! (dynamic range 2.0).

use crate::error::{Error, Result};
use crate::generator::VideoClip;
use crate::tensor::Tensor;

/// Values above this are reported as the cap (identical inputs would be
/// +inf otherwise).
pub const PSNR_CAP: f64 = 99.0;
pub const DATA_RANGE: f64 = 2.0;

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() || a.numel() == 0 {
        return Err(Error::ShapeMismatch {
            op,
            detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
        });
    }
    Ok(())
}

pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    same_shape("mse", a, b)?;
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(s / a.numel() as f64)
}

/// Peak signal-to-noise ratio in dB, capped at `PSNR_CAP`.
pub fn psnr(a: &Tensor, b: &Tensor) -> Result<f64> {
    let m = mse(a, b)?;
    if m <= 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (DATA_RANGE * DATA_RANGE / m).log10()).min(PSNR_CAP))
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            let d2 = (y as f64 - c).powi(2) + (x as f64 - c).powi(2);
            w.push((-d2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Mean structural similarity over all fully-contained 11x11 Gaussian
/// windows, averaged across channels. Frames must be at least 11x11.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    same_shape("ssim", a, b)?;
    let s = a.shape();
    if s.len() != 3 {
        return Err(Error::ShapeMismatch {
            op: "ssim",
            detail: format!("want [c, h, w], got {s:?}"),
        });
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Domain {
            op: "ssim",
            detail: format!("frame {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"),
        });
    }
    let win = gaussian_window();
    // computed on the [0, 1] rescale of the inputs, so L = 1
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let to01 = |v: f64| (v + 1.0) / 2.0;

    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..c {
        let pa: Vec<f64> = a.data()[ch * h * w..(ch + 1) * h * w]
            .iter()
            .map(|&v| to01(v))
            .collect();
        let pb: Vec<f64> = b.data()[ch * h * w..(ch + 1) * h * w]
            .iter()
            .map(|&v| to01(v))
            .collect();
        for y0 in 0..=h - SSIM_WINDOW {
            for x0 in 0..=w - SSIM_WINDOW {
                let (mut ma, mut mb) = (0.0, 0.0);
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for wy in 0..SSIM_WINDOW {
                    for wx in 0..SSIM_WINDOW {
                        let g = win[wy * SSIM_WINDOW + wx];
                        let xa = pa[(y0 + wy) * w + x0 + wx];
                        let xb = pb[(y0 + wy) * w + x0 + wx];
                        ma += g * xa;
                        mb += g * xb;
                        va += g * xa * xa;
                        vb += g * xb * xb;
                        cov += g * xa * xb;
                    }
                }
                va -= ma * ma;
                vb -= mb * mb;
                cov -= ma * mb;
                let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
                let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
                total += num / den;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// Fallback content embedding: 8x8 average-pooled pixels, flattened over
/// channels.
pub fn pixel_embedding(frame: &Tensor) -> Result<Tensor> {
    let s = frame.shape();
    if s.len() != 3 {
        return Err(Error::ShapeMismatch {
            op: "pixel_embedding",
            detail: format!("want [c, h, w], got {s:?}"),
        });
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    let (gh, gw) = (8.min(h), 8.min(w));
    let mut out = Vec::with_capacity(c * gh * gw);
    for ch in 0..c {
        let plane = &frame.data()[ch * h * w..(ch + 1) * h * w];
        for gy in 0..gh {
            for gx in 0..gw {
                let y0 = gy * h / gh;
                let y1 = ((gy + 1) * h / gh).max(y0 + 1);
                let x0 = gx * w / gw;
                let x1 = ((gx + 1) * w / gw).max(x0 + 1);
                let mut sum = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        sum += plane[y * w + x];
                    }
                }
                out.push(sum / ((y1 - y0) * (x1 - x0)) as f64);
            }
        }
    }
    Ok(Tensor::from_vec(out))
}

/// Average content distance: mean distance of per-frame embeddings to their
/// mean. A static video scores 0; more content change scores higher. Pass
/// `embed` to use a learned embedder, otherwise pooled pixels are used.
pub fn acd(
    clip: &VideoClip,
    embed: Option<&dyn Fn(&Tensor) -> Result<Tensor>>,
) -> Result<f64> {
    let n = clip.len();
    if n < 2 {
        return Err(Error::Domain {
            op: "acd",
            detail: "need at least two frames".into(),
        });
    }
    let mut embs = Vec::with_capacity(n);
    for t in 0..n {
        let f = clip.frame(t);
        let e = match embed {
            Some(f_embed) => f_embed(&f)?,
            None => pixel_embedding(&f)?,
        };
        embs.push(e);
    }
    let dim = embs[0].numel();
    let mut mean = vec![0.0; dim];
    for e in &embs {
        if e.numel() != dim {
            return Err(Error::ShapeMismatch {
                op: "acd",
                detail: "embedder output size changed between frames".into(),
            });
        }
        for (m, v) in mean.iter_mut().zip(e.data()) {
            *m += v / n as f64;
        }
    }
    let mut total = 0.0;
    for e in &embs {
        let d2: f64 = e
            .data()
            .iter()
            .zip(&mean)
            .map(|(v, m)| (v - m) * (v - m))
            .sum();
        total += d2.sqrt();
    }
    Ok(total / n as f64)
}

/// Motion-diversity summary for videos sharing a first code: for each frame
/// index, the per-pixel standard deviation across clips, averaged over
/// pixels. Identical clips score 0 everywhere.
pub fn diversity_std_per_frame(clips: &[VideoClip]) -> Result<Vec<f64>> {
    if clips.len() < 2 {
        return Err(Error::Domain {
            op: "diversity_std",
            detail: "need at least two clips".into(),
        });
    }
    let shape = clips[0].frames.shape().to_vec();
    for c in clips {
        if c.frames.shape() != shape {
            return Err(Error::ShapeMismatch {
                op: "diversity_std",
                detail: "clip shapes differ".into(),
            });
        }
    }
    let n_frames = shape[0];
    let per = shape[1] * shape[2] * shape[3];
    let m = clips.len() as f64;
    let mut out = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let mut total = 0.0;
        for p in 0..per {
            let idx = t * per + p;
            let mean: f64 = clips.iter().map(|c| c.frames.data()[idx]).sum::<f64>() / m;
            let var: f64 = clips
                .iter()
                .map(|c| (c.frames.data()[idx] - mean).powi(2))
                .sum::<f64>()
                / m;
            total += var.sqrt();
        }
        out.push(total / per as f64);
    }
    Ok(out)
}

/// Mean pairwise frame-space L2 distance between clips (all clips must
/// share a shape). Used as a motion-diversity score for clips that share z1
/// but differ in noise.
pub fn mean_pairwise_distance(clips: &[VideoClip]) -> Result<f64> {
    if clips.len() < 2 {
        return Err(Error::Domain {
            op: "diversity",
            detail: "need at least two clips".into(),
        });
    }
    let shape = clips[0].frames.shape().to_vec();
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..clips.len() {
        if clips[i].frames.shape() != shape {
            return Err(Error::ShapeMismatch {
                op: "diversity",
                detail: "clip shapes differ".into(),
            });
        }
        for j in i + 1..clips.len() {
            let d2: f64 = clips[i]
                .frames
                .data()
                .iter()
                .zip(clips[j].frames.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            total += (d2 / clips[0].frames.numel() as f64).sqrt();
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}
