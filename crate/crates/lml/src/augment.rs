//! Data-level frame augmentation for the contrastive branch.
//!
//! Frames are [c, h, w] with values in [-1, 1]. Warping uses an inverse
//! affine map about the image center with bilinear sampling and zero fill
//! outside the source. All randomness comes from the caller's RNG, so a
//! fixed seed reproduces the exact pixel values.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    /// Rotation is drawn from ±this many degrees.
    pub rotate_max_deg: f64,
    /// Translation per axis, as a fraction of the extent.
    pub translate_max: f64,
    /// Uniform scale factor range.
    pub scale_range: (f64, f64),
    /// Additive brightness shift drawn from ±this value.
    pub brightness_max: f64,
    /// Additive shift on one random channel, drawn from ±this value.
    pub color_max: f64,
    /// Cutout area fraction upper bound; the erased block is zero-filled.
    pub cutout_max_area: f64,
    /// Probability of a horizontal flip.
    pub hflip_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            rotate_max_deg: 180.0,
            translate_max: 0.1,
            scale_range: (0.95, 1.05),
            brightness_max: 0.5,
            color_max: 0.5,
            cutout_max_area: 0.25,
            hflip_prob: 0.5,
        }
    }
}

impl AugmentConfig {
    /// Identity policy; useful for switching on one op at a time.
    pub fn none() -> Self {
        AugmentConfig {
            rotate_max_deg: 0.0,
            translate_max: 0.0,
            scale_range: (1.0, 1.0),
            brightness_max: 0.0,
            color_max: 0.0,
            cutout_max_area: 0.0,
            hflip_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale_range.0 <= 0.0 || self.scale_range.0 > self.scale_range.1 {
            return Err(Error::Config(format!(
                "bad scale range {:?}",
                self.scale_range
            )));
        }
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::Config(format!(
                "hflip probability {} outside [0, 1]",
                self.hflip_prob
            )));
        }
        if !(0.0..1.0).contains(&self.cutout_max_area) {
            return Err(Error::Config(format!(
                "cutout area {} outside [0, 1)",
                self.cutout_max_area
            )));
        }
        Ok(())
    }
}

fn check_frame(frame: &Tensor) -> Result<(usize, usize, usize)> {
    let s = frame.shape();
    if s.len() != 3 {
        return Err(Error::ShapeMismatch {
            op: "augment",
            detail: format!("frame must be [c, h, w], got {s:?}"),
        });
    }
    Ok((s[0], s[1], s[2]))
}

/// Inverse-warp by rotation (degrees, counter-clockwise), translation
/// (fractions of extent) and uniform scale, all about the image center.
pub fn affine_warp(
    frame: &Tensor,
    angle_deg: f64,
    translate: (f64, f64),
    scale: f64,
) -> Result<Tensor> {
    let (c, h, w) = check_frame(frame)?;
    if scale <= 0.0 {
        return Err(Error::Domain {
            op: "affine_warp",
            detail: format!("scale {scale} must be positive"),
        });
    }
    let theta = angle_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let ty = translate.1 * h as f64;
    let tx = translate.0 * w as f64;

    let src = frame.data();
    let mut out = vec![0.0; c * h * w];
    for y in 0..h {
        for x in 0..w {
            // invert: undo translation, then rotation/scale about the center
            let dy = y as f64 - cy - ty;
            let dx = x as f64 - cx - tx;
            let sx = (cos * dx + sin * dy) / scale + cx;
            let sy = (-sin * dx + cos * dy) / scale + cy;

            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let (x0, y0) = (x0 as i64, y0 as i64);

            for ch in 0..c {
                let plane = &src[ch * h * w..(ch + 1) * h * w];
                let sample = |yy: i64, xx: i64| -> f64 {
                    if yy < 0 || xx < 0 || yy >= h as i64 || xx >= w as i64 {
                        0.0
                    } else {
                        plane[yy as usize * w + xx as usize]
                    }
                };
                let v = (1.0 - fy) * (1.0 - fx) * sample(y0, x0)
                    + (1.0 - fy) * fx * sample(y0, x0 + 1)
                    + fy * (1.0 - fx) * sample(y0 + 1, x0)
                    + fy * fx * sample(y0 + 1, x0 + 1);
                out[ch * h * w + y * w + x] = v;
            }
        }
    }
    Tensor::new(vec![c, h, w], out)
}

pub fn hflip(frame: &Tensor) -> Result<Tensor> {
    let (c, h, w) = check_frame(frame)?;
    let src = frame.data();
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                out[ch * h * w + y * w + x] = src[ch * h * w + y * w + (w - 1 - x)];
            }
        }
    }
    Tensor::new(vec![c, h, w], out)
}

/// Zeroes a block whose area is `area_frac` of the frame (side lengths are
/// rounded; clamped to at least one pixel). Returns the block rectangle as
/// (y, x, height, width).
pub fn cutout(
    frame: &Tensor,
    area_frac: f64,
    origin: (f64, f64),
) -> Result<(Tensor, (usize, usize, usize, usize))> {
    let (c, h, w) = check_frame(frame)?;
    if !(0.0..1.0).contains(&area_frac) {
        return Err(Error::Domain {
            op: "cutout",
            detail: format!("area fraction {area_frac} outside [0, 1)"),
        });
    }
    let side = area_frac.sqrt();
    let bh = ((side * h as f64).round() as usize).clamp(1, h);
    let bw = ((side * w as f64).round() as usize).clamp(1, w);
    let y0 = (origin.0 * (h - bh + 1) as f64).floor() as usize;
    let x0 = (origin.1 * (w - bw + 1) as f64).floor() as usize;
    let (y0, x0) = (y0.min(h - bh), x0.min(w - bw));

    let mut out = frame.data().to_vec();
    for ch in 0..c {
        for y in y0..y0 + bh {
            for x in x0..x0 + bw {
                out[ch * h * w + y * w + x] = 0.0;
            }
        }
    }
    Ok((Tensor::new(vec![c, h, w], out)?, (y0, x0, bh, bw)))
}

fn clamp_unit(v: f64) -> f64 {
    v.clamp(-1.0, 1.0)
}

/// One random view of a frame under the full policy. Order: affine warp,
/// brightness, single-channel color shift, cutout, horizontal flip. Output
/// values stay in [-1, 1].
pub fn augment_frame(
    rng: &mut ChaCha8Rng,
    frame: &Tensor,
    cfg: &AugmentConfig,
) -> Result<Tensor> {
    cfg.validate()?;
    let (c, _, _) = check_frame(frame)?;

    let angle = if cfg.rotate_max_deg > 0.0 {
        rng.gen_range(-cfg.rotate_max_deg..=cfg.rotate_max_deg)
    } else {
        0.0
    };
    let tr = |rng: &mut ChaCha8Rng, m: f64| if m > 0.0 { rng.gen_range(-m..=m) } else { 0.0 };
    let translate = (tr(rng, cfg.translate_max), tr(rng, cfg.translate_max));
    let scale = if cfg.scale_range.0 < cfg.scale_range.1 {
        rng.gen_range(cfg.scale_range.0..=cfg.scale_range.1)
    } else {
        cfg.scale_range.0
    };

    let mut out = if angle != 0.0 || translate != (0.0, 0.0) || scale != 1.0 {
        affine_warp(frame, angle, translate, scale)?
    } else {
        frame.clone()
    };

    if cfg.brightness_max > 0.0 {
        let shift = rng.gen_range(-cfg.brightness_max..=cfg.brightness_max);
        out = out.map(|v| clamp_unit(v + shift));
    }

    if cfg.color_max > 0.0 {
        let ch = rng.gen_range(0..c);
        let shift = rng.gen_range(-cfg.color_max..=cfg.color_max);
        let s = out.shape().to_vec();
        let plane = s[1] * s[2];
        let data = out.data_mut();
        for v in &mut data[ch * plane..(ch + 1) * plane] {
            *v = clamp_unit(*v + shift);
        }
    }

    if cfg.cutout_max_area > 0.0 {
        let area = rng.gen_range(0.0..cfg.cutout_max_area);
        let origin = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        if area > 0.0 {
            out = cutout(&out, area, origin)?.0;
        }
    }

    if cfg.hflip_prob > 0.0 && rng.gen_range(0.0..1.0) < cfg.hflip_prob {
        out = hflip(&out)?;
    }

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn frame(seed: u64, c: usize, h: usize, w: usize) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        crate::nn::init::standard_normal_vec(&mut rng, c * h * w)
            .map(|v| v.tanh())
            .reshape(vec![c, h, w])
            .unwrap()
    }

    #[test]
    fn identity_policy_is_a_no_op() {
        let f = frame(1, 3, 9, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = augment_frame(&mut rng, &f, &AugmentConfig::none()).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn identity_warp_is_exact() {
        let f = frame(3, 2, 7, 5);
        let out = affine_warp(&f, 0.0, (0.0, 0.0), 1.0).unwrap();
        assert!(out.max_abs_diff(&f) < 1e-12);
    }

    #[test]
    fn rotation_360_recovers_interior() {
        let f = frame(4, 1, 9, 9);
        let out = affine_warp(&f, 360.0, (0.0, 0.0), 1.0).unwrap();
        assert!(out.max_abs_diff(&f) < 1e-9);
    }

    #[test]
    fn rotation_90_permutes_pixels() {
        // odd extent, exact 90° rotation hits pixel centers exactly
        let f = frame(5, 1, 5, 5);
        let out = affine_warp(&f, 90.0, (0.0, 0.0), 1.0).unwrap();
        // counter-clockwise: out(y, x) = in(x, w-1-y) under inverse mapping
        for y in 0..5 {
            for x in 0..5 {
                let want = f.data()[(4 - x) * 5 + y];
                let got = out.data()[y * 5 + x];
                assert!(
                    (got - want).abs() < 1e-9,
                    "mismatch at ({y},{x}): {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn translation_shifts_content() {
        let mut f = Tensor::zeros(&[1, 8, 8]);
        f.data_mut()[3 * 8 + 3] = 1.0;
        // shift by exactly one pixel right and down
        let out = affine_warp(&f, 0.0, (1.0 / 8.0, 1.0 / 8.0), 1.0).unwrap();
        assert!((out.data()[4 * 8 + 4] - 1.0).abs() < 1e-9);
        assert!(out.data()[3 * 8 + 3].abs() < 1e-9);
    }

    #[test]
    fn hflip_mirrors_and_involutes() {
        let f = frame(6, 3, 6, 8);
        let m = hflip(&f).unwrap();
        assert_eq!(m.data()[0], f.data()[7]);
        assert_eq!(hflip(&m).unwrap(), f);
    }

    #[test]
    fn cutout_zeroes_exactly_the_block() {
        let f = frame(7, 2, 10, 10).map(|v| 0.5 + 0.4 * v); // keep away from 0
        let (out, (y0, x0, bh, bw)) = cutout(&f, 0.25, (0.3, 0.7)).unwrap();
        assert_eq!((bh, bw), (5, 5));
        let mut zeros = 0;
        for ch in 0..2 {
            for y in 0..10 {
                for x in 0..10 {
                    let v = out.data()[ch * 100 + y * 10 + x];
                    let inside = y >= y0 && y < y0 + bh && x >= x0 && x < x0 + bw;
                    if inside {
                        assert_eq!(v, 0.0);
                        zeros += 1;
                    } else {
                        assert_eq!(v, f.data()[ch * 100 + y * 10 + x]);
                    }
                }
            }
        }
        assert_eq!(zeros, 2 * 25);
    }

    #[test]
    fn full_policy_stays_in_range_and_keeps_shape() {
        let cfg = AugmentConfig::default();
        let f = frame(8, 3, 12, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..25 {
            let out = augment_frame(&mut rng, &f, &cfg).unwrap();
            assert_eq!(out.shape(), f.shape());
            for &v in out.data() {
                assert!((-1.0..=1.0).contains(&v), "value {v} escaped [-1, 1]");
            }
        }
    }

    #[test]
    fn same_seed_same_view() {
        let cfg = AugmentConfig::default();
        let f = frame(10, 3, 12, 12);
        let a = augment_frame(&mut ChaCha8Rng::seed_from_u64(11), &f, &cfg).unwrap();
        let b = augment_frame(&mut ChaCha8Rng::seed_from_u64(11), &f, &cfg).unwrap();
        let c = augment_frame(&mut ChaCha8Rng::seed_from_u64(12), &f, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.max_abs_diff(&c) > 1e-9);
    }

    #[test]
    fn bad_configs_rejected() {
        let f = frame(13, 1, 8, 8);
        let mut cfg = AugmentConfig::none();
        cfg.scale_range = (0.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        assert!(augment_frame(&mut rng, &f, &cfg).is_err());
        let mut cfg = AugmentConfig::none();
        cfg.hflip_prob = 1.5;
        assert!(augment_frame(&mut rng, &f, &cfg).is_err());
        assert!(cutout(&f, 1.2, (0.5, 0.5)).is_err());
    }
}
