//! Writing clips to disk: numbered PNG frames, animated GIF, and the raw
//! tensor container.

use std::fs::File;
use std::path::Path;

use image::codecs::gif::GifEncoder;
use image::{Delay, Frame, GrayImage, RgbImage, RgbaImage};

use crate::error::{Error, Result};
use crate::generator::VideoClip;
use crate::tensor::{mctn, Dtype, Tensor};

/// [-1, 1] -> byte with round-half-to-even tie breaking.
pub fn quantize(v: f64) -> u8 {
    (((v + 1.0) * 127.5).round_ties_even()).clamp(0.0, 255.0) as u8
}

fn frame_bytes(frame: &Tensor) -> (usize, usize, usize, Vec<u8>) {
    let s = frame.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    // planar [c, h, w] -> interleaved rows
    let mut bytes = Vec::with_capacity(c * h * w);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                bytes.push(quantize(frame.data()[ch * h * w + y * w + x]));
            }
        }
    }
    (c, h, w, bytes)
}

/// Writes `frame_0000.png`, `frame_0001.png`, ... into `dir` (created if
/// missing).
pub fn save_frames_png(clip: &VideoClip, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    for t in 0..clip.len() {
        let (c, h, w, bytes) = frame_bytes(&clip.frame(t));
        let path = dir.join(format!("frame_{t:04}.png"));
        let err = |e: image::ImageError| Error::Image(format!("{}: {e}", path.display()));
        match c {
            1 => GrayImage::from_raw(w as u32, h as u32, bytes)
                .expect("buffer sized")
                .save(&path)
                .map_err(err)?,
            3 => RgbImage::from_raw(w as u32, h as u32, bytes)
                .expect("buffer sized")
                .save(&path)
                .map_err(err)?,
            _ => {
                return Err(Error::Image(format!(
                    "cannot export {c}-channel frames as PNG"
                )))
            }
        }
    }
    Ok(())
}

/// Animated GIF at the clip's frame rate.
pub fn save_gif(clip: &VideoClip, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut enc = GifEncoder::new(file);
    enc.set_repeat(image::codecs::gif::Repeat::Infinite)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    let fps = if clip.fps > 0.0 { clip.fps } else { 8.0 };
    let delay = Delay::from_numer_denom_ms(1000, fps.round().max(1.0) as u32);
    for t in 0..clip.len() {
        let (c, h, w, bytes) = frame_bytes(&clip.frame(t));
        let mut rgba = Vec::with_capacity(h * w * 4);
        for px in bytes.chunks(c) {
            match c {
                1 => rgba.extend_from_slice(&[px[0], px[0], px[0], 255]),
                3 => rgba.extend_from_slice(&[px[0], px[1], px[2], 255]),
                _ => {
                    return Err(Error::Image(format!(
                        "cannot export {c}-channel frames as GIF"
                    )))
                }
            }
        }
        let img = RgbaImage::from_raw(w as u32, h as u32, rgba).expect("buffer sized");
        enc.encode_frame(Frame::from_parts(img, 0, 0, delay))
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

/// Raw [n, c, h, w] tensor in the MCTN container.
pub fn save_clip_tensor(clip: &VideoClip, path: &Path, dtype: Dtype) -> Result<()> {
    mctn::save(path, &clip.frames, dtype)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::AnimationDecoder;

    fn clip(c: usize) -> VideoClip {
        let mut data = Vec::new();
        for t in 0..3 {
            for ch in 0..c {
                for i in 0..64 {
                    data.push(((t * 7 + ch * 3 + i) % 20) as f64 / 10.0 - 1.0);
                }
            }
        }
        VideoClip::new(Tensor::new(vec![3, c, 8, 8], data).unwrap(), 8.0).unwrap()
    }

    #[test]
    fn quantize_endpoints_and_ties() {
        assert_eq!(quantize(-1.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(-2.0), 0);
        assert_eq!(quantize(2.0), 255);
        // 0.0 scales to exactly 127.5; the tie goes to the even neighbor
        assert_eq!(quantize(0.0), 128);
        // monotone over the whole range
        let mut prev = 0u8;
        for i in 0..=1000 {
            let q = quantize(i as f64 / 500.0 - 1.0);
            assert!(q >= prev);
            prev = q;
        }
    }

    #[test]
    fn png_frames_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = clip(1);
        save_frames_png(&c, dir.path()).unwrap();
        let mut names: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(names, ["frame_0000.png", "frame_0001.png", "frame_0002.png"]);

        let img = image::open(dir.path().join("frame_0001.png")).unwrap().to_luma8();
        assert_eq!(img.dimensions(), (8, 8));
        let frame = c.frame(1);
        for (i, p) in img.pixels().enumerate() {
            assert_eq!(p.0[0], quantize(frame.data()[i]));
        }
    }

    #[test]
    fn rgb_png_preserves_channel_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut data = vec![-1.0; 3 * 64];
        data[0] = 1.0; // red channel, pixel (0,0)
        let c = VideoClip::new(Tensor::new(vec![1, 3, 8, 8], data).unwrap(), 8.0).unwrap();
        save_frames_png(&c, dir.path()).unwrap();
        let img = image::open(dir.path().join("frame_0000.png")).unwrap().to_rgb8();
        assert_eq!(img.get_pixel(0, 0).0, [255, 0, 0]);
        assert_eq!(img.get_pixel(1, 0).0, [0, 0, 0]);
    }

    #[test]
    fn gif_has_all_frames() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.gif");
        save_gif(&clip(3), &path).unwrap();
        let dec = image::codecs::gif::GifDecoder::new(std::io::BufReader::new(
            File::open(&path).unwrap(),
        ))
        .unwrap();
        let frames = dec.into_frames().collect_frames().unwrap();
        assert_eq!(frames.len(), 3);
    }

    #[test]
    fn tensor_export_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.mctn");
        let c = clip(1);
        save_clip_tensor(&c, &path, Dtype::F64).unwrap();
        let back = mctn::load(&path).unwrap();
        assert_eq!(back, c.frames);
    }
}
