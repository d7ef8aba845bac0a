//! Dihedral transforms, Gaussian blur and mask compositing on square
//! buffers of `side × side` pixels with `channels` interleaved values each.

use crate::render::{round_nonneg, GrayImage, Mask, RgbImage};
use crate::{Error, Result};

/// Mirror left-right.
pub fn flip_horizontal<T: Copy>(data: &mut [T], side: usize, channels: usize) {
    for row in data.chunks_exact_mut(side * channels) {
        for c in 0..side / 2 {
            for k in 0..channels {
                row.swap(c * channels + k, (side - 1 - c) * channels + k);
            }
        }
    }
}

/// Mirror top-bottom.
pub fn flip_vertical<T: Copy>(data: &mut [T], side: usize, channels: usize) {
    let stride = side * channels;
    for r in 0..side / 2 {
        let (top, bottom) = data.split_at_mut((side - 1 - r) * stride);
        top[r * stride..(r + 1) * stride].swap_with_slice(&mut bottom[..stride]);
    }
}

/// Rotate by `quarter_turns × 90°` counter-clockwise.
pub fn rotate90<T: Copy>(data: &[T], side: usize, channels: usize, quarter_turns: u8) -> Vec<T> {
    let turns = quarter_turns % 4;
    if turns == 0 {
        return data.to_vec();
    }
    let mut out = data.to_vec();
    for r in 0..side {
        for c in 0..side {
            let (sr, sc) = match turns {
                // output (r, c) takes input pixel ...
                1 => (c, side - 1 - r),
                2 => (side - 1 - r, side - 1 - c),
                _ => (side - 1 - c, r),
            };
            let dst = (r * side + c) * channels;
            let src = (sr * side + sc) * channels;
            out[dst..dst + channels].copy_from_slice(&data[src..src + channels]);
        }
    }
    out
}

/// Separable Gaussian blur with a kernel truncated at `ceil(2σ)` pixels and
/// clamp-to-edge borders. `σ` below `1e-3` is a no-op.
pub fn gaussian_blur(img: &RgbImage, sigma: f64) -> RgbImage {
    let radius = (2.0 * sigma).ceil() as usize;
    if sigma < 1e-3 || radius == 0 {
        return img.clone();
    }
    let weights: Vec<f32> = {
        let raw: Vec<f64> = (0..=2 * radius)
            .map(|i| {
                let d = i as f64 - radius as f64;
                libm::exp(-d * d / (2.0 * sigma * sigma))
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|w| (w / total) as f32).collect()
    };
    let side = img.side;
    let clamp = |i: isize| i.clamp(0, side as isize - 1) as usize;

    let mut horizontal = vec![0f32; side * side * 3];
    for r in 0..side {
        for c in 0..side {
            let mut acc = [0f32; 3];
            for (k, w) in weights.iter().enumerate() {
                let sc = clamp(c as isize + k as isize - radius as isize);
                let src = (r * side + sc) * 3;
                for ch in 0..3 {
                    acc[ch] += w * img.data[src + ch] as f32;
                }
            }
            horizontal[(r * side + c) * 3..(r * side + c) * 3 + 3].copy_from_slice(&acc);
        }
    }

    let mut out = RgbImage::black(side);
    for r in 0..side {
        for c in 0..side {
            let mut acc = [0f32; 3];
            for (k, w) in weights.iter().enumerate() {
                let sr = clamp(r as isize + k as isize - radius as isize);
                let src = (sr * side + c) * 3;
                for ch in 0..3 {
                    acc[ch] += w * horizontal[src + ch];
                }
            }
            let dst = (r * side + c) * 3;
            for ch in 0..3 {
                out.data[dst + ch] = round_nonneg(acc[ch].clamp(0.0, 255.0)) as u8;
            }
        }
    }
    out
}

/// Hard-mask composite: `fg` where `mask` is set, `bg` elsewhere.
pub fn composite(fg: &RgbImage, mask: &Mask, bg: &RgbImage) -> Result<RgbImage> {
    if fg.side != bg.side || mask.side != fg.side {
        return Err(Error::Domain(format!(
            "composite dimension mismatch: fg {}, mask {}, bg {}",
            fg.side, mask.side, bg.side
        )));
    }
    let mut out = bg.clone();
    for ((dst, src), &m) in out.data.chunks_exact_mut(3).zip(fg.data.chunks_exact(3)).zip(&mask.bits) {
        if m {
            dst.copy_from_slice(src);
        }
    }
    Ok(out)
}

/// A dihedral transform: optional flips followed by a rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Orientation {
    pub flip_h: bool,
    pub flip_v: bool,
    pub quarter_turns: u8,
}

impl Orientation {
    pub fn apply_rgb(&self, img: &RgbImage) -> RgbImage {
        let mut data = img.data.clone();
        if self.flip_h {
            flip_horizontal(&mut data, img.side, 3);
        }
        if self.flip_v {
            flip_vertical(&mut data, img.side, 3);
        }
        RgbImage {
            side: img.side,
            data: rotate90(&data, img.side, 3, self.quarter_turns),
        }
    }

    pub fn apply_gray(&self, img: &GrayImage) -> GrayImage {
        let mut data = img.data.clone();
        if self.flip_h {
            flip_horizontal(&mut data, img.side, 1);
        }
        if self.flip_v {
            flip_vertical(&mut data, img.side, 1);
        }
        GrayImage {
            side: img.side,
            data: rotate90(&data, img.side, 1, self.quarter_turns),
        }
    }
}
