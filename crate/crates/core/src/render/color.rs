use serde::{Deserialize, Serialize};

use crate::render::{GrayImage, Mask, RgbImage};
use crate::rng::Stream;

pub const DEFAULT_SATURATION: (f64, f64) = (0.3, 1.0);
pub const DEFAULT_VALUE: (f64, f64) = (0.5, 1.0);

/// Reference hue on a 256-step wheel plus global saturation and value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorParams {
    pub hue: u8,
    pub saturation: f64,
    pub value: f64,
}

impl ColorParams {
    /// Draw order: hue, saturation, value.
    pub fn sample(saturation: (f64, f64), value: (f64, f64), rng: &mut Stream) -> Self {
        ColorParams {
            hue: rng.below(256) as u8,
            saturation: rng.uniform(saturation.0, saturation.1),
            value: rng.uniform(value.0, value.1),
        }
    }
}

/// HSV to 8-bit RGB with the hue given in 256ths of a turn; standard
/// six-sector formula.
pub fn hsv_to_rgb(hue_step: u8, s: f64, v: f64) -> [u8; 3] {
    let h = hue_step as f64 * (360.0 / 256.0) / 60.0;
    let c = v * s;
    // h - 2⌊h/2⌋ is h % 2 exactly, without the fmod call
    let x = c * (1.0 - ((h - (2 * (h as u32 / 2)) as f64) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let to_byte = |u: f64| crate::render::round_nonneg_f64(((u + m) * 255.0).clamp(0.0, 255.0)) as u8;
    [to_byte(r), to_byte(g), to_byte(b)]
}

/// Hue step offset of a normalized gray value: `round(255 · g)`.
#[inline]
pub fn hue_offset(gray: f32) -> u8 {
    crate::render::round_nonneg(255.0 * gray.clamp(0.0, 1.0)) as u8
}

/// The 256 colors reachable for fixed `(h, s, v)`, indexed by hue offset.
pub fn palette(params: &ColorParams) -> Vec<[u8; 3]> {
    (0..=255u8)
        .map(|offset| hsv_to_rgb(params.hue.wrapping_add(offset), params.saturation, params.value))
        .collect()
}

/// Color every pixel: hue `(h + round(255 · gray)) mod 256`.
pub fn colorize_full(gray: &GrayImage, params: &ColorParams) -> RgbImage {
    let lut = palette(params);
    let mut out = RgbImage::black(gray.side);
    for (px, &g) in out.data.chunks_exact_mut(3).zip(&gray.data) {
        px.copy_from_slice(&lut[hue_offset(g) as usize]);
    }
    out
}

/// Color the support of a normalized density image; pixels with zero
/// density stay black and are left out of the mask.
pub fn colorize(gray: &GrayImage, params: &ColorParams) -> (RgbImage, Mask) {
    let lut = palette(params);
    let mut out = RgbImage::black(gray.side);
    let mut mask = Mask::empty(gray.side);
    for ((px, &g), m) in out.data.chunks_exact_mut(3).zip(&gray.data).zip(mask.bits.iter_mut()) {
        if g > 0.0 {
            px.copy_from_slice(&lut[hue_offset(g) as usize]);
            *m = true;
        }
    }
    (out, mask)
}
