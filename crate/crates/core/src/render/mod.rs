//! Rasterization, coloring, backgrounds and the single-instance pipeline.
//!
//! `render_single` is split in two halves so the render cache can reuse the
//! expensive one:
//!
//! * [`render_sprite`]: chaos game, region fit and jitter, patch
//!   rasterization, density normalization. Output is a grayscale sprite.
//! * [`finish_image`]: colorization, background, compositing, flips,
//!   rotation, blur.

pub mod background;
pub mod color;
pub mod raster;
pub mod transform;

use serde::{Deserialize, Serialize};

use crate::chaos::{self, Jitter, DEFAULT_ITERATIONS, DEFAULT_JITTER_SCALE, DEFAULT_PAD_FRACTION};
use crate::ifs::IfsCode;
use crate::rng::Stream;
use crate::{Error, Result};

pub use background::{diamond_square, render_background};
pub use color::{colorize, colorize_full, ColorParams};
pub use raster::{normalize_density, rasterize, RasterMode};
pub use transform::{composite, gaussian_blur, Orientation};

pub const MIN_SIDE: usize = 8;

/// `x.round()` for `0 ≤ x < 2^31`, without the libm call that baseline
/// x86-64 emits for `round`. Rounds halves away from zero like `round`.
#[inline]
pub(crate) fn round_nonneg(x: f32) -> u32 {
    let t = x as u32;
    // x - t is exact: t is the integer part of x
    if x - t as f32 >= 0.5 {
        t + 1
    } else {
        t
    }
}

/// [`round_nonneg`] for `f64`.
#[inline]
pub(crate) fn round_nonneg_f64(x: f64) -> u32 {
    let t = x as u32;
    if x - t as f64 >= 0.5 {
        t + 1
    } else {
        t
    }
}
pub const DEFAULT_SIDE: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub side: usize,
    pub data: Vec<f32>,
}

impl GrayImage {
    pub fn zeros(side: usize) -> Self {
        GrayImage {
            side,
            data: vec![0.0; side * side],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.side + col]
    }

    /// Nonzero pixels.
    pub fn support(&self) -> usize {
        self.data.iter().filter(|&&v| v > 0.0).count()
    }

    /// Gray levels as RGB bytes, `round(255 · v)` per channel, for values in
    /// `[0, 1]`.
    pub fn to_rgb(&self) -> RgbImage {
        RgbImage {
            side: self.side,
            data: self
                .data
                .iter()
                .flat_map(|&v| [(255.0 * v.clamp(0.0, 1.0)).round() as u8; 3])
                .collect(),
        }
    }
}

/// Row-major HWC 8-bit RGB.
#[derive(Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub side: usize,
    pub data: Vec<u8>,
}

impl std::fmt::Debug for RgbImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RgbImage({0}x{0})", self.side)
    }
}

impl RgbImage {
    pub fn black(side: usize) -> Self {
        RgbImage {
            side,
            data: vec![0; side * side * 3],
        }
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.side + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub side: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn empty(side: usize) -> Self {
        Mask {
            side,
            bits: vec![false; side * side],
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// 3×3 binary stencil; bit `3r + c` is the cell at row `r`, column `c`, with
/// `(1, 1)` the center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Patch3x3(u16);

impl Patch3x3 {
    pub const CENTER: Patch3x3 = Patch3x3(1 << 4);
    pub const FULL: Patch3x3 = Patch3x3(0x1ff);

    pub fn new(bits: u16) -> Result<Self> {
        if bits > 0x1ff {
            return Err(Error::InvalidInput(format!("patch mask {bits:#x} exceeds 9 bits")));
        }
        Ok(Patch3x3(bits))
    }

    pub fn bits(&self) -> u16 {
        self.0
    }

    pub fn count(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    /// `(row, col)` offsets of the set bits.
    pub fn offsets(&self) -> impl Iterator<Item = (isize, isize)> + '_ {
        (0..9)
            .filter(|b| self.0 >> b & 1 == 1)
            .map(|b| (b as isize / 3 - 1, b as isize % 3 - 1))
    }

    /// Uniform over the 511 nonempty patches: the empty patch would render
    /// nothing, so it is redrawn.
    pub fn sample(rng: &mut Stream) -> Self {
        loop {
            let bits = rng.below(512) as u16;
            if bits != 0 {
                return Patch3x3(bits);
            }
        }
    }
}

/// Every knob of the single-image pipeline. Defaults reproduce the
/// published rendering setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub side: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub pad_fraction: f64,
    pub jitter_scale: (f64, f64),
    /// Patch rendering; off means single-pixel points.
    pub patch: bool,
    pub saturation: (f64, f64),
    pub value: (f64, f64),
    pub background: bool,
    pub background_roughness: (f64, f64),
    pub flips: bool,
    pub rotations: bool,
    /// Blur σ is drawn from `U(0, blur_sigma_max)` pixels; 0 disables blur.
    pub blur_sigma_max: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            side: DEFAULT_SIDE,
            iterations: DEFAULT_ITERATIONS,
            burn_in: chaos::BURN_IN,
            pad_fraction: DEFAULT_PAD_FRACTION,
            jitter_scale: DEFAULT_JITTER_SCALE,
            patch: true,
            saturation: color::DEFAULT_SATURATION,
            value: color::DEFAULT_VALUE,
            background: true,
            background_roughness: background::DEFAULT_ROUGHNESS,
            flips: true,
            rotations: true,
            blur_sigma_max: 1.0,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.side < MIN_SIDE {
            return Err(Error::Domain(format!("image side must be at least {MIN_SIDE}, got {}", self.side)));
        }
        if self.iterations == 0 {
            return Err(Error::Domain("iteration count must be positive".into()));
        }
        let range_ok = |(lo, hi): (f64, f64), min: f64, max: f64| min <= lo && lo <= hi && hi <= max;
        if !range_ok(self.saturation, 0.0, 1.0) || !range_ok(self.value, 0.0, 1.0) {
            return Err(Error::Domain("saturation and value ranges must lie in [0, 1]".into()));
        }
        if !range_ok(self.background_roughness, f64::MIN_POSITIVE, 1.0 - f64::EPSILON) {
            return Err(Error::Domain("background roughness must lie in (0, 1)".into()));
        }
        if !range_ok(self.jitter_scale, 1.0, f64::MAX) {
            return Err(Error::Domain("jitter scale range must be >= 1".into()));
        }
        if !(self.pad_fraction >= 0.0 && self.blur_sigma_max >= 0.0) {
            return Err(Error::Domain("pad fraction and blur sigma must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Grayscale, max-normalized density rendering of a code at `side` pixels.
///
/// Draw order: chaos game, region jitter, patch.
pub fn render_sprite(code: &IfsCode, cfg: &RenderConfig, side: usize, rng: &mut Stream) -> Result<GrayImage> {
    let (points, tight) = chaos::iterate_bounded(code, cfg.iterations, cfg.burn_in, [0.0, 0.0], rng)?;
    let region = tight.padded(cfg.pad_fraction);
    let region = Jitter::sample(cfg.jitter_scale, rng).apply(&region);
    let patch = if cfg.patch {
        Patch3x3::sample(rng)
    } else {
        Patch3x3::CENTER
    };
    let density = rasterize(&points, &region, side, Some(patch), RasterMode::Density)?;
    Ok(normalize_density(&density))
}

/// Draw order: horizontal flip, vertical flip, rotation.
pub fn sample_orientation(flips: bool, rotations: bool, rng: &mut Stream) -> Orientation {
    let (flip_h, flip_v) = if flips { (rng.coin(), rng.coin()) } else { (false, false) };
    let quarter_turns = if rotations { rng.below(4) as u8 } else { 0 };
    Orientation {
        flip_h,
        flip_v,
        quarter_turns,
    }
}

/// Color a sprite, composite it over a fresh background, then orient and
/// blur the result.
///
/// Draw order: color, background, orientation, blur σ.
pub fn finish_image(sprite: &GrayImage, cfg: &RenderConfig, rng: &mut Stream) -> Result<RgbImage> {
    let params = ColorParams::sample(cfg.saturation, cfg.value, rng);
    let (fg, mask) = colorize(sprite, &params);
    let composed = if cfg.background {
        let bg = render_background(sprite.side, cfg.background_roughness, cfg.saturation, cfg.value, rng)?;
        composite(&fg, &mask, &bg)?
    } else {
        fg
    };
    let oriented = sample_orientation(cfg.flips, cfg.rotations, rng).apply_rgb(&composed);
    if cfg.blur_sigma_max > 0.0 {
        let sigma = rng.uniform(0.0, cfg.blur_sigma_max);
        Ok(gaussian_blur(&oriented, sigma))
    } else {
        Ok(oriented)
    }
}

/// The full single-instance pipeline at `cfg.side`.
pub fn render_single(code: &IfsCode, cfg: &RenderConfig, rng: &mut Stream) -> Result<RgbImage> {
    let sprite = render_sprite(code, cfg, cfg.side, rng)?;
    finish_image(&sprite, cfg, rng)
}

/// Binary single-pixel rendering over the padded bounding region, with no
/// jitter, color or background: the plain geometry of the attractor.
pub fn render_binary(code: &IfsCode, cfg: &RenderConfig, rng: &mut Stream) -> Result<GrayImage> {
    let (points, tight) = chaos::iterate_bounded(code, cfg.iterations, cfg.burn_in, [0.0, 0.0], rng)?;
    let region = tight.padded(cfg.pad_fraction);
    rasterize(&points, &region, cfg.side, None, RasterMode::Binary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_nonneg_matches_round() {
        let mut rng = Stream::from_seed(4);
        let specials = [0.0f32, 0.5, 1.5, 2.5, 0.49999997, 254.5, 255.0, 127.49999, 1.9999999];
        let random = (0..100_000).map(|_| rng.uniform(0.0, 256.0) as f32);
        for x in specials.into_iter().chain(random) {
            assert_eq!(round_nonneg(x), x.round() as u32, "{x}");
            let nudged = f32::from_bits(x.to_bits() + 1);
            assert_eq!(round_nonneg(nudged), nudged.round() as u32, "{nudged}");
            let wide = x as f64 * 1.000001;
            assert_eq!(round_nonneg_f64(wide), wide.round() as u32, "{wide}");
        }
        assert_eq!(round_nonneg_f64(0.49999999999999994), 0);
        assert_eq!(round_nonneg_f64(-1e-12), 0);
    }
    use crate::sampler::sample_system;

    fn code() -> IfsCode {
        sample_system(3, 1.0, &mut Stream::from_seed(99)).unwrap()
    }

    #[test]
    fn patch_offsets() {
        assert_eq!(Patch3x3::CENTER.offsets().collect::<Vec<_>>(), vec![(0, 0)]);
        assert_eq!(Patch3x3::FULL.count(), 9);
        assert!(Patch3x3::new(512).is_err());
        let mut rng = Stream::from_seed(1);
        assert!((0..5000).all(|_| !Patch3x3::sample(&mut rng).is_empty()));
    }

    #[test]
    fn single_render_is_deterministic_and_sized() {
        let cfg = RenderConfig::default();
        let a = render_single(&code(), &cfg, &mut Stream::from_seed(5)).unwrap();
        let b = render_single(&code(), &cfg, &mut Stream::from_seed(5)).unwrap();
        assert_eq!(a.side, 256);
        assert_eq!(a.data.len(), 256 * 256 * 3);
        assert_eq!(a, b);
        assert_ne!(a, render_single(&code(), &cfg, &mut Stream::from_seed(6)).unwrap());
    }

    #[test]
    fn sprite_is_normalized() {
        let cfg = RenderConfig::default();
        let sprite = render_sprite(&code(), &cfg, 128, &mut Stream::from_seed(2)).unwrap();
        assert_eq!(sprite.side, 128);
        assert_eq!(sprite.data.iter().copied().fold(0.0f32, f32::max), 1.0);
        assert!(sprite.support() > 50);
    }

    #[test]
    fn plain_pipeline_is_colorized_sprite() {
        let cfg = RenderConfig {
            background: false,
            flips: false,
            rotations: false,
            blur_sigma_max: 0.0,
            ..Default::default()
        };
        let img = render_single(&code(), &cfg, &mut Stream::from_seed(4)).unwrap();
        let mut rng = Stream::from_seed(4);
        let sprite = render_sprite(&code(), &cfg, cfg.side, &mut rng).unwrap();
        let params = ColorParams::sample(cfg.saturation, cfg.value, &mut rng);
        assert_eq!(img, colorize(&sprite, &params).0);
    }

    #[test]
    fn divergent_code_is_refused() {
        use crate::ifs::AffineMap;
        let grow = AffineMap {
            a: [[1.5, 0.0], [0.0, 1.5]],
            b: [1.0, 0.0],
        };
        let bad = IfsCode::new(vec![grow, grow], vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            render_single(&bad, &RenderConfig::default(), &mut Stream::from_seed(0)),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(RenderConfig::default().validate().is_ok());
        assert!(RenderConfig { side: 4, ..Default::default() }.validate().is_err());
        assert!(RenderConfig { saturation: (0.5, 1.2), ..Default::default() }.validate().is_err());
        assert!(RenderConfig { jitter_scale: (0.5, 1.2), ..Default::default() }.validate().is_err());
    }
}
