use crate::render::color::{colorize_full, ColorParams};
use crate::render::{GrayImage, RgbImage, MIN_SIDE};
use crate::rng::Stream;
use crate::{Error, Result};

pub const DEFAULT_ROUGHNESS: (f64, f64) = (0.4, 0.8);

/// Midpoint-displacement ("diamond-square") texture on a `size × size` grid,
/// `size = 2^k + 1`, min-max normalized to `[0, 1]`.
///
/// Corners are seeded `U(0, 1)`. Each level runs a diamond pass (square
/// centers, scanned row-major) and a square pass (edge midpoints, scanned
/// row-major), adding `U(−amp, amp)` to the mean of the available
/// neighbours. `amp` starts at 1 and is multiplied by `roughness` after
/// every level.
pub fn diamond_square(size: usize, roughness: f64, rng: &mut Stream) -> Result<GrayImage> {
    if size < 3 || !(size - 1).is_power_of_two() {
        return Err(Error::Domain(format!("diamond-square size must be 2^k + 1, got {size}")));
    }
    if !(roughness > 0.0 && roughness < 1.0) {
        return Err(Error::Domain(format!("roughness must lie in (0, 1), got {roughness}")));
    }
    let mut h = vec![0f64; size * size];
    let last = size - 1;
    for (r, c) in [(0, 0), (0, last), (last, 0), (last, last)] {
        h[r * size + c] = rng.unit();
    }

    // Every non-corner cell takes exactly one displacement draw; drawing
    // them in blocks gives the same values as drawing one at a time.
    let mut draws = BlockDraws::new(size * size - 4);
    let mut step = last;
    let mut amp = 1.0;
    while step > 1 {
        let half = step / 2;
        for r in (half..size).step_by(step) {
            for c in (half..size).step_by(step) {
                let mean = 0.25
                    * (h[(r - half) * size + c - half]
                        + h[(r - half) * size + c + half]
                        + h[(r + half) * size + c - half]
                        + h[(r + half) * size + c + half]);
                h[r * size + c] = mean + draws.uniform(rng, -amp, amp);
            }
        }
        for r in (0..size).step_by(half) {
            let start = if (r / half).is_multiple_of(2) { half } else { 0 };
            for c in (start..size).step_by(step) {
                let mut sum = 0.0;
                let mut n = 0.0;
                if r >= half {
                    sum += h[(r - half) * size + c];
                    n += 1.0;
                }
                if r + half < size {
                    sum += h[(r + half) * size + c];
                    n += 1.0;
                }
                if c >= half {
                    sum += h[r * size + c - half];
                    n += 1.0;
                }
                if c + half < size {
                    sum += h[r * size + c + half];
                    n += 1.0;
                }
                h[r * size + c] = sum / n + draws.uniform(rng, -amp, amp);
            }
        }
        amp *= roughness;
        step = half;
    }

    let (lo, hi) = h
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let data = if span > 0.0 {
        h.iter().map(|&v| ((v - lo) / span) as f32).collect()
    } else {
        vec![0.0; size * size]
    };
    Ok(GrayImage { side: size, data })
}

/// Buffered `u64` draws for a known total, so the stream is never read
/// past what per-draw calls would consume.
struct BlockDraws {
    buf: [u64; 512],
    pos: usize,
    len: usize,
    remaining: usize,
}

impl BlockDraws {
    fn new(total: usize) -> Self {
        BlockDraws {
            buf: [0; 512],
            pos: 0,
            len: 0,
            remaining: total,
        }
    }

    #[inline]
    fn uniform(&mut self, rng: &mut Stream, lo: f64, hi: f64) -> f64 {
        if self.pos == self.len {
            let n = self.remaining.min(self.buf.len());
            assert!(n > 0, "more draws than declared");
            rng.fill_u64(&mut self.buf[..n]);
            self.remaining -= n;
            self.pos = 0;
            self.len = n;
        }
        let bits = self.buf[self.pos];
        self.pos += 1;
        lo + (hi - lo) * crate::rng::unit_from_bits(bits)
    }
}

/// Smallest `2^k + 1 ≥ side`.
pub fn texture_size(side: usize) -> usize {
    (side.max(3) - 1).next_power_of_two() + 1
}

/// A colored diamond-square texture cropped to `side × side`.
///
/// Draw order: roughness, texture, then color parameters.
pub fn render_background(
    side: usize,
    roughness: (f64, f64),
    saturation: (f64, f64),
    value: (f64, f64),
    rng: &mut Stream,
) -> Result<RgbImage> {
    if side < MIN_SIDE {
        return Err(Error::Domain(format!("image side must be at least {MIN_SIDE}, got {side}")));
    }
    let gamma = rng.uniform(roughness.0, roughness.1);
    let size = texture_size(side);
    let texture = diamond_square(size, gamma, rng)?;
    let cropped = GrayImage {
        side,
        data: texture
            .data
            .chunks_exact(size)
            .take(side)
            .flat_map(|row| row[..side].iter().copied())
            .collect(),
    };
    let params = ColorParams::sample(saturation, value, rng);
    Ok(colorize_full(&cropped, &params))
}
