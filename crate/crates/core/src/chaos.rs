//! Random-iteration ("chaos game") sampling of attractors.

use crate::ifs::IfsCode;
use crate::rng::Stream;
use crate::{Error, Result};

pub const DEFAULT_ITERATIONS: usize = 100_000;

/// Iterates discarded before points are recorded; the start point is
/// arbitrary and the first few iterates are off the attractor.
pub const BURN_IN: usize = 20;

/// Trajectories whose coordinates exceed this magnitude abort.
pub const DIVERGENCE_RADIUS: f64 = 1e8;

pub const DEFAULT_PAD_FRACTION: f64 = 0.025;
pub const DEFAULT_JITTER_SCALE: (f64, f64) = (1.0, 1.5);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointSet {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }
}

/// Picks map indices with the code's probabilities from one uniform draw
/// per step.
#[derive(Debug, Clone)]
pub struct MapSelector {
    /// Cumulative sums without the last one.
    thresholds: Vec<f64>,
}

impl MapSelector {
    pub fn new(probs: &[f64]) -> Self {
        let mut acc = 0.0;
        let mut thresholds: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        thresholds.pop();
        MapSelector { thresholds }
    }

    #[inline]
    pub fn pick(&self, rng: &mut Stream) -> usize {
        self.pick_bits(rng.next_u64())
    }

    /// [`pick`](Self::pick) for an already drawn `u64`.
    #[inline]
    pub fn pick_bits(&self, bits: u64) -> usize {
        let u = crate::rng::unit_from_bits(bits);
        // The cumulative sums are nondecreasing, so the first index with
        // u < c equals the number of entries with u >= c. Counting avoids
        // a data-dependent branch per step.
        self.thresholds.iter().map(|&c| (u >= c) as usize).sum()
    }
}

/// Run `burn_in + k` steps of the chaos game from `x0` and return the last
/// `k` points.
pub fn iterate_with_burn_in(
    code: &IfsCode,
    k: usize,
    burn_in: usize,
    x0: [f64; 2],
    rng: &mut Stream,
) -> Result<PointSet> {
    iterate_bounded(code, k, burn_in, x0, rng).map(|(points, _)| points)
}

/// [`iterate_with_burn_in`] that also returns the unpadded bounding region
/// of the recorded points, tracked during the run instead of by a second
/// pass. Equal to `bounding_region(&points, 0.0)`.
pub fn iterate_bounded(
    code: &IfsCode,
    k: usize,
    burn_in: usize,
    x0: [f64; 2],
    rng: &mut Stream,
) -> Result<(PointSet, Region)> {
    if k == 0 {
        return Err(Error::Domain("iteration count must be positive".into()));
    }
    let selector = MapSelector::new(code.probs());
    let maps = code.maps();
    let mut xs = Vec::with_capacity(k);
    let mut ys = Vec::with_capacity(k);
    let [mut x, mut y] = x0;
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    // One u64 per step, drawn in blocks; same values as per-step draws.
    let mut draws = [0u64; 1024];
    let total = burn_in + k;
    let mut step = 0;
    while step < total {
        let block = &mut draws[..(total - step).min(1024)];
        rng.fill_u64(block);
        for &bits in block.iter() {
            let m = &maps[selector.pick_bits(bits)];
            let nx = m.a[0][0] * x + m.a[0][1] * y + m.b[0];
            let ny = m.a[1][0] * x + m.a[1][1] * y + m.b[1];
            x = nx;
            y = ny;
            // NaN fails this comparison too.
            if !(x.abs() <= DIVERGENCE_RADIUS && y.abs() <= DIVERGENCE_RADIUS) {
                return Err(Error::Divergence {
                    step,
                    magnitude: x.hypot(y),
                });
            }
            if step >= burn_in {
                xs.push(x);
                ys.push(y);
                x_min = if x < x_min { x } else { x_min };
                x_max = if x > x_max { x } else { x_max };
                y_min = if y < y_min { y } else { y_min };
                y_max = if y > y_max { y } else { y_max };
            }
            step += 1;
        }
    }
    let region = Region {
        x_min,
        x_max,
        y_min,
        y_max,
    };
    Ok((PointSet { xs, ys }, region))
}

/// [`iterate_with_burn_in`] with the default burn-in.
pub fn iterate(code: &IfsCode, k: usize, x0: [f64; 2], rng: &mut Stream) -> Result<PointSet> {
    iterate_with_burn_in(code, k, BURN_IN, x0, rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Region {
    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    /// Grown by `fraction` of the extent on every side.
    pub fn padded(&self, fraction: f64) -> Region {
        let px = self.width() * fraction;
        let py = self.height() * fraction;
        Region {
            x_min: self.x_min - px,
            x_max: self.x_max + px,
            y_min: self.y_min - py,
            y_max: self.y_max + py,
        }
    }

    pub fn contains(&self, other: &Region) -> bool {
        self.x_min <= other.x_min
            && other.x_max <= self.x_max
            && self.y_min <= other.y_min
            && other.y_max <= self.y_max
    }
}

/// Min and max of `values`. Four independent lanes break the compare
/// dependency chain; the result does not depend on the lane split.
fn extent(values: &[f64]) -> (f64, f64) {
    let mut lo = [f64::INFINITY; 4];
    let mut hi = [f64::NEG_INFINITY; 4];
    let chunks = values.chunks_exact(4);
    let tail = chunks.remainder();
    // Plain comparisons compile to min/max instructions; `f64::min` adds
    // NaN handling that chaos-game output never needs.
    for c in chunks {
        for l in 0..4 {
            lo[l] = if c[l] < lo[l] { c[l] } else { lo[l] };
            hi[l] = if c[l] > hi[l] { c[l] } else { hi[l] };
        }
    }
    for &v in tail {
        lo[0] = if v < lo[0] { v } else { lo[0] };
        hi[0] = if v > hi[0] { v } else { hi[0] };
    }
    let min = lo.into_iter().fold(f64::INFINITY, |a, b| if b < a { b } else { a });
    let max = hi.into_iter().fold(f64::NEG_INFINITY, |a, b| if b > a { b } else { a });
    (min, max)
}

/// Tight min/max box grown by `pad_fraction` of its extent on every side.
pub fn bounding_region(points: &PointSet, pad_fraction: f64) -> Result<Region> {
    if points.is_empty() {
        return Err(Error::Domain("bounding region of an empty point set".into()));
    }
    let (x_min, x_max) = extent(&points.xs);
    let (y_min, y_max) = extent(&points.ys);
    let tight = Region {
        x_min,
        x_max,
        y_min,
        y_max,
    };
    Ok(tight.padded(pad_fraction))
}

/// Scale-and-shift applied to a region, kept for reproducibility records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jitter {
    pub scale: f64,
    /// Center shift as a fraction of the slack `(scale - 1) * half extent`,
    /// in `[-1, 1]`.
    pub shift_x: f64,
    pub shift_y: f64,
}

impl Jitter {
    pub const IDENTITY: Jitter = Jitter {
        scale: 1.0,
        shift_x: 0.0,
        shift_y: 0.0,
    };

    /// Draw order: scale, x shift, y shift.
    pub fn sample(scale_range: (f64, f64), rng: &mut Stream) -> Self {
        Jitter {
            scale: rng.uniform(scale_range.0, scale_range.1),
            shift_x: rng.uniform(-1.0, 1.0),
            shift_y: rng.uniform(-1.0, 1.0),
        }
    }

    /// Grow the region by `scale` about its center, then shift the center by
    /// at most the added margin so the original box stays inside. The
    /// fractal shrinks and moves within the frame.
    pub fn apply(&self, region: &Region) -> Region {
        let (cx, cy) = region.center();
        let hw = 0.5 * region.width();
        let hh = 0.5 * region.height();
        let slack_x = (self.scale - 1.0) * hw;
        let slack_y = (self.scale - 1.0) * hh;
        let (cx, cy) = (cx + self.shift_x * slack_x, cy + self.shift_y * slack_y);
        let (nhw, nhh) = (self.scale * hw, self.scale * hh);
        Region {
            x_min: (cx - nhw).min(region.x_min),
            x_max: (cx + nhw).max(region.x_max),
            y_min: (cy - nhh).min(region.y_min),
            y_max: (cy + nhh).max(region.y_max),
        }
    }
}

/// Randomly scale (`s ~ U(scale_range)`) and translate a region.
pub fn jitter_region(region: &Region, scale_range: (f64, f64), rng: &mut Stream) -> (Region, Jitter) {
    let jitter = Jitter::sample(scale_range, rng);
    (jitter.apply(region), jitter)
}
