use crate::chaos::{PointSet, Region};
use crate::render::{GrayImage, Patch3x3, MIN_SIDE};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterMode {
    /// 1 where at least one point (or patch bit) lands, else 0.
    Binary,
    /// Hit counts.
    Density,
}

/// Column/row index of a coordinate along one axis: `⌊(v − lo) / extent ·
/// side⌋` clamped to the grid, or the center pixel when the extent is zero.
#[inline]
fn axis_index(v: f64, lo: f64, scale: Option<f64>, side: usize) -> usize {
    match scale {
        Some(scale) => {
            // Clamp first (NaN lands on 0), then truncate: floor-then-clamp
            // without a libm call. Clamping in floating point lets the cast
            // compile to a bare conversion instruction.
            ((v - lo) * scale).max(0.0).min((side - 1) as f64) as u32 as usize
        }
        None => side / 2,
    }
}

/// Map points into a `side × side` grid. Column follows `x`, row follows
/// `y`. With a patch, each set bit `(r, c)` adds the point's hit to pixel
/// `(row + r − 1, col + c − 1)`; bits falling outside the grid are clipped.
pub fn rasterize(
    points: &PointSet,
    region: &Region,
    side: usize,
    patch: Option<Patch3x3>,
    mode: RasterMode,
) -> Result<GrayImage> {
    if side < MIN_SIDE {
        return Err(Error::Domain(format!("image side must be at least {MIN_SIDE}, got {side}")));
    }
    let scale = |extent: f64| (extent > 0.0).then(|| side as f64 / extent);
    let (sx, sy) = (scale(region.width()), scale(region.height()));

    let mut hits = vec![0u32; side * side];
    for (x, y) in points.iter() {
        let col = axis_index(x, region.x_min, sx, side);
        let row = axis_index(y, region.y_min, sy, side);
        hits[row * side + col] += 1;
    }

    let mut data = match patch {
        None => hits.iter().map(|&h| h as f32).collect::<Vec<_>>(),
        Some(patch) => splat(&hits, side, patch),
    };
    if mode == RasterMode::Binary {
        for v in &mut data {
            *v = if *v >= 1.0 { 1.0 } else { 0.0 };
        }
    }
    Ok(GrayImage { side, data })
}

/// Spread every pixel's hit count over the patch footprint. Equivalent to
/// splatting each point individually, but costs one pass over the grid per
/// set bit instead of one per point and bit.
fn splat(hits: &[u32], side: usize, patch: Patch3x3) -> Vec<f32> {
    let mut acc = vec![0u32; side * side];
    for (dr, dc) in patch.offsets() {
        for row in 0..side {
            let target_row = row as isize + dr;
            if target_row < 0 || target_row >= side as isize {
                continue;
            }
            let src = &hits[row * side..(row + 1) * side];
            let dst_base = target_row as usize * side;
            let (c0, c1) = (dc.max(0) as usize, (side as isize + dc.min(0)) as usize);
            for col in c0..c1 {
                // col - dc stays inside [0, side) for this range
                acc[dst_base + col] += src[(col as isize - dc) as usize];
            }
        }
    }
    acc.into_iter().map(|v| v as f32).collect()
}

/// Divide by the maximum so values land in `[0, 1]`. An all-zero image
/// stays all-zero.
pub fn normalize_density(img: &GrayImage) -> GrayImage {
    let max = img.data.iter().copied().fold(0.0f32, f32::max);
    if max <= 0.0 {
        return img.clone();
    }
    let inv = 1.0 / max;
    GrayImage {
        side: img.side,
        data: img.data.iter().map(|&v| if v == max { 1.0 } else { v * inv }).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use proptest::prelude::*;

    fn unit_region() -> Region {
        Region {
            x_min: 0.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
        }
    }

    fn one_point(x: f64, y: f64) -> PointSet {
        PointSet {
            xs: vec![x],
            ys: vec![y],
        }
    }

    #[test]
    fn single_point_binary() {
        let img = rasterize(&one_point(0.3, 0.6), &unit_region(), 16, None, RasterMode::Binary).unwrap();
        assert_eq!(img.data.iter().filter(|&&v| v > 0.0).count(), 1);
        assert_eq!(img.get(9, 4), 1.0);
    }

    #[test]
    fn full_patch_in_interior() {
        let img = rasterize(&one_point(0.5, 0.5), &unit_region(), 16, Some(Patch3x3::FULL), RasterMode::Binary).unwrap();
        assert_eq!(img.data.iter().filter(|&&v| v > 0.0).count(), 9);
        for r in 7..=9 {
            for c in 7..=9 {
                assert_eq!(img.get(r, c), 1.0);
            }
        }
    }

    #[test]
    fn patch_offsets_follow_bit_layout() {
        // only bit (0, 2): one row up, one column right
        let patch = Patch3x3::new(1 << 2).unwrap();
        let img = rasterize(&one_point(0.5, 0.5), &unit_region(), 16, Some(patch), RasterMode::Density).unwrap();
        assert_eq!(img.get(7, 9), 1.0);
        assert_eq!(img.data.iter().sum::<f32>(), 1.0);
    }

    #[test]
    fn corner_patch_is_clipped() {
        let img = rasterize(&one_point(0.0, 0.0), &unit_region(), 16, Some(Patch3x3::FULL), RasterMode::Density).unwrap();
        assert_eq!(img.data.iter().sum::<f32>(), 4.0);
    }

    #[test]
    fn extremes_clamp_into_grid() {
        let pts = PointSet {
            xs: vec![1.0, -5.0],
            ys: vec![1.0, 7.0],
        };
        let img = rasterize(&pts, &unit_region(), 8, None, RasterMode::Density).unwrap();
        assert_eq!(img.get(7, 7), 1.0);
        assert_eq!(img.get(7, 0), 1.0);
    }

    #[test]
    fn degenerate_region_goes_to_center() {
        let pts = PointSet {
            xs: vec![0.3; 5],
            ys: vec![0.3; 5],
        };
        let region = Region {
            x_min: 0.3,
            x_max: 0.3,
            y_min: 0.3,
            y_max: 0.3,
        };
        let img = rasterize(&pts, &region, 16, None, RasterMode::Density).unwrap();
        assert_eq!(img.get(8, 8), 5.0);
    }

    #[test]
    fn side_too_small() {
        assert!(matches!(
            rasterize(&one_point(0.0, 0.0), &unit_region(), 7, None, RasterMode::Binary),
            Err(Error::Domain(_))
        ));
    }

    /// Oracle: splat every point individually.
    fn naive_splat(points: &PointSet, region: &Region, side: usize, patch: Patch3x3) -> Vec<f32> {
        let mut out = vec![0f32; side * side];
        for (x, y) in points.iter() {
            let col = (((x - region.x_min) / region.width() * side as f64).floor().max(0.0) as usize).min(side - 1);
            let row = (((y - region.y_min) / region.height() * side as f64).floor().max(0.0) as usize).min(side - 1);
            for (dr, dc) in patch.offsets() {
                let (r, c) = (row as isize + dr, col as isize + dc);
                if r >= 0 && c >= 0 && (r as usize) < side && (c as usize) < side {
                    out[r as usize * side + c as usize] += 1.0;
                }
            }
        }
        out
    }

    #[test]
    fn splat_matches_per_point_oracle() {
        let mut rng = Stream::from_seed(4);
        for _ in 0..50 {
            let n = 500;
            let pts = PointSet {
                xs: (0..n).map(|_| rng.uniform(0.0, 1.0)).collect(),
                ys: (0..n).map(|_| rng.uniform(0.0, 1.0)).collect(),
            };
            // dyadic grid so both index formulas agree exactly
            let patch = Patch3x3::new(rng.below(512) as u16).unwrap();
            let img = rasterize(&pts, &unit_region(), 32, Some(patch), RasterMode::Density).unwrap();
            assert_eq!(img.data, naive_splat(&pts, &unit_region(), 32, patch));
        }
    }

    #[test]
    fn normalization() {
        let img = GrayImage {
            side: 8,
            data: (0..64).map(|i| if i == 10 { 40.0 } else { (i % 5) as f32 }).collect(),
        };
        let n = normalize_density(&img);
        assert_eq!(n.data[10], 1.0);
        assert!(n.data.iter().all(|v| (0.0..=1.0).contains(v)));
        let zero = GrayImage::zeros(8);
        assert_eq!(normalize_density(&zero), zero);
    }

    proptest! {
        #[test]
        fn counts_are_conserved_without_clipping(coords in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1..400),
                                                 bits in 1u16..512) {
            let pts = PointSet {
                xs: coords.iter().map(|c| c.0).collect(),
                ys: coords.iter().map(|c| c.1).collect(),
            };
            let padded = crate::chaos::bounding_region(&pts, 0.025).unwrap();
            let plain = rasterize(&pts, &padded, 64, None, RasterMode::Density).unwrap();
            prop_assert_eq!(plain.data.iter().sum::<f32>(), pts.len() as f32);
            // A 1.5-pixel margin keeps every patch bit inside the grid.
            let margin = |lo: f64, hi: f64| 1.5 * (hi - lo).max(1e-3) / 61.0;
            let tight = crate::chaos::bounding_region(&pts, 0.0).unwrap();
            let (mx, my) = (margin(tight.x_min, tight.x_max), margin(tight.y_min, tight.y_max));
            let roomy = Region {
                x_min: tight.x_min - mx,
                x_max: tight.x_max.max(tight.x_min + 1e-3) + mx,
                y_min: tight.y_min - my,
                y_max: tight.y_max.max(tight.y_min + 1e-3) + my,
            };
            let patch = Patch3x3::new(bits).unwrap();
            let img = rasterize(&pts, &roomy, 64, Some(patch), RasterMode::Density).unwrap();
            prop_assert_eq!(img.data.iter().sum::<f32>(), (pts.len() * patch.count()) as f32);
        }

        #[test]
        fn normalized_max_is_one(values in prop::collection::vec(0.0..1000.0f32, 64)) {
            prop_assume!(values.iter().any(|&v| v > 0.0));
            let n = normalize_density(&GrayImage { side: 8, data: values });
            prop_assert_eq!(n.data.iter().copied().fold(0.0f32, f32::max), 1.0);
        }
    }
}
