//! Multi-instance images: several cached fractal sprites from distinct
//! classes pasted over a cached background, with a multi-hot label.

use serde::{Deserialize, Serialize};

use crate::render::color::{palette, hue_offset, ColorParams};
use crate::render::transform::{flip_horizontal, flip_vertical};
use crate::render::{GrayImage, RgbImage};
use crate::rng::Stream;
use crate::stream::CacheSnapshot;
use crate::{Error, Result};

pub const DEFAULT_N_MAX: usize = 5;
pub const DEFAULT_INSTANCE_SCALE: (f64, f64) = (0.5, 1.5);

/// A grayscale fractal rendering tagged with its class.
#[derive(Debug, Clone, PartialEq)]
pub struct Sprite {
    pub class_id: u32,
    pub image: GrayImage,
}

/// Presence bits for `num_classes` classes. Bit `c` lives in byte `c / 8`
/// at position `c % 8` (little-endian bit order), which is also the wire
/// layout.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiLabel {
    num_classes: usize,
    bytes: Vec<u8>,
}

impl MultiLabel {
    pub fn from_classes(num_classes: usize, classes: &[u32]) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::InvalidInput("a multi-label needs at least one class".into()));
        }
        let mut bytes = vec![0u8; num_classes.div_ceil(8)];
        for &c in classes {
            let c = c as usize;
            if c >= num_classes {
                return Err(Error::InvalidInput(format!("class {c} out of range for {num_classes} classes")));
            }
            bytes[c / 8] |= 1 << (c % 8);
        }
        Ok(MultiLabel { num_classes, bytes })
    }

    /// Inverse of [`MultiLabel::to_targets`]; rejects an all-zero vector or
    /// entries other than 0 and 1.
    pub fn from_targets(targets: &[u8]) -> Result<Self> {
        if let Some(bad) = targets.iter().find(|&&t| t > 1) {
            return Err(Error::InvalidInput(format!("target entries must be 0 or 1, got {bad}")));
        }
        let classes: Vec<u32> = (0..targets.len() as u32).filter(|&c| targets[c as usize] == 1).collect();
        Self::from_classes(targets.len(), &classes)
    }

    /// Decode the wire bytes of one label.
    pub fn from_bytes(num_classes: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != num_classes.div_ceil(8) {
            return Err(Error::Format(format!(
                "label for {num_classes} classes needs {} bytes, got {}",
                num_classes.div_ceil(8),
                bytes.len()
            )));
        }
        let label = MultiLabel {
            num_classes,
            bytes: bytes.to_vec(),
        };
        let padding_set = (num_classes..bytes.len() * 8).any(|c| label.bit(c));
        if padding_set || label.count() == 0 {
            return Err(Error::Format("label has padding bits set or no class".into()));
        }
        Ok(label)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    fn bit(&self, c: usize) -> bool {
        self.bytes[c / 8] >> (c % 8) & 1 == 1
    }

    pub fn contains(&self, class: u32) -> bool {
        (class as usize) < self.num_classes && self.bit(class as usize)
    }

    pub fn count(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn classes(&self) -> Vec<u32> {
        (0..self.num_classes as u32).filter(|&c| self.bit(c as usize)).collect()
    }

    /// Dense 0/1 vector of length `num_classes`.
    pub fn to_targets(&self) -> Vec<u8> {
        (0..self.num_classes).map(|c| self.bit(c) as u8).collect()
    }
}

pub fn labels_to_targets(label: &MultiLabel) -> Vec<u8> {
    label.to_targets()
}

/// How one fractal was placed. Offsets are the sprite's top-left corner on
/// the canvas and may be negative or past the edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub class_id: u32,
    pub scale: f64,
    pub offset: (i64, i64),
    pub flip_h: bool,
    pub flip_v: bool,
    pub color: ColorParams,
    /// Canvas pixels this fractal still owns after later placements drew
    /// over it. Zero means fully occluded or fully off-canvas; its label
    /// bit stays set.
    pub visible_pixels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiInstanceConfig {
    pub n_max: usize,
    pub instance_scale: (f64, f64),
    pub saturation: (f64, f64),
    pub value: (f64, f64),
    pub flips: bool,
}

impl Default for MultiInstanceConfig {
    fn default() -> Self {
        MultiInstanceConfig {
            n_max: DEFAULT_N_MAX,
            instance_scale: DEFAULT_INSTANCE_SCALE,
            saturation: crate::render::color::DEFAULT_SATURATION,
            value: crate::render::color::DEFAULT_VALUE,
            flips: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Composition {
    pub image: RgbImage,
    pub label: MultiLabel,
    pub placements: Vec<PlacementRecord>,
}

/// Nearest-neighbour resize of a square gray image to `new_side`.
pub fn resize_nearest(img: &GrayImage, new_side: usize) -> GrayImage {
    if new_side == img.side {
        return img.clone();
    }
    let src = img.side;
    let map: Vec<usize> = (0..new_side)
        .map(|i| (((i as f64 + 0.5) * src as f64 / new_side as f64) as usize).min(src - 1))
        .collect();
    let mut data = Vec::with_capacity(new_side * new_side);
    for &r in &map {
        let row = &img.data[r * src..(r + 1) * src];
        data.extend(map.iter().map(|&c| row[c]));
    }
    GrayImage { side: new_side, data }
}

/// Side of a sprite of `side` pixels after scaling by `scale`.
pub fn scaled_side(side: usize, scale: f64) -> usize {
    ((side as f64 * scale).round() as usize).max(1)
}

/// Paste sprites over `background` in order; later placements occlude
/// earlier ones. Each placement's scale, flips and color are applied to its
/// sprite first. Fills in `visible_pixels`.
pub fn compose_with_placements(
    background: &RgbImage,
    items: &mut [(&GrayImage, PlacementRecord)],
) -> Result<RgbImage> {
    let side = background.side;
    let mut canvas = background.clone();
    let mut owner = vec![u16::MAX; side * side];
    for (index, (sprite, placement)) in items.iter().enumerate() {
        let new_side = scaled_side(sprite.side, placement.scale);
        let mut scaled = resize_nearest(sprite, new_side);
        if placement.flip_h {
            flip_horizontal(&mut scaled.data, new_side, 1);
        }
        if placement.flip_v {
            flip_vertical(&mut scaled.data, new_side, 1);
        }
        let lut = palette(&placement.color);
        let (ox, oy) = placement.offset;
        for r in 0..new_side {
            let y = oy + r as i64;
            if y < 0 || y >= side as i64 {
                continue;
            }
            for c in 0..new_side {
                let x = ox + c as i64;
                let g = scaled.data[r * new_side + c];
                if g <= 0.0 || x < 0 || x >= side as i64 {
                    continue;
                }
                let p = y as usize * side + x as usize;
                canvas.data[3 * p..3 * p + 3].copy_from_slice(&lut[hue_offset(g) as usize]);
                owner[p] = index as u16;
            }
        }
    }
    let mut visible = vec![0usize; items.len()];
    for &o in &owner {
        if let Some(v) = visible.get_mut(o as usize) {
            *v += 1;
        }
    }
    for ((_, placement), v) in items.iter_mut().zip(visible) {
        placement.visible_pixels = v;
    }
    Ok(canvas)
}

/// Compose one multi-instance image from a cache snapshot.
///
/// Draw order: background index, instance count `n ~ U{1..n_max}`, `n`
/// distinct classes, then per instance: cached entry of that class,
/// horizontal flip, vertical flip, color, scale, x offset, y offset.
pub fn compose_multi(
    cache: &CacheSnapshot,
    canvas_side: usize,
    num_classes: usize,
    cfg: &MultiInstanceConfig,
    rng: &mut Stream,
) -> Result<Composition> {
    if cfg.n_max == 0 {
        return Err(Error::Domain("n_max must be at least 1".into()));
    }
    let classes = cache.classes();
    if classes.len() < cfg.n_max || cache.backgrounds().is_empty() {
        return Err(Error::NotReady(format!(
            "cache holds {} distinct classes and {} backgrounds; need {} and 1 (warm the cache first)",
            classes.len(),
            cache.backgrounds().len(),
            cfg.n_max
        )));
    }
    let background = &cache.backgrounds()[rng.index(cache.backgrounds().len())];
    if background.side != canvas_side {
        return Err(Error::Domain(format!(
            "cached backgrounds are {} px but the canvas is {canvas_side} px",
            background.side
        )));
    }

    let n = 1 + rng.index(cfg.n_max);
    let mut picked: Vec<usize> = (0..classes.len()).collect();
    rng.choose_prefix(&mut picked, n);

    let mut items = Vec::with_capacity(n);
    for &slot in &picked[..n] {
        let (class_id, entries) = &classes[slot];
        let sprite = &cache.sprites()[entries[rng.index(entries.len())]];
        let (flip_h, flip_v) = if cfg.flips { (rng.coin(), rng.coin()) } else { (false, false) };
        let color = ColorParams::sample(cfg.saturation, cfg.value, rng);
        let scale = rng.uniform(cfg.instance_scale.0, cfg.instance_scale.1);
        let size = scaled_side(sprite.image.side, scale) as f64;
        let lo = -0.25 * canvas_side as f64;
        let hi = (canvas_side as f64 - 0.75 * size).max(lo);
        let ox = rng.uniform(lo, hi).floor() as i64;
        let oy = rng.uniform(lo, hi).floor() as i64;
        items.push((
            &sprite.image,
            PlacementRecord {
                class_id: *class_id,
                scale,
                offset: (ox, oy),
                flip_h,
                flip_v,
                color,
                visible_pixels: 0,
            },
        ));
    }

    let image = compose_with_placements(background, &mut items)?;
    let placements: Vec<PlacementRecord> = items.into_iter().map(|(_, p)| p).collect();
    let ids: Vec<u32> = placements.iter().map(|p| p.class_id).collect();
    let label = MultiLabel::from_classes(num_classes, &ids)?;
    Ok(Composition {
        image,
        label,
        placements,
    })
}
