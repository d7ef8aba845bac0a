//! Just-in-time batch generation backed by a render cache.
//!
//! Workers read an immutable [`CacheSnapshot`] taken when a batch starts;
//! sprites and backgrounds rendered during the batch are published as a new
//! snapshot when it ends. Every random draw is keyed by the master seed and
//! the global image index, so batch bytes do not depend on the number of
//! rayon workers.

mod wire;

pub use wire::{read_batch, write_batch, BATCH_MAGIC, BATCH_VERSION};

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::DatasetSpec;
use crate::multi::{compose_multi, resize_nearest, MultiInstanceConfig, MultiLabel, Sprite, DEFAULT_INSTANCE_SCALE, DEFAULT_N_MAX};
use crate::render::{finish_image, render_background, render_sprite, RenderConfig, RgbImage, MIN_SIDE};
use crate::rng::{domain, Stream};
use crate::{Error, Result};

pub const DEFAULT_CACHE_CAPACITY: usize = 512;
pub const DEFAULT_BACKGROUND_CAPACITY: usize = 64;
pub const DEFAULT_SPRITE_SIDE: usize = 128;
pub const DEFAULT_REFRESH_EVERY: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamConfig {
    pub cache_capacity: usize,
    pub background_capacity: usize,
    /// Side of cached sprites in multi-instance mode.
    pub sprite_side: usize,
    pub n_max: usize,
    /// One new sprite and one new background every this many images in
    /// multi-instance mode.
    pub refresh_every: usize,
    pub instance_scale: (f64, f64),
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            cache_capacity: DEFAULT_CACHE_CAPACITY,
            background_capacity: DEFAULT_BACKGROUND_CAPACITY,
            sprite_side: DEFAULT_SPRITE_SIDE,
            n_max: DEFAULT_N_MAX,
            refresh_every: DEFAULT_REFRESH_EVERY,
            instance_scale: DEFAULT_INSTANCE_SCALE,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cache_capacity == 0 || self.background_capacity == 0 {
            return Err(Error::Domain("cache capacities must be positive".into()));
        }
        if self.sprite_side < MIN_SIDE {
            return Err(Error::Domain(format!("sprite side must be at least {MIN_SIDE}")));
        }
        if self.n_max == 0 || self.refresh_every == 0 {
            return Err(Error::Domain("n_max and refresh_every must be positive".into()));
        }
        let (lo, hi) = self.instance_scale;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Domain(format!("bad instance scale range {:?}", self.instance_scale)));
        }
        Ok(())
    }

    fn multi_instance(&self, render: &RenderConfig) -> MultiInstanceConfig {
        MultiInstanceConfig {
            n_max: self.n_max,
            instance_scale: self.instance_scale,
            saturation: render.saturation,
            value: render.value,
            flips: render.flips,
        }
    }
}

/// One immutable generation of the cache. Entries are ordered oldest first.
#[derive(Debug, Default)]
pub struct CacheSnapshot {
    generation: u64,
    sprites: Vec<Arc<Sprite>>,
    backgrounds: Vec<Arc<RgbImage>>,
    classes: Vec<(u32, Vec<usize>)>,
}

impl CacheSnapshot {
    pub fn new(generation: u64, sprites: Vec<Arc<Sprite>>, backgrounds: Vec<Arc<RgbImage>>) -> Self {
        let mut index: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, s) in sprites.iter().enumerate() {
            index.entry(s.class_id).or_default().push(i);
        }
        CacheSnapshot {
            generation,
            sprites,
            backgrounds,
            classes: index.into_iter().collect(),
        }
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn sprites(&self) -> &[Arc<Sprite>] {
        &self.sprites
    }

    pub fn backgrounds(&self) -> &[Arc<RgbImage>] {
        &self.backgrounds
    }

    /// Distinct cached classes in increasing id order, each with the
    /// positions of its sprites.
    pub fn classes(&self) -> &[(u32, Vec<usize>)] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.sprites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sprites.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CacheStats {
    pub generation: u64,
    pub sprites: usize,
    pub backgrounds: usize,
    /// Sprites rendered while serving batches.
    pub fresh_renders: u64,
    /// Multi-instance sprite + background refreshes.
    pub refreshes: u64,
    /// Sprites and backgrounds rendered by warm-up.
    pub warm_renders: u64,
    pub images_emitted: u64,
}

/// FIFO rings of sprites and backgrounds behind an atomically swapped
/// snapshot.
#[derive(Debug)]
pub struct RenderCache {
    capacity: usize,
    background_capacity: usize,
    current: RwLock<Arc<CacheSnapshot>>,
    fresh_renders: AtomicU64,
    refreshes: AtomicU64,
    warm_renders: AtomicU64,
    images_emitted: AtomicU64,
}

impl RenderCache {
    pub fn new(capacity: usize, background_capacity: usize) -> Result<Self> {
        if capacity == 0 || background_capacity == 0 {
            return Err(Error::Domain("cache capacities must be positive".into()));
        }
        Ok(RenderCache {
            capacity,
            background_capacity,
            current: RwLock::new(Arc::new(CacheSnapshot::default())),
            fresh_renders: AtomicU64::new(0),
            refreshes: AtomicU64::new(0),
            warm_renders: AtomicU64::new(0),
            images_emitted: AtomicU64::new(0),
        })
    }

    pub fn from_config(cfg: &StreamConfig) -> Result<Self> {
        Self::new(cfg.cache_capacity, cfg.background_capacity)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn background_capacity(&self) -> usize {
        self.background_capacity
    }

    pub fn snapshot(&self) -> Arc<CacheSnapshot> {
        Arc::clone(&self.current.read().unwrap_or_else(|e| e.into_inner()))
    }

    /// Append new entries, evicting the oldest beyond capacity, and publish
    /// the result as the next generation.
    pub fn publish(&self, sprites: Vec<Arc<Sprite>>, backgrounds: Vec<Arc<RgbImage>>) {
        let mut guard = self.current.write().unwrap_or_else(|e| e.into_inner());
        let old = &**guard;
        let sprites = keep_tail(&old.sprites, sprites, self.capacity);
        let backgrounds = keep_tail(&old.backgrounds, backgrounds, self.background_capacity);
        *guard = Arc::new(CacheSnapshot::new(old.generation + 1, sprites, backgrounds));
    }

    pub fn stats(&self) -> CacheStats {
        let snap = self.snapshot();
        CacheStats {
            generation: snap.generation,
            sprites: snap.sprites.len(),
            backgrounds: snap.backgrounds.len(),
            fresh_renders: self.fresh_renders.load(Ordering::Relaxed),
            refreshes: self.refreshes.load(Ordering::Relaxed),
            warm_renders: self.warm_renders.load(Ordering::Relaxed),
            images_emitted: self.images_emitted.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Multiclass,
    MultiInstance,
}

impl Mode {
    pub fn wire_byte(self) -> u8 {
        match self {
            Mode::Multiclass => 0,
            Mode::MultiInstance => 1,
        }
    }

    pub fn from_wire_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Mode::Multiclass),
            1 => Ok(Mode::MultiInstance),
            _ => Err(Error::Format(format!("unknown batch mode {b}"))),
        }
    }
}

/// `cursor` is the global index of the batch's first image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchRequest {
    pub mode: Mode,
    pub batch_size: usize,
    pub side: usize,
    pub cursor: u64,
}

impl BatchRequest {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Domain("batch size must be positive".into()));
        }
        if self.mode == Mode::Multiclass && !self.batch_size.is_multiple_of(2) {
            return Err(Error::Domain(format!(
                "multiclass batches are half fresh, half cached; batch size {} is odd",
                self.batch_size
            )));
        }
        if self.side < MIN_SIDE {
            return Err(Error::Domain(format!("image side must be at least {MIN_SIDE}")));
        }
        Ok(())
    }

    /// The request for the batch that follows this one.
    pub fn next(&self) -> Self {
        BatchRequest {
            cursor: self.cursor + self.batch_size as u64,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Classes(Vec<u32>),
    Multi(Vec<MultiLabel>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub mode: Mode,
    pub side: usize,
    pub images: Vec<RgbImage>,
    pub labels: Labels,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

fn keep_tail<T: Clone>(old: &[T], new: Vec<T>, cap: usize) -> Vec<T> {
    let skip = (old.len() + new.len()).saturating_sub(cap);
    old.iter().cloned().chain(new).skip(skip).collect()
}

fn check_mode(req: &BatchRequest, mode: Mode) -> Result<()> {
    if req.mode != mode {
        return Err(Error::InvalidInput(format!("{:?} request passed to the {mode:?} assembler", req.mode)));
    }
    req.validate()
}

/// Draw a class uniformly, then a code uniformly within its group.
fn pick_code<'a>(spec: &'a DatasetSpec, rng: &mut Stream) -> (u32, &'a crate::IfsCode) {
    let class = rng.index(spec.num_classes());
    let group = &spec.classes()[class];
    (class as u32, &group[rng.index(group.len())])
}

fn render_config(spec: &DatasetSpec, side: usize) -> RenderConfig {
    RenderConfig {
        side,
        ..spec.render.clone()
    }
}

fn sprite_side(spec: &DatasetSpec, req: &BatchRequest) -> usize {
    match req.mode {
        Mode::Multiclass => req.side,
        Mode::MultiInstance => spec.stream.sprite_side,
    }
}

/// Fill the sprite ring to capacity and the background ring to its
/// capacity. Sprite classes follow a seeded permutation of all classes, so
/// `min(capacity, C)` distinct classes are covered. A full cache is left
/// untouched.
pub fn warm_cache(spec: &DatasetSpec, cache: &RenderCache, req: &BatchRequest) -> Result<()> {
    req.validate()?;
    let snap = cache.snapshot();
    let cfg = render_config(spec, req.side);
    let side = sprite_side(spec, req);
    let start = snap.len();
    let missing = cache.capacity.saturating_sub(start);
    let bg_start = snap.backgrounds().len();
    let bg_missing = cache.background_capacity.saturating_sub(bg_start);
    if missing == 0 && bg_missing == 0 {
        return Ok(());
    }

    let mut perm: Vec<usize> = (0..spec.num_classes()).collect();
    let take = perm.len();
    Stream::derive(spec.seed, domain::WARM_CLASSES, 0).choose_prefix(&mut perm, take);

    let sprites = (start..start + missing)
        .into_par_iter()
        .map(|i| {
            let mut rng = Stream::derive(spec.seed, domain::WARM_SPRITE, i as u64);
            let class = perm[i % perm.len()];
            let group = &spec.classes()[class];
            let code = &group[rng.index(group.len())];
            let image = render_sprite(code, &cfg, side, &mut rng)?;
            Ok(Arc::new(Sprite {
                class_id: class as u32,
                image,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let backgrounds = (bg_start..bg_start + bg_missing)
        .into_par_iter()
        .map(|i| {
            let mut rng = Stream::derive(spec.seed, domain::WARM_BACKGROUND, i as u64);
            render_background(req.side, cfg.background_roughness, cfg.saturation, cfg.value, &mut rng).map(Arc::new)
        })
        .collect::<Result<Vec<_>>>()?;
    cache
        .warm_renders
        .fetch_add((sprites.len() + backgrounds.len()) as u64, Ordering::Relaxed);
    cache.publish(sprites, backgrounds);
    Ok(())
}

/// Half fresh renders (which enter the cache), half cached sprites
/// re-colored, re-oriented and composited onto new backgrounds.
///
/// Images `cursor .. cursor + B/2` are fresh, the rest come from the cache.
pub fn next_batch_multiclass(spec: &DatasetSpec, cache: &RenderCache, req: &BatchRequest) -> Result<Batch> {
    check_mode(req, Mode::Multiclass)?;
    let half = req.batch_size / 2;
    let snap = cache.snapshot();
    if snap.len() < half {
        return Err(Error::NotReady(format!(
            "cache holds {} sprites but a batch of {} needs {half}; call warm_cache first",
            snap.len(),
            req.batch_size
        )));
    }
    let cfg = render_config(spec, req.side);

    let fresh = (0..half)
        .into_par_iter()
        .map(|i| {
            let mut rng = Stream::derive(spec.seed, domain::FRESH, req.cursor + i as u64);
            let (class_id, code) = pick_code(spec, &mut rng);
            let image = render_sprite(code, &cfg, req.side, &mut rng)?;
            let finished = finish_image(&image, &cfg, &mut rng)?;
            Ok((Arc::new(Sprite { class_id, image }), finished))
        })
        .collect::<Result<Vec<_>>>()?;
    let cached = (0..half)
        .into_par_iter()
        .map(|i| {
            let mut rng = Stream::derive(spec.seed, domain::CACHED, req.cursor + (half + i) as u64);
            let entry = &snap.sprites()[rng.index(snap.len())];
            let finished = if entry.image.side == req.side {
                finish_image(&entry.image, &cfg, &mut rng)?
            } else {
                finish_image(&resize_nearest(&entry.image, req.side), &cfg, &mut rng)?
            };
            Ok((entry.class_id, finished))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut images = Vec::with_capacity(req.batch_size);
    let mut labels = Vec::with_capacity(req.batch_size);
    let mut new_sprites = Vec::with_capacity(half);
    for (sprite, image) in fresh {
        labels.push(sprite.class_id);
        images.push(image);
        new_sprites.push(sprite);
    }
    for (class_id, image) in cached {
        labels.push(class_id);
        images.push(image);
    }
    cache.fresh_renders.fetch_add(half as u64, Ordering::Relaxed);
    cache.images_emitted.fetch_add(req.batch_size as u64, Ordering::Relaxed);
    cache.publish(new_sprites, Vec::new());
    Ok(Batch {
        mode: Mode::Multiclass,
        side: req.side,
        images,
        labels: Labels::Classes(labels),
    })
}

/// Global image indices in `cursor .. cursor + len` after which a refresh
/// happens, as refresh ordinals.
fn refresh_ordinals(cursor: u64, len: usize, every: usize) -> Vec<u64> {
    let every = every as u64;
    (cursor..cursor + len as u64)
        .filter(|idx| (idx + 1) % every == 0)
        .map(|idx| (idx + 1) / every - 1)
        .collect()
}

/// Multi-instance composites over the batch-start snapshot. One new sprite
/// and one new background enter the cache per `refresh_every` images.
pub fn next_batch_multiinstance(spec: &DatasetSpec, cache: &RenderCache, req: &BatchRequest) -> Result<Batch> {
    check_mode(req, Mode::MultiInstance)?;
    spec.stream.validate()?;
    let snap = cache.snapshot();
    let mcfg = spec.stream.multi_instance(&spec.render);
    if snap.classes().len() < mcfg.n_max || snap.backgrounds().is_empty() {
        return Err(Error::NotReady(format!(
            "cache holds {} distinct classes and {} backgrounds; call warm_cache first",
            snap.classes().len(),
            snap.backgrounds().len()
        )));
    }
    let cfg = render_config(spec, req.side);
    let num_classes = spec.num_classes();

    let composed = (0..req.batch_size)
        .into_par_iter()
        .map(|i| {
            let mut rng = Stream::derive(spec.seed, domain::COMPOSE, req.cursor + i as u64);
            compose_multi(&snap, req.side, num_classes, &mcfg, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let refreshed = refresh_ordinals(req.cursor, req.batch_size, spec.stream.refresh_every)
        .into_par_iter()
        .map(|r| {
            let mut rng = Stream::derive(spec.seed, domain::REFRESH, r);
            let (class_id, code) = pick_code(spec, &mut rng);
            let image = render_sprite(code, &cfg, spec.stream.sprite_side, &mut rng)?;
            let bg = render_background(req.side, cfg.background_roughness, cfg.saturation, cfg.value, &mut rng)?;
            Ok((Arc::new(Sprite { class_id, image }), Arc::new(bg)))
        })
        .collect::<Result<Vec<_>>>()?;

    let count = refreshed.len() as u64;
    let (sprites, backgrounds): (Vec<_>, Vec<_>) = refreshed.into_iter().unzip();
    cache.refreshes.fetch_add(count, Ordering::Relaxed);
    cache.fresh_renders.fetch_add(count, Ordering::Relaxed);
    cache.images_emitted.fetch_add(req.batch_size as u64, Ordering::Relaxed);
    cache.publish(sprites, backgrounds);

    let (images, labels) = composed.into_iter().map(|c| (c.image, c.label)).unzip();
    Ok(Batch {
        mode: Mode::MultiInstance,
        side: req.side,
        images,
        labels: Labels::Multi(labels),
    })
}

/// Dispatch on `req.mode`.
pub fn next_batch(spec: &DatasetSpec, cache: &RenderCache, req: &BatchRequest) -> Result<Batch> {
    match req.mode {
        Mode::Multiclass => next_batch_multiclass(spec, cache, req),
        Mode::MultiInstance => next_batch_multiinstance(spec, cache, req),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::SamplingConfig;

    fn spec(classes: usize) -> DatasetSpec {
        let mut s = DatasetSpec::sample(classes, 1, SamplingConfig::default(), 5).unwrap();
        s.render.iterations = 4_000;
        s.stream.sprite_side = 16;
        s.stream.cache_capacity = 12;
        s.stream.background_capacity = 4;
        s
    }

    fn sprite(class_id: u32) -> Arc<Sprite> {
        Arc::new(Sprite {
            class_id,
            image: crate::render::GrayImage::zeros(8),
        })
    }

    #[test]
    fn publish_evicts_oldest_first() {
        let cache = RenderCache::new(3, 1).unwrap();
        cache.publish((0..2).map(sprite).collect(), vec![]);
        cache.publish((2..5).map(sprite).collect(), vec![Arc::new(RgbImage::black(8))]);
        let snap = cache.snapshot();
        let ids: Vec<u32> = snap.sprites().iter().map(|s| s.class_id).collect();
        assert_eq!(ids, vec![2, 3, 4]);
        assert_eq!(snap.generation(), 2);
        assert_eq!(snap.classes().len(), 3);
    }

    #[test]
    fn held_snapshot_survives_publication() {
        let cache = RenderCache::new(2, 1).unwrap();
        cache.publish(vec![sprite(1), sprite(2)], vec![]);
        let held = cache.snapshot();
        cache.publish(vec![sprite(3), sprite(4)], vec![]);
        assert_eq!(held.sprites()[0].class_id, 1);
        assert_eq!(cache.snapshot().sprites()[0].class_id, 3);
    }

    #[test]
    fn class_index_groups_positions() {
        let snap = CacheSnapshot::new(0, vec![sprite(4), sprite(1), sprite(4)], vec![]);
        assert_eq!(snap.classes(), &[(1, vec![1]), (4, vec![0, 2])]);
    }

    #[test]
    fn refresh_schedule() {
        assert_eq!(refresh_ordinals(0, 10, 2), vec![0, 1, 2, 3, 4]);
        assert_eq!(refresh_ordinals(1, 4, 2), vec![0, 1]);
        assert_eq!(refresh_ordinals(3, 3, 2), vec![1, 2]);
        assert_eq!(refresh_ordinals(0, 3, 1), vec![0, 1, 2]);
    }

    #[test]
    fn warm_covers_classes_and_is_idempotent() {
        let s = spec(20);
        let cache = RenderCache::from_config(&s.stream).unwrap();
        let req = BatchRequest {
            mode: Mode::MultiInstance,
            batch_size: 4,
            side: 24,
            cursor: 0,
        };
        warm_cache(&s, &cache, &req).unwrap();
        let snap = cache.snapshot();
        assert_eq!(snap.len(), 12);
        assert_eq!(snap.classes().len(), 12);
        assert_eq!(snap.backgrounds().len(), 4);
        assert!(snap.sprites().iter().all(|sp| sp.image.side == 16));
        warm_cache(&s, &cache, &req).unwrap();
        assert!(Arc::ptr_eq(&snap, &cache.snapshot()));
    }

    #[test]
    fn cold_cache_is_not_ready() {
        let s = spec(6);
        let cache = RenderCache::from_config(&s.stream).unwrap();
        let req = BatchRequest {
            mode: Mode::Multiclass,
            batch_size: 4,
            side: 16,
            cursor: 0,
        };
        assert!(matches!(next_batch(&s, &cache, &req), Err(Error::NotReady(_))));
        let multi = BatchRequest {
            mode: Mode::MultiInstance,
            ..req
        };
        assert!(matches!(next_batch(&s, &cache, &multi), Err(Error::NotReady(_))));
        let odd = BatchRequest { batch_size: 3, ..req };
        assert!(matches!(next_batch(&s, &cache, &odd), Err(Error::Domain(_))));
    }

    #[test]
    fn multiclass_replaces_oldest_half() {
        let s = spec(6);
        let cache = RenderCache::from_config(&s.stream).unwrap();
        let req = BatchRequest {
            mode: Mode::Multiclass,
            batch_size: 8,
            side: 16,
            cursor: 0,
        };
        warm_cache(&s, &cache, &req).unwrap();
        let before = cache.snapshot();
        let batch = next_batch(&s, &cache, &req).unwrap();
        assert_eq!(batch.len(), 8);
        assert_eq!(cache.stats().fresh_renders, 4);
        let after = cache.snapshot();
        assert_eq!(after.len(), 12);
        for i in 0..8 {
            assert!(Arc::ptr_eq(&after.sprites()[i], &before.sprites()[i + 4]));
        }
        let Labels::Classes(labels) = &batch.labels else { panic!() };
        for i in 0..4 {
            assert_eq!(labels[i], after.sprites()[8 + i].class_id);
        }
    }

    #[test]
    fn multiinstance_labels_and_refreshes() {
        let s = spec(8);
        let cache = RenderCache::from_config(&s.stream).unwrap();
        let req = BatchRequest {
            mode: Mode::MultiInstance,
            batch_size: 10,
            side: 24,
            cursor: 0,
        };
        warm_cache(&s, &cache, &req).unwrap();
        let batch = next_batch(&s, &cache, &req).unwrap();
        assert_eq!(cache.stats().refreshes, 5);
        let Labels::Multi(labels) = &batch.labels else { panic!() };
        for l in labels {
            assert!((1..=5).contains(&l.count()));
            assert_eq!(l.num_classes(), 8);
        }
    }
}
