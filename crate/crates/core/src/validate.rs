//! Monte Carlo studies of the samplers and stage timings of the renderer.

use std::hint::black_box;
use std::ops::RangeInclusive;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::chaos::{iterate_bounded, Jitter, DEFAULT_JITTER_SCALE, DEFAULT_PAD_FRACTION};
use crate::ifs::{average_contractivity_of, determinant_probabilities, IfsCode};
use crate::render::{
    colorize, composite, normalize_density, rasterize, render_background, ColorParams, Patch3x3, RasterMode,
    RenderConfig,
};
use crate::rng::{domain, Stream};
use crate::sampler::{good_sigma_range, naive_sample_system, sample_svs, sample_system};
use crate::{Error, Result};

pub const MIN_STUDY_TRIALS: usize = 10_000;

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::Format(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub n: usize,
    pub trials: usize,
    /// Fraction of systems with at least one map whose largest singular
    /// value exceeds 1.
    pub frac_sigma_max_gt_1: f64,
    /// Fraction violating `Π s_i^{p_i} < 1` with `p_i ∝ |det A_i|`.
    pub frac_avg_contractivity_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
}

impl StudyReport {
    pub fn to_csv(&self) -> Result<String> {
        to_csv(&self.rows)
    }
}

/// Draw `trials` naive systems (entries `U(−1, 1)`) per `N` and count how
/// many fail to be contractive. Each `N` uses its own sub-stream.
pub fn naive_sampling_study(n_range: RangeInclusive<usize>, trials: usize, seed: u64) -> Result<StudyReport> {
    if trials < MIN_STUDY_TRIALS {
        return Err(Error::Domain(format!("a study needs at least {MIN_STUDY_TRIALS} trials, got {trials}")));
    }
    if *n_range.start() < 2 {
        return Err(Error::Domain("systems need at least 2 maps".into()));
    }
    let rows = n_range
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|n| {
            let mut rng = Stream::derive(seed, domain::STUDY, n as u64);
            let (mut expanding, mut violating) = (0usize, 0usize);
            for _ in 0..trials {
                let maps = naive_sample_system(n, &mut rng)?;
                if maps.iter().any(|m| m.sigma_max() > 1.0) {
                    expanding += 1;
                }
                let probs = determinant_probabilities(&maps);
                if average_contractivity_of(&maps, &probs) >= 1.0 {
                    violating += 1;
                }
            }
            Ok(StudyRow {
                n,
                trials,
                frac_sigma_max_gt_1: expanding as f64 / trials as f64,
                frac_avg_contractivity_violation: violating as f64 / trials as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StudyReport { rows })
}

/// Where σ-factors come from.
#[derive(Debug, Clone, Copy)]
pub enum FactorSource<'a> {
    /// The contractive sampler at a fixed `N`.
    Sampled { n: usize, count: usize },
    /// Naive `U(−1, 1)` entries at a fixed `N`.
    Naive { n: usize, count: usize },
    /// Existing codes, e.g. from a codes file.
    Codes(&'a [IfsCode]),
}

pub fn sigma_factors(source: FactorSource<'_>, seed: u64) -> Result<Vec<f64>> {
    match source {
        FactorSource::Sampled { n, count } => {
            let mut rng = Stream::derive(seed, domain::HISTOGRAM, n as u64);
            (0..count)
                .map(|_| sample_system(n, 1.0, &mut rng).map(|c| c.sigma_factor()))
                .collect()
        }
        FactorSource::Naive { n, count } => {
            let mut rng = Stream::derive(seed, domain::HISTOGRAM, (1 << 32) | n as u64);
            (0..count)
                .map(|_| {
                    let maps = naive_sample_system(n, &mut rng)?;
                    Ok(crate::ifs::sigma_factor(&IfsCode::with_determinant_probs(maps)?))
                })
                .collect()
        }
        FactorSource::Codes(codes) => Ok(codes.iter().map(IfsCode::sigma_factor).collect()),
    }
}

/// Fixed-width histogram over `[lo, hi)`; the last bin also takes `hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub below: u64,
    pub above: u64,
    pub min: f64,
    pub max: f64,
}

#[derive(Serialize)]
struct HistogramRow {
    n: Option<usize>,
    bin_lo: f64,
    bin_hi: f64,
    count: u64,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize, range: (f64, f64)) -> Result<Self> {
        let (lo, hi) = range;
        if bins == 0 || !(lo < hi) {
            return Err(Error::Domain(format!("bad histogram: {bins} bins over {range:?}")));
        }
        let mut h = Histogram {
            lo,
            hi,
            counts: vec![0; bins],
            below: 0,
            above: 0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        };
        let width = (hi - lo) / bins as f64;
        for &v in values {
            h.min = h.min.min(v);
            h.max = h.max.max(v);
            if v < lo {
                h.below += 1;
            } else if v > hi {
                h.above += 1;
            } else {
                h.counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
            }
        }
        Ok(h)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.below + self.above
    }

    pub fn to_csv(&self) -> Result<String> {
        histograms_to_csv(&[(None, self.clone())])
    }
}

/// Several histograms in one table, each bin tagged with its system size.
pub fn histograms_to_csv(entries: &[(Option<usize>, Histogram)]) -> Result<String> {
    let mut rows = Vec::new();
    for (n, h) in entries {
        let width = (h.hi - h.lo) / h.counts.len() as f64;
        rows.extend(h.counts.iter().enumerate().map(|(i, &count)| HistogramRow {
            n: *n,
            bin_lo: h.lo + i as f64 * width,
            bin_hi: h.lo + (i + 1) as f64 * width,
            count,
        }));
    }
    to_csv(&rows)
}

/// Histogram of σ-factors. Fixed-`N` sources span `[0, 3N]`; a codes
/// source spans the observed range.
pub fn sigma_factor_histogram(source: FactorSource<'_>, bins: usize, seed: u64) -> Result<Histogram> {
    let values = sigma_factors(source, seed)?;
    let range = match source {
        FactorSource::Sampled { n, .. } | FactorSource::Naive { n, .. } => (0.0, 3.0 * n as f64),
        FactorSource::Codes(_) => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if values.is_empty() {
                return Err(Error::Domain("no codes to histogram".into()));
            }
            if lo < hi {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        }
    };
    Histogram::new(&values, bins, range)
}

/// Fraction of `values` inside the good σ-factor range for `N`.
pub fn fraction_in_good_range(values: &[f64], n: usize) -> f64 {
    let (lo, hi) = good_sigma_range(n);
    let tol = 1e-9;
    values.iter().filter(|&&v| v >= lo - tol && v <= hi + tol).count() as f64 / values.len().max(1) as f64
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub reps: usize,
    pub warmup: usize,
    pub side: usize,
    pub iterations: usize,
    pub n_range: RangeInclusive<usize>,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            reps: 1000,
            warmup: 50,
            side: 256,
            iterations: 100_000,
            n_range: 2..=8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub stage: String,
    /// System size for sampling stages, empty otherwise.
    pub n: Option<usize>,
    pub unit: &'static str,
    pub mean: f64,
    pub std: f64,
    pub reps: usize,
    /// Published timing of the same stage, where one exists.
    pub reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_csv(&self) -> Result<String> {
        to_csv(&self.rows)
    }

    pub fn find(&self, stage: &str, n: Option<usize>) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.stage == stage && r.n == n)
    }
}

const SAMPLE_SVS_REFERENCE_US: [f64; 7] = [11.7, 17.3, 22.4, 28.2, 33.1, 38.3, 43.3];
const SAMPLE_SYSTEM_REFERENCE_US: [f64; 7] = [42.8, 49.2, 55.4, 60.5, 67.0, 72.7, 80.7];

/// Run `f` `warmup + reps` times on the current thread and keep the last
/// `reps` wall times, in seconds.
fn time_reps<T>(warmup: usize, reps: usize, mut f: impl FnMut(usize) -> Result<T>) -> Result<Vec<f64>> {
    for i in 0..warmup {
        black_box(f(i)?);
    }
    let mut out = Vec::with_capacity(reps);
    for i in 0..reps {
        let start = Instant::now();
        black_box(f(warmup + i)?);
        out.push(start.elapsed().as_secs_f64());
    }
    Ok(out)
}

fn summarize(stage: &str, n: Option<usize>, unit: &'static str, secs: &[f64], reference: Option<f64>) -> BenchRow {
    let scale = match unit {
        "us" => 1e6,
        "ms" => 1e3,
        _ => 1e9,
    };
    let k = secs.len() as f64;
    let mean = secs.iter().sum::<f64>() / k;
    let var = secs.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
    BenchRow {
        stage: stage.into(),
        n,
        unit,
        mean: mean * scale,
        std: var.sqrt() * scale,
        reps: secs.len(),
        reference,
    }
}

/// Time each stage on the calling thread. Stage names follow the published
/// tables (`sample-svs`, `sample-system`, `iterate`, `render`, `colorize`,
/// `background`), plus `composite`, the whole single-image `pipeline`, and
/// a `noop` stage that measures harness overhead.
pub fn bench_pipeline(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.reps < 2 {
        return Err(Error::Domain("benchmarks need at least 2 repetitions".into()));
    }
    let mut rng = Stream::derive(cfg.seed, domain::BENCH, 0);
    let mut rows = Vec::new();

    rows.push(summarize("noop", None, "ns", &time_reps(cfg.warmup, cfg.reps, Ok)?, None));

    for n in cfg.n_range.clone() {
        let reference = |table: &[f64; 7]| table.get(n.wrapping_sub(2)).copied();
        let (lo, hi) = good_sigma_range(n);
        let secs = time_reps(cfg.warmup, cfg.reps, |_| {
            let alpha = rng.uniform(lo, hi);
            sample_svs(n, alpha, &mut rng)
        })?;
        rows.push(summarize("sample-svs", Some(n), "us", &secs, reference(&SAMPLE_SVS_REFERENCE_US)));
        let secs = time_reps(cfg.warmup, cfg.reps, |_| sample_system(n, 1.0, &mut rng))?;
        rows.push(summarize("sample-system", Some(n), "us", &secs, reference(&SAMPLE_SYSTEM_REFERENCE_US)));
    }

    let render_cfg = RenderConfig {
        side: cfg.side,
        iterations: cfg.iterations,
        ..RenderConfig::default()
    };
    render_cfg.validate()?;
    let codes: Vec<IfsCode> = (0..16)
        .map(|_| {
            let n = 2 + rng.index(3);
            sample_system(n, 1.0, &mut rng)
        })
        .collect::<Result<_>>()?;
    let code = |i: usize| &codes[i % codes.len()];

    let secs = time_reps(cfg.warmup, cfg.reps, |i| {
        iterate_bounded(code(i), cfg.iterations, render_cfg.burn_in, [0.0, 0.0], &mut rng)
    })?;
    rows.push(summarize("iterate", None, "ms", &secs, (cfg.iterations == 100_000).then_some(4.39)));

    let points: Vec<_> = codes
        .iter()
        .map(|c| iterate_bounded(c, cfg.iterations, render_cfg.burn_in, [0.0, 0.0], &mut rng))
        .collect::<Result<_>>()?;
    let published = |ms: f64| (cfg.side == 256).then_some(ms);
    let secs = time_reps(cfg.warmup, cfg.reps, |i| {
        let (pts, tight) = &points[i % points.len()];
        let region = Jitter::sample(DEFAULT_JITTER_SCALE, &mut rng).apply(&tight.padded(DEFAULT_PAD_FRACTION));
        let patch = Patch3x3::sample(&mut rng);
        rasterize(pts, &region, cfg.side, Some(patch), RasterMode::Density).map(|g| normalize_density(&g))
    })?;
    rows.push(summarize("render", None, "ms", &secs, published(1.46)));

    let sprites: Vec<_> = points
        .iter()
        .map(|(pts, tight)| {
            let region = tight.padded(DEFAULT_PAD_FRACTION);
            rasterize(pts, &region, cfg.side, Some(Patch3x3::FULL), RasterMode::Density).map(|g| normalize_density(&g))
        })
        .collect::<Result<_>>()?;
    let secs = time_reps(cfg.warmup, cfg.reps, |i| {
        let params = ColorParams::sample(render_cfg.saturation, render_cfg.value, &mut rng);
        Ok(colorize(&sprites[i % sprites.len()], &params))
    })?;
    rows.push(summarize("colorize", None, "ms", &secs, published(0.23)));

    let secs = time_reps(cfg.warmup, cfg.reps, |_| {
        render_background(
            cfg.side,
            render_cfg.background_roughness,
            render_cfg.saturation,
            render_cfg.value,
            &mut rng,
        )
    })?;
    rows.push(summarize("background", None, "ms", &secs, published(0.77)));

    let (fg, mask) = colorize(&sprites[0], &ColorParams::sample(render_cfg.saturation, render_cfg.value, &mut rng));
    let bg = render_background(
        cfg.side,
        render_cfg.background_roughness,
        render_cfg.saturation,
        render_cfg.value,
        &mut rng,
    )?;
    let secs = time_reps(cfg.warmup, cfg.reps, |_| composite(&fg, &mask, &bg))?;
    rows.push(summarize("composite", None, "ms", &secs, None));

    // Iterate + render + colorize + background + composite, without the
    // orientation and blur steps of the training pipeline.
    let secs = time_reps(cfg.warmup, cfg.reps, |i| single_image(code(i), &render_cfg, &mut rng))?;
    rows.push(summarize(
        "pipeline",
        None,
        "ms",
        &secs,
        (cfg.side == 256 && cfg.iterations == 100_000).then_some(4.39 + 1.46 + 0.23 + 0.77),
    ));

    Ok(BenchReport { rows })
}

/// Iterate, rasterize with a patch, colorize, render a background and
/// composite: the stage sum of the published timing table.
pub fn single_image(code: &IfsCode, cfg: &RenderConfig, rng: &mut Stream) -> Result<crate::render::RgbImage> {
    let sprite = crate::render::render_sprite(code, cfg, cfg.side, rng)?;
    let params = ColorParams::sample(cfg.saturation, cfg.value, rng);
    let (fg, mask) = colorize(&sprite, &params);
    let bg = render_background(cfg.side, cfg.background_roughness, cfg.saturation, cfg.value, rng)?;
    composite(&fg, &mask, &bg)
}
