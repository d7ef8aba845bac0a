use std::fs;
use std::io::{self, BufWriter, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use ifsgen::codec::{decode_codes, encode_codes, load_dataset, manifest_for, write_png, DatasetSpec, Decoded};
use ifsgen::render::{render_binary, render_single};
use ifsgen::rng::{domain, Stream};
use ifsgen::sampler::{SamplingConfig, SystemSizes};
use ifsgen::stream::{next_batch, warm_cache, write_batch, BatchRequest, Mode, RenderCache};
use ifsgen::validate::{
    bench_pipeline, fraction_in_good_range, histograms_to_csv, naive_sampling_study, sigma_factor_histogram,
    sigma_factors, BenchConfig, FactorSource,
};

use crate::{BenchArgs, FactorOrigin, RenderArgs, RenderOptions, SampleArgs, StreamArgs, StreamMode, Study, ValidateArgs};

fn manifest_path(codes: &Path) -> PathBuf {
    codes.with_extension("json")
}

fn load(codes: &Path, manifest: Option<&Path>) -> Result<DatasetSpec> {
    let bytes = fs::read(codes).with_context(|| format!("reading {}", codes.display()))?;
    let Decoded { spec, warnings } = match manifest {
        Some(m) => {
            let text = fs::read_to_string(m).with_context(|| format!("reading {}", m.display()))?;
            load_dataset(&bytes, &text).with_context(|| format!("loading {} with {}", codes.display(), m.display()))?
        }
        None => decode_codes(&bytes).with_context(|| format!("decoding {}", codes.display()))?,
    };
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(spec)
}

fn apply_render_options(spec: &mut DatasetSpec, opts: &RenderOptions) -> Result<()> {
    if let Some(side) = opts.side {
        spec.render.side = side;
    }
    if let Some(k) = opts.iterations {
        spec.render.iterations = k;
    }
    spec.render.validate()?;
    Ok(())
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => io::stdout().write_all(text.as_bytes()).context("writing to stdout"),
    }
}

pub fn sample(seed: u64, args: SampleArgs) -> Result<()> {
    let sampling = SamplingConfig {
        system_sizes: SystemSizes::new(args.sizes)?,
        augmentations: args.augment,
        augment_gamma: (args.augment_gamma[0], args.augment_gamma[1]),
        ..SamplingConfig::default()
    };
    let start = Instant::now();
    let spec = DatasetSpec::sample(args.classes, args.codes_per_class, sampling, seed)?;
    let codes = encode_codes(&spec)?;
    fs::write(&args.out, &codes).with_context(|| format!("writing {}", args.out.display()))?;
    let manifest = args.manifest.unwrap_or_else(|| manifest_path(&args.out));
    let text = serde_json::to_string_pretty(&manifest_for(&spec, &codes))?;
    fs::write(&manifest, text).with_context(|| format!("writing {}", manifest.display()))?;
    log::info!(
        "{} codes in {} classes, {} bytes ({:.1} B/code) in {:.2?}",
        spec.total_codes(),
        spec.num_classes(),
        codes.len(),
        codes.len() as f64 / spec.total_codes() as f64,
        start.elapsed()
    );
    Ok(())
}

pub fn render(seed: u64, args: RenderArgs) -> Result<()> {
    let mut spec = load(&args.codes, args.render.manifest.as_deref())?;
    apply_render_options(&mut spec, &args.render)?;
    let Some((_, code)) = spec.code_at(args.index) else {
        bail!(
            "domain error: index {} out of range for {} codes",
            args.index,
            spec.total_codes()
        );
    };
    let mut cfg = spec.render.clone();
    cfg.background &= !args.no_background;
    let mut rng = Stream::derive(seed, domain::RENDER, args.index as u64);
    let image = if args.grayscale {
        render_binary(code, &cfg, &mut rng)?.to_rgb()
    } else {
        render_single(code, &cfg, &mut rng)?
    };
    write_png(&image, &args.out)?;
    Ok(())
}

fn open_sink(out: &str) -> Result<Box<dyn Write>> {
    Ok(if out == "-" {
        Box::new(BufWriter::new(io::stdout().lock()))
    } else if let Some(addr) = out.strip_prefix("tcp:") {
        Box::new(BufWriter::new(TcpStream::connect(addr).with_context(|| format!("connecting to {addr}"))?))
    } else {
        Box::new(BufWriter::new(fs::File::create(out).with_context(|| format!("creating {out}"))?))
    })
}

pub fn stream(seed: u64, args: StreamArgs) -> Result<()> {
    let mut spec = load(&args.codes, args.render.manifest.as_deref())?;
    spec.seed = seed;
    apply_render_options(&mut spec, &args.render)?;
    let s = &mut spec.stream;
    s.cache_capacity = args.cache_capacity.unwrap_or(s.cache_capacity);
    s.background_capacity = args.background_capacity.unwrap_or(s.background_capacity);
    s.sprite_side = args.sprite_side.unwrap_or(s.sprite_side);
    s.n_max = args.n_max.unwrap_or(s.n_max);
    s.refresh_every = args.refresh_every.unwrap_or(s.refresh_every);
    s.validate()?;

    let mode = match args.mode {
        StreamMode::Multiclass => Mode::Multiclass,
        StreamMode::MultiInstance => Mode::MultiInstance,
    };
    let mut req = BatchRequest {
        mode,
        batch_size: args.batch,
        side: spec.render.side,
        cursor: 0,
    };
    let cache = RenderCache::from_config(&spec.stream)?;
    let warm = Instant::now();
    warm_cache(&spec, &cache, &req)?;
    log::info!("cache warmed in {:.2?}", warm.elapsed());

    let mut sink = open_sink(&args.out)?;
    let start = Instant::now();
    for written in 0..args.count {
        let sent = next_batch(&spec, &cache, &req)
            .map_err(anyhow::Error::from)
            .and_then(|batch| Ok(write_batch(&mut sink, &batch, spec.num_classes())?));
        if let Err(e) = sent {
            log::warn!("stream stopped after {written} complete batches; output is partial");
            return Err(e);
        }
        req = req.next();
    }
    sink.flush().context("flushing the sink")?;
    let secs = start.elapsed().as_secs_f64();
    let images = args.count * args.batch;
    let stats = cache.stats();
    eprintln!(
        "throughput images={images} seconds={secs:.6} images_per_sec={:.1} fresh_renders={} refreshes={}",
        images as f64 / secs,
        stats.fresh_renders,
        stats.refreshes
    );
    Ok(())
}

pub fn validate(seed: u64, args: ValidateArgs) -> Result<()> {
    if args.n_min < 2 || args.n_min > args.n_max {
        bail!("domain error: need 2 <= n-min <= n-max");
    }
    let csv = match args.study {
        Study::Naive => naive_sampling_study(args.n_min..=args.n_max, args.trials, seed)?.to_csv()?,
        Study::SigmaFactor => match args.source {
            FactorOrigin::File => {
                let Some(path) = args.codes.as_deref() else {
                    bail!("--source file needs --codes");
                };
                let spec = load(path, None)?;
                let codes: Vec<_> = spec.classes().iter().flatten().cloned().collect();
                let h = sigma_factor_histogram(FactorSource::Codes(&codes), args.bins, seed)?;
                histograms_to_csv(&[(None, h)])?
            }
            origin => {
                let mut entries = Vec::new();
                for n in args.n_min..=args.n_max {
                    let source = match origin {
                        FactorOrigin::Sampled => FactorSource::Sampled { n, count: args.trials },
                        _ => FactorSource::Naive { n, count: args.trials },
                    };
                    let values = sigma_factors(source, seed)?;
                    log::info!("N={n}: {:.4} of σ-factors in the good range", fraction_in_good_range(&values, n));
                    entries.push((Some(n), sigma_factor_histogram(source, args.bins, seed)?));
                }
                histograms_to_csv(&entries)?
            }
        },
    };
    write_output(args.out.as_deref(), &csv)
}

pub fn bench(seed: u64, args: BenchArgs) -> Result<()> {
    let cfg = BenchConfig {
        reps: args.reps,
        warmup: args.warmup,
        side: args.side,
        iterations: args.iterations,
        n_range: 2..=8,
        seed,
    };
    log::info!(
        "benchmarking on {} ({} logical cores), one thread",
        cpu_model(),
        std::thread::available_parallelism().map_or(1, |n| n.get())
    );
    let report = bench_pipeline(&cfg)?;
    write_output(args.out.as_deref(), &report.to_csv()?)
}

fn cpu_model() -> String {
    fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown CPU".into())
}
