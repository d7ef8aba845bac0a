use ifsgen::codec::{decode_codes, encode_codes, load_dataset, write_manifest, DatasetSpec};
use ifsgen::render::render_single;
use ifsgen::rng::{domain, Stream};
use ifsgen::sampler::{SamplingConfig, SystemSizes};

fn sampling() -> SamplingConfig {
    SamplingConfig {
        system_sizes: SystemSizes::new(vec![2, 3, 4, 5]).unwrap(),
        augmentations: 1,
        ..SamplingConfig::default()
    }
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn sampling_does_not_depend_on_thread_count() {
    let one = in_pool(1, || DatasetSpec::sample(30, 2, sampling(), 5).unwrap());
    let three = in_pool(3, || DatasetSpec::sample(30, 2, sampling(), 5).unwrap());
    assert_eq!(one, three);
    assert_eq!(encode_codes(&one).unwrap(), encode_codes(&three).unwrap());
    assert_eq!(one.group_sizes(), vec![4; 30]);
}

#[test]
fn stored_codes_render_like_the_originals() {
    let mut spec = DatasetSpec::sample(6, 1, sampling(), 17).unwrap();
    spec.render.side = 64;
    spec.render.iterations = 5_000;
    let manifest = write_manifest(&spec).unwrap();
    let codes = encode_codes(&spec).unwrap();
    let loaded = load_dataset(&codes, &manifest).unwrap();
    assert!(loaded.warnings.is_empty());
    assert_eq!(loaded.spec, spec);
    assert_eq!(write_manifest(&loaded.spec).unwrap(), manifest);

    for index in 0..spec.total_codes() {
        let (_, a) = spec.code_at(index).unwrap();
        let (_, b) = loaded.spec.code_at(index).unwrap();
        let render = |code| render_single(code, &spec.render, &mut Stream::derive(1, domain::RENDER, index as u64)).unwrap();
        assert_eq!(render(a), render(b), "code {index}");
    }
}

#[test]
fn decoding_alone_keeps_codes_but_not_settings() {
    let mut spec = DatasetSpec::sample(3, 1, SamplingConfig::default(), 2).unwrap();
    spec.render.side = 100;
    let decoded = decode_codes(&encode_codes(&spec).unwrap()).unwrap().spec;
    assert_eq!(decoded.classes(), spec.classes());
    assert_ne!(decoded.render, spec.render);
}

#[test]
fn manifest_rejects_foreign_codes() {
    let a = DatasetSpec::sample(3, 1, SamplingConfig::default(), 1).unwrap();
    let b = DatasetSpec::sample(3, 1, SamplingConfig::default(), 2).unwrap();
    let manifest = write_manifest(&a).unwrap();
    assert!(load_dataset(&encode_codes(&b).unwrap(), &manifest).is_err());
}
