//! The JSON dataset manifest.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::{decode_codes, encode_codes, Decoded, DatasetSpec, FIFS_VERSION};
use crate::render::RenderConfig;
use crate::sampler::SamplingConfig;
use crate::stream::StreamConfig;
use crate::{Error, Result};

pub const MANIFEST_FORMAT: &str = "ifsgen-dataset";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodesFileInfo {
    pub format: String,
    pub version: u16,
    pub bytes: u64,
    pub sha256: String,
}

/// Seed, class structure, every configuration knob and a fingerprint of
/// the codes file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub num_classes: usize,
    pub group_sizes: Vec<usize>,
    pub total_codes: usize,
    pub codes: CodesFileInfo,
    pub render: RenderConfig,
    pub sampling: SamplingConfig,
    pub stream: StreamConfig,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Manifest for `spec` whose encoded codes file is `codes`.
pub fn manifest_for(spec: &DatasetSpec, codes: &[u8]) -> Manifest {
    Manifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        seed: spec.seed,
        num_classes: spec.num_classes(),
        group_sizes: spec.group_sizes(),
        total_codes: spec.total_codes(),
        codes: CodesFileInfo {
            format: "FIFS".into(),
            version: FIFS_VERSION,
            bytes: codes.len() as u64,
            sha256: sha256_hex(codes),
        },
        render: spec.render.clone(),
        sampling: spec.sampling.clone(),
        stream: spec.stream.clone(),
    }
}

pub fn write_manifest(spec: &DatasetSpec) -> Result<String> {
    let codes = encode_codes(spec)?;
    Ok(serde_json::to_string_pretty(&manifest_for(spec, &codes))?)
}

pub fn read_manifest(text: &str) -> Result<Manifest> {
    let m: Manifest = serde_json::from_str(text)?;
    if m.format != MANIFEST_FORMAT {
        return Err(Error::Format(format!("unknown manifest format {:?}", m.format)));
    }
    if m.version != MANIFEST_VERSION {
        return Err(Error::Format(format!("unsupported manifest version {}", m.version)));
    }
    m.render.validate()?;
    Ok(m)
}

/// Rebuild a dataset from its codes file and manifest, checking that they
/// belong together.
pub fn load_dataset(codes: &[u8], manifest_text: &str) -> Result<Decoded> {
    let m = read_manifest(manifest_text)?;
    if m.codes.bytes != codes.len() as u64 || m.codes.sha256 != sha256_hex(codes) {
        return Err(Error::Corrupt("codes file does not match the manifest fingerprint".into()));
    }
    let mut decoded = decode_codes(codes)?;
    if decoded.spec.group_sizes() != m.group_sizes {
        return Err(Error::Corrupt("group sizes differ between manifest and codes file".into()));
    }
    let spec = &mut decoded.spec;
    spec.seed = m.seed;
    spec.render = m.render;
    spec.sampling = m.sampling;
    spec.stream = m.stream;
    Ok(decoded)
}
