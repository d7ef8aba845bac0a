//! Dataset persistence: the binary `FIFS` codes file, the JSON manifest and
//! PNG output.
//!
//! A dataset is stored as parameters, not images. The codes file holds
//! every map as six `f32` values; probabilities are recomputed from the
//! determinants on load. Together with the manifest (seed plus every
//! configuration knob) it regenerates the dataset exactly.

mod fifs;
mod image_io;
mod manifest;

pub use fifs::{
    code_record_len, decode_codes, encode_codes, Decoded, FifsWriter, ValidationWarning, FIFS_MAGIC, FIFS_VERSION,
};
pub use image_io::{decode_png, encode_png, read_png, write_png};
pub use manifest::{load_dataset, manifest_for, read_manifest, write_manifest, CodesFileInfo, Manifest};

use rayon::prelude::*;

use crate::ifs::{IfsCode, CONTRACTIVITY_TOL};
use crate::render::RenderConfig;
use crate::sampler::{sample_group, SamplingConfig};
use crate::stream::StreamConfig;
use crate::{Error, Result};

/// Classes of IFS codes plus everything needed to render them.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub seed: u64,
    classes: Vec<Vec<IfsCode>>,
    pub render: RenderConfig,
    pub sampling: SamplingConfig,
    pub stream: StreamConfig,
}

impl DatasetSpec {
    /// Codes are rounded to the stored `f32` precision, so the in-memory
    /// spec is exactly what a decoder reads back. Every code must be
    /// contractive.
    pub fn new(classes: Vec<Vec<IfsCode>>, seed: u64) -> Result<Self> {
        let spec = Self::from_groups(
            classes
                .into_iter()
                .map(|g| g.iter().map(IfsCode::rounded_to_f32).collect())
                .collect(),
            seed,
        )?;
        for (c, group) in spec.classes.iter().enumerate() {
            if let Some(i) = group.iter().position(|code| !code.is_contractive(CONTRACTIVITY_TOL)) {
                return Err(Error::InvalidInput(format!("class {c} code {i} is not contractive")));
            }
        }
        Ok(spec)
    }

    pub(crate) fn from_groups(classes: Vec<Vec<IfsCode>>, seed: u64) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::InvalidInput("a dataset needs at least one class".into()));
        }
        if let Some(c) = classes.iter().position(Vec::is_empty) {
            return Err(Error::InvalidInput(format!("class {c} has no codes")));
        }
        Ok(DatasetSpec {
            seed,
            classes,
            render: RenderConfig::default(),
            sampling: SamplingConfig::default(),
            stream: StreamConfig::default(),
        })
    }

    /// Sample `num_classes` groups of `codes_per_class` systems (each
    /// followed by `sampling.augmentations` scaled copies). Groups come from
    /// independent sub-streams and are sampled in parallel.
    pub fn sample(num_classes: usize, codes_per_class: usize, sampling: SamplingConfig, seed: u64) -> Result<Self> {
        if codes_per_class == 0 {
            return Err(Error::InvalidInput("codes per class must be positive".into()));
        }
        let classes = (0..num_classes)
            .into_par_iter()
            .map(|c| sample_group(seed, c, codes_per_class, &sampling))
            .collect::<Result<Vec<_>>>()?;
        let mut spec = Self::new(classes, seed)?;
        spec.sampling = sampling;
        Ok(spec)
    }

    pub fn classes(&self) -> &[Vec<IfsCode>] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.classes.iter().map(Vec::len).collect()
    }

    pub fn total_codes(&self) -> usize {
        self.classes.iter().map(Vec::len).sum()
    }

    /// The code at flat index `index`, counting classes in order.
    pub fn code_at(&self, index: usize) -> Option<(usize, &IfsCode)> {
        let mut rest = index;
        for (c, group) in self.classes.iter().enumerate() {
            if rest < group.len() {
                return Some((c, &group[rest]));
            }
            rest -= group.len();
        }
        None
    }
}
