//! The `FBAT` batch wire format.
//!
//! ```text
//! "FBAT" | u32 version | u32 batch | u32 side | u8 channels = 3 | u8 mode | u16 reserved = 0
//! batch × side × side × 3 bytes of HWC pixels
//! labels: mode 0 → batch × u32 class id; mode 1 → batch × ceil(C / 8) bitset bytes
//! ```
//!
//! Integers are little-endian. The class count `C` is not transmitted; both
//! ends take it from the dataset manifest.

use std::io::{ErrorKind, Read, Write};

use crate::multi::MultiLabel;
use crate::render::RgbImage;
use crate::stream::{Batch, Labels, Mode};
use crate::{Error, Result};

pub const BATCH_MAGIC: [u8; 4] = *b"FBAT";
pub const BATCH_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

pub fn write_batch<W: Write>(sink: &mut W, batch: &Batch, num_classes: usize) -> Result<()> {
    let n = batch.images.len();
    let labels = match &batch.labels {
        Labels::Classes(l) => l.len(),
        Labels::Multi(l) => l.len(),
    };
    if labels != n {
        return Err(Error::InvalidInput(format!("{n} images but {labels} labels")));
    }
    let frame = batch.side * batch.side * 3;
    if let Some(img) = batch.images.iter().find(|i| i.side != batch.side || i.data.len() != frame) {
        return Err(Error::InvalidInput(format!(
            "image of side {} in a batch of side {}",
            img.side, batch.side
        )));
    }
    let to_u32 = |v: usize, what: &str| u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} exceeds u32")));

    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(&BATCH_MAGIC);
    header.extend_from_slice(&BATCH_VERSION.to_le_bytes());
    header.extend_from_slice(&to_u32(n, "batch size")?.to_le_bytes());
    header.extend_from_slice(&to_u32(batch.side, "side")?.to_le_bytes());
    header.push(3);
    header.push(batch.mode.wire_byte());
    header.extend_from_slice(&0u16.to_le_bytes());
    sink.write_all(&header)?;
    for img in &batch.images {
        sink.write_all(&img.data)?;
    }
    match &batch.labels {
        Labels::Classes(ids) => {
            if batch.mode != Mode::Multiclass {
                return Err(Error::InvalidInput("class-id labels in a multi-instance batch".into()));
            }
            let bytes: Vec<u8> = ids.iter().flat_map(|id| id.to_le_bytes()).collect();
            sink.write_all(&bytes)?;
        }
        Labels::Multi(labels) => {
            if batch.mode != Mode::MultiInstance {
                return Err(Error::InvalidInput("multi-hot labels in a multiclass batch".into()));
            }
            for l in labels {
                if l.num_classes() != num_classes {
                    return Err(Error::InvalidInput(format!(
                        "label over {} classes in a {num_classes}-class stream",
                        l.num_classes()
                    )));
                }
                sink.write_all(l.as_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_exact_or_corrupt<R: Read>(source: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    source.read_exact(buf).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            Error::Corrupt(format!("stream ended inside {what}"))
        } else {
            Error::Stream(e)
        }
    })
}

/// Read the next batch. A clean end of stream before a header yields
/// `Ok(None)`.
pub fn read_batch<R: Read>(source: &mut R, num_classes: usize) -> Result<Option<Batch>> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match source.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(Error::Corrupt("stream ended inside a batch header".into())),
            Ok(k) => filled += k,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    if header[..4] != BATCH_MAGIC {
        return Err(Error::Corrupt("missing FBAT magic".into()));
    }
    let word = |at: usize| u32::from_le_bytes(header[at..at + 4].try_into().unwrap());
    let version = word(4);
    if version != BATCH_VERSION {
        return Err(Error::Format(format!("unsupported FBAT version {version}")));
    }
    let n = word(8) as usize;
    let side = word(12) as usize;
    if header[16] != 3 {
        return Err(Error::Format(format!("expected 3 channels, got {}", header[16])));
    }
    let mode = Mode::from_wire_byte(header[17])?;
    if header[18..20] != [0, 0] {
        return Err(Error::Corrupt("nonzero reserved field".into()));
    }

    let frame = side
        .checked_mul(side)
        .and_then(|v| v.checked_mul(3))
        .ok_or_else(|| Error::Corrupt(format!("side {side} overflows")))?;
    let mut images = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let mut data = vec![0u8; frame];
        read_exact_or_corrupt(source, &mut data, "image data")?;
        images.push(RgbImage { side, data });
    }
    let labels = match mode {
        Mode::Multiclass => {
            let mut ids = Vec::with_capacity(n.min(1 << 16));
            for _ in 0..n {
                let mut b = [0u8; 4];
                read_exact_or_corrupt(source, &mut b, "labels")?;
                let id = u32::from_le_bytes(b);
                if id as usize >= num_classes {
                    return Err(Error::Corrupt(format!("class id {id} out of range for {num_classes} classes")));
                }
                ids.push(id);
            }
            Labels::Classes(ids)
        }
        Mode::MultiInstance => {
            let width = num_classes.div_ceil(8);
            let mut labels = Vec::with_capacity(n.min(1 << 16));
            for _ in 0..n {
                let mut b = vec![0u8; width];
                read_exact_or_corrupt(source, &mut b, "labels")?;
                labels.push(MultiLabel::from_bytes(num_classes, &b).map_err(|e| Error::Corrupt(e.to_string()))?);
            }
            Labels::Multi(labels)
        }
    };
    Ok(Some(Batch {
        mode,
        side,
        images,
        labels,
    }))
}
