//! The `FIFS` codes file.
//!
//! ```text
//! "FIFS" | u16 version | u32 C
//! per class: u16 group size
//!   per code: u8 N | N × (a00 a01 a10 a11 b0 b1) as f32
//! u32 CRC32 of everything before it
//! ```
//!
//! All integers and floats are little-endian.

use std::io::Write;

use crate::codec::DatasetSpec;
use crate::ifs::{AffineMap, IfsCode, CONTRACTIVITY_TOL};
use crate::{Error, Result};

pub const FIFS_MAGIC: [u8; 4] = *b"FIFS";
pub const FIFS_VERSION: u16 = 1;

const HEADER_LEN: usize = 4 + 2 + 4;
const CRC_LEN: usize = 4;

/// Bytes used by one code record with `n` maps.
pub const fn code_record_len(n: usize) -> usize {
    1 + n * 6 * 4
}

/// A stored code that is not contractive at load time.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationWarning {
    pub class: usize,
    pub index: usize,
    pub sigma_max: f64,
}

impl std::fmt::Display for ValidationWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "class {} code {} is not contractive (sigma_max = {})",
            self.class, self.index, self.sigma_max
        )
    }
}

/// Result of decoding: the codes (flagged ones included) and the flags.
#[derive(Debug, Clone)]
pub struct Decoded {
    pub spec: DatasetSpec,
    pub warnings: Vec<ValidationWarning>,
}

/// Incremental encoder, so large collections never sit in memory.
///
/// Call [`begin_class`](Self::begin_class) once per class followed by
/// exactly that many [`write_code`](Self::write_code) calls.
pub struct FifsWriter<W: Write> {
    inner: W,
    crc: crc32fast::Hasher,
    bytes: u64,
    classes_left: u32,
    codes_left: u16,
}

impl<W: Write> FifsWriter<W> {
    pub fn new(inner: W, num_classes: usize) -> Result<Self> {
        let c = u32::try_from(num_classes)
            .map_err(|_| Error::Format(format!("{num_classes} classes exceed the u32 class count")))?;
        let mut w = FifsWriter {
            inner,
            crc: crc32fast::Hasher::new(),
            bytes: 0,
            classes_left: c,
            codes_left: 0,
        };
        w.put(&FIFS_MAGIC)?;
        w.put(&FIFS_VERSION.to_le_bytes())?;
        w.put(&c.to_le_bytes())?;
        Ok(w)
    }

    fn put(&mut self, bytes: &[u8]) -> Result<()> {
        self.crc.update(bytes);
        self.inner.write_all(bytes)?;
        self.bytes += bytes.len() as u64;
        Ok(())
    }

    pub fn begin_class(&mut self, group_size: usize) -> Result<()> {
        if self.codes_left != 0 {
            return Err(Error::Format(format!(
                "previous class still expects {} codes",
                self.codes_left
            )));
        }
        if self.classes_left == 0 {
            return Err(Error::Format("more classes than declared".into()));
        }
        let size = u16::try_from(group_size)
            .map_err(|_| Error::Format(format!("group size {group_size} exceeds u16")))?;
        if size == 0 {
            return Err(Error::Format("empty class group".into()));
        }
        self.put(&size.to_le_bytes())?;
        self.classes_left -= 1;
        self.codes_left = size;
        Ok(())
    }

    pub fn write_code(&mut self, code: &IfsCode) -> Result<()> {
        if self.codes_left == 0 {
            return Err(Error::Format("code written outside a declared class".into()));
        }
        let n = u8::try_from(code.len())
            .map_err(|_| Error::Format(format!("code with {} maps exceeds the u8 map count", code.len())))?;
        let mut record = Vec::with_capacity(code_record_len(code.len()));
        record.push(n);
        for map in code.maps() {
            for v in map.params() {
                record.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        self.put(&record)?;
        self.codes_left -= 1;
        Ok(())
    }

    /// Append the checksum. Returns the sink and the total file length.
    pub fn finish(mut self) -> Result<(W, u64)> {
        if self.classes_left != 0 || self.codes_left != 0 {
            return Err(Error::Format(format!(
                "file ended with {} classes and {} codes still declared",
                self.classes_left, self.codes_left
            )));
        }
        let crc = self.crc.clone().finalize();
        self.inner.write_all(&crc.to_le_bytes())?;
        self.inner.flush()?;
        Ok((self.inner, self.bytes + CRC_LEN as u64))
    }
}

pub fn encode_codes(spec: &DatasetSpec) -> Result<Vec<u8>> {
    let payload: usize = spec
        .classes()
        .iter()
        .map(|g| 2 + g.iter().map(|c| code_record_len(c.len())).sum::<usize>())
        .sum();
    let mut w = FifsWriter::new(Vec::with_capacity(HEADER_LEN + payload + CRC_LEN), spec.num_classes())?;
    for group in spec.classes() {
        w.begin_class(group.len())?;
        for code in group {
            w.write_code(code)?;
        }
    }
    Ok(w.finish()?.0)
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len()).ok_or_else(|| {
            Error::Corrupt(format!("truncated: need {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Decode a codes file. Structural damage is an error; non-contractive
/// codes are kept and listed in [`Decoded::warnings`].
pub fn decode_codes(bytes: &[u8]) -> Result<Decoded> {
    if bytes.len() < 4 || bytes[..4] != FIFS_MAGIC {
        return Err(Error::Corrupt("missing FIFS magic".into()));
    }
    if bytes.len() < HEADER_LEN + CRC_LEN {
        return Err(Error::Corrupt(format!("truncated: {} bytes", bytes.len())));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FIFS_VERSION {
        return Err(Error::Format(format!("unsupported FIFS version {version}")));
    }
    let (body, stored) = bytes.split_at(bytes.len() - CRC_LEN);
    let stored = u32::from_le_bytes(stored.try_into().unwrap());
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::Corrupt(format!(
            "checksum mismatch: stored {stored:08x}, computed {actual:08x}"
        )));
    }

    let mut r = Reader { data: body, pos: 6 };
    let num_classes = r.u32()? as usize;
    // every class needs at least a size field and one minimal record
    if num_classes > body.len() / (2 + code_record_len(2)) {
        return Err(Error::Corrupt(format!("class count {num_classes} does not fit in the file")));
    }
    let mut classes = Vec::with_capacity(num_classes);
    let mut warnings = Vec::new();
    for class in 0..num_classes {
        let size = r.u16()? as usize;
        if size == 0 {
            return Err(Error::Corrupt(format!("class {class} has an empty group")));
        }
        let mut group = Vec::with_capacity(size);
        for index in 0..size {
            let n = r.u8()? as usize;
            if n < 2 {
                return Err(Error::Corrupt(format!("class {class} code {index} has {n} maps")));
            }
            let mut maps = Vec::with_capacity(n);
            for _ in 0..n {
                let mut p = [0f64; 6];
                for v in &mut p {
                    *v = r.f32()? as f64;
                }
                let map = AffineMap::from_params(p);
                if !map.is_finite() {
                    return Err(Error::Corrupt(format!("class {class} code {index} has a non-finite parameter")));
                }
                maps.push(map);
            }
            let code = IfsCode::with_determinant_probs(maps).map_err(|e| Error::Corrupt(e.to_string()))?;
            if !code.is_contractive(CONTRACTIVITY_TOL) {
                let sigma_max = code.maps().iter().map(AffineMap::sigma_max).fold(0.0, f64::max);
                warnings.push(ValidationWarning { class, index, sigma_max });
            }
            group.push(code);
        }
        classes.push(group);
    }
    if r.pos != body.len() {
        return Err(Error::Corrupt(format!("{} trailing bytes", body.len() - r.pos)));
    }
    Ok(Decoded {
        spec: DatasetSpec::from_groups(classes, 0).map_err(|e| Error::Corrupt(e.to_string()))?,
        warnings,
    })
}
