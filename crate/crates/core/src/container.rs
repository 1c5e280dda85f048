//! Self-describing binary container for networks, checkpoints and datasets.
//!
//! Byte layout (all integers little-endian):
//!
//! | offset | size | content                                   |
//! |--------|------|-------------------------------------------|
//! | 0      | 4    | magic `PRLB`                              |
//! | 4      | 4    | format version (`u32`, currently 1)       |
//! | 8      | 8    | header length `L` in bytes (`u64`)        |
//! | 16     | L    | UTF-8 JSON header                         |
//! | 16+L   | ...  | array payloads, in header order           |
//!
//! The header is `{"kind": .., "meta": {..}, "arrays": [{"name", "dtype", "shape"}]}`.
//! `dtype` is `"f64"` (IEEE-754 little-endian) or `"u8"`. Every array is stored
//! row-major with `product(shape)` elements and no padding.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PRLB";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F64,
    U8,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F64(Vec<f64>),
    U8(Vec<u8>),
}

impl ArrayData {
    fn len(&self) -> usize {
        match self {
            ArrayData::F64(v) => v.len(),
            ArrayData::U8(v) => v.len(),
        }
    }

    fn dtype(&self) -> DType {
        match self {
            ArrayData::F64(_) => DType::F64,
            ArrayData::U8(_) => DType::U8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArrayHeader {
    name: String,
    dtype: DType,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    arrays: Vec<ArrayHeader>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    pub arrays: Vec<NamedArray>,
}

impl Container {
    pub fn new(kind: &str, meta: serde_json::Value) -> Self {
        Container { kind: kind.to_string(), meta, arrays: Vec::new() }
    }

    pub fn push(&mut self, name: &str, shape: &[usize], data: ArrayData) {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "array `{name}` shape/data mismatch");
        self.arrays.push(NamedArray { name: name.to_string(), shape: shape.to_vec(), data });
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|a| ArrayHeader { name: a.name.clone(), dtype: a.data.dtype(), shape: a.shape.clone() })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for a in &self.arrays {
            match &a.data {
                ArrayData::F64(v) => {
                    for x in v {
                        w.write_all(&x.to_le_bytes())?;
                    }
                }
                ArrayData::U8(v) => w.write_all(v)?,
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R, origin: &str) -> Result<Self> {
        let bad = |message: String| Error::Format { path: origin.to_string(), message };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad(format!("bad magic {magic:?}")));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)?;

        let mut arrays = Vec::with_capacity(header.arrays.len());
        for h in header.arrays {
            let count: usize = h.shape.iter().product();
            let data = match h.dtype {
                DType::F64 => {
                    let mut bytes = vec![0u8; count * 8];
                    r.read_exact(&mut bytes)?;
                    ArrayData::F64(
                        bytes
                            .chunks_exact(8)
                            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                            .collect(),
                    )
                }
                DType::U8 => {
                    let mut bytes = vec![0u8; count];
                    r.read_exact(&mut bytes)?;
                    ArrayData::U8(bytes)
                }
            };
            arrays.push(NamedArray { name: h.name, shape: h.shape, data });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(bad("trailing bytes after last array".into()));
        }
        Ok(Container { kind: header.kind, meta: header.meta, arrays })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?), &path.display().to_string())
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(self.format_error(format!("expected a `{kind}` container, found `{}`", self.kind)));
        }
        Ok(())
    }

    pub fn f64_array(&self, name: &str) -> Result<(&[usize], &[f64])> {
        match self.arrays.iter().find(|a| a.name == name) {
            Some(NamedArray { shape, data: ArrayData::F64(v), .. }) => Ok((shape, v)),
            Some(_) => Err(self.format_error(format!("array `{name}` is not f64"))),
            None => Err(self.format_error(format!("missing array `{name}`"))),
        }
    }

    pub fn u8_array(&self, name: &str) -> Result<(&[usize], &[u8])> {
        match self.arrays.iter().find(|a| a.name == name) {
            Some(NamedArray { shape, data: ArrayData::U8(v), .. }) => Ok((shape, v)),
            Some(_) => Err(self.format_error(format!("array `{name}` is not u8"))),
            None => Err(self.format_error(format!("missing array `{name}`"))),
        }
    }

    pub(crate) fn format_error(&self, message: String) -> Error {
        Error::Format { path: format!("<{} container>", self.kind), message }
    }
}
