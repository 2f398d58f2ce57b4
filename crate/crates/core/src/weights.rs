//! Weight tables: seeded initialization and the NBW1 binary format.
//!
//! NBW1 layout, all integers and floats little-endian:
//!
//! ```text
//! "NBW1" | u32 version (=1) | u32 tensor_count
//! per tensor: u16 name_len | name (UTF-8) | u8 ndim | u32 × ndim dims | f32 × numel data
//! ```

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::{weight_manifest, GeneratorConfig, WeightInit};
use crate::rng::DeterministicRng;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"NBW1";
pub const FORMAT_VERSION: u32 = 1;
pub const MAX_NAME_LEN: usize = 255;
const HEADER_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {0:?}, expected \"NBW1\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    BadVersion(u32),
    #[error("file truncated while reading {tensor}")]
    Truncated { tensor: String },
    #[error("duplicate tensor name {0:?}")]
    DuplicateName(String),
    #[error("invalid tensor name {0:?}: must be 1..=255 bytes of UTF-8")]
    InvalidName(String),
    #[error("tensor {tensor} has invalid dims {dims:?}")]
    BadShape { tensor: String, dims: Vec<usize> },
    #[error("{0} unexpected trailing bytes after the last tensor")]
    TrailingBytes(usize),
}

impl WeightsError {
    /// Stable snake_case name of the failure.
    pub fn code(&self) -> &'static str {
        match self {
            WeightsError::Io { .. } => "io",
            WeightsError::BadMagic(_) => "bad_magic",
            WeightsError::BadVersion(_) => "bad_version",
            WeightsError::Truncated { .. } => "truncated",
            WeightsError::DuplicateName(_) => "duplicate_name",
            WeightsError::InvalidName(_) => "invalid_name",
            WeightsError::BadShape { .. } => "bad_shape",
            WeightsError::TrailingBytes(_) => "trailing_bytes",
        }
    }
}

/// Named tensors in insertion order. Names are unique.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightTable {
    entries: Vec<(String, Tensor)>,
}

impl WeightTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<(), WeightsError> {
        let name = name.into();
        if name.is_empty() || name.len() > MAX_NAME_LEN {
            return Err(WeightsError::InvalidName(name));
        }
        if self.get(&name).is_some() {
            return Err(WeightsError::DuplicateName(name));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Equal names, order, shapes and bit patterns.
    pub fn bit_eq(&self, other: &WeightTable) -> bool {
        self.len() == other.len()
            && self
                .iter()
                .zip(other.iter())
                .all(|((na, ta), (nb, tb))| na == nb && ta.bit_eq(tb))
    }

    /// Exact NBW1 size of this table in bytes.
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN
            + self
                .iter()
                .map(|(n, t)| 2 + n.len() + 1 + 4 * t.rank() + 4 * t.numel())
                .sum::<usize>()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for (name, t) in self.iter() {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.rank() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WeightsError> {
        let mut r = Reader { bytes, pos: 0 };
        let header = "<header>";
        let magic: [u8; 4] = r.take(4, header)?.try_into().unwrap();
        if &magic != MAGIC {
            return Err(WeightsError::BadMagic(magic));
        }
        let version = r.u32(header)?;
        if version != FORMAT_VERSION {
            return Err(WeightsError::BadVersion(version));
        }
        let count = r.u32(header)?;

        let mut table = WeightTable::new();
        for index in 0..count {
            let placeholder = format!("<tensor #{index}>");
            let name_len = r.u16(&placeholder)? as usize;
            let raw = r.take(name_len, &placeholder)?;
            let name = std::str::from_utf8(raw)
                .map_err(|_| WeightsError::InvalidName(String::from_utf8_lossy(raw).into_owned()))?
                .to_string();
            let ndim = r.u8(&name)? as usize;
            let dims = (0..ndim)
                .map(|_| r.u32(&name).map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let numel = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|_| (1..=4).contains(&ndim) && !dims.contains(&0))
                .ok_or_else(|| WeightsError::BadShape {
                    tensor: name.clone(),
                    dims: dims.clone(),
                })?;
            let byte_len = numel.checked_mul(4).ok_or_else(|| WeightsError::Truncated {
                tensor: name.clone(),
            })?;
            let data: Vec<f32> = r
                .take(byte_len, &name)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if data.iter().any(|v| !v.is_finite()) {
                log::warn!("tensor {name} contains non-finite values");
            }
            let tensor = Tensor::new(&dims, data).map_err(|_| WeightsError::BadShape {
                tensor: name.clone(),
                dims: dims.clone(),
            })?;
            table.insert(name, tensor)?;
        }
        if r.pos != bytes.len() {
            return Err(WeightsError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), WeightsError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|source| WeightsError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WeightsError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| WeightsError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, tensor: &str) -> Result<&'a [u8], WeightsError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| WeightsError::Truncated {
                tensor: tensor.to_string(),
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, tensor: &str) -> Result<u8, WeightsError> {
        Ok(self.take(1, tensor)?[0])
    }

    fn u16(&mut self, tensor: &str) -> Result<u16, WeightsError> {
        Ok(u16::from_le_bytes(self.take(2, tensor)?.try_into().unwrap()))
    }

    fn u32(&mut self, tensor: &str) -> Result<u32, WeightsError> {
        Ok(u32::from_le_bytes(self.take(4, tensor)?.try_into().unwrap()))
    }
}

/// Seeded He-normal initialization for every tensor the generator needs.
///
/// Tensors are drawn in canonical layer order from a single stream: weights
/// with std `√(2 / fan_in)`, the constant input with std 1, biases zero
/// (biases consume no draws).
pub fn random_init(config: &GeneratorConfig, seed: u64) -> WeightTable {
    let mut rng = DeterministicRng::new(seed);
    let mut table = WeightTable::new();
    for spec in weight_manifest(config) {
        let numel: usize = spec.shape.iter().product();
        let tensor = match spec.init {
            WeightInit::Zeros => Tensor::zeros(&spec.shape).expect("manifest shape"),
            WeightInit::Normal { std } => {
                let draws = rng.normal_vector(numel);
                draws.map(|z| z * std).reshape(&spec.shape).expect("manifest shape")
            }
        };
        table
            .insert(spec.name, tensor)
            .expect("manifest names are unique");
    }
    table
}
