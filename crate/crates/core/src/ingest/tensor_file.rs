//! `.tensor` container: 8-byte magic `ATTENSR\0`, little-endian `u32` header
//! length, a UTF-8 JSON header and a raw little-endian payload.
//!
//! ```text
//! {"format_version":1,"dims":[2,3],"dtype":"f32","order":"row-major"}
//! ```
//!
//! Feature maps additionally carry `"spatial_scale":[sx, sy]`, the number of
//! pixels per feature cell along x and y.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"ATTENSR\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "f32" => Some(DType::F32),
            "f64" => Some(DType::F64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    dims: Vec<usize>,
    dtype: String,
    order: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spatial_scale: Option<[f64; 2]>,
}

/// A decoded tensor file. Values are widened to `f64`; `dtype` records the
/// on-disk width so saving reproduces the original bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub tensor: Tensor,
    pub dtype: DType,
    pub spatial_scale: Option<[f64; 2]>,
}

impl TensorFile {
    pub fn encode(&self) -> Vec<u8> {
        let header = Header {
            format_version: FORMAT_VERSION,
            dims: self.tensor.dims().to_vec(),
            dtype: match self.dtype {
                DType::F32 => "f32".into(),
                DType::F64 => "f64".into(),
            },
            order: "row-major".into(),
            spatial_scale: self.spatial_scale,
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(12 + header.len() + self.tensor.len() * self.dtype.size());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        match self.dtype {
            DType::F32 => {
                for &v in self.tensor.data() {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
            DType::F64 => {
                for &v in self.tensor.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(Error::validation(path, "missing ATTENSR magic"));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header_end = 12usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::validation(path, "header length exceeds file size"))?;
        let header: Header = serde_json::from_slice(&bytes[12..header_end]).map_err(|e| Error::parse(path, &e))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::validation(
                path,
                format!("unsupported format_version {}", header.format_version),
            ));
        }
        if header.order != "row-major" {
            return Err(Error::validation(path, format!("unsupported order {:?}", header.order)));
        }
        let dtype = DType::parse(&header.dtype).ok_or_else(|| Error::UnknownDtype {
            path: path.to_path_buf(),
            dtype: header.dtype.clone(),
        })?;
        if let Some([sx, sy]) = header.spatial_scale {
            if !(sx > 0.0 && sy > 0.0 && sx.is_finite() && sy.is_finite()) {
                return Err(Error::validation(path, "spatial_scale components must be positive"));
            }
        }
        let count = header
            .dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::validation(path, "dims overflow"))?;
        let payload = &bytes[header_end..];
        let expected = count
            .checked_mul(dtype.size())
            .ok_or_else(|| Error::validation(path, "dims overflow"))?;
        if payload.len() != expected {
            return Err(Error::LengthMismatch {
                path: path.to_path_buf(),
                expected,
                actual: payload.len(),
            });
        }
        let data: Vec<f64> = match dtype {
            DType::F32 => payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            DType::F64 => payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        };
        Ok(TensorFile {
            tensor: Tensor::new(header.dims, data)?,
            dtype,
            spatial_scale: header.spatial_scale,
        })
    }
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<TensorFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    TensorFile::decode(&bytes, path)
}

pub fn save_tensor(path: impl AsRef<Path>, file: &TensorFile) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, file.encode()).map_err(|e| Error::io(path, e))
}
