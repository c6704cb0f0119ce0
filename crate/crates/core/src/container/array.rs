//! `MSOB` single-array file format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "MSOB"
//!      4     1  version (1)
//!      5     1  dtype code: 1 = float32, 2 = float64, 3 = int64
//!      6     2  reserved, zero
//!      8     8  rows (u64)
//!     16     8  cols (u64)
//!     24     *  payload, rows × cols elements, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::container::ContainerError;
use crate::matrix::Matrix;

pub const MAGIC: [u8; 4] = *b"MSOB";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    F32,
    F64,
    I64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 1,
            DType::F64 => 2,
            DType::I64 => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(DType::F32),
            2 => Some(DType::F64),
            3 => Some(DType::I64),
            _ => None,
        }
    }

    pub fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 | DType::I64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::F32 => "float32",
            DType::F64 => "float64",
            DType::I64 => "int64",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I64(Vec<i64>),
}

impl Payload {
    pub fn dtype(&self) -> DType {
        match self {
            Payload::F32(_) => DType::F32,
            Payload::F64(_) => DType::F64,
            Payload::I64(_) => DType::I64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Payload::F32(v) => v.len(),
            Payload::F64(v) => v.len(),
            Payload::I64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One two-dimensional array as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayBlock {
    rows: u64,
    cols: u64,
    payload: Payload,
}

impl ArrayBlock {
    pub fn new(rows: u64, cols: u64, payload: Payload) -> Result<Self, ContainerError> {
        let expected = rows.checked_mul(cols);
        if expected != Some(payload.len() as u64) {
            return Err(ContainerError::ShapeMismatch {
                context: "array block".into(),
                expected: format!("{rows}x{cols}"),
                actual: format!("{} elements", payload.len()),
            });
        }
        Ok(Self { rows, cols, payload })
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn cols(&self) -> u64 {
        self.cols
    }

    pub fn dtype(&self) -> DType {
        self.payload.dtype()
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn from_f64(m: &Matrix<f64>) -> Self {
        Self { rows: m.rows() as u64, cols: m.cols() as u64, payload: Payload::F64(m.as_slice().to_vec()) }
    }

    pub fn from_f32(m: &Matrix<f32>) -> Self {
        Self { rows: m.rows() as u64, cols: m.cols() as u64, payload: Payload::F32(m.as_slice().to_vec()) }
    }

    /// Column vector of values.
    pub fn column_f64(values: &[f64]) -> Self {
        Self { rows: values.len() as u64, cols: 1, payload: Payload::F64(values.to_vec()) }
    }

    /// Column vector of integer labels.
    pub fn column_i64(values: &[i64]) -> Self {
        Self { rows: values.len() as u64, cols: 1, payload: Payload::I64(values.to_vec()) }
    }

    /// Widen any float payload to a 64-bit matrix. Integer payloads are rejected.
    pub fn to_matrix_f64(&self) -> Result<Matrix<f64>, ContainerError> {
        let data = match &self.payload {
            Payload::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            Payload::F64(v) => v.clone(),
            Payload::I64(_) => {
                return Err(ContainerError::WrongDType { expected: "float32 or float64", actual: DType::I64.name() })
            }
        };
        Matrix::from_vec(self.rows as usize, self.cols as usize, data).map_err(|e| ContainerError::ShapeMismatch {
            context: "array block".into(),
            expected: e.expected,
            actual: e.actual,
        })
    }

    pub fn to_i64_vec(&self) -> Result<Vec<i64>, ContainerError> {
        match &self.payload {
            Payload::I64(v) => Ok(v.clone()),
            other => Err(ContainerError::WrongDType { expected: "int64", actual: other.dtype().name() }),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len() * self.dtype().width());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.dtype().code());
        out.extend_from_slice(&[0, 0]);
        out.extend_from_slice(&self.rows.to_le_bytes());
        out.extend_from_slice(&self.cols.to_le_bytes());
        match &self.payload {
            Payload::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::I64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        if bytes.len() < 4 || bytes[..4] != MAGIC {
            return Err(DecodeError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(DecodeError::TruncatedHeader);
        }
        if bytes[4] != VERSION {
            return Err(DecodeError::UnsupportedVersion(bytes[4]));
        }
        let dtype = DType::from_code(bytes[5]).ok_or(DecodeError::UnknownDType(bytes[5]))?;
        if bytes[6] != 0 || bytes[7] != 0 {
            return Err(DecodeError::ReservedBytes);
        }
        let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let body = &bytes[HEADER_LEN..];
        let expected = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(dtype.width() as u64))
            .ok_or(DecodeError::TruncatedPayload { expected: u64::MAX, actual: body.len() as u64 })?;
        if (body.len() as u64) < expected {
            return Err(DecodeError::TruncatedPayload { expected, actual: body.len() as u64 });
        }
        if (body.len() as u64) > expected {
            return Err(DecodeError::TrailingBytes { expected, actual: body.len() as u64 });
        }
        let w = dtype.width();
        let payload = match dtype {
            DType::F32 => {
                Payload::F32(body.chunks_exact(w).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
            }
            DType::F64 => {
                Payload::F64(body.chunks_exact(w).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
            }
            DType::I64 => {
                Payload::I64(body.chunks_exact(w).map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect())
            }
        };
        Ok(Self { rows, cols, payload })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("bad magic (expected \"MSOB\")")]
    BadMagic,
    #[error("truncated header")]
    TruncatedHeader,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown dtype code {0}")]
    UnknownDType(u8),
    #[error("reserved header bytes are not zero")]
    ReservedBytes,
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: u64, actual: u64 },
    #[error("trailing bytes: expected {expected} payload bytes, found {actual}")]
    TrailingBytes { expected: u64, actual: u64 },
}

pub fn write_array(block: &ArrayBlock, path: &Path) -> Result<(), ContainerError> {
    fs::write(path, block.encode()).map_err(|source| ContainerError::Io { path: path.to_path_buf(), source })
}

pub fn read_array(path: &Path) -> Result<ArrayBlock, ContainerError> {
    let bytes = fs::read(path).map_err(|source| ContainerError::Io { path: path.to_path_buf(), source })?;
    ArrayBlock::decode(&bytes).map_err(|kind| ContainerError::Decode { path: path.to_path_buf(), kind })
}
