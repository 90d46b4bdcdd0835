//! Reading and writing the numpy `.npy` format, version 1.0 only.
//!
//! Supported: little-endian `f4`/`f8`, C order, one or two dimensions. Reads
//! widen `f4` to `f64`; writes always emit `<f8`. Errors carry the byte offset
//! where the file stopped making sense.
//!
//! Format reference: <https://numpy.org/devdocs/reference/generated/numpy.lib.format.html>

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::{FeatureMap, LatentVector, Matrix};

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREAMBLE_LEN: usize = 10;
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F4,
    F8,
}

impl Dtype {
    fn descr(self) -> &'static str {
        match self {
            Dtype::F4 => "<f4",
            Dtype::F8 => "<f8",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F4 => 4,
            Dtype::F8 => 8,
        }
    }
}

/// A dense one- or two-dimensional array.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl NpyArray {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 2 {
            return Err(Error::InvalidShape(format!(
                "only 1-D and 2-D arrays are supported, got shape {shape:?}"
            )));
        }
        if shape.contains(&0) {
            return Err(Error::InvalidShape(format!(
                "every dimension must be >= 1, got shape {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::InvalidShape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(NpyArray { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// One vector for a 1-D array, one per row for a 2-D array.
    pub fn into_vectors(self) -> Result<Vec<LatentVector>> {
        let cols = *self.shape.last().expect("non-empty shape");
        self.data
            .chunks_exact(cols)
            .map(|c| LatentVector::new(c.to_vec()))
            .collect()
    }

    /// 2-D array as a matrix; a 1-D array becomes a single row.
    pub fn into_matrix(self) -> Result<Matrix> {
        let (rows, cols) = match self.shape[..] {
            [n] => (1, n),
            [r, c] => (r, c),
            _ => unreachable!("shape validated on construction"),
        };
        Matrix::new(rows, cols, self.data)
    }

    /// 2-D array with rows as channels.
    pub fn into_feature_map(self) -> Result<FeatureMap> {
        self.into_matrix().map(FeatureMap::from_matrix)
    }
}

impl From<&LatentVector> for NpyArray {
    fn from(v: &LatentVector) -> Self {
        NpyArray {
            shape: vec![v.dim()],
            data: v.as_slice().to_vec(),
        }
    }
}

impl From<&Matrix> for NpyArray {
    fn from(m: &Matrix) -> Self {
        NpyArray {
            shape: vec![m.rows(), m.cols()],
            data: m.as_slice().to_vec(),
        }
    }
}

fn header_dict(dtype: Dtype, shape: &[usize]) -> String {
    let shape = match shape {
        [n] => format!("({n},)"),
        dims => format!(
            "({})",
            dims.iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        dtype.descr(),
        shape
    )
}

/// Serialises `array` as NPY v1.0. The header is space padded and newline
/// terminated so the payload starts on a 64-byte boundary.
pub fn encode(array: &NpyArray, dtype: Dtype) -> Vec<u8> {
    let dict = header_dict(dtype, &array.shape);
    let unpadded = PREAMBLE_LEN + dict.len() + 1;
    let header_len = dict.len() + 1 + (ALIGN - unpadded % ALIGN) % ALIGN;
    let mut out = Vec::with_capacity(PREAMBLE_LEN + header_len + array.data.len() * dtype.size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.resize(PREAMBLE_LEN + header_len - 1, b' ');
    out.push(b'\n');
    match dtype {
        Dtype::F8 => array
            .data
            .iter()
            .for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        Dtype::F4 => array
            .data
            .iter()
            .for_each(|v| out.extend_from_slice(&(*v as f32).to_le_bytes())),
    }
    out
}

struct Header {
    dtype: Dtype,
    shape: Vec<usize>,
    data_offset: usize,
}

fn bad_header(offset: usize, reason: impl Into<String>) -> Error {
    Error::BadHeader {
        offset,
        reason: reason.into(),
    }
}

/// Locates `'key':` in the header dict and returns the offset just past it.
fn find_key(dict: &str, key: &str, base: usize) -> Result<usize> {
    let pat_single = format!("'{key}'");
    let pat_double = format!("\"{key}\"");
    let pos = dict
        .find(&pat_single)
        .or_else(|| dict.find(&pat_double))
        .ok_or_else(|| bad_header(base, format!("missing key {key:?}")))?;
    let after = pos + pat_single.len();
    let rest = &dict[after..];
    let colon = rest
        .find(|c: char| !c.is_whitespace())
        .filter(|i| rest[*i..].starts_with(':'))
        .ok_or_else(|| bad_header(base + after, format!("expected ':' after {key:?}")))?;
    let value = after + colon + 1;
    Ok(value + (dict[value..].len() - dict[value..].trim_start().len()))
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        let offset = bytes
            .iter()
            .zip(MAGIC.iter())
            .position(|(a, b)| a != b)
            .unwrap_or(bytes.len().min(MAGIC.len()));
        return Err(Error::BadMagic { offset });
    }
    if bytes.len() < PREAMBLE_LEN {
        return Err(bad_header(bytes.len(), "file ends inside the preamble"));
    }
    if bytes[6] != 1 || bytes[7] != 0 {
        return Err(bad_header(
            6,
            format!("unsupported version {}.{}", bytes[6], bytes[7]),
        ));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_offset = PREAMBLE_LEN + header_len;
    if bytes.len() < data_offset {
        return Err(bad_header(
            bytes.len(),
            format!("header declares {header_len} bytes but file ends early"),
        ));
    }
    let dict = std::str::from_utf8(&bytes[PREAMBLE_LEN..data_offset])
        .map_err(|e| bad_header(PREAMBLE_LEN + e.valid_up_to(), "header is not ASCII"))?;
    let trimmed = dict.trim_start();
    if !trimmed.starts_with('{') {
        return Err(bad_header(PREAMBLE_LEN, "header is not a dict literal"));
    }

    let at = find_key(dict, "descr", PREAMBLE_LEN)?;
    let quote = dict[at..]
        .chars()
        .next()
        .filter(|c| *c == '\'' || *c == '"');
    let quote = quote.ok_or_else(|| bad_header(PREAMBLE_LEN + at, "descr is not a string"))?;
    let end = dict[at + 1..]
        .find(quote)
        .ok_or_else(|| bad_header(PREAMBLE_LEN + at, "unterminated descr string"))?;
    let descr = &dict[at + 1..at + 1 + end];
    let dtype = match descr {
        "<f8" => Dtype::F8,
        "<f4" => Dtype::F4,
        other => {
            return Err(Error::UnsupportedDtype {
                offset: PREAMBLE_LEN + at,
                descr: other.to_owned(),
            })
        }
    };

    let at = find_key(dict, "fortran_order", PREAMBLE_LEN)?;
    if dict[at..].starts_with("True") {
        return Err(Error::UnsupportedOrder {
            offset: PREAMBLE_LEN + at,
        });
    } else if !dict[at..].starts_with("False") {
        return Err(bad_header(PREAMBLE_LEN + at, "fortran_order is not a bool"));
    }

    let at = find_key(dict, "shape", PREAMBLE_LEN)?;
    if !dict[at..].starts_with('(') {
        return Err(bad_header(PREAMBLE_LEN + at, "shape is not a tuple"));
    }
    let close = dict[at..]
        .find(')')
        .ok_or_else(|| bad_header(PREAMBLE_LEN + at, "unterminated shape tuple"))?;
    let shape = dict[at + 1..at + close]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.trim_end_matches('L')
                .parse::<usize>()
                .map_err(|_| bad_header(PREAMBLE_LEN + at, format!("bad shape entry {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Header {
        dtype,
        shape,
        data_offset,
    })
}

/// Parses a complete `.npy` byte buffer.
pub fn decode(bytes: &[u8]) -> Result<NpyArray> {
    let header = parse_header(bytes)?;
    let count: usize = header.shape.iter().product();
    let expected = count * header.dtype.size();
    let payload = &bytes[header.data_offset..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            offset: header.data_offset + payload.len(),
            expected,
            found: payload.len(),
        });
    }
    let payload = &payload[..expected];
    let data = match header.dtype {
        Dtype::F8 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
        Dtype::F4 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
            .collect(),
    };
    NpyArray::new(header.shape, data)
}

pub fn read_array(path: impl AsRef<Path>) -> Result<NpyArray> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| e.context(path.display().to_string()))
}

/// 1-D file → one vector; 2-D file → one vector per row.
pub fn read_vectors(path: impl AsRef<Path>) -> Result<Vec<LatentVector>> {
    read_array(path)?.into_vectors()
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    read_array(path)?.into_matrix()
}

pub fn read_feature_map(path: impl AsRef<Path>) -> Result<FeatureMap> {
    read_array(path)?.into_feature_map()
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

/// Writes `<f8` NPY through a `.partial` temp file renamed into place, so a
/// failed write never leaves a half-written file under the final name.
pub fn write_array(path: impl AsRef<Path>, array: &NpyArray) -> Result<()> {
    write_array_as(path, array, Dtype::F8)
}

pub fn write_array_as(path: impl AsRef<Path>, array: &NpyArray, dtype: Dtype) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(array, dtype);
    let tmp = temp_path(path);
    let result = fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(&bytes)?;
            f.sync_all()
        })
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub fn write_vector(path: impl AsRef<Path>, v: &LatentVector) -> Result<()> {
    write_array(path, &NpyArray::from(v))
}

pub fn write_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    write_array(path, &NpyArray::from(m))
}

/// Writes raw values with an explicit shape; rejects empty arrays.
pub fn write_vectors(path: impl AsRef<Path>, shape: &[usize], data: &[f64]) -> Result<()> {
    write_array(path, &NpyArray::new(shape.to_vec(), data.to_vec())?)
}
