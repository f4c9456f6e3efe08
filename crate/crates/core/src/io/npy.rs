//! Minimal NPY reader/writer for little-endian `float32`, C-order arrays.
//!
//! Files are written as format version 1.0 with the header dictionary padded
//! by spaces (and a final newline) so the data section starts on a 64-byte
//! boundary.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

/// A decoded `float32` array.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

fn header_dict(shape: &[usize]) -> String {
    let dims = match shape {
        [one] => format!("({one},)"),
        _ => format!(
            "({})",
            shape
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    format!("{{'descr': '<f4', 'fortran_order': False, 'shape': {dims}, }}")
}

/// Serializes `data` with the given shape into NPY v1.0 bytes.
pub fn encode_f32(shape: &[usize], data: &[f32]) -> Result<Vec<u8>> {
    let count: usize = shape.iter().product();
    if count != data.len() {
        return Err(Error::Shape(format!(
            "shape {shape:?} holds {count} values but {} were given",
            data.len()
        )));
    }
    let mut dict = header_dict(shape);
    // magic(6) + version(2) + len(2) + dict + '\n'
    let unpadded = 10 + dict.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    dict.extend(std::iter::repeat_n(' ', pad));
    dict.push('\n');
    let hlen = u16::try_from(dict.len())
        .map_err(|_| Error::Format("NPY header exceeds 65535 bytes".into()))?;

    let mut out = Vec::with_capacity(10 + dict.len() + data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&hlen.to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn write_f32(path: &Path, shape: &[usize], data: &[f32]) -> Result<()> {
    let bytes = encode_f32(shape, data)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

fn dict_value<'a>(dict: &'a str, key: &str) -> Result<&'a str> {
    let pat = format!("'{key}'");
    let start = dict
        .find(&pat)
        .ok_or_else(|| Error::Format(format!("NPY header lacks {pat}")))?;
    let rest = dict[start + pat.len()..].trim_start();
    let rest = rest
        .strip_prefix(':')
        .ok_or_else(|| Error::Format(format!("NPY header: no ':' after {pat}")))?;
    Ok(rest.trim_start())
}

fn parse_shape(dict: &str) -> Result<Vec<usize>> {
    let v = dict_value(dict, "shape")?;
    let v = v
        .strip_prefix('(')
        .ok_or_else(|| Error::Format("NPY shape is not a tuple".into()))?;
    let end = v
        .find(')')
        .ok_or_else(|| Error::Format("NPY shape tuple not closed".into()))?;
    v[..end]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("NPY shape entry {s:?}")))
        })
        .collect()
}

/// Decodes NPY bytes holding a little-endian `float32` C-order array.
pub fn decode_f32(bytes: &[u8]) -> Result<NpyArray> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(Error::Format("missing NPY magic".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (hlen, hstart) = match (major, minor) {
        (1, 0) => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        (2, 0) => {
            if bytes.len() < 12 {
                return Err(Error::Format("truncated NPY header".into()));
            }
            (
                u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                12,
            )
        }
        _ => {
            return Err(Error::Format(format!(
                "unsupported NPY version {major}.{minor}"
            )))
        }
    };
    let hend = hstart + hlen;
    if bytes.len() < hend {
        return Err(Error::Format("truncated NPY header".into()));
    }
    let dict = std::str::from_utf8(&bytes[hstart..hend])
        .map_err(|_| Error::Format("NPY header is not ASCII".into()))?;

    let descr = dict_value(dict, "descr")?;
    if !(descr.starts_with("'<f4'") || descr.starts_with("\"<f4\"")) {
        return Err(Error::Format(format!(
            "unsupported dtype {}, expected '<f4'",
            descr.split(',').next().unwrap_or(descr)
        )));
    }
    let fortran = dict_value(dict, "fortran_order")?;
    if !fortran.starts_with("False") {
        return Err(Error::Format("Fortran-order arrays are not supported".into()));
    }
    let shape = parse_shape(dict)?;
    let count: usize = shape.iter().product();
    let payload = &bytes[hend..];
    if payload.len() != count * 4 {
        return Err(Error::Format(format!(
            "NPY payload holds {} bytes, shape {shape:?} needs {}",
            payload.len(),
            count * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(NpyArray { shape, data })
}

pub fn read_f32(path: &Path) -> Result<NpyArray> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_f32(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}
