//! Minimal reader/writer for 2-D float arrays in the numpy `.npy` format.
//!
//! Reading accepts little-endian `f4`/`f8` in C or Fortran order, format
//! versions 1 through 3. Writing always produces version 1, `<f8`, C order.

use std::io::{Read, Write};

use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dtype {
    F4,
    F8,
}

#[derive(Debug)]
struct Header {
    dtype: Dtype,
    fortran_order: bool,
    shape: Vec<usize>,
}

/// A decoded 2-D array in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Array2 {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

pub fn read_array2<R: Read>(reader: &mut R) -> Result<Array2> {
    let header = read_header(reader)?;
    let (rows, cols) = match header.shape[..] {
        [r, c] => (r, c),
        _ => return Err(Error::BadNpy(format!("expected a 2-D array, found shape {:?}", header.shape))),
    };
    let count = rows * cols;
    let width = match header.dtype {
        Dtype::F4 => 4,
        Dtype::F8 => 8,
    };
    let mut raw = vec![0u8; count * width];
    reader.read_exact(&mut raw).map_err(|_| Error::BadNpy(format!("payload shorter than {count} elements")))?;
    let values: Vec<f64> = match header.dtype {
        Dtype::F4 => raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64).collect(),
        Dtype::F8 => raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8"))).collect(),
    };
    let data = if header.fortran_order {
        let mut out = vec![0.0; count];
        for c in 0..cols {
            for r in 0..rows {
                out[r * cols + c] = values[c * rows + r];
            }
        }
        out
    } else {
        values
    };
    Ok(Array2 { rows, cols, data })
}

pub fn write_array2<W: Write>(writer: &mut W, rows: usize, cols: usize, data: &[f64]) -> std::io::Result<()> {
    assert_eq!(data.len(), rows * cols, "data length must equal rows * cols");
    let mut dict = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': ({rows}, {cols}), }}");
    // magic + version + u16 length + dict + newline is padded to a multiple of 64
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    dict.push_str(&" ".repeat(pad));
    dict.push('\n');
    writer.write_all(MAGIC)?;
    writer.write_all(&[1, 0])?;
    writer.write_all(&(dict.len() as u16).to_le_bytes())?;
    writer.write_all(dict.as_bytes())?;
    for v in data {
        writer.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_header<R: Read>(reader: &mut R) -> Result<Header> {
    let mut magic = [0u8; 6];
    reader.read_exact(&mut magic).map_err(|_| Error::BadNpy("file too short for magic string".into()))?;
    if &magic != MAGIC {
        return Err(Error::BadNpy("missing \\x93NUMPY magic string".into()));
    }
    let mut version = [0u8; 2];
    reader.read_exact(&mut version).map_err(|_| Error::BadNpy("truncated version".into()))?;
    let header_len = match version[0] {
        1 => {
            let mut b = [0u8; 2];
            reader.read_exact(&mut b).map_err(|_| Error::BadNpy("truncated header length".into()))?;
            u16::from_le_bytes(b) as usize
        }
        2 | 3 => {
            let mut b = [0u8; 4];
            reader.read_exact(&mut b).map_err(|_| Error::BadNpy("truncated header length".into()))?;
            u32::from_le_bytes(b) as usize
        }
        v => return Err(Error::BadNpy(format!("unsupported format version {v}"))),
    };
    let mut text = vec![0u8; header_len];
    reader.read_exact(&mut text).map_err(|_| Error::BadNpy("truncated header".into()))?;
    let text = String::from_utf8(text).map_err(|_| Error::BadNpy("header is not valid text".into()))?;
    parse_header_dict(&text)
}

fn parse_header_dict(text: &str) -> Result<Header> {
    let descr = dict_value(text, "descr")?;
    let descr = descr.trim().trim_matches(|c| c == '\'' || c == '"');
    let dtype = match descr {
        "<f8" | "f8" | "<d" => Dtype::F8,
        "<f4" | "f4" | "<f" => Dtype::F4,
        other => return Err(Error::UnsupportedDtype(other.to_string())),
    };
    let fortran_order = match dict_value(text, "fortran_order")?.trim() {
        "True" => true,
        "False" => false,
        other => return Err(Error::BadNpy(format!("bad fortran_order {other:?}"))),
    };
    let shape_text = dict_value(text, "shape")?;
    let inner = shape_text
        .trim()
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| Error::BadNpy(format!("bad shape {shape_text:?}")))?;
    let shape = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| Error::BadNpy(format!("bad shape entry {s:?}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Header { dtype, fortran_order, shape })
}

/// Extracts the raw text of `key`'s value from a Python dict literal. Values
/// are either quoted strings, bare words, or parenthesised tuples.
fn dict_value<'a>(text: &'a str, key: &str) -> Result<&'a str> {
    let missing = || Error::BadNpy(format!("header lacks key {key:?}"));
    let start = ["'", "\""]
        .iter()
        .find_map(|q| text.find(&format!("{q}{key}{q}")).map(|i| i + key.len() + 2))
        .ok_or_else(missing)?;
    let rest = text[start..].trim_start();
    let rest = rest.strip_prefix(':').ok_or_else(missing)?.trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')').map(|i| i + 1)
    } else if let Some(q) = rest.chars().next().filter(|c| *c == '\'' || *c == '"') {
        rest[1..].find(q).map(|i| i + 2)
    } else {
        rest.find([',', '}'])
    }
    .ok_or_else(missing)?;
    Ok(&rest[..end])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encode_custom(descr: &str, fortran: bool, shape: &str, payload: &[u8]) -> Vec<u8> {
        let dict = format!(
            "{{'descr': '{descr}', 'fortran_order': {}, 'shape': {shape}, }}\n",
            if fortran { "True" } else { "False" }
        );
        let mut out = MAGIC.to_vec();
        out.extend([1, 0]);
        out.extend((dict.len() as u16).to_le_bytes());
        out.extend(dict.as_bytes());
        out.extend(payload);
        out
    }

    #[test]
    fn writes_aligned_header_and_reads_back() {
        let mut buf = Vec::new();
        write_array2(&mut buf, 2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((buf.len() - 32) % 64, 0);
        let arr = read_array2(&mut buf.as_slice()).unwrap();
        assert_eq!((arr.rows, arr.cols), (2, 2));
        assert_eq!(arr.data, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn reads_f4_fortran_order() {
        let payload: Vec<u8> = [1.0f32, 3.0, 2.0, 4.0].iter().flat_map(|v| v.to_le_bytes()).collect();
        let bytes = encode_custom("<f4", true, "(2, 2)", &payload);
        let arr = read_array2(&mut bytes.as_slice()).unwrap();
        assert_eq!(arr.data, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn rejects_big_endian_and_integers() {
        let bytes = encode_custom(">f8", false, "(1, 1)", &[0; 8]);
        assert!(matches!(read_array2(&mut bytes.as_slice()), Err(Error::UnsupportedDtype(d)) if d == ">f8"));
        let bytes = encode_custom("<i4", false, "(1, 1)", &[0; 4]);
        assert!(matches!(read_array2(&mut bytes.as_slice()), Err(Error::UnsupportedDtype(_))));
    }

    #[test]
    fn rejects_non_2d_and_truncated() {
        let bytes = encode_custom("<f8", false, "(3,)", &[0; 24]);
        assert!(matches!(read_array2(&mut bytes.as_slice()), Err(Error::BadNpy(_))));
        let bytes = encode_custom("<f8", false, "(2, 2)", &[0; 8]);
        assert!(matches!(read_array2(&mut bytes.as_slice()), Err(Error::BadNpy(_))));
        assert!(matches!(read_array2(&mut &b"not npy"[..]), Err(Error::BadNpy(_))));
    }
}
