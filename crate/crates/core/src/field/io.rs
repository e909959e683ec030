//! Binary field files.
//!
//! Layout (little-endian, no padding):
//!
//! | offset | size      | content                         |
//! |--------|-----------|---------------------------------|
//! | 0      | 4         | magic `ELFD`                    |
//! | 4      | 4         | version `u32` = 1               |
//! | 8      | 4         | dimension `d` as `u32`          |
//! | 12     | 4         | points per axis `n` as `u32`    |
//! | 16     | `8 n^d`   | values as `f64`, row-major      |

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{Field, GridSpec};
use crate::error::{CoreError, Result};

pub const FIELD_MAGIC: [u8; 4] = *b"ELFD";
pub const FIELD_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn write_field_to<W: Write>(f: &Field, mut w: W) -> std::io::Result<()> {
    let g = f.grid();
    let mut bytes = Vec::with_capacity(HEADER_LEN + 8 * g.len());
    bytes.extend_from_slice(&FIELD_MAGIC);
    bytes.extend_from_slice(&FIELD_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    bytes.extend_from_slice(&(g.points_per_axis() as u32).to_le_bytes());
    for v in f.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)
}

fn decode_err(offset: usize, message: impl Into<String>) -> CoreError {
    CoreError::Decode {
        offset: offset as u64,
        message: message.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let chunk = bytes
        .get(offset..offset + 4)
        .ok_or_else(|| decode_err(offset, format!("file truncated while reading {what}")))?;
    Ok(u32::from_le_bytes(chunk.try_into().unwrap()))
}

/// Decodes a complete field file image.
pub fn decode_field(bytes: &[u8]) -> Result<Field> {
    let magic = bytes
        .get(0..4)
        .ok_or_else(|| decode_err(0, "file truncated while reading magic"))?;
    if magic != FIELD_MAGIC {
        return Err(decode_err(0, format!("bad magic {magic:02x?}, expected \"ELFD\"")));
    }
    let version = read_u32(bytes, 4, "version")?;
    if version != FIELD_VERSION {
        return Err(decode_err(4, format!("unsupported version {version}")));
    }
    let d = read_u32(bytes, 8, "dimension")? as usize;
    let n = read_u32(bytes, 12, "points per axis")? as usize;
    let grid = GridSpec::new(d, n).map_err(|e| decode_err(8, e.to_string()))?;
    let expected = HEADER_LEN + 8 * grid.len();
    if bytes.len() < expected {
        return Err(decode_err(
            bytes.len(),
            format!("file truncated: payload needs {expected} bytes, found {}", bytes.len()),
        ));
    }
    if bytes.len() > expected {
        return Err(decode_err(expected, "trailing bytes after payload"));
    }
    let values: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(decode_err(HEADER_LEN + 8 * i, "non-finite value"));
    }
    Ok(Field::from_raw(grid, values))
}

pub fn read_field_from<R: Read>(mut r: R) -> Result<Field> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| decode_err(bytes.len(), e.to_string()))?;
    decode_field(&bytes)
}

pub fn field_write(f: &Field, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
    write_field_to(f, std::io::BufWriter::new(file)).map_err(|e| CoreError::io(path, e))
}

pub fn field_read(path: impl AsRef<Path>) -> Result<Field> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| CoreError::io(path, e))?;
    decode_field(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn encode(f: &Field) -> Vec<u8> {
        let mut out = Vec::new();
        write_field_to(f, &mut out).unwrap();
        out
    }

    #[test]
    fn header_layout() {
        let g = GridSpec::new(2, 8).unwrap();
        let bytes = encode(&Field::constant(g, 1.5));
        assert_eq!(&bytes[0..4], b"ELFD");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &8u32.to_le_bytes());
        assert_eq!(bytes.len(), 16 + 8 * 64);
        assert_eq!(&bytes[16..24], &1.5f64.to_le_bytes());
    }

    #[test]
    fn truncated_file_is_decode_error() {
        let g = GridSpec::new(1, 16).unwrap();
        let bytes = encode(&Field::constant(g, 2.0));
        for cut in [0, 3, 10, 16, 100] {
            match decode_field(&bytes[..cut]) {
                Err(CoreError::Decode { .. }) => {}
                other => panic!("cut {cut}: expected decode error, got {other:?}"),
            }
        }
    }

    #[test]
    fn wrong_magic_names_offset_zero() {
        let g = GridSpec::new(1, 16).unwrap();
        let mut bytes = encode(&Field::constant(g, 2.0));
        bytes[1] = b'X';
        let err = decode_field(&bytes).unwrap_err();
        assert!(matches!(err, CoreError::Decode { offset: 0, .. }));
        assert!(err.to_string().contains("offset 0"));
    }

    #[test]
    fn bad_version_and_dims() {
        let g = GridSpec::new(1, 16).unwrap();
        let good = encode(&Field::constant(g, 2.0));
        let mut bytes = good.clone();
        bytes[4] = 2;
        assert!(matches!(decode_field(&bytes), Err(CoreError::Decode { offset: 4, .. })));
        let mut bytes = good.clone();
        bytes[8] = 7;
        assert!(matches!(decode_field(&bytes), Err(CoreError::Decode { offset: 8, .. })));
        let mut bytes = good;
        bytes[12] = 12;
        assert!(matches!(decode_field(&bytes), Err(CoreError::Decode { .. })));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.elfd");
        let g = GridSpec::new(2, 16).unwrap();
        let f = Field::from_fn(g, |x| x[0].sin() * x[1].cos() + 0.1);
        field_write(&f, &path).unwrap();
        assert_eq!(field_read(&path).unwrap(), f);
        assert!(matches!(field_read(dir.path().join("missing")), Err(CoreError::Io { .. })));
    }

    proptest! {
        #[test]
        fn payload_round_trip_is_bit_exact(values in proptest::collection::vec(-1e300f64..1e300, 64)) {
            let g = GridSpec::new(1, 64).unwrap();
            let f = Field::new(g, values).unwrap();
            let bytes = encode(&f);
            let back = decode_field(&bytes).unwrap();
            prop_assert_eq!(encode(&back), bytes);
        }
    }
}
