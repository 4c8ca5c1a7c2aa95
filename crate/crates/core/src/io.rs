//! Binary tensor container and JSON-lines helpers.
//!
//! Container layout, all integers little-endian:
//!
//! ```text
//! "SVTC"  u32 version  u32 count
//! repeated count times:
//!   u16 name_len  name (UTF-8)  u8 rank  u64 extents[rank]  u8 dtype  payload
//! ```
//!
//! The only dtype is `0` (f64, row-major).

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ndgrad::Array;

pub const MAGIC: &[u8; 4] = b"SVTC";
pub const VERSION: u32 = 1;
const DTYPE_F64: u8 = 0;

pub fn encode_tensors<S: AsRef<str>>(tensors: &[(S, &Array)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let count = u32::try_from(tensors.len()).map_err(|_| Error::Format("too many tensors".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, a) in tensors {
        let name = name.as_ref().as_bytes();
        let len = u16::try_from(name.len()).map_err(|_| Error::Format("tensor name too long".into()))?;
        let rank = u8::try_from(a.rank()).map_err(|_| Error::Format("rank above 255".into()))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name);
        out.push(rank);
        for &e in a.shape() {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
        out.push(DTYPE_F64);
        for v in a.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<(String, Array)>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let e = usize::try_from(r.u64()?).map_err(|_| Error::Format("extent overflow".into()))?;
            shape.push(e);
        }
        let dtype = r.u8()?;
        if dtype != DTYPE_F64 {
            return Err(Error::Format(format!("{name}: unsupported dtype {dtype}")));
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Format(format!("{name}: size overflow")))?;
        let payload = r.take(n)?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.push((name, Array::new(&shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(out)
}

pub fn write_tensors<S: AsRef<str>>(path: &Path, tensors: &[(S, &Array)]) -> Result<()> {
    fs::write(path, encode_tensors(tensors)?)?;
    Ok(())
}

pub fn read_tensors(path: &Path) -> Result<Vec<(String, Array)>> {
    decode_tensors(&fs::read(path)?)
}

/// Looks up a tensor by name in a decoded container.
pub fn take_tensor(tensors: &mut Vec<(String, Array)>, name: &str) -> Result<Array> {
    let i = tensors
        .iter()
        .position(|(n, _)| n == name)
        .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
    Ok(tensors.swap_remove(i).1)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Appends one record; used for logs that must only ever grow.
pub fn append_jsonl<T: Serialize>(path: &Path, record: &T) -> Result<()> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut line = serde_json::to_vec(record)?;
    line.push(b'\n');
    f.write_all(&line)?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let r = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let a = Array::new(&[2, 3], vec![1.0, -2.0, 3.5, f64::MIN_POSITIVE, 0.0, -0.0]).unwrap();
        let s = Array::scalar(7.25);
        let bytes = encode_tensors(&[("x.w", &a), ("s", &s)]).unwrap();
        assert_eq!(&bytes[..4], b"SVTC");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        // name_len(2) + name(3) + rank(1) + 2 extents(16) + dtype(1) + 6 values(48)
        let first = 2 + 3 + 1 + 16 + 1 + 48;
        assert_eq!(bytes.len(), 12 + first + ((2 + 1 + 1) + 1 + 8));
        let back = decode_tensors(&bytes).unwrap();
        assert_eq!(back[0].0, "x.w");
        assert_eq!(back[0].1.shape(), &[2, 3]);
        let bits: Vec<u64> = back[0].1.data().iter().map(|v| v.to_bits()).collect();
        let orig: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, orig);
        assert_eq!(back[1].1, s);
    }

    #[test]
    fn rejects_corruption() {
        let a = Array::zeros(&[2]);
        let bytes = encode_tensors(&[("a", &a)]).unwrap();
        assert!(decode_tensors(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_tensors(&bad).is_err());
        let mut bad = bytes.clone();
        let dtype_at = 12 + 2 + 1 + 1 + 8;
        bad[dtype_at] = 1;
        assert!(decode_tensors(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(decode_tensors(&long).is_err());
    }
}
