//! Parameter checkpoint file.
//!
//! Layout (all integers little-endian u32):
//!
//! ```text
//! "CLPF" | version | tensor count
//! per tensor: name length | UTF-8 name | rank | dims... | f64 LE data
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};

use super::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CLPF";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut out: W, tensors: &[(String, &Tensor)]) -> Result<()> {
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&u32_len(tensors.len())?.to_le_bytes())?;
    for (name, t) in tensors {
        out.write_all(&u32_len(name.len())?.to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&u32_len(t.rank())?.to_le_bytes())?;
        for &d in t.shape() {
            out.write_all(&u32_len(d)?.to_le_bytes())?;
        }
        for v in t.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Vec<(String, Tensor)>> {
    let mut magic = [0u8; 4];
    read_exact(&mut input, &mut magic, "magic")?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!("bad checkpoint magic {magic:?}")));
    }
    let version = read_u32(&mut input, "version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let count = read_u32(&mut input, "tensor count")?;
    let mut tensors = Vec::with_capacity(count.min(4096) as usize);
    for _ in 0..count {
        let name_len = read_u32(&mut input, "name length")? as usize;
        let mut name = vec![0u8; name_len];
        read_exact(&mut input, &mut name, "name")?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rank = read_u32(&mut input, "rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u32(&mut input, "dimension")? as usize);
        }
        let n: usize = dims.iter().product();
        let mut raw = vec![0u8; n * 8];
        read_exact(&mut input, &mut raw, &name)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(dims, data).map_err(|e| Error::Format(format!("tensor {name}: {e}")))?;
        tensors.push((name, t));
    }
    Ok(tensors)
}

fn u32_len(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::InvalidArgument(format!("{n} exceeds u32")))
}

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Truncated(format!("checkpoint ended in {what}")),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(input: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(input, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let a = Tensor::new(vec![2, 3], vec![1.0, -2.5, 3.25, 0.0, 1e-300, f64::MAX]).unwrap();
        let b = Tensor::from_vec(vec![0.125]);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &[("a.w".into(), &a), ("b".into(), &b)]).unwrap();
        assert_eq!(&buf[..4], b"CLPF");
        let back = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back, vec![("a.w".to_string(), a), ("b".to_string(), b)]);
    }

    #[test]
    fn truncation_detected() {
        let a = Tensor::from_vec(vec![1.0, 2.0]);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &[("a".into(), &a)]).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_checkpoint(&buf[..]), Err(Error::Truncated(_))));
    }

    #[test]
    fn wrong_magic_rejected() {
        assert!(matches!(
            read_checkpoint(&b"NOPE\x01\0\0\0\0\0\0\0"[..]),
            Err(Error::Format(_))
        ));
    }
}
