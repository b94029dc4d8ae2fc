//! Little-endian parameter files: `ATUP1`, a `u32` tensor count, then per
//! tensor a `u32` name length, the UTF-8 name, a `u32` rank and `u32` dims;
//! raw `f32` data for all tensors follows in manifest order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::autodiff::ParamSet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 5] = b"ATUP1";

const MAX_RANK: usize = 8;

pub fn write_checkpoint<W: Write>(mut w: W, ps: &ParamSet<f32>) -> Result<()> {
    let enc = |e: std::io::Error| Error::Encode(format!("checkpoint: {e}"));
    let u32_of = |n: usize, what: &str| {
        u32::try_from(n).map_err(|_| Error::Encode(format!("checkpoint: {what} {n} exceeds u32")))
    };
    let mut head = Vec::new();
    head.extend_from_slice(MAGIC);
    head.extend_from_slice(&u32_of(ps.len(), "tensor count")?.to_le_bytes());
    for (name, t) in ps.iter() {
        head.extend_from_slice(&u32_of(name.len(), "name length")?.to_le_bytes());
        head.extend_from_slice(name.as_bytes());
        head.extend_from_slice(&u32_of(t.rank(), "rank")?.to_le_bytes());
        for &d in t.shape() {
            head.extend_from_slice(&u32_of(d, "dimension")?.to_le_bytes());
        }
    }
    w.write_all(&head).map_err(enc)?;
    for (_, t) in ps.iter() {
        let mut buf = Vec::with_capacity(t.len() * 4);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(enc)?;
    }
    w.flush().map_err(enc)
}

struct Cursor {
    bytes: Vec<u8>,
    pos: usize,
}

impl Cursor {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Decode {
            format: "checkpoint",
            offset: self.pos,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!(
                "truncated {what}: need {n} bytes, {} left",
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ParamSet<f32>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::Decode {
        format: "checkpoint",
        offset: 0,
        msg: e.to_string(),
    })?;
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(MAGIC.len(), "magic")? != MAGIC {
        c.pos = 0;
        return Err(c.err("bad magic, expected ATUP1"));
    }
    let count = c.u32("tensor count")?;
    let mut manifest = Vec::new();
    for _ in 0..count {
        let len = c.u32("name length")?;
        let at = c.pos;
        let name = std::str::from_utf8(c.take(len, "name")?)
            .map_err(|_| Error::Decode {
                format: "checkpoint",
                offset: at,
                msg: "name is not UTF-8".into(),
            })?
            .to_string();
        let rank = c.u32("rank")?;
        if rank > MAX_RANK {
            return Err(c.err(format!("rank {rank} of {name:?} exceeds {MAX_RANK}")));
        }
        let dims = (0..rank)
            .map(|_| c.u32("dimension"))
            .collect::<Result<Vec<_>>>()?;
        manifest.push((name, dims));
    }
    let mut ps = ParamSet::new();
    for (name, dims) in manifest {
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| c.err(format!("{name:?} is too large")))?;
        let raw = c.take(
            n.checked_mul(4).ok_or_else(|| c.err("size overflow"))?,
            "tensor data",
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let at = c.pos;
        ps.add(name, Tensor::new(dims, data)?)
            .map_err(|e| Error::Decode {
                format: "checkpoint",
                offset: at,
                msg: e.to_string(),
            })?;
    }
    if c.pos != c.bytes.len() {
        return Err(c.err(format!("{} trailing bytes", c.bytes.len() - c.pos)));
    }
    Ok(ps)
}

pub fn save_checkpoint(path: &Path, ps: &ParamSet<f32>) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(BufWriter::new(f), ps)
}

pub fn load_checkpoint(path: &Path) -> Result<ParamSet<f32>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::SeededRng;

    fn sample() -> ParamSet<f32> {
        let mut rng = SeededRng::new(1);
        let mut ps = ParamSet::new();
        ps.add("stem.w", Tensor::uniform([2, 1, 3, 3], -1.0, 1.0, &mut rng))
            .unwrap();
        ps.add("slope", Tensor::full([2], 0.25)).unwrap();
        ps
    }

    #[test]
    fn round_trip_and_layout() {
        let ps = sample();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &ps).unwrap();
        assert_eq!(&buf[..5], b"ATUP1");
        assert_eq!(&buf[5..9], &2u32.to_le_bytes());
        assert_eq!(&buf[9..13], &6u32.to_le_bytes());
        assert_eq!(&buf[13..19], b"stem.w");
        let header = 5 + 4 + (4 + 6 + 4 + 16) + (4 + 5 + 4 + 4);
        assert_eq!(buf.len(), header + 4 * 20);
        assert_eq!(read_checkpoint(&buf[..]).unwrap(), ps);
    }

    #[test]
    fn corrupt_files_report_offsets() {
        let ps = sample();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &ps).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_checkpoint(&bad[..]),
            Err(Error::Decode { offset: 0, .. })
        ));
        let short = &buf[..buf.len() - 3];
        match read_checkpoint(short) {
            Err(Error::Decode { offset, .. }) => assert!(offset > 40),
            other => panic!("{other:?}"),
        }
        let mut long = buf.clone();
        long.push(0);
        assert!(read_checkpoint(&long[..]).is_err());
    }
}
