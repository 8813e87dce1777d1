//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! "ODCSA1\n"  u32 count
//! per tensor: u16 name_len, name (utf-8), u8 rank, rank x u32 dims, f32 payload
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor4};

use super::params::ParamStore;

pub const MAGIC: &[u8; 7] = b"ODCSA1\n";

pub fn write_checkpoint(store: &ParamStore, out: &mut impl Write) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&(store.len() as u32).to_le_bytes())?;
    for (name, t) in store.iter() {
        let len = u16::try_from(name.len()).map_err(|_| Error::Checkpoint(format!("tensor name too long: {name}")))?;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        let dims = t.shape().dims();
        out.write_all(&[dims.len() as u8])?;
        for d in dims {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut payload = Vec::with_capacity(4 * t.len());
        for &v in t.data() {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.write_all(&payload)?;
    }
    Ok(())
}

fn read_exact<const N: usize>(input: &mut impl Read, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input
        .read_exact(&mut buf)
        .map_err(|_| Error::Checkpoint(format!("truncated while reading {what}")))?;
    Ok(buf)
}

/// Reads every tensor in file order. Ranks below 4 are padded with leading
/// unit dimensions.
pub fn read_checkpoint(input: &mut impl Read) -> Result<Vec<(String, Tensor4)>> {
    let magic: [u8; 7] = read_exact(input, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic, not an ODCSA1 checkpoint".into()));
    }
    let count = u32::from_le_bytes(read_exact(input, "tensor count")?);
    let mut out = Vec::with_capacity(count as usize);
    for i in 0..count {
        let len = u16::from_le_bytes(read_exact(input, "name length")?) as usize;
        let mut name = vec![0u8; len];
        input
            .read_exact(&mut name)
            .map_err(|_| Error::Checkpoint(format!("truncated name of tensor {i}")))?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint(format!("tensor {i}: name is not utf-8")))?;
        let [rank] = read_exact::<1>(input, "rank")?;
        if rank == 0 || rank > 4 {
            return Err(Error::Checkpoint(format!("tensor {name}: unsupported rank {rank}")));
        }
        let mut dims = [1usize; 4];
        for d in &mut dims[4 - rank as usize..] {
            *d = u32::from_le_bytes(read_exact(input, "dims")?) as usize;
        }
        let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
        let mut raw = vec![0u8; 4 * shape.numel()];
        input
            .read_exact(&mut raw)
            .map_err(|_| Error::Checkpoint(format!("tensor {name}: truncated payload")))?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        out.push((name, Tensor4::from_vec(shape, data)?));
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add(
            "a.weight",
            Tensor4::from_fn(Shape::new(2, 1, 1, 3), |n, _, _, x| (n * 3 + x) as f64 * 0.25),
        )
        .unwrap();
        s.add("a.bias", Tensor4::full(Shape::new(1, 2, 1, 1), -1.5)).unwrap();
        s
    }

    #[test]
    fn round_trip() {
        let mut buf = Vec::new();
        write_checkpoint(&store(), &mut buf).unwrap();
        assert_eq!(&buf[..7], MAGIC);
        let back = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].0, "a.weight");
        assert_eq!(back[0].1, store().tensors()[0]);
        assert_eq!(back[1].1.shape(), Shape::new(1, 2, 1, 1));
    }

    #[test]
    fn layout_is_exact() {
        let mut s = ParamStore::new();
        s.add("x", Tensor4::full(Shape::new(1, 1, 1, 1), 1.0)).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&s, &mut buf).unwrap();
        let mut expect = b"ODCSA1\n".to_vec();
        expect.extend([1, 0, 0, 0, 1, 0, b'x', 4]);
        for _ in 0..4 {
            expect.extend([1, 0, 0, 0]);
        }
        expect.extend(1.0f32.to_le_bytes());
        assert_eq!(buf, expect);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut buf = Vec::new();
        write_checkpoint(&store(), &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&mut bad.as_slice())
            .unwrap_err()
            .to_string()
            .contains("magic"));
        let cut = &buf[..buf.len() - 2];
        assert!(read_checkpoint(&mut &cut[..]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(read_checkpoint(&mut long.as_slice()).is_err());
    }

    #[test]
    fn lower_rank_is_padded() {
        let mut buf = b"ODCSA1\n".to_vec();
        buf.extend(1u32.to_le_bytes());
        buf.extend(1u16.to_le_bytes());
        buf.push(b'b');
        buf.push(1);
        buf.extend(3u32.to_le_bytes());
        for v in [1.0f32, 2.0, 3.0] {
            buf.extend(v.to_le_bytes());
        }
        let t = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(t[0].1.shape(), Shape::new(1, 1, 1, 3));
    }
}
