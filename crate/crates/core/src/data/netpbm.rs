//! Binary and ASCII Netpbm (P2, P3, P5, P6) with maxval up to 255.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor4};

/// Decoded 8-bit raster, interleaved when `channels == 3`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub maxval: u8,
    pub data: Vec<u8>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> Cursor<'a> {
    fn fail<T>(&self, offset: usize, reason: impl Into<String>) -> Result<T> {
        Err(Error::Netpbm {
            path: self.path.to_string(),
            offset,
            reason: reason.into(),
        })
    }

    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return if start >= self.bytes.len() {
                self.fail(start, format!("unexpected end of data, expected {what}"))
            } else {
                self.fail(
                    start,
                    format!("expected {what}, found byte 0x{:02x}", self.bytes[start]),
                )
            };
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        match text.parse::<usize>() {
            Ok(v) => Ok(v),
            Err(_) => self.fail(start, format!("{what} {text} is too large")),
        }
    }
}

/// Parses one Netpbm image from memory. `path` only labels diagnostics.
pub fn decode(bytes: &[u8], path: &str) -> Result<Raster> {
    let mut cur = Cursor { bytes, pos: 0, path };
    if bytes.len() < 2 || bytes[0] != b'P' {
        return cur.fail(0, "bad magic, expected P2, P3, P5 or P6");
    }
    let (channels, ascii) = match bytes[1] {
        b'2' => (1, true),
        b'3' => (3, true),
        b'5' => (1, false),
        b'6' => (3, false),
        _ => return cur.fail(0, "bad magic, expected P2, P3, P5 or P6"),
    };
    cur.pos = 2;
    if !bytes.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return cur.fail(2, "missing whitespace after magic");
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    cur.skip_space();
    let mv_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return cur.fail(mv_at, format!("empty image {width}x{height}"));
    }
    if maxval == 0 || maxval > 255 {
        return cur.fail(mv_at, format!("maxval {maxval} outside 1..=255"));
    }
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .filter(|&n| n <= 1 << 32);
    let Some(count) = count else {
        return cur.fail(mv_at, format!("image {width}x{height} is too large"));
    };
    let data = if ascii {
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            cur.skip_space();
            let at = cur.pos;
            let v = cur.number("sample")?;
            if v > maxval {
                return cur.fail(at, format!("sample {v} exceeds maxval {maxval}"));
            }
            data.push(v as u8);
        }
        data
    } else {
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => return cur.fail(cur.pos, "missing whitespace before payload"),
        }
        let end = cur.pos + count;
        if end > bytes.len() {
            return cur.fail(
                bytes.len(),
                format!("truncated payload, {} of {count} bytes present", bytes.len() - cur.pos),
            );
        }
        let payload = &bytes[cur.pos..end];
        if let Some(i) = payload.iter().position(|&v| v as usize > maxval) {
            return cur.fail(cur.pos + i, format!("sample {} exceeds maxval {maxval}", payload[i]));
        }
        payload.to_vec()
    };
    Ok(Raster {
        width,
        height,
        channels,
        maxval: maxval as u8,
        data,
    })
}

pub fn read_raster(path: &Path) -> Result<Raster> {
    let bytes = fs::read(path).map_err(|e| Error::Netpbm {
        path: path.display().to_string(),
        offset: 0,
        reason: e.to_string(),
    })?;
    decode(&bytes, &path.display().to_string())
}

fn wrong_kind<T>(path: &Path, want: &str) -> Result<T> {
    Err(Error::Netpbm {
        path: path.display().to_string(),
        offset: 0,
        reason: format!("expected a {want} image"),
    })
}

/// Colour image as (1,3,H,W) in [0,1].
pub fn read_image(path: &Path) -> Result<Tensor4> {
    let r = read_raster(path)?;
    if r.channels != 3 {
        return wrong_kind(path, "colour (P3/P6)");
    }
    let mv = r.maxval as f64;
    Ok(Tensor4::from_fn(Shape::new(1, 3, r.height, r.width), |_, c, y, x| {
        r.data[(y * r.width + x) * 3 + c] as f64 / mv
    }))
}

/// Grey map as (1,1,H,W) in [0,1].
pub fn read_gray(path: &Path) -> Result<Tensor4> {
    let r = read_raster(path)?;
    if r.channels != 1 {
        return wrong_kind(path, "greyscale (P2/P5)");
    }
    let mv = r.maxval as f64;
    let data = r.data.iter().map(|&v| v as f64 / mv).collect();
    Tensor4::from_vec(Shape::new(1, 1, r.height, r.width), data)
}

/// Binary mask as (1,1,H,W); a sample is foreground when it is at least
/// 128 on the 8-bit scale.
pub fn read_mask(path: &Path) -> Result<Tensor4> {
    let r = read_raster(path)?;
    if r.channels != 1 {
        return wrong_kind(path, "greyscale (P2/P5)");
    }
    let mv = r.maxval as u32;
    let data = r
        .data
        .iter()
        .map(|&v| if v as u32 * 255 >= 128 * mv { 1.0 } else { 0.0 })
        .collect();
    Tensor4::from_vec(Shape::new(1, 1, r.height, r.width), data)
}

/// Maps [0,1] to 0..=255 with halves rounded up.
pub fn quantize(v: f64) -> Result<u8> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidArgument(format!("pixel value {v} outside [0, 1]")));
    }
    Ok((v * 255.0 + 0.5).floor() as u8)
}

fn single_item(t: &Tensor4, channels: usize, what: &str) -> Result<()> {
    let s = t.shape();
    if s.n != 1 || s.c != channels {
        return Err(Error::InvalidArgument(format!(
            "{what}: expected shape (1,{channels},H,W), got {s}"
        )));
    }
    Ok(())
}

/// P5 bytes for a (1,1,H,W) map in [0,1].
pub fn encode_pgm(map: &Tensor4) -> Result<Vec<u8>> {
    single_item(map, 1, "write_pgm")?;
    let s = map.shape();
    let mut out = format!("P5\n{} {}\n255\n", s.w, s.h).into_bytes();
    for &v in map.data() {
        out.push(quantize(v)?);
    }
    Ok(out)
}

/// P6 bytes for a (1,3,H,W) image in [0,1].
pub fn encode_ppm(image: &Tensor4) -> Result<Vec<u8>> {
    single_item(image, 3, "write_ppm")?;
    let s = image.shape();
    let mut out = format!("P6\n{} {}\n255\n", s.w, s.h).into_bytes();
    for y in 0..s.h {
        for x in 0..s.w {
            for c in 0..3 {
                out.push(quantize(image.at(0, c, y, x))?);
            }
        }
    }
    Ok(out)
}

pub fn write_pgm(map: &Tensor4, path: &Path) -> Result<()> {
    let bytes = encode_pgm(map)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn write_ppm(image: &Tensor4, path: &Path) -> Result<()> {
    let bytes = encode_ppm(image)?;
    fs::write(path, bytes)?;
    Ok(())
}
