//! PNG (8-bit gray / RGB) and binary PGM (8- or 16-bit gray).
//!
//! PNG pixel decoding goes through the `png` crate; the chunk stream is walked
//! first so that structural damage is reported with the byte offset of the
//! offending chunk.

use std::fs;
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use super::image::{DepthMap, ImageU8};
use crate::error::{Error, Result};

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];

fn png_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Decode {
        format: "png",
        offset,
        msg: msg.into(),
    }
}

fn be32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

/// Walks the chunk list, checking lengths, CRCs and IHDR/IEND placement.
pub fn validate_png_chunks(bytes: &[u8]) -> Result<()> {
    if bytes.len() < 8 || bytes[..8] != PNG_SIGNATURE {
        return Err(png_err(0, "missing PNG signature"));
    }
    let mut pos = 8;
    let mut first = true;
    loop {
        if bytes.len() - pos < 12 {
            return Err(png_err(pos, "truncated chunk header"));
        }
        let len = be32(&bytes[pos..]) as usize;
        let kind = &bytes[pos + 4..pos + 8];
        if !kind.iter().all(u8::is_ascii_alphabetic) {
            return Err(png_err(pos + 4, format!("invalid chunk type {kind:?}")));
        }
        let name = String::from_utf8_lossy(kind).into_owned();
        if first && kind != b"IHDR" {
            return Err(png_err(
                pos + 4,
                format!("first chunk is {name}, expected IHDR"),
            ));
        }
        first = false;
        if bytes.len() - pos - 12 < len {
            return Err(png_err(
                pos,
                format!("{name} chunk of {len} bytes runs past end of file"),
            ));
        }
        let body = &bytes[pos + 4..pos + 8 + len];
        let stored = be32(&bytes[pos + 8 + len..]);
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(png_err(
                pos + 8 + len,
                format!("{name} CRC mismatch: stored {stored:08x}, computed {actual:08x}"),
            ));
        }
        pos += 12 + len;
        if kind == b"IEND" {
            return Ok(());
        }
    }
}

/// Decodes a PNG held in memory. Palette and low-bit images are expanded,
/// 16-bit samples are reduced to 8 bits and alpha is dropped.
pub fn decode_png(bytes: &[u8]) -> Result<ImageU8> {
    validate_png_chunks(bytes)?;
    let mut dec = png::Decoder::new(std::io::Cursor::new(bytes));
    dec.set_transformations(Transformations::EXPAND | Transformations::STRIP_16);
    let mut reader = dec.read_info().map_err(|e| png_err(8, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| png_err(8, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| png_err(8, e.to_string()))?;
    buf.truncate(info.buffer_size());
    let (h, w) = (info.height as usize, info.width as usize);
    let (src_c, dst_c) = match info.color_type {
        ColorType::Grayscale => (1, 1),
        ColorType::GrayscaleAlpha => (2, 1),
        ColorType::Rgb => (3, 3),
        ColorType::Rgba => (4, 3),
        ColorType::Indexed => return Err(png_err(8, "palette was not expanded")),
    };
    if info.bit_depth != BitDepth::Eight {
        return Err(png_err(
            8,
            format!("unsupported output depth {:?}", info.bit_depth),
        ));
    }
    let stride = info.line_size;
    let mut data = Vec::with_capacity(h * w * dst_c);
    for row in buf.chunks(stride).take(h) {
        for px in row[..w * src_c].chunks_exact(src_c) {
            data.extend_from_slice(&px[..dst_c]);
        }
    }
    ImageU8::new(dst_c, h, w, data)
}

pub fn encode_png(img: &ImageU8) -> Result<Vec<u8>> {
    let enc_err = |e: png::EncodingError| Error::Encode(format!("png: {e}"));
    let w = u32::try_from(img.width).map_err(|_| Error::Encode("png: width exceeds u32".into()))?;
    let h =
        u32::try_from(img.height).map_err(|_| Error::Encode("png: height exceeds u32".into()))?;
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w, h);
        enc.set_color(if img.channels == 1 {
            ColorType::Grayscale
        } else {
            ColorType::Rgb
        });
        enc.set_depth(BitDepth::Eight);
        let mut writer = enc.write_header().map_err(enc_err)?;
        writer.write_image_data(&img.data).map_err(enc_err)?;
        writer.finish().map_err(enc_err)?;
    }
    Ok(out)
}

pub fn load_png(path: &Path) -> Result<ImageU8> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes)
}

pub fn save_png(path: &Path, img: &ImageU8) -> Result<()> {
    fs::write(path, encode_png(img)?).map_err(|e| Error::io(path, e))
}

fn pgm_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Decode {
        format: "pgm",
        offset,
        msg: msg.into(),
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
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
            return Err(pgm_err(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| pgm_err(start, format!("{what} out of range")))
    }
}

/// Decodes a binary (`P5`) PGM. 8-bit files are widened to `u16` unchanged.
pub fn decode_pgm16(bytes: &[u8]) -> Result<DepthMap> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(pgm_err(0, "missing P5 magic"));
    }
    let mut hd = Header { bytes, pos: 2 };
    let w = hd.number("width")?;
    let h = hd.number("height")?;
    let maxval = hd.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(pgm_err(hd.pos, format!("maxval {maxval} not in 1..=65535")));
    }
    if hd.pos >= bytes.len() || !bytes[hd.pos].is_ascii_whitespace() {
        return Err(pgm_err(hd.pos, "expected whitespace after maxval"));
    }
    let start = hd.pos + 1;
    let bps = if maxval < 256 { 1 } else { 2 };
    let need = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(bps))
        .ok_or_else(|| pgm_err(2, "dimensions overflow"))?;
    let avail = bytes.len() - start;
    if avail < need {
        return Err(pgm_err(
            bytes.len(),
            format!("truncated raster: need {need} bytes, have {avail}"),
        ));
    }
    let raster = &bytes[start..start + need];
    let data: Vec<u16> = if bps == 1 {
        raster.iter().map(|&v| v as u16).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect()
    };
    if let Some(k) = data.iter().position(|&v| v as usize > maxval) {
        return Err(pgm_err(
            start + k * bps,
            format!("sample exceeds maxval {maxval}"),
        ));
    }
    DepthMap::new(h, w, data)
}

/// Encodes as a 16-bit PGM with maxval 65535.
pub fn encode_pgm16(d: &DepthMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", d.width, d.height).into_bytes();
    out.reserve(d.data.len() * 2);
    for v in &d.data {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn load_pgm16(path: &Path) -> Result<DepthMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm16(&bytes)
}

pub fn save_pgm16(path: &Path, d: &DepthMap) -> Result<()> {
    fs::write(path, encode_pgm16(d)).map_err(|e| Error::io(path, e))
}
