//! Binary PGM (P5, 16-bit big-endian) and PPM (P6, 8-bit) with one comment line.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use super::normals::NormalMap;
use super::raster::DepthImage;

#[derive(Debug, Error)]
pub enum PnmError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("expected magic {expected}")]
    BadMagic { expected: &'static str },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unsupported maxval {0}")]
    MaxVal(u32),
    #[error("pixel payload has {actual} bytes, expected {expected}")]
    Payload { expected: usize, actual: usize },
}

fn header<W: Write>(
    w: &mut W,
    magic: &str,
    width: usize,
    height: usize,
    maxval: u32,
    comment: &str,
) -> io::Result<()> {
    // a comment must stay on one line
    let comment: String = comment.chars().filter(|c| *c != '\n' && *c != '\r').collect();
    write!(w, "{magic}\n# {comment}\n{width} {height}\n{maxval}\n")
}

pub fn write_pgm16<W: Write>(mut w: W, img: &DepthImage, comment: &str) -> io::Result<()> {
    header(&mut w, "P5", img.width, img.height, 65535, comment)?;
    let mut buf = Vec::with_capacity(img.pixels.len() * 2);
    for p in &img.pixels {
        buf.extend_from_slice(&p.to_be_bytes());
    }
    w.write_all(&buf)?;
    w.flush()
}

pub fn write_ppm<W: Write>(mut w: W, img: &NormalMap, comment: &str) -> io::Result<()> {
    header(&mut w, "P6", img.width, img.height, 255, comment)?;
    let buf: Vec<u8> = img.pixels.iter().flatten().copied().collect();
    w.write_all(&buf)?;
    w.flush()
}

/// Parsed header fields and the offset of the first pixel byte.
struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    comments: Vec<String>,
    data_start: usize,
}

fn parse_header(bytes: &[u8], magic: &'static str) -> Result<Header, PnmError> {
    if bytes.len() < 2 || &bytes[..2] != magic.as_bytes() {
        return Err(PnmError::BadMagic { expected: magic });
    }
    let mut pos = 2;
    let mut fields = Vec::with_capacity(3);
    let mut comments = Vec::new();
    while fields.len() < 3 {
        match bytes.get(pos) {
            None => return Err(PnmError::Header("unexpected end of header".into())),
            Some(b'#') => {
                let end = bytes[pos..]
                    .iter()
                    .position(|&b| b == b'\n')
                    .map(|e| pos + e)
                    .ok_or_else(|| PnmError::Header("unterminated comment".into()))?;
                comments.push(String::from_utf8_lossy(&bytes[pos + 1..end]).trim().to_string());
                pos = end + 1;
            }
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            Some(b) if b.is_ascii_digit() => {
                let start = pos;
                while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
                    pos += 1;
                }
                let text = std::str::from_utf8(&bytes[start..pos]).unwrap();
                let value: u32 = text
                    .parse()
                    .map_err(|_| PnmError::Header(format!("number out of range: {text}")))?;
                fields.push(value);
            }
            Some(b) => return Err(PnmError::Header(format!("unexpected byte 0x{b:02x}"))),
        }
    }
    // exactly one whitespace byte separates maxval from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(PnmError::Header("missing separator after maxval".into())),
    }
    if fields[0] == 0 || fields[1] == 0 {
        return Err(PnmError::Header("zero image dimension".into()));
    }
    Ok(Header {
        width: fields[0] as usize,
        height: fields[1] as usize,
        maxval: fields[2],
        comments,
        data_start: pos,
    })
}

/// A decoded image together with the header comment lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotated<T> {
    pub image: T,
    pub comments: Vec<String>,
}

pub fn parse_pgm16(bytes: &[u8]) -> Result<Annotated<DepthImage>, PnmError> {
    let h = parse_header(bytes, "P5")?;
    if h.maxval != 65535 {
        return Err(PnmError::MaxVal(h.maxval));
    }
    let data = &bytes[h.data_start..];
    let expected = h.width * h.height * 2;
    if data.len() != expected {
        return Err(PnmError::Payload {
            expected,
            actual: data.len(),
        });
    }
    let pixels = data
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok(Annotated {
        image: DepthImage {
            width: h.width,
            height: h.height,
            pixels,
        },
        comments: h.comments,
    })
}

pub fn parse_ppm(bytes: &[u8]) -> Result<Annotated<NormalMap>, PnmError> {
    let h = parse_header(bytes, "P6")?;
    if h.maxval != 255 {
        return Err(PnmError::MaxVal(h.maxval));
    }
    let data = &bytes[h.data_start..];
    let expected = h.width * h.height * 3;
    if data.len() != expected {
        return Err(PnmError::Payload {
            expected,
            actual: data.len(),
        });
    }
    let pixels = data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok(Annotated {
        image: NormalMap {
            width: h.width,
            height: h.height,
            pixels,
        },
        comments: h.comments,
    })
}

pub fn save_pgm16(path: impl AsRef<Path>, img: &DepthImage, comment: &str) -> io::Result<()> {
    let mut buf = Vec::with_capacity(64 + img.pixels.len() * 2);
    write_pgm16(&mut buf, img, comment)?;
    fs::write(path, buf)
}

pub fn save_ppm(path: impl AsRef<Path>, img: &NormalMap, comment: &str) -> io::Result<()> {
    let mut buf = Vec::with_capacity(64 + img.pixels.len() * 3);
    write_ppm(&mut buf, img, comment)?;
    fs::write(path, buf)
}

pub fn load_pgm16(path: impl AsRef<Path>) -> Result<Annotated<DepthImage>, PnmError> {
    parse_pgm16(&fs::read(path)?)
}

pub fn load_ppm(path: impl AsRef<Path>) -> Result<Annotated<NormalMap>, PnmError> {
    parse_ppm(&fs::read(path)?)
}
