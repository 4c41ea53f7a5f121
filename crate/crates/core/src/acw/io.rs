//! `EMB1` embedding files and `ACW1` head files, both little-endian.
//!
//! ```text
//! EMB1: "EMB1" u32 version u32 count u32 dim u8 tag_len tag[tag_len]
//!       u32 labels[count] f32 vectors[count * dim]
//! ACW1: "ACW1" u32 dim u32 hidden f64 w1[hidden * dim] f64 b1[hidden]
//!       f64 w2[hidden] f64 b2
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{AcwError, ConfidenceHead, EmbeddingSet, Result};

pub const EMB_VERSION: u32 = 1;

fn format_err(kind: &'static str, reason: impl Into<String>) -> AcwError {
    AcwError::Format {
        kind,
        reason: reason.into(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    kind: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| format_err(self.kind, "truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| format_err(self.kind, "size overflow"))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(format_err(
                self.kind,
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}

pub fn encode_embeddings(set: &EmbeddingSet) -> Result<Vec<u8>> {
    let tag = set.modality.as_bytes();
    let tag_len = u8::try_from(tag.len())
        .map_err(|_| AcwError::Config("modality tag longer than 255 bytes".into()))?;
    let mut out = Vec::with_capacity(17 + tag.len() + set.len() * (4 + 4 * set.dim));
    out.extend_from_slice(b"EMB1");
    for v in [EMB_VERSION, set.len() as u32, set.dim as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.push(tag_len);
    out.extend_from_slice(tag);
    for l in &set.labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    for v in &set.vectors {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingSet> {
    let mut r = Reader {
        bytes,
        pos: 0,
        kind: "EMB1",
    };
    if r.take(4)? != b"EMB1" {
        return Err(format_err("EMB1", "bad magic"));
    }
    let version = r.u32()?;
    if version != EMB_VERSION {
        return Err(format_err("EMB1", format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let tag_len = r.take(1)?[0] as usize;
    let tag = std::str::from_utf8(r.take(tag_len)?)
        .map_err(|_| format_err("EMB1", "modality tag is not UTF-8"))?
        .to_string();
    let labels = r
        .take(count.checked_mul(4).ok_or_else(|| format_err("EMB1", "size overflow"))?)?
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let n = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| format_err("EMB1", "size overflow"))?;
    let vectors = r
        .take(n)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    r.finish()?;
    EmbeddingSet::new(tag, dim, labels, vectors)
}

pub fn save_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_embeddings(set)?)?;
    Ok(())
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    decode_embeddings(&fs::read(path)?)
}

pub fn encode_head(head: &ConfidenceHead) -> Result<Vec<u8>> {
    head.validate()?;
    let mut out = Vec::with_capacity(12 + 8 * head.parameter_count());
    out.extend_from_slice(b"ACW1");
    out.extend_from_slice(&(head.dim as u32).to_le_bytes());
    out.extend_from_slice(&(head.hidden as u32).to_le_bytes());
    for v in head.w1.iter().chain(&head.b1).chain(&head.w2) {
        out.write_all(&v.to_le_bytes())?;
    }
    out.extend_from_slice(&head.b2.to_le_bytes());
    Ok(out)
}

pub fn decode_head(bytes: &[u8]) -> Result<ConfidenceHead> {
    let mut r = Reader {
        bytes,
        pos: 0,
        kind: "ACW1",
    };
    if r.take(4)? != b"ACW1" {
        return Err(format_err("ACW1", "bad magic"));
    }
    let dim = r.u32()? as usize;
    let hidden = r.u32()? as usize;
    let w1 = r.f64s(
        hidden
            .checked_mul(dim)
            .ok_or_else(|| format_err("ACW1", "size overflow"))?,
    )?;
    let b1 = r.f64s(hidden)?;
    let w2 = r.f64s(hidden)?;
    let b2 = r.f64s(1)?[0];
    r.finish()?;
    let head = ConfidenceHead {
        dim,
        hidden,
        w1,
        b1,
        w2,
        b2,
    };
    head.validate()?;
    Ok(head)
}

pub fn save_head(head: &ConfidenceHead, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_head(head)?)?;
    Ok(())
}

pub fn load_head(path: impl AsRef<Path>) -> Result<ConfidenceHead> {
    decode_head(&fs::read(path)?)
}
