//! Model checkpoint container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "LECKPT01"
//! header     u32 length, then UTF-8 text of `key=value` lines
//! layers     u32 count, then per layer:
//!              u8 kind (0 dense, 1 sparse)
//!              u32 name length, name bytes
//!              f64 epsilon (0 for dense)
//!              kernel: u32 ndim, ndim × u32 dims
//!              bias:   u32 ndim, ndim × u32 dims
//!              kernel values (f64), then bias values (f64)
//! ```

use std::path::Path;

use super::Tensor;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"LECKPT01";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    Sparse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    pub kind: LayerKind,
    pub name: String,
    pub epsilon: f64,
    pub kernel: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    /// Free-form metadata, kept in insertion order.
    pub header: Vec<(String, String)>,
    pub layers: Vec<LayerRecord>,
}

impl Checkpoint {
    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let mut text = String::new();
        for (k, v) in &self.header {
            text.push_str(k);
            text.push('=');
            text.push_str(v);
            text.push('\n');
        }
        put_u32(&mut out, text.len());
        out.extend_from_slice(text.as_bytes());
        put_u32(&mut out, self.layers.len());
        for l in &self.layers {
            out.push(match l.kind {
                LayerKind::Dense => 0,
                LayerKind::Sparse => 1,
            });
            put_u32(&mut out, l.name.len());
            out.extend_from_slice(l.name.as_bytes());
            out.extend_from_slice(&l.epsilon.to_le_bytes());
            for t in [&l.kernel, &l.bias] {
                put_u32(&mut out, t.shape().len());
                for &d in t.shape() {
                    put_u32(&mut out, d);
                }
            }
            for t in [&l.kernel, &l.bias] {
                for v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let hlen = r.u32()?;
        let text = std::str::from_utf8(r.take(hlen)?)
            .map_err(|_| Error::Format("checkpoint header is not UTF-8".into()))?;
        let mut header = Vec::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad header line {line:?}")))?;
            header.push((k.to_string(), v.to_string()));
        }
        let count = r.u32()?;
        let mut layers = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let kind = match r.take(1)?[0] {
                0 => LayerKind::Dense,
                1 => LayerKind::Sparse,
                k => return Err(Error::Format(format!("unknown layer kind {k}"))),
            };
            let nlen = r.u32()?;
            let name = String::from_utf8(r.take(nlen)?.to_vec())
                .map_err(|_| Error::Format("layer name is not UTF-8".into()))?;
            let epsilon = r.f64()?;
            let kshape = r.shape()?;
            let bshape = r.shape()?;
            let kernel = r.tensor(&kshape)?;
            let bias = r.tensor(&bshape)?;
            layers.push(LayerRecord {
                kind,
                name,
                epsilon,
                kernel,
                bias,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after checkpoint",
                bytes.len() - r.pos
            )));
        }
        Ok(Self { header, layers })
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("checkpoint field fits in u32");
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn shape(&mut self) -> Result<Vec<usize>> {
        let nd = self.u32()?;
        if nd > 8 {
            return Err(Error::Format(format!("tensor rank {nd}")));
        }
        (0..nd).map(|_| self.u32()).collect()
    }

    fn tensor(&mut self, shape: &[usize]) -> Result<Tensor> {
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Format(format!("tensor shape {shape:?} overflows")))?;
        if n.saturating_mul(8) > self.bytes.len() - self.pos {
            return Err(Error::Format(format!("checkpoint truncated in tensor {shape:?}")));
        }
        let data = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Tensor::from_vec(shape, data)
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
