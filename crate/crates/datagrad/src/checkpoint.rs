//! Binary model checkpoints.
//!
//! Layout, all integers little-endian u32, all floats little-endian f64:
//!
//! ```text
//! magic   "DGRD" (4 bytes)
//! version u32    (1 = single network, 2 = two-headed multi-task network)
//! ```
//!
//! Version 1 continues with the layer count, the layer sizes, then every
//! weight matrix (layer order, row-major) and every bias vector.
//!
//! Version 2 is the two-headed extension: shared layer count, shared layer
//! sizes, the two head widths (digit head first), then shared weights,
//! shared biases, head weights (digit, auxiliary), head biases (digit,
//! auxiliary). The shared stack is everything up to and including the
//! penultimate hidden layer.
//!
//! Loading rejects wrong magic and unknown versions, and reports truncation
//! with the byte offset where data ran out.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::multitask::{Head, MultiTaskParams};
use crate::network::NetworkParams;
use crate::tensor::{Matrix, Vector};

pub const MAGIC: [u8; 4] = *b"DGRD";
pub const VERSION_SINGLE: u32 = 1;
pub const VERSION_MULTITASK: u32 = 2;

struct Reader<'a> {
    path: &'a Path,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format(
                self.path,
                format!(
                    "truncated at byte offset {}: wanted {} more bytes, file has {}",
                    self.pos,
                    n,
                    self.buf.len() - self.pos
                ),
            ));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64_block(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = self.take(count * 8)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect())
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn write_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn write_net_body(out: &mut Vec<u8>, params: &NetworkParams) {
    out.extend_from_slice(&(params.layer_sizes.len() as u32).to_le_bytes());
    for &n in &params.layer_sizes {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for w in &params.weights {
        write_f64s(out, w.as_slice());
    }
    for b in &params.biases {
        write_f64s(out, b.as_slice());
    }
}

fn read_sizes(r: &mut Reader) -> Result<Vec<usize>> {
    let count = r.u32()? as usize;
    if count < 2 {
        return Err(Error::format(r.path, format!("layer count {count} is below 2")));
    }
    let mut sizes = Vec::with_capacity(count);
    for _ in 0..count {
        let n = r.u32()? as usize;
        if n == 0 {
            return Err(Error::format(r.path, "zero layer size".to_string()));
        }
        sizes.push(n);
    }
    Ok(sizes)
}

fn read_net_body(r: &mut Reader) -> Result<NetworkParams> {
    let sizes = read_sizes(r)?;
    let mut weights = Vec::with_capacity(sizes.len() - 1);
    for l in 0..sizes.len() - 1 {
        let data = r.f64_block(sizes[l + 1] * sizes[l])?;
        weights.push(Matrix::from_vec(sizes[l + 1], sizes[l], data)?);
    }
    let mut biases = Vec::with_capacity(sizes.len() - 1);
    for l in 0..sizes.len() - 1 {
        biases.push(Vector::from_vec(r.f64_block(sizes[l + 1])?));
    }
    Ok(NetworkParams { layer_sizes: sizes, weights, biases, seed: 0 })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn open_checked<'a>(path: &'a Path, buf: &'a [u8], want_version: u32) -> Result<Reader<'a>> {
    let mut r = Reader { path, buf, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::format(
            path,
            format!("bad magic {magic:02x?}, expected \"DGRD\""),
        ));
    }
    let version = r.u32()?;
    if version != want_version {
        return Err(Error::format(
            path,
            format!("unsupported checkpoint version {version}, expected {want_version}"),
        ));
    }
    Ok(r)
}

/// Reads just the format version, for dispatching between model kinds.
pub fn peek_version(path: impl AsRef<Path>) -> Result<u32> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { path, buf: &buf, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::format(path, format!("bad magic {magic:02x?}, expected \"DGRD\"")));
    }
    r.u32()
}

pub fn save_network(params: &NetworkParams, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION_SINGLE.to_le_bytes());
    write_net_body(&mut out, params);
    write_file(path.as_ref(), &out)
}

pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkParams> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = open_checked(path, &buf, VERSION_SINGLE)?;
    let params = read_net_body(&mut r)?;
    if !r.done() {
        return Err(Error::format(
            path,
            format!("{} trailing bytes after parameter data", buf.len() - r.pos),
        ));
    }
    Ok(params)
}

pub fn save_multitask(mt: &MultiTaskParams, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION_MULTITASK.to_le_bytes());
    out.extend_from_slice(&(mt.shared.layer_sizes.len() as u32).to_le_bytes());
    for &n in &mt.shared.layer_sizes {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    out.extend_from_slice(&(mt.head0.weight.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(mt.head1.weight.rows() as u32).to_le_bytes());
    for w in &mt.shared.weights {
        write_f64s(&mut out, w.as_slice());
    }
    for b in &mt.shared.biases {
        write_f64s(&mut out, b.as_slice());
    }
    write_f64s(&mut out, mt.head0.weight.as_slice());
    write_f64s(&mut out, mt.head1.weight.as_slice());
    write_f64s(&mut out, mt.head0.bias.as_slice());
    write_f64s(&mut out, mt.head1.bias.as_slice());
    write_file(path.as_ref(), &out)
}

pub fn load_multitask(path: impl AsRef<Path>) -> Result<MultiTaskParams> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = open_checked(path, &buf, VERSION_MULTITASK)?;
    let sizes = read_sizes(&mut r)?;
    let head0_out = r.u32()? as usize;
    let head1_out = r.u32()? as usize;
    if head0_out == 0 || head1_out == 0 {
        return Err(Error::format(path, "zero head width".to_string()));
    }
    let mut weights = Vec::with_capacity(sizes.len() - 1);
    for l in 0..sizes.len() - 1 {
        let data = r.f64_block(sizes[l + 1] * sizes[l])?;
        weights.push(Matrix::from_vec(sizes[l + 1], sizes[l], data)?);
    }
    let mut biases = Vec::with_capacity(sizes.len() - 1);
    for l in 0..sizes.len() - 1 {
        biases.push(Vector::from_vec(r.f64_block(sizes[l + 1])?));
    }
    let penultimate = *sizes.last().unwrap();
    let head0_w = Matrix::from_vec(head0_out, penultimate, r.f64_block(head0_out * penultimate)?)?;
    let head1_w = Matrix::from_vec(head1_out, penultimate, r.f64_block(head1_out * penultimate)?)?;
    let head0_b = Vector::from_vec(r.f64_block(head0_out)?);
    let head1_b = Vector::from_vec(r.f64_block(head1_out)?);
    if !r.done() {
        return Err(Error::format(
            path,
            format!("{} trailing bytes after parameter data", buf.len() - r.pos),
        ));
    }
    Ok(MultiTaskParams {
        shared: NetworkParams { layer_sizes: sizes, weights, biases, seed: 0 },
        head0: Head { weight: head0_w, bias: head0_b },
        head1: Head { weight: head1_w, bias: head1_b },
        seed: 0,
    })
}
