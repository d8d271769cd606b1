//! Binary containers for kernels and projection-matrix sets.
//!
//! Both formats are little-endian: a 4-byte magic, `u32` shape fields,
//! then raw `f32` payload. Round trips are bit-exact; readers reject
//! bad magic, truncation, trailing bytes, and non-finite values.

use std::fs;
use std::path::Path;

use super::{ConvError, Kernel, ProjectionMatrix, ProjectionMatrixSet};

const KERNEL_MAGIC: &[u8; 4] = b"SKRN";
const PROJECTION_MAGIC: &[u8; 4] = b"SPRJ";

/// Upper bound on any header dimension; keeps a corrupt header from
/// asking for an absurd allocation.
const MAX_DIM: u32 = 1 << 16;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], path: &Path) -> Reader<'a> {
        Reader {
            buf,
            pos: 0,
            path: path.display().to_string(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ConvError> {
        if self.pos + n > self.buf.len() {
            return Err(ConvError::Truncated {
                path: self.path.clone(),
                expected: self.pos + n,
                found: self.buf.len(),
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, expected: &'static [u8; 4], name: &'static str) -> Result<(), ConvError> {
        if self.take(4)? != expected {
            return Err(ConvError::BadMagic {
                path: self.path.clone(),
                expected: name,
            });
        }
        Ok(())
    }

    fn dim(&mut self) -> Result<usize, ConvError> {
        let bytes = self.take(4)?;
        let v = u32::from_le_bytes(bytes.try_into().expect("4 bytes"));
        if v == 0 || v > MAX_DIM {
            return Err(ConvError::MalformedHeader {
                path: self.path.clone(),
                reason: format!("dimension {v} out of range 1..={MAX_DIM}"),
            });
        }
        Ok(v as usize)
    }

    /// `n` floats, rejecting NaN and infinity. `index` in the error is
    /// relative to this block.
    fn floats(&mut self, n: usize) -> Result<Vec<f32>, ConvError> {
        let bytes = self.take(n * 4)?;
        let mut out = Vec::with_capacity(n);
        for (index, chunk) in bytes.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            if !v.is_finite() {
                return Err(ConvError::NonFinite {
                    path: self.path.clone(),
                    index,
                });
            }
            out.push(v);
        }
        Ok(out)
    }

    fn finish(self) -> Result<(), ConvError> {
        if self.pos != self.buf.len() {
            return Err(ConvError::MalformedHeader {
                path: self.path,
                reason: format!("{} trailing bytes", self.buf.len() - self.pos),
            });
        }
        Ok(())
    }
}

fn push_dims(out: &mut Vec<u8>, dims: &[usize]) {
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
}

fn push_floats(out: &mut Vec<u8>, values: &[f32]) {
    for &v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn write_kernel(kernel: &Kernel, path: impl AsRef<Path>) -> Result<(), ConvError> {
    let mut out = Vec::with_capacity(20 + kernel.data().len() * 4);
    out.extend_from_slice(KERNEL_MAGIC);
    push_dims(
        &mut out,
        &[
            kernel.kernel_height(),
            kernel.kernel_width(),
            kernel.c_in(),
            kernel.c_out(),
        ],
    );
    push_floats(&mut out, kernel.data());
    fs::write(path, out)?;
    Ok(())
}

pub fn read_kernel(path: impl AsRef<Path>) -> Result<Kernel, ConvError> {
    let path = path.as_ref();
    let buf = fs::read(path)?;
    let mut r = Reader::new(&buf, path);
    r.magic(KERNEL_MAGIC, "SKRN")?;
    let kh = r.dim()?;
    let kw = r.dim()?;
    let c_in = r.dim()?;
    let c_out = r.dim()?;
    let data = r.floats(kh * kw * c_in * c_out)?;
    r.finish()?;
    Kernel::from_data(kh, kw, c_in, c_out, data)
}

pub fn write_projection_set(
    set: &ProjectionMatrixSet,
    path: impl AsRef<Path>,
) -> Result<(), ConvError> {
    let mut out = Vec::new();
    out.extend_from_slice(PROJECTION_MAGIC);
    push_dims(&mut out, &[set.groups.len()]);
    for p in &set.groups {
        push_dims(
            &mut out,
            &[
                p.target_height(),
                p.target_width(),
                p.source_height(),
                p.source_width(),
            ],
        );
        push_floats(&mut out, p.data());
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_projection_set(path: impl AsRef<Path>) -> Result<ProjectionMatrixSet, ConvError> {
    let path = path.as_ref();
    let buf = fs::read(path)?;
    let mut r = Reader::new(&buf, path);
    r.magic(PROJECTION_MAGIC, "SPRJ")?;
    let count = r.dim()?;
    let mut groups = Vec::with_capacity(count);
    for _ in 0..count {
        let th = r.dim()?;
        let tw = r.dim()?;
        let sh = r.dim()?;
        let sw = r.dim()?;
        let data = r.floats(th * tw * sh * sw)?;
        groups.push(ProjectionMatrix::from_data(th, tw, sh, sw, data)?);
    }
    r.finish()?;
    Ok(ProjectionMatrixSet { groups })
}
