//! Binary file formats.
//!
//! FMAT (feature and similarity matrices):
//!
//! ```text
//! b"FMAT" | u32 version = 1 | u32 rows | u32 cols | rows*cols f32, row-major
//! ```
//!
//! Model checkpoint:
//!
//! ```text
//! b"RRNK" | u32 version = 1 | u32 d_video | u32 d_text | u32 d
//!        | w_video (d_video*d) | b_video (d) | w_text (d_text*d) | b_text (d)
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use crate::encoder::DualEncoder;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const FMAT_MAGIC: &[u8; 4] = b"FMAT";
pub const FMAT_VERSION: u32 = 1;
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RRNK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f32s<T: Scalar>(r: &mut impl Read, count: usize) -> Result<Vec<T>> {
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes).map_err(truncated)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| T::of(f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))))
        .collect())
}

fn write_f32s<T: Scalar>(w: &mut impl Write, values: &[T]) -> io::Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.as_f32().to_le_bytes());
    }
    w.write_all(&bytes)
}

fn truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format("unexpected end of file".into())
    } else {
        Error::Io(e)
    }
}

fn expect_magic(r: &mut impl Read, magic: &[u8; 4], version: u32) -> Result<()> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(truncated)?;
    if &buf != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&buf),
            String::from_utf8_lossy(magic)
        )));
    }
    let v = read_u32(r)?;
    if v != version {
        return Err(Error::Format(format!("unsupported version {v}, expected {version}")));
    }
    Ok(())
}

fn expect_eof(r: &mut impl Read) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(Error::Format("trailing bytes after payload".into())),
    }
}

fn dim_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format(format!("{what} {n} does not fit in u32")))
}

pub fn write_fmat<T: Scalar>(w: &mut impl Write, m: &Matrix<T>) -> Result<()> {
    w.write_all(FMAT_MAGIC)?;
    w.write_all(&FMAT_VERSION.to_le_bytes())?;
    w.write_all(&dim_u32(m.rows(), "rows")?.to_le_bytes())?;
    w.write_all(&dim_u32(m.cols(), "cols")?.to_le_bytes())?;
    write_f32s(w, m.as_slice())?;
    Ok(())
}

pub fn read_fmat<T: Scalar>(r: &mut impl Read) -> Result<Matrix<T>> {
    expect_magic(r, FMAT_MAGIC, FMAT_VERSION)?;
    let rows = read_u32(r)? as usize;
    let cols = read_u32(r)? as usize;
    let data = read_f32s(r, rows * cols)?;
    expect_eof(r)?;
    Matrix::from_vec(rows, cols, data)
}

pub fn save_fmat<T: Scalar>(path: impl AsRef<Path>, m: &Matrix<T>) -> Result<()> {
    let mut buf = Vec::new();
    write_fmat(&mut buf, m)?;
    fs::write(path.as_ref(), buf).map_err(Error::at(&path))?;
    Ok(())
}

pub fn load_fmat<T: Scalar>(path: impl AsRef<Path>) -> Result<Matrix<T>> {
    let bytes = fs::read(path.as_ref()).map_err(Error::at(&path))?;
    read_fmat(&mut bytes.as_slice())
}

pub fn write_checkpoint<T: Scalar>(w: &mut impl Write, model: &DualEncoder<T>) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for (n, what) in [
        (model.d_video(), "d_video"),
        (model.d_text(), "d_text"),
        (model.dim(), "d"),
    ] {
        w.write_all(&dim_u32(n, what)?.to_le_bytes())?;
    }
    for block in model.blocks() {
        write_f32s(w, block)?;
    }
    Ok(())
}

pub fn read_checkpoint<T: Scalar>(r: &mut impl Read) -> Result<DualEncoder<T>> {
    expect_magic(r, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let d_video = read_u32(r)? as usize;
    let d_text = read_u32(r)? as usize;
    let d = read_u32(r)? as usize;
    if d_video == 0 || d_text == 0 || d == 0 {
        return Err(Error::Format("checkpoint dimensions must be >= 1".into()));
    }
    let w_video = Matrix::from_vec(d_video, d, read_f32s(r, d_video * d)?)?;
    let b_video = read_f32s(r, d)?;
    let w_text = Matrix::from_vec(d_text, d, read_f32s(r, d_text * d)?)?;
    let b_text = read_f32s(r, d)?;
    expect_eof(r)?;
    let model = DualEncoder::from_parts(w_video, b_video, w_text, b_text)?;
    if !model.is_finite() {
        return Err(Error::Format("checkpoint holds non-finite parameters".into()));
    }
    Ok(model)
}

pub fn save_checkpoint<T: Scalar>(path: impl AsRef<Path>, model: &DualEncoder<T>) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, model)?;
    fs::write(path.as_ref(), buf).map_err(Error::at(&path))?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<DualEncoder<T>> {
    let bytes = fs::read(path.as_ref()).map_err(Error::at(&path))?;
    read_checkpoint(&mut bytes.as_slice())
}
