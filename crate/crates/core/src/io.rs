//! Binary persistence: URPC tensor files, JSON-headed tensor containers,
//! and PGM image dumps.
//!
//! Tensor file layout (little-endian): magic `URPC`, format version `u16`,
//! rank `u16`, dims as `u64` each, then the row-major `f64` payload. A
//! container reuses the same prefix with the rank sentinel `0xFFFF`,
//! followed by a `u64` JSON header length, the header bytes, and then a
//! sequence of ordinary tensor records.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"URPC";
pub const FORMAT_VERSION: u16 = 1;
const CONTAINER_RANK: u16 = 0xFFFF;

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

fn write_header<W: Write>(w: &mut W, rank: u16, dims: &[u64]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u16::<LittleEndian>(rank)?;
    for &d in dims {
        w.write_u64::<LittleEndian>(d)?;
    }
    Ok(())
}

fn read_prefix<R: Read>(r: &mut R, path: &Path) -> Result<u16> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| format_err(path, "file too short for magic"))?;
    if &magic != MAGIC {
        return Err(format_err(
            path,
            format!("bad magic {magic:?}, expected {MAGIC:?}"),
        ));
    }
    let version = r
        .read_u16::<LittleEndian>()
        .map_err(|_| format_err(path, "missing version"))?;
    if version != FORMAT_VERSION {
        return Err(format_err(
            path,
            format!("unsupported format version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    r.read_u16::<LittleEndian>()
        .map_err(|_| format_err(path, "missing rank").into())
}

fn write_payload<W: Write>(w: &mut W, values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

fn read_payload<R: Read>(r: &mut R, len: usize, path: &Path) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(
            r.read_f64::<LittleEndian>()
                .map_err(|_| format_err(path, "payload truncated"))?,
        );
    }
    Ok(out)
}

pub fn write_tensor2(path: &Path, x: &Array2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor2_to(&mut w, x)?;
    w.flush()?;
    Ok(())
}

pub fn write_tensor2_to<W: Write>(w: &mut W, x: &Array2<f64>) -> Result<()> {
    write_header(w, 2, &[x.nrows() as u64, x.ncols() as u64])?;
    write_payload(w, x.iter().copied())
}

pub fn write_tensor1_to<W: Write>(w: &mut W, x: &Array1<f64>) -> Result<()> {
    write_header(w, 1, &[x.len() as u64])?;
    write_payload(w, x.iter().copied())
}

pub fn read_tensor2(path: &Path) -> Result<Array2<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let x = read_tensor2_from(&mut r, path)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(format_err(path, "trailing bytes after payload"));
    }
    Ok(x)
}

pub fn read_tensor2_from<R: Read>(r: &mut R, path: &Path) -> Result<Array2<f64>> {
    let rank = read_prefix(r, path)?;
    if rank != 2 {
        return Err(format_err(path, format!("expected rank 2, found {rank}")));
    }
    let rows = r
        .read_u64::<LittleEndian>()
        .map_err(|_| format_err(path, "missing dims"))? as usize;
    let cols = r
        .read_u64::<LittleEndian>()
        .map_err(|_| format_err(path, "missing dims"))? as usize;
    let data = read_payload(r, rows * cols, path)?;
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| format_err(path, format!("shape error: {e}")))
}

pub fn read_tensor1_from<R: Read>(r: &mut R, path: &Path) -> Result<Array1<f64>> {
    let rank = read_prefix(r, path)?;
    if rank != 1 {
        return Err(format_err(path, format!("expected rank 1, found {rank}")));
    }
    let len = r
        .read_u64::<LittleEndian>()
        .map_err(|_| format_err(path, "missing dims"))? as usize;
    Ok(Array1::from(read_payload(r, len, path)?))
}

/// Writes a container: prefix with the container sentinel, a JSON header,
/// then whatever tensor records the caller appends through the writer.
pub struct ContainerWriter<W: Write> {
    sink: W,
}

impl<W: Write> ContainerWriter<W> {
    pub fn new(mut sink: W, header: &impl serde::Serialize) -> Result<Self> {
        let json = serde_json::to_vec(header)?;
        sink.write_all(MAGIC)?;
        sink.write_u16::<LittleEndian>(FORMAT_VERSION)?;
        sink.write_u16::<LittleEndian>(CONTAINER_RANK)?;
        sink.write_u64::<LittleEndian>(json.len() as u64)?;
        sink.write_all(&json)?;
        Ok(ContainerWriter { sink })
    }

    pub fn tensor2(&mut self, x: &Array2<f64>) -> Result<()> {
        write_tensor2_to(&mut self.sink, x)
    }

    pub fn tensor1(&mut self, x: &Array1<f64>) -> Result<()> {
        write_tensor1_to(&mut self.sink, x)
    }

    pub fn finish(mut self) -> Result<()> {
        self.sink.flush()?;
        Ok(())
    }
}

/// Reads a container opened by [`ContainerWriter`].
pub struct ContainerReader<R: Read> {
    source: R,
    path: std::path::PathBuf,
    header: String,
}

impl<R: Read> ContainerReader<R> {
    pub fn new(mut source: R, path: &Path) -> Result<Self> {
        let rank = read_prefix(&mut source, path)?;
        if rank != CONTAINER_RANK {
            return Err(format_err(
                path,
                format!("not a container (rank field {rank:#06x})"),
            ));
        }
        let len = source
            .read_u64::<LittleEndian>()
            .map_err(|_| format_err(path, "missing header length"))? as usize;
        let mut buf = vec![0u8; len];
        source
            .read_exact(&mut buf)
            .map_err(|_| format_err(path, "header truncated"))?;
        let header = String::from_utf8(buf)
            .map_err(|_| format_err(path, "header is not valid utf-8"))?;
        Ok(ContainerReader {
            source,
            path: path.to_path_buf(),
            header,
        })
    }

    pub fn header<T: serde::de::DeserializeOwned>(&self) -> Result<T> {
        Ok(serde_json::from_str(&self.header)?)
    }

    pub fn tensor2(&mut self) -> Result<Array2<f64>> {
        read_tensor2_from(&mut self.source, &self.path)
    }

    pub fn tensor1(&mut self) -> Result<Array1<f64>> {
        read_tensor1_from(&mut self.source, &self.path)
    }

    pub fn expect_end(mut self) -> Result<()> {
        let mut rest = [0u8; 1];
        if self.source.read(&mut rest)? != 0 {
            return Err(format_err(&self.path, "trailing bytes after last tensor"));
        }
        Ok(())
    }
}

/// 8-bit binary PGM (P5) dump of one frame; values are clamped to [0, 1]
/// and mapped linearly to 0..255.
pub fn write_pgm(path: &Path, frame: &Array2<f64>) -> Result<()> {
    let (h, w) = frame.dim();
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{w} {h}\n255\n")?;
    for v in frame.iter() {
        let byte = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        out.write_all(&[byte])?;
    }
    out.flush()?;
    Ok(())
}
