//! `NFBM` matrix interchange format, all integers little-endian:
//!
//! ```text
//! magic   "NFBM"
//! version u16 (= 1)
//! rows    u32
//! cols    u32
//! layout  u8  (0 = row-major fibers, 1 = column-major fibers)
//! per fiber:
//!   length  u32
//!   bitmap  ceil(length / 8) bytes, byte j bit b = position 8j + b
//!   values  popcount(bitmap) bytes, two's-complement INT8 in position order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Bitmap, BitmapMatrix, BitmapVector, Layout};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NFBM";
pub const VERSION: u16 = 1;

pub fn write_matrix<W: Write>(m: &BitmapMatrix, mut w: W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(m.rows as u32).to_le_bytes())?;
    w.write_all(&(m.cols as u32).to_le_bytes())?;
    w.write_all(&[match m.layout {
        Layout::RowMajor => 0,
        Layout::ColMajor => 1,
    }])?;
    for f in &m.fibers {
        w.write_all(&(f.len() as u32).to_le_bytes())?;
        w.write_all(&f.bits.to_le_bytes())?;
        let bytes: Vec<u8> = f.values.iter().map(|&v| v as u8).collect();
        w.write_all(&bytes)?;
    }
    w.flush()
}

fn read_exact<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated header or record: {e}")))?;
    Ok(buf)
}

pub fn read_matrix<R: Read>(mut r: R) -> Result<BitmapMatrix> {
    let magic: [u8; 4] = read_exact(&mut r)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = u16::from_le_bytes(read_exact(&mut r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let rows = u32::from_le_bytes(read_exact(&mut r)?) as usize;
    let cols = u32::from_le_bytes(read_exact(&mut r)?) as usize;
    let layout = match read_exact::<_, 1>(&mut r)?[0] {
        0 => Layout::RowMajor,
        1 => Layout::ColMajor,
        other => return Err(Error::Format(format!("unknown layout flag {other}"))),
    };
    let nfibers = match layout {
        Layout::RowMajor => rows,
        Layout::ColMajor => cols,
    };
    let mut fibers = Vec::with_capacity(nfibers);
    for _ in 0..nfibers {
        let len = u32::from_le_bytes(read_exact(&mut r)?) as usize;
        let mut bytes = vec![0u8; len.div_ceil(8)];
        r.read_exact(&mut bytes)
            .map_err(|e| Error::Format(format!("truncated bitmap: {e}")))?;
        let bits = Bitmap::from_le_bytes(len, &bytes)?;
        let mut vals = vec![0u8; bits.count_ones()];
        r.read_exact(&mut vals)
            .map_err(|e| Error::Format(format!("truncated values: {e}")))?;
        fibers.push(BitmapVector {
            bits,
            values: vals.into_iter().map(|b| b as i8).collect(),
        });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| Error::Format(e.to_string()))? != 0 {
        return Err(Error::Format("trailing bytes after last fiber".into()));
    }
    BitmapMatrix::from_fibers(rows, cols, layout, fibers)
}

pub fn write_matrix_file(m: &BitmapMatrix, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_matrix(m, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix_file(path: &Path) -> Result<BitmapMatrix> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_matrix(BufReader::new(f))
}
