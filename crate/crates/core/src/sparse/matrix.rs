use serde::{Deserialize, Serialize};

use super::{compress, decompress, BitmapVector};
use crate::{Error, Result};

/// Which dimension the fibers run along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layout {
    /// One fiber per row (activations, outputs).
    RowMajor,
    /// One fiber per column (weights).
    ColMajor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitmapMatrix {
    pub rows: usize,
    pub cols: usize,
    pub layout: Layout,
    pub fibers: Vec<BitmapVector>,
}

impl BitmapMatrix {
    /// `dense` is row-major regardless of the requested fiber layout.
    pub fn from_dense(rows: usize, cols: usize, dense: &[i8], layout: Layout) -> Result<Self> {
        if dense.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} elements for a {rows}x{cols} matrix",
                dense.len()
            )));
        }
        let fibers = match layout {
            Layout::RowMajor => (0..rows).map(|r| compress(&dense[r * cols..(r + 1) * cols])).collect(),
            Layout::ColMajor => (0..cols)
                .map(|c| {
                    let col: Vec<i8> = (0..rows).map(|r| dense[r * cols + c]).collect();
                    compress(&col)
                })
                .collect(),
        };
        Ok(BitmapMatrix {
            rows,
            cols,
            layout,
            fibers,
        })
    }

    pub fn from_fibers(rows: usize, cols: usize, layout: Layout, fibers: Vec<BitmapVector>) -> Result<Self> {
        let m = BitmapMatrix {
            rows,
            cols,
            layout,
            fibers,
        };
        m.validate()?;
        Ok(m)
    }

    /// Length of each fiber.
    pub fn fiber_len(&self) -> usize {
        match self.layout {
            Layout::RowMajor => self.cols,
            Layout::ColMajor => self.rows,
        }
    }

    pub fn num_fibers(&self) -> usize {
        match self.layout {
            Layout::RowMajor => self.rows,
            Layout::ColMajor => self.cols,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fibers.len() != self.num_fibers() {
            return Err(Error::Integrity(format!(
                "{} fibers for {:?} {}x{} matrix",
                self.fibers.len(),
                self.layout,
                self.rows,
                self.cols
            )));
        }
        for (i, f) in self.fibers.iter().enumerate() {
            if f.len() != self.fiber_len() {
                return Err(Error::Integrity(format!(
                    "fiber {i} has length {}, expected {}",
                    f.len(),
                    self.fiber_len()
                )));
            }
            f.validate()?;
        }
        Ok(())
    }

    pub fn get(&self, r: usize, c: usize) -> i8 {
        match self.layout {
            Layout::RowMajor => self.fibers[r].get(c),
            Layout::ColMajor => self.fibers[c].get(r),
        }
    }

    /// Row-major dense image.
    pub fn to_dense(&self) -> Result<Vec<i8>> {
        let mut out = vec![0i8; self.rows * self.cols];
        for (f, fiber) in self.fibers.iter().enumerate() {
            for (i, v) in decompress(fiber)?.into_iter().enumerate() {
                let idx = match self.layout {
                    Layout::RowMajor => f * self.cols + i,
                    Layout::ColMajor => i * self.cols + f,
                };
                out[idx] = v;
            }
        }
        Ok(out)
    }

    pub fn nnz(&self) -> usize {
        self.fibers.iter().map(BitmapVector::nnz).sum()
    }

    pub fn density(&self) -> f64 {
        let total = self.rows * self.cols;
        if total == 0 {
            0.0
        } else {
            self.nnz() as f64 / total as f64
        }
    }

    /// Compressed footprint: bitmap bytes plus one byte per packed value.
    pub fn compressed_bytes(&self) -> usize {
        self.fibers.iter().map(|f| f.len().div_ceil(8) + f.nnz()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts_agree_on_elements() {
        let dense: Vec<i8> = (0..12).map(|i| if i % 3 == 0 { 0 } else { i as i8 - 5 }).collect();
        let rm = BitmapMatrix::from_dense(3, 4, &dense, Layout::RowMajor).unwrap();
        let cm = BitmapMatrix::from_dense(3, 4, &dense, Layout::ColMajor).unwrap();
        assert_eq!(rm.fibers.len(), 3);
        assert_eq!(cm.fibers.len(), 4);
        for r in 0..3 {
            for c in 0..4 {
                assert_eq!(rm.get(r, c), dense[r * 4 + c]);
                assert_eq!(cm.get(r, c), dense[r * 4 + c]);
            }
        }
        assert_eq!(rm.to_dense().unwrap(), dense);
        assert_eq!(cm.to_dense().unwrap(), dense);
    }

    #[test]
    fn validate_catches_bad_fiber_length() {
        let mut m = BitmapMatrix::from_dense(2, 2, &[1, 0, 0, 1], Layout::RowMajor).unwrap();
        m.fibers[1] = compress(&[1, 0, 0]);
        assert!(matches!(m.validate(), Err(Error::Integrity(_))));
    }
}
