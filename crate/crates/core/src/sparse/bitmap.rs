use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Fixed-length occupancy bitmap. Bit `i` lives in word `i / 64` at bit
/// `i % 64`; bits at or beyond `len` are always zero.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bitmap {
    len: usize,
    words: Vec<u64>,
}

impl Bitmap {
    pub fn zeros(len: usize) -> Self {
        Bitmap {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut bm = Bitmap::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                bm.set(i);
            }
        }
        bm
    }

    /// Builds a bitmap from raw words, rejecting set bits beyond `len`.
    pub fn from_words(len: usize, words: Vec<u64>) -> Result<Self> {
        if words.len() != len.div_ceil(64) {
            return Err(Error::Integrity(format!(
                "{} words cannot hold exactly {len} bits",
                words.len()
            )));
        }
        let bm = Bitmap { len, words };
        if bm.tail_mask_violated() {
            return Err(Error::Integrity("bits set beyond bitmap length".into()));
        }
        Ok(bm)
    }

    fn tail_mask_violated(&self) -> bool {
        let rem = self.len % 64;
        rem != 0 && self.words.last().is_some_and(|w| w >> rem != 0)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Number of set bits strictly before position `i` (`i <= len`).
    pub fn rank(&self, i: usize) -> usize {
        assert!(i <= self.len);
        let full: usize = self.words[..i / 64].iter().map(|w| w.count_ones() as usize).sum();
        let rem = i % 64;
        if rem == 0 {
            full
        } else {
            full + (self.words[i / 64] & ((1u64 << rem) - 1)).count_ones() as usize
        }
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let tz = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * 64 + tz)
                }
            })
        })
    }

    /// 128-bit window covering positions `[128*seq, 128*seq + 127]`,
    /// position `128*seq` in bit 0. Positions past the end read as zero.
    pub fn window(&self, seq: usize) -> u128 {
        let lo = self.words.get(2 * seq).copied().unwrap_or(0) as u128;
        let hi = self.words.get(2 * seq + 1).copied().unwrap_or(0) as u128;
        lo | hi << 64
    }

    pub fn num_windows(&self) -> usize {
        self.len.div_ceil(128)
    }

    pub fn and(&self, other: &Bitmap) -> Result<Bitmap> {
        self.check_len(other)?;
        Ok(Bitmap {
            len: self.len,
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect(),
        })
    }

    pub(crate) fn check_len(&self, other: &Bitmap) -> Result<()> {
        if self.len != other.len {
            return Err(Error::Dimension(format!(
                "bitmap lengths differ: {} vs {}",
                self.len, other.len
            )));
        }
        Ok(())
    }

    /// Little-endian byte image: byte `j` holds positions `8j..8j+7`,
    /// position `8j` in bit 0.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let nbytes = self.len.div_ceil(8);
        self.words.iter().flat_map(|w| w.to_le_bytes()).take(nbytes).collect()
    }

    pub fn from_le_bytes(len: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::Integrity(format!(
                "{} bitmap bytes for {len} positions",
                bytes.len()
            )));
        }
        let words = bytes
            .chunks(8)
            .map(|c| {
                let mut buf = [0u8; 8];
                buf[..c.len()].copy_from_slice(c);
                u64::from_le_bytes(buf)
            })
            .collect();
        Bitmap::from_words(len, words)
    }
}

/// Parses `"1010"` with the first character as position 0.
impl FromStr for Bitmap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Input(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Bitmap::from_bools(&bits))
    }
}

impl fmt::Display for Bitmap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Bitmap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len <= 256 {
            write!(f, "Bitmap({self})")
        } else {
            write!(f, "Bitmap(len={}, ones={})", self.len, self.count_ones())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        let b: Bitmap = "1011".parse().unwrap();
        assert_eq!(b.to_string(), "1011");
        assert_eq!(b.count_ones(), 3);
        assert_eq!(b.words(), &[0b1101]);
    }

    #[test]
    fn rank_matches_scan() {
        let b: Bitmap = "0110100111010001".parse().unwrap();
        let mut acc = 0;
        for i in 0..=b.len() {
            assert_eq!(b.rank(i), acc);
            if i < b.len() && b.get(i) {
                acc += 1;
            }
        }
    }

    #[test]
    fn byte_image_is_little_endian() {
        let b: Bitmap = "10110000".parse().unwrap();
        assert_eq!(b.to_le_bytes(), vec![0x0D]);
        assert_eq!(Bitmap::from_le_bytes(8, &[0x0D]).unwrap(), b);
    }

    #[test]
    fn rejects_bits_past_length() {
        assert!(Bitmap::from_le_bytes(4, &[0x10]).is_err());
        assert!(Bitmap::from_words(3, vec![0b1000]).is_err());
    }

    #[test]
    fn window_reads_zero_past_end() {
        let mut b = Bitmap::zeros(300);
        b.set(299);
        b.set(128);
        assert_eq!(b.num_windows(), 3);
        assert_eq!(b.window(1), 1);
        assert_eq!(b.window(2), 1u128 << (299 - 256));
        assert_eq!(b.window(3), 0);
    }
}
