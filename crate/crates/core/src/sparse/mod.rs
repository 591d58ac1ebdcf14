//! Bitmap-compressed sparse operands shared by both execution domains.
//!
//! A fiber is one row (activations) or one column (weights) stored as an
//! occupancy bitmap plus the packed nonzero INT8 values in position order.
//! Fibers travel in 128-position chunks; bit order inside a chunk window is
//! little-endian (position `128*seq` is bit 0).

mod bitmap;
mod file;
mod matrix;

pub use bitmap::Bitmap;
pub use file::{read_matrix, read_matrix_file, write_matrix, write_matrix_file, MAGIC, VERSION};
pub use matrix::{BitmapMatrix, Layout};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Positions per chunk window.
pub const CHUNK_BITS: usize = 128;
/// Largest dense input accepted by [`compress`].
pub const MAX_FIBER_LEN: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitmapVector {
    pub bits: Bitmap,
    pub values: Vec<i8>,
}

impl BitmapVector {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Checks `popcount(bits) == values.len()` and that no packed value is zero.
    pub fn validate(&self) -> Result<()> {
        let ones = self.bits.count_ones();
        if ones != self.values.len() {
            return Err(Error::Integrity(format!(
                "popcount {ones} does not match {} packed values",
                self.values.len()
            )));
        }
        if let Some(i) = self.values.iter().position(|&v| v == 0) {
            return Err(Error::Integrity(format!("packed value {i} is zero")));
        }
        Ok(())
    }

    /// Value at logical position `i` (zero when the bit is clear).
    pub fn get(&self, i: usize) -> i8 {
        if self.bits.get(i) {
            self.values[self.bits.rank(i)]
        } else {
            0
        }
    }

    pub fn chunks(&self) -> Chunks<'_> {
        Chunks {
            vector: self,
            seq: 0,
            offset: 0,
        }
    }
}

/// Compresses a dense INT8 sequence. Zero entries never occupy a slot.
///
/// # Panics
/// When `dense` is longer than [`MAX_FIBER_LEN`].
pub fn compress(dense: &[i8]) -> BitmapVector {
    assert!(
        dense.len() <= MAX_FIBER_LEN,
        "fiber of {} elements exceeds 2^24",
        dense.len()
    );
    let mut bits = Bitmap::zeros(dense.len());
    let mut values = Vec::new();
    for (i, &v) in dense.iter().enumerate() {
        if v != 0 {
            bits.set(i);
            values.push(v);
        }
    }
    BitmapVector { bits, values }
}

pub fn decompress(v: &BitmapVector) -> Result<Vec<i8>> {
    v.validate()?;
    let mut dense = vec![0i8; v.len()];
    for (pos, &val) in v.bits.iter_ones().zip(&v.values) {
        dense[pos] = val;
    }
    Ok(dense)
}

/// One crossbar transfer unit: a 128-bit occupancy window and its packed values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub seq: usize,
    pub bit_window: u128,
    pub payload: Vec<i8>,
}

impl Chunk {
    /// 128-bit crossbar beats needed: one for the window, then 16 values per beat.
    pub fn beats(&self) -> usize {
        1 + self.payload.len().div_ceil(16)
    }
}

pub struct Chunks<'a> {
    vector: &'a BitmapVector,
    seq: usize,
    offset: usize,
}

impl Iterator for Chunks<'_> {
    type Item = Chunk;

    fn next(&mut self) -> Option<Chunk> {
        if self.seq >= self.vector.bits.num_windows() {
            return None;
        }
        let bit_window = self.vector.bits.window(self.seq);
        let n = bit_window.count_ones() as usize;
        let payload = self.vector.values[self.offset..self.offset + n].to_vec();
        let chunk = Chunk {
            seq: self.seq,
            bit_window,
            payload,
        };
        self.seq += 1;
        self.offset += n;
        Some(chunk)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.vector.bits.num_windows() - self.seq;
        (left, Some(left))
    }
}

impl ExactSizeIterator for Chunks<'_> {}

pub fn chunk_iter(v: &BitmapVector) -> Vec<Chunk> {
    v.chunks().collect()
}

/// Result of intersecting two occupancy bitmaps.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchList {
    pub indices: Vec<usize>,
    pub a_offsets: Vec<usize>,
    pub b_offsets: Vec<usize>,
}

impl MatchList {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn inner_join(a: &Bitmap, b: &Bitmap) -> Result<MatchList> {
    let indices: Vec<usize> = a.and(b)?.iter_ones().collect();
    let a_offsets = prefix_offsets(a, &indices)?;
    let b_offsets = prefix_offsets(b, &indices)?;
    Ok(MatchList {
        indices,
        a_offsets,
        b_offsets,
    })
}

/// Exclusive prefix popcount at each position: `popcount(bits[0..p))`.
///
/// Positions must be ascending; one pass over the words serves all of them.
pub fn prefix_offsets(bits: &Bitmap, positions: &[usize]) -> Result<Vec<usize>> {
    let words = bits.words();
    let mut out = Vec::with_capacity(positions.len());
    let mut word_idx = 0;
    let mut before = 0usize;
    let mut prev = None;
    for &p in positions {
        if p >= bits.len() {
            return Err(Error::Index(format!(
                "position {p} beyond bitmap length {}",
                bits.len()
            )));
        }
        if prev.is_some_and(|q| p < q) {
            return Err(Error::Precondition(format!("positions not ascending at {p}")));
        }
        prev = Some(p);
        while word_idx < p / 64 {
            before += words[word_idx].count_ones() as usize;
            word_idx += 1;
        }
        let rem = p % 64;
        let partial = if rem == 0 {
            0
        } else {
            (words[word_idx] & ((1u64 << rem) - 1)).count_ones() as usize
        };
        out.push(before + partial);
    }
    Ok(out)
}

pub fn match_count(a: &Bitmap, b: &Bitmap) -> Result<usize> {
    a.check_len(b)?;
    Ok(a.words()
        .iter()
        .zip(b.words())
        .map(|(x, y)| (x & y).count_ones() as usize)
        .sum())
}

/// Visits the packed value pair of every matched position in ascending
/// order. Ranks are tracked word by word, so no match list is materialized.
/// Both fibers must already be validated and of equal length.
pub fn try_for_each_match<E, F>(a: &BitmapVector, b: &BitmapVector, mut f: F) -> Result<(), E>
where
    F: FnMut(i8, i8) -> Result<(), E>,
{
    let (aw, bw) = (a.bits.words(), b.bits.words());
    let (mut ra, mut rb) = (0usize, 0usize);
    for (&x, &y) in aw.iter().zip(bw) {
        let mut m = x & y;
        while m != 0 {
            let low = (m & m.wrapping_neg()) - 1;
            f(
                a.values[ra + (x & low).count_ones() as usize],
                b.values[rb + (y & low).count_ones() as usize],
            )?;
            m &= m - 1;
        }
        ra += x.count_ones() as usize;
        rb += y.count_ones() as usize;
    }
    Ok(())
}

/// Per-chunk match counts between two equal-length bitmaps.
pub fn chunk_match_counts(a: &Bitmap, b: &Bitmap) -> Result<Vec<u32>> {
    a.check_len(b)?;
    Ok((0..a.num_windows())
        .map(|s| (a.window(s) & b.window(s)).count_ones())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bm(s: &str) -> Bitmap {
        s.parse().unwrap()
    }

    #[test]
    fn compress_examples() {
        let v = compress(&[0, 0, 0, 0]);
        assert_eq!(v.bits.to_string(), "0000");
        assert!(v.values.is_empty());

        let v = compress(&[3, 0, -2, 0]);
        assert_eq!(v.bits.to_string(), "1010");
        assert_eq!(v.values, vec![3, -2]);
        assert_eq!(decompress(&v).unwrap(), vec![3, 0, -2, 0]);
    }

    #[test]
    fn decompress_rejects_malformed() {
        let v = BitmapVector {
            bits: bm("1010"),
            values: vec![3],
        };
        assert!(matches!(decompress(&v), Err(Error::Integrity(_))));
        let v = BitmapVector {
            bits: bm("1010"),
            values: vec![3, 0],
        };
        assert!(matches!(decompress(&v), Err(Error::Integrity(_))));
    }

    #[test]
    fn round_trip_exhaustive_short_ternary() {
        // every vector over {-1, 0, 2} up to length 8, plus all bit patterns to 12
        for len in 0..=8usize {
            for code in 0..3usize.pow(len as u32) {
                let mut c = code;
                let dense: Vec<i8> = (0..len)
                    .map(|_| {
                        let d = [-1i8, 0, 2][c % 3];
                        c /= 3;
                        d
                    })
                    .collect();
                assert_eq!(decompress(&compress(&dense)).unwrap(), dense);
            }
        }
        for len in 9..=12usize {
            for mask in 0..(1u32 << len) {
                let dense: Vec<i8> = (0..len).map(|i| if mask >> i & 1 == 1 { -7 } else { 0 }).collect();
                assert_eq!(decompress(&compress(&dense)).unwrap(), dense);
            }
        }
    }

    #[test]
    fn chunk_examples() {
        let mut dense = vec![0i8; 128];
        for i in [0, 5, 64, 100, 127] {
            dense[i] = 1;
        }
        let chunks = chunk_iter(&compress(&dense));
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].payload.len(), 5);

        let mut dense = vec![0i8; 300];
        dense[299] = 9;
        let chunks = chunk_iter(&compress(&dense));
        assert_eq!(chunks.len(), 3);
        assert_eq!(chunks.iter().map(|c| c.seq).collect::<Vec<_>>(), [0, 1, 2]);
        // positions 300..383 are padding and read as zero
        assert_eq!(chunks[2].bit_window, 1u128 << 43);
        assert_eq!(chunks[2].payload, vec![9]);
    }

    #[test]
    fn join_examples() {
        let m = inner_join(&bm("1100"), &bm("1010")).unwrap();
        assert_eq!(m.indices, vec![0]);
        assert_eq!(m.a_offsets, vec![0]);
        assert_eq!(m.b_offsets, vec![0]);

        assert!(inner_join(&bm("1111"), &bm("0000")).unwrap().is_empty());
        assert!(matches!(inner_join(&bm("111"), &bm("0000")), Err(Error::Dimension(_))));
    }

    #[test]
    fn offsets_examples() {
        assert_eq!(prefix_offsets(&bm("1011"), &[0, 2, 3]).unwrap(), vec![0, 1, 2]);
        assert!(prefix_offsets(&bm("1011"), &[]).unwrap().is_empty());
        assert!(matches!(prefix_offsets(&bm("1011"), &[4]), Err(Error::Index(_))));
    }

    #[test]
    fn match_count_examples() {
        assert_eq!(match_count(&bm("1100"), &bm("1010")).unwrap(), 1);
        let x = bm("1101000111010010");
        assert_eq!(match_count(&x, &x).unwrap(), x.count_ones());
        assert!(match_count(&bm("11"), &bm("110")).is_err());
    }

    fn arb_bits(len: usize) -> impl Strategy<Value = Vec<bool>> {
        proptest::collection::vec(any::<bool>(), len)
    }

    proptest! {
        #[test]
        fn round_trip_random(dense in proptest::collection::vec(any::<i8>(), 0..1500)) {
            prop_assert_eq!(decompress(&compress(&dense)).unwrap(), dense);
        }

        #[test]
        fn chunks_partition_fiber(dense in proptest::collection::vec(
            prop_oneof![3 => Just(0i8), 1 => any::<i8>()], 0..700)) {
            let v = compress(&dense);
            let chunks = chunk_iter(&v);
            prop_assert_eq!(chunks.len(), dense.len().div_ceil(128));
            let values: Vec<i8> = chunks.iter().flat_map(|c| c.payload.clone()).collect();
            prop_assert_eq!(&values, &v.values);
            for c in &chunks {
                prop_assert_eq!(c.payload.len(), c.bit_window.count_ones() as usize);
                for j in 0..128 {
                    let pos = 128 * c.seq + j;
                    let expect = pos < dense.len() && dense[pos] != 0;
                    prop_assert_eq!(c.bit_window >> j & 1 == 1, expect);
                }
            }
        }

        #[test]
        fn join_equals_position_scan((a, b) in (1usize..300).prop_flat_map(|n| (arb_bits(n), arb_bits(n)))) {
            let (ba, bb) = (Bitmap::from_bools(&a), Bitmap::from_bools(&b));
            let m = inner_join(&ba, &bb).unwrap();
            let mut idx = vec![];
            let mut ao = vec![];
            let mut bo = vec![];
            let (mut ra, mut rb) = (0, 0);
            for k in 0..a.len() {
                if a[k] && b[k] {
                    idx.push(k);
                    ao.push(ra);
                    bo.push(rb);
                }
                ra += a[k] as usize;
                rb += b[k] as usize;
            }
            prop_assert_eq!(&m.indices, &idx);
            prop_assert_eq!(&m.a_offsets, &ao);
            prop_assert_eq!(&m.b_offsets, &bo);
            prop_assert_eq!(match_count(&ba, &bb).unwrap(), idx.len());
            let per_chunk: u32 = chunk_match_counts(&ba, &bb).unwrap().iter().sum();
            prop_assert_eq!(per_chunk as usize, idx.len());

            // fused walker visits the same value pairs as join + offsets
            let va = BitmapVector { values: (1..=ba.count_ones()).map(|i| (i % 100) as i8 + 1).collect(), bits: ba };
            let vb = BitmapVector { values: (1..=bb.count_ones()).map(|i| -((i % 90) as i8) - 1).collect(), bits: bb };
            let mut seen = vec![];
            try_for_each_match::<(), _>(&va, &vb, |x, y| { seen.push((x, y)); Ok(()) }).unwrap();
            let expect: Vec<(i8, i8)> = m.a_offsets.iter().zip(&m.b_offsets)
                .map(|(&i, &j)| (va.values[i], vb.values[j])).collect();
            prop_assert_eq!(seen, expect);
        }

        #[test]
        fn offsets_equal_cumulative_sum(bits in arb_bits(512), picks in arb_bits(512)) {
            let b = Bitmap::from_bools(&bits);
            let positions: Vec<usize> = (0..512).filter(|&i| picks[i]).collect();
            let mut cum = vec![0usize; 513];
            for i in 0..512 {
                cum[i + 1] = cum[i] + bits[i] as usize;
            }
            let expect: Vec<usize> = positions.iter().map(|&p| cum[p]).collect();
            prop_assert_eq!(prefix_offsets(&b, &positions).unwrap(), expect);
        }
    }
}
