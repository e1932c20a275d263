//! Point sets, bit vectors, deterministic seeding, and the two on-disk
//! formats (CSV and a packed binary layout).
//!
//! Everything downstream is randomized, so reproducibility lives here:
//! a [`Seed`] fans out into independent ChaCha8 streams via counter-based
//! splitting. Two runs with the same seed and the same data produce the
//! same output regardless of thread count, because parallel sections only
//! ever combine order-independent results.

use std::io::Read as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Root seed for a randomized computation.
///
/// `stream(i)` yields the i-th independent generator; `child(tag)` derives a
/// fresh root for a sub-computation. Both are pure functions of the inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seed(pub u64);

impl Seed {
    /// Generator for stream `idx`. Streams with distinct indices are
    /// independent; ChaCha8 keys the stream counter separately from the seed.
    pub fn stream(self, idx: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(idx);
        rng
    }

    /// Primary generator, stream 0.
    pub fn rng(self) -> ChaCha8Rng {
        self.stream(0)
    }

    /// Derived root seed for a tagged sub-computation (splitmix64 mix).
    pub fn child(self, tag: u64) -> Seed {
        let mut z = self.0 ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        Seed(z ^ (z >> 31))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    L1,
    L2,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::L1 => "l1",
            Metric::L2 => "l2",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "l1" | "L1" => Ok(Metric::L1),
            "l2" | "L2" => Ok(Metric::L2),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

/// Dense row-major point set over a real metric.
///
/// Invariants: `data.len() == n * d`, every value finite, `n >= 1`, `d >= 1`,
/// `ids.len() == n`. Indices are `u32` throughout the crate; point sets are
/// desk scale, nowhere near that limit.
#[derive(Debug, Clone)]
pub struct PointSet {
    metric: Metric,
    n: usize,
    d: usize,
    data: Vec<f64>,
    ids: Vec<u64>,
}

impl PointSet {
    pub fn new(metric: Metric, n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::EmptyDataset);
        }
        if data.len() != n * d {
            return Err(Error::RaggedRows { row: 0, expected: n * d, got: data.len() });
        }
        for (i, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { row: i / d + 1, col: i % d + 1 });
            }
        }
        let ids = (0..n as u64).collect();
        Ok(PointSet { metric, n, d, data, ids })
    }

    /// Same points under explicit external identifiers.
    pub fn with_ids(mut self, ids: Vec<u64>) -> Result<Self> {
        if ids.len() != self.n {
            return Err(Error::RaggedRows { row: 0, expected: self.n, got: ids.len() });
        }
        self.ids = ids;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Distance between two rows of this set.
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        dist_slices(self.metric, self.row(i), self.row(j))
    }

    /// Sub-set restricted to `rows` (in the given order), ids carried over.
    pub fn subset(&self, rows: &[u32]) -> Result<PointSet> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut data = Vec::with_capacity(rows.len() * self.d);
        let mut ids = Vec::with_capacity(rows.len());
        for &r in rows {
            data.extend_from_slice(self.row(r as usize));
            ids.push(self.ids[r as usize]);
        }
        PointSet::new(self.metric, rows.len(), self.d, data).and_then(|p| p.with_ids(ids))
    }

    /// Ratio of the largest pairwise distance to the smallest nonzero one.
    /// Exact O(n^2 d) scan; this is a diagnostic, not an inner loop.
    pub fn spread(&self) -> Result<f64> {
        let mut max = 0.0f64;
        let mut min_pos = f64::INFINITY;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let d = self.dist(i, j);
                max = max.max(d);
                if d > 0.0 {
                    min_pos = min_pos.min(d);
                }
            }
        }
        if !min_pos.is_finite() {
            return Err(Error::AllPointsIdentical);
        }
        Ok(max / min_pos)
    }
}

/// Distance between two coordinate slices of equal length.
pub fn dist_slices(metric: Metric, a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    match metric {
        Metric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        Metric::L2 => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
    }
}

/// Bit-packed binary point set under the Hamming distance.
///
/// Rows are `words` little-endian u64 words; bits past `k` in the last word
/// are zero, which keeps XOR+popcount distances honest.
#[derive(Debug, Clone)]
pub struct BitPointSet {
    n: usize,
    k: usize,
    words: usize,
    bits: Vec<u64>,
}

impl BitPointSet {
    pub fn new_zero(n: usize, k: usize) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::EmptyDataset);
        }
        let words = k.div_ceil(64);
        Ok(BitPointSet { n, k, words, bits: vec![0u64; n * words] })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of bits per row.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn words_per_row(&self) -> usize {
        self.words
    }

    pub fn set_bit(&mut self, row: usize, bit: usize, v: bool) {
        let w = row * self.words + bit / 64;
        let m = 1u64 << (bit % 64);
        if v {
            self.bits[w] |= m;
        } else {
            self.bits[w] &= !m;
        }
    }

    pub fn get_bit(&self, row: usize, bit: usize) -> bool {
        (self.bits[row * self.words + bit / 64] >> (bit % 64)) & 1 == 1
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [u64] {
        &mut self.bits[i * self.words..(i + 1) * self.words]
    }

    /// Hamming distance between rows `i` and `j`.
    pub fn hamming(&self, i: usize, j: usize) -> u64 {
        hamming_slices(self.row(i), self.row(j))
    }

    /// Interprets a 0/1-valued real point set as bit rows.
    pub fn from_zero_one(ps: &PointSet) -> Result<Self> {
        let mut out = BitPointSet::new_zero(ps.n(), ps.d())?;
        for i in 0..ps.n() {
            for (j, &v) in ps.row(i).iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                if v == 1.0 {
                    out.set_bit(i, j, true);
                } else {
                    return Err(Error::NotBinaryValue { row: i + 1, col: j + 1, value: v });
                }
            }
        }
        Ok(out)
    }

    pub fn subset(&self, rows: &[u32]) -> Result<BitPointSet> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut out = BitPointSet::new_zero(rows.len(), self.k)?;
        for (t, &r) in rows.iter().enumerate() {
            let src = self.row(r as usize).to_vec();
            out.row_mut(t).copy_from_slice(&src);
        }
        Ok(out)
    }
}

pub fn hamming_slices(a: &[u64], b: &[u64]) -> u64 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones() as u64).sum()
}

/// Reject absurd dimensions before allocating. Generous for desk scale.
const MAX_ELEMENTS: u64 = 1 << 28;

/// Parses CSV bytes into a point set.
///
/// One row per line, comma-separated, blank lines skipped. If the first
/// non-blank line contains any field that does not parse as a number it is
/// treated as a header and dropped. Row/column numbers in errors are
/// 1-based and count the header.
pub fn parse_csv(bytes: &[u8], metric: Metric) -> Result<PointSet> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::BadHeader(format!("input is not valid UTF-8: {e}")))?;
    let mut data: Vec<f64> = Vec::new();
    let mut d: Option<usize> = None;
    let mut n = 0usize;
    let mut first_data_row = true;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if first_data_row {
            first_data_row = false;
            let looks_like_header = fields.iter().any(|f| f.parse::<f64>().is_err());
            if looks_like_header {
                continue;
            }
        }
        let expected = *d.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(Error::RaggedRows { row: lineno + 1, expected, got: fields.len() });
        }
        for (col, f) in fields.iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| Error::BadNumber {
                row: lineno + 1,
                col: col + 1,
                token: (*f).to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { row: lineno + 1, col: col + 1 });
            }
            data.push(v);
        }
        n += 1;
        if (n as u64) * (expected as u64) > MAX_ELEMENTS {
            return Err(Error::ScaleExceeded(format!("more than {MAX_ELEMENTS} values")));
        }
    }
    let d = d.ok_or(Error::EmptyDataset)?;
    PointSet::new(metric, n, d, data)
}

const PACKED_MAGIC: &[u8; 4] = b"RNK1";

/// Parses the packed binary format.
///
/// Layout: magic "RNK1", u64 n, u64 d, u8 metric tag (0 = l1, 1 = l2), then
/// n*d little-endian f64 values row-major. No padding, no trailing bytes.
pub fn parse_packed(bytes: &[u8]) -> Result<PointSet> {
    if bytes.len() < 4 + 8 + 8 + 1 {
        return Err(Error::BadHeader("truncated header".into()));
    }
    if &bytes[0..4] != PACKED_MAGIC {
        return Err(Error::BadHeader("bad magic".into()));
    }
    let n = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
    let d = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let metric = match bytes[20] {
        0 => Metric::L1,
        1 => Metric::L2,
        t => return Err(Error::BadHeader(format!("unknown metric tag {t}"))),
    };
    if n == 0 || d == 0 {
        return Err(Error::EmptyDataset);
    }
    if n.checked_mul(d).is_none_or(|e| e > MAX_ELEMENTS) {
        return Err(Error::ScaleExceeded(format!("{n} x {d} values")));
    }
    let count = (n * d) as usize;
    let body = &bytes[21..];
    if body.len() != count * 8 {
        return Err(Error::BadHeader(format!(
            "expected {} payload bytes, found {}",
            count * 8,
            body.len()
        )));
    }
    let mut data = Vec::with_capacity(count);
    for (i, chunk) in body.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::NonFiniteValue {
                row: i / d as usize + 1,
                col: i % d as usize + 1,
            });
        }
        data.push(v);
    }
    PointSet::new(metric, n as usize, d as usize, data)
}

/// Serializes to the packed binary format. `parse_packed` round-trips this
/// bit-exactly.
pub fn write_packed(ps: &PointSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(21 + ps.data.len() * 8);
    out.extend_from_slice(PACKED_MAGIC);
    out.extend_from_slice(&(ps.n as u64).to_le_bytes());
    out.extend_from_slice(&(ps.d as u64).to_le_bytes());
    out.push(match ps.metric {
        Metric::L1 => 0,
        Metric::L2 => 1,
    });
    for v in &ps.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Csv,
    Packed,
}

/// Loads a point set from disk. For CSV the metric is supplied by the
/// caller; packed files carry their own metric tag (the argument is
/// ignored).
pub fn load_points(path: &Path, format: FileFormat, metric: Metric) -> Result<PointSet> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    match format {
        FileFormat::Csv => parse_csv(&bytes, metric),
        FileFormat::Packed => parse_packed(&bytes),
    }
}

pub fn save_packed(ps: &PointSet, path: &Path) -> Result<()> {
    std::fs::write(path, write_packed(ps))?;
    Ok(())
}

/// Synthetic inputs for tests and the bench command.
pub mod gen {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    /// n standard Gaussian points in d dimensions.
    pub fn gaussian(n: usize, d: usize, metric: Metric, seed: Seed) -> PointSet {
        let mut rng = seed.stream(17);
        let data: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        PointSet::new(metric, n, d, data).expect("generated data is well formed")
    }

    /// n uniform points in [0, 1]^d.
    pub fn uniform(n: usize, d: usize, metric: Metric, seed: Seed) -> PointSet {
        let mut rng = seed.stream(18);
        let data: Vec<f64> = (0..n * d).map(|_| rng.gen::<f64>()).collect();
        PointSet::new(metric, n, d, data).expect("generated data is well formed")
    }

    /// n uniform k-bit rows.
    pub fn bits(n: usize, k: usize, seed: Seed) -> BitPointSet {
        let mut rng = seed.stream(19);
        let mut out = BitPointSet::new_zero(n, k).expect("n, k >= 1");
        for i in 0..n {
            for j in 0..k {
                if rng.gen::<bool>() {
                    out.set_bit(i, j, true);
                }
            }
        }
        out
    }
}
