//! Randomized embeddings: l1 into Hamming space, l2 into l1.
//!
//! The l1 map hashes each coordinate onto a random grid of width 2r and
//! compresses the d sub-hashes of one output bit into a single sign by
//! XOR-ing per-bucket random signs. For a pair at l1 distance `dist`, a bit
//! differs with probability exactly (1 - prod_j P[sub-hash j collides]) / 2,
//! which is at most `alpha0` when dist <= r and at least `alpha1` when
//! dist >= (1+eps) r. Thresholds A0 and A1 sit between k*alpha0 and
//! k*alpha1 with a deviation margin on each side, so Hamming decisions at
//! radius A0 with additive slack (A1-A0)/k translate back to l1 decisions
//! at radius r with relative slack eps, with high probability per pair.
//!
//! The l2 map is a Gaussian sketch: rows of N(0,1) entries, scaled so that
//! the expected l1 length of the image equals the l2 length of the source.
//!
//! Both maps regenerate their random tables from counter-derived streams on
//! every application instead of storing them; a family is a seed plus a
//! parameter block, and mapping the same point twice gives the same output.

use rand::Rng;
use rayon::prelude::*;

use crate::dataset::{BitPointSet, Metric, PointSet, Seed};
use crate::error::{Error, Result};

/// Output dimension multiplier: k = ceil(C4 * eps^-2 * ln n) bits or rows.
pub const C4: f64 = 8.0;
/// Guaranteed threshold separation: A1 - A0 >= C5 * k * eps.
pub const C5: f64 = 0.02;
/// Deviation margin multiplier: margin = C6 * sqrt(k * ln n), clamped.
pub const C6: f64 = 0.4;

/// Hard ceiling on Hamming bits per point. Beyond this the map cost would
/// dwarf everything else at desk scale; the net layer re-verifies against
/// true distances anyway, so extra bits buy nothing.
pub const BITS_CAP: usize = 512;
/// Hard ceiling on Gaussian sketch rows, same reasoning.
pub const ROWS_CAP: usize = 256;

fn check_eps_open01(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::EpsOutOfRange(eps, "(0, 1)"));
    }
    Ok(())
}

fn embed_dim(n: usize, eps: f64, cap: usize) -> usize {
    let lnn = (n.max(2) as f64).ln();
    let k = (C4 * eps.powi(-2) * lnn).ceil() as usize;
    k.min(cap)
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Random sign of grid bucket `h` under the per-sub-hash seed.
fn bucket_sign(seed: u64, h: i64) -> bool {
    mix64(seed ^ (h as u64)) & 1 == 1
}

/// An l1 -> Hamming hash family, reusable across point sets of the same
/// dimension. Mapping is deterministic given the family.
#[derive(Debug, Clone)]
pub struct L1HashFamily {
    seed: Seed,
    /// Point count the thresholds were calibrated for.
    pub n_build: usize,
    /// Source dimension; also the number of sub-hashes per output bit.
    pub d: usize,
    pub r: f64,
    pub eps: f64,
    /// Output bits per point.
    pub k: usize,
    pub alpha0: f64,
    pub alpha1: f64,
    pub margin: f64,
    /// Close threshold: l1 distance <= r maps below this whp.
    pub a0: f64,
    /// Far threshold: l1 distance >= (1+eps) r maps above this whp.
    pub a1: f64,
}

impl L1HashFamily {
    pub fn new(n: usize, d: usize, r: f64, eps: f64, seed: Seed) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::NonPositiveRadius);
        }
        check_eps_open01(eps)?;
        if d == 0 || n == 0 {
            return Err(Error::EmptyDataset);
        }
        let k = embed_dim(n, eps, BITS_CAP);
        let df = d as f64;
        let alpha0 = 0.5 * (1.0 - (1.0 - 1.0 / (2.0 * df)).powi(d as i32));
        let alpha1 = 0.5 * (1.0 - (1.0 - (1.0 + eps) / (2.0 * df)).powi(d as i32));
        let gap = alpha1 - alpha0;
        let lnn = (n.max(2) as f64).ln();
        // The raw deviation margin can exceed half the gap once eps is
        // small; clamping to 40% of the gap keeps A0 < A1 with a fifth of
        // the gap left between them.
        let margin = (C6 * (k as f64 * lnn).sqrt()).min(0.4 * k as f64 * gap);
        let a0 = alpha0 * k as f64 + margin;
        let a1 = alpha1 * k as f64 - margin;
        // Holds for every d >= 1 and eps in (0,1): the gap is at least
        // 0.11 * eps per bit and the clamp preserves a fifth of it.
        assert!(a1 - a0 >= C5 * k as f64 * eps, "threshold separation lost");
        Ok(L1HashFamily { seed, n_build: n, d, r, eps, k, alpha0, alpha1, margin, a0, a1 })
    }

    /// Radius and additive slack for the Hamming side: a Hamming net at
    /// radius A0 with slack ((A1-A0)/k) * k corresponds to an l1 net at
    /// radius r with relative slack eps.
    pub fn hamming_params(&self) -> (f64, f64) {
        (self.a0, (self.a1 - self.a0) / self.k as f64)
    }

    /// Maps every row of `x` to its k-bit image.
    pub fn map_points(&self, x: &PointSet) -> BitPointSet {
        assert_eq!(x.d(), self.d, "family dimension mismatch");
        assert_eq!(x.metric(), Metric::L1, "l1 family applied to non-l1 points");
        let n = x.n();
        let words = self.k.div_ceil(64);
        let two_r = 2.0 * self.r;
        // One unit of work is one 64-bit word of output for all points:
        // regenerate the tables for those bits, scan every row. Chunks are
        // independent, so the parallel collect is order-stable.
        let columns: Vec<Vec<u64>> = (0..words)
            .into_par_iter()
            .map(|w| {
                let lo = w * 64;
                let hi = (lo + 64).min(self.k);
                let mut col = vec![0u64; n];
                let mut coord = vec![0u32; self.d];
                let mut shift = vec![0.0f64; self.d];
                let mut sign_seed = vec![0u64; self.d];
                for bit in lo..hi {
                    let mut rng = self.seed.stream(bit as u64);
                    for j in 0..self.d {
                        coord[j] = rng.gen_range(0..self.d as u32);
                        shift[j] = rng.gen::<f64>() * two_r;
                        sign_seed[j] = rng.gen::<u64>();
                    }
                    let m = 1u64 << (bit - lo);
                    for (i, c) in col.iter_mut().enumerate() {
                        let row = x.row(i);
                        let mut parity = false;
                        for j in 0..self.d {
                            let h = ((row[coord[j] as usize] + shift[j]) / two_r).floor() as i64;
                            parity ^= bucket_sign(sign_seed[j], h);
                        }
                        if parity {
                            *c |= m;
                        }
                    }
                }
                col
            })
            .collect();
        let mut out = BitPointSet::new_zero(n, self.k).expect("n, k >= 1");
        for i in 0..n {
            let row = out.row_mut(i);
            for (w, col) in columns.iter().enumerate() {
                row[w] = col[i];
            }
        }
        out
    }
}

/// Builds a hash family calibrated to `x` and maps `x` through it.
pub fn l1_to_hamming(x: &PointSet, r: f64, eps: f64, seed: Seed) -> Result<(BitPointSet, L1HashFamily)> {
    let family = L1HashFamily::new(x.n(), x.d(), r, eps, seed)?;
    Ok((family.map_points(x), family))
}

/// A Gaussian l2 -> l1 sketch. The matrix is regenerated from the seed on
/// application; `apply` is deterministic given the map.
#[derive(Debug, Clone)]
pub struct GaussianMap {
    seed: Seed,
    pub d: usize,
    pub rows: usize,
    pub eps: f64,
    /// sqrt(pi/2) / rows; makes the expected l1 image length equal the
    /// source l2 length.
    pub scale: f64,
}

impl GaussianMap {
    pub fn new(n: usize, d: usize, eps: f64, seed: Seed) -> Result<Self> {
        check_eps_open01(eps)?;
        if d == 0 || n == 0 {
            return Err(Error::EmptyDataset);
        }
        let rows = embed_dim(n, eps, ROWS_CAP);
        let scale = (std::f64::consts::PI / 2.0).sqrt() / rows as f64;
        Ok(GaussianMap { seed, d, rows, eps, scale })
    }

    /// Maps every row of `x` into l1 space. Relative distance error has
    /// standard deviation sqrt(pi/2 - 1) / sqrt(rows) per pair.
    pub fn apply(&self, x: &PointSet) -> PointSet {
        assert_eq!(x.d(), self.d, "map dimension mismatch");
        assert_eq!(x.metric(), Metric::L2, "l2 sketch applied to non-l2 points");
        let n = x.n();
        // Row block of the Gaussian matrix per stream, applied to all
        // points; blocks are independent so the parallel collect is stable.
        const BLOCK: usize = 64;
        let blocks = self.rows.div_ceil(BLOCK);
        let pieces: Vec<Vec<f64>> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let lo = b * BLOCK;
                let hi = (lo + BLOCK).min(self.rows);
                let mut rng = self.seed.stream(b as u64);
                let g: Vec<f64> = (0..(hi - lo) * self.d)
                    .map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng))
                    .collect();
                let mut piece = vec![0.0f64; (hi - lo) * n];
                for i in 0..n {
                    let row = x.row(i);
                    for (t, grow) in g.chunks_exact(self.d).enumerate() {
                        let dot: f64 = grow.iter().zip(row).map(|(a, b)| a * b).sum();
                        piece[t * n + i] = dot * self.scale;
                    }
                }
                piece
            })
            .collect();
        let mut data = vec![0.0f64; n * self.rows];
        for (b, piece) in pieces.iter().enumerate() {
            let lo = b * BLOCK;
            let rows_here = piece.len() / n;
            for t in 0..rows_here {
                for i in 0..n {
                    data[i * self.rows + lo + t] = piece[t * n + i];
                }
            }
        }
        let ids = x.ids().to_vec();
        PointSet::new(Metric::L1, n, self.rows, data)
            .and_then(|p| p.with_ids(ids))
            .expect("sketch output is well formed")
    }
}

/// Builds a Gaussian sketch calibrated to `x` and applies it.
pub fn l2_to_l1(x: &PointSet, eps: f64, seed: Seed) -> Result<(PointSet, GaussianMap)> {
    let map = GaussianMap::new(x.n(), x.d(), eps, seed)?;
    Ok((map.apply(x), map))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::gen;

    #[test]
    fn bit_count_follows_the_formula_until_the_cap() {
        let f = L1HashFamily::new(256, 16, 1.0, 0.7, Seed(1)).unwrap();
        // ceil(8 * 0.7^-2 * ln 256) = ceil(90.53...)
        assert_eq!(f.k, 91);
        let f = L1HashFamily::new(512, 16, 1.0, 0.05, Seed(1)).unwrap();
        assert_eq!(f.k, BITS_CAP);
    }

    #[test]
    fn thresholds_are_ordered_and_separated() {
        for n in [2usize, 64, 512, 4096] {
            for d in [1usize, 2, 8, 32, 333] {
                for eps in [0.01, 0.05, 0.1, 0.3, 0.7, 0.99] {
                    let f = L1HashFamily::new(n, d, 1.0, eps, Seed(9)).unwrap();
                    assert!(f.a0 > 0.0);
                    assert!(f.a1 > f.a0, "n={n} d={d} eps={eps}");
                    assert!(f.a1 - f.a0 >= C5 * f.k as f64 * eps);
                    assert!(f.a1 < f.k as f64);
                }
            }
        }
    }

    #[test]
    fn mapping_is_deterministic() {
        let x = gen::uniform(40, 6, Metric::L1, Seed(3));
        let f = L1HashFamily::new(40, 6, 0.5, 0.3, Seed(4)).unwrap();
        let b1 = f.map_points(&x);
        let b2 = f.map_points(&x);
        for i in 0..40 {
            assert_eq!(b1.row(i), b2.row(i));
        }
        // Identical points map to identical bit rows.
        let twin = x.subset(&[7, 7]).unwrap();
        let tb = f.map_points(&twin);
        assert_eq!(tb.row(0), tb.row(1));
        assert_eq!(tb.hamming(0, 1), 0);
    }

    #[test]
    fn close_and_far_pairs_separate_in_expectation() {
        // Pairs at distance r/2 should land clearly below A0, pairs at
        // 3r on the far side of A1. Loose per-pair check; the strict
        // aggregate version is an acceptance criterion.
        let r = 1.0;
        let d = 8;
        let mut data = Vec::new();
        // 20 close pairs, 20 far pairs along coordinate 0.
        for t in 0..20 {
            let base = t as f64 * 100.0;
            data.extend(std::iter::repeat(base).take(d));
            let mut q = vec![base; d];
            q[0] += r / 2.0;
            data.extend(q);
        }
        for t in 0..20 {
            let base = 5000.0 + t as f64 * 100.0;
            data.extend(std::iter::repeat(base).take(d));
            let mut q = vec![base; d];
            q[0] += 3.0 * r;
            data.extend(q);
        }
        let x = PointSet::new(Metric::L1, 80, d, data).unwrap();
        let (bits, f) = l1_to_hamming(&x, r, 0.3, Seed(11)).unwrap();
        let mut close_ok = 0;
        let mut far_ok = 0;
        for t in 0..20 {
            if (bits.hamming(2 * t, 2 * t + 1) as f64) <= f.a0 {
                close_ok += 1;
            }
            let off = 40 + 2 * t;
            if (bits.hamming(off, off + 1) as f64) >= f.a1 {
                far_ok += 1;
            }
        }
        assert!(close_ok >= 18, "close pairs misplaced: {close_ok}/20");
        assert!(far_ok >= 18, "far pairs misplaced: {far_ok}/20");
    }

    #[test]
    fn family_rejects_bad_parameters() {
        assert!(matches!(
            L1HashFamily::new(10, 4, 0.0, 0.2, Seed(0)),
            Err(Error::NonPositiveRadius)
        ));
        assert!(matches!(
            L1HashFamily::new(10, 4, 1.0, 0.0, Seed(0)),
            Err(Error::EpsOutOfRange(..))
        ));
        assert!(matches!(
            L1HashFamily::new(10, 4, 1.0, 1.0, Seed(0)),
            Err(Error::EpsOutOfRange(..))
        ));
    }

    #[test]
    fn gaussian_sketch_preserves_l2_as_l1() {
        let x = gen::gaussian(60, 24, Metric::L2, Seed(5));
        let (y, map) = l2_to_l1(&x, 0.2, Seed(6)).unwrap();
        assert_eq!(y.metric(), Metric::L1);
        assert_eq!(y.d(), map.rows);
        // Pairwise ratios concentrate around 1 with sd ~ 4.7% at 256 rows.
        // The worst pair gets a generous tail; the average must be tight.
        let mut worst: f64 = 0.0;
        let mut total = 0.0;
        let mut pairs = 0u32;
        for i in 0..x.n() {
            for j in (i + 1)..x.n() {
                let err = (y.dist(i, j) / x.dist(i, j) - 1.0).abs();
                worst = worst.max(err);
                total += err;
                pairs += 1;
            }
        }
        assert!(worst < 0.25, "worst distortion {worst}");
        let mean = total / pairs as f64;
        assert!(mean < 0.06, "mean distortion {mean}");
        // Determinism.
        let y2 = map.apply(&x);
        for (a, b) in y.data().iter().zip(y2.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rows_follow_the_formula_until_the_cap() {
        let m = GaussianMap::new(256, 24, 0.5, Seed(1)).unwrap();
        // ceil(8 * 4 * ln 256) = ceil(177.4...)
        assert_eq!(m.rows, 178);
        let m = GaussianMap::new(4096, 24, 0.1, Seed(1)).unwrap();
        assert_eq!(m.rows, ROWS_CAP);
    }
}
