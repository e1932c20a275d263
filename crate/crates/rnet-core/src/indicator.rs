//! Threshold polynomials and the block indicator matrix.
//!
//! The decision at the heart of the net builder is "does point q lie within
//! Hamming distance r of the set S", batched over many (S, q) pairs. The
//! point set is shuffled and cut into cells of s = ceil(n^alpha) points;
//! the indicator matrix holds one value per (cell, point) pair that flags
//! whether the minimum distance from the point to the cell (excluding the
//! point itself) is at most r (value above 2s) or exceeds r + eps*k (value
//! at most s in absolute value). Pairs in the gap may land on either side.
//!
//! Three backends fill the matrix. `exact` scans cell members. `sampled`
//! estimates distances from a random coordinate sample and takes a majority
//! over repetitions. `ptf` evaluates a polynomial threshold function for
//! the OR of per-member closeness tests: each member contributes a
//! univariate Chebyshev bump q(v) in its agreement count v with the query,
//! scaled so that all-far cells stay small while one close member forces
//! the sum past the decision line. Summed over a cell, the polynomial is a
//! function of the agreement inner products only, so it evaluates as one
//! dot product between a cell vector and a query vector in a basis of
//! parity monomials (the split-vector scheme).
//!
//! The OR polynomial is exposed directly as [`construct_or_ptf`] over
//! Boolean disjuncts: given s disjuncts of dim variables each, thresholds
//! t and t + eps*dim, the returned polynomial P satisfies, over the whole
//! jitter distribution: if every disjunct sum is below t then |P| <= s,
//! and if some disjunct sum reaches t + eps*dim then P > 2s. Disjunct sums
//! are integers, so the construction meets both bounds with certainty; the
//! randomness (interval jitter) exists so that repeated draws give
//! independent polynomials for majority amplification.

use rand::Rng;
use rayon::prelude::*;

use crate::dataset::{hamming_slices, BitPointSet, Seed};
use crate::error::{Error, Result};

/// Degree budget multiplier: degree <= ceil(C1 * (1/eps)^(1/3) * ln(s+1)).
/// The exhaustive feasibility scan in the tests pins this down: 2 is not
/// achievable for single-disjunct instances with a one-integer gap, 4 is.
pub const C1: f64 = 4.0;
/// Sampled backend: coordinates per estimate = ceil(C2 * eps^-2 * ln n).
pub const C2: f64 = 8.0;
/// Sampled backend: majority over ceil(C3 * log2 n) repetitions.
pub const C3: f64 = 10.0;

/// Envelope for the ptf backend; beyond this the split-vector basis blows up.
pub const PTF_MAX_CELL: usize = 16;
pub const PTF_MAX_BITS: usize = 32;
/// Split-vector evaluation keeps full f64 accuracy up to this degree.
pub const PTF_MAX_DEGREE: usize = 8;
/// Materialized monomial expansions are refused beyond this count.
pub const MONOMIAL_CAP: u128 = 1 << 21;
/// Split-vector basis size cap (parity sets of size <= degree).
pub const BASIS_CAP: u128 = 1 << 20;

/// A cell flags as close when the tested value clears this multiple of s;
/// the construction pushes true-side values to 3.15s so that one close
/// member minus s-1 stray units still clears 2s.
const TARGET_FACTOR: f64 = 3.15;
/// Maximum interval widening drawn as jitter on each end.
const MAX_JITTER: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Exact,
    Sampled,
    Ptf,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Exact => "exact",
            Backend::Sampled => "sampled",
            Backend::Ptf => "ptf",
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "exact" => Ok(Backend::Exact),
            "sampled" => Ok(Backend::Sampled),
            "ptf" => Ok(Backend::Ptf),
            other => Err(format!("unknown backend {other:?}")),
        }
    }
}

/// One term of a materialized polynomial: coeff * product of variables.
/// Variables are global indices into the s*dim Boolean input.
#[derive(Debug, Clone)]
pub struct Monomial {
    pub coeff: f64,
    pub vars: Vec<u32>,
}

#[derive(Debug, Clone)]
enum Univariate {
    /// Degenerate false side: constant value, always past the close line.
    Const(f64),
    /// T_degree of the affine map sending [lo, hi] onto [-1, 1].
    Cheb { lo: f64, hi: f64, degree: usize },
}

impl Univariate {
    fn eval(&self, v: f64) -> f64 {
        match *self {
            Univariate::Const(c) => c,
            Univariate::Cheb { lo, hi, degree } => {
                let xi = (2.0 * v - lo - hi) / (hi - lo);
                cheb_t(degree, xi)
            }
        }
    }

    fn degree(&self) -> usize {
        match *self {
            Univariate::Const(_) => 0,
            Univariate::Cheb { degree, .. } => degree,
        }
    }
}

/// Chebyshev polynomial of the first kind by the three-term recurrence;
/// stable for the small degrees used here, valid for any real argument.
fn cheb_t(m: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0f64, x);
    if m == 0 {
        return 1.0;
    }
    for _ in 1..m {
        (prev, cur) = (cur, 2.0 * x * cur - prev);
    }
    cur
}

/// Largest integer strictly below t.
fn int_below(t: f64) -> i64 {
    let f = t.floor();
    if f == t {
        t as i64 - 1
    } else {
        f as i64
    }
}

/// Smallest degree whose Chebyshev growth clears the target at the true
/// threshold, under the widest jitter the construction may draw.
fn needed_degree(s: usize, vf: i64, vt: i64) -> usize {
    debug_assert!(vf >= 0 && vt > vf);
    let lo = -0.5 - MAX_JITTER;
    let hi = vf as f64 + 0.5 + MAX_JITTER;
    let xi = (2.0 * vt as f64 - lo - hi) / (hi - lo);
    let target = TARGET_FACTOR * s as f64;
    for m in 0..=200 {
        if cheb_t(m, xi) >= target {
            return m;
        }
    }
    unreachable!("Chebyshev growth is unbounded for xi > 1");
}

/// Published degree budget for an OR of s disjuncts at relative gap eps.
pub fn degree_budget(s: usize, eps: f64) -> usize {
    (C1 * eps.powf(-1.0 / 3.0) * ((s + 1) as f64).ln()).ceil() as usize
}

fn binom(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let mut r: u128 = 1;
    for i in 0..k.min(n - k) {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

/// Number of parity sets of size up to `deg` over `bits` coordinates.
fn basis_size(bits: usize, deg: usize) -> u128 {
    (0..=deg.min(bits)).map(|c| binom(bits, c)).sum()
}

/// Polynomial threshold function for an OR of s threshold disjuncts.
#[derive(Debug, Clone)]
pub struct OrPtf {
    pub s: usize,
    pub dim: usize,
    pub t: f64,
    pub eps: f64,
    pub degree: usize,
    /// Expansion over the s*dim Boolean variables. Exists for inspection
    /// and cross-checking; `eval` uses the stable per-disjunct form.
    pub monomials: Vec<Monomial>,
    uni: Univariate,
}

fn sample_univariate(
    s: usize,
    dim: usize,
    t: f64,
    eps_dim: f64,
    rng: &mut impl Rng,
) -> Univariate {
    let vf = int_below(t);
    if vf < 0 {
        // No reachable false side: a constant clears the close line and
        // |P| <= s is vacuous.
        return Univariate::Const(3.2 * s as f64);
    }
    let vt = (t + eps_dim).ceil() as i64;
    debug_assert!(vt > vf);
    let degree = needed_degree(s, vf, vt);
    debug_assert!(dim == 0 || vt <= 2 * dim as i64 + 2);
    let j0 = rng.gen::<f64>() * MAX_JITTER;
    let j1 = rng.gen::<f64>() * MAX_JITTER;
    Univariate::Cheb { lo: -0.5 - j0, hi: vf as f64 + 0.5 + j1, degree }
}

/// Builds the OR-of-thresholds polynomial.
///
/// Contract: if every disjunct sum is strictly below t then |P(x)| <= s;
/// if some disjunct sum is at least t + eps*dim then P(x) > 2s. Holds for
/// every draw of the jitter. The degree never exceeds
/// ceil(C1 * (1/eps)^(1/3) * ln(s+1)).
pub fn construct_or_ptf(s: usize, dim: usize, t: f64, eps: f64, seed: Seed) -> Result<OrPtf> {
    if s == 0 || dim == 0 {
        return Err(Error::EmptyDataset);
    }
    if s > PTF_MAX_CELL || dim > PTF_MAX_BITS {
        return Err(Error::ScaleExceeded(format!(
            "or-ptf supports s <= {PTF_MAX_CELL}, dim <= {PTF_MAX_BITS}, got s={s} dim={dim}"
        )));
    }
    if !(t >= 0.0 && t <= dim as f64) {
        return Err(Error::InvalidThreshold { t, dim });
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::EpsOutOfRange(eps, "(0, 1]"));
    }
    let mut rng = seed.stream(0);
    let uni = sample_univariate(s, dim, t, eps * dim as f64, &mut rng);
    let degree = uni.degree();
    let budget = degree_budget(s, eps);
    assert!(degree <= budget, "degree {degree} exceeds budget {budget}");
    let count = s as u128 * basis_size(dim, degree);
    if count > MONOMIAL_CAP {
        return Err(Error::ScaleExceeded(format!("{count} monomials exceed {MONOMIAL_CAP}")));
    }
    // Expand q over one disjunct in the binomial basis: q(v) equals
    // sum_e gamma_e * C(v, e) on all reals, and C(v, e) over 0/1 variables
    // is the sum of all e-subset products. Forward differences at 0..degree
    // give the gamma values exactly.
    let q_at: Vec<f64> = (0..=degree).map(|v| uni.eval(v as f64)).collect();
    let mut gamma = vec![0.0f64; degree + 1];
    for (e, g) in gamma.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (i, qv) in q_at.iter().enumerate().take(e + 1) {
            let sign = if (e - i) % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * binom(e, i) as f64 * qv;
        }
        *g = acc;
    }
    let mut monomials = Vec::with_capacity(count as usize);
    for disjunct in 0..s {
        let base = (disjunct * dim) as u32;
        for (e, &g) in gamma.iter().enumerate() {
            // Enumerate e-subsets of the disjunct's variables.
            let mut idx: Vec<u32> = (0..e as u32).collect();
            loop {
                monomials.push(Monomial {
                    coeff: g,
                    vars: idx.iter().map(|&i| base + i).collect(),
                });
                // Next combination in lexicographic order.
                let mut i = e;
                loop {
                    if i == 0 {
                        break;
                    }
                    i -= 1;
                    if idx[i] != (i + dim - e) as u32 {
                        idx[i] += 1;
                        for j in i + 1..e {
                            idx[j] = idx[j - 1] + 1;
                        }
                        i = usize::MAX;
                        break;
                    }
                }
                if i != usize::MAX {
                    break;
                }
            }
        }
    }
    Ok(OrPtf { s, dim, t, eps, degree, monomials, uni })
}

impl OrPtf {
    /// Evaluates P at a Boolean input of length s*dim (disjuncts
    /// concatenated), using the stable per-disjunct univariate form.
    pub fn eval(&self, x: &[bool]) -> f64 {
        assert_eq!(x.len(), self.s * self.dim, "input length mismatch");
        x.chunks_exact(self.dim)
            .map(|d| self.uni.eval(d.iter().filter(|&&b| b).count() as f64))
            .sum()
    }

    /// Evaluates the materialized expansion term by term. Slow; exists to
    /// cross-check that the expansion and the direct form agree.
    pub fn eval_monomials(&self, x: &[bool]) -> f64 {
        assert_eq!(x.len(), self.s * self.dim, "input length mismatch");
        self.monomials
            .iter()
            .map(|m| {
                if m.vars.iter().all(|&v| x[v as usize]) {
                    m.coeff
                } else {
                    0.0
                }
            })
            .sum()
    }
}

/// Block indicator matrix over a shuffled cell partition.
#[derive(Debug, Clone)]
pub struct IndicatorMatrix {
    pub r: f64,
    pub eps: f64,
    /// Nominal cell size s = ceil(n^alpha); the last cell may be smaller.
    pub cell_size: usize,
    /// Cell partition, point indices into the input set.
    pub cells: Vec<Vec<u32>>,
    /// Row-major (cells x n) decision values: 4|S_i| for close, 0 for far.
    pub values: Vec<f64>,
    pub n: usize,
}

impl IndicatorMatrix {
    pub fn value(&self, cell: usize, col: usize) -> f64 {
        self.values[cell * self.n + col]
    }

    /// True when the entry flags min-distance(col, cell \ {col}) <= r.
    pub fn is_close(&self, cell: usize, col: usize) -> bool {
        self.value(cell, col) > 2.0 * self.cells[cell].len() as f64
    }
}

/// Fisher-Yates partition of 0..n into cells of ceil(n^alpha).
fn shuffled_cells(n: usize, alpha: f64, rng: &mut impl Rng) -> (usize, Vec<Vec<u32>>) {
    let s = (n as f64).powf(alpha).ceil() as usize;
    let s = s.clamp(1, n);
    let mut perm: Vec<u32> = (0..n as u32).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }
    (s, perm.chunks(s).map(|c| c.to_vec()).collect())
}

/// Builds the indicator matrix for `x` at radius r with additive slack
/// eps*k. Every backend derives per-cell randomness from counter-split
/// streams, so results do not depend on thread count.
///
/// Fails with `TooManyCloseEntries` when the flagged entries imply more
/// candidate pairs than the n^1.7 verification budget.
pub fn block_indicator_matrix(
    x: &BitPointSet,
    r: f64,
    eps: f64,
    alpha: f64,
    backend: Backend,
    seed: Seed,
) -> Result<IndicatorMatrix> {
    matrix_inner(x, x, true, r, eps, alpha, backend, seed)
}

/// Bipartite form: cells partition `cell_points`, columns are
/// `query_points`. The two sets must be distinct collections (no
/// self-exclusion is applied). Used by the center-vs-point pipelines.
pub fn block_indicator_matrix_bipartite(
    cell_points: &BitPointSet,
    query_points: &BitPointSet,
    r: f64,
    eps: f64,
    alpha: f64,
    backend: Backend,
    seed: Seed,
) -> Result<IndicatorMatrix> {
    assert_eq!(cell_points.k(), query_points.k(), "bit width mismatch");
    matrix_inner(cell_points, query_points, false, r, eps, alpha, backend, seed)
}

#[allow(clippy::too_many_arguments)]
fn matrix_inner(
    cp: &BitPointSet,
    qp: &BitPointSet,
    same_set: bool,
    r: f64,
    eps: f64,
    alpha: f64,
    backend: Backend,
    seed: Seed,
) -> Result<IndicatorMatrix> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::InvalidAlpha(alpha));
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::NonPositiveRadius);
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::EpsOutOfRange(eps, "(0, 1)"));
    }
    let n = qp.n();
    let k = cp.k();
    let (cell_size, cells) = shuffled_cells(cp.n(), alpha, &mut seed.stream(0));
    let far_cut = r + eps * k as f64;
    let values = match backend {
        Backend::Exact => exact_values(cp, qp, same_set, &cells, far_cut),
        Backend::Sampled => sampled_values(cp, qp, same_set, &cells, r, eps, seed),
        Backend::Ptf => ptf_values(cp, qp, same_set, &cells, r, eps, seed)?,
    };
    let matrix = IndicatorMatrix { r, eps, cell_size, cells, values, n };
    // Flagged entries cost |cell| exact checks each downstream; refuse
    // runs whose verification work would exceed the n^1.7 budget.
    let budget = (cp.n().max(n) as f64).powf(1.7).ceil() as u64;
    let mut pairs = 0u64;
    for (i, cell) in matrix.cells.iter().enumerate() {
        for j in 0..n {
            if matrix.is_close(i, j) {
                pairs += cell.len() as u64;
            }
        }
    }
    if pairs > budget {
        return Err(Error::TooManyCloseEntries { flagged: pairs, cap: budget });
    }
    Ok(matrix)
}

/// Exact backend: flag iff min distance (excluding self) <= r + eps*k.
/// Within the gap this flags everything, which maximizes recall; the
/// mandatory sides are exact by construction.
fn exact_values(
    cp: &BitPointSet,
    qp: &BitPointSet,
    same_set: bool,
    cells: &[Vec<u32>],
    far_cut: f64,
) -> Vec<f64> {
    let n = qp.n();
    let mut values = vec![0.0f64; cells.len() * n];
    values
        .par_chunks_mut(n)
        .zip(cells.par_iter())
        .for_each(|(row, cell)| {
            for (j, slot) in row.iter_mut().enumerate() {
                let mut min = u64::MAX;
                for &m in cell {
                    if same_set && m as usize == j {
                        continue;
                    }
                    min = min.min(hamming_slices(cp.row(m as usize), qp.row(j)));
                }
                if min != u64::MAX && (min as f64) <= far_cut {
                    *slot = 4.0 * cell.len() as f64;
                }
            }
        });
    values
}

/// Sampled backend: per repetition and cell, estimate distances from a
/// with-replacement coordinate sample and vote close when the estimated
/// minimum clears the midpoint of the band; majority across repetitions.
fn sampled_values(
    cp: &BitPointSet,
    qp: &BitPointSet,
    same_set: bool,
    cells: &[Vec<u32>],
    r: f64,
    eps: f64,
    seed: Seed,
) -> Vec<f64> {
    let n = qp.n();
    let k = cp.k();
    let m_samp = (C2 * eps.powi(-2) * (n.max(2) as f64).ln()).ceil() as usize;
    // Sampling pays off only below the full width: at m >= k the exact
    // scan reads fewer words and has no estimation error, so it is the
    // better implementation of the same contract (narrow additive bands
    // land here, e.g. post-embedding slacks).
    if m_samp >= k {
        return exact_values(cp, qp, same_set, cells, r + eps * k as f64);
    }
    let reps = (C3 * (n.max(2) as f64).log2()).ceil() as usize;
    let mid_cut = r + eps * k as f64 / 2.0;
    let votes: Vec<u32> = (0..cells.len())
        .into_par_iter()
        .flat_map_iter(|ci| {
            let cell = &cells[ci];
            let mut cell_votes = vec![0u32; n];
            let words = m_samp.div_ceil(64);
            let mut packed = vec![0u64; words * (cell.len() + 1)];
            for rep in 0..reps {
                let mut rng = seed.stream((1 + rep * cells.len() + ci) as u64);
                let coords: Vec<u32> =
                    (0..m_samp).map(|_| rng.gen_range(0..k as u32)).collect();
                packed.iter_mut().for_each(|w| *w = 0);
                // Pack each member's sampled bits for word-wide compares.
                for (mi, &m) in cell.iter().enumerate() {
                    let base = mi * words;
                    for (c, &coord) in coords.iter().enumerate() {
                        if cp.get_bit(m as usize, coord as usize) {
                            packed[base + c / 64] |= 1u64 << (c % 64);
                        }
                    }
                }
                let qbase = cell.len() * words;
                for j in 0..n {
                    for w in 0..words {
                        packed[qbase + w] = 0;
                    }
                    for (c, &coord) in coords.iter().enumerate() {
                        if qp.get_bit(j, coord as usize) {
                            packed[qbase + c / 64] |= 1u64 << (c % 64);
                        }
                    }
                    let mut est_min = f64::INFINITY;
                    for (mi, &m) in cell.iter().enumerate() {
                        if same_set && m as usize == j {
                            continue;
                        }
                        let mut diff = 0u64;
                        for w in 0..words {
                            diff += (packed[mi * words + w] ^ packed[qbase + w]).count_ones()
                                as u64;
                        }
                        let est = diff as f64 * k as f64 / m_samp as f64;
                        est_min = est_min.min(est);
                    }
                    if est_min <= mid_cut {
                        cell_votes[j] += 1;
                    }
                }
            }
            cell_votes.into_iter()
        })
        .collect();
    let mut values = vec![0.0f64; cells.len() * n];
    for (ci, cell) in cells.iter().enumerate() {
        for j in 0..n {
            if votes[ci * n + j] as usize * 2 > reps {
                values[ci * n + j] = 4.0 * cell.len() as f64;
            }
        }
    }
    values
}

/// Ptf backend: per repetition, draw a fresh jittered polynomial, evaluate
/// every (cell, point) sum via one dot product in the parity basis, and
/// take the majority.
fn ptf_values(
    cp: &BitPointSet,
    qp: &BitPointSet,
    same_set: bool,
    cells: &[Vec<u32>],
    r: f64,
    eps: f64,
    seed: Seed,
) -> Result<Vec<f64>> {
    let n = qp.n();
    let k = cp.k();
    let s_max = cells.iter().map(Vec::len).max().unwrap_or(0);
    if s_max > PTF_MAX_CELL || k > PTF_MAX_BITS {
        return Err(Error::ScaleExceeded(format!(
            "ptf backend supports cells <= {PTF_MAX_CELL} and k <= {PTF_MAX_BITS}, got s={s_max} k={k}"
        )));
    }
    // Agreement threshold: close means v >= k - r, far means v < k - r - eps*k.
    let t = k as f64 - r - eps * k as f64;
    let reps = (n.max(2) as f64).log2().ceil() as usize;
    // Probe a worst-jitter draw to size the degree before paying for it.
    {
        let probe = sample_univariate(s_max, k, t.max(0.0), eps * k as f64, &mut seed.stream(0));
        let deg = probe.degree();
        if deg > PTF_MAX_DEGREE {
            return Err(Error::ScaleExceeded(format!(
                "ptf degree {deg} exceeds {PTF_MAX_DEGREE}; thresholds too tight for this backend"
            )));
        }
        if basis_size(k, deg) > BASIS_CAP {
            return Err(Error::ScaleExceeded("parity basis too large".into()));
        }
        if let Univariate::Cheb { lo, hi, degree } = probe {
            let xi = (2.0 * k as f64 - lo - hi) / (hi - lo);
            if cheb_t(degree, xi) > 1e12 {
                return Err(Error::ScaleExceeded("polynomial values overflow the envelope".into()));
            }
        }
    }
    let mut votes = vec![0u32; cells.len() * n];
    for rep in 0..reps {
        // One polynomial per distinct cell size (the tail cell is smaller);
        // the close target scales with s.
        let mut rng = seed.stream(100 + rep as u64);
        let mut unis: Vec<Option<Univariate>> = vec![None; s_max + 1];
        for cell in cells {
            let s = cell.len();
            if unis[s].is_none() {
                unis[s] = Some(sample_univariate(s, k, t.max(0.0), eps * k as f64, &mut rng));
            }
        }
        let degree = unis
            .iter()
            .flatten()
            .map(Univariate::degree)
            .max()
            .unwrap_or(0);
        // Parity basis: all coordinate sets of size <= degree, as masks.
        let mut basis: Vec<u64> = Vec::new();
        for c in 0..=degree.min(k) {
            if c == 0 {
                basis.push(0);
                continue;
            }
            let mut mask: u64 = (1 << c) - 1;
            while mask < (1u64 << k) {
                basis.push(mask);
                // Gosper's hack: next mask with the same popcount.
                let c0 = mask & mask.wrapping_neg();
                let r0 = mask + c0;
                mask = (((r0 ^ mask) >> 2) / c0) | r0;
            }
        }
        let b = basis.len();
        // Per cell size: weights W_c on parity size c from the expansion
        // of q((k+u)/2) in powers of the agreement inner product u, folded
        // with the parity-reduction counts N(e, c). Lower-degree
        // polynomials put zero weight on the larger parity sets, so pad to
        // the shared basis degree.
        let weights: Vec<Option<(Vec<f64>, f64)>> = unis
            .iter()
            .map(|u| {
                u.as_ref().map(|uni| {
                    let mut w = parity_weights(uni, k);
                    w.resize(degree + 1, 0.0);
                    (w, uni.eval(k as f64))
                })
            })
            .collect();
        // sigma_S(p) for every point and basis set: +1 or -1.
        let sigma_table = |set: &BitPointSet| -> Vec<f64> {
            (0..set.n())
                .into_par_iter()
                .flat_map_iter(|i| {
                    let w0 = set.row(i)[0];
                    basis
                        .iter()
                        .map(move |&m| if (w0 & m).count_ones() % 2 == 0 { 1.0 } else { -1.0 })
                        .collect::<Vec<f64>>()
                        .into_iter()
                })
                .collect()
        };
        let sigmas_q: Vec<f64> = sigma_table(qp);
        let sigmas_c: Vec<f64> = if same_set { Vec::new() } else { sigma_table(cp) };
        let member_row = |m: usize| -> &[f64] {
            if same_set {
                &sigmas_q[m * b..(m + 1) * b]
            } else {
                &sigmas_c[m * b..(m + 1) * b]
            }
        };
        let rep_votes: Vec<Vec<u32>> = cells
            .par_iter()
            .map(|cell| {
                let s = cell.len();
                let (w_by_size, self_term) = weights[s].as_ref().expect("built above");
                // phi[S] = W(|S|) * sum over members of sigma_S(member).
                let mut phi = vec![0.0f64; b];
                for &m in cell {
                    let srow = member_row(m as usize);
                    for (p, sv) in phi.iter_mut().zip(srow) {
                        *p += sv;
                    }
                }
                for (si, p) in phi.iter_mut().enumerate() {
                    *p *= w_by_size[basis[si].count_ones() as usize];
                }
                let member = {
                    let mut mem = vec![false; n];
                    if same_set {
                        for &m in cell {
                            mem[m as usize] = true;
                        }
                    }
                    mem
                };
                let mut out = vec![0u32; n];
                for (j, o) in out.iter_mut().enumerate() {
                    let srow = &sigmas_q[j * b..(j + 1) * b];
                    let mut p: f64 = phi.iter().zip(srow).map(|(a, c)| a * c).sum();
                    if member[j] {
                        p -= self_term;
                    }
                    if p > 2.0 * s as f64 {
                        *o = 1;
                    }
                }
                out
            })
            .collect();
        for (ci, rv) in rep_votes.iter().enumerate() {
            for (j, &v) in rv.iter().enumerate() {
                votes[ci * n + j] += v;
            }
        }
    }
    let mut values = vec![0.0f64; cells.len() * n];
    for (ci, cell) in cells.iter().enumerate() {
        for j in 0..n {
            if votes[ci * n + j] as usize * 2 > reps {
                values[ci * n + j] = 4.0 * cell.len() as f64;
            }
        }
    }
    Ok(values)
}

/// Expands q((k+u)/2) in powers of u and folds with the parity-reduction
/// counts: u^e = sum_c N(e,c) * sum_{|S|=c} sigma_S(p) sigma_S(q), where
/// N(e,c) counts length-e coordinate sequences whose odd-multiplicity set
/// has size c. Returns W where W[c] multiplies parity sets of size c.
fn parity_weights(uni: &Univariate, k: usize) -> Vec<f64> {
    let degree = uni.degree();
    // Coefficients of q((k+u)/2) in u via the Chebyshev recurrence on
    // polynomial coefficient vectors.
    let coeffs: Vec<f64> = match *uni {
        Univariate::Const(c) => vec![c],
        Univariate::Cheb { lo, hi, degree } => {
            let a = 1.0 / (hi - lo);
            let bshift = (k as f64 - lo - hi) / (hi - lo);
            let mut prev = vec![1.0f64];
            let mut cur = vec![bshift, a];
            if degree == 0 {
                prev
            } else {
                for _ in 1..degree {
                    let mut next = vec![0.0f64; cur.len() + 1];
                    for (i, &c) in cur.iter().enumerate() {
                        next[i + 1] += 2.0 * a * c;
                        next[i] += 2.0 * bshift * c;
                    }
                    for (i, &c) in prev.iter().enumerate() {
                        next[i] -= c;
                    }
                    prev = std::mem::take(&mut cur);
                    cur = next;
                }
                cur
            }
        }
    };
    // N(e, c) recurrence: appending a coordinate flips it odd or even.
    let mut counts = vec![vec![0.0f64; degree + 2]; degree + 1];
    counts[0][0] = 1.0;
    for e in 0..degree {
        let (head, tail) = counts.split_at_mut(e + 1);
        let src = &head[e];
        let dst = &mut tail[0];
        for c in 0..=e {
            if src[c] == 0.0 {
                continue;
            }
            if c + 1 <= degree + 1 {
                dst[c + 1] += src[c] * (k - c) as f64;
            }
            if c > 0 {
                dst[c - 1] += src[c] * c as f64;
            }
        }
    }
    // counts[e][c] totals over all supports of size c; the per-set
    // coefficient divides by the number of such supports.
    let mut w = vec![0.0f64; degree + 1];
    for (c, wc) in w.iter_mut().enumerate() {
        for (e, &ce) in coeffs.iter().enumerate() {
            if c <= e {
                *wc += ce * counts[e][c];
            }
        }
        *wc /= binom(k, c) as f64;
    }
    w
}
