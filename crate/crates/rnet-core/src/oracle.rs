//! Exact brute-force references and verification.
//!
//! Everything here is quadratic or worse and proud of it. These routines
//! are the ground truth that the randomized pipeline is tested against,
//! and the source of the verification reports that travel with nets and
//! clusterings. They share no code with the approximate paths.

use crate::dataset::{BitPointSet, PointSet};
use crate::error::{Error, Result};

/// Exact pairwise scans are allowed up to this many points.
pub const EXACT_PAIRWISE_CAP: usize = 8192;
/// Exhaustive k-center enumerates center subsets up to this many points.
pub const EXACT_KCENTER_CAP: usize = 16;
/// Exhaustive Min-Max clustering enumerates partitions up to this many points.
pub const EXACT_MINMAX_CAP: usize = 10;
/// Above this size, verification falls back to a 1% covering sample.
pub const VERIFY_EXACT_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMode {
    Exact,
    Sampled,
}

impl CheckMode {
    pub fn name(self) -> &'static str {
        match self {
            CheckMode::Exact => "exact",
            CheckMode::Sampled => "sampled",
        }
    }
}

/// Outcome of verifying a net against true distances.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub packing_ok: bool,
    pub covering_ok: bool,
    /// Center pairs closer than the packing radius, with their distance.
    pub packing_violations: Vec<(u32, u32, f64)>,
    /// Points whose assigned center is farther than the covering threshold.
    pub covering_violations: Vec<(u32, f64)>,
    pub checked: CheckMode,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.packing_ok && self.covering_ok
    }
}

fn verify_generic(
    n: usize,
    centers: &[u32],
    assignment: &[u32],
    r: f64,
    cover_threshold: f64,
    dist: &dyn Fn(usize, usize) -> f64,
) -> VerifyReport {
    let mut packing_violations = Vec::new();
    for (a, &ci) in centers.iter().enumerate() {
        for &cj in centers.iter().skip(a + 1) {
            let d = dist(ci as usize, cj as usize);
            if d < r {
                packing_violations.push((ci, cj, d));
            }
        }
    }
    // Covering is checked exactly at desk scale, sampled on a stride above.
    let (stride, checked) = if n <= VERIFY_EXACT_CAP {
        (1, CheckMode::Exact)
    } else {
        (100, CheckMode::Sampled)
    };
    let is_center = {
        let mut m = vec![false; n];
        for &c in centers {
            m[c as usize] = true;
        }
        m
    };
    let mut covering_violations = Vec::new();
    for i in (0..n).step_by(stride) {
        let c = assignment[i] as usize;
        let d = dist(i, c);
        if !is_center[c] || d > cover_threshold {
            covering_violations.push((i as u32, d));
        }
    }
    VerifyReport {
        packing_ok: packing_violations.is_empty(),
        covering_ok: covering_violations.is_empty(),
        packing_violations,
        covering_violations,
        checked,
    }
}

/// Checks a metric net: centers pairwise >= r, every point within
/// (1+eps) r of its assigned center.
pub fn verify_rnet(
    x: &PointSet,
    centers: &[u32],
    assignment: &[u32],
    r: f64,
    eps: f64,
) -> VerifyReport {
    verify_generic(x.n(), centers, assignment, r, (1.0 + eps) * r, &|i, j| x.dist(i, j))
}

/// Checks a Hamming net: centers pairwise >= r, every point within
/// r + eps*k of its assigned center (k = bits per row).
pub fn verify_hamming_net(
    x: &BitPointSet,
    centers: &[u32],
    assignment: &[u32],
    r: f64,
    eps: f64,
) -> VerifyReport {
    let threshold = r + eps * x.k() as f64;
    verify_generic(x.n(), centers, assignment, r, threshold, &|i, j| {
        x.hamming(i, j) as f64
    })
}

/// Nearest neighbor distance of every point (excluding itself).
pub fn exact_nn_dists(x: &PointSet) -> Result<Vec<f64>> {
    let n = x.n();
    if n > EXACT_PAIRWISE_CAP {
        return Err(Error::ScaleExceeded(format!("{n} > {EXACT_PAIRWISE_CAP}")));
    }
    if n < 2 {
        return Err(Error::NoPositiveDistance);
    }
    let mut nn = vec![f64::INFINITY; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = x.dist(i, j);
            if d < nn[i] {
                nn[i] = d;
            }
            if d < nn[j] {
                nn[j] = d;
            }
        }
    }
    Ok(nn)
}

/// k-th smallest value in the multiset of nearest neighbor distances.
pub fn exact_kth_nn(x: &PointSet, k: usize) -> Result<f64> {
    if k == 0 || k > x.n() {
        return Err(Error::KOutOfRange { k, n: x.n() });
    }
    let mut nn = exact_nn_dists(x)?;
    nn.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(nn[k - 1])
}

/// Optimal k-center by exhaustive enumeration of center subsets.
/// Returns the optimal radius and one witness center set.
pub fn exact_kcenter(x: &PointSet, k: usize) -> Result<(f64, Vec<u32>)> {
    let n = x.n();
    if n > EXACT_KCENTER_CAP {
        return Err(Error::ScaleExceeded(format!("{n} > {EXACT_KCENTER_CAP}")));
    }
    if k == 0 {
        return Err(Error::KOutOfRange { k, n });
    }
    if k >= n {
        return Ok((0.0, (0..n as u32).collect()));
    }
    let mut best = (f64::INFINITY, Vec::new());
    // Gosper-style iteration over all k-subsets of n points.
    let mut subset: Vec<usize> = (0..k).collect();
    loop {
        let mut radius = 0.0f64;
        for p in 0..n {
            let d = subset.iter().map(|&c| x.dist(p, c)).fold(f64::INFINITY, f64::min);
            radius = radius.max(d);
            if radius >= best.0 {
                break;
            }
        }
        if radius < best.0 {
            best = (radius, subset.iter().map(|&c| c as u32).collect());
        }
        // Advance to the next k-subset in lexicographic order.
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(best);
            }
            i -= 1;
            if subset[i] != i + n - k {
                subset[i] += 1;
                for j in (i + 1)..k {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Farthest-first traversal from `start`, ties broken toward the lowest
/// index. Returns the visit order (all n points) and the n-1 prefix radii:
/// radii[i] is the distance of order[i+1] to the first i+1 points, i.e. the
/// greedy radius after i+1 centers. The sequence is non-increasing.
pub fn exact_greedy_perm(x: &PointSet, start: u32) -> Result<(Vec<u32>, Vec<f64>)> {
    let n = x.n();
    if n > EXACT_PAIRWISE_CAP {
        return Err(Error::ScaleExceeded(format!("{n} > {EXACT_PAIRWISE_CAP}")));
    }
    if (start as usize) >= n {
        return Err(Error::KOutOfRange { k: start as usize, n });
    }
    let mut order = Vec::with_capacity(n);
    let mut radii = Vec::with_capacity(n.saturating_sub(1));
    let mut dist_to_prefix = vec![f64::INFINITY; n];
    let mut taken = vec![false; n];
    let mut cur = start as usize;
    for step in 0..n {
        order.push(cur as u32);
        taken[cur] = true;
        for p in 0..n {
            if !taken[p] {
                let d = x.dist(p, cur);
                if d < dist_to_prefix[p] {
                    dist_to_prefix[p] = d;
                }
            }
        }
        if step + 1 == n {
            break;
        }
        let mut next = usize::MAX;
        let mut far = -1.0f64;
        for p in 0..n {
            if !taken[p] && dist_to_prefix[p] > far {
                far = dist_to_prefix[p];
                next = p;
            }
        }
        radii.push(far);
        cur = next;
    }
    Ok((order, radii))
}

/// Classification of a point against a center set and a distance band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandClass {
    /// min distance to centers <= lo
    Within,
    /// strictly between lo and hi
    Gap,
    /// min distance to centers > hi
    Far,
}

/// Classifies every point by its exact minimum distance to `centers`
/// against the band [lo, hi]. Centers classify against the other centers
/// like any point (distance to themselves is 0, so they come out Within
/// whenever lo >= 0).
pub fn exact_min_distance_set(
    x: &PointSet,
    centers: &[u32],
    lo: f64,
    hi: f64,
) -> Result<Vec<BandClass>> {
    let n = x.n();
    if n > EXACT_PAIRWISE_CAP {
        return Err(Error::ScaleExceeded(format!("{n} > {EXACT_PAIRWISE_CAP}")));
    }
    let mut out = Vec::with_capacity(n);
    for p in 0..n {
        let d = centers
            .iter()
            .map(|&c| x.dist(p, c as usize))
            .fold(f64::INFINITY, f64::min);
        out.push(if d <= lo {
            BandClass::Within
        } else if d <= hi {
            BandClass::Gap
        } else {
            BandClass::Far
        });
    }
    Ok(out)
}

/// Optimal Min-Max clustering by exhaustive partition enumeration.
///
/// Minimizes, over all partitions of the points into admissible clusters
/// and all choices of one center per cluster, the maximum distance from a
/// center to a member of its cluster. `admissible` receives the member
/// indices of a candidate cluster. Returns the optimal value, or
/// `InfeasibleFamily` if no partition into admissible clusters exists.
pub fn exact_minmax(x: &PointSet, admissible: &dyn Fn(&[u32]) -> bool) -> Result<f64> {
    let n = x.n();
    if n > EXACT_MINMAX_CAP {
        return Err(Error::ScaleExceeded(format!("{n} > {EXACT_MINMAX_CAP}")));
    }
    // cost[mask] = cheapest admissible cluster on exactly these members,
    // infinity if the family rejects them.
    let full = (1usize << n) - 1;
    let mut cluster_cost = vec![f64::INFINITY; full + 1];
    let mut members = Vec::with_capacity(n);
    for mask in 1..=full {
        members.clear();
        for p in 0..n {
            if mask >> p & 1 == 1 {
                members.push(p as u32);
            }
        }
        if !admissible(&members) {
            continue;
        }
        let mut best = f64::INFINITY;
        for &c in &members {
            let mut worst = 0.0f64;
            for &m in &members {
                worst = worst.max(x.dist(c as usize, m as usize));
            }
            best = best.min(worst);
        }
        cluster_cost[mask] = best;
    }
    // partition_cost[mask] = optimal value covering exactly `mask`.
    let mut partition_cost = vec![f64::INFINITY; full + 1];
    partition_cost[0] = 0.0;
    for mask in 1..=full {
        // Fix the lowest set bit in its cluster to avoid double counting.
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        let mut sub = rest;
        loop {
            let cluster = sub | low;
            let c = cluster_cost[cluster];
            if c.is_finite() {
                let prev = partition_cost[mask ^ cluster];
                if prev.is_finite() {
                    let total = c.max(prev);
                    if total < partition_cost[mask] {
                        partition_cost[mask] = total;
                    }
                }
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    if partition_cost[full].is_finite() {
        Ok(partition_cost[full])
    } else {
        Err(Error::InfeasibleFamily)
    }
}
