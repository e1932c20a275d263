//! Approximate r-nets for l1 and l2 point sets.
//!
//! The metric layer reduces to the Hamming builder through randomized
//! embeddings: l1 points map to bit strings whose expected Hamming
//! distance separates "within r" from "beyond (1+eps)r", and l2 points
//! first pass through a Gaussian sketch into l1. The Hamming net then
//! pulls back to the original points by index.
//!
//! Embedded distances hold per pair with high probability, not surely, so
//! up to [`EXACT_REPAIR_CAP`] points every result is exact in the original
//! metric. For the net this is a repair pass over the randomized build:
//! packing is enforced by dropping any center inside an earlier center's
//! ball and covering by reassigning every point to its nearest kept
//! center, promoting points nothing covers. Promotion keeps packing intact
//! because promoted points sit beyond (1+eps)r from every kept center. The
//! pure close/far queries (delfar, filter_far, cover_assign) are instead
//! answered by a direct scan, whose result the repair would reproduce
//! verbatim anyway. Above the cap everything runs through the embedding
//! and the guarantees are probabilistic per pair.
//!
//! The eps budget on the l2 path splits as eps/4 for the sketch and eps/2
//! for the l1 stage; (1+eps/4)(1+eps/2) <= 1+eps for eps <= 1.

use crate::dataset::{Metric, PointSet, Seed};
use crate::embed::{l1_to_hamming, l2_to_l1};
use crate::error::{Error, Result};
use crate::hamming_net::{
    cover_assign_hamming_relaxed, delfar_hamming, filter_far_hamming, hamming_rnet,
    EXACT_REPAIR_CAP,
};
use crate::indicator::{Backend, PTF_MAX_BITS};

/// Minimum eps accepted by the metric layer. Tighter approximation blows
/// the embedding width past its caps without improving the desk-scale
/// guarantees, which the exact pass already makes sharp.
pub const EPS_FLOOR: f64 = 0.05;

/// The ptf backend evaluates a parity basis of up to 2^k sets, which only
/// fits native Hamming inputs within [`PTF_MAX_BITS`] bits. Embedded
/// instances are always wider, so the metric layer answers the same
/// close/far queries with the exact scanner instead.
fn effective_backend(backend: Backend, k: usize) -> Backend {
    if backend == Backend::Ptf && k > PTF_MAX_BITS {
        log::debug!("embedded width {k} exceeds the ptf envelope; using the exact scanner");
        Backend::Exact
    } else {
        backend
    }
}

/// An approximate r-net over a metric point set.
#[derive(Debug, Clone)]
pub struct RNet {
    pub r: f64,
    pub eps: f64,
    /// Center indices, ascending. Pairwise distances are at least r.
    pub centers: Vec<u32>,
    /// Covering center per point, within (1+eps)r; centers map to
    /// themselves.
    pub assignment: Vec<u32>,
}

fn check_params(x: &PointSet, r: f64, eps: f64) -> Result<()> {
    if x.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::NonPositiveRadius);
    }
    if !(eps >= EPS_FLOOR && eps < 1.0) {
        return Err(Error::EpsOutOfRange(eps, "[0.05, 1)"));
    }
    Ok(())
}

/// Splits the caller's eps across the reduction stages: the l2 sketch
/// spends a quarter, the l1 embedding the rest of the half.
fn eps_split(metric: Metric, eps: f64) -> (f64, f64) {
    match metric {
        Metric::L1 => (0.0, eps),
        Metric::L2 => (eps / 4.0, eps / 2.0),
    }
}

/// Maps `x` to the Hamming cube, preserving the (r, (1+eps)r) band per
/// pair with high probability, and returns the bit rows plus the Hamming
/// radius/slack to query them at.
fn to_hamming(
    x: &PointSet,
    r: f64,
    eps: f64,
    seed: Seed,
) -> Result<(crate::dataset::BitPointSet, f64, f64)> {
    let (sketch_eps, l1_eps) = eps_split(x.metric(), eps);
    let l1_points;
    let l1_view = match x.metric() {
        Metric::L1 => x,
        Metric::L2 => {
            let (y, _) = l2_to_l1(x, sketch_eps, seed.child(1))?;
            l1_points = y;
            &l1_points
        }
    };
    let (bits, family) = l1_to_hamming(l1_view, r, l1_eps, seed.child(2))?;
    let (h_r, h_eps) = family.hamming_params();
    Ok((bits, h_r, h_eps))
}

/// Builds an approximate r-net: centers pairwise >= r, every point within
/// (1+eps)r of its assigned center. Within [`EXACT_REPAIR_CAP`] points
/// both properties are exact for every seed and backend.
pub fn approx_rnet(
    x: &PointSet,
    r: f64,
    eps: f64,
    backend: Backend,
    seed: Seed,
) -> Result<RNet> {
    check_params(x, r, eps)?;
    let (bits, h_r, h_eps) = to_hamming(x, r, eps, seed)?;
    let backend = effective_backend(backend, bits.k());
    let net = hamming_rnet(&bits, h_r, h_eps, backend, seed.child(3))?;
    let mut centers = net.centers;
    let mut assignment = net.covered_by;
    if x.n() <= EXACT_REPAIR_CAP {
        repair_metric(x, &mut centers, &mut assignment, r, eps);
    }
    Ok(RNet { r, eps, centers, assignment })
}

/// Exact finisher: keeps centers in ascending order while they respect
/// packing, then reassigns every point to its nearest kept center within
/// (1+eps)r, promoting uncovered points as new centers.
fn repair_metric(
    x: &PointSet,
    centers: &mut Vec<u32>,
    assignment: &mut [u32],
    r: f64,
    eps: f64,
) {
    let cover = (1.0 + eps) * r;
    let mut kept: Vec<u32> = Vec::with_capacity(centers.len());
    for &c in centers.iter() {
        if kept.iter().all(|&kc| x.dist(c as usize, kc as usize) >= r) {
            kept.push(c);
        }
    }
    let mut is_center = vec![false; x.n()];
    for &c in &kept {
        is_center[c as usize] = true;
    }
    for p in 0..x.n() {
        if is_center[p] {
            assignment[p] = p as u32;
            continue;
        }
        let mut best = u32::MAX;
        let mut best_d = f64::INFINITY;
        for &kc in &kept {
            let d = x.dist(p, kc as usize);
            if d < best_d {
                best_d = d;
                best = kc;
            }
        }
        if best_d <= cover {
            assignment[p] = best;
        } else {
            // Farther than (1+eps)r from every center, so promotion
            // cannot violate packing.
            kept.push(p as u32);
            is_center[p] = true;
            assignment[p] = p as u32;
        }
    }
    kept.sort_unstable();
    *centers = kept;
}

/// Returns the points whose nearest neighbor (among the others) is far:
/// never a point with a neighbor within r, always a point whose nearest
/// neighbor exceeds (1+eps)r. Within [`EXACT_REPAIR_CAP`] the boundary is
/// exactly (1+eps)r.
pub fn delfar(
    x: &PointSet,
    r: f64,
    eps: f64,
    backend: Backend,
    seed: Seed,
) -> Result<Vec<u32>> {
    check_params(x, r, eps)?;
    if x.n() <= EXACT_REPAIR_CAP {
        // The direct scan fully determines the answer here, so the
        // randomized pipeline would be built only to be discarded.
        let cover = (1.0 + eps) * r;
        return Ok((0..x.n() as u32)
            .filter(|&p| {
                (0..x.n()).all(|q| q == p as usize || x.dist(p as usize, q) > cover)
            })
            .collect());
    }
    let (bits, h_r, h_eps) = to_hamming(x, r, eps, seed)?;
    let backend = effective_backend(backend, bits.k());
    delfar_hamming(&bits, h_r, h_eps, backend, seed.child(3))
}

/// Returns the points farther than (1+eps)r from every center; points
/// within r of a center are never returned, and centers themselves never
/// are. Within [`EXACT_REPAIR_CAP`] the boundary is exactly (1+eps)r.
pub fn filter_far(
    x: &PointSet,
    centers: &[u32],
    r: f64,
    eps: f64,
    backend: Backend,
    seed: Seed,
) -> Result<Vec<u32>> {
    check_params(x, r, eps)?;
    if x.n() <= EXACT_REPAIR_CAP {
        let cover = (1.0 + eps) * r;
        let is_center = {
            let mut v = vec![false; x.n()];
            for &c in centers {
                v[c as usize] = true;
            }
            v
        };
        return Ok((0..x.n() as u32)
            .filter(|&p| !is_center[p as usize])
            .filter(|&p| {
                centers.iter().all(|&c| x.dist(p as usize, c as usize) > cover)
            })
            .collect());
    }
    let (bits, h_r, h_eps) = to_hamming(x, r, eps, seed)?;
    let backend = effective_backend(backend, bits.k());
    filter_far_hamming(&bits, centers, h_r, h_eps, backend, seed.child(3))
}

/// Assigns points to centers whose r-balls they inhabit. Centers must be
/// pairwise at least 2(1+eps)r apart (checked exactly, any size), so the
/// balls cannot contend. Every point within r of a center joins that
/// center's set; every member lies within (1+eps)r of its center.
pub fn cover_assign(
    x: &PointSet,
    centers: &[u32],
    r: f64,
    eps: f64,
    backend: Backend,
    seed: Seed,
) -> Result<Vec<Vec<u32>>> {
    check_params(x, r, eps)?;
    let sep = 2.0 * (1.0 + eps) * r;
    for (a, &ca) in centers.iter().enumerate() {
        for &cb in centers.iter().skip(a + 1) {
            if x.dist(ca as usize, cb as usize) < sep {
                return Err(Error::CentersTooClose(ca, cb));
            }
        }
    }
    if x.n() <= EXACT_REPAIR_CAP {
        let cover = (1.0 + eps) * r;
        let slot_of = {
            let mut v = vec![u32::MAX; x.n()];
            for (i, &c) in centers.iter().enumerate() {
                v[c as usize] = i as u32;
            }
            v
        };
        let mut sets = vec![Vec::new(); centers.len()];
        for p in 0..x.n() {
            if slot_of[p] != u32::MAX {
                continue;
            }
            let mut best = u32::MAX;
            let mut best_d = f64::INFINITY;
            for (i, &c) in centers.iter().enumerate() {
                let d = x.dist(p, c as usize);
                if d <= cover && d < best_d {
                    best_d = d;
                    best = i as u32;
                }
            }
            if best != u32::MAX {
                sets[best as usize].push(p as u32);
            }
        }
        return Ok(sets);
    }
    let (bits, h_r, h_eps) = to_hamming(x, r, eps, seed)?;
    let backend = effective_backend(backend, bits.k());
    cover_assign_hamming_relaxed(&bits, centers, h_r, h_eps, backend, seed.child(3))
}
