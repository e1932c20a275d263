//! r-net construction over the Hamming cube.
//!
//! A net at radius r with slack eps*k is a subset C of the input such that
//! centers are pairwise at distance >= r (packing) and every point lies
//! within r + eps*k of some center (covering). The builder runs in two
//! phases. Sparsification samples ceil(sqrt(n)) random surviving points,
//! promotes each to a center, and deletes everything its ball covers; this
//! removes dense regions cheaply. The survivors are then classified against
//! a block indicator matrix and swept in index order: an uncovered survivor
//! becomes a center and claims every survivor its flagged cells verify as
//! close.
//!
//! Packing holds by construction: a point is promoted only while it is
//! farther than the deletion radius from every existing center. With the
//! exact backend the matrix flags every pair at distance <= r, so the
//! sweep never promotes a point inside another center's packing ball; the
//! sampled and ptf backends can miss with vanishing probability, which the
//! desk-scale repair pass at the end catches.
//!
//! The same sparsify-then-classify shape implements three relatives used by
//! the metric layer: `delfar_hamming` (points with no neighbor in range),
//! `filter_far_hamming` (points far from a center set), and
//! `cover_assign_hamming` (ball membership around well-separated centers).

use rand::Rng;

use crate::dataset::{BitPointSet, Seed};
use crate::error::{Error, Result};
use crate::indicator::{
    block_indicator_matrix, block_indicator_matrix_bipartite, Backend, IndicatorMatrix,
};

/// Attempts before giving up when the close-pair budget keeps tripping.
pub const RETRY_CAP: u32 = 5;

/// Cell exponent used by the net pipelines: cells of ceil(n^0.5) points.
const ALPHA: f64 = 0.5;

/// Instances no larger than this get an exact post-pass: packing repair in
/// the net builder and exact normalization of the Monte Carlo backends in
/// the derived pipelines.
pub const EXACT_REPAIR_CAP: usize = 4096;

/// Outcome of the sparsification rounds.
#[derive(Debug, Clone)]
pub struct Sparsified {
    /// Points still alive after the rounds (global indices, ascending).
    pub survivors: Vec<u32>,
    /// Centers promoted during the rounds.
    pub centers: Vec<u32>,
    /// (point, center) pairs for every point a round deleted; centers
    /// cover themselves.
    pub cover: Vec<(u32, u32)>,
}

/// An r-net over a bit point set.
#[derive(Debug, Clone)]
pub struct HammingNet {
    pub r: f64,
    pub eps: f64,
    /// Center indices into the input set, ascending.
    pub centers: Vec<u32>,
    /// For every input point, the center covering it (centers map to
    /// themselves). Distances are at most r + eps*k.
    pub covered_by: Vec<u32>,
}

/// Runs ceil(sqrt(n)) rounds of: sample a uniform surviving point, promote
/// it to a center, delete everything within r + eps*k of it. Rounds stop
/// early when no point survives.
pub fn sparsify(x: &BitPointSet, r: f64, eps: f64, seed: Seed) -> Sparsified {
    let n = x.n();
    let theta = r + eps * x.k() as f64;
    let rounds = (n as f64).sqrt().ceil() as usize;
    let mut rng = seed.stream(0);
    let mut alive: Vec<u32> = (0..n as u32).collect();
    let mut centers = Vec::new();
    let mut cover = Vec::new();
    for _ in 0..rounds {
        if alive.is_empty() {
            break;
        }
        let c = alive[rng.gen_range(0..alive.len())];
        centers.push(c);
        cover.push((c, c));
        let mut kept = Vec::with_capacity(alive.len());
        for &p in &alive {
            if p == c {
                continue;
            }
            if x.hamming(p as usize, c as usize) as f64 <= theta {
                cover.push((p, c));
            } else {
                kept.push(p);
            }
        }
        alive = kept;
    }
    Sparsified { survivors: alive, centers, cover }
}

/// Sweeps the survivors in index order against their indicator matrix.
/// An uncovered survivor becomes a center; its flagged cells are verified
/// exactly and every uncovered member within r + eps*k is claimed.
///
/// Returns centers and (point, center) cover pairs in global indices;
/// together they account for every survivor.
pub fn assemble_net(
    x: &BitPointSet,
    survivors: &[u32],
    m: &IndicatorMatrix,
    r: f64,
    eps: f64,
) -> (Vec<u32>, Vec<(u32, u32)>) {
    let sn = survivors.len();
    assert_eq!(m.n, sn, "matrix columns must match the survivor count");
    // Distances are integers, so the deletion radius rounds down.
    let theta_bits = (r + eps * x.k() as f64).floor() as u64;
    let mut covered = vec![false; sn];
    let mut centers = Vec::new();
    let mut cover = Vec::new();
    for j in 0..sn {
        if covered[j] {
            continue;
        }
        covered[j] = true;
        let cg = survivors[j];
        centers.push(cg);
        cover.push((cg, cg));
        for (i, cell) in m.cells.iter().enumerate() {
            if !m.is_close(i, j) {
                continue;
            }
            for &q in cell {
                let qi = q as usize;
                if covered[qi] {
                    continue;
                }
                let d = x.hamming(survivors[qi] as usize, cg as usize);
                if d <= theta_bits {
                    covered[qi] = true;
                    cover.push((survivors[qi], cg));
                }
            }
        }
    }
    (centers, cover)
}

/// Builds an approximate r-net: packing >= r between centers, covering
/// within r + eps*k. Retries with a derived seed when the indicator
/// matrix trips its close-pair budget, up to [`RETRY_CAP`] attempts.
pub fn hamming_rnet(
    x: &BitPointSet,
    r: f64,
    eps: f64,
    backend: Backend,
    seed: Seed,
) -> Result<HammingNet> {
    if x.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::NonPositiveRadius);
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::EpsOutOfRange(eps, "(0, 1)"));
    }
    let mut last_err = None;
    for attempt in 0..RETRY_CAP {
        let s = seed.child(attempt as u64);
        match hamming_rnet_attempt(x, r, eps, backend, s) {
            Ok(net) => return Ok(net),
            Err(Error::TooManyCloseEntries { .. }) => {
                log::debug!("net attempt {attempt} tripped the close-pair budget; retrying");
                last_err = Some(());
            }
            Err(e) => return Err(e),
        }
    }
    debug_assert!(last_err.is_some());
    Err(Error::RetriesExhausted(RETRY_CAP))
}

fn hamming_rnet_attempt(
    x: &BitPointSet,
    r: f64,
    eps: f64,
    backend: Backend,
    seed: Seed,
) -> Result<HammingNet> {
    let n = x.n();
    let sp = sparsify(x, r, eps, seed.child(1));
    let mut centers = sp.centers.clone();
    let mut covered_by = vec![u32::MAX; n];
    for &(p, c) in &sp.cover {
        covered_by[p as usize] = c;
    }
    if !sp.survivors.is_empty() {
        let sub = x.subset(&sp.survivors).expect("survivors are nonempty");
        let m = block_indicator_matrix(&sub, r, eps, ALPHA, backend, seed.child(2))?;
        let (net_centers, net_cover) = assemble_net(x, &sp.survivors, &m, r, eps);
        centers.extend(net_centers);
        for (p, c) in net_cover {
            covered_by[p as usize] = c;
        }
    }
    debug_assert!(covered_by.iter().all(|&c| c != u32::MAX));
    centers.sort_unstable();
    if backend != Backend::Exact && n <= EXACT_REPAIR_CAP {
        repair_packing(x, &mut centers, &mut covered_by, r, eps);
    }
    Ok(HammingNet { r, eps, centers, covered_by })
}

/// Drops any center strictly inside an earlier center's packing ball and
/// reassigns its points: nearest kept center when within r + eps*k, else
/// the orphan is promoted (it is farther than the deletion radius from
/// every kept center, so promotion preserves packing).
fn repair_packing(
    x: &BitPointSet,
    centers: &mut Vec<u32>,
    covered_by: &mut [u32],
    r: f64,
    eps: f64,
) {
    let theta = r + eps * x.k() as f64;
    let mut kept: Vec<u32> = Vec::with_capacity(centers.len());
    let mut dropped = Vec::new();
    for &c in centers.iter() {
        let ok = kept
            .iter()
            .all(|&kc| x.hamming(c as usize, kc as usize) as f64 >= r);
        if ok {
            kept.push(c);
        } else {
            dropped.push(c);
        }
    }
    if dropped.is_empty() {
        return;
    }
    let is_dropped = {
        let mut v = vec![false; x.n()];
        for &c in &dropped {
            v[c as usize] = true;
        }
        v
    };
    for p in 0..x.n() {
        if !is_dropped[covered_by[p] as usize] {
            continue;
        }
        let mut best = u32::MAX;
        let mut best_d = f64::INFINITY;
        for &kc in &kept {
            let d = x.hamming(p, kc as usize) as f64;
            if d < best_d {
                best_d = d;
                best = kc;
            }
        }
        if best_d <= theta {
            covered_by[p] = best;
        } else {
            kept.push(p as u32);
            covered_by[p] = p as u32;
        }
    }
    kept.sort_unstable();
    *centers = kept;
}

/// Classifies every point by whether it has a neighbor among the other
/// points: returns the indices whose nearest neighbor is far. Points with
/// a neighbor within r are never returned; points whose nearest neighbor
/// exceeds r + eps*k always are; the gap may fall either way.
///
/// With the exact backend both mandatory sides hold with certainty. The
/// sampled and ptf backends are normalized by an exact pass up to
/// [`EXACT_REPAIR_CAP`] points.
pub fn delfar_hamming(
    x: &BitPointSet,
    r: f64,
    eps: f64,
    backend: Backend,
    seed: Seed,
) -> Result<Vec<u32>> {
    if x.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::NonPositiveRadius);
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::EpsOutOfRange(eps, "(0, 1)"));
    }
    let mut last = None;
    for attempt in 0..RETRY_CAP {
        match delfar_attempt(x, r, eps, backend, seed.child(attempt as u64)) {
            Ok(f) => return Ok(f),
            Err(Error::TooManyCloseEntries { .. }) => last = Some(()),
            Err(e) => return Err(e),
        }
    }
    debug_assert!(last.is_some());
    Err(Error::RetriesExhausted(RETRY_CAP))
}

fn delfar_attempt(
    x: &BitPointSet,
    r: f64,
    eps: f64,
    backend: Backend,
    seed: Seed,
) -> Result<Vec<u32>> {
    let n = x.n();
    let theta = r + eps * x.k() as f64;
    let rounds = (n as f64).sqrt().ceil() as usize;
    let mut rng = seed.stream(0);
    let mut alive: Vec<u32> = (0..n as u32).collect();
    // Points deleted because a sampled center saw them nearby. Anything
    // here has a neighbor within theta and is out.
    let mut deleted_near: Vec<u32> = Vec::new();
    // Points with no close neighbor seen so far; they still must be
    // checked against deleted_near, because deletion happened without
    // comparing against them.
    let mut candidates: Vec<u32> = Vec::new();
    for _ in 0..rounds {
        if alive.is_empty() {
            break;
        }
        let c = alive[rng.gen_range(0..alive.len())];
        let mut kept = Vec::with_capacity(alive.len());
        let mut near = Vec::new();
        for &p in &alive {
            if p == c {
                continue;
            }
            if x.hamming(p as usize, c as usize) as f64 <= theta {
                near.push(p);
            } else {
                kept.push(p);
            }
        }
        if near.is_empty() {
            // Nobody alive is close to c. A deleted point still might be;
            // c stays a candidate pending the final recheck.
            candidates.push(c);
        } else {
            deleted_near.push(c);
            deleted_near.extend(near.iter().copied());
        }
        alive = kept;
    }
    // Matrix phase over the survivors: a column with any verified close
    // cell member has a neighbor within theta; clean columns join the
    // candidates.
    if !alive.is_empty() {
        let sub = x.subset(&alive).expect("alive is nonempty");
        let m = block_indicator_matrix(&sub, r, eps, ALPHA, backend, seed.child(1))?;
        for (j, &pg) in alive.iter().enumerate() {
            let mut close = false;
            'cells: for (i, cell) in m.cells.iter().enumerate() {
                if !m.is_close(i, j) {
                    continue;
                }
                for &q in cell {
                    if q as usize == j {
                        continue;
                    }
                    let d = x.hamming(alive[q as usize] as usize, pg as usize) as f64;
                    if d <= theta {
                        close = true;
                        break 'cells;
                    }
                }
            }
            if close {
                deleted_near.push(pg);
            } else {
                candidates.push(pg);
            }
        }
    }
    // Recheck candidates against the deleted points they were never
    // compared to. Candidates are pairwise far already: an alive pair
    // within theta would have deleted both when either was sampled, and
    // clean matrix columns saw every close survivor with certainty under
    // the exact backend.
    let mut far: Vec<u32> = candidates
        .into_iter()
        .filter(|&p| {
            deleted_near
                .iter()
                .all(|&q| x.hamming(p as usize, q as usize) as f64 > theta)
        })
        .collect();
    if backend != Backend::Exact && n <= EXACT_REPAIR_CAP {
        // Monte Carlo backends can misflag; redo the classification
        // exactly at desk scale.
        far = (0..n as u32)
            .filter(|&p| {
                (0..n as u32).all(|q| {
                    q == p || x.hamming(p as usize, q as usize) as f64 > theta
                })
            })
            .collect();
    }
    far.sort_unstable();
    Ok(far)
}

/// Returns the points farther than r + eps*k from every center (centers
/// themselves are always excluded). Points within r of some center are
/// never returned; points beyond r + eps*k of all centers always are.
pub fn filter_far_hamming(
    x: &BitPointSet,
    centers: &[u32],
    r: f64,
    eps: f64,
    backend: Backend,
    seed: Seed,
) -> Result<Vec<u32>> {
    if x.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::NonPositiveRadius);
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::EpsOutOfRange(eps, "(0, 1)"));
    }
    let mut last = None;
    for attempt in 0..RETRY_CAP {
        match filter_far_attempt(x, centers, r, eps, backend, seed.child(attempt as u64)) {
            Ok(f) => return Ok(f),
            Err(Error::TooManyCloseEntries { .. }) => last = Some(()),
            Err(e) => return Err(e),
        }
    }
    debug_assert!(last.is_some());
    Err(Error::RetriesExhausted(RETRY_CAP))
}

fn filter_far_attempt(
    x: &BitPointSet,
    centers: &[u32],
    r: f64,
    eps: f64,
    backend: Backend,
    seed: Seed,
) -> Result<Vec<u32>> {
    let n = x.n();
    let theta = r + eps * x.k() as f64;
    let is_center = {
        let mut v = vec![false; n];
        for &c in centers {
            v[c as usize] = true;
        }
        v
    };
    let mut alive: Vec<u32> = (0..n as u32).filter(|&p| !is_center[p as usize]).collect();
    // Rounds scan a random sample of centers exactly.
    let rounds = (n as f64).sqrt().ceil() as usize;
    let mut rng = seed.stream(0);
    let mut remaining: Vec<u32> = centers.to_vec();
    for _ in 0..rounds.min(centers.len()) {
        if remaining.is_empty() || alive.is_empty() {
            break;
        }
        let ci = rng.gen_range(0..remaining.len());
        let c = remaining.swap_remove(ci);
        alive.retain(|&p| x.hamming(p as usize, c as usize) as f64 > theta);
    }
    // Remaining centers are handled through a bipartite matrix: cells over
    // the centers, columns over the still-alive points.
    if !remaining.is_empty() && !alive.is_empty() {
        let csub = x.subset(&remaining).expect("remaining is nonempty");
        let qsub = x.subset(&alive).expect("alive is nonempty");
        let m = block_indicator_matrix_bipartite(
            &csub,
            &qsub,
            r,
            eps,
            ALPHA,
            backend,
            seed.child(1),
        )?;
        let mut kept = Vec::with_capacity(alive.len());
        for (j, &pg) in alive.iter().enumerate() {
            let mut close = false;
            'cells: for (i, cell) in m.cells.iter().enumerate() {
                if !m.is_close(i, j) {
                    continue;
                }
                for &q in cell {
                    let d = x.hamming(remaining[q as usize] as usize, pg as usize) as f64;
                    if d <= theta {
                        close = true;
                        break 'cells;
                    }
                }
            }
            if !close {
                kept.push(pg);
            }
        }
        alive = kept;
    }
    if backend != Backend::Exact && n <= EXACT_REPAIR_CAP {
        alive = (0..n as u32)
            .filter(|&p| !is_center[p as usize])
            .filter(|&p| {
                centers
                    .iter()
                    .all(|&c| x.hamming(p as usize, c as usize) as f64 > theta)
            })
            .collect();
    }
    alive.sort_unstable();
    Ok(alive)
}

/// Assigns points to centers whose packing balls they inhabit. Requires
/// centers pairwise at distance >= 2(r + eps*k) so that the balls of
/// radius r + eps*k cannot both claim a point; violations return
/// `CentersTooClose`. Every point within r of a center lands in that
/// center's set; every assigned point is within r + eps*k of its center.
/// Centers themselves are not assigned.
pub fn cover_assign_hamming(
    x: &BitPointSet,
    centers: &[u32],
    r: f64,
    eps: f64,
    backend: Backend,
    seed: Seed,
) -> Result<Vec<Vec<u32>>> {
    if x.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::NonPositiveRadius);
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::EpsOutOfRange(eps, "(0, 1)"));
    }
    let theta = r + eps * x.k() as f64;
    for (a, &ca) in centers.iter().enumerate() {
        for &cb in centers.iter().skip(a + 1) {
            if (x.hamming(ca as usize, cb as usize) as f64) < 2.0 * theta {
                return Err(Error::CentersTooClose(ca, cb));
            }
        }
    }
    cover_assign_hamming_relaxed(x, centers, r, eps, backend, seed)
}

/// Cover assignment without the separation precondition. Callers that
/// enforce separation in their own metric (before an embedding that does
/// not transfer the factor-two bound) use this; ties go to the nearest
/// center by distance, lowest index on equality.
pub(crate) fn cover_assign_hamming_relaxed(
    x: &BitPointSet,
    centers: &[u32],
    r: f64,
    eps: f64,
    backend: Backend,
    seed: Seed,
) -> Result<Vec<Vec<u32>>> {
    let mut last = None;
    for attempt in 0..RETRY_CAP {
        match cover_assign_attempt(x, centers, r, eps, backend, seed.child(attempt as u64)) {
            Ok(f) => return Ok(f),
            Err(Error::TooManyCloseEntries { .. }) => last = Some(()),
            Err(e) => return Err(e),
        }
    }
    debug_assert!(last.is_some());
    Err(Error::RetriesExhausted(RETRY_CAP))
}

fn cover_assign_attempt(
    x: &BitPointSet,
    centers: &[u32],
    r: f64,
    eps: f64,
    backend: Backend,
    seed: Seed,
) -> Result<Vec<Vec<u32>>> {
    let n = x.n();
    let theta = r + eps * x.k() as f64;
    let mut slot_of = vec![u32::MAX; n];
    for (i, &c) in centers.iter().enumerate() {
        slot_of[c as usize] = i as u32;
    }
    let mut assigned: Vec<Option<u32>> = vec![None; n];
    let mut alive: Vec<u32> =
        (0..n as u32).filter(|&p| slot_of[p as usize] == u32::MAX).collect();
    let rounds = (n as f64).sqrt().ceil() as usize;
    let mut rng = seed.stream(0);
    let mut remaining: Vec<u32> = (0..centers.len() as u32).collect();
    for _ in 0..rounds.min(centers.len()) {
        if remaining.is_empty() || alive.is_empty() {
            break;
        }
        let ri = rng.gen_range(0..remaining.len());
        let slot = remaining.swap_remove(ri);
        let c = centers[slot as usize];
        alive.retain(|&p| {
            if x.hamming(p as usize, c as usize) as f64 <= theta {
                assigned[p as usize] = Some(slot);
                false
            } else {
                true
            }
        });
    }
    if !remaining.is_empty() && !alive.is_empty() {
        let rem_pts: Vec<u32> = remaining.iter().map(|&s| centers[s as usize]).collect();
        let csub = x.subset(&rem_pts).expect("remaining is nonempty");
        let qsub = x.subset(&alive).expect("alive is nonempty");
        let m = block_indicator_matrix_bipartite(
            &csub,
            &qsub,
            r,
            eps,
            ALPHA,
            backend,
            seed.child(1),
        )?;
        for (j, &pg) in alive.iter().enumerate() {
            // Nearest verified member over all flagged cells. Under the
            // separation precondition only one center is eligible; the
            // relaxed path breaks ties toward the lowest center index.
            let mut best = u32::MAX;
            let mut best_d = f64::INFINITY;
            for (i, cell) in m.cells.iter().enumerate() {
                if !m.is_close(i, j) {
                    continue;
                }
                for &q in cell {
                    let d = x.hamming(rem_pts[q as usize] as usize, pg as usize) as f64;
                    let slot = remaining[q as usize];
                    if d <= theta && (d < best_d || (d == best_d && slot < best)) {
                        best_d = d;
                        best = slot;
                    }
                }
            }
            if best != u32::MAX {
                assigned[pg as usize] = Some(best);
            }
        }
    }
    if backend != Backend::Exact && n <= EXACT_REPAIR_CAP {
        for p in 0..n {
            if slot_of[p] != u32::MAX {
                continue;
            }
            let mut best = u32::MAX;
            let mut best_d = f64::INFINITY;
            for (i, &c) in centers.iter().enumerate() {
                let d = x.hamming(p, c as usize) as f64;
                if d <= theta && d < best_d {
                    best_d = d;
                    best = i as u32;
                }
            }
            assigned[p] = if best != u32::MAX { Some(best) } else { None };
        }
    }
    let mut out = vec![Vec::new(); centers.len()];
    for (p, a) in assigned.iter().enumerate() {
        if let Some(slot) = a {
            out[*slot as usize].push(p as u32);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::gen;
    use crate::oracle::verify_hamming_net;

    fn bits_from(rows: &[&[u8]]) -> BitPointSet {
        let k = rows[0].len();
        let mut out = BitPointSet::new_zero(rows.len(), k).unwrap();
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                out.set_bit(i, j, v != 0);
            }
        }
        out
    }

    #[test]
    fn sparsify_collapses_identical_points() {
        let x = bits_from(&[&[1, 0, 1, 0], &[1, 0, 1, 0], &[1, 0, 1, 0], &[1, 0, 1, 0]]);
        let sp = sparsify(&x, 1.0, 0.1, Seed(7));
        assert_eq!(sp.centers.len(), 1);
        assert!(sp.survivors.is_empty());
        assert_eq!(sp.cover.len(), 4);
        let c = sp.centers[0];
        assert!(sp.cover.iter().all(|&(_, ctr)| ctr == c));
    }

    #[test]
    fn sparsify_runs_sqrt_n_rounds_on_spread_points() {
        // Pairwise far: every round promotes a lonely center, and
        // ceil(sqrt(4)) = 2 rounds leave two survivors.
        let x = bits_from(&[
            &[0, 0, 0, 0, 0, 0, 0, 0],
            &[1, 1, 1, 1, 0, 0, 0, 0],
            &[0, 0, 0, 0, 1, 1, 1, 1],
            &[1, 1, 1, 1, 1, 1, 1, 1],
        ]);
        let sp = sparsify(&x, 1.0, 0.1, Seed(11));
        assert_eq!(sp.centers.len(), 2);
        assert_eq!(sp.survivors.len(), 2);
        assert_eq!(sp.cover.len(), 2);
    }

    #[test]
    fn sparsify_survivors_are_far_from_centers() {
        let x = gen::bits(200, 64, Seed(3));
        let r = 12.0;
        let eps = 0.1;
        let theta = r + eps * 64.0;
        let sp = sparsify(&x, r, eps, Seed(4));
        for &s in &sp.survivors {
            for &c in &sp.centers {
                assert!(x.hamming(s as usize, c as usize) as f64 > theta);
            }
        }
        for &(p, c) in &sp.cover {
            assert!(x.hamming(p as usize, c as usize) as f64 <= theta);
        }
        let mut accounted: Vec<u32> = sp.survivors.clone();
        accounted.extend(sp.cover.iter().map(|&(p, _)| p));
        accounted.sort_unstable();
        assert_eq!(accounted, (0..200).collect::<Vec<u32>>());
    }

    #[test]
    fn assemble_promotes_everyone_when_all_cells_far() {
        // Three pairwise-far survivors: the matrix flags nothing, so the
        // sweep promotes all three.
        let x = bits_from(&[
            &[0, 0, 0, 0, 0, 0, 0, 0],
            &[1, 1, 1, 1, 0, 0, 0, 0],
            &[0, 0, 0, 0, 1, 1, 1, 1],
        ]);
        let survivors: Vec<u32> = vec![0, 1, 2];
        let sub = x.subset(&survivors).unwrap();
        let m =
            block_indicator_matrix(&sub, 1.0, 0.1, 0.5, Backend::Exact, Seed(5)).unwrap();
        let (centers, cover) = assemble_net(&x, &survivors, &m, 1.0, 0.1);
        assert_eq!(centers, vec![0, 1, 2]);
        assert_eq!(cover.len(), 3);
        assert!(cover.iter().all(|&(p, c)| p == c));
    }

    #[test]
    fn assemble_handles_empty_survivors() {
        let x = bits_from(&[&[0, 0, 0, 0]]);
        let m = IndicatorMatrix {
            r: 1.0,
            eps: 0.1,
            cell_size: 1,
            cells: Vec::new(),
            values: Vec::new(),
            n: 0,
        };
        let (centers, cover) = assemble_net(&x, &[], &m, 1.0, 0.1);
        assert!(centers.is_empty());
        assert!(cover.is_empty());
    }

    #[test]
    fn net_on_three_spread_patterns_keeps_all() {
        // 0000, 1111, 0011: pairwise distances 4, 2, 2. At r = 1 and
        // small eps nothing covers anything else, so the only valid net
        // is all three points.
        let x = bits_from(&[&[0, 0, 0, 0], &[1, 1, 1, 1], &[0, 0, 1, 1]]);
        for seed in 0..10u64 {
            let net = hamming_rnet(&x, 1.0, 0.1, Backend::Exact, Seed(seed)).unwrap();
            assert_eq!(net.centers, vec![0, 1, 2]);
            assert_eq!(net.covered_by, vec![0, 1, 2]);
        }
    }

    #[test]
    fn net_at_r_two_lands_in_the_valid_family() {
        // Same patterns at r = 2: distances 4, 2, 2 sit exactly on the
        // packing boundary and within covering range of 0011, so several
        // nets are valid. Assert the output verifies rather than pinning
        // one.
        let x = bits_from(&[&[0, 0, 0, 0], &[1, 1, 1, 1], &[0, 0, 1, 1]]);
        for seed in 0..10u64 {
            let net = hamming_rnet(&x, 2.0, 0.1, Backend::Exact, Seed(seed)).unwrap();
            let report = verify_hamming_net(&x, &net.centers, &net.covered_by, 2.0, 0.1);
            assert!(report.ok(), "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn net_with_tiny_radius_dedups_patterns() {
        // r = 0 with eps*k < 1: only exact duplicates can be covered, so
        // the net keeps one center per distinct pattern.
        let x = bits_from(&[
            &[0, 0, 0, 0],
            &[0, 0, 0, 0],
            &[0, 1, 0, 0],
            &[0, 1, 0, 0],
            &[1, 1, 1, 1],
        ]);
        let net = hamming_rnet(&x, 0.0, 0.2, Backend::Exact, Seed(9)).unwrap();
        assert_eq!(net.centers.len(), 3);
        for p in 0..5 {
            let c = net.covered_by[p] as usize;
            assert_eq!(x.hamming(p, c), 0);
        }
    }

    #[test]
    fn net_verifies_on_random_instances_all_backends() {
        let x = gen::bits(192, 32, Seed(21));
        let r = 9.0;
        let eps = 0.15;
        for backend in [Backend::Exact, Backend::Sampled, Backend::Ptf] {
            for seed in 0..3u64 {
                let net = hamming_rnet(&x, r, eps, backend, Seed(100 + seed)).unwrap();
                let report = verify_hamming_net(&x, &net.centers, &net.covered_by, r, eps);
                assert!(report.ok(), "{backend:?} seed {seed}: {report:?}");
            }
        }
    }

    #[test]
    fn net_is_deterministic_per_seed() {
        let x = gen::bits(128, 32, Seed(23));
        let a = hamming_rnet(&x, 9.0, 0.2, Backend::Exact, Seed(5)).unwrap();
        let b = hamming_rnet(&x, 9.0, 0.2, Backend::Exact, Seed(5)).unwrap();
        assert_eq!(a.centers, b.centers);
        assert_eq!(a.covered_by, b.covered_by);
    }

    /// Forced-count instance: clusters so tight and so separated that the
    /// net size is fully determined by r.
    fn forced_clusters() -> BitPointSet {
        // Three groups of two identical points; groups pairwise far.
        let rows: Vec<Vec<u8>> = vec![
            vec![0; 24],
            vec![0; 24],
            {
                let mut v = vec![0; 24];
                v[8..16].fill(1);
                v
            },
            {
                let mut v = vec![0; 24];
                v[8..16].fill(1);
                v
            },
            vec![1; 24],
            vec![1; 24],
        ];
        let refs: Vec<&[u8]> = rows.iter().map(Vec::as_slice).collect();
        bits_from(&refs)
    }

    #[test]
    fn net_size_tracks_radius_on_forced_instances() {
        let x = forced_clusters();
        // Distances: within group 0, between groups 8 or 16 or 24.
        // eps = 0.03: theta = r + 0.72.
        for seed in 0..5u64 {
            // r = 1: only duplicates covered, one center per group.
            let n1 = hamming_rnet(&x, 1.0, 0.03, Backend::Exact, Seed(seed)).unwrap();
            assert_eq!(n1.centers.len(), 3, "seed {seed}");
            // r = 20: the middle group reaches both ends (8 and 16), so a
            // single middle center suffices; the other valid shape is one
            // center in each end group (24 apart). Never three: the middle
            // group sits within 20 of both ends.
            let n2 = hamming_rnet(&x, 20.0, 0.03, Backend::Exact, Seed(seed)).unwrap();
            assert!(
                n2.centers.len() <= 2,
                "seed {seed}: got {} centers",
                n2.centers.len()
            );
            let report = verify_hamming_net(&x, &n2.centers, &n2.covered_by, 20.0, 0.03);
            assert!(report.ok());
        }
    }

    /// Clustered instance dense enough that survivors always retain more
    /// close pairs than the verification budget allows.
    fn budget_buster() -> BitPointSet {
        let clusters = 64usize;
        let per = 8usize;
        let k = 16 * clusters;
        let mut rows: Vec<Vec<u8>> = Vec::with_capacity(clusters * per);
        for c in 0..clusters {
            let base = 16 * c;
            for i in 0..per {
                let mut row = vec![0u8; k];
                row[base..base + 16].fill(0);
                // Members differ in two private bits: diameter 4.
                row[base + 2 * (i % 8)] = 1;
                row[base + 2 * (i % 8) + 1] = 1;
                // Mark the cluster id in its window so bases differ by 32.
                for b in 0..16 {
                    row[base + b] ^= 1;
                }
                rows.push(row);
            }
        }
        let refs: Vec<&[u8]> = rows.iter().map(Vec::as_slice).collect();
        bits_from(&refs)
    }

    #[test]
    fn dense_survivors_exhaust_retries() {
        // 64 clusters of 8 points with diameter 4 and separation >= 28.
        // theta just over 4 lets sparsify erase at most one cluster per
        // round (sqrt(512) = 23 rounds), so over 300 points survive with
        // every close pair intact; the flagged entries then exceed the
        // n^1.7 budget on every attempt.
        let x = budget_buster();
        let k = x.k() as f64;
        let eps = 0.2 / k * 16.0; // eps*k = 3.2, theta = 4.2 at r = 1
        let err = hamming_rnet(&x, 1.0, eps, Backend::Exact, Seed(40));
        match err {
            Err(Error::RetriesExhausted(c)) => assert_eq!(c, RETRY_CAP),
            other => panic!("expected retry exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn delfar_matches_exact_classification() {
        let x = gen::bits(160, 48, Seed(31));
        let r = 10.0;
        let eps = 0.1;
        let theta = r + eps * 48.0;
        for seed in 0..5u64 {
            let far = delfar_hamming(&x, r, eps, Backend::Exact, Seed(seed)).unwrap();
            let in_far: Vec<bool> = {
                let mut v = vec![false; 160];
                for &p in &far {
                    v[p as usize] = true;
                }
                v
            };
            for p in 0..160usize {
                let nn = (0..160)
                    .filter(|&q| q != p)
                    .map(|q| x.hamming(p, q))
                    .min()
                    .unwrap() as f64;
                if nn <= r {
                    assert!(!in_far[p], "seed {seed}: point {p} with nn {nn} kept");
                }
                if nn > theta {
                    assert!(in_far[p], "seed {seed}: point {p} with nn {nn} dropped");
                }
            }
        }
    }

    #[test]
    fn delfar_keeps_isolated_point_and_drops_clump() {
        let x = bits_from(&[
            &[0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
            &[1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
            &[0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
            &[1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1],
        ]);
        for seed in 0..8u64 {
            let far = delfar_hamming(&x, 2.0, 0.05, Backend::Exact, Seed(seed)).unwrap();
            assert_eq!(far, vec![3], "seed {seed}");
        }
    }

    #[test]
    fn filter_far_excludes_all_centers() {
        let x = gen::bits(96, 32, Seed(41));
        let centers: Vec<u32> = (0..96).collect();
        let far =
            filter_far_hamming(&x, &centers, 5.0, 0.1, Backend::Exact, Seed(1)).unwrap();
        assert!(far.is_empty());
    }

    #[test]
    fn filter_far_with_no_centers_keeps_everything() {
        let x = gen::bits(32, 32, Seed(42));
        let far = filter_far_hamming(&x, &[], 5.0, 0.1, Backend::Exact, Seed(1)).unwrap();
        assert_eq!(far, (0..32).collect::<Vec<u32>>());
    }

    #[test]
    fn filter_far_matches_exact_classification() {
        let x = gen::bits(160, 48, Seed(43));
        let centers: Vec<u32> = vec![3, 17, 59, 101, 140];
        let r = 11.0;
        let eps = 0.1;
        let theta = r + eps * 48.0;
        for seed in 0..5u64 {
            let far =
                filter_far_hamming(&x, &centers, r, eps, Backend::Exact, Seed(seed)).unwrap();
            let in_far: Vec<bool> = {
                let mut v = vec![false; 160];
                for &p in &far {
                    v[p as usize] = true;
                }
                v
            };
            for p in 0..160usize {
                if centers.contains(&(p as u32)) {
                    assert!(!in_far[p]);
                    continue;
                }
                let d = centers
                    .iter()
                    .map(|&c| x.hamming(p, c as usize))
                    .min()
                    .unwrap() as f64;
                if d <= r {
                    assert!(!in_far[p], "seed {seed}: {p} at {d} kept");
                }
                if d > theta {
                    assert!(in_far[p], "seed {seed}: {p} at {d} dropped");
                }
            }
        }
    }

    #[test]
    fn cover_assign_single_center_claims_ball() {
        let x = bits_from(&[
            &[0, 0, 0, 0, 0, 0, 0, 0],
            &[1, 0, 0, 0, 0, 0, 0, 0],
            &[1, 1, 0, 0, 0, 0, 0, 0],
            &[1, 1, 1, 1, 1, 1, 1, 1],
        ]);
        let sets =
            cover_assign_hamming(&x, &[0], 2.0, 0.05, Backend::Exact, Seed(3)).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0], vec![1, 2]);
    }

    #[test]
    fn cover_assign_rejects_close_centers() {
        let x = bits_from(&[
            &[0, 0, 0, 0, 0, 0, 0, 0],
            &[1, 1, 0, 0, 0, 0, 0, 0],
        ]);
        let err = cover_assign_hamming(&x, &[0, 1], 2.0, 0.1, Backend::Exact, Seed(3));
        match err {
            Err(Error::CentersTooClose(0, 1)) => {}
            other => panic!("expected CentersTooClose, got {other:?}"),
        }
    }

    #[test]
    fn cover_assign_is_exact_on_separated_centers() {
        // Two centers 24 apart, satellites placed within r of each.
        let mut rows: Vec<Vec<u8>> = Vec::new();
        rows.push(vec![0; 24]);
        rows.push(vec![1; 24]);
        for i in 0..6 {
            let mut v = vec![0u8; 24];
            v[i] = 1;
            rows.push(v); // distance 1 from center 0
        }
        for i in 0..6 {
            let mut v = vec![1u8; 24];
            v[i] = 0;
            rows.push(v); // distance 1 from center 1
        }
        let refs: Vec<&[u8]> = rows.iter().map(Vec::as_slice).collect();
        let x = bits_from(&refs);
        let r = 2.0;
        let eps = 0.05; // theta = 3.2, separation 24 >= 6.4
        for seed in 0..5u64 {
            let sets =
                cover_assign_hamming(&x, &[0, 1], r, eps, Backend::Exact, Seed(seed)).unwrap();
            assert_eq!(sets[0], (2..8).collect::<Vec<u32>>(), "seed {seed}");
            assert_eq!(sets[1], (8..14).collect::<Vec<u32>>(), "seed {seed}");
        }
    }

    /// 12 centers on disjoint 8-bit windows (pairwise 16 apart), two
    /// satellites at distance 1 per center, four far points in the tail
    /// window. With n = 40 the rounds process only 7 centers, forcing the
    /// rest through the bipartite matrix.
    fn windowed_centers() -> (BitPointSet, Vec<u32>) {
        let k = 104;
        let mut rows: Vec<Vec<u8>> = Vec::new();
        for i in 0..12 {
            let mut v = vec![0u8; k];
            v[8 * i..8 * i + 8].fill(1);
            rows.push(v);
        }
        for i in 0..12 {
            for s in 0..2 {
                let mut v = vec![0u8; k];
                v[8 * i..8 * i + 8].fill(1);
                v[8 * i + s] = 0;
                rows.push(v);
            }
        }
        for f in 0..4 {
            let mut v = vec![0u8; k];
            v[96..104].fill(1);
            v[96 + f] = 0;
            rows.push(v);
        }
        let refs: Vec<&[u8]> = rows.iter().map(Vec::as_slice).collect();
        (bits_from(&refs), (0..12).collect())
    }

    #[test]
    fn cover_assign_matrix_path_assigns_satellites() {
        let (x, centers) = windowed_centers();
        // theta = 2 + 0.01 * 104 = 3.04; separation 16 >= 6.08.
        for seed in 0..5u64 {
            let sets =
                cover_assign_hamming(&x, &centers, 2.0, 0.01, Backend::Exact, Seed(seed))
                    .unwrap();
            for (i, set) in sets.iter().enumerate() {
                let expect: Vec<u32> = vec![12 + 2 * i as u32, 12 + 2 * i as u32 + 1];
                assert_eq!(*set, expect, "seed {seed} center {i}");
            }
        }
    }

    #[test]
    fn filter_far_matrix_path_keeps_only_tail_points() {
        let (x, centers) = windowed_centers();
        for seed in 0..5u64 {
            let far =
                filter_far_hamming(&x, &centers, 2.0, 0.01, Backend::Exact, Seed(seed))
                    .unwrap();
            assert_eq!(far, vec![36, 37, 38, 39], "seed {seed}");
        }
    }

    #[test]
    fn pipelines_reject_bad_eps() {
        let x = gen::bits(8, 16, Seed(1));
        assert!(matches!(
            hamming_rnet(&x, 1.0, 0.0, Backend::Exact, Seed(1)),
            Err(Error::EpsOutOfRange(..))
        ));
        assert!(matches!(
            delfar_hamming(&x, 1.0, 1.0, Backend::Exact, Seed(1)),
            Err(Error::EpsOutOfRange(..))
        ));
    }
}
