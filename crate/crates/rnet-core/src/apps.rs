//! Applications of the net machinery: k-th nearest neighbor values,
//! min-max clustering under sketchable constraints, and two k-center
//! algorithms.
//!
//! Each application wraps a [`Decider`] around net primitives and runs
//! the radius search, then either reports the refined radius (k-th NN)
//! or replays the best construction any accepting probe produced. The
//! constructions are cached inside the decider as the search runs, so
//! the returned clustering is exactly one the decider certified, not a
//! rebuild that fresh randomness could flip.
//!
//! Approximation quality is stated against the exact optimum f:
//! `kth_nn_distance` returns a value in [f, (1+eps)f]; `minmax_cluster`
//! and `kcenter_4eps` return clusterings with radius at most (4+eps)f;
//! `kcenter_2eps` stays within (2+eps)f. The eps floors below each
//! function are where the internal nets consume their share of the
//! budget.

use std::cell::RefCell;
use std::collections::HashMap;

use rand::Rng;

use crate::dataset::{PointSet, Seed};
use crate::error::{Error, Result};
use crate::indicator::Backend;
use crate::netprune::{
    netprune_search, refine_interval, Decider, DeciderOutcome, SearchMode,
};
use crate::rnet::{approx_rnet, cover_assign, delfar, filter_far};

/// A clustering with designated centers. `assignment[p]` is the center
/// point covering p (centers map to themselves); `radius` is the exact
/// largest distance from a point to its assigned center.
#[derive(Debug, Clone)]
pub struct Clustering {
    pub centers: Vec<u32>,
    pub assignment: Vec<u32>,
    pub radius: f64,
}

/// A farthest-first style ordering. `radii[i]` is the scale at which
/// `order[i + 1]` was appended; entries are non-increasing and bound the
/// prefix quality: every point is within (1+eps) * radii[i] of
/// `order[..=i]`, and `order[..=i + 1]` is pairwise at least radii[i]
/// apart.
#[derive(Debug, Clone)]
pub struct GreedyPermutation {
    pub order: Vec<u32>,
    pub radii: Vec<f64>,
    pub eps: f64,
}

/// Round scheduling for [`greedy_permutation_from`]. Both schedules
/// produce identical output; they differ in how idle rounds are skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RoundSchedule {
    /// Skip ahead by measuring how far the unplaced points actually are.
    #[default]
    UnionGrowth,
    /// Walk every round of the exact spread ladder; diagnostic.
    ExactSpread,
}

/// Mergeable summary of a point set, sufficient for the constraint
/// families here: only the member count is carried.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sketch {
    pub count: u64,
}

/// A constraint family closed under adding members: if a set is
/// admissible, every superset is. Admissibility is decided from a
/// sketch, built per point and combined with `merge`, so a clustering
/// algorithm never has to materialize the sets it is testing.
pub trait SketchableFamily {
    /// Sketch of the singleton {p}.
    fn sketch(&self, p: u32) -> Sketch;
    /// Sketch of the union of two disjoint sets.
    fn merge(&self, a: Sketch, b: Sketch) -> Sketch;
    /// Whether a set with this sketch is admissible.
    fn orac(&self, s: &Sketch) -> bool;
    fn name(&self) -> String;
}

/// Every set is admissible.
pub struct All;

impl SketchableFamily for All {
    fn sketch(&self, _p: u32) -> Sketch {
        Sketch { count: 1 }
    }
    fn merge(&self, a: Sketch, b: Sketch) -> Sketch {
        Sketch { count: a.count + b.count }
    }
    fn orac(&self, _s: &Sketch) -> bool {
        true
    }
    fn name(&self) -> String {
        "all".into()
    }
}

/// Sets of at least `self.0` members are admissible.
pub struct MinSize(pub u64);

impl SketchableFamily for MinSize {
    fn sketch(&self, _p: u32) -> Sketch {
        Sketch { count: 1 }
    }
    fn merge(&self, a: Sketch, b: Sketch) -> Sketch {
        Sketch { count: a.count + b.count }
    }
    fn orac(&self, s: &Sketch) -> bool {
        s.count >= self.0
    }
    fn name(&self) -> String {
        format!("minsize:{}", self.0)
    }
}

/// Parses "all" or "minsize:M" into a family.
pub fn parse_family(spec: &str) -> Result<Box<dyn SketchableFamily>> {
    let s = spec.trim().to_ascii_lowercase();
    if s == "all" {
        return Ok(Box::new(All));
    }
    if let Some(m) = s.strip_prefix("minsize:") {
        if let Ok(m) = m.parse::<u64>() {
            return Ok(Box::new(MinSize(m)));
        }
    }
    Err(Error::UnknownFamily(spec.to_string()))
}

fn check_eps(eps: f64, lo: f64, range: &'static str) -> Result<()> {
    if !(eps.is_finite() && eps >= lo && eps < 1.0) {
        return Err(Error::EpsOutOfRange(eps, range));
    }
    Ok(())
}

fn rows_equal(x: &PointSet, a: u32, b: u32) -> bool {
    x.row(a as usize).iter().zip(x.row(b as usize)).all(|(u, v)| u == v)
}

/// Partitions the points into groups of identical rows, each ascending,
/// ordered by their smallest member.
fn duplicate_groups(x: &PointSet) -> Vec<Vec<u32>> {
    let n = x.n();
    let mut idx: Vec<u32> = (0..n as u32).collect();
    idx.sort_by(|&a, &b| {
        for (u, v) in x.row(a as usize).iter().zip(x.row(b as usize)) {
            match u.total_cmp(v) {
                std::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        std::cmp::Ordering::Equal
    });
    let mut groups: Vec<Vec<u32>> = Vec::new();
    for &p in &idx {
        if let Some(g) = groups.last_mut() {
            if rows_equal(x, g[0], p) {
                g.push(p);
                continue;
            }
        }
        groups.push(vec![p]);
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    groups.sort_by_key(|g| g[0]);
    groups
}

/// Exact nearest-center assignment and its radius.
fn nearest_center_assignment(x: &PointSet, centers: &[u32]) -> (Vec<u32>, f64) {
    let mut assignment = vec![0u32; x.n()];
    let mut radius = 0.0f64;
    for p in 0..x.n() {
        let mut bc = centers[0];
        let mut bd = f64::INFINITY;
        for &c in centers {
            let d = x.dist(p, c as usize);
            if d < bd {
                bd = d;
                bc = c;
            }
        }
        assignment[p] = bc;
        radius = radius.max(bd);
    }
    (assignment, radius)
}

// ---------------------------------------------------------------------
// k-th smallest nearest neighbor distance
// ---------------------------------------------------------------------

/// Decides whether the k-th smallest nearest neighbor distance is below
/// or above the probe by counting, via two far-point deletions, how many
/// points keep a neighbor within the scale. Deletion boundaries are
/// exact at desk scale, so Below(r) certifies f <= r and Above(r)
/// certifies f > (1+eps/4)r; the midway case is an explicit interval
/// one grid step wide.
struct KthNnDecider {
    k: usize,
    eps: f64,
    backend: Backend,
}

impl Decider for KthNnDecider {
    fn eps(&self) -> f64 {
        self.eps
    }
    fn decide(&self, x: &PointSet, r: f64, seed: Seed) -> Result<DeciderOutcome> {
        let e4 = self.eps / 4.0;
        let q = 1.0 + e4;
        let far1 = delfar(x, r / q, e4, self.backend, seed.child(0))?;
        if x.n() - far1.len() >= self.k {
            return Ok(DeciderOutcome::Below(r));
        }
        let far2 = delfar(x, r, e4, self.backend, seed.child(1))?;
        if x.n() - far2.len() < self.k {
            return Ok(DeciderOutcome::Above(r));
        }
        Ok(DeciderOutcome::Interval(r / q, q * r))
    }
}

/// Validates arguments shared by the k-th NN entry points and returns
/// the number of points with a zero nearest neighbor distance.
fn kth_checked(x: &PointSet, k: usize, eps: f64) -> Result<usize> {
    if x.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    if k == 0 || k > x.n() || x.n() < 2 {
        return Err(Error::KOutOfRange { k, n: x.n() });
    }
    check_eps(eps, 0.2, "[0.2, 1)")?;
    Ok(duplicate_groups(x)
        .iter()
        .filter(|g| g.len() >= 2)
        .map(|g| g.len())
        .sum())
}

/// Value in [f, (1+eps)f] where f is the k-th smallest of the n exact
/// nearest neighbor distances. Points with duplicates contribute zeros,
/// which are answered exactly without searching.
pub fn kth_nn_distance(x: &PointSet, k: usize, eps: f64, seed: Seed) -> Result<f64> {
    kth_nn_distance_with(x, k, eps, Backend::Exact, seed)
}

/// [`kth_nn_distance`] on a chosen close/far backend.
pub fn kth_nn_distance_with(
    x: &PointSet,
    k: usize,
    eps: f64,
    backend: Backend,
    seed: Seed,
) -> Result<f64> {
    if kth_checked(x, k, eps)? >= k {
        return Ok(0.0);
    }
    let decider = KthNnDecider { k, eps, backend };
    let (lo, hi) = netprune_search(x, &decider, SearchMode::Doubling, seed.child(1))?;
    refine_interval(x, &decider, lo, hi, eps / 4.0, seed.child(2))
}

/// The bracketing stage of [`kth_nn_distance`] alone, in a chosen search
/// mode; a diagnostic for the search itself. Driver mode probes pruned
/// subsets, so its bracket contains f with high empirical probability
/// rather than surely. Returns (0, 0) when duplicates answer the query.
pub fn kth_nn_bracket(
    x: &PointSet,
    k: usize,
    eps: f64,
    mode: SearchMode,
    seed: Seed,
) -> Result<(f64, f64)> {
    if kth_checked(x, k, eps)? >= k {
        return Ok((0.0, 0.0));
    }
    let decider = KthNnDecider { k, eps, backend: Backend::Exact };
    netprune_search(x, &decider, mode, seed.child(1))
}

// ---------------------------------------------------------------------
// min-max clustering under a sketchable family
// ---------------------------------------------------------------------

/// Decides whether an admissible clustering of radius r exists by
/// netting at the matching scale and sketch-testing each center's ball.
/// All balls admissible: assemble the clustering, keep it if it beats
/// the cached one, answer Below. Any ball inadmissible: were the optimum
/// at most r / (4(1+eta)^2), its cluster through that center would sit
/// inside the ball and pass by closure, so answer Above.
struct MinMaxDecider<'a> {
    family: &'a dyn SketchableFamily,
    eta: f64,
    eps_user: f64,
    backend: Backend,
    best: RefCell<Option<Clustering>>,
}

impl MinMaxDecider<'_> {
    fn sketch_of(&self, members: &[u32]) -> Sketch {
        let mut sk = self.family.sketch(members[0]);
        for &p in &members[1..] {
            sk = self.family.merge(sk, self.family.sketch(p));
        }
        sk
    }
}

impl Decider for MinMaxDecider<'_> {
    fn eps(&self) -> f64 {
        let g = 1.0 + self.eta;
        4.0 * g * g - 1.0
    }
    fn decide(&self, x: &PointSet, r: f64, seed: Seed) -> Result<DeciderOutcome> {
        let g = 1.0 + self.eta;
        let s = r / (4.0 * g * g);
        let cs = 2.0 * s;
        for attempt in 0..4i32 {
            // The net radius equals the separation cover_assign demands;
            // a failed check (possible past the exact-repair scale) is
            // retried on a slightly inflated net.
            let grow = (1.0 + self.eps_user / 64.0).powi(attempt);
            let net_r = 2.0 * g * cs * grow;
            let net =
                approx_rnet(x, net_r, self.eta, self.backend, seed.child(8 + attempt as u64))?;
            let sets = match cover_assign(
                x,
                &net.centers,
                cs,
                self.eta,
                self.backend,
                seed.child(16 + attempt as u64),
            ) {
                Err(Error::CentersTooClose(..)) => continue,
                other => other?,
            };
            for (i, &c) in net.centers.iter().enumerate() {
                let mut sk = self.family.sketch(c);
                for &p in &sets[i] {
                    sk = self.family.merge(sk, self.family.sketch(p));
                }
                if !self.family.orac(&sk) {
                    return Ok(DeciderOutcome::Above(r));
                }
            }
            // Every ball passed. Ball members keep their ball's center;
            // stragglers outside every ball fall back to their covering
            // net center, which only grows the passing sets.
            let mut assignment = vec![u32::MAX; x.n()];
            for (i, &c) in net.centers.iter().enumerate() {
                assignment[c as usize] = c;
                for &p in &sets[i] {
                    assignment[p as usize] = c;
                }
            }
            for (p, a) in assignment.iter_mut().enumerate() {
                if *a == u32::MAX {
                    *a = net.assignment[p];
                }
            }
            let mut radius = 0.0f64;
            for (p, &a) in assignment.iter().enumerate() {
                radius = radius.max(x.dist(p, a as usize));
            }
            let mut clusters: HashMap<u32, Vec<u32>> = HashMap::new();
            for (p, &a) in assignment.iter().enumerate() {
                clusters.entry(a).or_default().push(p as u32);
            }
            for members in clusters.values() {
                if !self.family.orac(&self.sketch_of(members)) {
                    return Err(Error::DeciderInconsistent(
                        "the family is not closed under adding members".into(),
                    ));
                }
            }
            let mut best = self.best.borrow_mut();
            if best.as_ref().map_or(true, |b| radius < b.radius) {
                *best = Some(Clustering { centers: net.centers.clone(), assignment, radius });
            }
            return Ok(DeciderOutcome::Below(r));
        }
        Err(Error::RetriesExhausted(4))
    }
}

/// Partitions the points into admissible clusters whose largest
/// center-to-member distance is at most (4+eps) times the best possible
/// over all admissible partitions. The family must be closed under
/// adding members; a violation is reported, not silently mis-clustered.
/// eps below 0.5 is rejected: the internal nets' floor consumes the
/// whole budget there.
pub fn minmax_cluster(
    x: &PointSet,
    family: &dyn SketchableFamily,
    eps: f64,
    seed: Seed,
) -> Result<Clustering> {
    minmax_cluster_with(x, family, eps, Backend::Exact, seed)
}

/// [`minmax_cluster`] on a chosen close/far backend.
pub fn minmax_cluster_with(
    x: &PointSet,
    family: &dyn SketchableFamily,
    eps: f64,
    backend: Backend,
    seed: Seed,
) -> Result<Clustering> {
    if x.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    check_eps(eps, 0.5, "[0.5, 1)")?;
    let n = x.n();
    let whole = {
        let mut sk = family.sketch(0);
        for p in 1..n as u32 {
            sk = family.merge(sk, family.sketch(p));
        }
        sk
    };
    if !family.orac(&whole) {
        // No subset can be admissible either: it would make the whole
        // set admissible by closure.
        return Err(Error::InfeasibleFamily);
    }
    if (0..n as u32).all(|p| family.orac(&family.sketch(p))) {
        return Ok(Clustering {
            centers: (0..n as u32).collect(),
            assignment: (0..n as u32).collect(),
            radius: 0.0,
        });
    }
    // Any zero-radius partition refines the duplicate groups, and by
    // closure its pieces certify the groups themselves. So if the groups
    // pass they are optimal, and if any fails the optimum is positive
    // and the search below is safe.
    let groups = duplicate_groups(x);
    let group_sketch_ok = groups.iter().all(|g| {
        let mut sk = family.sketch(g[0]);
        for &p in &g[1..] {
            sk = family.merge(sk, family.sketch(p));
        }
        family.orac(&sk)
    });
    if group_sketch_ok {
        let mut assignment = vec![0u32; n];
        for g in &groups {
            for &p in g {
                assignment[p as usize] = g[0];
            }
        }
        return Ok(Clustering {
            centers: groups.iter().map(|g| g[0]).collect(),
            assignment,
            radius: 0.0,
        });
    }
    let eta = (eps / 16.0).max(0.05);
    let decider = MinMaxDecider { family, eta, eps_user: eps, backend, best: RefCell::new(None) };
    let (lo, hi) = netprune_search(x, &decider, SearchMode::Doubling, seed.child(1))?;
    refine_interval(x, &decider, lo, hi, eps / 32.0, seed.child(2))?;
    Ok(decider.best.into_inner().expect("an accepting probe fed the cache"))
}

// ---------------------------------------------------------------------
// k-center, decider route
// ---------------------------------------------------------------------

/// Decides k-center feasibility at a probe radius from two net sizes. A
/// small net slightly under r covers everything with at most k centers:
/// Below, construction cached. A small net at 2(1+sigma)r pins the
/// optimum between the packing and covering bounds: constant-spread
/// Interval, construction cached. Both nets too big: k+1 points pairwise
/// 2(1+sigma)r apart force the optimum above (1+sigma)r: Above.
struct KCenterDecider {
    k: usize,
    sigma: f64,
    eta: f64,
    backend: Backend,
    best: RefCell<Option<Clustering>>,
}

impl KCenterDecider {
    fn cache(&self, x: &PointSet, centers: &[u32]) {
        let (assignment, radius) = nearest_center_assignment(x, centers);
        let mut best = self.best.borrow_mut();
        if best.as_ref().map_or(true, |b| radius < b.radius) {
            *best = Some(Clustering { centers: centers.to_vec(), assignment, radius });
        }
    }
}

impl Decider for KCenterDecider {
    fn eps(&self) -> f64 {
        let s = 1.0 + self.sigma;
        4.0 * s * s * (1.0 + self.eta) - 1.0
    }
    fn decide(&self, x: &PointSet, r: f64, seed: Seed) -> Result<DeciderOutcome> {
        let n1 = approx_rnet(x, r / (1.0 + self.sigma), self.eta, self.backend, seed.child(0))?;
        if n1.centers.len() <= self.k {
            self.cache(x, &n1.centers);
            return Ok(DeciderOutcome::Below(r));
        }
        let r2 = 2.0 * (1.0 + self.sigma) * r;
        let n2 = approx_rnet(x, r2, self.eta, self.backend, seed.child(1))?;
        if n2.centers.len() <= self.k {
            self.cache(x, &n2.centers);
            return Ok(DeciderOutcome::Interval(
                r / (2.0 * (1.0 + self.sigma)),
                2.0 * (1.0 + self.eta) * (1.0 + self.sigma) * r,
            ));
        }
        Ok(DeciderOutcome::Above(r))
    }
}

/// Chooses k centers among the points whose covering radius is at most
/// (4+eps) times optimal, by radius search over net sizes. eps below 0.5
/// is rejected, as in [`minmax_cluster`].
pub fn kcenter_4eps(x: &PointSet, k: usize, eps: f64, seed: Seed) -> Result<Clustering> {
    kcenter_4eps_with(x, k, eps, Backend::Exact, seed)
}

/// [`kcenter_4eps`] on a chosen close/far backend.
pub fn kcenter_4eps_with(
    x: &PointSet,
    k: usize,
    eps: f64,
    backend: Backend,
    seed: Seed,
) -> Result<Clustering> {
    if x.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    if k == 0 || k > x.n() {
        return Err(Error::KOutOfRange { k, n: x.n() });
    }
    check_eps(eps, 0.5, "[0.5, 1)")?;
    let groups = duplicate_groups(x);
    if groups.len() <= k {
        let mut assignment = vec![0u32; x.n()];
        for g in &groups {
            for &p in g {
                assignment[p as usize] = g[0];
            }
        }
        return Ok(Clustering {
            centers: groups.iter().map(|g| g[0]).collect(),
            assignment,
            radius: 0.0,
        });
    }
    let decider = KCenterDecider {
        k,
        sigma: eps / 16.0,
        eta: (eps / 32.0).max(0.05),
        backend,
        best: RefCell::new(None),
    };
    let (lo, hi) = netprune_search(x, &decider, SearchMode::Doubling, seed.child(1))?;
    refine_interval(x, &decider, lo, hi, eps / 16.0, seed.child(2))?;
    Ok(decider.best.into_inner().expect("an accepting probe fed the cache"))
}

// ---------------------------------------------------------------------
// greedy permutation and the k-center it induces
// ---------------------------------------------------------------------

/// [`greedy_permutation_from`] started at a sampled point, on the
/// default schedule.
pub fn greedy_permutation(x: &PointSet, eps: f64, seed: Seed) -> Result<GreedyPermutation> {
    if x.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let start = seed.rng().gen_range(0..x.n()) as u32;
    greedy_permutation_from(x, start, eps, RoundSchedule::default(), seed.child(7))
}

/// Approximate farthest-first ordering. Rounds sweep a geometric scale
/// ladder downward from the spread of `start`; each round nets the
/// points still far from everything placed and appends the net's
/// centers at the round's scale. Within a round appends are at least the
/// scale apart (packing), across rounds farther (the far filter), and
/// once a round ends everything unplaced is covered at the next scale
/// up, which is where the (1+eps) prefix bound comes from. Duplicates
/// ride behind their representative and join at scale zero at the end.
pub fn greedy_permutation_from(
    x: &PointSet,
    start: u32,
    eps: f64,
    schedule: RoundSchedule,
    seed: Seed,
) -> Result<GreedyPermutation> {
    if x.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let n = x.n();
    if start as usize >= n {
        return Err(Error::KOutOfRange { k: start as usize, n });
    }
    check_eps(eps, 0.2, "[0.2, 1)")?;
    if n == 1 {
        return Ok(GreedyPermutation { order: vec![0], radii: vec![], eps });
    }
    let delta = (0..n).map(|p| x.dist(start as usize, p)).fold(0.0, f64::max);
    if delta == 0.0 {
        return Err(Error::AllPointsIdentical);
    }
    let groups = duplicate_groups(x);
    let reps: Vec<u32> = groups
        .iter()
        .map(|g| if g.contains(&start) { start } else { g[0] })
        .collect();
    let m = reps.len();
    let sub = x.subset(&reps)?;
    let local_start = reps.iter().position(|&p| p == start).unwrap() as u32;
    let eta = eps / 4.0;
    let growth = 1.0 + eta;
    let rho_at = |j: u32| delta / growth.powi(j as i32 - 1);
    let budget: u32 = match schedule {
        RoundSchedule::UnionGrowth => 4 * m as u32 + 64,
        RoundSchedule::ExactSpread => {
            // Walk the full ladder down to the smallest gap; past it
            // every remaining point is far and gets placed.
            let mut d_min = f64::INFINITY;
            for a in 0..m {
                for b in (a + 1)..m {
                    d_min = d_min.min(sub.dist(a, b));
                }
            }
            ((2.0 * delta / d_min).ln() / growth.ln()).ceil() as u32 + 10
        }
    };
    let mut order: Vec<u32> = vec![start];
    let mut radii: Vec<f64> = Vec::new();
    let mut placed: Vec<u32> = vec![local_start];
    let mut is_placed = vec![false; m];
    is_placed[local_start as usize] = true;
    let mut j: u32 = 1;
    let mut executed: u32 = 0;
    while placed.len() < m {
        executed += 1;
        if executed > budget {
            return Err(Error::RetriesExhausted(budget));
        }
        let rho = rho_at(j);
        let far = filter_far(&sub, &placed, rho, eta, Backend::Exact, seed.child(j as u64))?;
        if far.is_empty() {
            match schedule {
                RoundSchedule::ExactSpread => j += 1,
                RoundSchedule::UnionGrowth => {
                    // Nothing is far at this scale; jump straight to the
                    // first scale the farthest unplaced point exceeds.
                    // Skipped rounds are provably as empty as this one.
                    let mut dfar = 0.0f64;
                    for q in 0..m {
                        if is_placed[q] {
                            continue;
                        }
                        let d = placed
                            .iter()
                            .map(|&p| sub.dist(q, p as usize))
                            .fold(f64::INFINITY, f64::min);
                        dfar = dfar.max(d);
                    }
                    let t = (delta * growth / dfar).ln() / growth.ln();
                    let mut jn = (t.floor().max(0.0) as u32 + 2).max(j + 1);
                    while rho_at(jn) * growth >= dfar {
                        jn += 1;
                    }
                    j = jn;
                }
            }
            continue;
        }
        let fsub = sub.subset(&far)?;
        let net =
            approx_rnet(&fsub, rho, eta, Backend::Exact, seed.child(j as u64).child(1))?;
        for &c in &net.centers {
            let local = far[c as usize];
            order.push(reps[local as usize]);
            radii.push(rho);
            placed.push(local);
            is_placed[local as usize] = true;
        }
        j += 1;
    }
    for p in 0..n as u32 {
        if !reps.contains(&p) {
            order.push(p);
            radii.push(0.0);
        }
    }
    Ok(GreedyPermutation { order, radii, eps })
}

/// k centers from the first k points of a greedy permutation at eps/2,
/// with exact nearest-center assignment: radius at most (2+eps) times
/// the optimal k-center radius. The permutation prefix is pairwise
/// spread enough that any k centers leave two prefix points sharing one,
/// which lower-bounds the optimum.
pub fn kcenter_2eps(x: &PointSet, k: usize, eps: f64, seed: Seed) -> Result<Clustering> {
    if x.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    if k == 0 || k > x.n() {
        return Err(Error::KOutOfRange { k, n: x.n() });
    }
    check_eps(eps, 0.4, "[0.4, 1)")?;
    if (1..x.n() as u32).all(|p| rows_equal(x, 0, p)) {
        return Ok(Clustering {
            centers: vec![0],
            assignment: vec![0; x.n()],
            radius: 0.0,
        });
    }
    let perm = greedy_permutation(x, eps / 2.0, seed)?;
    let mut centers: Vec<u32> = perm.order[..k].to_vec();
    centers.sort_unstable();
    let (assignment, radius) = nearest_center_assignment(x, &centers);
    Ok(Clustering { centers, assignment, radius })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen, Metric};
    use crate::oracle::{exact_kcenter, exact_kth_nn, exact_minmax, exact_nn_dists};

    const REL: f64 = 1e-9;

    fn line(points: &[f64]) -> PointSet {
        PointSet::new(Metric::L1, points.len(), 1, points.to_vec()).unwrap()
    }

    fn assert_partition(x: &PointSet, c: &Clustering) {
        assert_eq!(c.assignment.len(), x.n());
        for &a in &c.assignment {
            assert!(c.centers.contains(&a), "assignment target {a} is not a center");
        }
        for &cc in &c.centers {
            assert_eq!(c.assignment[cc as usize], cc, "center not self-assigned");
        }
        let recomputed = c
            .assignment
            .iter()
            .enumerate()
            .map(|(p, &a)| x.dist(p, a as usize))
            .fold(0.0, f64::max);
        assert!((c.radius - recomputed).abs() <= 1e-12 * (1.0 + recomputed));
    }

    #[test]
    fn kth_small_line_bands() {
        // NN distances of {0, 1, 3, 7} are [1, 1, 2, 4].
        let x = line(&[0.0, 1.0, 3.0, 7.0]);
        for (k, f) in [(1, 1.0), (3, 2.0), (4, 4.0)] {
            let v = kth_nn_distance(&x, k, 0.2, Seed(1)).unwrap();
            assert!(
                v >= f * (1.0 - REL) && v <= 1.2 * f * (1.0 + REL),
                "k={k}: v={v} f={f}"
            );
        }
    }

    #[test]
    fn kth_duplicates_answer_zero_exactly() {
        let x = line(&[0.0, 0.0, 5.0, 5.0, 9.0]);
        for k in 1..=4 {
            assert_eq!(kth_nn_distance(&x, k, 0.3, Seed(2)).unwrap(), 0.0);
        }
        let v = kth_nn_distance(&x, 5, 0.3, Seed(2)).unwrap();
        assert!(v >= 4.0 * (1.0 - REL) && v <= 4.0 * 1.3 * (1.0 + REL), "v={v}");
    }

    #[test]
    fn kth_matches_oracle_bands_on_gaussian() {
        let x = gen::gaussian(64, 4, Metric::L2, Seed(40));
        for k in [1usize, 5, 32] {
            let f = exact_kth_nn(&x, k).unwrap();
            for seed in 0..3u64 {
                let v = kth_nn_distance(&x, k, 0.25, Seed(seed)).unwrap();
                assert!(
                    v >= f * (1.0 - REL) && v <= 1.25 * f * (1.0 + REL),
                    "k={k} seed={seed}: v={v} f={f}"
                );
            }
        }
    }

    #[test]
    fn kth_rejects_bad_arguments() {
        let x = line(&[0.0, 1.0]);
        assert!(matches!(
            kth_nn_distance(&x, 0, 0.3, Seed(0)),
            Err(Error::KOutOfRange { .. })
        ));
        assert!(matches!(
            kth_nn_distance(&x, 3, 0.3, Seed(0)),
            Err(Error::KOutOfRange { .. })
        ));
        assert!(matches!(
            kth_nn_distance(&x, 1, 0.1, Seed(0)),
            Err(Error::EpsOutOfRange(..))
        ));
        let one = line(&[4.0]);
        assert!(matches!(
            kth_nn_distance(&one, 1, 0.3, Seed(0)),
            Err(Error::KOutOfRange { .. })
        ));
    }

    #[test]
    fn kth_driver_bracket_contains_target_on_most_seeds() {
        // Driver mode rewrites the point set mid-search, so containment
        // is empirical; at this size it should hold almost always.
        let x = gen::gaussian(128, 6, Metric::L1, Seed(41));
        let f = exact_kth_nn(&x, 3).unwrap();
        let mut hits = 0;
        for seed in 0..20u64 {
            if let Ok((lo, hi)) = kth_nn_bracket(&x, 3, 0.3, SearchMode::Driver, Seed(seed)) {
                if lo * (1.0 - REL) <= f && f <= hi * (1.0 + REL) {
                    hits += 1;
                }
            }
        }
        assert!(hits >= 18, "driver bracket hit {hits}/20");
    }

    #[test]
    fn family_parsing_round_trips() {
        assert_eq!(parse_family("all").unwrap().name(), "all");
        assert_eq!(parse_family(" MinSize:3 ").unwrap().name(), "minsize:3");
        assert!(matches!(parse_family("minsize:"), Err(Error::UnknownFamily(_))));
        assert!(matches!(parse_family("minsize:x"), Err(Error::UnknownFamily(_))));
        assert!(matches!(parse_family("maxsize:3"), Err(Error::UnknownFamily(_))));
    }

    #[test]
    fn families_are_upward_closed_under_merge() {
        // Growing a set by merging singletons never flips admissible to
        // inadmissible, for any sampled growth order.
        let fams: Vec<Box<dyn SketchableFamily>> =
            vec![Box::new(All), Box::new(MinSize(4)), Box::new(MinSize(1))];
        for fam in &fams {
            let mut rng = Seed(50).rng();
            for _ in 0..50 {
                let mut sk = fam.sketch(rng.gen_range(0..100));
                let mut admissible = fam.orac(&sk);
                for _ in 0..rng.gen_range(1..20) {
                    sk = fam.merge(sk, fam.sketch(rng.gen_range(0..100)));
                    let now = fam.orac(&sk);
                    assert!(!admissible || now, "{}: admissibility lost", fam.name());
                    admissible = now;
                }
            }
        }
    }

    #[test]
    fn sketch_merge_is_associative_and_commutative() {
        let fam = MinSize(2);
        let (a, b, c) = (fam.sketch(1), fam.sketch(2), fam.sketch(3));
        assert_eq!(fam.merge(a, b), fam.merge(b, a));
        assert_eq!(fam.merge(fam.merge(a, b), c), fam.merge(a, fam.merge(b, c)));
        assert_eq!(fam.merge(fam.merge(a, b), c).count, 3);
    }

    #[test]
    fn minmax_all_family_gives_singletons() {
        let x = gen::gaussian(20, 3, Metric::L2, Seed(42));
        let c = minmax_cluster(&x, &All, 0.5, Seed(1)).unwrap();
        assert_eq!(c.radius, 0.0);
        assert_eq!(c.centers.len(), 20);
        assert_partition(&x, &c);
    }

    #[test]
    fn minmax_pairs_on_line_match_oracle() {
        let x = line(&[0.0, 1.0, 10.0, 11.0]);
        let opt = exact_minmax(&x, &|s| s.len() >= 2).unwrap();
        assert_eq!(opt, 1.0);
        let c = minmax_cluster(&x, &MinSize(2), 0.5, Seed(3)).unwrap();
        assert_partition(&x, &c);
        assert!(c.radius >= opt * (1.0 - REL) && c.radius <= 4.5 * opt * (1.0 + REL), "radius {}", c.radius);
        let mut sizes: HashMap<u32, u64> = HashMap::new();
        for &a in &c.assignment {
            *sizes.entry(a).or_default() += 1;
        }
        assert!(sizes.values().all(|&s| s >= 2), "a cluster is undersized");
    }

    #[test]
    fn minmax_full_set_family_is_one_cluster() {
        let x = gen::gaussian(8, 3, Metric::L2, Seed(43));
        let opt = exact_minmax(&x, &|s| s.len() >= 8).unwrap();
        let c = minmax_cluster(&x, &MinSize(8), 0.5, Seed(4)).unwrap();
        assert_partition(&x, &c);
        assert_eq!(c.centers.len(), 1);
        assert!(c.radius >= opt * (1.0 - REL) && c.radius <= 4.5 * opt * (1.0 + REL));
    }

    #[test]
    fn minmax_ratio_against_oracle_on_gaussian() {
        for seed in 0..3u64 {
            let x = gen::gaussian(9, 2, Metric::L2, Seed(44 + seed));
            let opt = exact_minmax(&x, &|s| s.len() >= 2).unwrap();
            let c = minmax_cluster(&x, &MinSize(2), 0.5, Seed(seed)).unwrap();
            assert_partition(&x, &c);
            let ratio = c.radius / opt;
            assert!(
                ratio >= 1.0 - REL && ratio <= 4.5 + REL,
                "seed {seed}: ratio {ratio}"
            );
        }
    }

    #[test]
    fn minmax_infeasible_family_is_reported() {
        let x = gen::gaussian(6, 2, Metric::L2, Seed(45));
        let err = minmax_cluster(&x, &MinSize(7), 0.5, Seed(5));
        assert!(matches!(err, Err(Error::InfeasibleFamily)), "{err:?}");
    }

    #[test]
    fn minmax_duplicate_groups_cluster_at_zero() {
        let x = line(&[0.0, 0.0, 7.0, 7.0]);
        let c = minmax_cluster(&x, &MinSize(2), 0.5, Seed(6)).unwrap();
        assert_eq!(c.radius, 0.0);
        assert_eq!(c.centers, vec![0, 2]);
        assert_eq!(c.assignment, vec![0, 0, 2, 2]);
    }

    #[test]
    fn kcenter_4eps_line_and_saturated_k() {
        let x = line(&[0.0, 1.0, 10.0]);
        let c = kcenter_4eps(&x, 2, 0.5, Seed(7)).unwrap();
        assert_partition(&x, &c);
        assert!(c.radius >= 1.0 - REL && c.radius <= 4.5 + REL, "radius {}", c.radius);
        let c = kcenter_4eps(&x, 3, 0.5, Seed(7)).unwrap();
        assert_eq!(c.radius, 0.0);
        let dup = line(&[0.0, 0.0, 5.0, 5.0]);
        let c = kcenter_4eps(&dup, 2, 0.5, Seed(8)).unwrap();
        assert_eq!((c.radius, c.centers.clone()), (0.0, vec![0, 2]));
    }

    #[test]
    fn kcenter_4eps_ratio_against_oracle() {
        for seed in 0..3u64 {
            let x = gen::gaussian(14, 3, Metric::L2, Seed(46 + seed));
            for k in [1usize, 2, 3] {
                let (opt, _) = exact_kcenter(&x, k).unwrap();
                let c = kcenter_4eps(&x, k, 0.5, Seed(seed)).unwrap();
                assert_partition(&x, &c);
                assert!(c.centers.len() <= k);
                let ratio = c.radius / opt;
                assert!(
                    ratio >= 1.0 - REL && ratio <= 4.5 + REL,
                    "seed {seed} k {k}: ratio {ratio}"
                );
            }
        }
    }

    fn assert_greedy_bands(x: &PointSet, perm: &GreedyPermutation) {
        let n = x.n();
        assert_eq!(perm.order.len(), n);
        assert_eq!(perm.radii.len(), n - 1);
        let mut seen = vec![false; n];
        for &p in &perm.order {
            assert!(!seen[p as usize], "order repeats {p}");
            seen[p as usize] = true;
        }
        for w in perm.radii.windows(2) {
            assert!(w[0] >= w[1], "radii increase: {:?}", w);
        }
        for i in 1..n {
            let r = perm.radii[i - 1];
            let prefix = &perm.order[..i];
            // The appended point is at least r from the prefix, and no
            // point is farther than (1+eps) r from it.
            let d_new = prefix
                .iter()
                .map(|&q| x.dist(perm.order[i] as usize, q as usize))
                .fold(f64::INFINITY, f64::min);
            assert!(d_new >= r * (1.0 - REL), "i={i}: appended at {d_new} < {r}");
            let far = (0..n)
                .map(|p| {
                    prefix
                        .iter()
                        .map(|&q| x.dist(p, q as usize))
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max);
            assert!(
                far <= (1.0 + perm.eps) * r * (1.0 + REL) || r == 0.0,
                "i={i}: coverage {far} exceeds {}",
                (1.0 + perm.eps) * r
            );
        }
    }

    #[test]
    fn greedy_from_fixed_start_on_line() {
        let x = line(&[0.0, 1.0, 10.0]);
        let perm =
            greedy_permutation_from(&x, 0, 0.2, RoundSchedule::UnionGrowth, Seed(9)).unwrap();
        assert_eq!(perm.order, vec![0, 2, 1]);
        assert_greedy_bands(&x, &perm);
    }

    #[test]
    fn greedy_two_points_and_tiny_cases() {
        let x = line(&[3.0, 8.0]);
        let perm = greedy_permutation(&x, 0.2, Seed(10)).unwrap();
        assert_greedy_bands(&x, &perm);
        let one = line(&[4.0]);
        let perm = greedy_permutation(&one, 0.2, Seed(11)).unwrap();
        assert_eq!((perm.order, perm.radii), (vec![0], vec![]));
        let same = line(&[2.0, 2.0, 2.0]);
        assert!(matches!(
            greedy_permutation(&same, 0.2, Seed(12)),
            Err(Error::AllPointsIdentical)
        ));
    }

    #[test]
    fn greedy_bands_hold_on_gaussian() {
        let x = gen::gaussian(96, 8, Metric::L2, Seed(47));
        let perm = greedy_permutation(&x, 0.2, Seed(13)).unwrap();
        assert_greedy_bands(&x, &perm);
    }

    #[test]
    fn greedy_schedules_agree() {
        let x = gen::gaussian(48, 4, Metric::L2, Seed(48));
        let a = greedy_permutation_from(&x, 5, 0.25, RoundSchedule::UnionGrowth, Seed(14))
            .unwrap();
        let b = greedy_permutation_from(&x, 5, 0.25, RoundSchedule::ExactSpread, Seed(14))
            .unwrap();
        assert_eq!(a.order, b.order);
        assert_eq!(a.radii, b.radii);
    }

    #[test]
    fn greedy_sends_duplicates_to_the_tail() {
        let x = line(&[0.0, 0.0, 1.0, 5.0, 5.0]);
        let perm =
            greedy_permutation_from(&x, 0, 0.2, RoundSchedule::UnionGrowth, Seed(15)).unwrap();
        assert_greedy_bands(&x, &perm);
        // Three distinct locations, so the last two appends are the
        // duplicates at scale zero.
        assert_eq!(&perm.radii[2..], &[0.0, 0.0]);
        assert_eq!(&perm.order[3..], &[1, 4]);
    }

    #[test]
    fn kcenter_2eps_line_is_exact_here() {
        let x = line(&[0.0, 1.0, 10.0]);
        for seed in 0..4u64 {
            let c = kcenter_2eps(&x, 2, 0.4, Seed(seed)).unwrap();
            assert_partition(&x, &c);
            assert!((c.radius - 1.0).abs() <= REL, "radius {}", c.radius);
        }
    }

    #[test]
    fn kcenter_2eps_ratio_against_oracle() {
        for seed in 0..3u64 {
            let x = gen::gaussian(14, 3, Metric::L2, Seed(49 + seed));
            for k in [1usize, 2, 3] {
                let (opt, _) = exact_kcenter(&x, k).unwrap();
                let c = kcenter_2eps(&x, k, 0.4, Seed(seed)).unwrap();
                assert_partition(&x, &c);
                let ratio = c.radius / opt;
                assert!(
                    ratio >= 1.0 - REL && ratio <= 2.4 + REL,
                    "seed {seed} k {k}: ratio {ratio}"
                );
            }
        }
    }

    #[test]
    fn kcenter_2eps_saturated_and_identical() {
        let x = line(&[0.0, 1.0, 10.0]);
        let c = kcenter_2eps(&x, 3, 0.4, Seed(16)).unwrap();
        assert_eq!(c.radius, 0.0);
        let same = line(&[2.0, 2.0]);
        let c = kcenter_2eps(&same, 1, 0.4, Seed(17)).unwrap();
        assert_eq!((c.radius, c.centers.clone()), (0.0, vec![0]));
    }

    #[test]
    fn kth_value_beats_naive_percentile_confusion() {
        // The k-th NN distance is a per-point statistic, not the k-th
        // smallest pairwise distance; this fixture separates the two.
        let x = line(&[0.0, 1.0, 1.9, 10.0]);
        // NN dists: [1, 0.9, 0.9, 8.1]; 3rd smallest is 1.
        let nn = exact_nn_dists(&x).unwrap();
        let mut sorted = nn.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(sorted[2], 1.0);
        let v = kth_nn_distance(&x, 3, 0.2, Seed(18)).unwrap();
        assert!(v >= 1.0 - REL && v <= 1.2 + REL, "v={v}");
    }
}
