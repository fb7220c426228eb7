//! Survivor sets `E_k` on unstable balls, separated nets, Bowen-box covers
//! and the ratio bounds that control their size.
//!
//! Everything is measured on a cell grid: a cell belongs to a set when its
//! center does. A Bowen `(t, r)`-ball around `h` is the open box of
//! half-widths `r e^{-λ_i t}`; two centers are `(t, r)`-separated when some
//! coordinate difference reaches that half-width.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::holes::{Hole, Region};
use crate::leaf::{filter_at, CellGrid, LeafScan};
use crate::scalar::Real;
use crate::system::{Point, ToralSystem, UnstableCoord, R0};

/// Largest instance the exact cover oracle accepts.
pub const ORACLE_CELL_CAP: usize = 5000;

/// Search-node budget of the exact cover oracle.
pub const ORACLE_NODE_BUDGET: u64 = 5_000_000;

/// Parameters of `E_k(t, r, K, x) = {h ∈ B(r) : A^{tℓ}(x + h) ∈ K, ℓ = 1..k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivorSpec<T> {
    pub t: u64,
    pub r: T,
    pub hole: Hole<T>,
    pub base: Point<T>,
    pub k: u64,
}

impl<T: Real> SurvivorSpec<T> {
    pub fn new(t: u64, r: T, hole: Hole<T>, base: Point<T>, k: u64) -> Result<Self> {
        if !(r > T::zero()) || r >= T::of(R0) {
            return Err(Error::RadiusTooLarge {
                radius: r.f64(),
                bound: R0,
            });
        }
        if t == 0 {
            return Err(Error::InvalidParameter(
                "step size t must be at least 1".into(),
            ));
        }
        Ok(Self {
            t,
            r,
            hole,
            base,
            k,
        })
    }

    pub fn with_k(&self, k: u64) -> Self {
        Self { k, ..self.clone() }
    }
}

/// Subset of a cell grid, stored as sorted linear indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSet<T> {
    pub grid: CellGrid<T>,
    pub cells: Vec<u64>,
}

impl<T: Real> CellSet<T> {
    pub fn full(grid: CellGrid<T>) -> Self {
        let cells = (0..grid.len()).collect();
        Self { grid, cells }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_size(&self) -> T {
        self.grid.step
    }

    /// ν-measure of the union of cells.
    pub fn volume(&self) -> T {
        T::of_usize(self.cells.len()) * self.grid.cell_volume()
    }

    /// Fraction of the grid covered.
    pub fn fraction(&self) -> f64 {
        self.cells.len() as f64 / self.grid.len() as f64
    }

    pub fn contains(&self, index: u64) -> bool {
        self.cells.binary_search(&index).is_ok()
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.grid == other.grid && self.cells.iter().all(|&c| other.contains(c))
    }

    pub fn tuples(&self) -> Vec<Vec<u64>> {
        self.cells
            .iter()
            .map(|&c| {
                let mut t = vec![0; self.grid.dim];
                self.grid.unravel(c, &mut t);
                t
            })
            .collect()
    }
}

/// Bowen boxes of fixed half-widths on a cell grid.
#[derive(Debug, Clone)]
pub struct BoxMetric<T> {
    pub step: T,
    pub halfwidths: Vec<T>,
}

impl<T: Real> BoxMetric<T> {
    pub fn new(sys: &ToralSystem<T>, step: T, t: u64, r: T) -> Self {
        Self {
            step,
            halfwidths: sys.bowen_halfwidths(t, r),
        }
    }

    /// Gap between two cell centers along one axis.
    #[inline]
    pub fn gap(&self, a: u64, b: u64) -> T {
        T::of(a.abs_diff(b) as f64) * self.step
    }

    /// `b` lies in the open box around `a`.
    #[inline]
    pub fn covers(&self, a: &[u64], b: &[u64]) -> bool {
        a.iter()
            .zip(b)
            .zip(&self.halfwidths)
            .all(|((&x, &y), &w)| self.gap(x, y) < w)
    }

    /// Expanded distance at least `r`: some gap reaches its half-width.
    #[inline]
    pub fn separated(&self, a: &[u64], b: &[u64]) -> bool {
        !self.covers(a, b)
    }

    /// No open box of these half-widths can contain both centers.
    #[inline]
    pub fn never_co_covered(&self, a: &[u64], b: &[u64]) -> bool {
        let two = T::of(2.0);
        a.iter()
            .zip(b)
            .zip(&self.halfwidths)
            .any(|((&x, &y), &w)| self.gap(x, y) >= two * w)
    }

    /// Bucket width, in cells, large enough that covering pairs fall in
    /// neighbouring buckets.
    fn bucket_widths(&self, per_axis: u64) -> Vec<u64> {
        self.halfwidths
            .iter()
            .map(|&w| {
                let cells = (w / self.step).f64().ceil();
                if cells >= per_axis as f64 {
                    per_axis.max(1)
                } else {
                    (cells as u64).max(1)
                }
            })
            .collect()
    }
}

fn check_grid<T: Real>(r: T, delta: T) -> Result<()> {
    let limit = r / T::of(10.0);
    if !(delta > T::zero()) || delta > limit {
        return Err(Error::GridTooCoarse {
            step: delta.f64(),
            limit: limit.f64(),
        });
    }
    Ok(())
}

/// Exact-mode rational orbits are periodic; stay well inside one period.
pub(crate) fn check_period_budget<T: Real>(base: &Point<T>, horizon: u64) -> Result<()> {
    if let Point::Exact { q, .. } = base {
        if horizon.saturating_mul(10) > *q {
            return Err(Error::PeriodBudgetExceeded { horizon, q: *q });
        }
    }
    Ok(())
}

/// Cells of `grid` whose images at every time in `times` lie in `region`.
pub(crate) fn survivors_on_grid<T: Real>(
    sys: &ToralSystem<T>,
    base: &Point<T>,
    grid: CellGrid<T>,
    region: &Region<T>,
    times: impl IntoIterator<Item = u64>,
) -> Result<CellSet<T>> {
    let test = region.test();
    let mut scan = LeafScan::new(sys, base, grid.clone())?;
    let mut cells: Vec<u64> = (0..grid.len()).collect();
    for t in times {
        if cells.is_empty() {
            break;
        }
        cells = filter_at(&mut scan, t, &cells, &test)?;
    }
    Ok(CellSet { grid, cells })
}

/// `E_k(t, r, K(x₀, r_hole), x)` on a grid of cell size at most `delta`.
pub fn survivors<T: Real>(
    sys: &ToralSystem<T>,
    spec: &SurvivorSpec<T>,
    delta: T,
) -> Result<CellSet<T>> {
    check_grid(spec.r, delta)?;
    check_period_budget(&spec.base, spec.t * spec.k)?;
    let grid = CellGrid::new(sys.n(), spec.r, delta)?;
    let region = Region::Outside(spec.hole.clone());
    survivors_on_grid(
        sys,
        &spec.base,
        grid,
        &region,
        (1..=spec.k).map(|l| spec.t * l),
    )
}

/// Spatial hash of kept cells, keyed by bucket coordinates.
struct Buckets {
    widths: Vec<u64>,
    map: HashMap<Vec<u64>, Vec<usize>>,
}

impl Buckets {
    fn new(widths: Vec<u64>) -> Self {
        Self {
            widths,
            map: HashMap::new(),
        }
    }

    fn key(&self, tuple: &[u64]) -> Vec<u64> {
        tuple
            .iter()
            .zip(&self.widths)
            .map(|(&j, &w)| j / w)
            .collect()
    }

    fn insert(&mut self, tuple: &[u64], id: usize) {
        let key = self.key(tuple);
        self.map.entry(key).or_default().push(id);
    }

    /// Ids stored in the 3^n buckets around `tuple`.
    fn near(&self, tuple: &[u64], out: &mut Vec<usize>) {
        out.clear();
        let key = self.key(tuple);
        let n = key.len();
        let mut offset = vec![0i64; n];
        let mut probe = vec![0u64; n];
        loop {
            let mut valid = true;
            for i in 0..n {
                let v = key[i] as i64 + offset[i] - 1;
                if v < 0 {
                    valid = false;
                    break;
                }
                probe[i] = v as u64;
            }
            if valid {
                if let Some(ids) = self.map.get(&probe) {
                    out.extend_from_slice(ids);
                }
            }
            let mut i = 0;
            loop {
                if i == n {
                    return;
                }
                offset[i] += 1;
                if offset[i] < 3 {
                    break;
                }
                offset[i] = 0;
                i += 1;
            }
        }
    }
}

/// Greedy maximal `(t, r)`-separated subset, scanning cells in lexicographic order.
pub fn separated_net<T: Real>(
    sys: &ToralSystem<T>,
    cells: &CellSet<T>,
    t: u64,
    r: T,
) -> CellSet<T> {
    let metric = BoxMetric::new(sys, cells.grid.step, t, r);
    let tuples = cells.tuples();
    let mut buckets = Buckets::new(metric.bucket_widths(cells.grid.per_axis));
    let mut kept: Vec<usize> = Vec::new();
    let mut near = Vec::new();
    for (i, tuple) in tuples.iter().enumerate() {
        buckets.near(tuple, &mut near);
        if near.iter().all(|&j| metric.separated(&tuples[j], tuple)) {
            buckets.insert(tuple, i);
            kept.push(i);
        }
    }
    CellSet {
        grid: cells.grid.clone(),
        cells: kept.into_iter().map(|i| cells.cells[i]).collect(),
    }
}

/// Size of the cover by Bowen `(t, r)`-balls centered at the greedy net.
pub fn greedy_cover_count<T: Real>(
    sys: &ToralSystem<T>,
    cells: &CellSet<T>,
    t: u64,
    r: T,
) -> usize {
    separated_net(sys, cells, t, r).len()
}

/// For each cell, the cells inside its Bowen box (including itself).
fn cover_neighbours<T: Real>(
    metric: &BoxMetric<T>,
    tuples: &[Vec<u64>],
    per_axis: u64,
) -> Vec<Vec<u32>> {
    let mut buckets = Buckets::new(metric.bucket_widths(per_axis));
    for (i, t) in tuples.iter().enumerate() {
        buckets.insert(t, i);
    }
    let mut near = Vec::new();
    tuples
        .iter()
        .map(|t| {
            buckets.near(t, &mut near);
            let mut list: Vec<u32> = near
                .iter()
                .copied()
                .filter(|&j| metric.covers(t, &tuples[j]))
                .map(|j| j as u32)
                .collect();
            list.sort_unstable();
            list
        })
        .collect()
}

struct Oracle<'a, T> {
    metric: &'a BoxMetric<T>,
    tuples: &'a [Vec<u64>],
    neighbours: Vec<Vec<u32>>,
    best: usize,
    nodes: u64,
}

impl<T: Real> Oracle<'_, T> {
    /// Greedy packing of uncovered cells no single box can share.
    fn packing_bound(&self, uncovered: &[bool]) -> usize {
        let mut packed: Vec<usize> = Vec::new();
        for (i, &u) in uncovered.iter().enumerate() {
            if u && packed.iter().all(|&p| {
                self.metric
                    .never_co_covered(&self.tuples[p], &self.tuples[i])
            }) {
                packed.push(i);
            }
        }
        packed.len()
    }

    fn search(&mut self, uncovered: &mut Vec<bool>, remaining: usize, used: usize) -> Result<()> {
        self.nodes += 1;
        if self.nodes > ORACLE_NODE_BUDGET {
            return Err(Error::OracleBudgetExhausted {
                nodes: ORACLE_NODE_BUDGET,
            });
        }
        if remaining == 0 {
            self.best = self.best.min(used);
            return Ok(());
        }
        if used + self.packing_bound(uncovered) >= self.best {
            return Ok(());
        }
        let first = uncovered.iter().position(|&u| u).expect("remaining > 0");
        // candidate centers covering `first`, with the uncovered cells each one gains
        let mut options: Vec<(u32, Vec<u32>)> = self.neighbours[first]
            .iter()
            .map(|&p| {
                let gain = self.neighbours[p as usize]
                    .iter()
                    .copied()
                    .filter(|&c| uncovered[c as usize])
                    .collect();
                (p, gain)
            })
            .collect();
        options.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
        let mut kept: Vec<(u32, Vec<u32>)> = Vec::new();
        for (p, gain) in options {
            let dominated = kept
                .iter()
                .any(|(_, g)| gain.iter().all(|c| g.binary_search(c).is_ok()));
            if !dominated {
                kept.push((p, gain));
            }
        }
        for (_, gain) in kept {
            for &c in &gain {
                uncovered[c as usize] = false;
            }
            let res = self.search(uncovered, remaining - gain.len(), used + 1);
            for &c in &gain {
                uncovered[c as usize] = true;
            }
            res?;
        }
        Ok(())
    }
}

/// Exact minimum number of Bowen `(t, r)`-balls centered at cells that
/// cover `cells`, by branch and bound.
pub fn minimal_cover_oracle<T: Real>(
    sys: &ToralSystem<T>,
    cells: &CellSet<T>,
    t: u64,
    r: T,
) -> Result<usize> {
    if cells.len() > ORACLE_CELL_CAP {
        return Err(Error::OracleTooLarge {
            cells: cells.len(),
            cap: ORACLE_CELL_CAP,
        });
    }
    if cells.is_empty() {
        return Ok(0);
    }
    let metric = BoxMetric::new(sys, cells.grid.step, t, r);
    let tuples = cells.tuples();
    let neighbours = cover_neighbours(&metric, &tuples, cells.grid.per_axis);
    let mut oracle = Oracle {
        metric: &metric,
        tuples: &tuples,
        neighbours,
        best: greedy_cover_count(sys, cells, t, r),
        nodes: 0,
    };
    let mut uncovered = vec![true; tuples.len()];
    oracle.search(&mut uncovered, tuples.len(), 0)?;
    Ok(oracle.best)
}

/// Lemma ratio and its refinement at one base point, from a single orbit scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioPair<T> {
    pub lemma: T,
    pub refined: T,
}

fn ratio_pair<T: Real>(
    sys: &ToralSystem<T>,
    spec: &SurvivorSpec<T>,
    region: &Region<T>,
    base: &Point<T>,
    delta: T,
) -> Result<RatioPair<T>> {
    let two = T::of(2.0);
    let outer = two * spec.r;
    let grid = CellGrid::new(sys.n(), outer, delta)?;
    let e1 = survivors_on_grid(sys, base, grid.clone(), region, [spec.t])?;
    let bowen = sys.bowen_volume(spec.t, spec.r / two);
    let inner = spec.r + spec.r / two * (-sys.lambda_min() * T::of(spec.t as f64)).exp();
    let refined_count = e1
        .cells
        .iter()
        .filter(|&&c| grid.center(c).iter().all(|v| v.abs() < inner))
        .count();
    let vol = grid.cell_volume();
    Ok(RatioPair {
        lemma: T::of_usize(e1.len()) * vol / bowen,
        refined: T::of_usize(refined_count) * vol / bowen,
    })
}

fn check_lemma_spec<T: Real>(spec: &SurvivorSpec<T>, delta: T) -> Result<Region<T>> {
    let outer = T::of(2.0) * spec.r;
    if outer >= T::of(R0) {
        return Err(Error::RadiusTooLarge {
            radius: outer.f64(),
            bound: R0,
        });
    }
    check_grid(spec.r, delta)?;
    check_period_budget(&spec.base, spec.t)?;
    Region::thickened(&spec.hole, spec.r)
}

/// `ν(E₁(t, 2r, ∂_r K, x)) / ν(Bowen (t, r/2)-box)` at the spec's base point.
pub fn lemma_ratio_bound<T: Real>(
    sys: &ToralSystem<T>,
    spec: &SurvivorSpec<T>,
    delta: T,
) -> Result<T> {
    let region = check_lemma_spec(spec, delta)?;
    Ok(ratio_pair(sys, spec, &region, &spec.base, delta)?.lemma)
}

/// The lemma ratio with `2r` replaced by `r + diam(Bowen (t, r/2)-box)/2`.
pub fn refined_bound<T: Real>(sys: &ToralSystem<T>, spec: &SurvivorSpec<T>, delta: T) -> Result<T> {
    let region = check_lemma_spec(spec, delta)?;
    Ok(ratio_pair(sys, spec, &region, &spec.base, delta)?.refined)
}

/// Sampled supremum over `∂_r K` of the lemma ratios, raised to the power `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropBound<T> {
    pub value: T,
    pub refined: T,
    pub sup_ratio: T,
    pub sup_refined_ratio: T,
    pub k: u64,
    pub sample_count: usize,
    pub extremal_count: usize,
    pub seed: u64,
    pub argmax: Vec<T>,
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

/// `count` randomly shifted Halton points of `region`, plus the points at
/// distance `radius − ρ` from the hole center along every eigen-axis.
fn sample_region<T: Real>(
    sys: &ToralSystem<T>,
    region: &Region<T>,
    center: &Point<T>,
    count: usize,
    seed: u64,
) -> Result<(Vec<Point<T>>, usize)> {
    let m = sys.m();
    if m > PRIMES.len() {
        return Err(Error::InvalidParameter(format!(
            "sampling supports m ≤ {}",
            PRIMES.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
    let mut points = Vec::with_capacity(count + 2 * m);
    let mut extremal = 0;
    match region {
        Region::Everywhere => {
            points.push(center.clone());
            extremal = 1;
        }
        Region::Outside(h) => {
            let c = center.coords();
            for axis in sys.unstable_basis().iter().chain(sys.stable_basis()) {
                for sign in [T::one(), -T::one()] {
                    let p: Vec<T> = c
                        .iter()
                        .zip(axis)
                        .map(|(&ci, &ai)| ci + sign * h.radius * ai)
                        .collect();
                    points.push(Point::float(p));
                    extremal += 1;
                }
            }
        }
    }
    let mut index = 1u64;
    let mut found = 0;
    let max_tries = 1000 * count as u64 + 1000;
    while found < count {
        if index > max_tries {
            return Err(Error::InvalidParameter(
                "sampling region is too thin".into(),
            ));
        }
        let p: Vec<T> = (0..m)
            .map(|d| T::of((radical_inverse(index, PRIMES[d]) + shift[d]).fract()))
            .collect();
        index += 1;
        let p = Point::float(p);
        if region.contains(&p) {
            points.push(p);
            found += 1;
        }
    }
    Ok((points, extremal))
}

/// Proposition bound for `E_k`: sampled `sup_{x' ∈ ∂_r K}` of the lemma ratio, to the `k`-th power.
pub fn prop_bound<T: Real>(
    sys: &ToralSystem<T>,
    spec: &SurvivorSpec<T>,
    delta: T,
    sample_count: usize,
    seed: u64,
) -> Result<PropBound<T>> {
    if sample_count < 32 {
        return Err(Error::InvalidParameter(format!(
            "sample_count {sample_count} must be at least 32"
        )));
    }
    let region = check_lemma_spec(spec, delta)?;
    let (points, extremal) = sample_region(sys, &region, &spec.hole.center, sample_count, seed)?;
    use rayon::prelude::*;
    let ratios: Vec<Result<RatioPair<T>>> = points
        .par_iter()
        .map(|p| ratio_pair(sys, spec, &region, p, delta))
        .collect();
    let mut sup = T::zero();
    let mut sup_refined = T::zero();
    let mut argmax = points[0].coords();
    for (p, r) in points.iter().zip(ratios) {
        let r = r?;
        if r.lemma > sup {
            sup = r.lemma;
            argmax = p.coords();
        }
        sup_refined = sup_refined.max(r.refined);
    }
    let k = spec.k as i32;
    Ok(PropBound {
        value: sup.powi(k),
        refined: sup_refined.powi(k),
        sup_ratio: sup,
        sup_refined_ratio: sup_refined,
        k: spec.k,
        sample_count,
        extremal_count: extremal,
        seed,
        argmax,
    })
}

/// Grid slack `(1 + 2δ/r)^n − 1` for cell-center misclassification.
pub fn grid_slack<T: Real>(n: usize, delta: T, r: T) -> T {
    (T::one() + T::of(2.0) * delta / r).powi(n as i32) - T::one()
}

/// One covering check: actual cover count of `E_k` against its bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverReport {
    pub t: u64,
    pub r: f64,
    pub k: u64,
    pub hole_center: String,
    pub hole_radius: f64,
    pub base: String,
    pub delta: f64,
    pub sample_count: usize,
    pub seed: u64,
    pub survivor_cells: usize,
    pub actual_count: usize,
    pub actual_exact: bool,
    pub greedy_count: usize,
    pub bound: f64,
    pub refined_bound: f64,
    pub slack: f64,
    pub refined_le_bound: bool,
    pub ok: bool,
}

fn join<T: Real>(v: &[T]) -> String {
    v.iter()
        .map(|x| format!("{}", x.f64()))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Compare the cover count of `E_k` by Bowen `(tk, r)`-balls with the
/// lemma bound (`k = 1`, at the base point) or the proposition bound.
pub fn verify_cover<T: Real>(
    sys: &ToralSystem<T>,
    spec: &SurvivorSpec<T>,
    delta: T,
    sample_count: usize,
    seed: u64,
) -> Result<CoverReport> {
    let ek = survivors(sys, spec, delta)?;
    let horizon = spec.t * spec.k;
    let greedy = greedy_cover_count(sys, &ek, horizon, spec.r);
    let (actual, exact) = match minimal_cover_oracle(sys, &ek, horizon, spec.r) {
        Ok(c) => (c, true),
        Err(Error::OracleTooLarge { .. }) | Err(Error::OracleBudgetExhausted { .. }) => {
            (greedy, false)
        }
        Err(e) => return Err(e),
    };
    let (bound, refined) = if spec.k <= 1 {
        let region = check_lemma_spec(spec, delta)?;
        let pair = ratio_pair(sys, spec, &region, &spec.base, delta)?;
        (pair.lemma, pair.refined)
    } else {
        let pb = prop_bound(sys, spec, delta, sample_count, seed)?;
        (pb.value, pb.refined)
    };
    let slack = grid_slack(sys.n(), delta, spec.r);
    let allowed = bound * (T::one() + slack).powi(spec.k.max(1) as i32);
    Ok(CoverReport {
        t: spec.t,
        r: spec.r.f64(),
        k: spec.k,
        hole_center: join(&spec.hole.center.coords()),
        hole_radius: spec.hole.radius.f64(),
        base: join(&spec.base.coords()),
        delta: delta.f64(),
        sample_count,
        seed,
        survivor_cells: ek.len(),
        actual_count: actual,
        actual_exact: exact,
        greedy_count: greedy,
        bound: bound.f64(),
        refined_bound: refined.f64(),
        slack: slack.f64(),
        refined_le_bound: refined <= bound,
        ok: T::of_usize(actual) <= allowed,
    })
}

/// Expanded distance `max_i e^{λ_i t} |Δh_i|` between two cell centers.
pub fn expanded_cell_distance<T: Real>(
    sys: &ToralSystem<T>,
    grid: &CellGrid<T>,
    a: u64,
    b: u64,
    t: u64,
) -> T {
    let (ca, cb) = (UnstableCoord(grid.center(a)), UnstableCoord(grid.center(b)));
    sys.expanded_distance(&ca.0, &cb.0, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::make_system;
    use proptest::prelude::*;

    fn cat() -> ToralSystem<f64> {
        make_system(vec![vec![2, 1], vec![1, 1]]).unwrap()
    }

    fn spec(t: u64, r: f64, hole_r: f64, k: u64) -> SurvivorSpec<f64> {
        SurvivorSpec::new(
            t,
            r,
            Hole::new(Point::float(vec![0.0, 0.0]), hole_r).unwrap(),
            Point::float(vec![0.5, 0.5]),
            k,
        )
        .unwrap()
    }

    #[test]
    fn degenerate_hole_keeps_everything() {
        let sys = cat();
        let s = survivors(&sys, &spec(3, 0.1, 0.0, 3), 0.001).unwrap();
        assert_eq!(s.len() as u64, s.grid.len());
        let s0 = survivors(&sys, &spec(3, 0.1, 0.1, 0), 0.001).unwrap();
        assert_eq!(s0.len() as u64, s0.grid.len());
    }

    #[test]
    fn grid_must_resolve_radius() {
        let sys = cat();
        assert!(matches!(
            survivors(&sys, &spec(3, 0.1, 0.1, 1), 0.02),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn exact_base_respects_period_budget() {
        let sys = cat();
        let mut s = spec(5, 0.1, 0.1, 3);
        s.base = Point::exact(vec![50, 50], 101).unwrap();
        assert!(matches!(
            survivors(&sys, &s, 0.001),
            Err(Error::PeriodBudgetExceeded {
                horizon: 15,
                q: 101
            })
        ));
        s.base = Point::exact(vec![500, 500], 1009).unwrap();
        assert!(survivors(&sys, &s, 0.001).is_ok());
    }

    #[test]
    fn survivors_nest() {
        let sys = cat();
        let mut prev = survivors(&sys, &spec(2, 0.1, 0.1, 1), 0.0005).unwrap();
        for k in 2..=4 {
            let cur = survivors(&sys, &spec(2, 0.1, 0.1, k), 0.0005).unwrap();
            assert!(cur.is_subset_of(&prev));
            prev = cur;
        }
    }

    #[test]
    fn net_examples() {
        let sys = cat();
        let grid = CellGrid::new(1, 0.1, 0.001).unwrap();
        let two = CellSet {
            grid: grid.clone(),
            cells: vec![10, 11],
        };
        assert_eq!(separated_net(&sys, &two, 1, 0.05).len(), 1);
        let full = CellSet::full(grid);
        let net = separated_net(&sys, &full, 0, 0.1);
        assert!((1..=3).contains(&net.len()));
        // boxes of width 2r e^{-λ₀} tile B(r) three times over; net points are
        // only r e^{-λ₀} apart, so the greedy cover is about twice as large
        assert_eq!(minimal_cover_oracle(&sys, &full, 1, 0.1).unwrap(), 3);
        let greedy = greedy_cover_count(&sys, &full, 1, 0.1);
        assert!((3..=6).contains(&greedy), "{greedy}");
        let empty = CellSet {
            grid: full.grid.clone(),
            cells: vec![],
        };
        assert_eq!(greedy_cover_count(&sys, &empty, 1, 0.1), 0);
        assert_eq!(minimal_cover_oracle(&sys, &empty, 1, 0.1).unwrap(), 0);
        let one = CellSet {
            grid: full.grid.clone(),
            cells: vec![5],
        };
        assert_eq!(greedy_cover_count(&sys, &one, 1, 0.1), 1);
        assert_eq!(minimal_cover_oracle(&sys, &one, 1, 0.1).unwrap(), 1);
    }

    /// Left-to-right sweep: cover the leftmost uncovered point with the
    /// rightmost center that still reaches it.
    fn interval_sweep(points: &[f64], half: f64) -> usize {
        let mut count = 0;
        let mut i = 0;
        while i < points.len() {
            let left = points[i];
            let mut c = i;
            while c + 1 < points.len() && points[c + 1] - left < half {
                c += 1;
            }
            let center = points[c];
            count += 1;
            while i < points.len() && (points[i] - center).abs() < half {
                i += 1;
            }
        }
        count
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn oracle_matches_interval_sweep(mask in proptest::collection::vec(any::<bool>(), 200),
                                         t in 0u64..4) {
            let sys = cat();
            let grid = CellGrid::new(1, 0.1, 0.001).unwrap();
            let cells: Vec<u64> = mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i as u64).collect();
            let set = CellSet { grid: grid.clone(), cells };
            let half = sys.bowen_halfwidths(t, 0.1)[0];
            let metric = BoxMetric::new(&sys, grid.step, t, 0.1);
            // sweep in cell units with the same gap arithmetic
            let units: Vec<f64> = set.cells.iter().map(|&c| metric.gap(c, 0)).collect();
            let expect = interval_sweep(&units, half);
            let got = minimal_cover_oracle(&sys, &set, t, 0.1).unwrap();
            prop_assert_eq!(got, expect);
            prop_assert!(got <= greedy_cover_count(&sys, &set, t, 0.1));
        }

        #[test]
        fn net_is_separated_and_covers(mask in proptest::collection::vec(any::<bool>(), 300),
                                       t in 0u64..5) {
            let sys = cat();
            let grid = CellGrid::new(1, 0.1, 0.002 / 3.0).unwrap();
            let cells: Vec<u64> = mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i as u64).collect();
            let set = CellSet { grid: grid.clone(), cells };
            let net = separated_net(&sys, &set, t, 0.1);
            let metric = BoxMetric::new(&sys, grid.step, t, 0.1);
            let nt = net.tuples();
            for i in 0..nt.len() {
                for j in (i + 1)..nt.len() {
                    prop_assert!(metric.separated(&nt[i], &nt[j]));
                }
            }
            for c in set.tuples() {
                prop_assert!(nt.iter().any(|p| metric.covers(p, &c)));
            }
        }
    }

    #[test]
    fn oracle_in_two_dimensions_beats_or_ties_greedy() {
        let m = vec![
            vec![2, 1, 0, 0],
            vec![1, 1, 0, 0],
            vec![0, 0, 3, 1],
            vec![0, 0, 2, 1],
        ];
        let sys: ToralSystem<f64> = make_system(m).unwrap();
        let grid = CellGrid::<f64>::new(2, 0.1, 0.01).unwrap();
        // a ring of cells
        let cells: Vec<u64> = (0..grid.len())
            .filter(|&c| {
                let p = grid.center(c);
                let d = (p[0] * p[0] + p[1] * p[1]).sqrt();
                (0.04..0.08).contains(&d)
            })
            .collect();
        let set = CellSet { grid, cells };
        let exact = minimal_cover_oracle(&sys, &set, 1, 0.05).unwrap();
        let greedy = greedy_cover_count(&sys, &set, 1, 0.05);
        assert!(exact <= greedy && exact >= 1, "{exact} vs {greedy}");
    }

    #[test]
    fn oracle_rejects_large_instances() {
        let sys = cat();
        let full = CellSet::full(CellGrid::new(1, 0.1, 0.00001).unwrap());
        assert!(matches!(
            minimal_cover_oracle(&sys, &full, 1, 0.1),
            Err(Error::OracleTooLarge { .. })
        ));
    }

    #[test]
    fn lemma_ratio_without_hole() {
        let sys = cat();
        let s = spec(1, 0.1, 0.0, 1);
        // the public constructor rejects t = 0, the ratio helper does not
        let zero = SurvivorSpec { t: 0, ..s.clone() };
        let pair = ratio_pair(&sys, &zero, &Region::Everywhere, &zero.base, 0.001).unwrap();
        assert!((pair.lemma - 4.0).abs() < 1e-12);
        assert!((pair.refined - 3.0).abs() < 0.02);
        let one = lemma_ratio_bound(&sys, &s, 0.001).unwrap();
        let expect = 4.0 * sys.lambda0().exp();
        assert!((one - expect).abs() < 1e-9 * expect, "{one} vs {expect}");
        assert!((one - 10.47).abs() < 0.01);
    }

    #[test]
    fn refined_is_never_larger() {
        let sys = cat();
        for t in 1..=4 {
            for &r in &[0.05, 0.1] {
                let s = spec(t, r, r, 1);
                let a = lemma_ratio_bound(&sys, &s, r / 200.0).unwrap();
                let b = refined_bound(&sys, &s, r / 200.0).unwrap();
                assert!(b <= a);
            }
        }
    }

    #[test]
    fn prop_bound_powers() {
        let sys = cat();
        let s1 = spec(2, 0.05, 0.1, 1);
        let s2 = s1.with_k(2);
        let b1 = prop_bound(&sys, &s1, 0.0025, 32, 7).unwrap();
        let b2 = prop_bound(&sys, &s2, 0.0025, 32, 7).unwrap();
        assert!((b2.value - b1.value * b1.value).abs() <= 1e-12 * b2.value);
        assert_eq!(b1.value, b1.sup_ratio);
        assert_eq!(b1.extremal_count, 4);
        assert!(prop_bound(&sys, &s1, 0.0025, 8, 7).is_err());
    }

    #[test]
    fn cover_report_for_small_lemma_case() {
        let sys = cat();
        let rep = verify_cover(&sys, &spec(2, 0.05, 0.05, 1), 0.05 / 200.0, 32, 1).unwrap();
        assert!(rep.ok && rep.actual_exact && rep.refined_le_bound);
        assert!(rep.actual_count <= rep.greedy_count);
    }
}
