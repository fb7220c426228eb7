//! Box-counting dimension of survivor slices, the deficit sweep and the
//! bounds it is compared against.
//!
//! The estimator targets box dimension. No Hausdorff lower bound is claimed.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covering::{check_period_budget, survivors_on_grid, CellSet};
use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::holes::{Hole, Region};
use crate::leaf::CellGrid;
use crate::mixing::choose_t;
use crate::scalar::{unit_ball_volume, Real};
use crate::system::{Point, ToralSystem, R0};

/// Box counts against scale with the fitted slope of `log N` vs `log(1/δ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    /// decreasing, geometric
    pub scales: Vec<f64>,
    pub counts: Vec<u64>,
    pub slope: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
    /// half-open index range of `scales` used in the regression
    pub window: (usize, usize),
}

/// Fewest boxes a scale may hold and still enter the regression.
pub const MIN_BOXES: u64 = 10;

fn check_scales(scales: &[f64]) -> Result<()> {
    if scales.len() < 4 {
        return Err(Error::DegenerateScales(format!(
            "need at least 4 scales, got {}",
            scales.len()
        )));
    }
    if scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::DegenerateScales(
            "scales must be positive and finite".into(),
        ));
    }
    let ratio = scales[1] / scales[0];
    if !(ratio < 1.0) {
        return Err(Error::DegenerateScales("scales must decrease".into()));
    }
    for w in scales.windows(2) {
        if ((w[1] / w[0]) / ratio - 1.0).abs() > 1e-6 {
            return Err(Error::DegenerateScales("scales are not geometric".into()));
        }
    }
    Ok(())
}

/// Fit a slope to precomputed counts. The window drops the coarsest scale
/// and every scale with fewer than [`MIN_BOXES`] boxes.
pub fn estimate_from_counts(scales: &[f64], counts: &[u64]) -> Result<DimensionEstimate> {
    check_scales(scales)?;
    if counts.len() != scales.len() {
        return Err(Error::InvalidParameter(
            "one count per scale required".into(),
        ));
    }
    if counts.iter().all(|&c| c == counts[0]) {
        return Err(Error::DegenerateScales(format!(
            "counts are constant at {}",
            counts[0]
        )));
    }
    let start = (1..counts.len())
        .find(|&i| counts[i] >= MIN_BOXES)
        .unwrap_or(counts.len());
    let end = counts.len();
    if end - start < 3 {
        return Err(Error::DegenerateScales(format!(
            "only {} scales hold at least {MIN_BOXES} boxes",
            end - start
        )));
    }
    let x: Vec<f64> = scales[start..end].iter().map(|s| (1.0 / s).ln()).collect();
    let y: Vec<f64> = counts[start..end]
        .iter()
        .map(|&c| (c as f64).ln())
        .collect();
    let fit = linear_fit(&x, &y)?;
    Ok(DimensionEstimate {
        scales: scales.to_vec(),
        counts: counts.to_vec(),
        slope: fit.slope,
        slope_stderr: fit.slope_stderr,
        r_squared: fit.r_squared,
        window: (start, end),
    })
}

/// Number of occupied boxes of side `scale` anchored at `origin`, for points
/// given as consecutive `dim`-tuples.
pub fn box_count(dim: usize, points: &[f64], origin: &[f64], scale: f64) -> u64 {
    let keys: HashSet<Vec<i64>> = points
        .par_chunks(dim * (1 << 12))
        .flat_map_iter(|chunk| {
            chunk
                .chunks(dim)
                .map(|p| {
                    p.iter()
                        .zip(origin)
                        .map(|(v, o)| ((v - o) / scale).floor() as i64)
                        .collect::<Vec<i64>>()
                })
                .collect::<Vec<_>>()
        })
        .collect();
    keys.len() as u64
}

/// Box dimension of a finite point set.
pub fn box_dimension_points(
    dim: usize,
    points: &[f64],
    origin: &[f64],
    scales: &[f64],
) -> Result<DimensionEstimate> {
    check_scales(scales)?;
    if points.is_empty() {
        return Err(Error::DegenerateScales(
            "empty set: N(δ) = 0 at every scale".into(),
        ));
    }
    let counts: Vec<u64> = scales
        .iter()
        .map(|&s| box_count(dim, points, origin, s))
        .collect();
    estimate_from_counts(scales, &counts)
}

/// Box dimension of a set of grid cells, counted at their centers.
pub fn box_dimension<T: Real>(set: &CellSet<T>, scales: &[f64]) -> Result<DimensionEstimate> {
    check_scales(scales)?;
    if set.cells.is_empty() {
        return Err(Error::DegenerateScales(
            "empty set: N(δ) = 0 at every scale".into(),
        ));
    }
    let grid = &set.grid;
    let step = grid.step.f64();
    let counts: Vec<u64> = scales
        .iter()
        .map(|&s| {
            let keys: HashSet<Vec<i64>> = set
                .cells
                .par_chunks(1 << 12)
                .flat_map_iter(|chunk| {
                    let mut tuple = vec![0u64; grid.dim];
                    chunk
                        .iter()
                        .map(|&c| {
                            grid.unravel(c, &mut tuple);
                            tuple
                                .iter()
                                .map(|&j| (((j as f64 + 0.5) * step) / s).floor() as i64)
                                .collect::<Vec<i64>>()
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
            keys.len() as u64
        })
        .collect();
    estimate_from_counts(scales, &counts)
}

/// Points of the middle-third Cantor set: the centers of the `2^depth`
/// intervals of generation `depth`.
pub fn cantor_points(depth: u32) -> Vec<f64> {
    let mut left = vec![0.0f64];
    let mut len = 1.0f64;
    for _ in 0..depth {
        len /= 3.0;
        left = left.iter().flat_map(|&a| [a, a + 2.0 * len]).collect();
    }
    left.iter().map(|a| a + len / 2.0).collect()
}

/// Geometric scales `first · ratio^j` for `j < count`.
pub fn geometric_scales(first: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|j| first * ratio.powi(j as i32)).collect()
}

/// Results of the estimator calibration on the unit interval and the Cantor set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub interval: DimensionEstimate,
    pub cantor: DimensionEstimate,
    pub cantor_exact: f64,
    pub interval_ok: bool,
    pub cantor_ok: bool,
}

/// Dyadic box counts of `[0, 1]` sampled at `10⁻⁴` and of the depth-10
/// middle-third Cantor set.
pub fn calibrate() -> Result<Calibration> {
    let delta = 1e-4;
    let interval_points: Vec<f64> = (0..10_000).map(|j| (j as f64 + 0.5) * delta).collect();
    let interval =
        box_dimension_points(1, &interval_points, &[0.0], &geometric_scales(0.5, 0.5, 13))?;
    let cantor = box_dimension_points(
        1,
        &cantor_points(10),
        &[0.0],
        &geometric_scales(0.5, 0.5, 15),
    )?;
    let cantor_exact = 2f64.ln() / 3f64.ln();
    Ok(Calibration {
        interval_ok: (interval.slope - 1.0).abs() <= 0.02,
        cantor_ok: (cantor.slope - cantor_exact).abs() <= 0.02,
        interval,
        cantor,
        cantor_exact,
    })
}

/// Slice estimate together with the survivor set it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceDimension {
    pub estimate: DimensionEstimate,
    pub survivor_cells: u64,
    pub total_cells: u64,
}

impl SliceDimension {
    pub fn survivor_fraction(&self) -> f64 {
        self.survivor_cells as f64 / self.total_cells as f64
    }
}

/// Box dimension of `{h ∈ B(r/2) : A^{tℓ}(x + h) ∈ K(x₀, r), 0 ≤ ℓ ≤ k_max}`
/// at scales `r e^{−λ₀ t ℓ}`, `ℓ = 0..=k_max`.
pub fn survivor_dimension<T: Real>(
    sys: &ToralSystem<T>,
    hole: &Hole<T>,
    x: &Point<T>,
    t: u64,
    k_max: u64,
    delta: T,
) -> Result<SliceDimension> {
    if t == 0 || k_max < 3 {
        return Err(Error::InvalidParameter(format!(
            "survivor dimension needs t ≥ 1 and k_max ≥ 3, got t={t}, k_max={k_max}"
        )));
    }
    check_period_budget(x, t * k_max)?;
    let r = hole.radius.f64();
    let lambda0 = sys.lambda0().f64();
    let scales: Vec<f64> = (0..=k_max)
        .map(|l| r * (-lambda0 * (t * l) as f64).exp())
        .collect();
    let finest = *scales.last().unwrap();
    if delta.f64() > finest {
        return Err(Error::GridTooCoarse {
            step: delta.f64(),
            limit: finest,
        });
    }
    let grid = CellGrid::new(sys.n(), hole.radius / T::of(2.0), delta)?;
    let total = grid.len();
    let region = Region::Outside(hole.clone());
    let set = survivors_on_grid(sys, x, grid, &region, (0..=k_max).map(|l| t * l))?;
    let survivor_cells = set.len() as u64;
    let estimate = box_dimension(&set, &scales)?;
    Ok(SliceDimension {
        estimate,
        survivor_cells,
        total_cells: total,
    })
}

/// `dim X + C μ / log μ`.
pub fn theoretical_bound(dim_x: f64, c: f64, mu_ball: f64) -> Result<f64> {
    if !(mu_ball > 0.0 && mu_ball < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "ball measure {mu_ball} outside (0, 1); the bound is vacuous there"
        )));
    }
    if c < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "constant C = {c} is negative"
        )));
    }
    Ok(dim_x + c * mu_ball / mu_ball.ln())
}

/// `(m − n) + slice slope`.
pub fn full_space_dimension<T: Real>(sys: &ToralSystem<T>, slice: &DimensionEstimate) -> f64 {
    (sys.m() - sys.n()) as f64 + slice.slope
}

/// Spacing of observation times in the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "t", rename_all = "snake_case")]
pub enum ObservationStep {
    /// every integer time, which is the definition of the survivor set
    Unit,
    /// `t = choose_t(r)`, rounded up
    PaperTime,
    Fixed(u64),
}

/// Parameters of a deficit sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepProtocol {
    pub observation: ObservationStep,
    pub k_max: u64,
    /// grid step is the finest scale divided by this
    pub refine: f64,
    pub base: Vec<f64>,
    /// rate used to report `choose_t(r)`
    pub lambda_prime: f64,
    pub p: f64,
}

impl Default for SweepProtocol {
    fn default() -> Self {
        Self {
            observation: ObservationStep::Unit,
            k_max: 14,
            refine: 8.0,
            base: vec![0.5, 0.5],
            lambda_prime: 0.07,
            p: 1.0,
        }
    }
}

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeficitRow {
    pub r: f64,
    pub paper_t: f64,
    pub observation_step: u64,
    pub dim_estimate: f64,
    pub slope_stderr: f64,
    pub deficit: f64,
    /// `deficit · log(1/r) / r^m`
    pub theorem_ratio: f64,
    /// `deficit / r^m`
    pub conjecture_ratio: f64,
    pub survivor_fraction: f64,
}

/// Sweep rows with the constants fitted from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeficitSweep {
    pub rows: Vec<DeficitRow>,
    /// box counts behind each row
    pub slices: Vec<DimensionEstimate>,
    /// median of `theorem_ratio`
    pub d_double_prime: f64,
    /// median of `conjecture_ratio / V_m`, from `μ(B^X(r)) = V_m r^m`
    pub c: f64,
    pub protocol: SweepProtocol,
    pub deficits_positive: bool,
    pub deficits_monotone: bool,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Slice dimension deficits of holes around `hole_center` for each radius.
pub fn deficit_sweep<T: Real>(
    sys: &ToralSystem<T>,
    hole_center: &Point<T>,
    r_list: &[f64],
    protocol: &SweepProtocol,
) -> Result<DeficitSweep> {
    if r_list.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "sweep needs at least 4 radii, got {}",
            r_list.len()
        )));
    }
    if let Some(r) = r_list.iter().find(|&&r| !(r > 0.0 && r < R0)) {
        return Err(Error::RadiusTooLarge {
            radius: *r,
            bound: R0,
        });
    }
    let (m, n) = (sys.m(), sys.n());
    let base = Point::float(protocol.base.iter().map(|&v| T::of(v)).collect());
    let rows = r_list
        .par_iter()
        .map(|&r| {
            let paper_t = choose_t(m, n, protocol.p, protocol.lambda_prime, r)?;
            let step = match protocol.observation {
                ObservationStep::Unit => 1,
                ObservationStep::Fixed(t) => t,
                ObservationStep::PaperTime => paper_t.ceil() as u64,
            };
            let lambda0 = sys.lambda0().f64();
            let finest = r * (-lambda0 * (step * protocol.k_max) as f64).exp();
            if finest < 1e-14 {
                return Err(Error::InvalidParameter(format!(
                    "observation step {step} with k_max {} puts the finest scale at {finest:.1e}, \
                     below what a cell grid can resolve",
                    protocol.k_max
                )));
            }
            let hole = Hole::new(hole_center.clone(), T::of(r))?;
            let slice = survivor_dimension(
                sys,
                &hole,
                &base,
                step,
                protocol.k_max,
                T::of(finest / protocol.refine),
            )?;
            let dim = slice.estimate.slope;
            let deficit = n as f64 - dim;
            let rm = r.powi(m as i32);
            let row = DeficitRow {
                r,
                paper_t,
                observation_step: step,
                dim_estimate: dim,
                slope_stderr: slice.estimate.slope_stderr,
                deficit,
                theorem_ratio: deficit * (1.0 / r).ln() / rm,
                conjecture_ratio: deficit / rm,
                survivor_fraction: slice.survivor_fraction(),
            };
            Ok((row, slice.estimate))
        })
        .collect::<Result<Vec<_>>>()?;
    let (rows, slices): (Vec<DeficitRow>, Vec<DimensionEstimate>) = rows.into_iter().unzip();
    let theorem: Vec<f64> = rows.iter().map(|r| r.theorem_ratio).collect();
    let conjecture: Vec<f64> = rows.iter().map(|r| r.conjecture_ratio).collect();
    let vm = unit_ball_volume::<f64>(m);
    let deficits_positive = rows.iter().all(|r| r.deficit > 2.0 * r.slope_stderr);
    let mut by_r: Vec<&DeficitRow> = rows.iter().collect();
    by_r.sort_by(|a, b| a.r.total_cmp(&b.r));
    let deficits_monotone = by_r.windows(2).all(|w| {
        let tol = 2.0 * (w[0].slope_stderr.powi(2) + w[1].slope_stderr.powi(2)).sqrt();
        w[1].deficit >= w[0].deficit - tol
    });
    Ok(DeficitSweep {
        d_double_prime: median(&theorem),
        c: median(&conjecture) / vm,
        rows,
        slices,
        protocol: protocol.clone(),
        deficits_positive,
        deficits_monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::make_system;
    use proptest::prelude::*;

    fn cat() -> ToralSystem<f64> {
        make_system(vec![vec![2, 1], vec![1, 1]]).unwrap()
    }

    #[test]
    fn calibration_passes() {
        let c = calibrate().unwrap();
        assert!(c.interval_ok, "{}", c.interval.slope);
        assert!(c.cantor_ok, "{}", c.cantor.slope);
    }

    #[test]
    fn empty_and_constant_sets_are_degenerate() {
        let scales = geometric_scales(0.5, 0.5, 6);
        assert!(matches!(
            box_dimension_points(1, &[], &[0.0], &scales),
            Err(Error::DegenerateScales(_))
        ));
        assert!(matches!(
            box_dimension_points(1, &[0.3], &[0.0], &scales),
            Err(Error::DegenerateScales(_))
        ));
        assert!(matches!(
            box_dimension_points(1, &[0.3, 0.6], &[0.0], &[0.5, 0.25, 0.1, 0.01]),
            Err(Error::DegenerateScales(_))
        ));
    }

    #[test]
    fn bound_examples() {
        let mu = std::f64::consts::PI * 0.01;
        let b = theoretical_bound(2.0, 1.0, mu).unwrap();
        assert!((b - (2.0 + mu / mu.ln())).abs() < 1e-15);
        assert!((b - (2.0 - 0.009078)).abs() < 1e-6);
        assert_eq!(theoretical_bound(2.0, 0.0, mu).unwrap(), 2.0);
        assert!(theoretical_bound(2.0, 1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn bound_is_below_dim(c in 1e-6f64..100.0, mu in 1e-9f64..0.999) {
            prop_assert!(theoretical_bound(2.0, c, mu).unwrap() < 2.0);
        }

        #[test]
        fn dyadic_counts_nest(points in proptest::collection::vec(0.0f64..1.0, 1..300), j in 1i32..12) {
            let s = 0.5f64.powi(j);
            let a = box_count(1, &points, &[0.0], s);
            let b = box_count(1, &points, &[0.0], s / 2.0);
            prop_assert!(a <= b && b <= 2 * a);
        }
    }

    #[test]
    fn product_assembly_examples() {
        let sys = cat();
        let e =
            estimate_from_counts(&geometric_scales(1.0, 0.5, 5), &[1, 2, 4, 8, 16]).unwrap_err();
        assert!(matches!(e, Error::DegenerateScales(_)));
        let est = estimate_from_counts(&geometric_scales(1.0, 0.5, 6), &[1, 16, 32, 64, 128, 256])
            .unwrap();
        assert!((full_space_dimension(&sys, &est) - 2.0).abs() < 1e-12);
        let shifted = DimensionEstimate { slope: 0.98, ..est };
        assert!((full_space_dimension(&sys, &shifted) - 1.98).abs() < 1e-12);
    }

    #[test]
    fn tiny_hole_gives_full_dimension() {
        let sys = cat();
        let hole = Hole::new(Point::float(vec![0.0, 0.0]), 1e-3).unwrap();
        let s = survivor_dimension(
            &sys,
            &hole,
            &Point::float(vec![0.5, 0.5]),
            1,
            10,
            1e-3 * 3e-5,
        )
        .unwrap();
        assert!(
            (s.estimate.slope - 1.0).abs() < 0.02,
            "{}",
            s.estimate.slope
        );
    }

    #[test]
    fn huge_hole_on_its_own_leaf() {
        let sys = cat();
        let x = Point::float(vec![0.5, 0.5]);
        let hole = Hole::new(Point::float(vec![0.5, 0.5]), 0.2499).unwrap();
        // the leaf ball B(r/2) starts inside the hole, so nothing survives
        assert!(matches!(
            survivor_dimension(&sys, &hole, &x, 1, 8, 1e-5),
            Err(Error::DegenerateScales(_))
        ));
        let away = Hole::new(Point::float(vec![0.0, 0.0]), 0.2499).unwrap();
        let s = survivor_dimension(
            &sys,
            &away,
            &x,
            1,
            14,
            0.2499 * (-14.0 * sys.lambda0()).exp() / 4.0,
        )
        .unwrap();
        assert!(s.estimate.slope < 0.9, "{}", s.estimate.slope);
        // the measure of survivors keeps falling with the horizon; sample it on a coarse grid
        let grid = CellGrid::new(1, 0.2499 / 2.0, 2.5e-7).unwrap();
        let total = grid.len() as f64;
        let long = survivors_on_grid(&sys, &x, grid, &Region::Outside(away), 0..=24).unwrap();
        assert!(
            (long.len() as f64) < 0.1 * total,
            "{}",
            long.len() as f64 / total
        );
    }

    #[test]
    fn survivors_shrink_as_the_hole_grows() {
        let sys = cat();
        let x = Point::float(vec![0.31, 0.77]);
        let grid = CellGrid::new(1, 0.05, 1e-5).unwrap();
        let times: Vec<u64> = (0..=8).collect();
        let mut previous: Option<CellSet<f64>> = None;
        for r in [0.05, 0.1, 0.15, 0.2] {
            let hole = Hole::new(Point::float(vec![0.0, 0.0]), r).unwrap();
            let set = survivors_on_grid(
                &sys,
                &x,
                grid.clone(),
                &Region::Outside(hole),
                times.clone(),
            )
            .unwrap();
            if let Some(prev) = &previous {
                assert!(set.is_subset_of(prev));
            }
            previous = Some(set);
        }
    }

    #[test]
    fn sweep_is_deterministic_and_rejects_paper_time() {
        let sys = cat();
        let protocol = SweepProtocol {
            k_max: 8,
            ..SweepProtocol::default()
        };
        let center = Point::float(vec![0.0, 0.0]);
        let s = deficit_sweep(&sys, &center, &[0.1; 4], &protocol).unwrap();
        assert!(s.rows.windows(2).all(|w| w[0] == w[1]));
        let paper = SweepProtocol {
            observation: ObservationStep::PaperTime,
            ..protocol
        };
        assert!(matches!(
            deficit_sweep(&sys, &center, &[0.08, 0.12, 0.16, 0.2], &paper),
            Err(Error::InvalidParameter(_))
        ));
    }
}
