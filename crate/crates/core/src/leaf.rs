//! Cell grids on unstable balls and their orbits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed::{LeafLattice, LeafOrbit};
use crate::holes::RegionTest;
use crate::scalar::Real;
use crate::system::{Point, ToralSystem};

/// Uniform tiling of the box `B^H(radius)` by `per_axis^n` cubes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellGrid<T> {
    pub dim: usize,
    pub radius: T,
    pub per_axis: u64,
    pub step: T,
}

impl<T: Real> CellGrid<T> {
    /// Finest grid whose cell size does not exceed `delta`.
    pub fn new(dim: usize, radius: T, delta: T) -> Result<Self> {
        if !(radius > T::zero()) || !(delta > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "grid needs positive radius and step, got {radius} and {delta}"
            )));
        }
        let raw = (T::of(2.0) * radius / delta).f64();
        let per_axis = ((raw - 1e-9).ceil() as u64).max(1);
        let total = (per_axis as f64).powi(dim as i32);
        if total > 4e9 {
            return Err(Error::InvalidParameter(format!(
                "grid of {total:.3e} cells is too large"
            )));
        }
        Ok(Self {
            dim,
            radius,
            per_axis,
            step: T::of(2.0) * radius / T::of(per_axis as f64),
        })
    }

    pub fn len(&self) -> u64 {
        self.per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// ν-volume of one cell.
    pub fn cell_volume(&self) -> T {
        self.step.powi(self.dim as i32)
    }

    /// Multi-index of a linear index; axis 0 is the most significant digit,
    /// so linear order is lexicographic order.
    pub fn unravel(&self, mut index: u64, out: &mut [u64]) {
        for slot in out.iter_mut().rev() {
            *slot = index % self.per_axis;
            index /= self.per_axis;
        }
    }

    pub fn ravel(&self, tuple: &[u64]) -> u64 {
        tuple.iter().fold(0, |acc, &j| acc * self.per_axis + j)
    }

    pub fn center_1d(&self, j: u64) -> T {
        -self.radius + (T::of(j as f64) + T::of(0.5)) * self.step
    }

    pub fn center(&self, index: u64) -> Vec<T> {
        let mut tuple = vec![0; self.dim];
        self.unravel(index, &mut tuple);
        tuple.iter().map(|&j| self.center_1d(j)).collect()
    }

    /// Cells whose centers lie in the open box of half-width `radius`.
    pub fn inside(&self, radius: T) -> Vec<u64> {
        let axis: Vec<u64> = (0..self.per_axis)
            .filter(|&j| self.center_1d(j).abs() < radius)
            .collect();
        let mut out = Vec::new();
        let mut tuple = vec![0u64; self.dim];
        fn rec<T: Real>(
            g: &CellGrid<T>,
            axis: &[u64],
            d: usize,
            tuple: &mut [u64],
            out: &mut Vec<u64>,
        ) {
            if d == tuple.len() {
                out.push(g.ravel(tuple));
                return;
            }
            for &j in axis {
                tuple[d] = j;
                rec(g, axis, d + 1, tuple, out);
            }
        }
        rec(self, &axis, 0, &mut tuple, &mut out);
        out
    }
}

/// Positions of grid cells along an orbit of the leaf through a base point.
pub(crate) struct LeafScan<'a, T> {
    pub grid: CellGrid<T>,
    orbit: LeafOrbit<'a>,
    horizon: u64,
}

impl<'a, T: Real> LeafScan<'a, T> {
    pub fn new(sys: &'a ToralSystem<T>, base: &Point<T>, grid: CellGrid<T>) -> Result<Self> {
        if base.dim() != sys.m() {
            return Err(Error::DimensionMismatch {
                expected: sys.m(),
                got: base.dim(),
            });
        }
        if grid.dim != sys.n() {
            return Err(Error::DimensionMismatch {
                expected: sys.n(),
                got: grid.dim,
            });
        }
        let first = grid.center_1d(0).f64();
        let origin = vec![first; grid.dim];
        let spacing = vec![grid.step.f64(); grid.dim];
        let frame = sys.frame();
        let orbit = frame.leaf_orbit(base.to_fixed(frame.bits()), &origin, &spacing);
        Ok(Self {
            grid,
            orbit,
            horizon: sys.precise_horizon(),
        })
    }

    pub fn lattice_at(&mut self, t: u64) -> Result<LeafLattice> {
        if t > self.horizon {
            return Err(Error::InvalidParameter(format!(
                "time {t} exceeds the precision horizon {} of the frame",
                self.horizon
            )));
        }
        if t < self.orbit.time() {
            return Err(Error::InvalidParameter(format!(
                "observation times must be nondecreasing, got {t} after {}",
                self.orbit.time()
            )));
        }
        self.orbit.advance_to(t);
        Ok(self.orbit.lattice())
    }
}

/// Keep the cells whose image under the lattice satisfies `keep`.
pub(crate) fn retain_cells<F>(
    grid_dim: usize,
    per_axis: u64,
    lattice: &LeafLattice,
    cells: &[u64],
    keep: F,
) -> Vec<u64>
where
    F: Fn(&[u128]) -> bool + Sync,
{
    let m = lattice.dim();
    const CHUNK: usize = 1 << 14;
    if grid_dim == 1 {
        cells
            .par_chunks(CHUNK)
            .flat_map_iter(|chunk| {
                let mut pos = vec![0u128; m];
                chunk
                    .iter()
                    .filter(|&&j| {
                        lattice.position_1d(j, &mut pos);
                        keep(&pos)
                    })
                    .copied()
                    .collect::<Vec<_>>()
            })
            .collect()
    } else {
        cells
            .par_chunks(CHUNK)
            .flat_map_iter(|chunk| {
                let mut pos = vec![0u128; m];
                let mut tuple = vec![0u64; grid_dim];
                chunk
                    .iter()
                    .filter(|&&idx| {
                        let mut rest = idx;
                        for slot in tuple.iter_mut().rev() {
                            *slot = rest % per_axis;
                            rest /= per_axis;
                        }
                        lattice.position_into(&tuple, &mut pos);
                        keep(&pos)
                    })
                    .copied()
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

/// Filter `cells` by membership of their time-`t` images in `region`.
pub(crate) fn filter_at<T: Real>(
    scan: &mut LeafScan<'_, T>,
    t: u64,
    cells: &[u64],
    region: &RegionTest,
) -> Result<Vec<u64>> {
    let lattice = scan.lattice_at(t)?;
    Ok(retain_cells(
        scan.grid.dim,
        scan.grid.per_axis,
        &lattice,
        cells,
        |p| region.contains(p),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::make_system;

    #[test]
    fn grid_shape() {
        let g = CellGrid::<f64>::new(1, 0.1, 0.0005).unwrap();
        assert_eq!(g.per_axis, 400);
        assert!((g.center_1d(0) + 0.1 - 0.00025).abs() < 1e-15);
        let g2 = CellGrid::new(2, 0.1, 0.03).unwrap();
        assert_eq!(g2.per_axis, 7);
        let mut t = [0u64; 2];
        g2.unravel(g2.ravel(&[3, 5]), &mut t);
        assert_eq!(t, [3, 5]);
        assert_eq!(g2.inside(0.2).len(), 49);
    }

    #[test]
    fn lattice_matches_float_orbit_at_short_times() {
        let sys = make_system::<f64>(vec![vec![2, 1], vec![1, 1]]).unwrap();
        let base = Point::float(vec![0.31, 0.77]);
        let grid = CellGrid::new(1, 0.1, 0.01).unwrap();
        let mut scan = LeafScan::new(&sys, &base, grid.clone()).unwrap();
        for t in [0u64, 1, 5, 10] {
            let lat = scan.lattice_at(t).unwrap();
            for j in [0u64, 7, 19] {
                let h = crate::system::UnstableCoord(vec![grid.center_1d(j)]);
                let x = sys
                    .step(&sys.unstable_translate(&base, &h).unwrap(), t)
                    .unwrap();
                let mut pos = [0u128; 2];
                lat.position_1d(j, &mut pos);
                let fx = x.fractions();
                let err = crate::fixed::squared_distance(&pos, &fx).sqrt();
                assert!(
                    err < 1e-15 * (2.7f64).powi(t as i32) + 1e-15,
                    "t={t} err={err}"
                );
            }
        }
    }
}
