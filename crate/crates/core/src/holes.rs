//! Hole balls `B^X(x₀, r)`, their complements `K(x₀, r)` and thickenings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed;
use crate::scalar::Real;
use crate::system::{torus_distance, Point, R0};

/// Open ball `B^X(center, radius)`; its complement is `K(center, radius)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hole<T> {
    pub center: Point<T>,
    pub radius: T,
}

impl<T: Real> Hole<T> {
    /// Validated hole with `0 ≤ radius < r0`.
    pub fn new(center: Point<T>, radius: T) -> Result<Self> {
        if !(radius >= T::zero()) || radius >= T::of(R0) {
            return Err(Error::RadiusTooLarge {
                radius: radius.f64(),
                bound: R0,
            });
        }
        Ok(Self { center, radius })
    }

    /// Membership in `K`: `d(x, x₀) ≥ r`, boundary included.
    pub fn in_k(&self, x: &Point<T>) -> bool {
        torus_distance(x, &self.center) >= self.radius
    }

    /// `∂_ρ K(x₀, r) = K(x₀, r − ρ)`.
    pub fn thicken(&self, rho: T) -> Result<Self> {
        if rho < T::zero() {
            return Err(Error::InvalidParameter(format!(
                "thickening {rho} is negative"
            )));
        }
        if rho >= self.radius {
            return Err(Error::ThickeningSwallowsHole {
                rho: rho.f64(),
                radius: self.radius.f64(),
            });
        }
        Ok(Self {
            center: self.center.clone(),
            radius: self.radius - rho,
        })
    }
}

/// A closed target set for orbit membership: either all of `X`, or `K` of a hole.
#[derive(Debug, Clone, PartialEq)]
pub enum Region<T> {
    Everywhere,
    Outside(Hole<T>),
}

impl<T: Real> Region<T> {
    /// `∂_ρ K`, which is all of `X` once `ρ` reaches the hole radius.
    pub fn thickened(hole: &Hole<T>, rho: T) -> Result<Self> {
        match hole.thicken(rho) {
            Ok(h) => Ok(Self::Outside(h)),
            Err(Error::ThickeningSwallowsHole { .. }) => Ok(Self::Everywhere),
            Err(e) => Err(e),
        }
    }

    pub fn contains(&self, x: &Point<T>) -> bool {
        match self {
            Self::Everywhere => true,
            Self::Outside(h) => h.in_k(x),
        }
    }

    pub(crate) fn test(&self) -> RegionTest {
        match self {
            Self::Everywhere => RegionTest {
                center: Vec::new(),
                radius_sq: 0.0,
                everywhere: true,
            },
            Self::Outside(h) => RegionTest {
                center: h.center.fractions(),
                radius_sq: h.radius.f64() * h.radius.f64(),
                everywhere: false,
            },
        }
    }
}

/// Membership test on 128-bit torus fractions.
#[derive(Debug, Clone)]
pub(crate) struct RegionTest {
    center: Vec<u128>,
    radius_sq: f64,
    everywhere: bool,
}

impl RegionTest {
    #[inline]
    pub fn contains(&self, pos: &[u128]) -> bool {
        self.everywhere || fixed::squared_distance(pos, &self.center) >= self.radius_sq
    }

    /// Inside the open ball of the given radius around the hole center.
    #[inline]
    pub fn within(&self, pos: &[u128], radius_sq: f64) -> bool {
        !self.everywhere && fixed::squared_distance(pos, &self.center) < radius_sq
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn origin_hole(r: f64) -> Hole<f64> {
        Hole::new(Point::float(vec![0.0, 0.0]), r).unwrap()
    }

    #[test]
    fn membership_examples() {
        let h = origin_hole(0.1);
        assert!(!h.in_k(&Point::float(vec![0.05, 0.0])));
        assert!(h.in_k(&Point::float(vec![0.1, 0.0])));
        let tiny = origin_hole(1e-300);
        assert!(tiny.in_k(&Point::float(vec![1e-10, 0.0])));
        assert!(matches!(
            Hole::new(Point::float(vec![0.0, 0.0]), 0.6),
            Err(Error::RadiusTooLarge { .. })
        ));
    }

    #[test]
    fn thicken_examples() {
        let h = origin_hole(0.1);
        assert_eq!(h.thicken(0.05).unwrap().radius, 0.05);
        assert_eq!(h.thicken(0.0).unwrap(), h);
        assert!(matches!(
            h.thicken(0.1),
            Err(Error::ThickeningSwallowsHole { .. })
        ));
        assert_eq!(Region::thickened(&h, 0.1).unwrap(), Region::Everywhere);
    }

    proptest! {
        #[test]
        fn thickening_enlarges_k(x in 0.0f64..1.0, y in 0.0f64..1.0,
                                 r in 0.001f64..0.24, frac in 0.0f64..0.999) {
            let h = origin_hole(r);
            let p = Point::float(vec![x, y]);
            let thick = h.thicken(r * frac).unwrap();
            if h.in_k(&p) {
                prop_assert!(thick.in_k(&p));
            }
        }

        #[test]
        fn fraction_test_agrees_with_float_test(x in 0.0f64..1.0, y in 0.0f64..1.0,
                                                r in 0.01f64..0.24) {
            let h = origin_hole(r);
            let p = Point::float(vec![x, y]);
            let d = torus_distance(&p, &h.center);
            prop_assume!((d - r).abs() > 1e-12);
            let region = Region::Outside(h.clone());
            prop_assert_eq!(region.test().contains(&p.fractions()), h.in_k(&p));
        }
    }

    #[test]
    fn complementarity_on_grid() {
        let h = origin_hole(0.2);
        for i in 0..64 {
            for j in 0..64 {
                let p = Point::float(vec![i as f64 / 64.0, j as f64 / 64.0]);
                let inside = torus_distance(&p, &h.center) < h.radius;
                assert!(inside ^ h.in_k(&p));
            }
        }
    }
}
