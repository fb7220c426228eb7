//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; never fails for finite input.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to Real")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }

    #[inline]
    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("usize converts to Real")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Wrap a real into the centred fundamental domain `[-1/2, 1/2)`.
#[inline]
pub fn wrap_centered<T: Real>(x: T) -> T {
    let half = T::of(0.5);
    let y = x - (x + half).floor();
    if y >= half {
        y - T::one()
    } else {
        y
    }
}

/// Reduce into `[0, 1)`.
#[inline]
pub fn frac<T: Real>(x: T) -> T {
    let y = x - x.floor();
    if y >= T::one() {
        T::zero()
    } else {
        y
    }
}

/// Volume of the Euclidean unit ball in dimension `d`.
pub fn unit_ball_volume<T: Real>(d: usize) -> T {
    // V_0 = 1, V_1 = 2, V_d = V_{d-2} * 2π / d
    let two_pi = T::of(2.0) * T::PI();
    let (mut v, start) = if d.is_multiple_of(2) {
        (T::one(), 2)
    } else {
        (T::of(2.0), 3)
    };
    let mut k = start;
    while k <= d {
        v = v * two_pi / T::of_usize(k);
        k += 2;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wraps_into_half_open_interval() {
        assert_eq!(wrap_centered(0.8_f64), 0.8 - 1.0);
        assert_eq!(wrap_centered(-0.5_f64), -0.5);
        assert_eq!(wrap_centered(0.5_f64), -0.5);
        assert_eq!(wrap_centered(0.25_f32), 0.25);
        assert_eq!(frac(-0.25_f64), 0.75);
        assert_eq!(frac(3.0_f64), 0.0);
    }

    #[test]
    fn unit_ball_volumes() {
        assert_eq!(unit_ball_volume::<f64>(1), 2.0);
        assert!((unit_ball_volume::<f64>(2) - std::f64::consts::PI).abs() < 1e-15);
        let v3 = 4.0 / 3.0 * std::f64::consts::PI;
        assert!((unit_ball_volume::<f64>(3) - v3).abs() < 1e-14);
        let v4 = std::f64::consts::PI.powi(2) / 2.0;
        assert!((unit_ball_volume::<f64>(4) - v4).abs() < 1e-14);
    }
}
