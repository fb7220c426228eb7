//! Hyperbolic toral automorphisms `x ↦ A x (mod 1)` on `T^m = R^m / Z^m`.
//!
//! The expanding eigenspace of `A` plays the role of the unstable subgroup
//! `H`; eigencoordinates on it carry the max norm, so balls in `H` and Bowen
//! balls are axis-aligned boxes.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed::{self, Cluster, Frame};
use crate::scalar::{frac, unit_ball_volume, wrap_centered, Real};

/// Injectivity bookkeeping radius: balls of radius `2r` embed for `r < R0`.
pub const R0: f64 = 0.25;

/// Default number of fractional bits of the high-precision frame.
pub const DEFAULT_FRAME_BITS: u32 = 1024;

const UNIT_CIRCLE_TOL: f64 = 1e-12;

/// Point of the torus, either exact (`numerators / q`) or floating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Point<T> {
    Exact { numerators: Vec<u64>, q: u64 },
    Float { coords: Vec<T> },
}

impl<T: Real> Point<T> {
    pub fn exact(numerators: Vec<u64>, q: u64) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidPoint("denominator must be positive".into()));
        }
        if let Some(&bad) = numerators.iter().find(|&&v| v >= q) {
            return Err(Error::InvalidPoint(format!(
                "numerator {bad} not below q = {q}"
            )));
        }
        Ok(Self::Exact { numerators, q })
    }

    /// Floating point, reduced into `[0, 1)`.
    pub fn float(coords: Vec<T>) -> Self {
        Self::Float {
            coords: coords.into_iter().map(frac).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Exact { numerators, .. } => numerators.len(),
            Self::Float { coords } => coords.len(),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Self::Exact { .. })
    }

    pub fn coords(&self) -> Vec<T> {
        match self {
            Self::Exact { numerators, q } => numerators
                .iter()
                .map(|&v| T::of(v as f64 / *q as f64))
                .collect(),
            Self::Float { coords } => coords.clone(),
        }
    }

    /// Coordinates as 128-bit torus fractions.
    pub fn fractions(&self) -> Vec<u128> {
        match self {
            Self::Exact { numerators, q } => numerators
                .iter()
                .map(|&v| fixed::fraction_of_rational(v, *q))
                .collect(),
            Self::Float { coords } => coords
                .iter()
                .map(|c| fixed::fraction_of_f64(c.f64()))
                .collect(),
        }
    }

    pub(crate) fn to_fixed(&self, bits: u32) -> Vec<BigInt> {
        match self {
            Self::Exact { numerators, q } => numerators
                .iter()
                .map(|&v| (BigInt::from(v) << bits as usize) / BigInt::from(*q))
                .collect(),
            Self::Float { coords } => coords
                .iter()
                .map(|c| fixed::f64_to_fixed(c.f64(), bits))
                .collect(),
        }
    }
}

/// Coordinates of an element of `H` in the unstable eigenbasis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnstableCoord<T>(pub Vec<T>);

impl<T: Real> UnstableCoord<T> {
    pub fn zero(n: usize) -> Self {
        Self(vec![T::zero(); n])
    }

    /// Max norm over eigencoordinates.
    pub fn norm(&self) -> T {
        self.0.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| *a + *b).collect())
    }
}

/// Square integer matrix, row-major.
pub type IntMatrix = Vec<Vec<i64>>;

#[derive(Debug, Clone)]
pub struct ToralSystem<T> {
    matrix: IntMatrix,
    m: usize,
    n: usize,
    unstable_eigenvalues: Vec<T>,
    unstable_rates: Vec<T>,
    lambda0: T,
    unstable_basis: Vec<Vec<T>>,
    stable_basis: Vec<Vec<T>>,
    r0: T,
    frame: Arc<Frame>,
}

/// Validate an integer matrix and build its system.
pub fn make_system<T: Real>(matrix: IntMatrix) -> Result<ToralSystem<T>> {
    ToralSystem::with_precision(matrix, DEFAULT_FRAME_BITS)
}

impl<T: Real> ToralSystem<T> {
    pub fn new(matrix: IntMatrix) -> Result<Self> {
        make_system(matrix)
    }

    /// Build with a high-precision frame of `bits` fractional bits.
    pub fn with_precision(matrix: IntMatrix, bits: u32) -> Result<Self> {
        let m = matrix.len();
        if m == 0 || matrix.iter().any(|row| row.len() != m) {
            return Err(Error::NotSquare {
                rows: m,
                cols: matrix.first().map_or(0, Vec::len),
            });
        }
        let poly = fixed::characteristic_polynomial(&matrix);
        let c0 = &poly[0];
        let det = if m.is_multiple_of(2) {
            c0.clone()
        } else {
            -c0.clone()
        };
        let det_i = i128::try_from(det.clone()).unwrap_or(i128::MAX);
        if det_i != 1 && det_i != -1 {
            return Err(Error::NotUnimodular { det: det_i });
        }

        let dm = DMatrix::from_fn(m, m, |i, j| matrix[i][j] as f64);
        let eig = dm.clone().complex_eigenvalues();
        let mut unstable: Vec<f64> = Vec::new();
        for z in eig.iter() {
            let modulus = z.norm();
            if (modulus - 1.0).abs() <= UNIT_CIRCLE_TOL {
                return Err(Error::NotHyperbolic { modulus });
            }
            if modulus > 1.0 {
                if z.im.abs() > 1e-9 * modulus {
                    return Err(Error::ComplexSpectrumUnsupported { re: z.re, im: z.im });
                }
                unstable.push(z.re);
            }
        }
        // nalgebra can report a unimodular eigenvalue slightly off the circle
        if unstable.is_empty() {
            return Err(Error::NotHyperbolic { modulus: 1.0 });
        }
        unstable.sort_by(|a, b| b.abs().total_cmp(&a.abs()).then(b.total_cmp(a)));
        let mut clusters: Vec<Cluster> = Vec::new();
        for v in unstable {
            match clusters.last_mut() {
                Some(c) if (c.value - v).abs() <= 1e-6 * v.abs() => {
                    let k = c.multiplicity as f64;
                    c.value = (c.value * k + v) / (k + 1.0);
                    c.multiplicity += 1;
                }
                _ => clusters.push(Cluster {
                    value: v,
                    multiplicity: 1,
                }),
            }
        }

        let frame = Frame::build(&matrix, &clusters, bits)?;
        let unstable_basis: Vec<Vec<T>> = frame
            .unstable_f64()
            .into_iter()
            .map(|v| v.into_iter().map(T::of).collect())
            .collect();
        let n = unstable_basis.len();
        let mut unstable_eigenvalues = Vec::with_capacity(n);
        for c in &clusters {
            for _ in 0..c.multiplicity {
                unstable_eigenvalues.push(T::of(c.value));
            }
        }
        let unstable_rates: Vec<T> = unstable_eigenvalues.iter().map(|v| v.abs().ln()).collect();
        let lambda0 = unstable_rates.iter().cloned().fold(T::zero(), T::max);

        // the range of Π (A - λ_i)^{k_i} over unstable clusters is the stable subspace
        let mut proj = DMatrix::<f64>::identity(m, m);
        for c in &clusters {
            let shifted = &dm - DMatrix::<f64>::identity(m, m) * c.value;
            for _ in 0..c.multiplicity {
                proj = &shifted * proj;
            }
        }
        let svd = proj.svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let stable_basis = order[..m - n]
            .iter()
            .map(|&k| (0..m).map(|i| T::of(u[(i, k)])).collect())
            .collect();

        Ok(Self {
            matrix,
            m,
            n,
            unstable_eigenvalues,
            unstable_rates,
            lambda0,
            unstable_basis,
            stable_basis,
            r0: T::of(R0),
            frame: Arc::new(frame),
        })
    }

    pub fn matrix(&self) -> &IntMatrix {
        &self.matrix
    }

    /// Ambient dimension `m = dim X`.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Unstable dimension `n = dim H`.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn unstable_eigenvalues(&self) -> &[T] {
        &self.unstable_eigenvalues
    }

    pub fn unstable_rates(&self) -> &[T] {
        &self.unstable_rates
    }

    /// Largest expansion rate.
    pub fn lambda0(&self) -> T {
        self.lambda0
    }

    pub fn lambda_min(&self) -> T {
        self.unstable_rates
            .iter()
            .cloned()
            .fold(T::infinity(), T::min)
    }

    pub fn unstable_basis(&self) -> &[Vec<T>] {
        &self.unstable_basis
    }

    pub fn stable_basis(&self) -> &[Vec<T>] {
        &self.stable_basis
    }

    pub fn r0(&self) -> T {
        self.r0
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    /// Longest time the high-precision frame resolves.
    pub fn precise_horizon(&self) -> u64 {
        self.frame.horizon(self.lambda0.f64())
    }

    fn check_dim(&self, x: &Point<T>) -> Result<()> {
        if x.dim() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: x.dim(),
            });
        }
        Ok(())
    }

    /// `A^t x (mod 1)`.
    pub fn step(&self, x: &Point<T>, t: u64) -> Result<Point<T>> {
        self.check_dim(x)?;
        match x {
            Point::Exact { numerators, q } => {
                let qi = i64::try_from(*q).map_err(|_| Error::DenominatorOverflow { q: *q })?;
                let mut cur: Vec<i64> = numerators.iter().map(|&v| v as i64).collect();
                for _ in 0..t {
                    let mut next = Vec::with_capacity(self.m);
                    for row in &self.matrix {
                        let mut acc: i64 = 0;
                        for (&a, &v) in row.iter().zip(&cur) {
                            let term = a
                                .rem_euclid(qi)
                                .checked_mul(v)
                                .ok_or(Error::DenominatorOverflow { q: *q })?;
                            acc = acc
                                .checked_add(term.rem_euclid(qi))
                                .ok_or(Error::DenominatorOverflow { q: *q })?
                                .rem_euclid(qi);
                        }
                        next.push(acc);
                    }
                    cur = next;
                }
                Ok(Point::Exact {
                    numerators: cur.into_iter().map(|v| v as u64).collect(),
                    q: *q,
                })
            }
            Point::Float { coords } => {
                let mut cur = coords.clone();
                for _ in 0..t {
                    cur = self
                        .matrix
                        .iter()
                        .map(|row| {
                            frac(
                                row.iter()
                                    .zip(&cur)
                                    .fold(T::zero(), |acc, (&a, &v)| acc + T::of(a as f64) * v),
                            )
                        })
                        .collect();
                }
                Ok(Point::Float { coords: cur })
            }
        }
    }

    /// `x + Σ h_i u_i (mod 1)`, always in float mode.
    pub fn unstable_translate(&self, x: &Point<T>, h: &UnstableCoord<T>) -> Result<Point<T>> {
        self.check_dim(x)?;
        if h.0.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: h.0.len(),
            });
        }
        let mut coords = x.coords();
        for (hi, u) in h.0.iter().zip(&self.unstable_basis) {
            for (c, ui) in coords.iter_mut().zip(u) {
                *c = *c + *hi * *ui;
            }
        }
        Ok(Point::float(coords))
    }

    /// Conjugation `D^t h`: eigencoordinates scaled by `μ_i^t`.
    pub fn expand(&self, h: &UnstableCoord<T>, t: u64) -> UnstableCoord<T> {
        UnstableCoord(
            h.0.iter()
                .zip(&self.unstable_eigenvalues)
                .map(|(&v, &mu)| v * mu.powi(t as i32))
                .collect(),
        )
    }

    /// Distance at time `t`: `max_i e^{λ_i t} |h_i - h'_i|`.
    pub fn expanded_distance(&self, a: &[T], b: &[T], t: u64) -> T {
        a.iter()
            .zip(b)
            .zip(&self.unstable_rates)
            .fold(T::zero(), |acc, ((&x, &y), &rate)| {
                acc.max((rate * T::of(t as f64)).exp() * (x - y).abs())
            })
    }

    /// Half-widths `r e^{-λ_i t}` of the Bowen `(t, r)`-box.
    pub fn bowen_halfwidths(&self, t: u64, r: T) -> Vec<T> {
        let tt = T::of(t as f64);
        self.unstable_rates
            .iter()
            .map(|&rate| r * (-rate * tt).exp())
            .collect()
    }

    /// ν-volume of the Bowen `(t, r)`-box.
    pub fn bowen_volume(&self, t: u64, r: T) -> T {
        let two = T::of(2.0);
        self.bowen_halfwidths(t, r)
            .into_iter()
            .fold(T::one(), |acc, w| acc * two * w)
    }

    /// ν-volume `(2r)^n` of the max-norm ball in `H`.
    pub fn hball_volume(&self, r: T) -> Result<T> {
        if r <= T::zero() {
            return Err(Error::InvalidParameter(format!(
                "radius {r} must be positive"
            )));
        }
        Ok((T::of(2.0) * r).powi(self.n as i32))
    }

    /// μ-volume `V_m r^m` of a Euclidean ball in `X`, below the injectivity scale.
    pub fn xball_volume(&self, r: T) -> Result<T> {
        xball_volume(self.m, r)
    }
}

/// Haar volume of a Euclidean ball of radius `r < 1/2` in `T^m`.
pub fn xball_volume<T: Real>(m: usize, r: T) -> Result<T> {
    if r <= T::zero() || r >= T::of(0.5) {
        return Err(Error::RadiusTooLarge {
            radius: r.f64(),
            bound: 0.5,
        });
    }
    Ok(unit_ball_volume::<T>(m) * r.powi(m as i32))
}

/// Quotient Euclidean distance on the torus.
pub fn torus_distance<T: Real>(x: &Point<T>, y: &Point<T>) -> T {
    let (a, b) = (x.coords(), y.coords());
    a.iter()
        .zip(&b)
        .map(|(&p, &q)| {
            let d = wrap_centered(p - q);
            d * d
        })
        .sum::<T>()
        .sqrt()
}
