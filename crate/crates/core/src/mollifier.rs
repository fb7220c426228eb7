//! Smooth bumps `f_ε = g_ε ∗ 1_{B(r+ε/2)}` and their norms.
//!
//! The convolution of a radial bump with a ball indicator is radial, so it is
//! computed once as a profile in `ρ = |x|`: the value at distance `ρ` is the
//! `g`-weighted average, over spheres of radius `s < ε/2`, of the fraction of
//! each sphere lying inside `B(r + ε/2)`. The profile is tabulated on
//! `[r, r + ε]` and interpolated; it is exactly 1 below `r` and exactly 0
//! beyond `r + ε`.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::fixed;
use crate::scalar::{unit_ball_volume, Real};
use crate::system::{Point, ToralSystem};

const TABLE_INTERVALS: usize = 4096;
const GL_NODES: usize = 16;
const GL_PANELS: usize = 12;

/// Default number of zero cells kept around the support of a sampled bump.
pub const DEFAULT_MARGIN: usize = 4;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `∫_a^b f`, with the substitution `u = a + (b−a)(3v² − 2v³)` flattening
/// square-root behaviour at both ends.
fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (nodes, weights) = rule;
    let mut total = 0.0;
    for p in 0..GL_PANELS {
        let (v0, v1) = (
            p as f64 / GL_PANELS as f64,
            (p + 1) as f64 / GL_PANELS as f64,
        );
        let half = 0.5 * (v1 - v0);
        for (x, w) in nodes.iter().zip(weights) {
            let v = v0 + half * (x + 1.0);
            let u = a + (b - a) * v * v * (3.0 - 2.0 * v);
            let du = (b - a) * 6.0 * v * (1.0 - v);
            total += w * half * f(u) * du;
        }
    }
    total
}

/// Unnormalised base bump `exp(−1/(1−u²))` on `|u| < 1`.
fn base_bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u * u)).exp()
    }
}

/// Fraction of the unit sphere `S^{d−1}` where the first coordinate exceeds `c`.
fn cap_fraction(d: usize, c: f64) -> f64 {
    if c >= 1.0 {
        return 0.0;
    }
    if c < -1.0 {
        return 1.0;
    }
    match d {
        1 => 0.5 * (f64::from(c < 1.0) + f64::from(c < -1.0)),
        2 => c.acos() / std::f64::consts::PI,
        3 => 0.5 * (1.0 - c),
        _ => {
            let a = 0.5 * (d as f64 - 1.0);
            beta_reg(a, a, (0.5 * (1.0 - c)).clamp(0.0, 1.0))
        }
    }
}

/// Radial profile of `f_ε` in dimension `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub d: usize,
    pub r: f64,
    pub eps: f64,
    table: Vec<f64>,
}

impl RadialProfile {
    pub fn new(d: usize, r: f64, eps: f64) -> Result<Self> {
        if d == 0 || !(r >= 0.0) || !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "profile needs d ≥ 1, r ≥ 0, ε > 0; got d={d}, r={r}, ε={eps}"
            )));
        }
        let rule = gauss_legendre(GL_NODES);
        let weight = |u: f64| base_bump(u) * u.powi(d as i32 - 1);
        let norm = integrate(&weight, 0.0, 1.0, &rule);
        let big_r = r + 0.5 * eps;
        let exact = |rho: f64| -> f64 {
            if rho <= r {
                return 1.0;
            }
            if rho >= r + eps {
                return 0.0;
            }
            let integrand = |u: f64| {
                let s = 0.5 * eps * u;
                let c = if s == 0.0 {
                    if rho < big_r {
                        -2.0
                    } else {
                        2.0
                    }
                } else {
                    (rho * rho + s * s - big_r * big_r) / (2.0 * rho * s)
                };
                weight(u) * cap_fraction(d, c)
            };
            // breakpoints where the sphere of radius s starts or stops meeting the ball
            let mut cuts = vec![0.0, 1.0];
            for s in [(big_r - rho).abs(), big_r + rho] {
                let u = 2.0 * s / eps;
                if u > 0.0 && u < 1.0 {
                    cuts.push(u);
                }
            }
            cuts.sort_by(f64::total_cmp);
            let value: f64 = cuts
                .windows(2)
                .map(|w| integrate(&integrand, w[0], w[1], &rule))
                .sum();
            (value / norm).clamp(0.0, 1.0)
        };
        let table = (0..=TABLE_INTERVALS)
            .map(|i| exact(r + eps * i as f64 / TABLE_INTERVALS as f64))
            .collect();
        Ok(Self { d, r, eps, table })
    }

    /// Profile value at distance `rho ≥ 0`, by cubic interpolation of the table.
    pub fn value(&self, rho: f64) -> f64 {
        if rho <= self.r {
            return 1.0;
        }
        if rho >= self.r + self.eps {
            return 0.0;
        }
        let x = (rho - self.r) / self.eps * TABLE_INTERVALS as f64;
        let i = (x.floor() as usize).min(TABLE_INTERVALS - 1);
        let f = x - i as f64;
        let at = |k: isize| -> f64 {
            let k = k.clamp(0, TABLE_INTERVALS as isize) as usize;
            self.table[k]
        };
        let (p0, p1, p2, p3) = (
            at(i as isize - 1),
            at(i as isize),
            at(i as isize + 1),
            at(i as isize + 2),
        );
        // Catmull-Rom
        let v = p1
            + 0.5
                * f
                * (p2 - p0
                    + f * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + f * (3.0 * (p1 - p2) + p3 - p0)));
        v.clamp(0.0, 1.0)
    }

    /// `∫_{R^d} f_ε` by radial quadrature.
    pub fn integral(&self) -> f64 {
        let surface = self.d as f64 * unit_ball_volume::<f64>(self.d);
        let rule = gauss_legendre(GL_NODES);
        let shell = integrate(
            &|rho: f64| self.value(rho) * rho.powi(self.d as i32 - 1),
            self.r,
            self.r + self.eps,
            &rule,
        );
        unit_ball_volume::<f64>(self.d) * self.r.powi(self.d as i32) + surface * shell
    }
}

/// Bump sampled on a uniform grid over `[−L, L]^d` centred at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mollifier<T> {
    pub d: usize,
    pub r: T,
    pub eps: T,
    pub grid_step: T,
    /// points per axis; the origin is the middle point
    pub per_axis: usize,
    /// zero cells between the support and the edge of the grid
    pub margin: usize,
    pub samples: Vec<T>,
    pub norm_ledger: BTreeMap<String, T>,
}

/// Sample the radial bump on a grid of step `grid_step ≤ ε/8`.
pub fn build_mollifier<T: Real>(d: usize, r: T, eps: T, grid_step: T) -> Result<Mollifier<T>> {
    build_mollifier_with_margin(d, r, eps, grid_step, DEFAULT_MARGIN)
}

pub fn build_mollifier_with_margin<T: Real>(
    d: usize,
    r: T,
    eps: T,
    grid_step: T,
    margin: usize,
) -> Result<Mollifier<T>> {
    let limit = eps / T::of(8.0);
    if !(grid_step > T::zero()) || grid_step > limit * T::of(1.0 + 1e-12) {
        return Err(Error::GridTooCoarse {
            step: grid_step.f64(),
            limit: limit.f64(),
        });
    }
    let profile = RadialProfile::new(d, r.f64(), eps.f64())?;
    let h = grid_step.f64();
    let half = ((r + eps).f64() / h).ceil() as usize + margin;
    let per_axis = 2 * half + 1;
    let total = per_axis
        .checked_pow(d as u32)
        .filter(|&t| t <= 200_000_000)
        .ok_or_else(|| {
            Error::InvalidParameter(format!(
                "mollifier grid with {per_axis}^{d} points is too large"
            ))
        })?;
    let mut samples = vec![T::zero(); total];
    let mut idx = vec![0usize; d];
    for (lin, slot) in samples.iter_mut().enumerate() {
        let mut rest = lin;
        for k in (0..d).rev() {
            idx[k] = rest % per_axis;
            rest /= per_axis;
        }
        let rho2: f64 = idx
            .iter()
            .map(|&j| {
                let x = (j as f64 - half as f64) * h;
                x * x
            })
            .sum();
        *slot = T::of(profile.value(rho2.sqrt()));
    }
    Ok(Mollifier {
        d,
        r,
        eps,
        grid_step,
        per_axis,
        margin,
        samples,
        norm_ledger: BTreeMap::new(),
    })
}

/// One-dimensional central-difference stencil for the `order`-th derivative
/// (offsets `−p..=p`, unscaled by the step).
fn stencil(order: u32) -> Vec<f64> {
    // even part δ^{2q}: alternating binomial coefficients
    let even = order - order % 2;
    let mut s = vec![1.0];
    for _ in 0..even {
        let mut next = vec![0.0; s.len() + 1];
        for (i, &v) in s.iter().enumerate() {
            next[i] -= v;
            next[i + 1] += v;
        }
        s = next;
    }
    // odd orders add the centred first difference
    if order % 2 == 1 {
        let mut next = vec![0.0; s.len() + 2];
        for (i, &v) in s.iter().enumerate() {
            next[i] -= 0.5 * v;
            next[i + 2] += 0.5 * v;
        }
        s = next;
    }
    s
}

impl<T: Real> Mollifier<T> {
    fn half(&self) -> usize {
        (self.per_axis - 1) / 2
    }

    /// Coordinate of grid index `j` along any axis.
    pub fn coordinate(&self, j: usize) -> T {
        T::of((j as f64 - self.half() as f64) * self.grid_step.f64())
    }

    /// Value at the grid point nearest the origin-relative coordinates.
    pub fn value_at_index(&self, index: &[usize]) -> T {
        let lin = index.iter().fold(0, |acc, &j| acc * self.per_axis + j);
        self.samples[lin]
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.d];
        for k in (0..self.d.saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.per_axis;
        }
        s
    }

    /// Apply the stencil for `order` along `axis`; points whose stencil leaves
    /// the grid are set to zero.
    fn differentiate(&self, field: &[f64], axis: usize, order: u32) -> Vec<f64> {
        if order == 0 {
            return field.to_vec();
        }
        let st = stencil(order);
        let p = (st.len() - 1) / 2;
        let stride = self.strides()[axis];
        let scale = self.grid_step.f64().powi(-(order as i32));
        let n = self.per_axis;
        (0..field.len())
            .map(|lin| {
                let j = (lin / stride) % n;
                if j < p || j + p >= n {
                    return 0.0;
                }
                let base = lin - p * stride;
                st.iter()
                    .enumerate()
                    .map(|(k, c)| c * field[base + k * stride])
                    .sum::<f64>()
                    * scale
            })
            .collect()
    }

    fn multi_indices(&self, max: u32) -> Vec<Vec<u32>> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; self.d];
        fn rec(d: usize, k: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
            if k == d {
                out.push(cur.clone());
                return;
            }
            for a in 0..=left {
                cur[k] = a;
                rec(d, k + 1, left - a, cur, out);
            }
            cur[k] = 0;
        }
        rec(self.d, 0, max, &mut cur, &mut out);
        out
    }

    /// Discrete `W²_ℓ` norm: all multi-indices `|α| ≤ ℓ`, central differences,
    /// Riemann sum with cell volume `step^d`.
    pub fn sobolev_norm(&mut self, ell: u32) -> Result<T> {
        let needed = ell.div_ceil(2) as usize;
        if needed > self.margin {
            return Err(Error::StencilOutOfRange {
                order: ell,
                needed,
                margin: self.margin,
            });
        }
        let field: Vec<f64> = self.samples.iter().map(|v| v.f64()).collect();
        let cell = self.grid_step.f64().powi(self.d as i32);
        let mut total = 0.0;
        for alpha in self.multi_indices(ell) {
            let mut g = field.clone();
            for (axis, &a) in alpha.iter().enumerate() {
                g = self.differentiate(&g, axis, a);
            }
            total += g.iter().map(|v| v * v).sum::<f64>() * cell;
        }
        let norm = T::of(total.sqrt());
        self.norm_ledger.insert(format!("sobolev_{ell}"), norm);
        Ok(norm)
    }

    /// Max over the grid of the Euclidean norm of the central-difference gradient.
    pub fn grad_sup_norm(&mut self) -> T {
        let field: Vec<f64> = self.samples.iter().map(|v| v.f64()).collect();
        let parts: Vec<Vec<f64>> = (0..self.d)
            .map(|a| self.differentiate(&field, a, 1))
            .collect();
        let sup = (0..field.len())
            .map(|i| parts.iter().map(|p| p[i] * p[i]).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let v = T::of(sup);
        self.norm_ledger.insert("grad_sup".into(), v);
        v
    }

    /// Riemann sum `Σ f · step^d`.
    pub fn integral(&self) -> T {
        let cell = self.grid_step.f64().powi(self.d as i32);
        T::of(self.samples.iter().map(|v| v.f64()).sum::<f64>() * cell)
    }

    /// Euclidean distance of a grid point from the origin.
    pub fn radius_at(&self, lin: usize) -> f64 {
        let mut rest = lin;
        let mut acc = 0.0;
        for _ in 0..self.d {
            let j = rest % self.per_axis;
            rest /= self.per_axis;
            let x = self.coordinate(j).f64();
            acc += x * x;
        }
        acc.sqrt()
    }

    /// Sandwich `1_{B(r)} ≤ f ≤ 1_{B(r+ε)}` and range `[0, 1]` at every grid point.
    pub fn sandwich_holds(&self) -> bool {
        let (r, outer) = (self.r.f64(), (self.r + self.eps).f64());
        self.samples.iter().enumerate().all(|(lin, v)| {
            let v = v.f64();
            let rho = self.radius_at(lin);
            let lower = if rho < r { 1.0 } else { 0.0 };
            let upper = if rho < outer { 1.0 } else { 0.0 };
            (0.0..=1.0).contains(&v) && lower <= v && v <= upper
        })
    }

    /// Write `(coordinates..., value)` rows with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let axes = ["x", "y", "z", "w"];
        let header: Vec<String> = (0..self.d)
            .map(|k| axes.get(k).map_or(format!("x{k}"), |s| s.to_string()))
            .chain(std::iter::once("value".to_string()))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        let mut idx = vec![0usize; self.d];
        for (lin, v) in self.samples.iter().enumerate() {
            let mut rest = lin;
            for k in (0..self.d).rev() {
                idx[k] = rest % self.per_axis;
                rest /= self.per_axis;
            }
            let coords: Vec<String> = idx
                .iter()
                .map(|&j| format!("{}", self.coordinate(j).f64()))
                .collect();
            writeln!(out, "{},{}", coords.join(","), v.f64())?;
        }
        Ok(())
    }
}

/// Result of fitting `log ‖f_ε‖_ℓ` against `log(1/ε)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormScaling {
    pub d: usize,
    pub r: f64,
    pub ell: u32,
    pub eps: Vec<f64>,
    pub norms: Vec<f64>,
    pub grad_sups: Vec<f64>,
    pub slope: f64,
    pub grad_slope: f64,
    pub r_squared: f64,
    pub bound: f64,
    pub monotone: bool,
    pub sandwich: bool,
    pub pass: bool,
}

/// Fit the growth of the Sobolev norm as `ε` shrinks. Passes when the slope
/// stays within `d + ℓ + 0.3`, the sandwich holds on every grid, and, for
/// `ℓ ≥ 1`, the norm does not decrease as `ε` decreases.
pub fn verify_norm_scaling(d: usize, r: f64, ell: u32, eps_list: &[f64]) -> Result<NormScaling> {
    if eps_list.len() < 5 {
        return Err(Error::InvalidParameter(format!(
            "need at least 5 values of ε, got {}",
            eps_list.len()
        )));
    }
    let ratio = eps_list[1] / eps_list[0];
    let geometric = ratio > 0.0
        && ratio != 1.0
        && eps_list
            .windows(2)
            .all(|w| ((w[1] / w[0]) / ratio - 1.0).abs() < 1e-9);
    if !geometric {
        return Err(Error::InvalidParameter(
            "ε values must form a geometric sequence".into(),
        ));
    }
    let mut norms = Vec::new();
    let mut grads = Vec::new();
    let mut sandwich = true;
    for &eps in eps_list {
        let mut m = build_mollifier::<f64>(d, r, eps, eps / 8.0)?;
        sandwich &= m.sandwich_holds();
        norms.push(m.sobolev_norm(ell)?);
        grads.push(m.grad_sup_norm());
    }
    let x: Vec<f64> = eps_list.iter().map(|e| (1.0 / e).ln()).collect();
    let fit = linear_fit(&x, &norms.iter().map(|v| v.ln()).collect::<Vec<_>>())?;
    let gfit = linear_fit(&x, &grads.iter().map(|v| v.ln()).collect::<Vec<_>>())?;
    // order by decreasing ε
    let mut pairs: Vec<(f64, f64)> = eps_list
        .iter()
        .cloned()
        .zip(norms.iter().cloned())
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let monotone = pairs.windows(2).all(|w| w[1].1 >= w[0].1);
    let bound = (d as f64) + ell as f64 + 0.3;
    let pass = fit.slope <= bound && sandwich && (ell == 0 || monotone);
    Ok(NormScaling {
        d,
        r,
        ell,
        eps: eps_list.to_vec(),
        norms,
        grad_sups: grads,
        slope: fit.slope,
        grad_slope: gfit.slope,
        r_squared: fit.r_squared,
        bound,
        monotone,
        sandwich,
        pass,
    })
}

/// Product bump on the unstable box `B^H(r)`: `f(h) = Π f₁(h_i)`, equal to 1
/// on the box of half-width `r` and 0 outside half-width `r + ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafBump {
    pub n: usize,
    pub profile: RadialProfile,
}

impl LeafBump {
    pub fn new(n: usize, r: f64, eps: f64) -> Result<Self> {
        Ok(Self {
            n,
            profile: RadialProfile::new(1, r, eps)?,
        })
    }

    pub fn value(&self, h: &[f64]) -> f64 {
        h.iter().map(|&x| self.profile.value(x.abs())).product()
    }

    /// Half-width of the support box.
    pub fn support(&self) -> f64 {
        self.profile.r + self.profile.eps
    }

    /// `∫ f dν`.
    pub fn integral(&self) -> f64 {
        self.profile.integral().powi(self.n as i32)
    }
}

/// Radial bump on `T^m` around `x₀`: 1 on `B(r/2)`, 0 outside `B(r/2 + ε)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiOnTorus<T> {
    pub center: Point<T>,
    pub r: T,
    pub eps: T,
    pub profile: RadialProfile,
    center_fractions: Vec<u128>,
}

/// `ψ` for the measure estimate: the `d = m` bump of inner radius `r/2`,
/// wrapped to the torus.
pub fn build_psi<T: Real>(
    sys: &ToralSystem<T>,
    center: &Point<T>,
    r: T,
    eps: T,
) -> Result<PsiOnTorus<T>> {
    if center.dim() != sys.m() {
        return Err(Error::DimensionMismatch {
            expected: sys.m(),
            got: center.dim(),
        });
    }
    let support = (r / T::of(2.0) + eps).f64();
    if support >= 0.5 {
        return Err(Error::SupportDoesNotEmbed { support });
    }
    let profile = RadialProfile::new(sys.m(), r.f64() / 2.0, eps.f64())?;
    Ok(PsiOnTorus {
        center: center.clone(),
        r,
        eps,
        profile,
        center_fractions: center.fractions(),
    })
}

impl<T: Real> PsiOnTorus<T> {
    pub fn value(&self, x: &Point<T>) -> T {
        T::of(self.value_at_fractions(&x.fractions()))
    }

    #[inline]
    pub fn value_at_fractions(&self, pos: &[u128]) -> f64 {
        let support = self.profile.r + self.profile.eps;
        let d2 = fixed::squared_distance(pos, &self.center_fractions);
        if d2 >= support * support {
            0.0
        } else {
            self.profile.value(d2.sqrt())
        }
    }

    /// `∫ ψ dμ` in closed radial form.
    pub fn integral(&self) -> f64 {
        self.profile.integral()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::make_system;
    use proptest::prelude::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let rule = gauss_legendre(8);
        let s: f64 = rule
            .0
            .iter()
            .zip(&rule.1)
            .map(|(x, w)| w * x.powi(14))
            .sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn stencils() {
        assert_eq!(stencil(1), vec![-0.5, 0.0, 0.5]);
        assert_eq!(stencil(2), vec![1.0, -2.0, 1.0]);
        assert_eq!(stencil(3).len(), 5);
        assert_eq!(stencil(4), vec![1.0, -4.0, 6.0, -4.0, 1.0]);
    }

    #[test]
    fn cap_fractions() {
        assert_eq!(cap_fraction(3, 0.0), 0.5);
        assert!((cap_fraction(2, 0.0) - 0.5).abs() < 1e-15);
        for d in 2..=5 {
            for &c in &[-0.7, -0.1, 0.3, 0.9] {
                assert!((cap_fraction(d, c) + cap_fraction(d, -c) - 1.0).abs() < 1e-12);
            }
        }
        // general formula agrees with the closed forms
        let a = 0.5;
        assert!((beta_reg(a, a, 0.5 * (1.0 - 0.3)) - cap_fraction(2, 0.3)).abs() < 1e-12);
        assert!((beta_reg(1.0, 1.0, 0.5 * (1.0 - 0.3)) - cap_fraction(3, 0.3)).abs() < 1e-12);
    }

    /// One-dimensional convolution by direct midpoint summation.
    fn brute_1d(r: f64, eps: f64, x: f64) -> f64 {
        let n = 200_000;
        let big = r + eps / 2.0;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            let y = -eps / 2.0 + (i as f64 + 0.5) * eps / n as f64;
            let g = base_bump(2.0 * y / eps);
            den += g;
            if (x - y).abs() < big {
                num += g;
            }
        }
        num / den
    }

    #[test]
    fn profile_matches_direct_convolution_in_one_dimension() {
        let p = RadialProfile::new(1, 0.1, 0.05).unwrap();
        for &x in &[0.1, 0.11, 0.12, 0.125, 0.13, 0.14, 0.149] {
            assert!((p.value(x) - brute_1d(0.1, 0.05, x)).abs() < 1e-5, "x={x}");
        }
    }

    #[test]
    fn two_dimensional_profile_matches_grid_convolution() {
        let (r, eps) = (0.1, 0.04);
        let p = RadialProfile::new(2, r, eps).unwrap();
        let big = r + eps / 2.0;
        let n = 400;
        for &rho in &[0.105, 0.12, 0.135] {
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let y0 = -eps / 2.0 + (i as f64 + 0.5) * eps / n as f64;
                    let y1 = -eps / 2.0 + (j as f64 + 0.5) * eps / n as f64;
                    let g = base_bump(2.0 * (y0 * y0 + y1 * y1).sqrt() / eps);
                    den += g;
                    if ((rho - y0).powi(2) + y1 * y1).sqrt() < big {
                        num += g;
                    }
                }
            }
            assert!((p.value(rho) - num / den).abs() < 2e-3, "rho={rho}");
        }
    }

    #[test]
    fn profile_is_monotone_and_symmetric() {
        for d in 1..=3 {
            let p = RadialProfile::new(d, 0.1, 0.05).unwrap();
            let mut last = 1.0;
            for i in 0..=1000 {
                let v = p.value(0.1 + 0.05 * i as f64 / 1000.0);
                assert!(v <= last + 1e-12);
                last = v;
            }
        }
        // in d = 1 the smoothed step is antisymmetric about r + ε/2
        let p = RadialProfile::new(1, 0.1, 0.05).unwrap();
        for &u in &[0.003, 0.01, 0.02] {
            assert!((p.value(0.125 - u) + p.value(0.125 + u) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn mollifier_examples() {
        let m = build_mollifier::<f64>(1, 0.1, 0.05, 0.05 / 8.0).unwrap();
        let mid = (m.per_axis - 1) / 2;
        assert_eq!(m.value_at_index(&[mid]), 1.0);
        let edge = mid + (0.15 / m.grid_step).round() as usize;
        assert_eq!(m.value_at_index(&[edge]), 0.0);
        let integral = m.integral();
        assert!((0.2..=0.3).contains(&integral), "{integral}");
        assert!(m.sandwich_holds());
        assert!(matches!(
            build_mollifier(1, 0.1, 0.05, 0.01),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn norm_examples() {
        let mut m = build_mollifier::<f64>(1, 0.1, 0.05, 0.05 / 8.0).unwrap();
        let l2 = m.sobolev_norm(0).unwrap();
        assert!(l2 >= 0.2f64.sqrt() && l2 <= 0.3f64.sqrt(), "{l2}");
        let mut zero = m.clone();
        zero.samples.iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(zero.sobolev_norm(2).unwrap(), 0.0);
        assert_eq!(zero.grad_sup_norm(), 0.0);
        assert!(matches!(
            m.sobolev_norm(10),
            Err(Error::StencilOutOfRange {
                order: 10,
                needed: 5,
                margin: 4
            })
        ));
        assert!(m.norm_ledger.contains_key("sobolev_0"));
    }

    #[test]
    fn halving_eps_grows_first_norm_like_root_two() {
        // ‖f'‖² ≈ 2∫|f₁'|² with |f₁'| ~ 1/ε on a width-ε interval, so the
        // derivative part scales like ε^{-1/2}
        let mut a = build_mollifier::<f64>(1, 0.1, 0.02, 0.0025).unwrap();
        let mut b = build_mollifier::<f64>(1, 0.1, 0.01, 0.00125).unwrap();
        let (na, nb) = (a.sobolev_norm(1).unwrap(), b.sobolev_norm(1).unwrap());
        let da = (na * na - a.sobolev_norm(0).unwrap().powi(2)).sqrt();
        let db = (nb * nb - b.sobolev_norm(0).unwrap().powi(2)).sqrt();
        assert!((db / da / 2f64.sqrt() - 1.0).abs() < 0.02, "{}", db / da);
        assert!(nb / na < 4.0);
    }

    #[test]
    fn gradient_sup_examples() {
        let mut a = build_mollifier::<f64>(1, 0.1, 0.02, 0.0025).unwrap();
        let mut b = build_mollifier::<f64>(1, 0.2, 0.02, 0.0025).unwrap();
        let (ga, gb) = (a.grad_sup_norm(), b.grad_sup_norm());
        assert!((ga / gb - 1.0).abs() < 0.05);
        let mut c = build_mollifier::<f64>(1, 0.1, 0.01, 0.00125).unwrap();
        let slope = (c.grad_sup_norm() / ga).ln() / 2f64.ln();
        assert!((0.7..=2.3).contains(&slope), "{slope}");
    }

    #[test]
    fn norm_scaling_examples() {
        let eps: Vec<f64> = (4..=9).map(|k| 2f64.powi(-k)).collect();
        let s0 = verify_norm_scaling(1, 0.1, 0, &eps).unwrap();
        assert!(s0.slope.abs() < 0.1 && s0.pass, "{s0:?}");
        let s2 = verify_norm_scaling(1, 0.1, 2, &eps).unwrap();
        assert!(s2.slope <= 3.3 && s2.pass && s2.monotone);
        assert!(verify_norm_scaling(1, 0.1, 1, &eps[..4]).is_err());
    }

    #[test]
    fn csv_export() {
        let m = build_mollifier(1, 0.1, 0.05, 0.05 / 8.0).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,value\n"));
        assert_eq!(text.lines().count(), m.per_axis + 1);
    }

    #[test]
    fn psi_examples() {
        let sys = make_system::<f64>(vec![vec![2, 1], vec![1, 1]]).unwrap();
        let x0 = Point::float(vec![0.0, 0.0]);
        let psi = build_psi(&sys, &x0, 0.2, 0.02).unwrap();
        assert_eq!(psi.value(&x0), 1.0);
        assert_eq!(psi.value(&Point::float(vec![0.12, 0.0])), 0.0);
        assert_eq!(psi.value(&Point::float(vec![0.95, 0.0])), 1.0);
        let integral = psi.integral();
        assert!((0.0314..=0.0452).contains(&integral), "{integral}");
        assert!(matches!(
            build_psi(&sys, &x0, 0.9, 0.1),
            Err(Error::SupportDoesNotEmbed { .. })
        ));
    }

    #[test]
    fn leaf_bump_is_a_box_product() {
        let f = LeafBump::new(2, 0.1, 0.02).unwrap();
        assert_eq!(f.value(&[0.05, -0.09]), 1.0);
        assert_eq!(f.value(&[0.05, 0.125]), 0.0);
        let one = RadialProfile::new(1, 0.1, 0.02).unwrap();
        assert!((f.integral() - one.integral().powi(2)).abs() < 1e-15);
        assert!((one.integral() - 0.22).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn sandwich_on_random_parameters(d in 1usize..=2, r in 0.02f64..0.2, eps in 0.01f64..0.08) {
            let m = build_mollifier(d, r, eps, eps / 8.0).unwrap();
            prop_assert!(m.sandwich_holds());
        }

        #[test]
        fn integral_sits_between_ball_volumes(d in 1usize..=3, r in 0.02f64..0.2, eps in 0.005f64..0.08) {
            let p = RadialProfile::new(d, r, eps).unwrap();
            let v = unit_ball_volume::<f64>(d);
            let i = p.integral();
            prop_assert!(i >= v * r.powi(d as i32) && i <= v * (r + eps).powi(d as i32));
        }
    }
}
