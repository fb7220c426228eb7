//! Fixed-point torus arithmetic.
//!
//! Points on `T^m` are stored as integers modulo `2^bits`. An integer matrix
//! acts on such a vector exactly, so the only error in `A^t (x + h·u)` is the
//! initial rounding of `x + h·u`, which grows like `e^{λ₀ t}`. The unstable
//! eigenvectors are refined to `bits` binary digits from the exact
//! characteristic polynomial, so leaf images stay accurate far beyond the
//! horizon where `f64` iteration has lost every digit.
//!
//! After stepping, positions are truncated to 128-bit fractions: a leaf grid
//! `x + Σ j_i δ_i u_i` at time `t` becomes `base + Σ j_i w_i (mod 2^128)`,
//! evaluated with wrapping integer arithmetic.

use nalgebra::DMatrix;
use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Float, One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Scale of a 128-bit torus fraction, `2^128` as `f64`.
const TWO_POW_128: f64 = 340_282_366_920_938_463_463_374_607_431_768_211_456.0;

/// Bits kept above the amplified rounding error when sizing a frame.
pub const GUARD_BITS: u32 = 192;

/// Round-to-floor conversion of an `f64` to a fixed-point integer with `bits`
/// fractional bits. Exact whenever the value has no bits below `2^-bits`.
pub fn f64_to_fixed(x: f64, bits: u32) -> BigInt {
    if x == 0.0 {
        return BigInt::zero();
    }
    let (mantissa, exponent, sign) = Float::integer_decode(x);
    let mut v = BigInt::from(mantissa);
    let shift = exponent as i64 + bits as i64;
    if shift >= 0 {
        v <<= shift as usize;
    } else {
        v >>= (-shift) as usize;
    }
    if sign < 0 {
        v = -v;
        // floor toward -inf for negative values that lost bits
        if shift < 0 {
            v -= 1;
        }
    }
    v
}

pub fn fixed_to_f64(v: &BigInt, bits: u32) -> f64 {
    let (sign, mag) = (v.sign(), v.magnitude());
    let len = mag.bits();
    let value = if len > 60 {
        let drop = len - 60;
        let top = (mag >> drop).to_f64().unwrap_or(0.0);
        top * 2f64.powi(drop as i32 - bits as i32)
    } else {
        mag.to_f64().unwrap_or(0.0) * 2f64.powi(-(bits as i32))
    };
    if sign == Sign::Minus {
        -value
    } else {
        value
    }
}

/// Exact characteristic polynomial `det(λI - A)`, coefficients low to high.
pub fn characteristic_polynomial(matrix: &[Vec<i64>]) -> Vec<BigInt> {
    // Faddeev–LeVerrier; every division is exact over the integers.
    let m = matrix.len();
    let a: Vec<Vec<BigInt>> = matrix
        .iter()
        .map(|row| row.iter().map(|&v| BigInt::from(v)).collect())
        .collect();
    let mut coeffs = vec![BigInt::zero(); m + 1];
    coeffs[m] = BigInt::one();
    let mut mk = vec![vec![BigInt::zero(); m]; m];
    for k in 1..=m {
        // M_k = A M_{k-1} + c_{m-k+1} I
        let mut next = vec![vec![BigInt::zero(); m]; m];
        for i in 0..m {
            for j in 0..m {
                let mut acc = BigInt::zero();
                for l in 0..m {
                    acc += &a[i][l] * &mk[l][j];
                }
                next[i][j] = acc;
            }
            next[i][i] += &coeffs[m - k + 1];
        }
        let mut trace = BigInt::zero();
        for i in 0..m {
            for l in 0..m {
                trace += &a[i][l] * &next[l][i];
            }
        }
        coeffs[m - k] = -(trace / BigInt::from(k as i64));
        mk = next;
    }
    coeffs
}

type Poly = Vec<BigRational>;

fn poly_trim(p: &mut Poly) {
    while p.len() > 1 && p.last().is_some_and(|c| c.is_zero()) {
        p.pop();
    }
}

fn poly_rem(a: &Poly, b: &Poly) -> Poly {
    let db = b.len() - 1;
    let lead = b[db].clone();
    let mut r = a.clone();
    while r.len() > db {
        let shift = r.len() - 1 - db;
        let factor = r[r.len() - 1].clone() / lead.clone();
        for (i, c) in b.iter().enumerate() {
            r[i + shift] = r[i + shift].clone() - factor.clone() * c.clone();
        }
        r.pop();
    }
    if r.is_empty() {
        r.push(BigRational::zero());
    }
    poly_trim(&mut r);
    r
}

fn poly_div(a: &Poly, b: &Poly) -> Poly {
    let db = b.len() - 1;
    if a.len() <= db {
        return vec![BigRational::zero()];
    }
    let mut r = a.clone();
    let mut q = vec![BigRational::zero(); a.len() - db];
    let lead = b[db].clone();
    for shift in (0..q.len()).rev() {
        let factor = r[shift + db].clone() / lead.clone();
        for (i, c) in b.iter().enumerate() {
            r[i + shift] = r[i + shift].clone() - factor.clone() * c.clone();
        }
        q[shift] = factor;
    }
    q
}

/// Square-free part of an integer polynomial, returned with integer
/// coefficients (low to high).
pub fn square_free_part(p: &[BigInt]) -> Vec<BigInt> {
    let pr: Poly = p
        .iter()
        .map(|c| BigRational::from_integer(c.clone()))
        .collect();
    let dp: Poly = if pr.len() > 1 {
        pr.iter()
            .enumerate()
            .skip(1)
            .map(|(i, c)| c.clone() * BigRational::from_integer(BigInt::from(i as i64)))
            .collect()
    } else {
        vec![BigRational::zero()]
    };
    let mut a = pr.clone();
    let mut b = dp;
    poly_trim(&mut b);
    while !(b.len() == 1 && b[0].is_zero()) {
        let r = poly_rem(&a, &b);
        a = b;
        b = r;
    }
    let q = poly_div(&pr, &a);
    let lcm = q.iter().fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
    q.iter()
        .map(|c| (c.clone() * BigRational::from_integer(lcm.clone())).to_integer())
        .collect()
}

/// Sign of `p(v / 2^bits)`.
fn poly_sign_at(p: &[BigInt], v: &BigInt, bits: u32) -> Sign {
    let deg = p.len() - 1;
    let mut acc = p[deg].clone();
    for i in (0..deg).rev() {
        acc = acc * v + (&p[i] << (bits as usize * (deg - i)));
    }
    acc.sign()
}

/// Refine a simple real root of `p` near `approx` to `bits` fractional bits.
pub fn refine_root(p: &[BigInt], approx: f64, bits: u32) -> Result<BigInt> {
    let mut width = 1e-9 * approx.abs().max(1.0);
    for _ in 0..40 {
        let lo = f64_to_fixed(approx - width, bits);
        let hi = f64_to_fixed(approx + width, bits);
        let (slo, shi) = (poly_sign_at(p, &lo, bits), poly_sign_at(p, &hi, bits));
        if slo == Sign::NoSign {
            return Ok(lo);
        }
        if shi == Sign::NoSign {
            return Ok(hi);
        }
        if slo != shi {
            let (mut lo, mut hi) = (lo, hi);
            let one = BigInt::one();
            while &hi - &lo > one {
                let mid: BigInt = (&lo + &hi) >> 1usize;
                let sm = poly_sign_at(p, &mid, bits);
                if sm == Sign::NoSign {
                    return Ok(mid);
                }
                if sm == slo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(lo);
        }
        width *= 4.0;
    }
    Err(Error::InvalidParameter(format!(
        "could not bracket eigenvalue near {approx}"
    )))
}

fn combinations(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    rec(0, m, k, &mut cur, &mut out);
    out
}

fn submatrix_det(mat: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() {
        return 1.0;
    }
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| mat[(rows[i], cols[j])]).determinant()
}

/// Solve `M x = b` exactly over the rationals (square, nonsingular).
fn solve_rational(
    mut mat: Vec<Vec<BigRational>>,
    mut rhs: Vec<BigRational>,
) -> Result<Vec<BigRational>> {
    let k = rhs.len();
    for col in 0..k {
        let pivot = (col..k)
            .find(|&r| !mat[r][col].is_zero())
            .ok_or_else(|| Error::InvalidParameter("singular eigenvector system".into()))?;
        mat.swap(col, pivot);
        rhs.swap(col, pivot);
        let inv = mat[col][col].recip();
        for r in (col + 1)..k {
            if mat[r][col].is_zero() {
                continue;
            }
            let f = mat[r][col].clone() * inv.clone();
            let (top, bottom) = mat.split_at_mut(r);
            for (dst, src) in bottom[0][col..k].iter_mut().zip(&top[col][col..k]) {
                *dst -= src.clone() * f.clone();
            }
            let v = rhs[col].clone() * f;
            rhs[r] = rhs[r].clone() - v;
        }
    }
    let mut x = vec![BigRational::zero(); k];
    for r in (0..k).rev() {
        let mut acc = rhs[r].clone();
        for c in (r + 1)..k {
            acc -= mat[r][c].clone() * x[c].clone();
        }
        x[r] = acc / mat[r][r].clone();
    }
    Ok(x)
}

fn rational_to_fixed(q: &BigRational, bits: u32) -> BigInt {
    (q.numer() << bits as usize).div_floor(q.denom())
}

/// Exact basis of the eigenspace for `eigenvalue ≈ value / 2^bits` with the
/// given multiplicity, as fixed-point vectors with `bits` fractional bits.
fn eigenspace(
    matrix: &[Vec<i64>],
    value: &BigInt,
    bits: u32,
    approx: f64,
    multiplicity: usize,
) -> Result<Vec<Vec<BigInt>>> {
    let m = matrix.len();
    let k = multiplicity;
    let shifted = DMatrix::from_fn(m, m, |i, j| {
        matrix[i][j] as f64 - if i == j { approx } else { 0.0 }
    });
    let svd = shifted.clone().svd(false, true);
    let vt = svd
        .v_t
        .ok_or_else(|| Error::InvalidParameter("svd failed".into()))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| sv[a].total_cmp(&sv[b]));
    let scale = sv.iter().cloned().fold(1.0, f64::max);
    if sv[order[k - 1]] > 1e-7 * scale {
        return Err(Error::InvalidParameter(
            "defective unstable eigenvalue (geometric multiplicity below algebraic)".into(),
        ));
    }
    // approximate null basis as columns
    let null = DMatrix::from_fn(m, k, |i, j| vt[(order[j], i)]);
    let all: Vec<usize> = (0..m).collect();
    let free = combinations(m, k)
        .into_iter()
        .max_by(|a, b| {
            let da = submatrix_det(&null, a, &all[..k]).abs();
            let db = submatrix_det(&null, b, &all[..k]).abs();
            da.total_cmp(&db)
        })
        .expect("at least one combination");
    let bound: Vec<usize> = (0..m).filter(|i| !free.contains(i)).collect();
    let rows = combinations(m, m - k)
        .into_iter()
        .max_by(|a, b| {
            let da = submatrix_det(&shifted, a, &bound).abs();
            let db = submatrix_det(&shifted, b, &bound).abs();
            da.total_cmp(&db)
        })
        .expect("at least one combination");

    let lam = BigRational::new(value.clone(), BigInt::one() << bits as usize);
    let entry = |i: usize, j: usize| -> BigRational {
        let a = BigRational::from_integer(BigInt::from(matrix[i][j]));
        if i == j {
            a - lam.clone()
        } else {
            a
        }
    };
    let mut basis = Vec::with_capacity(k);
    for (slot, &f) in free.iter().enumerate() {
        let _ = slot;
        let sys: Vec<Vec<BigRational>> = rows
            .iter()
            .map(|&r| bound.iter().map(|&c| entry(r, c)).collect())
            .collect();
        let rhs: Vec<BigRational> = rows.iter().map(|&r| -entry(r, f)).collect();
        let sol = if bound.is_empty() {
            Vec::new()
        } else {
            solve_rational(sys, rhs)?
        };
        let mut v = vec![BigInt::zero(); m];
        v[f] = BigInt::one() << bits as usize;
        for (idx, &c) in bound.iter().enumerate() {
            v[c] = rational_to_fixed(&sol[idx], bits);
        }
        basis.push(v);
    }
    Ok(basis)
}

/// Orthonormalise exact eigenvectors of one eigenspace. Coefficients are
/// computed in `f64` and applied in fixed point, so every output vector is
/// still an exact member of the eigenspace.
fn orthonormalize(vectors: Vec<Vec<BigInt>>, bits: u32) -> Vec<Vec<BigInt>> {
    let mut out: Vec<Vec<BigInt>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let mut cur = v;
        for prev in &out {
            let dot: f64 = cur
                .iter()
                .zip(prev)
                .map(|(a, b)| fixed_to_f64(a, bits) * fixed_to_f64(b, bits))
                .sum();
            let c = f64_to_fixed(dot, bits);
            for (a, b) in cur.iter_mut().zip(prev) {
                *a -= (&c * b) >> bits as usize;
            }
        }
        let norm: f64 = cur
            .iter()
            .map(|a| fixed_to_f64(a, bits).powi(2))
            .sum::<f64>()
            .sqrt();
        // orient so the largest component is positive
        let lead = cur
            .iter()
            .max_by(|a, b| a.abs().cmp(&b.abs()))
            .map(|a| a.is_negative())
            .unwrap_or(false);
        let scale = if lead { -1.0 / norm } else { 1.0 / norm };
        let c = f64_to_fixed(scale, bits);
        for a in cur.iter_mut() {
            *a = (&c * &*a) >> bits as usize;
        }
        out.push(cur);
    }
    out
}

/// High-precision unstable frame of an integer matrix.
#[derive(Debug, Clone)]
pub struct Frame {
    pub(crate) bits: u32,
    pub(crate) matrix: Vec<Vec<i64>>,
    /// unstable eigenvectors, fixed point, ordered like the system's rates
    pub(crate) unstable: Vec<Vec<BigInt>>,
}

/// One unstable eigenvalue cluster, as found in `f64`.
pub(crate) struct Cluster {
    pub value: f64,
    pub multiplicity: usize,
}

impl Frame {
    pub(crate) fn build(matrix: &[Vec<i64>], clusters: &[Cluster], bits: u32) -> Result<Self> {
        let poly = characteristic_polynomial(matrix);
        let sf = square_free_part(&poly);
        let mut unstable = Vec::new();
        for c in clusters {
            let root = refine_root(&sf, c.value, bits + 32)?;
            let vecs = eigenspace(matrix, &root, bits + 32, c.value, c.multiplicity)?;
            let vecs: Vec<Vec<BigInt>> = vecs
                .into_iter()
                .map(|v| v.into_iter().map(|x| x >> 32usize).collect())
                .collect();
            unstable.extend(orthonormalize(vecs, bits));
        }
        Ok(Self {
            bits,
            matrix: matrix.to_vec(),
            unstable,
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Unstable basis vectors rounded to `f64`.
    pub fn unstable_f64(&self) -> Vec<Vec<f64>> {
        self.unstable
            .iter()
            .map(|v| v.iter().map(|x| fixed_to_f64(x, self.bits)).collect())
            .collect()
    }

    fn modulus(&self) -> BigInt {
        BigInt::one() << self.bits as usize
    }

    fn apply(&self, v: &[BigInt], modulus: &BigInt) -> Vec<BigInt> {
        self.matrix
            .iter()
            .map(|row| {
                let acc: BigInt = row.iter().zip(v).map(|(&a, x)| BigInt::from(a) * x).sum();
                acc.mod_floor(modulus)
            })
            .collect()
    }

    fn to_u128(&self, v: &[BigInt]) -> Vec<u128> {
        let modulus = self.modulus();
        v.iter()
            .map(|x| {
                let r = x.mod_floor(&modulus);
                let top: BigInt = r >> (self.bits as usize - 128);
                top.to_u128().expect("fits in 128 bits")
            })
            .collect()
    }

    /// Start a leaf-grid orbit at time 0. `base` is the base point in
    /// fixed point; `origin` and `spacing` are eigencoordinates of the grid
    /// corner and the per-axis step.
    pub fn leaf_orbit(&self, base: Vec<BigInt>, origin: &[f64], spacing: &[f64]) -> LeafOrbit<'_> {
        let m = self.matrix.len();
        let modulus = self.modulus();
        let mut corner = base;
        for (h, u) in origin.iter().zip(&self.unstable) {
            let hf = f64_to_fixed(*h, self.bits);
            for i in 0..m {
                corner[i] += (&hf * &u[i]) >> self.bits as usize;
            }
        }
        let corner = corner.into_iter().map(|c| c.mod_floor(&modulus)).collect();
        let steps = spacing
            .iter()
            .zip(&self.unstable)
            .map(|(d, u)| {
                let df = f64_to_fixed(*d, self.bits);
                u.iter().map(|x| (&df * x) >> self.bits as usize).collect()
            })
            .collect();
        LeafOrbit {
            frame: self,
            modulus,
            time: 0,
            corner,
            steps,
        }
    }

    /// Largest time `t` that still leaves `GUARD_BITS` of accuracy.
    pub fn horizon(&self, lambda0: f64) -> u64 {
        let usable = self.bits.saturating_sub(GUARD_BITS) as f64 * std::f64::consts::LN_2;
        (usable / lambda0).floor() as u64
    }
}

/// Incremental orbit of a leaf grid under the integer matrix.
pub struct LeafOrbit<'a> {
    frame: &'a Frame,
    modulus: BigInt,
    time: u64,
    corner: Vec<BigInt>,
    steps: Vec<Vec<BigInt>>,
}

impl LeafOrbit<'_> {
    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn advance(&mut self) {
        self.corner = self.frame.apply(&self.corner, &self.modulus);
        self.steps = self
            .steps
            .iter()
            .map(|s| self.frame.apply(s, &self.modulus))
            .collect();
        self.time += 1;
    }

    pub fn advance_to(&mut self, t: u64) {
        while self.time < t {
            self.advance();
        }
    }

    pub fn lattice(&self) -> LeafLattice {
        LeafLattice {
            corner: self.frame.to_u128(&self.corner),
            steps: self.steps.iter().map(|s| self.frame.to_u128(s)).collect(),
        }
    }
}

/// Leaf grid at a fixed time as 128-bit torus fractions:
/// position `corner + Σ j_i steps_i (mod 2^128)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafLattice {
    pub corner: Vec<u128>,
    pub steps: Vec<Vec<u128>>,
}

impl LeafLattice {
    pub fn dim(&self) -> usize {
        self.corner.len()
    }

    /// Position of grid node `index` written into `out`.
    #[inline]
    pub fn position_into(&self, index: &[u64], out: &mut [u128]) {
        out.copy_from_slice(&self.corner);
        for (j, step) in index.iter().zip(&self.steps) {
            let j = *j as u128;
            for (o, s) in out.iter_mut().zip(step) {
                *o = o.wrapping_add(s.wrapping_mul(j));
            }
        }
    }

    /// Position of node `j` along a one-dimensional leaf.
    #[inline]
    pub fn position_1d(&self, j: u64, out: &mut [u128]) {
        let j = j as u128;
        for ((o, c), s) in out.iter_mut().zip(&self.corner).zip(&self.steps[0]) {
            *o = c.wrapping_add(s.wrapping_mul(j));
        }
    }
}

/// Centred difference of two torus fractions, in `[-1/2, 1/2)`.
#[inline]
pub fn centered_diff(a: u128, b: u128) -> f64 {
    (a.wrapping_sub(b) as i128) as f64 / TWO_POW_128
}

#[inline]
pub fn squared_distance(a: &[u128], b: &[u128]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = centered_diff(x, y);
            d * d
        })
        .sum()
}

/// Torus fraction of a coordinate in `[0, 1)`.
pub fn fraction_of_f64(x: f64) -> u128 {
    let v = f64_to_fixed(x.rem_euclid(1.0), 128);
    let modulus = BigInt::one() << 128usize;
    v.mod_floor(&modulus).to_u128().expect("reduced")
}

/// Torus fraction of `numerator / q`.
pub fn fraction_of_rational(numerator: u64, q: u64) -> u128 {
    let v = (BigInt::from(numerator) << 128usize) / BigInt::from(q);
    v.to_u128().expect("numerator < q")
}

pub fn fraction_to_f64(x: u128) -> f64 {
    (x >> 64) as f64 / 18_446_744_073_709_551_616.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_roundtrip() {
        for &x in &[0.0, 0.5, -0.25, 0.1, 1.0 / 3.0, -2.75, 123.456] {
            let v = f64_to_fixed(x, 200);
            assert_eq!(fixed_to_f64(&v, 200), x);
        }
    }

    #[test]
    fn cat_map_char_poly() {
        let p = characteristic_polynomial(&[vec![2, 1], vec![1, 1]]);
        assert_eq!(p, vec![BigInt::from(1), BigInt::from(-3), BigInt::from(1)]);
        let p3 = characteristic_polynomial(&[vec![0, 0, 1], vec![1, 0, -1], vec![0, 1, 3]]);
        // companion-like: λ³ - 3λ² + λ - 1
        assert_eq!(
            p3,
            vec![
                BigInt::from(-1),
                BigInt::from(1),
                BigInt::from(-3),
                BigInt::from(1)
            ]
        );
    }

    #[test]
    fn square_free_of_square() {
        // (λ² - 3λ + 1)²
        let p: Vec<BigInt> = [1, -6, 11, -6, 1]
            .iter()
            .map(|&c| BigInt::from(c))
            .collect();
        let sf = square_free_part(&p);
        let lead = sf.last().unwrap().clone();
        let normalized: Vec<BigInt> = sf.iter().map(|c| c / &lead).collect();
        assert_eq!(
            normalized,
            vec![BigInt::from(1), BigInt::from(-3), BigInt::from(1)]
        );
    }

    #[test]
    fn golden_root_is_refined() {
        let p = characteristic_polynomial(&[vec![2, 1], vec![1, 1]]);
        let root = refine_root(&p, 2.618, 300).unwrap();
        let golden_sq = (3.0 + 5f64.sqrt()) / 2.0;
        assert!((fixed_to_f64(&root, 300) - golden_sq).abs() < 1e-15);
        // r² - 3r + 1 vanishes to ~2^-290
        let r = BigRational::new(root, BigInt::one() << 300usize);
        let val = r.clone() * r.clone() - r * BigRational::from_integer(BigInt::from(3))
            + BigRational::one();
        let bound = BigRational::new(BigInt::one(), BigInt::one() << 290usize);
        assert!(val.abs() < bound);
    }

    #[test]
    fn wrapping_difference_is_centered() {
        let a = fraction_of_f64(0.9);
        let b = fraction_of_f64(0.1);
        assert!((centered_diff(a, b) + 0.2).abs() < 1e-15);
        assert!((centered_diff(b, a) - 0.2).abs() < 1e-15);
        assert_eq!(fraction_of_rational(1, 2), 1u128 << 127);
    }
}
