//! A finite Grassmann algebra on `2k` generators `ψ̄₁, ψ₁, …, ψ̄_k, ψ_k` with
//! Berezin integration, and brute-force checks of the Gaussian integral
//! (Wick) formulas for Grassmann and complex variables.
//!
//! Monomials are bitmasks over the generators in the canonical order
//! `ψ̄₁ < ψ₁ < ψ̄₂ < ψ₂ < …` (bit `2a` is `ψ̄_{a+1}`, bit `2a + 1` is
//! `ψ_{a+1}`); a coefficient multiplies the product of its generators taken
//! in that order.
//!
//! The Berezin measure `∏ dψ̄_a dψ_a` is normalised by `∫ dψ̄_a dψ_a ψ̄_a ψ_a = −1`,
//! the unique choice for which `∫ exp{−ψ*Bψ} = det B`.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use faer::{Mat, Side};
use num_complex::Complex;
use num_traits::{One, Zero};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{det_c, det_exact, inverse_c};
use crate::rng::{stream, tag};
use crate::{Error, Result, C64};

/// Largest generator-pair count accepted by [`exp_quadratic`].
pub const MAX_PAIRS: usize = 8;
/// Largest `k` accepted by [`wick_determinant_check`].
pub const MAX_WICK_PAIRS: usize = 6;

/// Coefficient ring of the algebra.
pub trait Coeff:
    Clone + PartialEq + Zero + One + Neg<Output = Self> + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self>
{
}

impl<T> Coeff for T where
    T: Clone + PartialEq + Zero + One + Neg<Output = T> + Add<Output = T> + Sub<Output = T> + Mul<Output = T>
{
}

/// Sparse element of the Grassmann algebra with `k` generator pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct GrassmannElement<T> {
    k: usize,
    coeffs: BTreeMap<u32, T>,
}

/// Sign of `m1 · m2` relative to the canonical ordering of `m1 | m2`, or
/// `None` if the monomials share a generator.
fn monomial_sign(m1: u32, m2: u32) -> Option<bool> {
    if m1 & m2 != 0 {
        return None;
    }
    // Each generator of m2 moves left past the generators of m1 above it.
    let mut swaps = 0u32;
    let mut rest = m2;
    while rest != 0 {
        let bit = rest.trailing_zeros();
        swaps += (m1 >> bit).count_ones();
        rest &= rest - 1;
    }
    Some(swaps % 2 == 0)
}

impl<T: Coeff> GrassmannElement<T> {
    pub fn zero(k: usize) -> Self {
        assert!(k <= 16, "at most 16 generator pairs");
        GrassmannElement { k, coeffs: BTreeMap::new() }
    }

    pub fn scalar(k: usize, c: T) -> Self {
        let mut x = Self::zero(k);
        x.insert(0, c);
        x
    }

    pub fn one(k: usize) -> Self {
        Self::scalar(k, T::one())
    }

    /// `ψ_{a+1}` (0-based `a`).
    pub fn psi(k: usize, a: usize) -> Self {
        assert!(a < k, "generator index out of range");
        let mut x = Self::zero(k);
        x.insert(1 << (2 * a + 1), T::one());
        x
    }

    /// `ψ̄_{a+1}` (0-based `a`).
    pub fn psi_bar(k: usize, a: usize) -> Self {
        assert!(a < k, "generator index out of range");
        let mut x = Self::zero(k);
        x.insert(1 << (2 * a), T::one());
        x
    }

    /// Element `c · g_{i₁} g_{i₂} ⋯` for generator bit indices in the given
    /// (not necessarily canonical) order.
    pub fn monomial(k: usize, generators: &[usize], c: T) -> Self {
        let mut x = Self::scalar(k, c);
        for &g in generators {
            assert!(g < 2 * k, "generator index out of range");
            let mut gen = Self::zero(k);
            gen.insert(1 << g, T::one());
            x = x.checked_mul(&gen).expect("same k");
        }
        x
    }

    fn insert(&mut self, mask: u32, c: T) {
        if c.is_zero() {
            self.coeffs.remove(&mask);
            return;
        }
        self.coeffs.insert(mask, c);
    }

    fn accumulate(&mut self, mask: u32, c: T) {
        let sum = match self.coeffs.get(&mask) {
            Some(prev) => prev.clone() + c,
            None => c,
        };
        self.insert(mask, sum);
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Coefficient of the canonically ordered monomial `mask`.
    pub fn coeff(&self, mask: u32) -> T {
        self.coeffs.get(&mask).cloned().unwrap_or_else(T::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (u32, &T)> {
        self.coeffs.iter().map(|(&m, c)| (m, c))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Parity if all monomials have the same degree parity.
    pub fn parity(&self) -> Option<bool> {
        let mut it = self.coeffs.keys().map(|m| m.count_ones() % 2 == 1);
        let first = it.next().unwrap_or(false);
        it.all(|p| p == first).then_some(first)
    }

    fn check_k(&self, other: &Self) -> Result<()> {
        if self.k == other.k {
            Ok(())
        } else {
            Err(Error::Dimension(format!("generator counts differ: {} vs {}", self.k, other.k)))
        }
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        self.check_k(other)?;
        let mut out = self.clone();
        for (&m, c) in &other.coeffs {
            out.accumulate(m, c.clone());
        }
        Ok(out)
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self> {
        self.check_k(other)?;
        let mut out = Self::zero(self.k);
        for (&m1, c1) in &self.coeffs {
            for (&m2, c2) in &other.coeffs {
                if let Some(positive) = monomial_sign(m1, m2) {
                    let c = c1.clone() * c2.clone();
                    out.accumulate(m1 | m2, if positive { c } else { -c });
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: &T) -> Self {
        let mut out = Self::zero(self.k);
        for (&m, x) in &self.coeffs {
            out.insert(m, x.clone() * c.clone());
        }
        out
    }
}

impl<T: Coeff> Add for &GrassmannElement<T> {
    type Output = GrassmannElement<T>;

    /// Panics if the generator counts differ; see [`GrassmannElement::checked_add`].
    fn add(self, rhs: Self) -> GrassmannElement<T> {
        self.checked_add(rhs).expect("mismatched generator counts")
    }
}

impl<T: Coeff> Sub for &GrassmannElement<T> {
    type Output = GrassmannElement<T>;

    fn sub(self, rhs: Self) -> GrassmannElement<T> {
        self.checked_add(&rhs.scale(&-T::one())).expect("mismatched generator counts")
    }
}

impl<T: Coeff> Mul for &GrassmannElement<T> {
    type Output = GrassmannElement<T>;

    /// Panics if the generator counts differ; see [`GrassmannElement::checked_mul`].
    fn mul(self, rhs: Self) -> GrassmannElement<T> {
        self.checked_mul(rhs).expect("mismatched generator counts")
    }
}

/// `exp{−ψ*Bψ} = ∏_{a,b} (1 − B_ab ψ̄_a ψ_b)`: the factors are even,
/// commuting and square to zero, so the product is exact over any ring.
pub fn exp_quadratic<T: Coeff>(b: &[Vec<T>]) -> Result<GrassmannElement<T>> {
    let k = b.len();
    if k > MAX_PAIRS {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds {MAX_PAIRS} generator pairs")));
    }
    if b.iter().any(|r| r.len() != k) {
        return Err(Error::Dimension("B must be square".into()));
    }
    let mut out = GrassmannElement::<T>::one(k);
    for (a, row) in b.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            if v.is_zero() {
                continue;
            }
            let mask = (1u32 << (2 * a)) | (1u32 << (2 * c + 1));
            let sign = if a <= c { -T::one() } else { T::one() };
            let mut step = out.clone();
            for (&m, x) in &out.coeffs {
                if let Some(positive) = monomial_sign(m, mask) {
                    let t = x.clone() * v.clone() * sign.clone();
                    step.accumulate(m | mask, if positive { t } else { -t });
                }
            }
            out = step;
        }
    }
    Ok(out)
}

/// `∫ ∏_a dψ̄_a dψ_a x`: the top coefficient times `(−1)^k`.
pub fn berezin_integrate<T: Coeff>(x: &GrassmannElement<T>) -> T {
    let top = if x.k == 0 { 0 } else { (1u32 << (2 * x.k)) - 1 };
    let c = x.coeff(top);
    if x.k % 2 == 1 {
        -c
    } else {
        c
    }
}

/// Exact Gaussian-integer coefficients.
pub type GaussInt = Complex<i64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WickDeterminantCheck {
    pub lhs: GaussInt,
    /// `(−1)^{ℓ + Σ(i_α + j_α)} det B^{(I|J)}` with 1-based indices.
    pub rhs: GaussInt,
    /// Sign of the permutations sorting `I` and `J` (`+1` when both lists are
    /// increasing).
    pub order_sign: i64,
    /// `lhs == order_sign · rhs`.
    pub equal: bool,
    /// `|lhs| == |rhs|`.
    pub magnitudes_equal: bool,
    /// An index repeats within `I` or within `J`; `lhs` is then 0.
    pub degenerate: bool,
}

fn permutation_sign(list: &[usize]) -> i64 {
    let mut inversions = 0;
    for i in 0..list.len() {
        for j in i + 1..list.len() {
            if list[i] > list[j] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        1
    } else {
        -1
    }
}

fn has_repeat(list: &[usize]) -> bool {
    let mut seen = 0u64;
    list.iter().any(|&i| {
        let hit = seen & (1 << i) != 0;
        seen |= 1 << i;
        hit
    })
}

/// Brute-force `∫ exp{−ψ*Bψ} ∏_b ψ̄_{i_b} ψ_{j_b}` against the signed minor
/// determinant. Indices are 0-based; the sign uses the 1-based convention,
/// which has the same parity.
pub fn wick_determinant_check(b: &[Vec<GaussInt>], i: &[usize], j: &[usize]) -> Result<WickDeterminantCheck> {
    let k = b.len();
    if k > MAX_WICK_PAIRS {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds {MAX_WICK_PAIRS}")));
    }
    if i.len() != j.len() || i.len() > k {
        return Err(Error::InvalidParameter("index lists must have equal length ℓ ≤ k".into()));
    }
    if i.iter().chain(j).any(|&x| x >= k) {
        return Err(Error::InvalidParameter("index out of range".into()));
    }
    let l = i.len();
    let mut insert = Vec::with_capacity(2 * l);
    for (&ib, &jb) in i.iter().zip(j) {
        insert.push(2 * ib);
        insert.push(2 * jb + 1);
    }
    let observable = GrassmannElement::monomial(k, &insert, GaussInt::one());
    let lhs = berezin_integrate(&(&exp_quadratic(b)? * &observable));
    let degenerate = has_repeat(i) || has_repeat(j);
    let (rhs, order_sign) = if degenerate {
        (GaussInt::zero(), 1)
    } else {
        let keep = |drop: &[usize]| (0..k).filter(|x| !drop.contains(x)).collect::<Vec<_>>();
        let (rows, cols) = (keep(i), keep(j));
        let minor: Vec<Vec<GaussInt>> = rows.iter().map(|&r| cols.iter().map(|&c| b[r][c]).collect()).collect();
        let parity = l + i.iter().chain(j).map(|&x| x + 1).sum::<usize>();
        let det = det_exact(&minor);
        (if parity % 2 == 0 { det } else { -det }, permutation_sign(i) * permutation_sign(j))
    };
    let signed = if order_sign == 1 { rhs } else { -rhs };
    Ok(WickDeterminantCheck {
        lhs,
        rhs,
        order_sign,
        equal: lhs == signed,
        magnitudes_equal: lhs == rhs || lhs == -rhs,
        degenerate,
    })
}

/// Largest `k` and `ℓ` accepted by [`complex_wick_check`].
pub const MAX_COMPLEX_WICK: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexWickCheck {
    pub mc_estimate: C64,
    pub analytic: C64,
    /// Standard errors of the real and imaginary parts of the estimate.
    pub std_err: (f64, f64),
    /// `|mc − analytic| / √(se_re² + se_im²)`.
    pub zscore: f64,
    pub samples: usize,
}

/// `(1/det A) Σ_σ ∏_b (A^{-1})_{j_b, i_σ(b)}`.
pub fn complex_wick_analytic(a: &Mat<C64>, i: &[usize], j: &[usize]) -> Result<C64> {
    let inv = inverse_c(a.as_ref())?;
    let det = det_c(a.as_ref());
    let l = i.len();
    let mut perm: Vec<usize> = (0..l).collect();
    let mut total = C64::new(0.0, 0.0);
    loop {
        total += (0..l).fold(C64::new(1.0, 0.0), |acc, b| acc * inv[(j[b], i[perm[b]])]);
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(total / det)
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Monte Carlo estimate of
/// `∫ ∏ d Re φ_a d Im φ_a / π · exp{−φ*Aφ} ∏_b φ̄_{i_b} φ_{j_b}`.
///
/// Samples `φ` from the normalised Gaussian with covariance `H^{-1}`,
/// `H = (A + A*)/2`, and averages `exp{−φ*(A − H)φ} ∏ φ̄_{i_b} φ_{j_b} / det H`;
/// the exponential has modulus one.
pub fn complex_wick_check(a: &Mat<C64>, i: &[usize], j: &[usize], samples: usize, seed: u64) -> Result<ComplexWickCheck> {
    let k = a.nrows();
    if a.ncols() != k || k == 0 || k > MAX_COMPLEX_WICK {
        return Err(Error::InvalidParameter(format!("A must be square with 1 ≤ k ≤ {MAX_COMPLEX_WICK}")));
    }
    if i.len() != j.len() || i.len() > MAX_COMPLEX_WICK || i.iter().chain(j).any(|&x| x >= k) {
        return Err(Error::InvalidParameter("index lists must have equal length ℓ ≤ 2 within range".into()));
    }
    if samples < 2 {
        return Err(Error::InvalidParameter("at least two samples are required".into()));
    }
    let herm = Mat::from_fn(k, k, |r, c| (a[(r, c)] + a[(c, r)].conj()) * 0.5);
    let llt = herm
        .llt(Side::Lower)
        .map_err(|_| Error::InvalidParameter("Re A is not positive definite".into()))?;
    // φ = L^{-*} ξ has covariance (L L*)^{-1} = H^{-1} for E ξξ* = I.
    let l_inv_adj = inverse_c(llt.L())?.adjoint().to_owned();
    let anti = Mat::from_fn(k, k, |r, c| a[(r, c)] - herm[(r, c)]);
    let det_h = det_c(herm.as_ref()).re;
    let analytic = complex_wick_analytic(a, i, j)?;

    let mut rng = stream(seed, &[tag::SAMPLE]);
    let (mut sum_re, mut sum_im, mut sq_re, mut sq_im) = (0.0, 0.0, 0.0, 0.0);
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let mut xi = vec![C64::new(0.0, 0.0); k];
    let mut phi = vec![C64::new(0.0, 0.0); k];
    for _ in 0..samples {
        for x in xi.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *x = C64::new(re * half, im * half);
        }
        for r in 0..k {
            phi[r] = (0..k).fold(C64::new(0.0, 0.0), |s, c| s + l_inv_adj[(r, c)] * xi[c]);
        }
        let mut quad = C64::new(0.0, 0.0);
        for r in 0..k {
            for c in 0..k {
                quad += phi[r].conj() * anti[(r, c)] * phi[c];
            }
        }
        let obs = i.iter().zip(j).fold(C64::new(1.0, 0.0), |s, (&ib, &jb)| s * phi[ib].conj() * phi[jb]);
        let v = (-quad).exp() * obs / det_h;
        sum_re += v.re;
        sum_im += v.im;
        sq_re += v.re * v.re;
        sq_im += v.im * v.im;
    }
    let n = samples as f64;
    let mean = C64::new(sum_re / n, sum_im / n);
    let se = |sum: f64, sq: f64| ((sq - sum * sum / n) / (n - 1.0) / n).max(0.0).sqrt();
    let std_err = (se(sum_re, sq_re), se(sum_im, sq_im));
    let scale = std_err.0.hypot(std_err.1);
    let dev = (mean - analytic).norm();
    let zscore = if scale > 0.0 { dev / scale } else if dev == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(ComplexWickCheck { mc_estimate: mean, analytic, std_err, zscore, samples })
}

/// Random `k × k` Gaussian-integer matrix with parts in `−r..=r`.
pub fn random_integer_matrix(k: usize, r: i64, rng: &mut impl Rng) -> Vec<Vec<GaussInt>> {
    (0..k)
        .map(|_| (0..k).map(|_| GaussInt::new(rng.random_range(-r..=r), rng.random_range(-r..=r))).collect())
        .collect()
}
