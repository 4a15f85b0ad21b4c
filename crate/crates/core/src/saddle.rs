//! Saddle-point data of the supersymmetric representation and numerical
//! checks of the exactly stated identities and lower bounds.
//!
//! Notation: `a_± = (iE ± √(4 − E²))/2`, `𝕜(a) = a²/2 − iEa − log a`,
//! `ℓ(a) = −¼ Σ_jk s_jk (a_j − a_k)² + Σ_j 𝕜(a_j)`. A [`ContourPoint`] carries
//! `b₁ ∈ Γ^W`, `b₂ ∈ Γ̄^W` (`Γ = a₊ℝ₊`, `Γ̄ = −a₋ℝ₊`), unimodular `x₁, x₂`,
//! and the `T`/`V` coordinates `(t_j, σ_j)`, `(v_j, θ_j)` for `j = 2..W`
//! (`T₁ = V₁ = I`). All logarithms use the principal branch.

use faer::Mat;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::{Deserialize, Serialize};

use crate::linalg::{delete_rows_cols, det, det_c, sym_eigenvalues};
use crate::profile::VarianceProfile;
use crate::rng::{stream, tag, StreamRng};
use crate::{par_map_trials, Error, Result, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Smallest modulus used for sampled contour radii.
pub const MIN_RADIUS: f64 = 1e-6;
/// Tolerance for the nonnegativity assertions of the lower bounds.
pub const NONNEG_TOL: f64 = 1e-12;
/// Samples per RNG batch in the sweeps.
const BATCH: usize = 2048;

/// The four diagonal `2 × 2` saddle matrices, stored as their diagonals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diag2(pub C64, pub C64);

/// Saddle parameters at energy `E` for one profile.
#[derive(Debug, Clone)]
pub struct SaddleContext {
    pub e: f64,
    pub kappa: f64,
    pub a_plus: C64,
    pub a_minus: C64,
    /// `D_± = diag(a₊, a₋)`.
    pub d_pm: Diag2,
    /// `D_∓ = diag(a₋, a₊)`.
    pub d_mp: Diag2,
    /// `D₊ = diag(a₊, a₊)`.
    pub d_p: Diag2,
    /// `D₋ = diag(a₋, a₋)`.
    pub d_m: Diag2,
    /// `𝔸₊ = (1 + a₊²) I + a₊² S`.
    pub big_a_plus: Mat<C64>,
    /// `𝔸₋ = (1 + a₋²) I + a₋² S`.
    pub big_a_minus: Mat<C64>,
    pub profile: VarianceProfile,
}

/// `(a₊, a₋)` at energy `E`, `|E| < 2`.
pub fn saddle_parameters(e: f64) -> (C64, C64) {
    let root = (4.0 - e * e).sqrt();
    (C64::new(root / 2.0, e / 2.0), C64::new(-root / 2.0, e / 2.0))
}

pub fn make_context(e: f64, kappa: f64, p: &VarianceProfile) -> Result<SaddleContext> {
    let bulk = std::f64::consts::SQRT_2 - kappa;
    if !(kappa > 0.0 && bulk > 0.0) {
        return Err(Error::InvalidParameter(format!("κ = {kappa} must lie in (0, √2)")));
    }
    if !(e.abs() <= bulk) {
        return Err(Error::InvalidParameter(format!("|E| = {} exceeds √2 − κ = {bulk}", e.abs())));
    }
    let (a_plus, a_minus) = saddle_parameters(e);
    let w = p.w();
    let big = |a: C64| {
        let a2 = a * a;
        Mat::from_fn(w, w, |j, k| {
            let diag = if j == k { C64::new(1.0, 0.0) + a2 } else { ZERO };
            diag + a2 * p.s(j, k)
        })
    };
    Ok(SaddleContext {
        e,
        kappa,
        a_plus,
        a_minus,
        d_pm: Diag2(a_plus, a_minus),
        d_mp: Diag2(a_minus, a_plus),
        d_p: Diag2(a_plus, a_plus),
        d_m: Diag2(a_minus, a_minus),
        big_a_plus: big(a_plus),
        big_a_minus: big(a_minus),
        profile: p.clone(),
    })
}

/// `𝕜(a) = a²/2 − iEa − log a`.
pub fn kk(a: C64, e: f64) -> C64 {
    a * a * 0.5 - I * e * a - a.ln()
}

/// `𝕜′(a) = a − iE − 1/a`.
pub fn kk_prime(a: C64, e: f64) -> C64 {
    a - I * e - a.inv()
}

/// `ℓ(a) = −¼ Σ_jk s_jk (a_j − a_k)² + Σ_j 𝕜(a_j)`.
pub fn ell(a: &[C64], p: &VarianceProfile, e: f64) -> C64 {
    let w = p.w();
    assert_eq!(a.len(), w, "vector length must equal W");
    let mut coupling = ZERO;
    for j in 0..w {
        for k in 0..w {
            let d = a[j] - a[k];
            coupling += d * d * p.s(j, k);
        }
    }
    coupling * -0.25 + a.iter().map(|&x| kk(x, e)).sum::<C64>()
}

/// `∂ℓ/∂a_m = −Σ_k s_mk (a_m − a_k) + 𝕜′(a_m)`.
pub fn ell_gradient(a: &[C64], p: &VarianceProfile, e: f64) -> Vec<C64> {
    let w = p.w();
    (0..w)
        .map(|m| {
            let lap: C64 = (0..w).map(|k| (a[m] - a[k]) * p.s(m, k)).sum();
            kk_prime(a[m], e) - lap
        })
        .collect()
}

/// Central-difference gradient of `ℓ` with one Richardson step
/// (steps `h` and `h/2`).
pub fn ell_gradient_fd(a: &[C64], p: &VarianceProfile, e: f64, h: f64) -> Vec<C64> {
    let central = |m: usize, step: f64| {
        let mut up = a.to_vec();
        let mut down = a.to_vec();
        up[m] += step;
        down[m] -= step;
        (ell(&up, p, e) - ell(&down, p, e)) / (2.0 * step)
    };
    (0..a.len())
        .map(|m| {
            let d1 = central(m, h);
            let d2 = central(m, h / 2.0);
            (d2 * 4.0 - d1) / 3.0
        })
        .collect()
}

/// Point of the integration domain. Vectors `t, sigma, v, theta` have
/// length `W − 1` and describe `T_j`, `V_j` for `j = 2..W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourPoint {
    pub b1: Vec<C64>,
    pub b2: Vec<C64>,
    pub x1: Vec<C64>,
    pub x2: Vec<C64>,
    pub t: Vec<f64>,
    pub sigma: Vec<f64>,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
}

/// Which saddle the `X̂` variables sit at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SaddleType {
    /// `X̂_j = D_±`, `V = I`.
    Pm,
    /// `X̂_j = D₊`.
    Plus,
    /// `X̂_j = D₋`.
    Minus,
}

impl ContourPoint {
    pub fn w(&self) -> usize {
        self.b1.len()
    }

    /// `(B̂, T) = (D_±, I)` and `X̂ = D` of the given type with `V = I`.
    pub fn saddle(ctx: &SaddleContext, kind: SaddleType) -> Self {
        let w = ctx.profile.w();
        let diag = match kind {
            SaddleType::Pm => ctx.d_pm,
            SaddleType::Plus => ctx.d_p,
            SaddleType::Minus => ctx.d_m,
        };
        ContourPoint {
            b1: vec![ctx.a_plus; w],
            b2: vec![-ctx.a_minus; w],
            x1: vec![diag.0; w],
            x2: vec![diag.1; w],
            t: vec![0.0; w - 1],
            sigma: vec![0.0; w - 1],
            v: vec![0.0; w - 1],
            theta: vec![0.0; w - 1],
        }
    }

    /// `r_{j,a} = |b_{j,a}|`.
    pub fn radii(&self) -> impl Iterator<Item = f64> + '_ {
        self.b1.iter().chain(&self.b2).map(|b| b.norm())
    }

    fn t_of(&self, j: usize) -> (f64, f64, f64) {
        if j == 0 {
            (1.0, 0.0, 0.0)
        } else {
            let t = self.t[j - 1];
            ((1.0 + t * t).sqrt(), t, self.sigma[j - 1])
        }
    }

    fn v_of(&self, j: usize) -> (f64, f64, f64) {
        if j == 0 {
            (1.0, 0.0, 0.0)
        } else {
            let v = self.v[j - 1];
            ((1.0 - v * v).max(0.0).sqrt(), v, self.theta[j - 1])
        }
    }

    /// `|(T_k T_j^{-1})_{12}|² = |s_j t_k e^{iσ_k} − s_k t_j e^{iσ_j}|²`.
    pub fn t_coupling(&self, j: usize, k: usize) -> f64 {
        let (sj, tj, gj) = self.t_of(j);
        let (sk, tk, gk) = self.t_of(k);
        (C64::from_polar(sj * tk, gk) - C64::from_polar(sk * tj, gj)).norm_sqr()
    }

    /// `|(V_k V_j^*)_{12}|² = |u_j v_k e^{iθ_k} − u_k v_j e^{iθ_j}|²`.
    pub fn v_coupling(&self, j: usize, k: usize) -> f64 {
        let (uj, vj, hj) = self.v_of(j);
        let (uk, vk, hk) = self.v_of(k);
        (C64::from_polar(uj * vk, hk) - C64::from_polar(uk * vj, hj)).norm_sqr()
    }
}

/// `ℓ_S(B̂, T) = ½ Σ_jk s_jk |(T_k T_j^{-1})_{12}|² (b_{j,1} + b_{j,2})(b_{k,1} + b_{k,2})`.
pub fn ell_s_b(pt: &ContourPoint, p: &VarianceProfile) -> C64 {
    let w = p.w();
    let mut sum = ZERO;
    for j in 0..w {
        for k in 0..w {
            if j != k && p.s(j, k) != 0.0 {
                sum += (pt.b1[j] + pt.b2[j]) * (pt.b1[k] + pt.b2[k]) * (p.s(j, k) * pt.t_coupling(j, k));
            }
        }
    }
    sum * 0.5
}

/// `ℓ_S(X̂, V) = ½ Σ_jk s_jk |(V_k V_j^*)_{12}|² (x_{j,1} − x_{j,2})(x_{k,1} − x_{k,2})`.
pub fn ell_s_x(pt: &ContourPoint, p: &VarianceProfile) -> C64 {
    let w = p.w();
    let mut sum = ZERO;
    for j in 0..w {
        for k in 0..w {
            if j != k && p.s(j, k) != 0.0 {
                sum += (pt.x1[j] - pt.x2[j]) * (pt.x1[k] - pt.x2[k]) * (p.s(j, k) * pt.v_coupling(j, k));
            }
        }
    }
    sum * 0.5
}

/// `L(B̂, T) = ℓ(b₁) + ℓ(−b₂) + ℓ_S(B̂, T)`.
pub fn l_functional(pt: &ContourPoint, ctx: &SaddleContext) -> C64 {
    let neg_b2: Vec<C64> = pt.b2.iter().map(|&b| -b).collect();
    ell(&pt.b1, &ctx.profile, ctx.e) + ell(&neg_b2, &ctx.profile, ctx.e) + ell_s_b(pt, &ctx.profile)
}

/// `K(X̂, V) = −ℓ(x₁) − ℓ(x₂) + ℓ_S(X̂, V)`.
pub fn k_functional(pt: &ContourPoint, ctx: &SaddleContext) -> C64 {
    -ell(&pt.x1, &ctx.profile, ctx.e) - ell(&pt.x2, &ctx.profile, ctx.e) + ell_s_x(pt, &ctx.profile)
}

/// Residuals of the exact saddle identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub e: f64,
    #[serde(rename = "W")]
    pub w: usize,
    /// `|a₊ a₋ + 1|`.
    pub product: f64,
    /// `max(||a₊| − 1|, ||a₋| − 1|)`.
    pub unimodular: f64,
    /// `max |𝕜′(a_±)|`.
    pub kk_stationarity: f64,
    /// `max |∇ℓ|` at the constant vectors `a₊` and `a₋`.
    pub ell_stationarity: f64,
    /// `|K(D_±, I) + L(D_±, I)|`.
    pub k_plus_l: f64,
    /// `max |ℓ_S|` over `(D_±, I)` for `B̂` and the three `X̂` saddles.
    pub ell_s: f64,
    /// `max(|Re K(D₊) − Re K(D_±)|, |Re K(D₋) − Re K(D_±)|)`.
    pub re_k: f64,
    /// `max_jk |𝔸₋ − conj(𝔸₊)|`.
    pub conjugate_a: f64,
    pub max_residual: f64,
}

impl IdentityReport {
    pub fn pass(&self, tol: f64) -> bool {
        self.max_residual <= tol
    }
}

pub fn saddle_identities(ctx: &SaddleContext) -> IdentityReport {
    let p = &ctx.profile;
    let w = p.w();
    let product = (ctx.a_plus * ctx.a_minus + 1.0).norm();
    let unimodular = (ctx.a_plus.norm() - 1.0).abs().max((ctx.a_minus.norm() - 1.0).abs());
    let kk_stationarity = kk_prime(ctx.a_plus, ctx.e).norm().max(kk_prime(ctx.a_minus, ctx.e).norm());
    let ell_stationarity = [ctx.a_plus, ctx.a_minus]
        .iter()
        .flat_map(|&a| ell_gradient(&vec![a; w], p, ctx.e))
        .fold(0.0f64, |m, g| m.max(g.norm()));
    let pm = ContourPoint::saddle(ctx, SaddleType::Pm);
    let plus = ContourPoint::saddle(ctx, SaddleType::Plus);
    let minus = ContourPoint::saddle(ctx, SaddleType::Minus);
    let k_plus_l = (k_functional(&pm, ctx) + l_functional(&pm, ctx)).norm();
    let ell_s = [ell_s_b(&pm, p), ell_s_x(&pm, p), ell_s_x(&plus, p), ell_s_x(&minus, p)]
        .iter()
        .fold(0.0f64, |m, x| m.max(x.norm()));
    let k_pm = k_functional(&pm, ctx).re;
    let re_k = (k_functional(&plus, ctx).re - k_pm).abs().max((k_functional(&minus, ctx).re - k_pm).abs());
    let mut conjugate_a = 0.0f64;
    for j in 0..w {
        for k in 0..w {
            conjugate_a = conjugate_a.max((ctx.big_a_minus[(j, k)] - ctx.big_a_plus[(j, k)].conj()).norm());
        }
    }
    let max_residual = [product, unimodular, kk_stationarity, ell_stationarity, k_plus_l, ell_s, re_k, conjugate_a]
        .into_iter()
        .fold(0.0f64, f64::max);
    IdentityReport {
        e: ctx.e,
        w,
        product,
        unimodular,
        kk_stationarity,
        ell_stationarity,
        k_plus_l,
        ell_s,
        re_k,
        conjugate_a,
        max_residual,
    }
}

/// Summary of a lower-bound sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub lemma: String,
    pub samples: usize,
    /// Smallest value of the functional that must be nonnegative.
    pub min_value: f64,
    /// Samples where it fell below `−NONNEG_TOL`.
    pub violations: usize,
    /// Smallest ratio `value / distance` over samples with distance `> 1e−8`.
    pub min_ratio: f64,
    /// Same over the far set, distance `> 0.1`.
    pub min_far_ratio: f64,
    pub far_samples: usize,
    /// Value at the saddle point(s), which must vanish.
    pub saddle_value: f64,
}

impl MarginReport {
    pub fn pass(&self) -> bool {
        self.violations == 0 && self.min_far_ratio > 0.0 && self.saddle_value.abs() <= NONNEG_TOL
    }
}

/// Radius drawn from an even mixture of `Uniform(0.2, 3)` and `Gamma(2, 1)`.
fn sample_radius(rng: &mut StreamRng) -> f64 {
    if rng.random::<bool>() {
        rng.random_range(0.2..3.0)
    } else {
        let g: f64 = Gamma::new(2.0, 1.0).expect("valid gamma").sample(rng);
        g.max(MIN_RADIUS)
    }
}

fn sample_phase(rng: &mut StreamRng) -> f64 {
    rng.random_range(0.0..std::f64::consts::TAU)
}

/// Random point with `b₁ ∈ Γ^W`, `b₂ ∈ Γ̄^W`, `x` uniform on the circle,
/// `t ~ Exp(1)` (or `Uniform[0, 1]` when `t_unit`), `v ~ Uniform[0, 1]`.
pub fn sample_contour_point(ctx: &SaddleContext, rng: &mut StreamRng, t_unit: bool) -> ContourPoint {
    let w = ctx.profile.w();
    let b1 = (0..w).map(|_| ctx.a_plus * sample_radius(rng)).collect();
    let b2 = (0..w).map(|_| -ctx.a_minus * sample_radius(rng)).collect();
    let x1 = (0..w).map(|_| C64::from_polar(1.0, sample_phase(rng))).collect();
    let x2 = (0..w).map(|_| C64::from_polar(1.0, sample_phase(rng))).collect();
    let t = (0..w - 1)
        .map(|_| if t_unit { rng.random::<f64>() } else { Exp1.sample(rng) })
        .collect();
    let sigma = (0..w - 1).map(|_| sample_phase(rng)).collect();
    let v = (0..w - 1).map(|_| rng.random::<f64>()).collect();
    let theta = (0..w - 1).map(|_| sample_phase(rng)).collect();
    ContourPoint { b1, b2, x1, x2, t, sigma, v, theta }
}

/// `Re L̊ = Re L − Re L(D_±, I)`.
pub fn re_l_ring(pt: &ContourPoint, ctx: &SaddleContext) -> f64 {
    let base = ContourPoint::saddle(ctx, SaddleType::Pm);
    (l_functional(pt, ctx) - l_functional(&base, ctx)).re
}

/// `Re K̊ = Re K − Re K(D_±, I)`.
pub fn re_k_ring(pt: &ContourPoint, ctx: &SaddleContext) -> f64 {
    let base = ContourPoint::saddle(ctx, SaddleType::Pm);
    (k_functional(pt, ctx) - k_functional(&base, ctx)).re
}

/// `S^v` with `𝔰^v_jk = 𝔰_jk |(V_k V_j^*)_{12}|²`.
pub fn s_v(pt: &ContourPoint, p: &VarianceProfile) -> Mat<f64> {
    let w = p.w();
    Mat::from_fn(w, w, |j, k| if j == k { 0.0 } else { p.s(j, k) * pt.v_coupling(j, k) })
}

/// `𝕊ᵛ = S ⊕ S + [[−Sᵛ, Sᵛ], [Sᵛ, −Sᵛ]]`.
pub fn sv_matrix(pt: &ContourPoint, p: &VarianceProfile) -> Mat<f64> {
    let w = p.w();
    let sv = s_v(pt, p);
    Mat::from_fn(2 * w, 2 * w, |r, c| {
        let (bj, j) = (r / w, r % w);
        let (bk, k) = (c / w, c % w);
        let base = if bj == bk { p.s(j, k) } else { 0.0 };
        let sign = if bj == bk { -1.0 } else { 1.0 };
        base + sign * sv[(j, k)]
    })
}

/// `¼ Σ_jk (𝕊ᵛ)_jk (cos ϑ_j − cos ϑ_k)²` and `Σ_j (sin ϑ_j − E/2)²` for
/// `ϑ = (arg x₁, arg x₂)`.
pub fn k_bound_terms(pt: &ContourPoint, ctx: &SaddleContext) -> (f64, f64) {
    let sv = sv_matrix(pt, &ctx.profile);
    let xs: Vec<C64> = pt.x1.iter().chain(&pt.x2).copied().collect();
    let n = xs.len();
    let mut quad = 0.0;
    for j in 0..n {
        for k in 0..n {
            let d = xs[j].arg().cos() - xs[k].arg().cos();
            quad += sv[(j, k)] * d * d;
        }
    }
    let dist = xs.iter().map(|x| (x.arg().sin() - ctx.e / 2.0).powi(2)).sum();
    (0.25 * quad, dist)
}

struct Accumulator {
    samples: usize,
    min_value: f64,
    violations: usize,
    min_ratio: f64,
    min_far_ratio: f64,
    far_samples: usize,
}

impl Accumulator {
    fn new() -> Self {
        Accumulator {
            samples: 0,
            min_value: f64::INFINITY,
            violations: 0,
            min_ratio: f64::INFINITY,
            min_far_ratio: f64::INFINITY,
            far_samples: 0,
        }
    }

    fn push(&mut self, value: f64, dist: f64) {
        self.samples += 1;
        self.min_value = self.min_value.min(value);
        if value < -NONNEG_TOL {
            self.violations += 1;
        }
        if dist > 1e-8 {
            self.min_ratio = self.min_ratio.min(value / dist);
        }
        if dist > 0.1 {
            self.far_samples += 1;
            self.min_far_ratio = self.min_far_ratio.min(value / dist);
        }
    }

    fn merge(mut self, o: Accumulator) -> Self {
        self.samples += o.samples;
        self.min_value = self.min_value.min(o.min_value);
        self.violations += o.violations;
        self.min_ratio = self.min_ratio.min(o.min_ratio);
        self.min_far_ratio = self.min_far_ratio.min(o.min_far_ratio);
        self.far_samples += o.far_samples;
        self
    }
}

fn sweep<F>(n_samples: usize, seed: u64, lemma_tag: u64, parallel: usize, f: F) -> Accumulator
where
    F: Fn(&mut StreamRng, &mut Accumulator) + Sync + Send,
{
    let batches = n_samples.div_ceil(BATCH);
    par_map_trials(batches, parallel, |b| {
        let mut rng = stream(seed, &[tag::SAMPLE, lemma_tag, b as u64]);
        let mut acc = Accumulator::new();
        let count = BATCH.min(n_samples - b * BATCH);
        for _ in 0..count {
            f(&mut rng, &mut acc);
        }
        acc
    })
    .into_iter()
    .fold(Accumulator::new(), Accumulator::merge)
}

/// Sweep of `Re L̊(B̂, T)` against `Σ_{a,j} (r_{j,a} − 1)²` on `Γ^W × Γ̄^W`.
pub fn verify_l_lower_bound(ctx: &SaddleContext, n_samples: usize, seed: u64, parallel: usize) -> MarginReport {
    let acc = sweep(n_samples, seed, 1, parallel, |rng, acc| {
        let pt = sample_contour_point(ctx, rng, false);
        let dist = pt.radii().map(|r| (r - 1.0).powi(2)).sum();
        acc.push(re_l_ring(&pt, ctx), dist);
    });
    MarginReport {
        lemma: "L lower bound".into(),
        samples: acc.samples,
        min_value: acc.min_value,
        violations: acc.violations,
        min_ratio: acc.min_ratio,
        min_far_ratio: acc.min_far_ratio,
        far_samples: acc.far_samples,
        saddle_value: re_l_ring(&ContourPoint::saddle(ctx, SaddleType::Pm), ctx),
    }
}

/// Type I saddle point: `X̂_j ∈ {D_±, D_∓}` with `v_j = 0` when `X̂_j = X̂₁`
/// and `v_j = 1` otherwise.
pub fn type_one_point(ctx: &SaddleContext, flips: &[bool], theta: &[f64]) -> ContourPoint {
    let w = ctx.profile.w();
    let mut pt = ContourPoint::saddle(ctx, SaddleType::Pm);
    for j in 0..w {
        let flip = j > 0 && flips[j - 1];
        let d = if flip { ctx.d_mp } else { ctx.d_pm };
        pt.x1[j] = d.0;
        pt.x2[j] = d.1;
        if j > 0 {
            pt.v[j - 1] = if flip { 1.0 } else { 0.0 };
            pt.theta[j - 1] = theta[j - 1];
        }
    }
    pt
}

/// Sweep of `Re K̊ − ¼ Σ 𝕊ᵛ (cos ϑ_j − cos ϑ_k)²` against
/// `Σ (sin ϑ_j − E/2)²`, with `Re K̊ ≥ 0` asserted separately; the reported
/// `min_far_ratio` is the fitted constant `c`. The saddle value is the
/// largest `|Re K̊|` over random Type I, II and III points.
pub fn verify_k_lower_bound(ctx: &SaddleContext, n_samples: usize, seed: u64, parallel: usize) -> MarginReport {
    let nonneg = sweep(n_samples, seed, 2, parallel, |rng, acc| {
        let pt = sample_contour_point(ctx, rng, false);
        acc.push(re_k_ring(&pt, ctx), 0.0);
    });
    let acc = sweep(n_samples, seed, 3, parallel, |rng, acc| {
        let pt = sample_contour_point(ctx, rng, false);
        let (quad, dist) = k_bound_terms(&pt, ctx);
        acc.push(re_k_ring(&pt, ctx) - quad, dist);
    });
    let mut rng = stream(seed, &[tag::SAMPLE, 4]);
    let w = ctx.profile.w();
    let mut saddle_value = 0.0f64;
    for _ in 0..64 {
        let flips: Vec<bool> = (1..w).map(|_| rng.random()).collect();
        let theta: Vec<f64> = (1..w).map(|_| sample_phase(&mut rng)).collect();
        saddle_value = saddle_value.max(re_k_ring(&type_one_point(ctx, &flips, &theta), ctx).abs());
        for kind in [SaddleType::Plus, SaddleType::Minus] {
            let mut pt = ContourPoint::saddle(ctx, kind);
            for j in 0..w - 1 {
                pt.v[j] = rng.random();
                pt.theta[j] = sample_phase(&mut rng);
            }
            saddle_value = saddle_value.max(re_k_ring(&pt, ctx).abs());
        }
    }
    MarginReport {
        lemma: "K lower bound".into(),
        samples: acc.samples,
        min_value: nonneg.min_value.min(acc.min_value),
        violations: nonneg.violations + acc.violations,
        min_ratio: acc.min_ratio,
        min_far_ratio: acc.min_far_ratio,
        far_samples: acc.far_samples,
        saddle_value,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvReport {
    pub samples: usize,
    pub c0: f64,
    /// `min λ_min(I + 𝕊ᵛ)` over the sampled `V`.
    pub min_eigenvalue: f64,
    /// `max |row sum of 𝕊ᵛ|`.
    pub max_row_sum: f64,
    pub pass: bool,
}

/// `λ_min(I + 𝕊ᵛ) ≥ c₀ − 1e−10` over random `V` (`v_j ~ U[0, 1]`, uniform phases).
pub fn verify_sv_positivity(p: &VarianceProfile, n_samples: usize, seed: u64) -> Result<SvReport> {
    let w = p.w();
    let mut rng = stream(seed, &[tag::SAMPLE, 5]);
    let mut min_eigenvalue = f64::INFINITY;
    let mut max_row_sum = 0.0f64;
    for _ in 0..n_samples {
        let mut pt = ContourPoint {
            b1: vec![ZERO; w],
            b2: vec![ZERO; w],
            x1: vec![ZERO; w],
            x2: vec![ZERO; w],
            t: vec![0.0; w - 1],
            sigma: vec![0.0; w - 1],
            v: vec![0.0; w - 1],
            theta: vec![0.0; w - 1],
        };
        for j in 0..w - 1 {
            pt.v[j] = rng.random();
            pt.theta[j] = sample_phase(&mut rng);
        }
        let sv = sv_matrix(&pt, p);
        for r in 0..2 * w {
            max_row_sum = max_row_sum.max((0..2 * w).map(|c| sv[(r, c)]).sum::<f64>().abs());
        }
        let shifted = Mat::from_fn(2 * w, 2 * w, |r, c| sv[(r, c)] + if r == c { 1.0 } else { 0.0 });
        min_eigenvalue = min_eigenvalue.min(sym_eigenvalues(shifted.as_ref())?[0]);
    }
    Ok(SvReport {
        samples: n_samples,
        c0: p.c0_witness,
        min_eigenvalue,
        max_row_sum,
        pass: min_eigenvalue >= p.c0_witness - 1e-10,
    })
}

/// `𝔄(B̂) = (1 − E²/2) min_{j,a} r_{j,a}²`, a valid choice of the constant in
/// `min_jk Re (b_{j,1} + b_{j,2})(b_{k,1} + b_{k,2}) ≥ 𝔄(B̂)` on `Γ^W × Γ̄^W`.
pub fn frak_a(pt: &ContourPoint, e: f64) -> f64 {
    let rmin = pt.radii().fold(f64::INFINITY, f64::min);
    (1.0 - e * e / 2.0) * rmin * rmin
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureMargin {
    /// `log RHS − log 𝕄(t) = M Re ℓ_S − (M/12) 𝔄 Σ 𝔰_jk (t_k − t_j)²`.
    pub log_margin: f64,
    /// `min_jk` of `|s_j t_k e^{iσ_k} − s_k t_j e^{iσ_j}|² − ¼ (t_k − t_j)² (1/(1 + 2t_j²) + 1/(1 + 2t_k²))`.
    pub pointwise_first: f64,
    /// `min_jk` of `¼ (t_k − t_j)² (…) − ⅙ (t_k − t_j)²`.
    pub pointwise_second: f64,
    /// `min_jk Re (b_{j,1} + b_{j,2})(b_{k,1} + b_{k,2}) − 𝔄(B̂)`.
    pub sector_margin: f64,
}

/// Pointwise check of the Gaussian domination of `𝕄(t) = exp{−M Re ℓ_S(B̂, T)}`
/// for `t ∈ [0, 1]^{W−1}`.
pub fn measure_bound_check(pt: &ContourPoint, ctx: &SaddleContext, m: usize) -> MeasureMargin {
    let p = &ctx.profile;
    let w = p.w();
    let big_a = frak_a(pt, ctx.e);
    let tt = |j: usize| if j == 0 { 0.0 } else { pt.t[j - 1] };
    let mut gauss = 0.0;
    let mut first = f64::INFINITY;
    let mut second = f64::INFINITY;
    let mut sector = f64::INFINITY;
    for j in 0..w {
        for k in 0..w {
            let d2 = (tt(k) - tt(j)).powi(2);
            gauss += p.s(j, k) * d2;
            let mid = 0.25 * d2 * (1.0 / (1.0 + 2.0 * tt(j).powi(2)) + 1.0 / (1.0 + 2.0 * tt(k).powi(2)));
            first = first.min(pt.t_coupling(j, k) - mid);
            second = second.min(mid - d2 / 6.0);
            sector = sector.min(((pt.b1[j] + pt.b2[j]) * (pt.b1[k] + pt.b2[k])).re - big_a);
        }
    }
    let mf = m as f64;
    MeasureMargin {
        log_margin: mf * ell_s_b(pt, p).re - mf / 12.0 * big_a * gauss,
        pointwise_first: first,
        pointwise_second: second,
        sector_margin: sector,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub samples: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub min_log_margin: f64,
    pub min_pointwise_first: f64,
    pub min_pointwise_second: f64,
    pub min_sector_margin: f64,
    pub pass: bool,
}

pub fn verify_measure_bound(ctx: &SaddleContext, m: usize, n_samples: usize, seed: u64, parallel: usize) -> MeasureReport {
    let batches = n_samples.div_ceil(BATCH);
    let parts = par_map_trials(batches, parallel, |b| {
        let mut rng = stream(seed, &[tag::SAMPLE, 6, b as u64]);
        let mut out = [f64::INFINITY; 4];
        for _ in 0..BATCH.min(n_samples - b * BATCH) {
            let pt = sample_contour_point(ctx, &mut rng, true);
            let r = measure_bound_check(&pt, ctx, m);
            for (o, v) in out.iter_mut().zip([r.log_margin, r.pointwise_first, r.pointwise_second, r.sector_margin]) {
                *o = o.min(v);
            }
        }
        out
    });
    let mut out = [f64::INFINITY; 4];
    for part in parts {
        for (o, v) in out.iter_mut().zip(part) {
            *o = o.min(v);
        }
    }
    MeasureReport {
        samples: n_samples,
        m,
        min_log_margin: out[0],
        min_pointwise_first: out[1],
        min_pointwise_second: out[2],
        min_sector_margin: out[3],
        pass: out.iter().all(|&x| x >= -1e-10),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinorReport {
    pub trials: usize,
    /// `max |det 𝔸₊^{(I|J)}| / |det 𝔸₊|` (likewise for `𝔸₋`).
    pub max_ratio_a_plus: f64,
    pub max_ratio_a_minus: f64,
    /// `max |det S^{(I|J)}| / (|det S^{(1)}| (m − 1)! (2 W^γ)^{m−1})`.
    pub max_s_ratio_over_bound: f64,
    pub gamma: f64,
    /// `max_ij |det S^{(i|j)} − (−1)^{j−i} det S^{(i)}| / |det S^{(1)}|`.
    pub cofactor_residual: f64,
    /// Smallest singular value of `𝔸₊` and `𝔸₋`.
    pub min_singular_value: f64,
    pub violations: usize,
    pub pass: bool,
}

/// Relative slack on the determinant-ratio bounds.
pub const MINOR_SLACK: f64 = 1e-9;

fn random_subset(w: usize, m: usize, rng: &mut StreamRng) -> Vec<usize> {
    let mut all: Vec<usize> = (0..w).collect();
    rand::seq::SliceRandom::shuffle(all.as_mut_slice(), rng);
    all.truncate(m);
    all
}

fn factorial(m: usize) -> f64 {
    (1..=m).map(|x| x as f64).product()
}

/// Random index sets `|I| = |J| = m ∈ [1, W − 1]`: the `𝔸_±` minor ratios,
/// the `S`-minor bound with exponent `γ` and the Laplacian cofactor identity.
pub fn submatrix_det_ratio_check(ctx: &SaddleContext, gamma: f64, trials: usize, seed: u64) -> Result<MinorReport> {
    let p = &ctx.profile;
    let w = p.w();
    if w < 2 {
        return Err(Error::InvalidParameter("minor checks need W ≥ 2".into()));
    }
    let s = p.s_matrix();
    let det_s1 = det(delete_rows_cols(s.as_ref(), &[0], &[0]).as_ref()).abs();
    let mut cofactor_residual = 0.0f64;
    for i in 0..w {
        let det_i = det(delete_rows_cols(s.as_ref(), &[i], &[i]).as_ref());
        for j in 0..w {
            let det_ij = det(delete_rows_cols(s.as_ref(), &[i], &[j]).as_ref());
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            cofactor_residual = cofactor_residual.max((det_ij - sign * det_i).abs() / det_s1);
        }
    }
    let det_ap = det_c(ctx.big_a_plus.as_ref()).norm();
    let det_am = det_c(ctx.big_a_minus.as_ref()).norm();
    let mut rng = stream(seed, &[tag::SAMPLE, 7]);
    let (mut rp, mut rm, mut rs) = (0.0f64, 0.0f64, 0.0f64);
    let mut violations = 0;
    for _ in 0..trials {
        let m = rng.random_range(1..w);
        let (ii, jj) = (random_subset(w, m, &mut rng), random_subset(w, m, &mut rng));
        let ap = det_c(delete_rows_cols(ctx.big_a_plus.as_ref(), &ii, &jj).as_ref()).norm() / det_ap;
        let am = det_c(delete_rows_cols(ctx.big_a_minus.as_ref(), &ii, &jj).as_ref()).norm() / det_am;
        let bound = factorial(m - 1) * (2.0 * (w as f64).powf(gamma)).powi(m as i32 - 1);
        let sr = det(delete_rows_cols(s.as_ref(), &ii, &jj).as_ref()).abs() / det_s1 / bound;
        if ap > 1.0 + MINOR_SLACK || am > 1.0 + MINOR_SLACK || sr > 1.0 + MINOR_SLACK {
            violations += 1;
        }
        rp = rp.max(ap);
        rm = rm.max(am);
        rs = rs.max(sr);
    }
    let min_singular_value = [&ctx.big_a_plus, &ctx.big_a_minus]
        .iter()
        .flat_map(|a| a.singular_values().expect("singular values of a W × W matrix"))
        .fold(f64::INFINITY, f64::min);
    let pass = violations == 0 && cofactor_residual <= 1e-9 && min_singular_value >= 1.0 - 1e-10;
    Ok(MinorReport {
        trials,
        max_ratio_a_plus: rp,
        max_ratio_a_minus: rm,
        max_s_ratio_over_bound: rs,
        gamma,
        cofactor_residual,
        min_singular_value,
        violations,
        pass,
    })
}

/// All saddle checks at one energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleVerifyReport {
    pub e: f64,
    pub kappa: f64,
    #[serde(rename = "W")]
    pub w: usize,
    pub profile_id: String,
    pub identities: IdentityReport,
    pub l_lower_bound: MarginReport,
    pub k_lower_bound: MarginReport,
    pub measure_bound: MeasureReport,
    pub sv_positivity: SvReport,
    pub minors: Option<MinorReport>,
}

impl SaddleVerifyReport {
    pub fn pass(&self) -> bool {
        self.identities.pass(1e-12)
            && self.l_lower_bound.pass()
            && self.k_lower_bound.pass()
            && self.measure_bound.pass
            && self.sv_positivity.pass
            && self.minors.as_ref().is_none_or(|m| m.pass)
    }
}

/// Block size used for the measure bound in [`verify_all`]; the log-margin
/// is linear in it.
pub const MEASURE_BLOCK: usize = 64;

pub fn verify_all(ctx: &SaddleContext, samples: usize, seed: u64, parallel: usize) -> Result<SaddleVerifyReport> {
    let p = &ctx.profile;
    let minors = if p.w() >= 2 {
        let gamma = p.gamma_fit.unwrap_or(1.0).max(0.0);
        Some(submatrix_det_ratio_check(ctx, gamma, samples.min(1000), seed)?)
    } else {
        None
    };
    Ok(SaddleVerifyReport {
        e: ctx.e,
        kappa: ctx.kappa,
        w: p.w(),
        profile_id: p.id(),
        identities: saddle_identities(ctx),
        l_lower_bound: verify_l_lower_bound(ctx, samples, seed, parallel),
        k_lower_bound: verify_k_lower_bound(ctx, samples, seed, parallel),
        measure_bound: verify_measure_bound(ctx, MEASURE_BLOCK, samples, seed, parallel),
        sv_positivity: verify_sv_positivity(p, samples.min(1000), seed)?,
        minors,
    })
}
