//! Eigendecompositions, resolvents on the spectral domain, semicircle
//! quantities and the stability operator `Γ(z)`.

use faer::{Mat, MatRef, Side};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::profile::VarianceProfile;
use crate::rng::{stream, tag};
use crate::{Error, Result, C64};

/// Relative residual tolerance `‖HU − UΛ‖_max ≤ tol · ‖H‖`.
pub const EIG_RESIDUAL_TOL: f64 = 1e-8;
/// Orthonormality tolerance `‖U*U − I‖_max`.
pub const EIG_ORTHO_TOL: f64 = 1e-10;

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub lambda: Vec<f64>,
    pub u: Mat<C64>,
    /// `‖HU − UΛ‖_max / max(‖H‖, 1)` measured at construction.
    pub residual: f64,
    /// `‖U*U − I‖_max` measured at construction.
    pub ortho_defect: f64,
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.lambda.len()
    }

    /// Eigenvector `i` as an owned vector.
    pub fn eigenvector(&self, i: usize) -> Vec<C64> {
        (0..self.n()).map(|a| self.u[(a, i)]).collect()
    }

    /// `G(z) = U diag(1/(λ − z)) U*`.
    pub fn green(&self, z: C64) -> Mat<C64> {
        let n = self.n();
        let inv: Vec<C64> = self.lambda.iter().map(|&l| (C64::new(l, 0.0) - z).inv()).collect();
        let ud = Mat::from_fn(n, n, |a, k| self.u[(a, k)] * inv[k]);
        &ud * self.u.adjoint()
    }

    /// Diagonal of `G(z)` in `O(N²)`.
    pub fn green_diag(&self, z: C64) -> Vec<C64> {
        let n = self.n();
        let inv: Vec<C64> = self.lambda.iter().map(|&l| (C64::new(l, 0.0) - z).inv()).collect();
        let mut d = vec![C64::new(0.0, 0.0); n];
        for k in 0..n {
            let col = self.u.col(k);
            for a in 0..n {
                d[a] += inv[k] * col[a].norm_sqr();
            }
        }
        d
    }

    /// Single entry `G_ab(z)` in `O(N)`.
    pub fn green_entry(&self, z: C64, a: usize, b: usize) -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for k in 0..self.n() {
            s += self.u[(a, k)] * self.u[(b, k)].conj() / (C64::new(self.lambda[k], 0.0) - z);
        }
        s
    }
}

/// Hermitian eigendecomposition with residual and orthonormality checks.
pub fn decompose(h: MatRef<'_, C64>) -> Result<SpectralDecomposition> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(Error::Dimension(format!("H is {}x{}", n, h.ncols())));
    }
    let evd = h.self_adjoint_eigen(Side::Lower).map_err(|_| Error::Eigensolver {
        residual: f64::NAN,
        tolerance: EIG_RESIDUAL_TOL,
    })?;
    let u = evd.U().to_owned();
    let s = evd.S().column_vector();
    let lambda: Vec<f64> = (0..n).map(|i| s[i].re).collect();
    let hnorm = lambda.iter().fold(0.0f64, |m, l| m.max(l.abs()));

    let hu = h * &u;
    let mut res = 0.0f64;
    for k in 0..n {
        for a in 0..n {
            res = res.max((hu[(a, k)] - u[(a, k)] * lambda[k]).norm());
        }
    }
    let residual = res / hnorm.max(1.0);
    let gram = u.adjoint() * &u;
    let mut ortho = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            ortho = ortho.max((gram[(i, j)] - C64::new(target, 0.0)).norm());
        }
    }
    if !(residual <= EIG_RESIDUAL_TOL) || !(ortho <= EIG_ORTHO_TOL) {
        return Err(Error::Eigensolver {
            residual: residual.max(ortho),
            tolerance: EIG_RESIDUAL_TOL,
        });
    }
    Ok(SpectralDecomposition { lambda, u, residual, ortho_defect: ortho })
}

/// Stieltjes transform of the semicircle law: the root of `m² + zm + 1 = 0`
/// with `Im m > 0` (equivalently `|m| < 1`) for `Im z > 0`.
pub fn m_sc(z: C64) -> C64 {
    let s = (z * z - C64::new(4.0, 0.0)).sqrt();
    let r1 = (-z + s) * 0.5;
    let r2 = (-z - s) * 0.5;
    // The roots multiply to 1; invert the larger one to avoid cancellation.
    let big = if r1.norm() >= r2.norm() { r1 } else { r2 };
    big.inv()
}

/// `ϱ_sc(x) = √(4 − x²) / 2π` on `[−2, 2]`.
pub fn semicircle_density(x: f64) -> f64 {
    if x.abs() >= 2.0 {
        0.0
    } else {
        (4.0 - x * x).sqrt() / (2.0 * std::f64::consts::PI)
    }
}

/// Rectangular grid of spectral parameters inside
/// `D(N, κ, ε₂) = {|E| ≤ √2 − κ, N^{−1+ε₂} ≤ η ≤ N^{ε₂}/M}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDomain {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub kappa: f64,
    pub eps2: f64,
    pub energies: Vec<f64>,
    pub etas: Vec<f64>,
}

impl SpectralDomain {
    /// `√2 − κ`.
    pub fn e_max(&self) -> f64 {
        std::f64::consts::SQRT_2 - self.kappa
    }

    pub fn eta_min(&self) -> f64 {
        (self.n as f64).powf(-1.0 + self.eps2)
    }

    pub fn eta_max(&self) -> f64 {
        (self.n as f64).powf(self.eps2) / self.m as f64
    }

    /// Whether `z` lies in the domain, with relative slack `1e−12` on the
    /// boundary.
    pub fn contains(&self, z: C64) -> bool {
        let tol = 1e-12;
        z.re.abs() <= self.e_max() * (1.0 + tol)
            && z.im >= self.eta_min() * (1.0 - tol)
            && z.im <= self.eta_max() * (1.0 + tol)
    }

    /// All grid points, energies varying fastest.
    pub fn points(&self) -> Vec<C64> {
        self.etas
            .iter()
            .flat_map(|&eta| self.energies.iter().map(move |&e| C64::new(e, eta)))
            .collect()
    }

    /// Grid over a sub-range of `η`; every point must lie in the domain.
    #[allow(clippy::too_many_arguments)]
    pub fn with_eta_range(
        n: usize,
        m: usize,
        kappa: f64,
        eps2: f64,
        n_e: usize,
        eta_lo: f64,
        eta_hi: f64,
        n_eta: usize,
    ) -> Result<Self> {
        let base = build_domain(n, m, kappa, eps2, n_e, 1)?;
        if !(eta_lo <= eta_hi) {
            return Err(Error::EmptyDomain(format!("eta range [{eta_lo}, {eta_hi}] is empty")));
        }
        let d = SpectralDomain { etas: log_space(eta_lo, eta_hi, n_eta), ..base };
        for z in d.points() {
            if !d.contains(z) {
                return Err(Error::InvalidParameter(format!(
                    "z = {z} lies outside D(N={n}, kappa={kappa}, eps2={eps2})"
                )));
            }
        }
        Ok(d)
    }
}

fn lin_space(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    match k {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect(),
    }
}

fn log_space(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    match k {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            let mut v: Vec<f64> = (0..k).map(|i| (a + (b - a) * i as f64 / (k - 1) as f64).exp()).collect();
            v[0] = lo;
            v[k - 1] = hi;
            v
        }
    }
}

/// `n_e × n_eta` grid with equispaced energies and log-spaced `η`, including
/// the corner `η = N^{−1+ε₂}`.
pub fn build_domain(n: usize, m: usize, kappa: f64, eps2: f64, n_e: usize, n_eta: usize) -> Result<SpectralDomain> {
    if !(kappa > 0.0 && kappa < std::f64::consts::SQRT_2) {
        return Err(Error::EmptyDomain(format!("kappa = {kappa} leaves no energies in (0, sqrt 2)")));
    }
    if !(eps2 > 0.0) {
        return Err(Error::InvalidParameter(format!("eps2 = {eps2} must be positive")));
    }
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter(format!("need N, M >= 1, got M={m}, N={n}")));
    }
    if n_e == 0 || n_eta == 0 {
        return Err(Error::InvalidParameter("grid sizes must be positive".into()));
    }
    let mut d = SpectralDomain {
        n,
        m,
        kappa,
        eps2,
        energies: vec![],
        etas: vec![],
    };
    let (lo, hi) = (d.eta_min(), d.eta_max());
    if lo > hi * (1.0 + 1e-12) {
        return Err(Error::EmptyDomain(format!(
            "eta bounds crossed: N^(-1+eps2) = {lo} > N^eps2/M = {hi}; M is too close to N for eps2 = {eps2}"
        )));
    }
    let e = d.e_max();
    d.energies = lin_space(-e, e, n_e);
    d.etas = log_space(lo, hi.max(lo), n_eta);
    Ok(d)
}

/// How off-diagonal resolvent entries are scanned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ResolventMode {
    /// All pairs, via the full `N × N` resolvent.
    Full,
    /// `pairs` off-diagonal positions drawn uniformly with the given seed.
    Sampled { pairs: usize, seed: u64 },
}

impl ResolventMode {
    /// Default sampled mode (4096 pairs).
    pub fn sampled(seed: u64) -> Self {
        ResolventMode::Sampled { pairs: 4096, seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolventStats {
    pub e: f64,
    pub eta: f64,
    /// `max_{a≠b} |G_ab|` over the scanned pairs.
    pub psi_off: f64,
    /// `max_a |G_aa − m_sc|`.
    pub psi_diag: f64,
    /// `Λ_d = max_a |G_aa − m_sc|` (same quantity, reported separately).
    pub lambda_d: f64,
    /// `m̄ = Tr G / N`.
    pub mean_trace_re: f64,
    pub mean_trace_im: f64,
    /// Number of off-diagonal pairs scanned.
    pub pairs: usize,
}

impl ResolventStats {
    pub fn psi(&self) -> f64 {
        self.psi_off.max(self.psi_diag)
    }
}

/// Resolvent entry statistics at `z`.
pub fn resolvent_entry_stats(d: &SpectralDecomposition, z: C64, mode: ResolventMode) -> ResolventStats {
    let n = d.n();
    let msc = m_sc(z);
    let (diag, psi_off, pairs) = match mode {
        ResolventMode::Full => {
            let g = d.green(z);
            let mut off = 0.0f64;
            for b in 0..n {
                for a in 0..n {
                    if a != b {
                        off = off.max(g[(a, b)].norm());
                    }
                }
            }
            let diag: Vec<C64> = (0..n).map(|a| g[(a, a)]).collect();
            (diag, off, n * (n - 1))
        }
        ResolventMode::Sampled { pairs, seed } => {
            let mut rng = stream(seed, &[tag::PAIRS]);
            let mut off = 0.0f64;
            if n > 1 {
                for _ in 0..pairs {
                    let a = rng.random_range(0..n);
                    let mut b = rng.random_range(0..n - 1);
                    if b >= a {
                        b += 1;
                    }
                    off = off.max(d.green_entry(z, a, b).norm());
                }
            }
            (d.green_diag(z), off, pairs)
        }
    };
    let psi_diag = diag.iter().fold(0.0f64, |m, g| m.max((g - msc).norm()));
    let mbar = diag.iter().fold(C64::new(0.0, 0.0), |s, g| s + g) / n as f64;
    ResolventStats {
        e: z.re,
        eta: z.im,
        psi_off,
        psi_diag,
        lambda_d: psi_diag,
        mean_trace_re: mbar.re,
        mean_trace_im: mbar.im,
        pairs,
    }
}

/// Condition number above which `1 − m_sc² S̃` is treated as singular.
pub const GAMMA_MAX_CONDITION: f64 = 1e12;

/// `Γ(z) = ‖(1 − m_sc(z)² 𝒯)^{-1}‖_{∞→∞}`.
///
/// `𝒯` acts as `S̃` on block-constant vectors and as zero on vectors with
/// zero mean in every block, so with `R = (I − m² S̃)^{-1}` the inverse is
/// `δ_ab + (R_jk − δ_jk)/M` for `a` in block `j`, `b` in block `k`. Row `a`
/// of block `j` therefore has absolute sum
/// `|1 + (R_jj − 1)/M| + (M − 1)/M · |R_jj − 1| + Σ_{k≠j} |R_jk|`.
pub fn stability_gamma(p: &VarianceProfile, m: usize, z: C64) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParameter("block size M must be at least 1".into()));
    }
    if !(z.im > 0.0) {
        return Err(Error::InvalidParameter(format!("Im z = {} must be positive", z.im)));
    }
    let w = p.w();
    let msc2 = m_sc(z).powi(2);
    let b = Mat::from_fn(w, w, |j, k| {
        let id = if j == k { 1.0 } else { 0.0 };
        C64::new(id, 0.0) - msc2 * p.s_tilde(j, k)
    });
    let cond = linalg::condition_number_c(b.as_ref())?;
    if !(cond <= GAMMA_MAX_CONDITION) {
        return Err(Error::NearSingular { condition: cond });
    }
    let r = linalg::inverse_c(b.as_ref())?;
    let mf = m as f64;
    let one = C64::new(1.0, 0.0);
    let mut best = 0.0f64;
    for j in 0..w {
        let rjj = r[(j, j)] - one;
        let mut row = (one + rjj / mf).norm() + (mf - 1.0) / mf * rjj.norm();
        for k in 0..w {
            if k != j {
                row += r[(j, k)].norm();
            }
        }
        best = best.max(row);
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfConsistencyReport {
    pub e: f64,
    pub eta: f64,
    /// `Δ_i = 1/G_ii + z + Σ_a σ²_ai G_aa`.
    pub delta: Vec<C64>,
    pub max_abs_delta: f64,
    /// `√(Nη) · max_i |Δ_i|`.
    pub scaled_max_delta: f64,
    /// `Ω = (1/N) Σ_i Ω_i` with `Ω_i = −G_ii − 1/(z + m̄)`.
    pub omega: C64,
    /// `|m̄ + 1/(z + m̄) + Ω|`, zero up to rounding.
    pub omega_identity_residual: f64,
    /// `max_i |G_ii + 1/(z + Σ_a σ²_ai G_aa − Δ_i)|`, zero up to rounding.
    pub rewrite_residual: f64,
}

/// Self-consistency diagnostics from the diagonal of `G(z)`.
///
/// `σ²_ai = s̃_jk / M` for `a` in block `j` and `i` in block `k`.
pub fn self_consistency_residuals(
    d: &SpectralDecomposition,
    p: &VarianceProfile,
    m: usize,
    z: C64,
) -> Result<SelfConsistencyReport> {
    let n = d.n();
    let w = p.w();
    if n != m * w {
        return Err(Error::Dimension(format!("N = {n} but M·W = {}", m * w)));
    }
    let g = d.green_diag(z);
    if let Some(i) = g.iter().position(|x| *x == C64::new(0.0, 0.0)) {
        return Err(Error::ZeroDiagonal(i));
    }
    let mut block_mean = vec![C64::new(0.0, 0.0); w];
    for (a, x) in g.iter().enumerate() {
        block_mean[a / m] += *x;
    }
    for x in &mut block_mean {
        *x /= m as f64;
    }
    let sigma_g: Vec<C64> = (0..w)
        .map(|k| (0..w).fold(C64::new(0.0, 0.0), |s, j| s + block_mean[j] * p.s_tilde(j, k)))
        .collect();
    let delta: Vec<C64> = (0..n).map(|i| g[i].inv() + z + sigma_g[i / m]).collect();
    let max_abs_delta = delta.iter().fold(0.0f64, |mx, x| mx.max(x.norm()));
    let mbar = g.iter().fold(C64::new(0.0, 0.0), |s, x| s + x) / n as f64;
    let shift = (z + mbar).inv();
    let omega = g.iter().fold(C64::new(0.0, 0.0), |s, x| s - x - shift) / n as f64;
    let omega_identity_residual = (mbar + shift + omega).norm();
    let rewrite_residual = (0..n)
        .map(|i| (g[i] + (z + sigma_g[i / m] - delta[i]).inv()).norm())
        .fold(0.0, f64::max);
    Ok(SelfConsistencyReport {
        e: z.re,
        eta: z.im,
        scaled_max_delta: (n as f64 * z.im).sqrt() * max_abs_delta,
        delta,
        max_abs_delta,
        omega,
        omega_identity_residual,
        rewrite_residual,
    })
}
