//! Eigenvector delocalization statistics and the Green's function identities
//! behind them.

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::ensembles::{sample_ensemble, Ensemble};
use crate::profile::VarianceProfile;
use crate::spectral::{decompose, SpectralDecomposition};
use crate::{par_map_trials, trial_seed, Result, C64};

/// Eigenvalues closer than this to a neighbour are treated as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-10;

/// Bin width of the `√N‖𝐮ᵢ‖_∞` histogram.
pub const HISTOGRAM_BIN: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenvectorNorm {
    pub index: usize,
    pub lambda: f64,
    /// `√N ‖𝐮ᵢ‖_∞`.
    pub scaled_sup: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelocReport {
    #[serde(rename = "N")]
    pub n: usize,
    pub kappa: f64,
    /// Eigenvectors with `|λᵢ| ≤ √2 − κ`.
    pub bulk: Vec<EigenvectorNorm>,
    /// Maximum of `√N‖𝐮ᵢ‖_∞` over non-degenerate bulk eigenvectors; `None`
    /// when there are none.
    pub max_scaled_sup: Option<f64>,
    pub degenerate_count: usize,
    /// `(bin lower edge, count)` with bins of width [`HISTOGRAM_BIN`] from 1.
    pub histogram: Vec<(f64, usize)>,
}

/// Sup-norms of all bulk eigenvectors.
pub fn sup_norms_bulk(d: &SpectralDecomposition, kappa: f64) -> DelocReport {
    let n = d.n();
    let e_max = std::f64::consts::SQRT_2 - kappa;
    let sqrt_n = (n as f64).sqrt();
    let mut bulk = Vec::new();
    for i in 0..n {
        let l = d.lambda[i];
        if l.abs() > e_max {
            continue;
        }
        let gap_lo = if i > 0 { l - d.lambda[i - 1] } else { f64::INFINITY };
        let gap_hi = if i + 1 < n { d.lambda[i + 1] - l } else { f64::INFINITY };
        let sup = (0..n).map(|a| d.u[(a, i)].norm()).fold(0.0, f64::max);
        bulk.push(EigenvectorNorm {
            index: i,
            lambda: l,
            scaled_sup: sqrt_n * sup,
            degenerate: gap_lo.min(gap_hi) < DEGENERACY_GAP,
        });
    }
    let counted: Vec<f64> = bulk.iter().filter(|v| !v.degenerate).map(|v| v.scaled_sup).collect();
    let max_scaled_sup = counted.iter().copied().reduce(f64::max);
    let mut histogram: Vec<(f64, usize)> = Vec::new();
    for x in &counted {
        let bin = ((x - 1.0).max(0.0) / HISTOGRAM_BIN).floor() as usize;
        if histogram.len() <= bin {
            let start = histogram.len();
            histogram.extend((start..=bin).map(|b| (1.0 + b as f64 * HISTOGRAM_BIN, 0)));
        }
        histogram[bin].1 += 1;
    }
    DelocReport {
        n,
        kappa,
        degenerate_count: bulk.iter().filter(|v| v.degenerate).count(),
        bulk,
        max_scaled_sup,
        histogram,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralIdentityCheck {
    pub a: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// `1e−10 / η`.
    pub tolerance: f64,
    pub pass: bool,
}

/// `Im G_aa(z)` from an LU solve of `(H − z) x = e_a` against
/// `Σᵢ |u_{ia}|² η / ((λᵢ − E)² + η²)` from the eigendecomposition.
pub fn spectral_identity_check(h: MatRef<'_, C64>, d: &SpectralDecomposition, z: C64, a: usize) -> SpectralIdentityCheck {
    let n = h.nrows();
    let hz = Mat::from_fn(n, n, |i, j| if i == j { h[(i, j)] - z } else { h[(i, j)] });
    let mut rhs_vec = Mat::<C64>::zeros(n, 1);
    rhs_vec[(a, 0)] = C64::new(1.0, 0.0);
    hz.partial_piv_lu().solve_in_place(rhs_vec.as_mut());
    let lhs = rhs_vec[(a, 0)].im;
    let (e, eta) = (z.re, z.im);
    let rhs: f64 = (0..n)
        .map(|i| d.u[(a, i)].norm_sqr() * eta / ((d.lambda[i] - e).powi(2) + eta * eta))
        .sum();
    let residual = (lhs - rhs).abs();
    let tolerance = 1e-10 / eta;
    SpectralIdentityCheck { a, lhs, rhs, residual, tolerance, pass: residual <= tolerance }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicReport {
    pub e: f64,
    pub eta: f64,
    pub eta0: f64,
    /// `max_{i,j} |G_ij(E + iη)|`.
    pub lhs: f64,
    /// `max_ℓ Σ_{k≥0} Im G_ℓℓ(E + i2^k η)`.
    pub rhs: f64,
    /// `lhs / rhs`.
    pub ratio: f64,
    /// `η₀/η`, the envelope of the dyadic bound.
    pub envelope: f64,
    /// Dyadic ladder `y_k = 2^k η` up to `η₀` (inclusive of the first point
    /// at or above it).
    pub ladder: Vec<f64>,
    /// Whether `y ↦ y Im G_ℓℓ(E + iy)` is nondecreasing along the ladder for
    /// every `ℓ`.
    pub monotone: bool,
}

fn im_green_diag(d: &SpectralDecomposition, e: f64, y: f64) -> Vec<f64> {
    let n = d.n();
    let w: Vec<f64> = d.lambda.iter().map(|&l| y / ((l - e).powi(2) + y * y)).collect();
    (0..n)
        .map(|a| (0..n).map(|k| d.u[(a, k)].norm_sqr() * w[k]).sum())
        .collect()
}

/// Evaluates both sides of `|G_ij(E+iη)| ≤ C max_ℓ Σ_{k≥0} Im G_ℓℓ(E+i2^kη)`
/// and the monotonicity of `y Im G_ℓℓ(E+iy)` on the dyadic ladder.
///
/// The series is summed until the remaining terms, each at most `1/(2^k η)`,
/// are below `1e−15` of the partial sum.
pub fn im_green_dyadic_check(d: &SpectralDecomposition, e: f64, eta: f64, eta0: f64) -> DyadicReport {
    let n = d.n();
    let g = d.green(C64::new(e, eta));
    let mut lhs = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            lhs = lhs.max(g[(i, j)].norm());
        }
    }
    let mut sums = vec![0.0; n];
    let mut y = eta;
    loop {
        let im = im_green_diag(d, e, y);
        for (s, v) in sums.iter_mut().zip(&im) {
            *s += v;
        }
        let total = sums.iter().copied().fold(0.0, f64::max);
        // Remaining tail is bounded by Σ_{k' > k} 1/(2^{k'} η) = 1/y.
        if 1.0 / y <= 1e-15 * total || y > 1e300 {
            break;
        }
        y *= 2.0;
    }
    let rhs = sums.iter().copied().fold(0.0, f64::max);

    let mut ladder = vec![eta];
    while *ladder.last().unwrap() < eta0 {
        let next = ladder.last().unwrap() * 2.0;
        ladder.push(next);
    }
    let mut monotone = true;
    let mut prev: Option<Vec<f64>> = None;
    for &yk in &ladder {
        let cur: Vec<f64> = im_green_diag(d, e, yk).iter().map(|v| v * yk).collect();
        if let Some(p) = &prev {
            if cur.iter().zip(p).any(|(c, q)| *c < *q * (1.0 - 1e-12)) {
                monotone = false;
            }
        }
        prev = Some(cur);
    }
    DyadicReport {
        e,
        eta,
        eta0,
        lhs,
        rhs,
        ratio: lhs / rhs,
        envelope: eta0 / eta,
        ladder,
        monotone,
    }
}

/// One delocalization trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelocTrial {
    pub trial: usize,
    pub bulk_count: usize,
    pub degenerate_count: usize,
    pub max_scaled_sup: Option<f64>,
    pub error: Option<String>,
}

/// Samples `trials` matrices and records the bulk sup-norm statistic of each.
pub fn run_deloc_experiment(
    p: &VarianceProfile,
    m: usize,
    ensemble: Ensemble,
    kappa: f64,
    trials: usize,
    seed: u64,
    parallel: usize,
) -> Vec<DelocTrial> {
    par_map_trials(trials, parallel, |t| {
        let run = || -> Result<DelocReport> {
            let s = sample_ensemble(p, m, ensemble, trial_seed(seed, t))?;
            let d = decompose(s.h.as_ref())?;
            Ok(sup_norms_bulk(&d, kappa))
        };
        match run() {
            Ok(r) => DelocTrial {
                trial: t,
                bulk_count: r.bulk.len(),
                degenerate_count: r.degenerate_count,
                max_scaled_sup: r.max_scaled_sup,
                error: None,
            },
            Err(e) => DelocTrial {
                trial: t,
                bulk_count: 0,
                degenerate_count: 0,
                max_scaled_sup: None,
                error: Some(e.to_string()),
            },
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::sample_gaussian_block_band;
    use crate::profile::{build_custom_profile, build_torus_profile};
    use crate::stats;
    use rand::Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn single_site() {
        let h = Mat::from_fn(1, 1, |_, _| c(0.2, 0.0));
        let d = decompose(h.as_ref()).unwrap();
        let r = sup_norms_bulk(&d, 0.3);
        assert_eq!(r.bulk.len(), 1);
        assert!((r.max_scaled_sup.unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_spectrum_is_flagged() {
        let h = Mat::from_fn(4, 4, |i, j| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) });
        let d = decompose(h.as_ref()).unwrap();
        let r = sup_norms_bulk(&d, 0.3);
        assert_eq!(r.bulk.len(), 4);
        assert_eq!(r.degenerate_count, 4);
        assert_eq!(r.max_scaled_sup, None);
        // κ large enough that λ = 1 falls outside the bulk.
        let r = sup_norms_bulk(&d, 0.5);
        assert!(r.bulk.is_empty());
    }

    #[test]
    fn normalisation_and_range() {
        let p = build_torus_profile(1, 4, 0.2).unwrap();
        let s = sample_gaussian_block_band(&p, 16, 21).unwrap();
        let d = decompose(s.h.as_ref()).unwrap();
        let n = d.n();
        for i in 0..n {
            let col: f64 = (0..n).map(|a| d.u[(a, i)].norm_sqr()).sum();
            assert!((col - 1.0).abs() < 1e-12);
            let row: f64 = (0..n).map(|k| d.u[(i, k)].norm_sqr()).sum();
            assert!((row - 1.0).abs() < 1e-12);
        }
        let r = sup_norms_bulk(&d, 0.3);
        assert!(!r.bulk.is_empty());
        for v in &r.bulk {
            assert!(v.scaled_sup >= 1.0 - 1e-12 && v.scaled_sup <= (n as f64).sqrt() + 1e-12);
        }
        let total: usize = r.histogram.iter().map(|b| b.1).sum();
        assert_eq!(total, r.bulk.len() - r.degenerate_count);
    }

    #[test]
    fn gue_sup_norm_of_log_order() {
        let p = build_custom_profile(1, &[]).unwrap();
        let n = 256;
        let s = sample_gaussian_block_band(&p, n, 77).unwrap();
        let d = decompose(s.h.as_ref()).unwrap();
        let r = sup_norms_bulk(&d, 0.3);
        let x = r.max_scaled_sup.unwrap();
        // For Haar-like vectors √N‖u‖_∞ is about √(log N) scale.
        assert!(x > 1.5 && x < 3.0 * (n as f64).ln().sqrt(), "{x}");
    }

    #[test]
    fn spectral_identity_diagonal_and_random() {
        let h = Mat::from_fn(3, 3, |i, j| if i == j { c(i as f64 - 1.0, 0.0) } else { c(0.0, 0.0) });
        let d = decompose(h.as_ref()).unwrap();
        let r = spectral_identity_check(h.as_ref(), &d, c(0.3, 0.01), 2);
        assert!(r.residual < 1e-12 * r.lhs.abs().max(1.0));

        let p = build_torus_profile(1, 4, 0.2).unwrap();
        let s = sample_gaussian_block_band(&p, 16, 5).unwrap();
        let d = decompose(s.h.as_ref()).unwrap();
        let mut rng = crate::rng::stream(1, &[0]);
        for _ in 0..10 {
            let z = c(rng.random_range(-1.0..1.0), 10f64.powf(rng.random_range(-3.0..0.0)));
            let a = rng.random_range(0..64);
            let r = spectral_identity_check(s.h.as_ref(), &d, z, a);
            assert!(r.pass, "{r:?}");
        }
        // Large η: Im G_aa ≈ η/(E² + η²) since Σ|u|² = 1.
        let z = c(0.5, 1e4);
        let r = spectral_identity_check(s.h.as_ref(), &d, z, 0);
        assert!((r.rhs - z.im / (z.re * z.re + z.im * z.im)).abs() < 1e-8 * r.rhs);
    }

    #[test]
    fn dyadic_zero_matrix_closed_form() {
        let d = decompose(Mat::<C64>::zeros(3, 3).as_ref()).unwrap();
        let eta = 0.01;
        let r = im_green_dyadic_check(&d, 0.0, eta, 0.1);
        assert!((r.lhs - 1.0 / eta).abs() < 1e-9);
        // Σ_k 1/(2^k η) = 2/η.
        assert!((r.rhs - 2.0 / eta).abs() < 1e-9 / eta);
        assert!((r.ratio - 0.5).abs() < 1e-12);
        assert!(r.monotone);
    }

    #[test]
    fn dyadic_random_sample() {
        let p = build_torus_profile(1, 4, 0.2).unwrap();
        let s = sample_gaussian_block_band(&p, 32, 2).unwrap();
        let d = decompose(s.h.as_ref()).unwrap();
        let mut rng = crate::rng::stream(2, &[0]);
        let mut ratios = Vec::new();
        for _ in 0..20 {
            let e = rng.random_range(-1.0..1.0);
            let eta = 2.0 / 128.0;
            let r = im_green_dyadic_check(&d, e, eta, 1.0 / 32.0);
            assert!(r.monotone);
            ratios.push(r.ratio);
        }
        assert!(stats::max(&ratios) <= 1.0, "{ratios:?}");
    }

    #[test]
    fn experiment_runs() {
        let p = build_torus_profile(1, 4, 0.2).unwrap();
        let t = run_deloc_experiment(&p, 8, Ensemble::Gaussian, 0.3, 3, 9, 2);
        assert_eq!(t.len(), 3);
        assert!(t.iter().all(|x| x.error.is_none() && x.bulk_count > 0));
    }
}
