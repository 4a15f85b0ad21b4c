//! Monte Carlo checks of the local semicircle law and of the stochastic
//! domination formalism.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::ensembles::{sample_ensemble, Ensemble};
use crate::linalg;
use crate::profile::VarianceProfile;
use crate::spectral::{
    decompose, resolvent_entry_stats, self_consistency_residuals, ResolventMode, SpectralDecomposition,
    SpectralDomain,
};
use crate::{par_map_trials, stats, trial_seed, Result, C64};

/// Quantile levels reported per grid point.
pub const QUANTILE_LEVELS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];

/// Above this size the off-diagonal maximum is estimated from sampled pairs.
pub const FULL_MODE_MAX_N: usize = 2048;

/// One `(trial, z)` measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalLawRecord {
    pub trial: usize,
    pub z_index: usize,
    pub e: f64,
    pub eta: f64,
    pub psi_off: f64,
    pub psi_diag: f64,
    /// `√(Nη) · max(Ψ_off, Ψ_diag)`.
    pub sqrt_n_eta_psi: f64,
    /// `√(Mη) · max(Ψ_off, Ψ_diag)`.
    pub sqrt_m_eta_psi: f64,
    pub max_abs_delta: f64,
}

/// Aggregates over trials at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalLawAggregate {
    pub z_index: usize,
    pub e: f64,
    pub eta: f64,
    pub count: usize,
    /// Quantiles of `√(Nη)Ψ` at [`QUANTILE_LEVELS`].
    pub n_quantiles: Vec<f64>,
    /// Quantiles of `√(Mη)Ψ` at [`QUANTILE_LEVELS`].
    pub m_quantiles: Vec<f64>,
}

impl LocalLawAggregate {
    pub fn median_n(&self) -> f64 {
        self.n_quantiles[2]
    }

    pub fn median_m(&self) -> f64 {
        self.m_quantiles[2]
    }
}

/// A trial that could not be completed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalLawReport {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "W")]
    pub w: usize,
    pub ensemble: Ensemble,
    pub trials: usize,
    pub seed: u64,
    pub records: Vec<LocalLawRecord>,
    pub aggregates: Vec<LocalLawAggregate>,
    pub failures: Vec<TrialFailure>,
}

/// Per-`z` statistics of one decomposition.
pub fn local_law_records(
    d: &SpectralDecomposition,
    p: &VarianceProfile,
    m: usize,
    points: &[C64],
    trial: usize,
    mode: ResolventMode,
) -> Result<Vec<LocalLawRecord>> {
    let n = d.n();
    let mut out = Vec::with_capacity(points.len());
    for (zi, &z) in points.iter().enumerate() {
        let s = resolvent_entry_stats(d, z, mode);
        let sc = self_consistency_residuals(d, p, m, z)?;
        let psi = s.psi();
        out.push(LocalLawRecord {
            trial,
            z_index: zi,
            e: z.re,
            eta: z.im,
            psi_off: s.psi_off,
            psi_diag: s.psi_diag,
            sqrt_n_eta_psi: (n as f64 * z.im).sqrt() * psi,
            sqrt_m_eta_psi: (m as f64 * z.im).sqrt() * psi,
            max_abs_delta: sc.max_abs_delta,
        });
    }
    Ok(out)
}

/// Samples `trials` matrices, decomposes each once and evaluates the
/// resolvent statistics at every domain point.
pub fn run_local_law_experiment(
    p: &VarianceProfile,
    m: usize,
    ensemble: Ensemble,
    domain: &SpectralDomain,
    trials: usize,
    seed: u64,
    parallel: usize,
) -> Result<LocalLawReport> {
    let n = m * p.w();
    let points = domain.points();
    let results = par_map_trials(trials, parallel, |t| -> Result<Vec<LocalLawRecord>> {
        let ts = trial_seed(seed, t);
        let sample = sample_ensemble(p, m, ensemble, ts)?;
        let d = decompose(sample.h.as_ref())?;
        let mode = if n <= FULL_MODE_MAX_N {
            ResolventMode::Full
        } else {
            ResolventMode::sampled(ts)
        };
        local_law_records(&d, p, m, &points, t, mode)
    });
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (t, r) in results.into_iter().enumerate() {
        match r {
            Ok(rs) => records.extend(rs),
            Err(e) => failures.push(TrialFailure { trial: t, error: e.to_string() }),
        }
    }
    let aggregates = aggregate(&records, &points);
    Ok(LocalLawReport {
        n,
        m,
        w: p.w(),
        ensemble,
        trials,
        seed,
        records,
        aggregates,
        failures,
    })
}

/// Quantiles over trials of both normalised statistics at each grid point.
pub fn aggregate(records: &[LocalLawRecord], points: &[C64]) -> Vec<LocalLawAggregate> {
    points
        .iter()
        .enumerate()
        .map(|(zi, z)| {
            let (xn, xm): (Vec<f64>, Vec<f64>) = records
                .iter()
                .filter(|r| r.z_index == zi)
                .map(|r| (r.sqrt_n_eta_psi, r.sqrt_m_eta_psi))
                .unzip();
            LocalLawAggregate {
                z_index: zi,
                e: z.re,
                eta: z.im,
                count: xn.len(),
                n_quantiles: QUANTILE_LEVELS.iter().map(|&q| stats::quantile(&xn, q)).collect(),
                m_quantiles: QUANTILE_LEVELS.iter().map(|&q| stats::quantile(&xm, q)).collect(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub n: usize,
    pub eps: Vec<f64>,
    /// `sup_u P̂(X_u ≥ N^ε Y_u)` for each `ε`.
    pub exceedance: Vec<f64>,
}

/// Empirical exceedance frequencies for `X ≺ Y`.
///
/// `x[u]` holds the trials of `X` at index `u`; `y[u]` is the dominating value.
pub fn stochastic_domination_estimate(x: &[Vec<f64>], y: &[f64], n: usize, eps_list: &[f64]) -> Result<DominationReport> {
    if x.len() != y.len() {
        return Err(crate::Error::Dimension(format!(
            "X has {} indices, Y has {}",
            x.len(),
            y.len()
        )));
    }
    let exceedance = eps_list
        .iter()
        .map(|&eps| {
            let factor = (n as f64).powf(eps);
            x.iter()
                .zip(y)
                .map(|(xs, &yu)| {
                    if xs.is_empty() {
                        0.0
                    } else {
                        xs.iter().filter(|&&v| v >= factor * yu).count() as f64 / xs.len() as f64
                    }
                })
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(DominationReport { n, eps: eps_list.to_vec(), exceedance })
}

/// How `G^{(i)}` is obtained in [`schur_identity_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchurMethod {
    /// From the full decomposition via `G^{(i)}_ab = G_ab − G_ai G_ib / G_ii`.
    Deflation,
    /// From an independent decomposition of the minor `H^{(i)}`.
    DirectMinor,
}

impl SchurMethod {
    /// Deflation for `N ≤ 512`, direct minor decomposition above.
    pub fn auto(n: usize) -> Self {
        if n <= 512 {
            SchurMethod::Deflation
        } else {
            SchurMethod::DirectMinor
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchurCheck {
    pub i: usize,
    pub residual: f64,
    /// `1e−8 / η²`.
    pub tolerance: f64,
    pub pass: bool,
}

/// `|G_ii − 1/(h_ii − z − 𝐡ᵢ* G^{(i)} 𝐡ᵢ)|` where `𝐡ᵢ` is column `i` of `H`
/// without its `i`-th entry.
pub fn schur_identity_check(
    h: MatRef<'_, C64>,
    d: &SpectralDecomposition,
    i: usize,
    z: C64,
    method: SchurMethod,
) -> Result<SchurCheck> {
    let n = h.nrows();
    let gii = d.green_entry(z, i, i);
    let q = match method {
        SchurMethod::Deflation => {
            // hp = column i with entry i zeroed; v_k = u_k* hp.
            let inv: Vec<C64> = d.lambda.iter().map(|&l| (C64::new(l, 0.0) - z).inv()).collect();
            let mut quad = C64::new(0.0, 0.0);
            let mut left = C64::new(0.0, 0.0); // hp* G e_i
            let mut right = C64::new(0.0, 0.0); // e_i* G hp
            for k in 0..n {
                let mut v = C64::new(0.0, 0.0);
                for a in 0..n {
                    if a != i {
                        v += d.u[(a, k)].conj() * h[(a, i)];
                    }
                }
                let uik = d.u[(i, k)];
                quad += v.norm_sqr() * inv[k];
                left += v.conj() * uik.conj() * inv[k];
                right += uik * v * inv[k];
            }
            quad - left * right / gii
        }
        SchurMethod::DirectMinor => {
            let minor = linalg::delete_rows_cols(h, &[i], &[i]);
            let dm = decompose(minor.as_ref())?;
            let hi: Vec<C64> = (0..n).filter(|&a| a != i).map(|a| h[(a, i)]).collect();
            let mut quad = C64::new(0.0, 0.0);
            for k in 0..n - 1 {
                let mut v = C64::new(0.0, 0.0);
                for (a, x) in hi.iter().enumerate() {
                    v += dm.u[(a, k)].conj() * x;
                }
                quad += v.norm_sqr() / (C64::new(dm.lambda[k], 0.0) - z);
            }
            quad
        }
    };
    let rhs = (h[(i, i)] - z - q).inv();
    let residual = (gii - rhs).norm();
    let tolerance = 1e-8 / (z.im * z.im);
    Ok(SchurCheck { i, residual, tolerance, pass: residual <= tolerance })
}

/// Hermitian matrix built from its upper triangle; diagonal imaginary parts
/// are dropped.
pub fn hermitian_from_fn(n: usize, f: impl Fn(usize, usize) -> C64) -> Mat<C64> {
    let mut h = Mat::<C64>::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = f(i, j);
            if i == j {
                h[(i, i)] = C64::new(v.re, 0.0);
            } else {
                h[(i, j)] = v;
                h[(j, i)] = v.conj();
            }
        }
    }
    h
}
