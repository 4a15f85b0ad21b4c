//! Green's function comparison machinery: swap schedules, low-rank resolvent
//! updates, resolvent expansions around a zeroed entry and Monte Carlo
//! comparison of the two ensembles.
//!
//! Throughout, a swap at position `(a, b)` perturbs `H − z` by `U K U*` with
//! `U = [e_a, e_b]` and `K = [[0, δ], [δ̄, 0]]` (or `U = e_a`, `K = δ` on the
//! diagonal), so every resolvent product reduces to `2 × 2` algebra.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, MatRef};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensembles::{
    make_four_moment_matched, sample_ensemble, sample_entry, sample_gaussian_block_band, sample_matched_block_band,
    Ensemble, EntryDistribution,
};
use crate::profile::VarianceProfile;
use crate::rng::{derive_seed, stream, tag};
use crate::spectral::decompose;
use crate::{par_map_trials, stats, trial_seed, Error, Result, C64};

/// Ordering policy for [`ordering_map`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum OrderingPolicy {
    RowMajor,
    SeededShuffle { seed: u64 },
}

/// Bijection `ϖ` between upper-triangle positions `i ≤ j` and
/// `1..=ς(N)`, `ς(N) = N(N+1)/2`, plus an optional subset of steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapSchedule {
    pub n: usize,
    /// `positions[k − 1]` is the (0-based) position with `ϖ = k`.
    pub positions: Vec<(usize, usize)>,
    /// `rank[tri(i, j)]` is `ϖ(i, j)`.
    rank: Vec<usize>,
    /// Steps actually swapped (values of `ϖ`, ascending).
    pub subset: Option<Vec<usize>>,
}

/// `ς(N) = N(N+1)/2`.
pub fn varsigma(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Row-major index of `(i, j)`, `i ≤ j`, among upper-triangle positions.
fn tri(n: usize, i: usize, j: usize) -> usize {
    i * n - i * i.saturating_sub(1) / 2 + (j - i)
}

impl SwapSchedule {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// `ϖ(i, j)` for 0-based `i, j` (order of the pair is irrelevant).
    pub fn rank(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.rank[tri(self.n, i, j)]
    }

    /// Position with `ϖ = k` (1-based `k`).
    pub fn position(&self, k: usize) -> (usize, usize) {
        self.positions[k - 1]
    }

    /// Restricts the sweep to `count` steps drawn without replacement.
    pub fn with_random_subset(mut self, count: usize, seed: u64) -> Self {
        let mut steps: Vec<usize> = (1..=self.len()).collect();
        let mut rng = stream(seed, &[tag::SWEEP]);
        steps.shuffle(&mut rng);
        steps.truncate(count.min(self.len()));
        steps.sort_unstable();
        self.subset = Some(steps);
        self
    }

    /// Steps to perform, in order.
    pub fn steps(&self) -> Vec<usize> {
        match &self.subset {
            Some(s) => s.clone(),
            None => (1..=self.len()).collect(),
        }
    }
}

pub fn ordering_map(n: usize, policy: OrderingPolicy) -> Result<SwapSchedule> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    let mut positions: Vec<(usize, usize)> = Vec::with_capacity(varsigma(n));
    for i in 0..n {
        for j in i..n {
            positions.push((i, j));
        }
    }
    if let OrderingPolicy::SeededShuffle { seed } = policy {
        let mut rng = stream(seed, &[tag::SWEEP, 1]);
        positions.shuffle(&mut rng);
    }
    let mut rank = vec![0; positions.len()];
    for (k, &(i, j)) in positions.iter().enumerate() {
        rank[tri(n, i, j)] = k + 1;
    }
    Ok(SwapSchedule { n, positions, rank, subset: None })
}

/// `(H − z)^{-1}` by LU; `H − z` is invertible whenever `Im z ≠ 0`.
pub fn direct_resolvent(h: MatRef<'_, C64>, z: C64) -> Mat<C64> {
    let n = h.nrows();
    let hz = Mat::from_fn(n, n, |i, j| if i == j { h[(i, j)] - z } else { h[(i, j)] });
    hz.partial_piv_lu().inverse()
}

/// Small dense complex matrix helpers for the `1 × 1` / `2 × 2` algebra.
type Small = Vec<Vec<C64>>;

fn small_mul(a: &Small, b: &Small) -> Small {
    let (r, k, c) = (a.len(), b.len(), b[0].len());
    (0..r)
        .map(|i| (0..c).map(|j| (0..k).fold(C64::new(0.0, 0.0), |s, t| s + a[i][t] * b[t][j])).collect())
        .collect()
}

fn small_inv(a: &Small) -> Option<Small> {
    match a.len() {
        1 => {
            let d = a[0][0];
            (d.norm() > 1e-300).then(|| vec![vec![d.inv()]])
        }
        2 => {
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            let scale = a.iter().flatten().fold(0.0f64, |m, x| m.max(x.norm())).max(1.0);
            if det.norm() <= 1e-12 * scale * scale {
                return None;
            }
            let inv = det.inv();
            Some(vec![vec![a[1][1] * inv, -a[0][1] * inv], vec![-a[1][0] * inv, a[0][0] * inv]])
        }
        _ => unreachable!(),
    }
}

/// Index set `U` and coupling `K` of the perturbation that adds `delta` at
/// `(a, b)` (and `δ̄` at `(b, a)`).
fn perturbation(a: usize, b: usize, delta: C64) -> (Vec<usize>, Small) {
    if a == b {
        (vec![a], vec![vec![C64::new(delta.re, 0.0)]])
    } else {
        let z = C64::new(0.0, 0.0);
        (vec![a, b], vec![vec![z, delta], vec![delta.conj(), z]])
    }
}

fn restrict(g: &Mat<C64>, u: &[usize]) -> Small {
    u.iter().map(|&i| u.iter().map(|&j| g[(i, j)]).collect()).collect()
}

/// Woodbury update of `g = (H − z)^{-1}` for `H ↦ H + δ e_a e_b* + δ̄ e_b e_a*`:
/// `G' = G − G U (I + K G_UU)^{-1} K U* G`. Returns `None` when the
/// capacitance matrix `I + K G_UU` is numerically singular.
pub fn woodbury_swap(g: &Mat<C64>, a: usize, b: usize, delta: C64) -> Option<Mat<C64>> {
    if delta == C64::new(0.0, 0.0) {
        return Some(g.clone());
    }
    let n = g.nrows();
    let (u, k) = perturbation(a, b, delta);
    let guu = restrict(g, &u);
    let mut cap = small_mul(&k, &guu);
    for (i, row) in cap.iter_mut().enumerate() {
        row[i] += C64::new(1.0, 0.0);
    }
    let mid = small_mul(&small_inv(&cap)?, &k);
    let r = u.len();
    // left = G U (N × r), right = mid · U* G (r × N).
    let left: Vec<Vec<C64>> = (0..r).map(|t| (0..n).map(|i| g[(i, u[t])]).collect()).collect();
    let right: Vec<Vec<C64>> = (0..r)
        .map(|s| {
            (0..n)
                .map(|j| (0..r).fold(C64::new(0.0, 0.0), |acc, t| acc + mid[s][t] * g[(u[t], j)]))
                .collect()
        })
        .collect();
    let mut out = g.clone();
    for j in 0..n {
        for i in 0..n {
            let mut corr = C64::new(0.0, 0.0);
            for s in 0..r {
                corr += left[s][i] * right[s][j];
            }
            out[(i, j)] -= corr;
        }
    }
    Some(out)
}

/// Current matrix and its resolvent at a fixed `z`.
#[derive(Debug, Clone)]
pub struct ResolventState {
    pub z: C64,
    pub h: Mat<C64>,
    pub g: Mat<C64>,
    /// Number of swaps that fell back to recomputing `G` from scratch.
    pub fallbacks: usize,
}

/// How a swap was applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwapPath {
    Unchanged,
    LowRank,
    Recomputed,
}

impl ResolventState {
    pub fn new(h: Mat<C64>, z: C64) -> Result<Self> {
        if !(z.im > 0.0) {
            return Err(Error::InvalidParameter(format!("Im z = {} must be positive", z.im)));
        }
        let g = direct_resolvent(h.as_ref(), z);
        Ok(ResolventState { z, h, g, fallbacks: 0 })
    }

    /// Sets `H_ab = new` (and `H_ba = conj(new)`), updating `G` by a rank-≤2
    /// correction, or recomputing it when the update is ill-conditioned.
    pub fn swap_step(&mut self, a: usize, b: usize, new: C64) -> SwapPath {
        let new = if a == b { C64::new(new.re, 0.0) } else { new };
        let delta = new - self.h[(a, b)];
        if delta == C64::new(0.0, 0.0) {
            return SwapPath::Unchanged;
        }
        self.h[(a, b)] = new;
        self.h[(b, a)] = new.conj();
        match woodbury_swap(&self.g, a, b, delta) {
            Some(g) => {
                self.g = g;
                SwapPath::LowRank
            }
            None => {
                self.fallbacks += 1;
                self.g = direct_resolvent(self.h.as_ref(), self.z);
                SwapPath::Recomputed
            }
        }
    }
}

/// Terms of the expansion of `G = (H⁰ + V − z)^{-1}` around `G⁰`, evaluated at
/// selected entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub pairs: Vec<(usize, usize)>,
    /// `terms[ℓ − 1][p] = (−1)^ℓ ((G⁰V)^ℓ G⁰)_{ij}` for pair `p`.
    pub terms: Vec<Vec<C64>>,
    /// `remainders[m][p] = (−1)^{m+1} ((G⁰V)^{m+1} G)_{ij}` for `m = 0..=m_max`.
    pub remainders: Vec<Vec<C64>>,
    /// Exact `G_ij`.
    pub exact: Vec<C64>,
    /// `max_{m,p} |G⁰_ij + Σ_{ℓ≤m} terms + remainder_m − G_ij| / max(|G_ij|, 1)`.
    pub telescoping_error: f64,
}

/// Largest supported expansion order.
pub const MAX_EXPANSION_ORDER: usize = 8;

/// Expansion of the resolvent after placing `value` at `(a, b)` of the matrix
/// whose resolvent is `g0`. Uses `(G⁰V)^ℓ G⁰ = G⁰U (K G⁰_UU)^{ℓ−1} K U*G⁰`.
pub fn expansion_terms(
    g0: &Mat<C64>,
    a: usize,
    b: usize,
    value: C64,
    m_max: usize,
    pairs: &[(usize, usize)],
) -> Result<ExpansionReport> {
    if m_max > MAX_EXPANSION_ORDER {
        return Err(Error::InvalidParameter(format!("expansion order {m_max} exceeds {MAX_EXPANSION_ORDER}")));
    }
    let g = woodbury_swap(g0, a, b, value)
        .ok_or_else(|| Error::Singular("capacitance matrix of the swap".into()))?;
    let zero = C64::new(0.0, 0.0);
    if value == zero {
        let exact: Vec<C64> = pairs.iter().map(|&(i, j)| g[(i, j)]).collect();
        return Ok(ExpansionReport {
            pairs: pairs.to_vec(),
            terms: vec![vec![zero; pairs.len()]; m_max],
            remainders: vec![vec![zero; pairs.len()]; m_max + 1],
            exact,
            telescoping_error: 0.0,
        });
    }
    let (u, k) = perturbation(a, b, value);
    let q = small_mul(&k, &restrict(g0, &u));
    let r = u.len();
    let identity: Small = (0..r).map(|i| (0..r).map(|j| C64::new((i == j) as u8 as f64, 0.0)).collect()).collect();
    let sandwich = |left: &Mat<C64>, core: &Small, right: &Mat<C64>, i: usize, j: usize| {
        let mut s = zero;
        for x in 0..r {
            for y in 0..r {
                s += left[(i, u[x])] * core[x][y] * right[(u[y], j)];
            }
        }
        s
    };
    let mut terms = Vec::with_capacity(m_max);
    let mut remainders = Vec::with_capacity(m_max + 1);
    let mut qpow = identity;
    for l in 0..=m_max {
        // qpow = Q^l. Remainder of order l is (−1)^{l+1} G⁰U Q^l K U*G and
        // term ℓ = l + 1 is (−1)^{l+1} G⁰U Q^l K U*G⁰.
        let core = small_mul(&qpow, &k);
        let sign = if l % 2 == 0 { -1.0 } else { 1.0 };
        remainders.push(pairs.iter().map(|&(i, j)| sandwich(g0, &core, &g, i, j) * sign).collect::<Vec<_>>());
        if l < m_max {
            terms.push(pairs.iter().map(|&(i, j)| sandwich(g0, &core, g0, i, j) * sign).collect::<Vec<_>>());
            qpow = small_mul(&qpow, &q);
        }
    }
    let exact: Vec<C64> = pairs.iter().map(|&(i, j)| g[(i, j)]).collect();
    let mut telescoping_error = 0.0f64;
    for m in 0..=m_max {
        for (p, &(i, j)) in pairs.iter().enumerate() {
            let mut s = g0[(i, j)];
            for t in terms.iter().take(m) {
                s += t[p];
            }
            s += remainders[m][p];
            telescoping_error = telescoping_error.max((s - exact[p]).norm() / exact[p].norm().max(1.0));
        }
    }
    Ok(ExpansionReport { pairs: pairs.to_vec(), terms, remainders, exact, telescoping_error })
}

fn ensemble_dist(ensemble: Ensemble) -> Result<EntryDistribution> {
    match ensemble {
        Ensemble::Gaussian => Ok(EntryDistribution::gaussian(1.0)),
        Ensemble::ThreePoint => make_four_moment_matched(1.0),
    }
}

/// Median remainder magnitudes of the expansion around a zeroed entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub ensemble: Ensemble,
    pub e: f64,
    pub eta: f64,
    pub trials: usize,
    pub seed: u64,
    /// `median_remainder[m] = median over trials of max_ij |remainder_m|`.
    pub median_remainder: Vec<f64>,
    /// `median_ratio[m − 1]` is the median over trials of
    /// `max|remainder_m| / max|remainder_{m−1}|`, `m = 1..=m_max`.
    pub median_ratio: Vec<f64>,
    /// Slope of `ln median_remainder[m]` against `m`.
    pub log_slope: f64,
    /// `−½ ln M`.
    pub expected_slope: f64,
    pub max_telescoping_error: f64,
    /// Per-trial `max|remainder_m|`, indexed `[trial][m]`.
    pub per_trial: Vec<Vec<f64>>,
}

/// Per-trial remainder maxima of the decay probe.
#[derive(Debug, Clone, PartialEq)]
struct DecayTrial {
    remainders: Vec<f64>,
    telescoping_error: f64,
}

/// Positions `(a, b)`, `a ≤ b`, whose entry variance is nonzero.
fn band_positions(p: &VarianceProfile, m: usize) -> Vec<(usize, usize)> {
    let n = p.w() * m;
    let mut out = Vec::new();
    for a in 0..n {
        for b in a..n {
            if p.s_tilde(a / m, b / m) > 0.0 {
                out.push((a, b));
            }
        }
    }
    out
}

/// Nonzero value for position `(a, b)`: the sample's own entry, redrawn from
/// fresh keys while it is exactly zero (a three-point atom at the origin).
fn nonzero_entry(p: &VarianceProfile, m: usize, dist: &EntryDistribution, seed: u64, a: usize, b: usize) -> C64 {
    let mut v = sample_entry(p, m, dist, seed, a, b);
    let mut k = 0u64;
    while v == C64::new(0.0, 0.0) {
        k += 1;
        v = sample_entry(p, m, dist, derive_seed(seed, &[tag::SAMPLE, k]), a, b);
    }
    v
}

fn decay_trial(
    p: &VarianceProfile,
    m: usize,
    dist: &EntryDistribution,
    positions: &[(usize, usize)],
    z: C64,
    m_max: usize,
    seed: u64,
) -> Result<DecayTrial> {
    let mut h = sample_matched_block_band(p, m, dist, seed)?.h;
    let n = h.nrows();
    let mut rng = stream(seed, &[tag::PAIRS]);
    let (a, b) = positions[rng.random_range(0..positions.len())];
    let value = nonzero_entry(p, m, dist, seed, a, b);
    h[(a, b)] = C64::new(0.0, 0.0);
    h[(b, a)] = C64::new(0.0, 0.0);
    let g0 = direct_resolvent(h.as_ref(), z);
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let report = expansion_terms(&g0, a, b, value, m_max, &pairs)?;
    let remainders = report
        .remainders
        .iter()
        .map(|r| r.iter().fold(0.0f64, |acc, x| acc.max(x.norm())))
        .collect();
    Ok(DecayTrial { remainders, telescoping_error: report.telescoping_error })
}

/// Monte Carlo probe of the decay of expansion remainders in the order `m`.
///
/// Each trial samples `H`, picks a random position with nonzero variance,
/// zeroes it to obtain `H⁰`, and expands `G = (H − z)^{-1}` around
/// `G⁰ = (H⁰ − z)^{-1}`. The remainder magnitude is the largest entry of the
/// remainder matrix.
#[allow(clippy::too_many_arguments)]
pub fn remainder_decay_probe(
    p: &VarianceProfile,
    m: usize,
    ensemble: Ensemble,
    z: C64,
    m_max: usize,
    trials: usize,
    seed: u64,
    parallel: usize,
) -> Result<DecayReport> {
    if !(z.im > 0.0) {
        return Err(Error::InvalidParameter(format!("Im z = {} must be positive", z.im)));
    }
    if trials == 0 || m == 0 {
        return Err(Error::InvalidParameter("trials and M must be positive".into()));
    }
    if m_max > MAX_EXPANSION_ORDER {
        return Err(Error::InvalidParameter(format!("expansion order {m_max} exceeds {MAX_EXPANSION_ORDER}")));
    }
    let dist = ensemble_dist(ensemble)?;
    let positions = band_positions(p, m);
    let results = par_map_trials(trials, parallel, |t| {
        decay_trial(p, m, &dist, &positions, z, m_max, trial_seed(seed, t))
    });
    let per_trial: Vec<DecayTrial> = results.into_iter().collect::<Result<_>>()?;
    let median_remainder: Vec<f64> = (0..=m_max)
        .map(|k| stats::median(&per_trial.iter().map(|t| t.remainders[k]).collect::<Vec<_>>()))
        .collect();
    let median_ratio: Vec<f64> = (1..=m_max)
        .map(|k| {
            let r: Vec<f64> = per_trial.iter().map(|t| t.remainders[k] / t.remainders[k - 1]).collect();
            stats::median(&r)
        })
        .collect();
    let xs: Vec<f64> = (0..=m_max).map(|k| k as f64).collect();
    let ys: Vec<f64> = median_remainder.iter().map(|r| r.ln()).collect();
    let log_slope = if m_max >= 1 { stats::linear_fit(&xs, &ys).1 } else { f64::NAN };
    Ok(DecayReport {
        n: p.w() * m,
        m,
        ensemble,
        e: z.re,
        eta: z.im,
        trials,
        seed,
        median_remainder,
        median_ratio,
        log_slope,
        expected_slope: -0.5 * (m as f64).ln(),
        max_telescoping_error: per_trial.iter().fold(0.0f64, |a, t| a.max(t.telescoping_error)),
        per_trial: per_trial.into_iter().map(|t| t.remainders).collect(),
    })
}

/// A resolvent entry `(a, b)` at spectral parameter `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntryProbe {
    pub a: usize,
    pub b: usize,
    pub e: f64,
    pub eta: f64,
}

impl EntryProbe {
    pub fn z(&self) -> C64 {
        C64::new(self.e, self.eta)
    }
}

/// Two-arm estimate of `E|G_ab|^{2n}` at one probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub probe: EntryProbe,
    pub mean: [f64; 2],
    pub std_err: [f64; 2],
    pub diff: f64,
    pub combined_std_err: f64,
    /// `diff / combined_std_err`.
    pub z_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub arms: [Ensemble; 2],
    pub moment: u32,
    pub trials: usize,
    pub seed: u64,
    pub pairs: Vec<PairComparison>,
    /// Trials dropped because the eigensolver check failed.
    pub failures: usize,
}

impl CompareReport {
    /// Number of probes with `|diff| ≤ k · combined_std_err`.
    pub fn within(&self, k: f64) -> usize {
        self.pairs.iter().filter(|c| c.diff.abs() <= k * c.combined_std_err).count()
    }
}

/// Random probes at a common `z`, positions drawn among entries with
/// nonzero variance.
pub fn random_probes(p: &VarianceProfile, m: usize, count: usize, z: C64, seed: u64) -> Vec<EntryProbe> {
    let positions = band_positions(p, m);
    let mut rng = stream(seed, &[tag::PAIRS]);
    (0..count)
        .map(|_| {
            let (a, b) = positions[rng.random_range(0..positions.len())];
            EntryProbe { a, b, e: z.re, eta: z.im }
        })
        .collect()
}

/// Monte Carlo comparison of `E|G_ab|^{2n}` between two ensembles.
///
/// Arm `k` uses trial seeds derived from `(seed, ARM, k)`, so identical arms
/// are independent samples of the same law.
#[allow(clippy::too_many_arguments)]
pub fn two_ensemble_moment_compare(
    p: &VarianceProfile,
    m: usize,
    arms: [Ensemble; 2],
    probes: &[EntryProbe],
    n_pow: u32,
    trials: usize,
    seed: u64,
    parallel: usize,
) -> Result<CompareReport> {
    if !(1..=2).contains(&n_pow) {
        return Err(Error::InvalidParameter(format!("moment order n = {n_pow} must be 1 or 2")));
    }
    if trials < 2 {
        return Err(Error::InvalidParameter("at least two trials per arm are required".into()));
    }
    let n = p.w() * m;
    if let Some(bad) = probes.iter().find(|q| q.a >= n || q.b >= n || !(q.eta > 0.0)) {
        return Err(Error::InvalidParameter(format!("invalid probe {bad:?}")));
    }
    let mut samples: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
    let mut failures = 0;
    for (k, &ensemble) in arms.iter().enumerate() {
        let arm_seed = derive_seed(seed, &[tag::ARM, k as u64]);
        let rows = par_map_trials(trials, parallel, |t| -> Result<Vec<f64>> {
            let h = sample_ensemble(p, m, ensemble, trial_seed(arm_seed, t))?.h;
            let d = decompose(h.as_ref())?;
            Ok(probes.iter().map(|q| d.green_entry(q.z(), q.a, q.b).norm().powi(2 * n_pow as i32)).collect())
        });
        for row in rows {
            match row {
                Ok(r) => samples[k].push(r),
                Err(Error::Eigensolver { .. }) => failures += 1,
                Err(e) => return Err(e),
            }
        }
    }
    let pairs = probes
        .iter()
        .enumerate()
        .map(|(i, &probe)| {
            let col = |k: usize| samples[k].iter().map(|r| r[i]).collect::<Vec<f64>>();
            let (x, y) = (col(0), col(1));
            let mean = [stats::mean(&x), stats::mean(&y)];
            let std_err = [stats::std_err(&x), stats::std_err(&y)];
            let diff = mean[0] - mean[1];
            let combined_std_err = std_err[0].hypot(std_err[1]);
            PairComparison { probe, mean, std_err, diff, combined_std_err, z_score: diff / combined_std_err }
        })
        .collect();
    Ok(CompareReport { n, m, arms, moment: n_pow, trials, seed, pairs, failures })
}

/// Outcome of a partial swap sweep from one ensemble to the other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub steps: usize,
    pub low_rank: usize,
    pub recomputed: usize,
    pub unchanged: usize,
    /// `max_ij |G_sweep − (H_final − z)^{-1}|` at the end of the sweep.
    pub final_deviation: f64,
    /// Largest deviation seen at the checkpoints.
    pub max_checkpoint_deviation: f64,
}

/// Replaces the entries of a Gaussian sample at the scheduled positions by
/// four-moment-matched draws, one swap at a time, tracking `G` by low-rank
/// updates and comparing against direct inversion every `checkpoint` steps.
pub fn swap_sweep(
    p: &VarianceProfile,
    m: usize,
    z: C64,
    schedule: &SwapSchedule,
    seed: u64,
    checkpoint: usize,
) -> Result<SweepReport> {
    let n = p.w() * m;
    if schedule.n != n {
        return Err(Error::Dimension(format!("schedule for N = {} used with N = {n}", schedule.n)));
    }
    let start = sample_gaussian_block_band(p, m, derive_seed(seed, &[tag::ARM, 0]))?.h;
    let target_seed = derive_seed(seed, &[tag::ARM, 1]);
    let target = make_four_moment_matched(1.0)?;
    let mut state = ResolventState::new(start, z)?;
    let (mut low_rank, mut recomputed, mut unchanged) = (0, 0, 0);
    let mut max_checkpoint_deviation = 0.0f64;
    let deviation = |s: &ResolventState| {
        let direct = direct_resolvent(s.h.as_ref(), s.z);
        crate::linalg::max_abs_c((&s.g - &direct).as_ref())
    };
    let steps = schedule.steps();
    for (done, &k) in steps.iter().enumerate() {
        let (a, b) = schedule.position(k);
        match state.swap_step(a, b, sample_entry(p, m, &target, target_seed, a, b)) {
            SwapPath::LowRank => low_rank += 1,
            SwapPath::Recomputed => recomputed += 1,
            SwapPath::Unchanged => unchanged += 1,
        }
        if checkpoint > 0 && (done + 1) % checkpoint == 0 {
            max_checkpoint_deviation = max_checkpoint_deviation.max(deviation(&state));
        }
    }
    let final_deviation = deviation(&state);
    Ok(SweepReport {
        steps: steps.len(),
        low_rank,
        recomputed,
        unchanged,
        final_deviation,
        max_checkpoint_deviation: max_checkpoint_deviation.max(final_deviation),
    })
}
