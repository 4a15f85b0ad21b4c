//! Block band ensembles: the Gaussian reference ensemble and
//! four-moment-matched three-point ensembles.
//!
//! Entry `(a, b)` with `a ≤ b` is a deterministic function of the sample seed
//! and the pair `(a, b)`: its random bits come from a keyed hash of the
//! counter `(seed, a, b)`, so a matrix can be filled in any order (or in
//! parallel) and still be bit-identical.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::profile::VarianceProfile;
use crate::rng::{derive_seed, tag};
use crate::{Error, Result, C64};

/// Law of the real part (and, independently, the imaginary part) of an entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntryDistribution {
    /// Centered normal with the given variance.
    Gaussian { variance: f64 },
    /// `±atom` with probability `prob` each, `0` otherwise.
    ThreePoint { atom: f64, prob: f64 },
}

/// Ensemble label stored with each sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ensemble {
    Gaussian,
    ThreePoint,
}

impl std::fmt::Display for Ensemble {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Ensemble::Gaussian => "gaussian",
            Ensemble::ThreePoint => "three-point",
        })
    }
}

impl std::str::FromStr for Ensemble {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Ensemble::Gaussian),
            "three-point" | "three_point" => Ok(Ensemble::ThreePoint),
            other => Err(Error::InvalidParameter(format!("unknown ensemble '{other}'"))),
        }
    }
}

/// `E Z^k` for `Z ~ N(0, v)`.
pub fn gaussian_moment(k: u32, v: f64) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let double_factorial: f64 = (1..k).step_by(2).map(|j| j as f64).product();
    double_factorial * v.powi(k as i32 / 2)
}

impl EntryDistribution {
    pub fn gaussian(variance: f64) -> Self {
        EntryDistribution::Gaussian { variance }
    }

    pub fn ensemble(&self) -> Ensemble {
        match self {
            EntryDistribution::Gaussian { .. } => Ensemble::Gaussian,
            EntryDistribution::ThreePoint { .. } => Ensemble::ThreePoint,
        }
    }

    /// Variance of one part under this law.
    pub fn variance(&self) -> f64 {
        match *self {
            EntryDistribution::Gaussian { variance } => variance,
            EntryDistribution::ThreePoint { atom, prob } => 2.0 * prob * atom * atom,
        }
    }

    /// `E X^k` for one part.
    pub fn moment(&self, k: u32) -> f64 {
        match *self {
            EntryDistribution::Gaussian { variance } => gaussian_moment(k, variance),
            EntryDistribution::ThreePoint { atom, prob } => {
                if k == 0 {
                    1.0
                } else if k % 2 == 1 {
                    0.0
                } else {
                    2.0 * prob * atom.powi(k as i32)
                }
            }
        }
    }

    /// Largest possible `|X|`; infinite for the Gaussian.
    pub fn support_bound(&self) -> f64 {
        match *self {
            EntryDistribution::Gaussian { .. } => f64::INFINITY,
            EntryDistribution::ThreePoint { atom, .. } => atom,
        }
    }

    /// The same law rescaled to per-part variance `v`.
    pub fn with_variance(&self, v: f64) -> Self {
        match *self {
            EntryDistribution::Gaussian { .. } => EntryDistribution::Gaussian { variance: v },
            EntryDistribution::ThreePoint { atom, prob } => {
                let scale = (v / self.variance()).sqrt();
                EntryDistribution::ThreePoint { atom: atom * scale, prob }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            EntryDistribution::Gaussian { variance } if variance > 0.0 && variance.is_finite() => Ok(()),
            EntryDistribution::ThreePoint { atom, prob }
                if atom > 0.0 && atom.is_finite() && prob > 0.0 && prob <= 0.5 =>
            {
                Ok(())
            }
            other => Err(Error::InvalidParameter(format!("invalid entry law {other:?}"))),
        }
    }

    /// Maps two independent uniforms on `(0, 1)` to a pair of independent
    /// unit-variance draws of this law's shape.
    fn unit_pair(&self, u1: f64, u2: f64) -> (f64, f64) {
        match *self {
            EntryDistribution::Gaussian { .. } => {
                let r = (-2.0 * u1.ln()).sqrt();
                let t = std::f64::consts::TAU * u2;
                (r * t.cos(), r * t.sin())
            }
            EntryDistribution::ThreePoint { atom, prob } => {
                let a = atom / self.variance().sqrt();
                let pick = |u: f64| {
                    if u < prob {
                        -a
                    } else if u < 2.0 * prob {
                        a
                    } else {
                        0.0
                    }
                };
                (pick(u1), pick(u2))
            }
        }
    }
}

/// Three-point law on `{−a, 0, a}` matching the first four moments of
/// `N(0, v)`: `a = √(3v)`, `P(±a) = 1/6`.
pub fn make_four_moment_matched(v: f64) -> Result<EntryDistribution> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::InvalidParameter(format!("variance {v} must be positive")));
    }
    Ok(EntryDistribution::ThreePoint { atom: (3.0 * v).sqrt(), prob: 1.0 / 6.0 })
}

/// One `(k, ℓ)` line of a [`MomentReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentPair {
    pub k: u32,
    pub l: u32,
    pub law: f64,
    pub gaussian: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub variance: f64,
    pub pairs: Vec<MomentPair>,
    pub max_abs_diff: f64,
    pub pass: bool,
}

/// Compares `E (Re h)^k (Im h)^ℓ` for `1 ≤ k + ℓ ≤ 4` between `dist` (rescaled
/// to per-part variance `v`) and the complex Gaussian with the same per-part
/// variance. Real and imaginary parts are independent in both laws, so each
/// mixed moment factorises.
pub fn verify_moment_matching(dist: &EntryDistribution, v: f64, tol: f64) -> MomentReport {
    let law = dist.with_variance(v);
    let mut pairs = Vec::new();
    let mut max_abs_diff = 0.0f64;
    for total in 1..=4u32 {
        for k in 0..=total {
            let l = total - k;
            let a = law.moment(k) * law.moment(l);
            let g = gaussian_moment(k, v) * gaussian_moment(l, v);
            max_abs_diff = max_abs_diff.max((a - g).abs());
            pairs.push(MomentPair { k, l, law: a, gaussian: g });
        }
    }
    MomentReport { variance: v, pairs, max_abs_diff, pass: max_abs_diff <= tol }
}

/// One Hermitian draw with its provenance.
#[derive(Debug, Clone)]
pub struct BlockBandSample {
    pub n: usize,
    pub m: usize,
    pub w: usize,
    pub h: Mat<C64>,
    pub ensemble: Ensemble,
    pub dist: EntryDistribution,
    pub seed: u64,
    pub profile_id: String,
}

#[inline]
fn to_open_unit(x: u64) -> f64 {
    ((x >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Keyed uniforms for entry `(a, b)`; symmetric in the sense that callers
/// always pass `a ≤ b`.
#[inline]
fn entry_uniforms(key: u64, a: usize, b: usize) -> (f64, f64) {
    let h1 = derive_seed(key, &[a as u64, b as u64, 0]);
    let h2 = derive_seed(key, &[a as u64, b as u64, 1]);
    (to_open_unit(h1), to_open_unit(h2))
}

/// The entry `h_ab` of the sample with the given seed, for any `(a, b)`;
/// entries below the diagonal are conjugates of those above.
pub fn sample_entry(
    p: &VarianceProfile,
    m: usize,
    dist: &EntryDistribution,
    seed: u64,
    a: usize,
    b: usize,
) -> C64 {
    let key = derive_seed(seed, &[tag::ENTRY]);
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let (u1, u2) = entry_uniforms(key, lo, hi);
    let (x, y) = dist.unit_pair(u1, u2);
    let st = p.s_tilde(lo / m, hi / m);
    let z = if lo == hi {
        C64::new((st / m as f64).sqrt() * x, 0.0)
    } else {
        let sd = (st / (2.0 * m as f64)).sqrt();
        C64::new(sd * x, sd * y)
    };
    if a <= b {
        z
    } else {
        z.conj()
    }
}

fn sample_block_band(
    p: &VarianceProfile,
    m: usize,
    dist: &EntryDistribution,
    seed: u64,
) -> Result<BlockBandSample> {
    if m == 0 {
        return Err(Error::InvalidParameter("block size M must be at least 1".into()));
    }
    dist.validate()?;
    let w = p.w();
    let n = m * w;
    let key = derive_seed(seed, &[tag::ENTRY]);
    let mut h = Mat::<C64>::zeros(n, n);
    for b in 0..n {
        for a in 0..=b {
            let (u1, u2) = entry_uniforms(key, a, b);
            let (x, y) = dist.unit_pair(u1, u2);
            let st = p.s_tilde(a / m, b / m);
            if a == b {
                h[(a, a)] = C64::new((st / m as f64).sqrt() * x, 0.0);
            } else {
                let sd = (st / (2.0 * m as f64)).sqrt();
                let z = C64::new(sd * x, sd * y);
                h[(a, b)] = z;
                h[(b, a)] = z.conj();
            }
        }
    }
    Ok(BlockBandSample {
        n,
        m,
        w,
        h,
        ensemble: dist.ensemble(),
        dist: *dist,
        seed,
        profile_id: p.id(),
    })
}

/// Gaussian block band matrix: off-diagonal parts i.i.d. `N(0, s̃_jk/2M)`,
/// diagonal real `N(0, s̃_jj/M)`.
pub fn sample_gaussian_block_band(p: &VarianceProfile, m: usize, seed: u64) -> Result<BlockBandSample> {
    sample_block_band(p, m, &EntryDistribution::gaussian(1.0), seed)
}

/// Block band matrix whose parts follow `dist`, rescaled entrywise to the
/// profile variance.
pub fn sample_matched_block_band(
    p: &VarianceProfile,
    m: usize,
    dist: &EntryDistribution,
    seed: u64,
) -> Result<BlockBandSample> {
    sample_block_band(p, m, dist, seed)
}

/// Samples from either ensemble by label; the three-point law is the
/// four-moment-matched one.
pub fn sample_ensemble(p: &VarianceProfile, m: usize, ensemble: Ensemble, seed: u64) -> Result<BlockBandSample> {
    match ensemble {
        Ensemble::Gaussian => sample_gaussian_block_band(p, m, seed),
        Ensemble::ThreePoint => sample_matched_block_band(p, m, &make_four_moment_matched(1.0)?, seed),
    }
}

/// Summary statistics of a sample, used for reporting without dumping `H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "W")]
    pub w: usize,
    pub ensemble: Ensemble,
    pub seed: u64,
    pub profile_id: String,
    pub max_abs_entry: f64,
    pub frobenius_sq_over_n: f64,
    pub hermiticity_defect: f64,
}

impl BlockBandSample {
    pub fn summary(&self) -> SampleSummary {
        let mut max_abs: f64 = 0.0;
        let mut fro = 0.0;
        let mut defect: f64 = 0.0;
        for j in 0..self.n {
            for i in 0..self.n {
                let z = self.h[(i, j)];
                max_abs = max_abs.max(z.norm());
                fro += z.norm_sqr();
                defect = defect.max((z - self.h[(j, i)].conj()).norm());
            }
        }
        SampleSummary {
            n: self.n,
            m: self.m,
            w: self.w,
            ensemble: self.ensemble,
            seed: self.seed,
            profile_id: self.profile_id.clone(),
            max_abs_entry: max_abs,
            frobenius_sq_over_n: fro / self.n as f64,
            hermiticity_defect: defect,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{build_custom_profile, build_torus_profile};
    use crate::stats;
    use proptest::prelude::*;

    #[test]
    fn matched_law_parameters() {
        let d = make_four_moment_matched(0.5).unwrap();
        match d {
            EntryDistribution::ThreePoint { atom, prob } => {
                assert!((atom - 1.5f64.sqrt()).abs() < 1e-15);
                assert_eq!(prob, 1.0 / 6.0);
            }
            _ => unreachable!(),
        }
        let v: f64 = 0.37;
        let d = make_four_moment_matched(v).unwrap();
        assert!((d.moment(2) - v).abs() < 1e-15);
        assert!((d.moment(4) - 3.0 * v * v).abs() < 1e-15);
        assert!(make_four_moment_matched(0.0).is_err());
    }

    #[test]
    fn moment_matching_report() {
        let v = 0.25;
        let d = make_four_moment_matched(v).unwrap();
        let r = verify_moment_matching(&d, v, 1e-15);
        assert_eq!(r.pairs.len(), 14);
        assert!(r.pass, "{r:?}");
        let p22 = r.pairs.iter().find(|p| p.k == 2 && p.l == 2).unwrap();
        assert!((p22.law - v * v).abs() < 1e-15 && (p22.gaussian - v * v).abs() < 1e-15);
        let p13 = r.pairs.iter().find(|p| p.k == 1 && p.l == 3).unwrap();
        assert_eq!((p13.law, p13.gaussian), (0.0, 0.0));

        let wrong = EntryDistribution::ThreePoint { atom: 1.0, prob: 0.25 };
        assert!(!verify_moment_matching(&wrong, v, 1e-9).pass);
    }

    #[test]
    fn hermitian_and_deterministic() {
        let p = build_torus_profile(1, 4, 0.2).unwrap();
        for ens in [Ensemble::Gaussian, Ensemble::ThreePoint] {
            let s1 = sample_ensemble(&p, 5, ens, 99).unwrap();
            let s2 = sample_ensemble(&p, 5, ens, 99).unwrap();
            assert_eq!(s1.summary().hermiticity_defect, 0.0);
            for i in 0..s1.n {
                assert_eq!(s1.h[(i, i)].im, 0.0);
                for j in 0..s1.n {
                    assert_eq!(s1.h[(i, j)], s2.h[(i, j)]);
                    assert_eq!(s1.h[(i, j)], sample_entry(&p, 5, &s1.dist, 99, i, j));
                }
            }
            let s3 = sample_ensemble(&p, 5, ens, 100).unwrap();
            assert_ne!(s1.h[(0, 1)], s3.h[(0, 1)]);
        }
    }

    #[test]
    fn three_point_entries_are_bounded() {
        let p = build_torus_profile(1, 4, 0.2).unwrap();
        let m = 6;
        let s = sample_ensemble(&p, m, Ensemble::ThreePoint, 3).unwrap();
        let bound = (3.0 * p.s_tilde_max() / (2.0 * m as f64)).sqrt() * 2f64.sqrt();
        assert!(s.summary().max_abs_entry <= bound + 1e-15);
    }

    #[test]
    fn wigner_normalisation_for_single_block() {
        let p = build_custom_profile(1, &[]).unwrap();
        let n = 200;
        let s = sample_gaussian_block_band(&p, n, 5).unwrap();
        let mean_sq = s.summary().frobenius_sq_over_n / n as f64;
        assert!((mean_sq - 1.0 / n as f64).abs() < 0.05 / n as f64);
    }

    fn entry_draws(ens: Ensemble, trials: usize, a: usize, b: usize) -> Vec<C64> {
        let p = build_custom_profile(2, &[(1, 2, 0.2)]).unwrap();
        let dist = match ens {
            Ensemble::Gaussian => EntryDistribution::gaussian(1.0),
            Ensemble::ThreePoint => make_four_moment_matched(1.0).unwrap(),
        };
        (0..trials as u64).map(|t| sample_entry(&p, 3, &dist, t, a, b)).collect()
    }

    #[test]
    fn gaussian_entry_variance_and_circularity() {
        // Entry (0, 4) lies in block (0, 1) with s̃ = 0.2, M = 3.
        let target = 0.2 / 3.0;
        let z = entry_draws(Ensemble::Gaussian, 100_000, 0, 4);
        let abs2: Vec<f64> = z.iter().map(|z| z.norm_sqr()).collect();
        assert!((stats::mean(&abs2) - target).abs() <= 4.0 * stats::std_err(&abs2));
        let re2: Vec<f64> = z.iter().map(|z| (z * z).re).collect();
        let im2: Vec<f64> = z.iter().map(|z| (z * z).im).collect();
        assert!(stats::mean(&re2).abs() <= 4.0 * stats::std_err(&re2));
        assert!(stats::mean(&im2).abs() <= 4.0 * stats::std_err(&im2));
        // Diagonal entry in block 0 with s̃ = 0.8.
        let d = entry_draws(Ensemble::Gaussian, 100_000, 1, 1);
        let d2: Vec<f64> = d.iter().map(|z| z.re * z.re).collect();
        assert!((stats::mean(&d2) - 0.8 / 3.0).abs() <= 4.0 * stats::std_err(&d2));
    }

    #[test]
    fn three_point_entry_fourth_moment() {
        let v = 0.2 / 6.0;
        let z = entry_draws(Ensemble::ThreePoint, 1_000_000, 0, 4);
        let x4: Vec<f64> = z.iter().map(|z| z.re.powi(4)).collect();
        assert!((stats::mean(&x4) - 3.0 * v * v).abs() <= 4.0 * stats::std_err(&x4));
        let y2: Vec<f64> = z.iter().map(|z| z.im * z.im).collect();
        assert!((stats::mean(&y2) - v).abs() <= 4.0 * stats::std_err(&y2));
    }

    #[test]
    fn ensemble_labels_roundtrip() {
        for e in [Ensemble::Gaussian, Ensemble::ThreePoint] {
            assert_eq!(e.to_string().parse::<Ensemble>().unwrap(), e);
        }
        assert!("cauchy".parse::<Ensemble>().is_err());
    }

    proptest! {
        #[test]
        fn matched_moments_for_any_variance(v in 1e-6f64..10.0) {
            let d = make_four_moment_matched(v).unwrap();
            let r = verify_moment_matching(&d, v, 1e-12 * (1.0 + v * v));
            prop_assert!(r.pass);
        }

        #[test]
        fn rescaling_preserves_shape(v in 1e-3f64..5.0, w in 1e-3f64..5.0) {
            let d = make_four_moment_matched(v).unwrap().with_variance(w);
            prop_assert!((d.variance() - w).abs() <= 1e-12 * w);
            prop_assert!((d.moment(4) - 3.0 * w * w).abs() <= 1e-12 * w * w);
        }
    }
}
