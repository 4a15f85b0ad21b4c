//! Experiment execution. Each experiment renders its artifacts in memory and
//! reports whether its assertions passed.

use std::path::Path;

use anyhow::{bail, Context};
use bandlab_core::deloc::run_deloc_experiment;
use bandlab_core::ensembles::{sample_ensemble, Ensemble, SampleSummary};
use bandlab_core::grassmann::{
    complex_wick_check, random_integer_matrix, wick_determinant_check, MAX_COMPLEX_WICK,
};
use bandlab_core::lindeberg::{random_probes, remainder_decay_probe, two_ensemble_moment_compare};
use bandlab_core::locallaw::{hermitian_from_fn, run_local_law_experiment};
use bandlab_core::profile::{check_assumptions, profile_from_spec, ProfileSpec};
use bandlab_core::rng::{stream, tag};
use bandlab_core::saddle::{make_context, verify_all};
use bandlab_core::spectral::{
    decompose, m_sc, resolvent_entry_stats, self_consistency_residuals, stability_gamma, ResolventMode,
};
use bandlab_core::C64;
use faer::Mat;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{read_json, ExperimentConfig, ExperimentKind, ModeTag, DEFAULT_WICK_PAIRS};
use crate::report::{num, opt_num, to_json, Artifact, Table};

/// Rendered artifacts plus the verdict of the configured assertions.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub pass: bool,
    pub artifacts: Vec<Artifact>,
    /// Human-readable lines for stderr.
    pub notes: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, main: Vec<u8>) -> Self {
        Outcome { pass, artifacts: vec![Artifact { suffix: "", bytes: main }], notes: Vec::new() }
    }

    fn note(mut self, s: impl Into<String>) -> Self {
        self.notes.push(s.into());
        self
    }

    /// The main artifact's bytes.
    pub fn main(&self) -> &[u8] {
        &self.artifacts[0].bytes
    }
}

/// Runs the configured experiment.
pub fn run(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    bandlab_core::use_sequential_kernels();
    match cfg.experiment {
        ExperimentKind::ProfileCheck => profile_check(cfg),
        ExperimentKind::Sample => sample(cfg),
        ExperimentKind::Resolvent => resolvent(cfg),
        ExperimentKind::Locallaw => locallaw(cfg),
        ExperimentKind::Deloc => deloc(cfg),
        ExperimentKind::LindebergProbe => lindeberg_probe(cfg),
        ExperimentKind::LindebergCompare => lindeberg_compare(cfg),
        ExperimentKind::Saddle => saddle(cfg),
        ExperimentKind::Wick => wick(cfg),
    }
}

fn profile_check(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let p = cfg.variance_profile()?;
    let report = check_assumptions(&p, cfg.c, 1.0);
    Ok(Outcome::new(report.all_pass(), to_json(cfg, &report)))
}

/// Explicit matrix entries of a dumped sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDump {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

/// Sample artifact: enough to regenerate `H` bit for bit, and optionally
/// `H` itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDoc {
    pub summary: SampleSummary,
    pub profile: ProfileSpec,
    pub h: Option<MatrixDump>,
}

fn sample(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let p = cfg.variance_profile()?;
    let s = sample_ensemble(&p, cfg.m(), cfg.ensemble, cfg.seed())?;
    let summary = s.summary();
    let h = cfg.dump.then(|| MatrixDump {
        re: (0..s.n).map(|i| (0..s.n).map(|j| s.h[(i, j)].re).collect()).collect(),
        im: (0..s.n).map(|i| (0..s.n).map(|j| s.h[(i, j)].im).collect()).collect(),
    });
    let pass = summary.hermiticity_defect == 0.0;
    let doc = SampleDoc { summary, profile: p.to_spec(), h };
    Ok(Outcome::new(pass, to_json(cfg, &doc)))
}

/// Reads a sample artifact written by `bandlab sample`.
pub fn load_sample(path: &Path) -> anyhow::Result<SampleDoc> {
    let v: serde_json::Value = read_json(path)?;
    let report = v.get("report").cloned().unwrap_or(v);
    serde_json::from_value(report).with_context(|| format!("{} is not a sample artifact", path.display()))
}

fn resolvent(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let input = cfg.input.as_deref().expect("validated resolvent config has --in");
    let doc = load_sample(input)?;
    let p = profile_from_spec(&doc.profile)?;
    let (n, m) = (doc.summary.n, doc.summary.m);
    let h = match &doc.h {
        Some(d) => {
            if d.re.len() != n || d.im.len() != n {
                bail!("dumped matrix does not have N = {n} rows");
            }
            hermitian_from_fn(n, |i, j| C64::new(d.re[i][j], d.im[i][j]))
        }
        None => sample_ensemble(&p, m, doc.summary.ensemble, doc.summary.seed)?.h,
    };
    let d = decompose(h.as_ref())?;
    let domain = cfg.domain.build(n, m)?;
    let mode = match cfg.mode {
        ModeTag::Full => ResolventMode::Full,
        ModeTag::Sampled => ResolventMode::Sampled { pairs: cfg.pairs, seed: doc.summary.seed },
    };
    let mut table = Table::new(&[
        "E",
        "eta",
        "psi_off",
        "psi_diag",
        "lambda_d",
        "sqrtNeta_psi",
        "sqrtMeta_psi",
        "gamma_z",
        "max_abs_delta",
    ]);
    let mut pass = true;
    for z in domain.points() {
        let s = resolvent_entry_stats(&d, z, mode);
        let sc = self_consistency_residuals(&d, &p, m, z)?;
        let gamma = stability_gamma(&p, m, z).ok();
        let psi = s.psi();
        pass &= psi.is_finite() && psi <= 1.0 / z.im + m_sc(z).norm();
        table.push(vec![
            num(z.re),
            num(z.im),
            num(s.psi_off),
            num(s.psi_diag),
            num(s.lambda_d),
            num((n as f64 * z.im).sqrt() * psi),
            num((m as f64 * z.im).sqrt() * psi),
            opt_num(gamma),
            num(sc.max_abs_delta),
        ]);
    }
    Ok(Outcome::new(pass, table.to_csv(cfg)))
}

fn locallaw(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let p = cfg.variance_profile()?;
    let m = cfg.m();
    let domain = cfg.domain.build(p.w() * m, m)?;
    let r = run_local_law_experiment(&p, m, cfg.ensemble, &domain, cfg.trials, cfg.seed(), cfg.parallel)?;
    let mut records = Table::new(&[
        "trial",
        "z_index",
        "E",
        "eta",
        "psi_off",
        "psi_diag",
        "sqrtNeta_psi",
        "sqrtMeta_psi",
        "max_abs_delta",
    ]);
    let mut bounded = true;
    for x in &r.records {
        let z = C64::new(x.e, x.eta);
        let psi = x.psi_off.max(x.psi_diag);
        bounded &= psi.is_finite() && psi <= 1.0 / x.eta + m_sc(z).norm();
        records.push(vec![
            x.trial.to_string(),
            x.z_index.to_string(),
            num(x.e),
            num(x.eta),
            num(x.psi_off),
            num(x.psi_diag),
            num(x.sqrt_n_eta_psi),
            num(x.sqrt_m_eta_psi),
            num(x.max_abs_delta),
        ]);
    }
    let mut aggregates = Table::new(&[
        "z_index",
        "E",
        "eta",
        "count",
        "median_sqrtNeta_psi",
        "q90_sqrtNeta_psi",
        "median_sqrtMeta_psi",
        "q90_sqrtMeta_psi",
    ]);
    let mut worst = 0.0f64;
    for a in &r.aggregates {
        worst = worst.max(a.median_n());
        aggregates.push(vec![
            a.z_index.to_string(),
            num(a.e),
            num(a.eta),
            a.count.to_string(),
            num(a.median_n()),
            num(a.n_quantiles[4]),
            num(a.median_m()),
            num(a.m_quantiles[4]),
        ]);
    }
    let within = cfg.threshold.is_none_or(|t| worst <= t);
    let pass = r.failures.is_empty() && bounded && within;
    let mut out = Outcome::new(pass, records.to_csv(cfg))
        .note(format!("max per-z median sqrt(N eta) Psi = {worst}"))
        .note(format!("failed trials: {}", r.failures.len()));
    if let Some(t) = cfg.threshold {
        out = out.note(format!("threshold {t}: {}", if within { "within" } else { "exceeded" }));
    }
    out.artifacts.push(Artifact { suffix: "aggregates.csv", bytes: aggregates.to_csv(cfg) });
    Ok(out)
}

fn deloc(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let p = cfg.variance_profile()?;
    let m = cfg.m();
    let n = p.w() * m;
    let trials = run_deloc_experiment(&p, m, cfg.ensemble, cfg.domain.kappa, cfg.trials, cfg.seed(), cfg.parallel);
    let t_n = cfg.threshold.map(|c| c * (n as f64).ln().sqrt());
    let mut table = Table::new(&["trial", "bulk_count", "degenerate_count", "max_scaled_sup", "threshold", "within", "error"]);
    let (mut within, mut in_range) = (0usize, true);
    for t in &trials {
        let ok = match (t.max_scaled_sup, t_n) {
            (Some(x), Some(th)) => x <= th,
            _ => false,
        };
        within += ok as usize;
        if let Some(x) = t.max_scaled_sup {
            in_range &= (1.0 - 1e-12..=(n as f64).sqrt() * (1.0 + 1e-12)).contains(&x);
        }
        table.push(vec![
            t.trial.to_string(),
            t.bulk_count.to_string(),
            t.degenerate_count.to_string(),
            opt_num(t.max_scaled_sup),
            opt_num(t_n),
            if t_n.is_some() { ok.to_string() } else { String::new() },
            t.error.clone().unwrap_or_default(),
        ]);
    }
    let rate = within as f64 / trials.len() as f64;
    let pass = in_range && t_n.is_none_or(|_| rate >= 0.95);
    let mut out = Outcome::new(pass, table.to_csv(cfg));
    if let Some(th) = t_n {
        out = out.note(format!("T(N) = {th}, pass rate {rate}"));
    }
    Ok(out)
}

fn probe_z(cfg: &ExperimentConfig) -> C64 {
    let [e, eta] = cfg.z.unwrap_or([0.0, 1.0 / cfg.m() as f64]);
    C64::new(e, eta)
}

/// Acceptance band `[M^{−1/2}/3, 3M^{−1/2}]` for consecutive remainder ratios.
pub fn ratio_band(m: usize) -> (f64, f64) {
    let s = 1.0 / (m as f64).sqrt();
    (s / 3.0, 3.0 * s)
}

/// Telescoping tolerance of the probe, relative to `1/η`.
pub const PROBE_TELESCOPING_TOL: f64 = 1e-10;

fn lindeberg_probe(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let p = cfg.variance_profile()?;
    let m = cfg.m();
    let z = probe_z(cfg);
    let r = remainder_decay_probe(&p, m, cfg.ensemble, z, cfg.m_max, cfg.trials, cfg.seed(), cfg.parallel)?;
    let (lo, hi) = ratio_band(m);
    let mut table = Table::new(&["m", "median_remainder", "median_ratio", "ratio_lo", "ratio_hi", "in_band"]);
    let mut in_band = true;
    for (k, rem) in r.median_remainder.iter().enumerate() {
        let (ratio, ok) = match k {
            0 => (String::new(), String::new()),
            _ => {
                let x = r.median_ratio[k - 1];
                let ok = (lo..=hi).contains(&x);
                in_band &= ok;
                (num(x), ok.to_string())
            }
        };
        table.push(vec![k.to_string(), num(*rem), ratio, num(lo), num(hi), ok]);
    }
    let telescoping_ok = r.max_telescoping_error <= PROBE_TELESCOPING_TOL / z.im;
    Ok(Outcome::new(in_band && telescoping_ok, table.to_csv(cfg))
        .note(format!("max telescoping error {}", r.max_telescoping_error))
        .note(format!("log slope {} (reference {})", r.log_slope, r.expected_slope)))
}

fn lindeberg_compare(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let p = cfg.variance_profile()?;
    let m = cfg.m();
    let z = probe_z(cfg);
    let probes = random_probes(&p, m, cfg.probes, z, cfg.seed());
    let arms = [Ensemble::Gaussian, Ensemble::ThreePoint];
    let r = two_ensemble_moment_compare(&p, m, arms, &probes, cfg.moment, cfg.trials, cfg.seed(), cfg.parallel)?;
    let mut table = Table::new(&[
        "a",
        "b",
        "E",
        "eta",
        "mean_gaussian",
        "mean_three_point",
        "se_gaussian",
        "se_three_point",
        "diff",
        "combined_se",
        "z_score",
    ]);
    for c in &r.pairs {
        table.push(vec![
            c.probe.a.to_string(),
            c.probe.b.to_string(),
            num(c.probe.e),
            num(c.probe.eta),
            num(c.mean[0]),
            num(c.mean[1]),
            num(c.std_err[0]),
            num(c.std_err[1]),
            num(c.diff),
            num(c.combined_std_err),
            num(c.z_score),
        ]);
    }
    let within = r.within(3.0);
    let needed = (9 * r.pairs.len()).div_ceil(10);
    Ok(Outcome::new(within >= needed, table.to_csv(cfg))
        .note(format!("{within}/{} probes within 3 combined standard errors", r.pairs.len()))
        .note(format!("eigensolver failures: {}", r.failures)))
}

fn saddle(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let p = cfg.variance_profile()?;
    let ctx = make_context(cfg.energy, cfg.domain.kappa, &p)?;
    let report = verify_all(&ctx, cfg.samples, cfg.seed(), cfg.parallel)?;
    Ok(Outcome::new(report.pass(), to_json(cfg, &report)))
}

/// Random strictly increasing index list of length `l` from `0..k`.
fn random_index_set(k: usize, l: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut v = rand::seq::index::sample(rng, k, l).into_vec();
    v.sort_unstable();
    v
}

/// `A = BB* + I/2 + iK` with `K` Hermitian, so `(A + A*)/2` is positive
/// definite.
fn random_complex_wick_matrix(k: usize, rng: &mut impl Rng) -> Mat<C64> {
    let b: Vec<Vec<C64>> =
        (0..k).map(|_| (0..k).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()).collect();
    let kh: Vec<Vec<C64>> =
        (0..k).map(|_| (0..k).map(|_| C64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))).collect()).collect();
    Mat::from_fn(k, k, |r, c| {
        let bb: C64 = (0..k).map(|x| b[r][x] * b[c][x].conj()).sum();
        let id = if r == c { 0.5 } else { 0.0 };
        let herm_k = (kh[r][c] + kh[c][r].conj()) * 0.5;
        bb + C64::new(id, 0.0) + C64::new(0.0, 1.0) * herm_k
    })
}

fn wick(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let seed = cfg.seed();
    let mut table = Table::new(&["check", "k", "l", "cases", "agreements", "max_abs_z", "pass"]);
    let mut pass = true;
    for k in 1..=cfg.k {
        for l in 0..=k.min(3) {
            let mut rng = stream(seed, &[tag::SAMPLE, k as u64, l as u64]);
            let (mut cases, mut agree) = (0usize, 0usize);
            for _ in 0..cfg.trials {
                let b = random_integer_matrix(k, 3, &mut rng);
                for _ in 0..DEFAULT_WICK_PAIRS {
                    let i = random_index_set(k, l, &mut rng);
                    let j = random_index_set(k, l, &mut rng);
                    cases += 1;
                    agree += wick_determinant_check(&b, &i, &j)?.equal as usize;
                }
            }
            let ok = agree == cases;
            pass &= ok;
            table.push(vec!["determinant".into(), k.to_string(), l.to_string(), cases.to_string(), agree.to_string(), String::new(), ok.to_string()]);
        }
    }
    for k in 1..=cfg.k.min(MAX_COMPLEX_WICK) {
        for l in 0..=k {
            let mut rng = stream(seed, &[tag::PAIRS, k as u64, l as u64]);
            let a = random_complex_wick_matrix(k, &mut rng);
            let i = random_index_set(k, l, &mut rng);
            let j = random_index_set(k, l, &mut rng);
            let mc_seed = bandlab_core::rng::derive_seed(seed, &[tag::SWEEP, k as u64, l as u64]);
            let r = complex_wick_check(&a, &i, &j, cfg.samples, mc_seed)?;
            let ok = r.zscore <= 4.0;
            pass &= ok;
            table.push(vec![
                "complex-mc".into(),
                k.to_string(),
                l.to_string(),
                r.samples.to_string(),
                (ok as usize).to_string(),
                num(r.zscore),
                ok.to_string(),
            ]);
        }
    }
    Ok(Outcome::new(pass, table.to_csv(cfg)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{resolve, ProfileRef, Settings};

    fn path2() -> Option<ProfileRef> {
        Some(ProfileRef::Inline(ProfileSpec { w: 2, edges: vec![(1, 2, 0.25)] }))
    }

    fn settings(kind: ExperimentKind) -> Settings {
        Settings { experiment: Some(kind), profile: path2(), seed: Some(5), ..Settings::default() }
    }

    #[test]
    fn ratio_band_at_m64() {
        assert_eq!(ratio_band(64), (0.125 / 3.0, 0.375));
    }

    #[test]
    fn index_sets_are_increasing_and_distinct() {
        let mut rng = stream(1, &[0]);
        for _ in 0..50 {
            let v = random_index_set(5, 3, &mut rng);
            assert!(v.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn complex_wick_matrix_has_positive_hermitian_part() {
        let mut rng = stream(2, &[0]);
        let a = random_complex_wick_matrix(2, &mut rng);
        let d0 = a[(0, 0)].re;
        let det = a[(0, 0)].re * a[(1, 1)].re - (a[(0, 1)] + a[(1, 0)].conj()).norm_sqr() / 4.0;
        assert!(d0 > 0.0 && det > 0.0);
    }

    #[test]
    fn small_wick_run_passes() {
        let cfg = resolve(Settings { k: Some(2), trials: Some(3), samples: Some(20_000), ..settings(ExperimentKind::Wick) }).unwrap();
        let out = run(&cfg).unwrap();
        assert!(out.pass, "{}", String::from_utf8_lossy(out.main()));
    }

    #[test]
    fn sample_round_trips_through_resolvent() {
        let dir = std::env::temp_dir().join(format!("bandlab-run-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let mut bodies = Vec::new();
        for dump in [false, true] {
            let cfg = resolve(Settings { m: Some(8), dump: Some(dump), ..settings(ExperimentKind::Sample) }).unwrap();
            let out = run(&cfg).unwrap();
            assert!(out.pass);
            let path = dir.join(format!("s{dump}.json"));
            std::fs::write(&path, out.main()).unwrap();
            let rcfg = resolve(Settings {
                experiment: Some(ExperimentKind::Resolvent),
                input: Some(path),
                domain: Some(crate::config::DomainSettings { n_e: Some(3), n_eta: Some(2), ..Default::default() }),
                ..Settings::default()
            })
            .unwrap();
            let r = run(&rcfg).unwrap();
            assert!(r.pass);
            let text = String::from_utf8(r.main().to_vec()).unwrap();
            assert_eq!(text.lines().nth(1).unwrap(), "E,eta,psi_off,psi_diag,lambda_d,sqrtNeta_psi,sqrtMeta_psi,gamma_z,max_abs_delta");
            assert_eq!(text.lines().count(), 2 + 6);
            bodies.push(text);
        }
        let strip = |s: &str| s.lines().skip(1).collect::<Vec<_>>().join("\n");
        assert_eq!(strip(&bodies[0]), strip(&bodies[1]));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn saddle_report_has_one_block_per_check() {
        let cfg = resolve(Settings { samples: Some(200), energy: Some(0.5), ..settings(ExperimentKind::Saddle) }).unwrap();
        let out = run(&cfg).unwrap();
        assert!(out.pass);
        let v: serde_json::Value = serde_json::from_slice(out.main()).unwrap();
        for key in ["identities", "l_lower_bound", "k_lower_bound", "measure_bound", "sv_positivity", "minors"] {
            assert!(v["report"].get(key).is_some(), "missing {key}");
        }
    }
}
