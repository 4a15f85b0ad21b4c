//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use bandlab::config::{ExperimentKind, Settings};
use bandlab_core::deloc::{run_deloc_experiment, spectral_identity_check};
use bandlab_core::ensembles::{sample_gaussian_block_band, Ensemble};
use bandlab_core::lindeberg::{direct_resolvent, random_probes, remainder_decay_probe, two_ensemble_moment_compare};
use bandlab_core::linalg::{max_abs_c, sym_eigenvalues};
use bandlab_core::locallaw::{run_local_law_experiment, schur_identity_check, SchurMethod};
use bandlab_core::profile::{build_custom_profile, build_torus_profile, flattened_variance_matrix, VarianceProfile};
use bandlab_core::rng::stream;
use bandlab_core::saddle::{
    make_context, saddle_identities, submatrix_det_ratio_check, verify_k_lower_bound, verify_l_lower_bound,
    verify_measure_bound, verify_sv_positivity, MEASURE_BLOCK,
};
use bandlab_core::spectral::{build_domain, decompose, m_sc, SpectralDomain};
use bandlab_core::{trial_seed, C64};
use rand::Rng;
use serde_json::Value;

type Verdict = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Verdict);

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn calibration() -> Value {
    serde_json::from_str(include_str!("fixtures/calibration.json")).expect("calibration fixture parses")
}

fn path2() -> VarianceProfile {
    build_custom_profile(2, &[(1, 2, 0.25)]).unwrap()
}

fn torus(w: usize) -> VarianceProfile {
    build_torus_profile(1, w, 0.2).unwrap()
}

fn energies() -> Vec<f64> {
    let edge = std::f64::consts::SQRT_2 - 0.31;
    vec![0.0, 0.5, -0.5, 1.0, -1.0, edge, -edge]
}

fn c1_self_consistent_equation() -> Verdict {
    let d = build_domain(1024, 256, 0.3, 0.05, 40, 40).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut im_positive = true;
    for z in d.points() {
        let m = m_sc(z);
        worst = worst.max((m * m + z * m + 1.0).norm());
        im_positive &= m.im > 0.0;
    }
    Ok((worst <= 1e-12 && im_positive, format!("max |m² + zm + 1| = {worst:.2e} over 1600 points")))
}

fn c2_saddle_identities() -> Verdict {
    let mut worst = 0.0f64;
    for p in [path2(), torus(8)] {
        for e in energies() {
            let ctx = make_context(e, 0.3, &p).map_err(|x| x.to_string())?;
            worst = worst.max(saddle_identities(&ctx).max_residual);
        }
    }
    Ok((worst <= 1e-12, format!("max residual {worst:.2e}")))
}

fn c3_lower_bound_sweeps() -> Verdict {
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, p, e) in [("W=2 path", path2(), 0.5), ("W=8 torus", torus(8), 1.0)] {
        let ctx = make_context(e, 0.3, &p).map_err(|x| x.to_string())?;
        let l = verify_l_lower_bound(&ctx, 100_000, 31, workers());
        let k = verify_k_lower_bound(&ctx, 100_000, 32, workers());
        pass &= l.pass() && k.pass();
        detail.push(format!(
            "{name}: min Re L̊ {:.2e} (far ratio {:.3}), min Re K̊ {:.2e} (far ratio {:.3})",
            l.min_value, l.min_far_ratio, k.min_value, k.min_far_ratio
        ));
    }
    Ok((pass, detail.join("; ")))
}

fn c4_measure_bound() -> Verdict {
    let mut pass = true;
    let mut worst = f64::INFINITY;
    for (p, e) in [(path2(), 0.0), (torus(8), -0.5)] {
        let ctx = make_context(e, 0.3, &p).map_err(|x| x.to_string())?;
        let r = verify_measure_bound(&ctx, MEASURE_BLOCK, 100_000, 41, workers());
        pass &= r.pass && r.min_log_margin >= -1e-10;
        worst = worst.min(r.min_log_margin);
    }
    Ok((pass, format!("min log-margin {worst:.3e}")))
}

fn c5_wick() -> Verdict {
    let flags = Settings {
        experiment: Some(ExperimentKind::Wick),
        seed: Some(51),
        k: Some(5),
        trials: Some(200),
        samples: Some(1_000_000),
        parallel: Some(workers()),
        ..Settings::default()
    };
    let cfg = bandlab::parse_config(None, flags).map_err(|e| e.to_string())?;
    let out = bandlab::run(&cfg).map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(out.main()).into_owned();
    let mut exact = 0usize;
    let mut max_z = 0.0f64;
    for line in text.lines().skip(2) {
        let f: Vec<&str> = line.split(',').collect();
        match f[0] {
            "determinant" => exact += f[4].parse::<usize>().unwrap_or(0),
            _ => max_z = max_z.max(f[5].parse().unwrap_or(f64::INFINITY)),
        }
    }
    Ok((out.pass, format!("{exact} exact determinant agreements; complex MC max |z| = {max_z:.2}")))
}

fn c6_matrix_facts() -> Verdict {
    let mut spec_dev = 0.0f64;
    for (p, m) in [(path2(), 32usize), (torus(4), 64), (torus(8), 16)] {
        let t = flattened_variance_matrix(&p, m).map_err(|e| e.to_string())?;
        let got = sym_eigenvalues(t.as_ref()).map_err(|e| e.to_string())?;
        let mut expect = sym_eigenvalues(p.s_tilde_matrix().as_ref()).map_err(|e| e.to_string())?;
        expect.extend(std::iter::repeat_n(0.0, p.w() * (m - 1)));
        let mut got = got;
        got.sort_by(f64::total_cmp);
        expect.sort_by(f64::total_cmp);
        for (x, y) in got.iter().zip(&expect) {
            spec_dev = spec_dev.max((x - y).abs());
        }
    }
    let mut pass = spec_dev <= 1e-9;
    let (mut cof, mut viol, mut min_sv) = (0.0f64, 0usize, f64::INFINITY);
    let profiles = [path2(), torus(8), build_torus_profile(2, 2, 0.1).unwrap(), torus(5)];
    for (k, p) in profiles.iter().enumerate() {
        let ctx = make_context(0.3, 0.3, p).map_err(|e| e.to_string())?;
        let gamma = p.gamma_fit.unwrap_or(1.0).max(0.0);
        let minors = submatrix_det_ratio_check(&ctx, gamma, 1000, 61 + k as u64).map_err(|e| e.to_string())?;
        let sv = verify_sv_positivity(p, 1000, 71 + k as u64).map_err(|e| e.to_string())?;
        pass &= minors.pass && sv.pass;
        cof = cof.max(minors.cofactor_residual);
        viol += minors.violations;
        min_sv = min_sv.min(sv.min_eigenvalue - sv.c0);
    }
    Ok((
        pass,
        format!(
            "spectrum dev {spec_dev:.1e}, cofactor residual {cof:.1e}, minor violations {viol}, min λ(I+𝕊ᵛ) − c₀ = {min_sv:.3e}"
        ),
    ))
}

fn c7_local_law() -> Verdict {
    let cal = calibration();
    let ll = &cal["local_law"];
    let threshold = ll["threshold"].as_f64().ok_or("fixture lacks local_law.threshold")?;
    let n_e = ll["n_e"].as_u64().unwrap() as usize;
    let n_eta = ll["n_eta"].as_u64().unwrap() as usize;
    let (n, m, eps2) = (1024usize, 256usize, 0.05);
    let p = torus(4);
    let domain = SpectralDomain::with_eta_range(
        n,
        m,
        0.3,
        eps2,
        n_e,
        5.0 / n as f64,
        (n as f64).powf(eps2) / m as f64,
        n_eta,
    )
    .map_err(|e| e.to_string())?;
    let r = run_local_law_experiment(&p, m, Ensemble::Gaussian, &domain, 20, 7001, workers()).map_err(|e| e.to_string())?;
    let worst = r.aggregates.iter().map(|a| a.median_n()).fold(0.0, f64::max);
    let eta0 = domain.etas[0];
    let sqrt_w = (p.w() as f64).sqrt();
    let growth_dev = r
        .aggregates
        .iter()
        .filter(|a| a.eta == eta0)
        .map(|a| (a.median_n() / a.median_m() - sqrt_w).abs())
        .fold(0.0, f64::max);
    let pass = r.failures.is_empty() && worst <= threshold && growth_dev <= 1e-9;
    Ok((
        pass,
        format!(
            "max per-z median √(Nη)Ψ = {worst:.3} vs frozen threshold {threshold:.3}; √(Nη)/√(Mη) median ratio at η = {eta0:.2e} deviates from √W by {growth_dev:.1e}"
        ),
    ))
}

fn c8_deloc() -> Verdict {
    let cal = calibration();
    let c = cal["deloc"]["C"].as_f64().ok_or("fixture lacks deloc.C")?;
    let p = torus(4);
    let mut rates = Vec::new();
    for (n, seed) in [(256usize, 8001u64), (1024, 8002)] {
        let trials = run_deloc_experiment(&p, n / 4, Ensemble::Gaussian, 0.3, 50, seed, workers());
        let t = c * (n as f64).ln().sqrt();
        let ok = trials.iter().filter(|x| x.max_scaled_sup.is_some_and(|s| s <= t)).count();
        rates.push((n, t, ok as f64 / trials.len() as f64));
    }
    let pass = rates.iter().find(|r| r.0 == 1024).is_some_and(|r| r.2 >= 0.95);
    let detail = rates.iter().map(|(n, t, r)| format!("N={n}: T={t:.3}, pass rate {r:.2}")).collect::<Vec<_>>().join("; ");
    Ok((pass, detail))
}

fn c9_four_moment() -> Verdict {
    let p = torus(4);
    let m = 64;
    let z = C64::new(0.0, 1.0 / m as f64);
    let probes = random_probes(&p, m, 10, z, 9001);
    let r = two_ensemble_moment_compare(&p, m, [Ensemble::Gaussian, Ensemble::ThreePoint], &probes, 1, 400, 9002, workers())
        .map_err(|e| e.to_string())?;
    let within = r.within(3.0);
    let max_z = r.pairs.iter().map(|c| c.z_score.abs()).fold(0.0, f64::max);
    Ok((within >= 9, format!("{within}/10 positions within 3 se (max |z| {max_z:.2})")))
}

fn c10_expansion() -> Verdict {
    let p = torus(4);
    let small = remainder_decay_probe(&p, 8, Ensemble::Gaussian, C64::new(0.0, 1.0 / 8.0), 4, 10, 10_001, workers())
        .map_err(|e| e.to_string())?;
    let m = 64;
    let r = remainder_decay_probe(&p, m, Ensemble::Gaussian, C64::new(0.0, 1.0 / m as f64), 4, 50, 10_002, workers())
        .map_err(|e| e.to_string())?;
    let (lo, hi) = bandlab::run::ratio_band(m);
    let in_band = r.median_ratio.iter().all(|x| (lo..=hi).contains(x));
    let pass = small.max_telescoping_error <= 1e-10 && in_band;
    let ratios = r.median_ratio.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    Ok((
        pass,
        format!(
            "telescoping error {:.1e} at N=32; ratios [{ratios}] in [{lo:.4}, {hi:.4}]",
            small.max_telescoping_error
        ),
    ))
}

fn c11_exact_identities() -> Verdict {
    let p = torus(4);
    let m = 16;
    let (mut ward, mut spectral, mut schur, mut resolvent) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for s in 0..3u64 {
        let h = sample_gaussian_block_band(&p, m, trial_seed(11_000, s as usize)).map_err(|e| e.to_string())?.h;
        let d = decompose(h.as_ref()).map_err(|e| e.to_string())?;
        let n = h.nrows();
        let mut rng = stream(11_001, &[s]);
        for _ in 0..20 {
            let z = C64::new(rng.random_range(-1.5..1.5), rng.random_range(0.05..1.0));
            let z2 = C64::new(rng.random_range(-1.5..1.5), rng.random_range(0.05..1.0));
            let a = rng.random_range(0..n);
            let g = d.green(z);
            let row: f64 = (0..n).map(|b| g[(a, b)].norm_sqr()).sum();
            let im_over_eta = g[(a, a)].im / z.im;
            ward = ward.max((row - im_over_eta).abs() / im_over_eta);
            spectral = spectral.max(spectral_identity_check(h.as_ref(), &d, z, a).residual);
            schur = schur.max(
                schur_identity_check(h.as_ref(), &d, a, z, SchurMethod::DirectMinor).map_err(|e| e.to_string())?.residual,
            );
            let g1 = direct_resolvent(h.as_ref(), z);
            let g2 = direct_resolvent(h.as_ref(), z2);
            let prod = &g1 * &g2;
            let diff = faer::Mat::from_fn(n, n, |i, j| g1[(i, j)] - g2[(i, j)] - (z - z2) * prod[(i, j)]);
            resolvent = resolvent.max(max_abs_c(diff.as_ref()));
        }
    }
    let worst = ward.max(spectral).max(schur).max(resolvent);
    Ok((
        worst <= 1e-8,
        format!("Ward {ward:.1e}, Im G spectral form {spectral:.1e}, Schur {schur:.1e}, resolvent {resolvent:.1e}"),
    ))
}

fn run_cli(args: &[&str], out: &Path, parallel: usize) -> Result<Vec<u8>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_bandlab"))
        .args(args)
        .args(["--parallel", &parallel.to_string(), "--out"])
        .arg(out)
        .stderr(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    if status.code() == Some(2) {
        return Err(format!("bandlab {} exited with an error", args.join(" ")));
    }
    std::fs::read(out).map_err(|e| e.to_string())
}

fn body(bytes: &[u8]) -> &[u8] {
    match bytes.iter().position(|&b| b == b'\n') {
        Some(i) if bytes.starts_with(b"# bandlab") => &bytes[i + 1..],
        _ => bytes,
    }
}

fn c12_determinism() -> Verdict {
    let dir: PathBuf = std::env::temp_dir().join(format!("bandlab-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let profile = dir.join("torus4.json");
    std::fs::write(&profile, serde_json::to_vec(&torus(4).to_spec()).unwrap()).map_err(|e| e.to_string())?;
    let prof = profile.to_str().unwrap();
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("locallaw", vec!["locallaw", "--profile", prof, "--M", "16", "--trials", "6", "--domain", r#"{"n_e":3,"n_eta":2}"#, "--seed", "12"]),
        ("deloc", vec!["deloc", "--profile", prof, "--M", "16", "--trials", "8", "--seed", "12"]),
        ("lindeberg probe", vec!["lindeberg", "probe", "--profile", prof, "--M", "8", "--trials", "6", "--seed", "12"]),
        ("lindeberg compare", vec!["lindeberg", "compare", "--profile", prof, "--M", "8", "--trials", "20", "--probes", "4", "--seed", "12"]),
        ("saddle verify", vec!["saddle", "verify", "--profile", prof, "--E", "0.4", "--samples", "3000", "--seed", "12"]),
        ("wick", vec!["wick", "--k", "3", "--trials", "5", "--samples", "5000", "--seed", "12"]),
        ("sample", vec!["sample", "--profile", prof, "--M", "8", "--dump", "--seed", "12"]),
    ];
    let mut differing = Vec::new();
    for (i, (name, args)) in runs.iter().enumerate() {
        let a = run_cli(args, &dir.join(format!("{i}-p1")), 1)?;
        let b = run_cli(args, &dir.join(format!("{i}-p8")), 8)?;
        if a.is_empty() || body(&a) != body(&b) {
            differing.push(*name);
        }
    }
    std::fs::remove_dir_all(&dir).ok();
    let detail = if differing.is_empty() {
        format!("{} experiments byte-identical at --parallel 1 and 8", runs.len())
    } else {
        format!("outputs differ: {}", differing.join(", "))
    };
    Ok((differing.is_empty(), detail))
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: Vec<Criterion> = vec![
        ("self-consistent equation", c1_self_consistent_equation),
        ("saddle identities", c2_saddle_identities),
        ("lower-bound sweeps", c3_lower_bound_sweeps),
        ("measure bound", c4_measure_bound),
        ("Wick determinant identity", c5_wick),
        ("matrix facts", c6_matrix_facts),
        ("local law", c7_local_law),
        ("delocalization", c8_deloc),
        ("four-moment universality", c9_four_moment),
        ("expansion telescoping and decay", c10_expansion),
        ("exact spectral identities", c11_exact_identities),
        ("determinism", c12_determinism),
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (k, (name, f)) in criteria.into_iter().enumerate() {
        let id = k + 1;
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = verdict.unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += !pass as usize;
        println!("criterion {id:>2} {}: {name}: {detail} [{secs:.1}s]", if pass { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
