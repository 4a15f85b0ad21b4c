//! Pilot runs that freeze the Monte Carlo thresholds used by the acceptance
//! suite.
//!
//! ```text
//! cargo run --release -p bandlab-core --example pilot_calibration > crates/cli/tests/fixtures/calibration.json
//! ```

use bandlab_core::deloc::run_deloc_experiment;
use bandlab_core::ensembles::Ensemble;
use bandlab_core::locallaw::run_local_law_experiment;
use bandlab_core::profile::build_torus_profile;
use bandlab_core::spectral::SpectralDomain;
use bandlab_core::stats;
use serde_json::json;

const LOCAL_LAW_SEED: u64 = 0x5049_4c4f_5431;
const DELOC_SEED: u64 = 0x5049_4c4f_5432;
const LOCAL_LAW_SLACK: f64 = 1.25;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let parallel = std::thread::available_parallelism().map_or(1, |n| n.get());
    let p = build_torus_profile(1, 4, 0.2)?;

    let (n, m, kappa, eps2, n_e, n_eta, trials) = (512, 128, 0.3, 0.05, 5, 4, 20);
    let eta_lo = 5.0 / n as f64;
    let eta_hi = (n as f64).powf(eps2) / m as f64;
    let domain = SpectralDomain::with_eta_range(n, m, kappa, eps2, n_e, eta_lo, eta_hi, n_eta)?;
    let r = run_local_law_experiment(&p, m, Ensemble::Gaussian, &domain, trials, LOCAL_LAW_SEED, parallel)?;
    let max_median = r.aggregates.iter().map(|a| a.median_n()).fold(0.0, f64::max);

    let (dn, dm, dtrials) = (256usize, 64, 200);
    let deloc = run_deloc_experiment(&p, dm, Ensemble::Gaussian, kappa, dtrials, DELOC_SEED, parallel);
    let sups: Vec<f64> = deloc.iter().filter_map(|t| t.max_scaled_sup).collect();
    let max_sup = stats::max(&sups);
    let c = max_sup / (dn as f64).ln().sqrt();

    let doc = json!({
        "profile": { "kind": "torus", "d": 1, "w_side": 4, "a": 0.2 },
        "local_law": {
            "N": n, "M": m, "kappa": kappa, "eps2": eps2, "n_e": n_e, "n_eta": n_eta,
            "eta_min": eta_lo, "eta_max": eta_hi, "trials": trials, "seed": LOCAL_LAW_SEED,
            "ensemble": "gaussian",
            "max_median_sqrt_n_eta_psi": max_median,
            "slack": LOCAL_LAW_SLACK,
            "threshold": LOCAL_LAW_SLACK * max_median,
        },
        "deloc": {
            "N": dn, "M": dm, "kappa": kappa, "trials": dtrials, "seed": DELOC_SEED,
            "ensemble": "gaussian",
            "completed_trials": sups.len(),
            "max_scaled_sup": max_sup,
            "median_scaled_sup": stats::median(&sups),
            "C": c,
        },
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}
