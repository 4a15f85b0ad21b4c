use std::path::PathBuf;
use std::process::ExitCode;

use bandlab::config::{parse_domain_arg, DomainSettings, ModeTag, ProfileRef};
use bandlab::report::write_artifacts;
use bandlab::{parse_config, run, ExperimentKind, Settings};
use bandlab_core::ensembles::Ensemble;
use clap::{Args, Parser, Subcommand};

/// Numerical laboratory for random block band matrices.
///
/// Settings come from `--config <file>` (JSON) and from flags; flags win.
/// Stochastic experiments require `--seed`. Exit status is 0 when every
/// configured assertion passes, 1 when one fails and 2 on errors.
#[derive(Parser, Debug)]
#[command(name = "bandlab", version)]
struct Cli {
    /// Master seed (required for stochastic experiments).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for independent trials; results do not depend on it.
    #[arg(long, global = true)]
    parallel: Option<usize>,
    /// Output path; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON config file; a bare profile document is also accepted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Variance-profile utilities.
    Profile {
        #[command(subcommand)]
        action: ProfileAction,
    },
    /// Draw one matrix and write its summary as JSON.
    Sample {
        #[command(flatten)]
        size: SizeArgs,
        /// Include the full matrix in the output.
        #[arg(long)]
        dump: bool,
    },
    /// Resolvent statistics of a stored sample over a spectral domain.
    Resolvent {
        /// Sample artifact written by `bandlab sample`.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[command(flatten)]
        domain: DomainArgs,
        /// Off-diagonal scan: all pairs or a random subset.
        #[arg(long, value_enum)]
        mode: Option<ModeTag>,
        /// Number of pairs in sampled mode [default: 4096].
        #[arg(long)]
        pairs: Option<usize>,
    },
    /// Local law Monte Carlo: per-(trial, z) resolvent statistics.
    Locallaw {
        #[command(flatten)]
        size: SizeArgs,
        #[command(flatten)]
        domain: DomainArgs,
        /// Number of trials [default: 20].
        #[arg(long)]
        trials: Option<usize>,
        /// Assert every per-z median of √(Nη)Ψ is at most this value.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Bulk eigenvector sup-norms.
    Deloc {
        #[command(flatten)]
        size: SizeArgs,
        /// Bulk cutoff: |λ| ≤ √2 − κ [default: 0.3].
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
        /// Constant C of T(N) = C√(ln N); asserts a 95% pass rate.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Green's function comparison experiments.
    Lindeberg {
        #[command(subcommand)]
        action: LindebergAction,
    },
    /// Saddle-point checks.
    Saddle {
        #[command(subcommand)]
        action: SaddleAction,
    },
    /// Grassmann Wick identity table.
    Wick {
        /// Largest number of Grassmann pairs [default: 3].
        #[arg(long)]
        k: Option<usize>,
        /// Random matrices per (k, ℓ) [default: 20].
        #[arg(long)]
        trials: Option<usize>,
        /// Monte Carlo samples of the complex cross-check [default: 100000].
        #[arg(long)]
        samples: Option<usize>,
    },
}

#[derive(Subcommand, Debug)]
enum ProfileAction {
    /// Report the structural assumptions as JSON.
    Check {
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Constant of the Green's function bound [default: 1].
        #[arg(long = "C")]
        c: Option<f64>,
    },
}

#[derive(Subcommand, Debug)]
enum LindebergAction {
    /// Decay of expansion remainders in the order m.
    Probe {
        #[command(flatten)]
        size: SizeArgs,
        #[command(flatten)]
        common: LindebergArgs,
        /// Highest expansion order [default: 4].
        #[arg(long = "m-max")]
        m_max: Option<usize>,
    },
    /// E|G_ab|^{2n} under Gaussian and four-moment-matched entries.
    Compare {
        #[command(flatten)]
        size: SizeArgs,
        #[command(flatten)]
        common: LindebergArgs,
        /// Number of random entry positions [default: 10].
        #[arg(long)]
        probes: Option<usize>,
        /// Moment order n ∈ {1, 2} [default: 1].
        #[arg(long)]
        moment: Option<u32>,
    },
}

#[derive(Subcommand, Debug)]
enum SaddleAction {
    /// Identities, lower bounds, measure bound and matrix facts as JSON.
    Verify {
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Energy E with |E| ≤ √2 − κ [default: 0].
        #[arg(long = "E", allow_hyphen_values = true)]
        energy: Option<f64>,
        #[arg(long)]
        kappa: Option<f64>,
        /// Random points per sweep [default: 10000].
        #[arg(long)]
        samples: Option<usize>,
    },
}

#[derive(Args, Debug)]
struct SizeArgs {
    /// Variance profile JSON {"W": .., "edges": [[i, j, w], ..]}.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Block size.
    #[arg(long = "M")]
    m: Option<usize>,
    /// Matrix size; must equal M·W.
    #[arg(long = "N")]
    n: Option<usize>,
    /// gaussian or three-point [default: gaussian].
    #[arg(long)]
    ensemble: Option<Ensemble>,
}

#[derive(Args, Debug)]
struct DomainArgs {
    /// Domain as inline JSON or a file: {"kappa", "eps2", "n_e", "n_eta", "eta_min", "eta_max"}.
    #[arg(long)]
    domain: Option<String>,
    /// Energy cutoff κ [default: 0.3].
    #[arg(long)]
    kappa: Option<f64>,
    /// Exponent ε₂ [default: 0.05].
    #[arg(long)]
    eps2: Option<f64>,
}

#[derive(Args, Debug)]
struct LindebergArgs {
    /// Spectral parameter "E,eta" [default: 0,1/M].
    #[arg(long, value_parser = parse_z, allow_hyphen_values = true)]
    z: Option<[f64; 2]>,
    #[arg(long)]
    trials: Option<usize>,
}

fn parse_z(s: &str) -> Result<[f64; 2], String> {
    let (e, eta) = s.split_once(',').ok_or("expected E,eta")?;
    let p = |x: &str| x.trim().parse::<f64>().map_err(|e| e.to_string());
    Ok([p(e)?, p(eta)?])
}

fn profile_ref(p: Option<PathBuf>) -> Option<ProfileRef> {
    p.map(ProfileRef::Path)
}

impl SizeArgs {
    fn apply(self, s: &mut Settings) {
        s.profile = profile_ref(self.profile);
        s.m = self.m;
        s.n = self.n;
        s.ensemble = self.ensemble;
    }
}

impl DomainArgs {
    fn settings(self) -> Result<Option<DomainSettings>, bandlab::ConfigError> {
        let mut d = match self.domain {
            Some(arg) => parse_domain_arg(&arg)?,
            None => DomainSettings::default(),
        };
        d.kappa = self.kappa.or(d.kappa);
        d.eps2 = self.eps2.or(d.eps2);
        Ok((d != DomainSettings::default()).then_some(d))
    }
}

fn kappa_only(kappa: Option<f64>) -> Option<DomainSettings> {
    kappa.map(|k| DomainSettings { kappa: Some(k), ..DomainSettings::default() })
}

fn flag_settings(cli: Cli) -> Result<Settings, bandlab::ConfigError> {
    let mut s = Settings { seed: cli.seed, parallel: cli.parallel, out: cli.out, ..Settings::default() };
    match cli.command {
        Command::Profile { action: ProfileAction::Check { profile, c } } => {
            s.experiment = Some(ExperimentKind::ProfileCheck);
            s.profile = profile_ref(profile);
            s.c = c;
        }
        Command::Sample { size, dump } => {
            s.experiment = Some(ExperimentKind::Sample);
            size.apply(&mut s);
            s.dump = dump.then_some(true);
        }
        Command::Resolvent { input, domain, mode, pairs } => {
            s.experiment = Some(ExperimentKind::Resolvent);
            s.input = input;
            s.domain = domain.settings()?;
            s.mode = mode;
            s.pairs = pairs;
        }
        Command::Locallaw { size, domain, trials, threshold } => {
            s.experiment = Some(ExperimentKind::Locallaw);
            size.apply(&mut s);
            s.domain = domain.settings()?;
            s.trials = trials;
            s.threshold = threshold;
        }
        Command::Deloc { size, kappa, trials, threshold } => {
            s.experiment = Some(ExperimentKind::Deloc);
            size.apply(&mut s);
            s.domain = kappa_only(kappa);
            s.trials = trials;
            s.threshold = threshold;
        }
        Command::Lindeberg { action } => match action {
            LindebergAction::Probe { size, common, m_max } => {
                s.experiment = Some(ExperimentKind::LindebergProbe);
                size.apply(&mut s);
                s.z = common.z;
                s.trials = common.trials;
                s.m_max = m_max;
            }
            LindebergAction::Compare { size, common, probes, moment } => {
                s.experiment = Some(ExperimentKind::LindebergCompare);
                size.apply(&mut s);
                s.z = common.z;
                s.trials = common.trials;
                s.probes = probes;
                s.moment = moment;
            }
        },
        Command::Saddle { action: SaddleAction::Verify { profile, energy, kappa, samples } } => {
            s.experiment = Some(ExperimentKind::Saddle);
            s.profile = profile_ref(profile);
            s.energy = energy;
            s.domain = kappa_only(kappa);
            s.samples = samples;
        }
        Command::Wick { k, trials, samples } => {
            s.experiment = Some(ExperimentKind::Wick);
            s.k = k;
            s.trials = trials;
            s.samples = samples;
        }
    }
    Ok(s)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config_path = cli.config.clone();
    let cfg = match flag_settings(cli).and_then(|flags| parse_config(config_path.as_deref(), flags)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("bandlab: configuration error: {e}");
            return ExitCode::from(2);
        }
    };
    let outcome = match run(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("bandlab: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = write_artifacts(&cfg, &outcome.artifacts) {
        eprintln!("bandlab: cannot write output: {e}");
        return ExitCode::from(2);
    }
    for n in &outcome.notes {
        eprintln!("{n}");
    }
    if outcome.pass {
        eprintln!("PASS");
        ExitCode::SUCCESS
    } else {
        eprintln!("FAIL");
        ExitCode::from(1)
    }
}
