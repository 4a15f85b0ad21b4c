//! Experiment configuration: a JSON file and command-line flags, merged with
//! flags taking precedence, then validated into an [`ExperimentConfig`].

use std::path::{Path, PathBuf};

use bandlab_core::ensembles::Ensemble;
use bandlab_core::profile::{profile_from_spec, ProfileSpec, VarianceProfile};
use bandlab_core::spectral::{build_domain, SpectralDomain};
use serde::{Deserialize, Serialize};

pub const DEFAULT_KAPPA: f64 = 0.3;
pub const DEFAULT_EPS2: f64 = 0.05;
pub const DEFAULT_TRIALS: usize = 20;
pub const DEFAULT_N_E: usize = 9;
pub const DEFAULT_N_ETA: usize = 5;
pub const DEFAULT_PAIRS: usize = 4096;
pub const DEFAULT_M_MAX: usize = 4;
pub const DEFAULT_PROBES: usize = 10;
pub const DEFAULT_SADDLE_SAMPLES: usize = 10_000;
pub const DEFAULT_WICK_K: usize = 3;
pub const DEFAULT_WICK_PAIRS: usize = 20;
pub const DEFAULT_WICK_MC_SAMPLES: usize = 100_000;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("field `{field}`: {message}")]
    Field { field: &'static str, message: String },
}

fn field(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field, message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ProfileCheck,
    Sample,
    Resolvent,
    Locallaw,
    Deloc,
    LindebergProbe,
    LindebergCompare,
    Saddle,
    Wick,
}

impl ExperimentKind {
    /// Kinds that draw random numbers and therefore need a seed.
    pub fn is_stochastic(self) -> bool {
        !matches!(self, ExperimentKind::ProfileCheck | ExperimentKind::Resolvent)
    }

    fn needs_profile(self) -> bool {
        !matches!(self, ExperimentKind::Resolvent | ExperimentKind::Wick)
    }

    fn needs_size(self) -> bool {
        matches!(
            self,
            ExperimentKind::Sample
                | ExperimentKind::Locallaw
                | ExperimentKind::Deloc
                | ExperimentKind::LindebergProbe
                | ExperimentKind::LindebergCompare
        )
    }
}

/// Resolvent scan mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeTag {
    Full,
    Sampled,
}

/// A profile given by path or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileRef {
    Inline(ProfileSpec),
    Path(PathBuf),
}

/// Spectral-domain block of a config file or of `--domain`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSettings {
    pub kappa: Option<f64>,
    pub eps2: Option<f64>,
    pub n_e: Option<usize>,
    pub n_eta: Option<usize>,
    pub eta_min: Option<f64>,
    pub eta_max: Option<f64>,
}

/// Unresolved settings; every field optional. Used both for the config file
/// and for the flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub experiment: Option<ExperimentKind>,
    pub profile: Option<ProfileRef>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    #[serde(rename = "M")]
    pub m: Option<usize>,
    pub ensemble: Option<Ensemble>,
    pub domain: Option<DomainSettings>,
    pub mode: Option<ModeTag>,
    pub pairs: Option<usize>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub parallel: Option<usize>,
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    pub z: Option<[f64; 2]>,
    pub m_max: Option<usize>,
    pub probes: Option<usize>,
    pub moment: Option<u32>,
    #[serde(rename = "E")]
    pub energy: Option<f64>,
    pub samples: Option<usize>,
    pub k: Option<usize>,
    pub threshold: Option<f64>,
    pub dump: Option<bool>,
}

macro_rules! overlay_fields {
    ($base:expr, $top:expr; $($f:ident),*) => {
        Settings { $($f: $top.$f.or($base.$f),)* domain: None }
    };
}

fn overlay_domain(base: Option<DomainSettings>, top: Option<DomainSettings>) -> Option<DomainSettings> {
    match (base, top) {
        (None, t) => t,
        (b, None) => b,
        (Some(b), Some(t)) => Some(DomainSettings {
            kappa: t.kappa.or(b.kappa),
            eps2: t.eps2.or(b.eps2),
            n_e: t.n_e.or(b.n_e),
            n_eta: t.n_eta.or(b.n_eta),
            eta_min: t.eta_min.or(b.eta_min),
            eta_max: t.eta_max.or(b.eta_max),
        }),
    }
}

impl Settings {
    /// `top` wins wherever it sets a field.
    pub fn overlay(self, top: Settings) -> Settings {
        let domain = overlay_domain(self.domain.clone(), top.domain.clone());
        let mut s = overlay_fields!(self, top;
            experiment, profile, n, m, ensemble, mode, pairs, trials, seed, out, parallel,
            input, c, z, m_max, probes, moment, energy, samples, k, threshold, dump);
        s.domain = domain;
        s
    }

    /// Reads a config file. A bare profile document `{"W": .., "edges": ..}`
    /// is accepted as a config holding only that profile. Relative profile
    /// paths are taken relative to the file.
    pub fn from_file(path: &Path) -> Result<Settings, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let parse = |source| ConfigError::Parse { path: path.into(), source };
        let value: serde_json::Value = serde_json::from_str(&text).map_err(parse)?;
        let mut s = if value.get("edges").is_some() {
            let spec: ProfileSpec = serde_json::from_value(value).map_err(parse)?;
            Settings { profile: Some(ProfileRef::Inline(spec)), ..Settings::default() }
        } else {
            serde_json::from_value(value).map_err(parse)?
        };
        if let Some(ProfileRef::Path(p)) = &s.profile {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                s.profile = Some(ProfileRef::Path(base.join(p)));
            }
        }
        Ok(s)
    }
}

/// Parses `--domain`: inline JSON when it starts with `{`, a file otherwise.
pub fn parse_domain_arg(arg: &str) -> Result<DomainSettings, ConfigError> {
    if arg.trim_start().starts_with('{') {
        serde_json::from_str(arg).map_err(|source| ConfigError::Parse { path: "--domain".into(), source })
    } else {
        read_json(Path::new(arg))
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })
}

/// Resolved spectral-domain parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainParams {
    pub kappa: f64,
    pub eps2: f64,
    pub n_e: usize,
    pub n_eta: usize,
    pub eta_min: Option<f64>,
    pub eta_max: Option<f64>,
}

impl DomainParams {
    /// Grid over `D(N, κ, ε₂)`, restricted to `[eta_min, eta_max]` when set.
    pub fn build(&self, n: usize, m: usize) -> bandlab_core::Result<SpectralDomain> {
        let full = build_domain(n, m, self.kappa, self.eps2, self.n_e, self.n_eta)?;
        if self.eta_min.is_none() && self.eta_max.is_none() {
            return Ok(full);
        }
        SpectralDomain::with_eta_range(
            n,
            m,
            self.kappa,
            self.eps2,
            self.n_e,
            self.eta_min.unwrap_or_else(|| full.eta_min()),
            self.eta_max.unwrap_or_else(|| full.eta_max()),
            self.n_eta,
        )
    }
}

/// A validated experiment. `out` and `parallel` do not affect results and
/// are excluded from the serialized form, and hence from the config hash.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub profile: Option<ProfileSpec>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    #[serde(rename = "M")]
    pub m: Option<usize>,
    pub ensemble: Ensemble,
    pub domain: DomainParams,
    pub mode: ModeTag,
    pub pairs: usize,
    pub trials: usize,
    pub seed: Option<u64>,
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    #[serde(rename = "C")]
    pub c: f64,
    pub z: Option<[f64; 2]>,
    pub m_max: usize,
    pub probes: usize,
    pub moment: u32,
    #[serde(rename = "E")]
    pub energy: f64,
    pub samples: usize,
    pub k: usize,
    pub threshold: Option<f64>,
    pub dump: bool,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub parallel: usize,
}

impl ExperimentConfig {
    pub fn variance_profile(&self) -> bandlab_core::Result<VarianceProfile> {
        let spec = self
            .profile
            .as_ref()
            .ok_or_else(|| bandlab_core::Error::InvalidParameter("no profile configured".into()))?;
        profile_from_spec(spec)
    }

    /// Seed of a stochastic experiment; validation guarantees presence.
    pub fn seed(&self) -> u64 {
        self.seed.expect("validated stochastic config carries a seed")
    }

    pub fn m(&self) -> usize {
        self.m.expect("validated config carries M")
    }
}

/// Merges the optional config file under the flags and validates the result.
pub fn parse_config(file: Option<&Path>, flags: Settings) -> Result<ExperimentConfig, ConfigError> {
    let base = match file {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    resolve(base.overlay(flags))
}

fn positive(name: &'static str, x: usize) -> Result<usize, ConfigError> {
    if x == 0 {
        Err(field(name, "must be at least 1"))
    } else {
        Ok(x)
    }
}

/// Validates merged settings and fills in documented defaults.
pub fn resolve(s: Settings) -> Result<ExperimentConfig, ConfigError> {
    let experiment = s.experiment.ok_or_else(|| field("experiment", "missing"))?;
    if experiment.is_stochastic() && s.seed.is_none() {
        return Err(field("seed", "required for stochastic experiments (pass --seed)"));
    }
    let profile = match s.profile {
        Some(ProfileRef::Inline(spec)) => Some(spec),
        Some(ProfileRef::Path(p)) => Some(read_json::<ProfileSpec>(&p)?),
        None => None,
    };
    if experiment.needs_profile() && profile.is_none() {
        return Err(field("profile", "missing (pass --profile)"));
    }
    if let Some(spec) = &profile {
        profile_from_spec(spec).map_err(|e| field("profile", e.to_string()))?;
    }

    let (mut n, mut m) = (s.n, s.m);
    if let Some(spec) = &profile {
        let w = spec.w;
        match (n, m) {
            (Some(nv), Some(mv)) if nv != mv * w => {
                return Err(field("N", format!("N = {nv} but M·W = {mv}·{w} = {}", mv * w)));
            }
            (Some(nv), None) => {
                if nv % w != 0 {
                    return Err(field("N", format!("N = {nv} is not divisible by W = {w}")));
                }
                m = Some(nv / w);
            }
            (None, Some(mv)) => n = Some(mv * w),
            _ => {}
        }
    }
    if experiment.needs_size() && m.is_none() {
        return Err(field("M", "missing (pass --M or --N)"));
    }
    if let Some(mv) = m {
        positive("M", mv)?;
    }

    let d = s.domain.unwrap_or_default();
    let domain = DomainParams {
        kappa: d.kappa.unwrap_or(DEFAULT_KAPPA),
        eps2: d.eps2.unwrap_or(DEFAULT_EPS2),
        n_e: positive("domain.n_e", d.n_e.unwrap_or(DEFAULT_N_E))?,
        n_eta: positive("domain.n_eta", d.n_eta.unwrap_or(DEFAULT_N_ETA))?,
        eta_min: d.eta_min,
        eta_max: d.eta_max,
    };
    if !(domain.kappa > 0.0 && domain.kappa < std::f64::consts::SQRT_2) {
        return Err(field("kappa", format!("{} must lie in (0, √2)", domain.kappa)));
    }
    if !(domain.eps2 > 0.0 && domain.eps2 < 1.0) {
        return Err(field("eps2", format!("{} must lie in (0, 1)", domain.eps2)));
    }
    for (name, v) in [("domain.eta_min", domain.eta_min), ("domain.eta_max", domain.eta_max)] {
        if v.is_some_and(|x| !(x > 0.0 && x.is_finite())) {
            return Err(field(name, "must be positive"));
        }
    }

    let trials = positive("trials", s.trials.unwrap_or(DEFAULT_TRIALS))?;
    if experiment == ExperimentKind::LindebergCompare && trials < 2 {
        return Err(field("trials", "compare needs at least 2 trials per arm"));
    }
    let parallel = positive("parallel", s.parallel.unwrap_or(1))?;
    let c = s.c.unwrap_or(1.0);
    if !(c > 0.0 && c.is_finite()) {
        return Err(field("C", "must be positive"));
    }
    if let Some([_, eta]) = s.z {
        if !(eta > 0.0) {
            return Err(field("z", "Im z must be positive"));
        }
    }
    let m_max = s.m_max.unwrap_or(DEFAULT_M_MAX);
    if !(1..=bandlab_core::lindeberg::MAX_EXPANSION_ORDER).contains(&m_max) {
        return Err(field("m_max", format!("must lie in 1..={}", bandlab_core::lindeberg::MAX_EXPANSION_ORDER)));
    }
    let moment = s.moment.unwrap_or(1);
    if !(1..=2).contains(&moment) {
        return Err(field("moment", "must be 1 or 2"));
    }
    let k = s.k.unwrap_or(DEFAULT_WICK_K);
    if !(1..=bandlab_core::grassmann::MAX_WICK_PAIRS).contains(&k) {
        return Err(field("k", format!("must lie in 1..={}", bandlab_core::grassmann::MAX_WICK_PAIRS)));
    }
    if experiment == ExperimentKind::Resolvent && s.input.is_none() {
        return Err(field("in", "missing (pass --in)"));
    }
    if s.threshold.is_some_and(|t| !(t > 0.0)) {
        return Err(field("threshold", "must be positive"));
    }

    Ok(ExperimentConfig {
        experiment,
        profile,
        n,
        m,
        ensemble: s.ensemble.unwrap_or(Ensemble::Gaussian),
        domain,
        mode: s.mode.unwrap_or(ModeTag::Full),
        pairs: positive("pairs", s.pairs.unwrap_or(DEFAULT_PAIRS))?,
        trials,
        seed: s.seed,
        input: s.input,
        c,
        z: s.z,
        m_max,
        probes: positive("probes", s.probes.unwrap_or(DEFAULT_PROBES))?,
        moment,
        energy: s.energy.unwrap_or(0.0),
        samples: positive("samples", s.samples.unwrap_or(match experiment {
            ExperimentKind::Wick => DEFAULT_WICK_MC_SAMPLES,
            _ => DEFAULT_SADDLE_SAMPLES,
        }))?,
        k,
        threshold: s.threshold,
        dump: s.dump.unwrap_or(false),
        out: s.out,
        parallel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus4() -> ProfileRef {
        ProfileRef::Inline(ProfileSpec { w: 4, edges: vec![(1, 2, 0.2), (2, 3, 0.2), (3, 4, 0.2), (4, 1, 0.2)] })
    }

    fn locallaw(n: Option<usize>, m: Option<usize>, seed: Option<u64>) -> Settings {
        Settings {
            experiment: Some(ExperimentKind::Locallaw),
            profile: Some(torus4()),
            n,
            m,
            seed,
            ..Settings::default()
        }
    }

    #[test]
    fn minimal_locallaw_defaults() {
        let c = resolve(locallaw(None, Some(16), Some(1))).unwrap();
        assert_eq!(c.domain.kappa, 0.3);
        assert_eq!(c.domain.eps2, 0.05);
        assert_eq!(c.trials, 20);
        assert_eq!(c.n, Some(64));
        assert_eq!(c.parallel, 1);
    }

    #[test]
    fn n_not_divisible_by_w() {
        let err = resolve(locallaw(Some(30), None, Some(1))).unwrap_err();
        assert!(err.to_string().contains("not divisible"), "{err}");
    }

    #[test]
    fn inconsistent_n_and_m() {
        assert!(resolve(locallaw(Some(64), Some(8), Some(1))).is_err());
        assert_eq!(resolve(locallaw(Some(64), Some(16), Some(1))).unwrap().m, Some(16));
    }

    #[test]
    fn seed_is_mandatory() {
        let err = resolve(locallaw(None, Some(16), None)).unwrap_err();
        assert!(matches!(err, ConfigError::Field { field: "seed", .. }));
    }

    #[test]
    fn profile_check_needs_no_seed() {
        let s = Settings { experiment: Some(ExperimentKind::ProfileCheck), profile: Some(torus4()), ..Default::default() };
        assert!(resolve(s).is_ok());
    }

    #[test]
    fn flags_override_file() {
        let file = Settings { trials: Some(5), seed: Some(3), domain: Some(DomainSettings { kappa: Some(0.4), eps2: Some(0.1), ..Default::default() }), ..locallaw(None, Some(8), None) };
        let flags = Settings { trials: Some(7), domain: Some(DomainSettings { kappa: Some(0.5), ..Default::default() }), ..Default::default() };
        let c = resolve(file.overlay(flags)).unwrap();
        assert_eq!(c.trials, 7);
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.domain.kappa, 0.5);
        assert_eq!(c.domain.eps2, 0.1);
    }

    #[test]
    fn unknown_fields_rejected() {
        let err = serde_json::from_str::<Settings>(r#"{"trails": 3}"#).unwrap_err();
        assert!(err.to_string().contains("trails"));
    }

    #[test]
    fn domain_arg_inline() {
        let d = parse_domain_arg(r#"{"kappa": 0.2, "n_e": 3}"#).unwrap();
        assert_eq!(d.kappa, Some(0.2));
        assert_eq!(d.n_e, Some(3));
    }

    #[test]
    fn serialized_form_skips_runtime_fields() {
        let mut a = resolve(locallaw(None, Some(16), Some(1))).unwrap();
        let mut b = a.clone();
        a.parallel = 1;
        b.parallel = 8;
        b.out = Some("x.csv".into());
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn bad_kappa_rejected() {
        let s = Settings { domain: Some(DomainSettings { kappa: Some(2.0), ..Default::default() }), ..locallaw(None, Some(4), Some(1)) };
        assert!(matches!(resolve(s).unwrap_err(), ConfigError::Field { field: "kappa", .. }));
    }
}
