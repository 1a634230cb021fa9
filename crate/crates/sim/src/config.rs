//! Run configuration: TOML files, command-line overrides and their merge into a
//! [`SessionConfig`].
//!
//! Precedence is flag over file over built-in default. A file looks like
//!
//! ```toml
//! seed = 7
//! n_pulses = 1000000
//! mu = 0.1                    # or `photons = 1` for a fixed photon-number source
//! distance_km = 10
//! attenuation_db_per_km = 0.2
//! flip = 0.01
//! efficiency = 0.1
//! dark = 1e-5
//! sample_fraction = 0.1
//! attack_model = "coherent"   # or "individual"
//! margin = 30
//! eve = "none"                # "intercept:<fraction>", "pns"
//! double_click = "random"     # or "discard"
//! auth_pool_bits = 300
//! cascade_passes = 4
//!
//! [sweep]
//! distance_km = [0, 10, 20]
//! mu = [0.1]
//! eve_fraction = [0.0, 0.5]
//! seeds = 1                   # sessions per point
//! ```
//!
//! Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use qkd_core::photonics::PhotonicsError;
use qkd_core::protocol::DoubleClickPolicy;
use qkd_core::{AttackModel, DetectorPair, EveStrategy, FiberChannel, SessionConfig, SourceModel};
use serde::Deserialize;
use toml::Spanned;

/// Directory searched for relative config paths not found in the working directory.
pub const CONFIG_DIR_ENV: &str = "QKDSIM_CONFIG_DIR";

#[derive(Debug, thiserror::Error)]
pub enum ConfigFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    /// A value that parsed but is out of range. `origin` is `file:line` or a flag.
    #[error("{origin}: {key}: {message}")]
    Invalid {
        origin: String,
        key: &'static str,
        message: String,
    },
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default)]
    pub distance_km: Vec<f64>,
    #[serde(default)]
    pub mu: Vec<f64>,
    #[serde(default)]
    pub eve_fraction: Vec<f64>,
    /// Sessions per point.
    pub seeds: Option<usize>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.distance_km.is_empty() && self.mu.is_empty() && self.eve_fraction.is_empty()
    }
}

type Field<T> = Option<Spanned<T>>;

/// Session keys as they appear in a file, with source positions.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionTable {
    seed: Field<u64>,
    n_pulses: Field<usize>,
    mu: Field<f64>,
    photons: Field<u32>,
    distance_km: Field<f64>,
    attenuation_db_per_km: Field<f64>,
    flip: Field<f64>,
    efficiency: Field<f64>,
    dark: Field<f64>,
    sample_fraction: Field<f64>,
    attack_model: Field<String>,
    margin: Field<usize>,
    eve: Field<String>,
    double_click: Field<String>,
    auth_pool_bits: Field<usize>,
    cascade_passes: Field<usize>,
    pub sweep: Option<SweepAxes>,
}

/// A whole run file: session keys at top level plus an optional `[sweep]` table.
pub type RunConfigFile = SessionTable;

/// Session parameters from any source; `None` means "not given here".
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    pub seed: Option<u64>,
    pub n_pulses: Option<usize>,
    pub mu: Option<f64>,
    pub photons: Option<u32>,
    pub distance_km: Option<f64>,
    pub attenuation_db_per_km: Option<f64>,
    pub flip: Option<f64>,
    pub efficiency: Option<f64>,
    pub dark: Option<f64>,
    pub sample_fraction: Option<f64>,
    pub attack_model: Option<String>,
    pub margin: Option<usize>,
    pub eve: Option<String>,
    pub double_click: Option<String>,
    pub auth_pool_bits: Option<usize>,
    pub cascade_passes: Option<usize>,
}

/// Where each setting came from, for error messages.
#[derive(Clone, Debug, Default)]
pub struct Origins {
    file: Option<String>,
    lines: BTreeMap<&'static str, usize>,
}

impl Origins {
    pub fn in_file(file: &str, lines: BTreeMap<&'static str, usize>) -> Self {
        Self {
            file: Some(file.to_owned()),
            lines,
        }
    }

    fn describe(&self, key: &'static str) -> String {
        match (&self.file, self.lines.get(key)) {
            (Some(file), Some(line)) => format!("{file}:{line}"),
            _ => format!("--{}", key.replace('_', "-")),
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

impl SessionTable {
    /// Plain values plus the line each was declared on.
    pub fn settings(&self, text: &str) -> (Settings, BTreeMap<&'static str, usize>) {
        let mut lines = BTreeMap::new();
        macro_rules! take {
            ($($field:ident),*) => {
                Settings {
                    $($field: self.$field.as_ref().map(|s| {
                        lines.insert(stringify!($field), line_of(text, s.span().start));
                        s.get_ref().clone()
                    }),)*
                }
            };
        }
        let settings = take!(
            seed,
            n_pulses,
            mu,
            photons,
            distance_km,
            attenuation_db_per_km,
            flip,
            efficiency,
            dark,
            sample_fraction,
            attack_model,
            margin,
            eve,
            double_click,
            auth_pool_bits,
            cascade_passes
        );
        (settings, lines)
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigFileError> {
        toml::from_str(text).map_err(|e| ConfigFileError::Parse {
            origin: origin.to_owned(),
            message: e.to_string().trim_end().to_owned(),
        })
    }
}

/// A parsed file together with its source, ready to merge with flags.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub settings: Settings,
    pub origins: Origins,
    pub sweep: Option<SweepAxes>,
}

impl LoadedConfig {
    pub fn empty() -> Self {
        Self {
            settings: Settings::default(),
            origins: Origins::default(),
            sweep: None,
        }
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self, ConfigFileError> {
        let file = RunConfigFile::parse(text, origin)?;
        let (settings, lines) = file.settings(text);
        Ok(Self {
            settings,
            origins: Origins::in_file(origin, lines),
            sweep: file.sweep,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigFileError> {
        let resolved = resolve_config_path(path);
        let text = std::fs::read_to_string(&resolved).map_err(|source| ConfigFileError::Io {
            path: resolved.display().to_string(),
            source,
        })?;
        Self::from_text(&text, &resolved.display().to_string())
    }

    /// Applies command-line values on top of the file.
    pub fn with_overrides(mut self, flags: &Settings) -> Self {
        macro_rules! merge {
            ($($field:ident),*) => {
                $(if flags.$field.is_some() {
                    self.settings.$field = flags.$field.clone();
                    self.origins.lines.remove(stringify!($field));
                })*
            };
        }
        merge!(
            seed,
            n_pulses,
            mu,
            photons,
            distance_km,
            attenuation_db_per_km,
            flip,
            efficiency,
            dark,
            sample_fraction,
            attack_model,
            margin,
            eve,
            double_click,
            auth_pool_bits,
            cascade_passes
        );
        // A source chosen on the command line replaces the file's choice entirely.
        if flags.mu.is_some() && flags.photons.is_none() {
            self.settings.photons = None;
        }
        if flags.photons.is_some() && flags.mu.is_none() {
            self.settings.mu = None;
        }
        self
    }

    pub fn session_config(&self) -> Result<SessionConfig, ConfigFileError> {
        build_session(&self.settings, &self.origins)
    }
}

/// Relative paths missing from the working directory are looked up in
/// `$QKDSIM_CONFIG_DIR`.
pub fn resolve_config_path(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(dir) = std::env::var_os(CONFIG_DIR_ENV) {
            let candidate = Path::new(&dir).join(path);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    path.to_path_buf()
}

pub fn parse_eve(text: &str) -> Result<EveStrategy, String> {
    let strategy = match text.trim() {
        "none" => EveStrategy::NoAttack,
        "pns" => EveStrategy::PhotonNumberSplit,
        "intercept" => EveStrategy::InterceptResend { fraction: 1.0 },
        other => {
            let fraction = other
                .strip_prefix("intercept:")
                .and_then(|f| f.parse::<f64>().ok())
                .ok_or_else(|| format!("unknown strategy {other:?} (none, pns, intercept:<fraction>)"))?;
            EveStrategy::InterceptResend { fraction }
        }
    };
    strategy.validate().map_err(|e| e.to_string())?;
    Ok(strategy)
}

pub fn parse_attack_model(text: &str) -> Result<AttackModel, String> {
    match text.trim() {
        "coherent" => Ok(AttackModel::Coherent),
        "individual" => Ok(AttackModel::Individual),
        other => Err(format!("unknown attack model {other:?} (coherent, individual)")),
    }
}

pub fn parse_double_click(text: &str) -> Result<DoubleClickPolicy, String> {
    match text.trim() {
        "random" => Ok(DoubleClickPolicy::RandomBit),
        "discard" => Ok(DoubleClickPolicy::Discard),
        other => Err(format!("unknown double-click policy {other:?} (random, discard)")),
    }
}

// Maps a photonics field name back to the config key that set it.
fn photonics_key(e: &PhotonicsError) -> &'static str {
    let PhotonicsError::OutOfRange { name, .. } = e;
    match *name {
        "mu" => "mu",
        "length_km" => "distance_km",
        "attenuation_db_per_km" => "attenuation_db_per_km",
        "excess_flip_prob" => "flip",
        "efficiency" => "efficiency",
        _ => "dark",
    }
}

pub fn build_session(s: &Settings, origins: &Origins) -> Result<SessionConfig, ConfigFileError> {
    let invalid = |key: &'static str, message: String| ConfigFileError::Invalid {
        origin: origins.describe(key),
        key,
        message,
    };
    let photonics = |e: PhotonicsError| invalid(photonics_key(&e), e.to_string());
    let d = SessionConfig::default();

    let source = match (s.mu, s.photons) {
        (Some(_), Some(_)) => return Err(invalid("photons", "mu and photons are mutually exclusive".into())),
        (_, Some(photons)) => SourceModel::Fixed { photons },
        (Some(mu), None) => SourceModel::poisson(mu).map_err(photonics)?,
        (None, None) => d.source,
    };
    let channel = FiberChannel::new(
        s.distance_km.unwrap_or(d.channel.length_km),
        s.attenuation_db_per_km.unwrap_or(d.channel.attenuation_db_per_km),
        s.flip.unwrap_or(d.channel.excess_flip_prob),
    )
    .map_err(photonics)?;
    let detectors = DetectorPair::new(
        s.efficiency.unwrap_or(d.detectors.efficiency),
        s.dark.unwrap_or(d.detectors.dark_count_prob),
    )
    .map_err(photonics)?;

    let n_pulses = s.n_pulses.unwrap_or(d.n_pulses);
    if n_pulses == 0 {
        return Err(invalid("n_pulses", "must be positive".into()));
    }
    let sample_fraction = s.sample_fraction.unwrap_or(d.sample_fraction);
    if !(sample_fraction > 0.0 && sample_fraction < 1.0) {
        return Err(invalid("sample_fraction", format!("{sample_fraction} must lie strictly between 0 and 1")));
    }
    let attack_model = match &s.attack_model {
        Some(text) => parse_attack_model(text).map_err(|m| invalid("attack_model", m))?,
        None => d.attack_model,
    };
    let eve = match &s.eve {
        Some(text) => parse_eve(text).map_err(|m| invalid("eve", m))?,
        None => d.eve,
    };
    let double_click = match &s.double_click {
        Some(text) => parse_double_click(text).map_err(|m| invalid("double_click", m))?,
        None => d.double_click,
    };
    let mut cascade = d.cascade;
    if let Some(passes) = s.cascade_passes {
        if passes == 0 {
            return Err(invalid("cascade_passes", "must be at least 1".into()));
        }
        cascade.passes = passes;
    }

    let config = SessionConfig {
        n_pulses,
        source,
        channel,
        detectors,
        sample_fraction,
        attack_model,
        security_margin_bits: s.margin.unwrap_or(d.security_margin_bits),
        seed: s.seed.unwrap_or(d.seed),
        eve,
        double_click,
        cascade,
        auth_pool_bits: s.auth_pool_bits.unwrap_or(d.auth_pool_bits),
    };
    debug_assert!(config.validate().is_ok());
    Ok(config)
}
