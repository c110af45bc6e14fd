use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{CouplingAmplitude, ModelKind, ModelSpec};
use crate::ldos::Binning;
use crate::propagator::PropagatorOptions;
use crate::spectral::BandProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Ldos,
    Decay,
    Spread,
    ScanS,
    CoreScaling,
    Acceptance,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Ldos => "ldos",
            ExperimentKind::Decay => "decay",
            ExperimentKind::Spread => "spread",
            ExperimentKind::ScanS => "scan-s",
            ExperimentKind::CoreScaling => "core-scaling",
            ExperimentKind::Acceptance => "accept",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeUnit {
    Absolute,
    /// Multiples of the Wigner time `t₀`.
    WignerTime,
    /// Multiples of `1/ω_c`.
    InverseCutoff,
}

/// Sampling times of a run. `t = 0` is always included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    #[serde(default = "default_true")]
    pub log: bool,
    pub unit: TimeUnit,
}

fn default_true() -> bool {
    true
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid {
            lo: 1e-2,
            hi: 1e3,
            points: 200,
            log: true,
            unit: TimeUnit::WignerTime,
        }
    }
}

impl TimeGrid {
    pub fn times(&self, profile: &BandProfile) -> Result<Vec<f64>> {
        if !(self.lo > 0.0 && self.hi > self.lo && self.points >= 2) {
            return Err(Error::Config(format!("invalid time grid {self:?}")));
        }
        let unit = match self.unit {
            TimeUnit::Absolute => 1.0,
            TimeUnit::WignerTime => profile.wigner_time(crate::spectral::WignerVariant::Exact)?,
            TimeUnit::InverseCutoff => 1.0 / profile.omega_c,
        };
        if !unit.is_finite() {
            return Err(Error::Config("time unit is infinite (epsilon = 0?); use absolute times".into()));
        }
        let (lo, hi) = (self.lo * unit, self.hi * unit);
        if self.log {
            Ok(crate::observables::log_times(lo, hi, self.points))
        } else {
            Ok((0..=self.points).map(|k| hi * k as f64 / self.points as f64).collect())
        }
    }
}

/// Model parameters as written in a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub s: f64,
    pub epsilon: f64,
    #[serde(default = "one")]
    pub rho: f64,
    pub b: usize,
    /// Initial lattice half-width; defaults to `b`.
    #[serde(default)]
    pub n_levels: Option<usize>,
    #[serde(default)]
    pub amplitude: CouplingAmplitude,
}

fn one() -> f64 {
    1.0
}

impl ModelConfig {
    pub fn spec(&self, seed: u64) -> Result<ModelSpec> {
        Ok(ModelSpec::new(
            self.kind,
            self.s,
            self.epsilon,
            self.rho,
            self.b,
            self.n_levels.unwrap_or(self.b),
            seed,
        )?
        .with_amplitude(self.amplitude))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdosConfig {
    pub binning: Binning,
}

/// One experiment. Precedence: built-in defaults, then the config file,
/// then command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Output subdirectory; defaults to a hash of the config.
    #[serde(default)]
    pub label: Option<String>,
    pub model: Option<ModelConfig>,
    /// `s` grid for `scan-s`.
    #[serde(default)]
    pub s_values: Vec<f64>,
    /// `ε` grid for `core-scaling`.
    #[serde(default)]
    pub epsilon_values: Vec<f64>,
    #[serde(default = "default_ensemble")]
    pub ensemble: usize,
    #[serde(default)]
    pub times: TimeGrid,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; `None` uses `DECAYLAB_THREADS` or all cores.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub propagator: PropagatorOptions,
    #[serde(default)]
    pub ldos: Option<LdosConfig>,
    /// Fit window for the stretch exponent, in units of `t₀`.
    #[serde(default)]
    pub fit_window: Option<(f64, f64)>,
    /// Acceptance criteria to run; empty means all.
    #[serde(default)]
    pub criteria: Vec<u8>,
}

fn default_ensemble() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            kind,
            label: None,
            model: None,
            s_values: Vec::new(),
            epsilon_values: Vec::new(),
            ensemble: default_ensemble(),
            times: TimeGrid::default(),
            out: default_out(),
            seed: 0,
            threads: None,
            propagator: PropagatorOptions::default(),
            ldos: None,
            fit_window: None,
            criteria: Vec::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let needs_model = !matches!(self.kind, ExperimentKind::Acceptance);
        if needs_model && self.model.is_none() {
            return Err(Error::Config(format!("experiment `{}` needs a [model] table", self.kind.name())));
        }
        if let Some(m) = &self.model {
            m.spec(self.seed).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.ensemble == 0 {
            return Err(Error::Config("ensemble must be >= 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        match self.kind {
            ExperimentKind::ScanS if self.s_values.is_empty() => {
                Err(Error::Config("scan-s needs s_values".into()))
            }
            ExperimentKind::CoreScaling if self.epsilon_values.len() < 4 => {
                Err(Error::Config("core-scaling needs at least four epsilon_values".into()))
            }
            ExperimentKind::Ldos if self.ldos.is_none() => Err(Error::Config("ldos needs an [ldos] table".into())),
            _ => Ok(()),
        }
    }

    /// Output directory `out/<experiment>/<label>`.
    pub fn run_dir(&self) -> Result<PathBuf> {
        let label = match &self.label {
            Some(l) => l.clone(),
            None => {
                let mut c = self.clone();
                c.threads = None;
                c.out = PathBuf::new();
                let json = serde_json::to_vec(&c).map_err(|e| Error::Config(e.to_string()))?;
                hex::encode(&crate::harness::output::sha256(&json)[..6])
            }
        };
        Ok(self.out.join(self.kind.name()).join(label))
    }

    /// Thread count: explicit setting, then `DECAYLAB_THREADS`, then all
    /// available cores.
    pub fn thread_count(&self) -> usize {
        self.threads
            .or_else(|| std::env::var("DECAYLAB_THREADS").ok().and_then(|v| v.parse().ok()))
            .filter(|&n| n > 0)
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DECAY: &str = r#"
kind = "decay"
ensemble = 4
seed = 11

[model]
kind = "wigner"
s = 1.5
epsilon = 0.3
b = 40

[times]
lo = 0.1
hi = 10.0
points = 20
unit = "wigner-time"
"#;

    #[test]
    fn parses_and_round_trips() {
        let c = ExperimentConfig::from_toml_str(DECAY).unwrap();
        assert_eq!(c.kind, ExperimentKind::Decay);
        assert_eq!(c.model.unwrap().n_levels, None);
        assert_eq!(c.propagator, PropagatorOptions::default());
        let again = ExperimentConfig::from_toml_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn rejects_unknown_keys_and_missing_tables() {
        assert!(matches!(
            ExperimentConfig::from_toml_str(&format!("{DECAY}\nbogus = 1\n")),
            Err(Error::Config(_))
        ));
        assert!(ExperimentConfig::from_toml_str("kind = \"decay\"").is_err());
        assert!(ExperimentConfig::from_toml_str("kind = \"accept\"").is_err());
        assert!(ExperimentConfig::from_toml_str("kind = \"acceptance\"").is_ok());
    }

    #[test]
    fn label_ignores_threads_and_output_root() {
        let a = ExperimentConfig::from_toml_str(DECAY).unwrap();
        let mut b = a.clone();
        b.threads = Some(3);
        b.out = PathBuf::from("elsewhere");
        assert_eq!(a.run_dir().unwrap().file_name(), b.run_dir().unwrap().file_name());
        b.seed = 12;
        assert_ne!(a.run_dir().unwrap().file_name(), b.run_dir().unwrap().file_name());
    }

    #[test]
    fn grid_units() {
        let c = ExperimentConfig::from_toml_str(DECAY).unwrap();
        let p = c.model.unwrap().spec(0).unwrap().profile();
        let t = c.times.times(&p).unwrap();
        let t0 = p.wigner_time(crate::spectral::WignerVariant::Exact).unwrap();
        assert_eq!(t.len(), 21);
        assert_eq!(t[0], 0.0);
        assert!((t[1] / t0 - 0.1).abs() < 1e-12 && (t[20] / t0 - 10.0).abs() < 1e-12);
    }
}
