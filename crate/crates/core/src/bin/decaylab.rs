use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use decaylab::hamiltonian::{CouplingAmplitude, ModelKind};
use decaylab::harness::{self, acceptance, ExperimentConfig, ExperimentKind, ModelConfig, RunReport};
use decaylab::{Error, Result};

#[derive(Parser)]
#[command(name = "decaylab", version, about = "Survival and energy spreading in banded random models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Histogram the local density of states.
    Ldos(Common),
    /// Survival probability and stretched-exponent fit.
    Decay(Common),
    /// Energy spreading against linear response.
    Spread(Common),
    /// Decay for each value of `s_values`.
    ScanS(Common),
    /// Core width versus time for each value of `epsilon_values`.
    CoreScaling(Common),
    /// Run acceptance criteria and print one PASS/FAIL line each.
    Accept {
        #[command(flatten)]
        common: Common,
        /// Criteria to run (default: all).
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u8>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Fm,
    Wm,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config. Flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; results go to `<out>/<experiment>/<label>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of realizations.
    #[arg(long)]
    ensemble: Option<usize>,
    /// Worker threads (default: `DECAYLAB_THREADS`, then all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    label: Option<String>,
    #[arg(long, value_enum)]
    model: Option<Kind>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    b: Option<usize>,
    /// Use deterministic rms coupling magnitudes.
    #[arg(long)]
    rms: bool,
    /// Write a gnuplot-ready `plot/` directory next to the results.
    #[arg(long)]
    plot: bool,
}

impl Common {
    fn config(&self, kind: ExperimentKind) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let c = ExperimentConfig::from_file(path)?;
                if c.kind != kind {
                    return Err(Error::Config(format!(
                        "{} describes `{}`, not `{}`",
                        path.display(),
                        c.kind.name(),
                        kind.name()
                    )));
                }
                c
            }
            None => ExperimentConfig::new(kind),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.ensemble {
            cfg.ensemble = v;
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        if self.label.is_some() {
            cfg.label = self.label.clone();
        }
        let touches_model =
            self.model.is_some() || self.s.is_some() || self.epsilon.is_some() || self.rho.is_some() || self.b.is_some();
        if touches_model || self.rms {
            let mut m = match cfg.model {
                Some(m) => m,
                None => ModelConfig {
                    kind: ModelKind::Wigner,
                    s: self.s.ok_or_else(|| Error::Config("--s is required without a config".into()))?,
                    epsilon: self
                        .epsilon
                        .ok_or_else(|| Error::Config("--epsilon is required without a config".into()))?,
                    rho: 1.0,
                    b: self.b.ok_or_else(|| Error::Config("--b is required without a config".into()))?,
                    n_levels: None,
                    amplitude: CouplingAmplitude::Gaussian,
                },
            };
            if let Some(k) = self.model {
                m.kind = match k {
                    Kind::Fm => ModelKind::Friedrichs,
                    Kind::Wm => ModelKind::Wigner,
                };
            }
            m.s = self.s.unwrap_or(m.s);
            m.epsilon = self.epsilon.unwrap_or(m.epsilon);
            m.rho = self.rho.unwrap_or(m.rho);
            m.b = self.b.unwrap_or(m.b);
            if self.rms {
                m.amplitude = CouplingAmplitude::Rms;
            }
            cfg.model = Some(m);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<(RunReport, bool)> {
    let (common, kind, criteria) = match &cli.command {
        Command::Ldos(c) => (c, ExperimentKind::Ldos, None),
        Command::Decay(c) => (c, ExperimentKind::Decay, None),
        Command::Spread(c) => (c, ExperimentKind::Spread, None),
        Command::ScanS(c) => (c, ExperimentKind::ScanS, None),
        Command::CoreScaling(c) => (c, ExperimentKind::CoreScaling, None),
        Command::Accept { common, criteria } => (common, ExperimentKind::Acceptance, Some(criteria)),
    };
    let mut cfg = common.config(kind)?;
    if let Some(ids) = criteria {
        if !ids.is_empty() {
            cfg.criteria = ids.clone();
        }
        if let Some(bad) = cfg.criteria.iter().find(|id| !acceptance::ALL.contains(id)) {
            return Err(Error::InvalidParameter(format!("no criterion {bad}")));
        }
    }
    let report = harness::run(&cfg)?;
    if common.plot {
        harness::emit_plot_data(&report)?;
    }
    let mut ok = true;
    if kind == ExperimentKind::Acceptance {
        let verdicts: Vec<acceptance::Verdict> =
            serde_json::from_value(report.summary.clone()).map_err(|e| Error::Io(e.to_string()))?;
        for v in &verdicts {
            println!("{}", v.line());
        }
        ok = verdicts.iter().all(|v| v.pass);
    } else {
        println!("{}", serde_json::to_string_pretty(&report.summary).unwrap_or_default());
    }
    eprintln!("results in {}", report.run_dir.display());
    Ok((report, ok))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok((_, true)) => ExitCode::SUCCESS,
        Ok((_, false)) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
