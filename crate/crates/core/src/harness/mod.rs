//! Experiment orchestration: configs, ensembles, output files, plot data
//! and the acceptance suite.

pub mod acceptance;
mod config;
pub mod ensemble;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{ExperimentConfig, ExperimentKind, LdosConfig, ModelConfig, TimeGrid, TimeUnit};
pub use ensemble::{run_ensemble, EnsembleDiagnostics, EnsembleOutcome};
pub use output::{FileEntry, Table};

use crate::error::{Error, Result};
use crate::hamiltonian::{ModelKind, ModelSpec};
use crate::ldos::{
    decay_asymptotics, ldos_numerical, survival_from_ldos, DecayRegime, FmLdos, Kernel, LambShiftModel,
    LdosSource,
};
use crate::observables::{
    core_scaling_analysis, decay_fit_window, fit_stretch_exponent, recurrence_time, saturation_theory,
    spreading_fm_exact, spreading_lrt_series, ObservableSeries,
};
use crate::spectral::{TimeScales, WignerVariant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedDiagnostics {
    pub label: String,
    pub diagnostics: EnsembleDiagnostics,
}

/// Everything a run produced, written as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub config: ExperimentConfig,
    pub run_dir: PathBuf,
    pub time_scales: Option<TimeScales>,
    pub files: Vec<FileEntry>,
    pub wall_seconds: f64,
    pub diagnostics: Vec<NamedDiagnostics>,
    /// Experiment-specific results (fits, acceptance verdicts).
    pub summary: serde_json::Value,
}

impl RunReport {
    pub fn file(&self, name: &str) -> Option<PathBuf> {
        self.files
            .iter()
            .find(|f| f.path == Path::new(name))
            .map(|f| self.run_dir.join(&f.path))
    }
}

fn series_table(s: &ObservableSeries) -> Table {
    Table::new()
        .column("t", s.times.clone())
        .column("P0", s.p0.clone())
        .column("P0_err", s.p0_err.clone())
        .column("dE_core", s.de_core.clone())
        .column("dE_core_err", s.de_core_err.clone())
        .column("dE_sprd", s.de_sprd.clone())
        .column("dE_sprd_err", s.de_sprd_err.clone())
        .column("E25", s.e25.clone())
        .column("E50", s.e50.clone())
        .column("E75", s.e75.clone())
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    dir: PathBuf,
    threads: usize,
    files: Vec<FileEntry>,
    diagnostics: Vec<NamedDiagnostics>,
}

impl Ctx<'_> {
    fn table(&mut self, name: &str, t: &Table, what: &str) -> Result<()> {
        self.files.push(output::write_table(&self.dir, name, t, what)?);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T, what: &str) -> Result<()> {
        self.files.push(output::write_json(&self.dir, name, v, what)?);
        Ok(())
    }

    fn ensemble(&mut self, spec: &ModelSpec, label: &str) -> Result<ObservableSeries> {
        let times = self.cfg.times.times(&spec.profile())?;
        let out = run_ensemble(spec, &times, self.cfg.propagator, self.cfg.ensemble, self.cfg.seed, self.threads)?;
        self.diagnostics.push(NamedDiagnostics {
            label: label.to_string(),
            diagnostics: out.diagnostics,
        });
        Ok(out.series)
    }
}

/// Run an experiment and write its data files and `report.json`.
///
/// Data files depend only on the config, so rerunning overwrites them with
/// identical bytes.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let dir = cfg.run_dir()?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut ctx = Ctx {
        cfg,
        dir: dir.clone(),
        threads: cfg.thread_count(),
        files: Vec::new(),
        diagnostics: Vec::new(),
    };
    let spec = cfg.model.map(|m| m.spec(cfg.seed)).transpose()?;
    let time_scales = spec.as_ref().and_then(|s| s.profile().time_scales().ok());
    let summary = match cfg.kind {
        ExperimentKind::Ldos => run_ldos(&mut ctx, spec.as_ref().expect("validated"))?,
        ExperimentKind::Decay => run_decay(&mut ctx, spec.as_ref().expect("validated"))?,
        ExperimentKind::Spread => run_spread(&mut ctx, spec.as_ref().expect("validated"))?,
        ExperimentKind::ScanS => run_scan_s(&mut ctx, spec.as_ref().expect("validated"))?,
        ExperimentKind::CoreScaling => run_core_scaling(&mut ctx, spec.as_ref().expect("validated"))?,
        ExperimentKind::Acceptance => {
            let ids = if cfg.criteria.is_empty() {
                acceptance::ALL.to_vec()
            } else {
                cfg.criteria.clone()
            };
            let opts = acceptance::Options {
                threads: ctx.threads,
                seed: cfg.seed,
            };
            let results = pool_install(ctx.threads, || acceptance::run_selected(&ids, &opts))?;
            ctx.json("acceptance.json", &results, "acceptance verdicts")?;
            to_json(&results)
        }
    };
    let mut report = RunReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        run_dir: dir.clone(),
        time_scales,
        files: ctx.files,
        wall_seconds: start.elapsed().as_secs_f64(),
        diagnostics: ctx.diagnostics,
        summary,
    };
    report.files.sort_by(|a, b| a.path.cmp(&b.path));
    output::write_json(&dir, "report.json", &report, "run report")?;
    Ok(report)
}

fn pool_install<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    Ok(ensemble::pool(threads)?.install(f))
}

fn run_ldos(ctx: &mut Ctx, spec: &ModelSpec) -> Result<serde_json::Value> {
    let binning = ctx.cfg.ldos.expect("validated").binning;
    let (ensemble, threads) = (ctx.cfg.ensemble, ctx.threads);
    let hist = pool_install(threads, || ldos_numerical(spec, binning, ensemble))??;
    let analytic = FmLdos::new(spec.profile(), LambShiftModel::Finite)?;
    let widths: Vec<f64> = hist.edges.windows(2).map(|e| e[1] - e[0]).collect();
    let expected: Vec<f64> = analytic
        .bin_integrals(&binning)?
        .iter()
        .zip(&widths)
        .map(|(w, d)| w / d)
        .collect();
    let t = Table::new()
        .column("lo", hist.edges[..hist.edges.len() - 1].to_vec())
        .column("hi", hist.edges[1..].to_vec())
        .column("center", hist.centers())
        .column("density", hist.density())
        .column("stderr", hist.stderr.iter().zip(&widths).map(|(e, w)| e / w).collect())
        .column("fm_analytic", expected);
    ctx.table("ldos.csv", &t, "binned LDOS with the analytic Friedrichs overlay")?;
    Ok(serde_json::json!({
        "realizations": hist.realizations,
        "outside": hist.outside,
    }))
}

fn run_decay(ctx: &mut Ctx, spec: &ModelSpec) -> Result<serde_json::Value> {
    let series = ctx.ensemble(spec, "decay")?;
    ctx.table("series.csv", &series_table(&series), "ensemble observables")?;
    let profile = spec.profile();
    let mut summary = serde_json::Map::new();
    if spec.kind == ModelKind::Friedrichs && profile.s < 2.0 {
        let ldos = FmLdos::new(profile, LambShiftModel::Finite)?;
        let c = survival_from_ldos(LdosSource::Analytic(&ldos), &series.times)?;
        ctx.table(
            "theory.csv",
            &Table::new().column("t", series.times.clone()).column("P0_ft", c.p0()),
            "survival probability from the analytic LDOS",
        )?;
    }
    let window = match ctx.cfg.fit_window {
        Some((a, b)) => {
            let t0 = profile.wigner_time(WignerVariant::Exact)?;
            (a * t0, b * t0)
        }
        None => decay_fit_window(&series, &profile, spec.kind)?,
    };
    let fit = fit_stretch_exponent(&series, window);
    summary.insert(
        "fit".into(),
        match &fit {
            Ok(f) => to_json(f),
            Err(e) => serde_json::json!({ "error": e.to_string(), "window": window }),
        },
    );
    ctx.json("fit.json", &summary["fit"], "stretch-exponent fit")?;
    Ok(serde_json::Value::Object(summary))
}

fn run_spread(ctx: &mut Ctx, spec: &ModelSpec) -> Result<serde_json::Value> {
    let series = ctx.ensemble(spec, "spread")?;
    ctx.table("series.csv", &series_table(&series), "ensemble observables")?;
    let profile = spec.profile();
    let lrt = spreading_lrt_series(&Kernel::Profile(profile), &series.times)?;
    let mut t = Table::new().column("t", series.times.clone()).column("lrt", lrt);
    if spec.kind == ModelKind::Friedrichs && profile.s < 2.0 {
        let ldos = FmLdos::new(profile, LambShiftModel::Finite)?;
        let c = survival_from_ldos(LdosSource::Analytic(&ldos), &series.times)?;
        let fm = spreading_fm_exact(&c, profile.c0())?;
        t = t.column("fm_exact", fm.iter().map(|x| x.value).collect());
    }
    ctx.table("spread_theory.csv", &t, "spreading theory on the sampling grid")?;
    Ok(serde_json::json!({
        "c0_realized": series.c0,
        "c0_profile": profile.c0(),
        "saturation_theory": saturation_theory(&profile, true)?,
        "recurrence": recurrence_time(&series),
    }))
}

fn run_scan_s(ctx: &mut Ctx, spec: &ModelSpec) -> Result<serde_json::Value> {
    let mut rows = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for &s in &ctx.cfg.s_values.clone() {
        let sp = ModelSpec { s, ..*spec };
        sp.validate()?;
        let series = ctx.ensemble(&sp, &format!("s={s}"))?;
        ctx.table(&format!("series_s{s}.csv"), &series_table(&series), "ensemble observables")?;
        let profile = sp.profile();
        let window = match ctx.cfg.fit_window {
            Some((a, b)) => {
                let t0 = profile.wigner_time(WignerVariant::Exact)?;
                (a * t0, b * t0)
            }
            None => decay_fit_window(&series, &profile, sp.kind)?,
        };
        let (alpha, err) = match fit_stretch_exponent(&series, window) {
            Ok(f) => (f.alpha, f.stderr),
            Err(_) => (f64::NAN, f64::NAN),
        };
        rows.0.push(s);
        rows.1.push(alpha);
        rows.2.push(err);
        rows.3.push(window.0);
        rows.4.push(window.1);
    }
    let expected = rows.0.iter().map(|s| 2.0 - s).collect();
    let t = Table::new()
        .column("s", rows.0)
        .column("alpha", rows.1)
        .column("alpha_err", rows.2)
        .column("expected", expected)
        .column("window_lo", rows.3)
        .column("window_hi", rows.4);
    ctx.table("scan.csv", &t, "stretch exponent against s")?;
    Ok(serde_json::Value::Null)
}

fn run_core_scaling(ctx: &mut Ctx, spec: &ModelSpec) -> Result<serde_json::Value> {
    let mut runs = Vec::new();
    let mut t0s = Vec::new();
    for &e in &ctx.cfg.epsilon_values.clone() {
        let sp = ModelSpec { epsilon: e, ..*spec };
        sp.validate()?;
        let series = ctx.ensemble(&sp, &format!("epsilon={e}"))?;
        ctx.table(&format!("series_eps{e}.csv"), &series_table(&series), "ensemble observables")?;
        t0s.push(sp.profile().wigner_time(WignerVariant::Exact)?);
        runs.push((e, series));
    }
    let analysis = core_scaling_analysis(&runs)?;
    let p = &analysis.points;
    let t = Table::new()
        .column("epsilon", p.iter().map(|x| x.epsilon).collect())
        .column("t0", t0s)
        .column("departure", p.iter().map(|x| x.departure).collect())
        .column("saturation", p.iter().map(|x| x.saturation).collect())
        .column("inverse_saturation", p.iter().map(|x| 1.0 / x.saturation).collect())
        .column("half_life", p.iter().map(|x| x.half_life.unwrap_or(f64::NAN)).collect())
        .column("saturated", p.iter().map(|x| if x.saturated { 1.0 } else { 0.0 }).collect());
    ctx.table("core.csv", &t, "departure time against inverse core saturation")?;
    ctx.json("core_fit.json", &analysis.fit, "log-log fit of the core scatter")?;
    Ok(to_json(&analysis))
}

// ---------------------------------------------------------------------------
// Plot data

/// Write gnuplot-ready `.dat` files for a finished run under `plot/`.
pub fn emit_plot_data(report: &RunReport) -> Result<Vec<FileEntry>> {
    let dir = report.run_dir.join("plot");
    let cfg = &report.config;
    let spec = cfg.model.map(|m| m.spec(cfg.seed)).transpose()?;
    let read = |name: &str| -> Result<Table> {
        let path = report
            .file(name)
            .ok_or_else(|| Error::Io(format!("report lists no {name}")))?;
        Table::read_csv(&path)
    };
    let mut out = Vec::new();
    let mut emit = |name: &str, t: Table, what: &str| -> Result<()> {
        out.push(output::write_file(&dir, name, &t.to_dat(), what)?);
        Ok(())
    };
    match cfg.kind {
        ExperimentKind::Decay => {
            let spec = spec.expect("validated");
            let profile = spec.profile();
            let t0 = profile.wigner_time(WignerVariant::Exact)?;
            let s = read("series.csv")?;
            let t = s.get("t").expect("column t").to_vec();
            let theory = |regime| -> Vec<f64> {
                t.iter()
                    .map(|&x| {
                        if x > 0.0 {
                            decay_asymptotics(&profile, x, regime).map_or(f64::NAN, |a| a.value * a.value)
                        } else {
                            1.0
                        }
                    })
                    .collect()
            };
            let tab = Table::new()
                .column("t/t0", t.iter().map(|x| x / t0).collect())
                .column("P0", s.get("P0").expect("column P0").to_vec())
                .column("theory_stretched", theory(DecayRegime::Stretched))
                .column("theory_powerlaw", theory(DecayRegime::PowerLaw));
            emit("decay.dat", tab, "P0 against t/t0 with asymptotes")?;
        }
        ExperimentKind::Spread => {
            let spec = spec.expect("validated");
            let profile = spec.profile();
            let s = read("series.csv")?;
            let th = read("spread_theory.csv")?;
            let c0 = report.summary["c0_realized"].as_f64().unwrap_or(profile.c0());
            let norm = c0.sqrt();
            let pnorm = profile.c0().sqrt();
            let mut tab = Table::new()
                .column("wc_t", s.get("t").expect("t").iter().map(|x| x * profile.omega_c).collect())
                .column("dE_sprd", s.get("dE_sprd").expect("dE_sprd").iter().map(|x| x / norm).collect())
                .column("lrt", th.get("lrt").expect("lrt").iter().map(|x| x / pnorm).collect());
            if let Some(fm) = th.get("fm_exact") {
                tab = tab.column("fm_exact", fm.iter().map(|x| x / pnorm).collect());
            }
            emit("spread.dat", tab, "scaled spread against scaled time")?;
        }
        ExperimentKind::ScanS => {
            let s = read("scan.csv")?;
            let tab = Table::new()
                .column("s", s.get("s").expect("s").to_vec())
                .column("alpha", s.get("alpha").expect("alpha").to_vec())
                .column("expected", s.get("expected").expect("expected").to_vec())
                .column("alpha_err", s.get("alpha_err").expect("alpha_err").to_vec());
            emit("alpha.dat", tab, "fitted exponent against s")?;
        }
        ExperimentKind::Ldos => {
            let s = read("ldos.csv")?;
            let tab = Table::new()
                .column("omega", s.get("center").expect("center").to_vec())
                .column("density", s.get("density").expect("density").to_vec())
                .column("fm_analytic", s.get("fm_analytic").expect("fm_analytic").to_vec());
            emit("ldos.dat", tab, "LDOS with analytic overlay")?;
        }
        ExperimentKind::CoreScaling => {
            let s = read("core.csv")?;
            let tab = Table::new()
                .column("inverse_saturation", s.get("inverse_saturation").expect("col").to_vec())
                .column("departure", s.get("departure").expect("col").to_vec())
                .column("t0", s.get("t0").expect("col").to_vec());
            emit("core.dat", tab, "core scaling scatter")?;
        }
        ExperimentKind::Acceptance => {}
    }
    Ok(out)
}
