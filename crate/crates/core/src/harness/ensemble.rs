use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{realization_seed, ModelSpec};
use crate::observables::{simulate, ObservableSeries, SeriesAccumulator, Simulation};
use crate::propagator::PropagatorOptions;

/// Minimum fraction of realizations that must succeed.
pub const MIN_SUCCESS_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationFailure {
    pub index: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDiagnostics {
    pub matvecs: u64,
    pub chunks_redone: u64,
    pub max_norm_drift: f64,
    pub max_lattice: (i64, i64),
    pub retried: Vec<usize>,
    pub failures: Vec<RealizationFailure>,
}

#[derive(Debug, Clone)]
pub struct EnsembleOutcome {
    pub series: ObservableSeries,
    pub accumulator: SeriesAccumulator,
    pub diagnostics: EnsembleDiagnostics,
}

/// Build a pool of `threads` workers.
pub fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Run `count` independent realizations of `base` (seeds derived from
/// `master`) and merge them in index order, so the result does not depend
/// on scheduling.
///
/// Each realization is retried once. Fails with `PartialEnsemble` when
/// fewer than 80% succeed.
pub fn run_ensemble(
    base: &ModelSpec,
    times: &[f64],
    opts: PropagatorOptions,
    count: usize,
    master: u64,
    threads: usize,
) -> Result<EnsembleOutcome> {
    run_ensemble_with(base, times, count, master, threads, |spec| simulate(spec, times, opts))
}

/// [`run_ensemble`] with a custom per-realization job.
pub fn run_ensemble_with<F>(
    base: &ModelSpec,
    times: &[f64],
    count: usize,
    master: u64,
    threads: usize,
    job: F,
) -> Result<EnsembleOutcome>
where
    F: Fn(&ModelSpec) -> Result<Simulation> + Sync,
{
    if count == 0 {
        return Err(Error::InvalidParameter("empty ensemble".into()));
    }
    let seeds: Vec<u64> = (0..count).map(|i| realization_seed(master, i as u64)).collect();
    let results: Vec<(Result<Simulation>, bool)> = pool(threads)?.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let spec = base.with_seed(seed);
                match job(&spec) {
                    Ok(s) => (Ok(s), false),
                    Err(_) => (job(&spec), true),
                }
            })
            .collect()
    });
    let mut acc = SeriesAccumulator::new(times.to_vec());
    let mut diag = EnsembleDiagnostics::default();
    for (index, (res, retried)) in results.into_iter().enumerate() {
        if retried {
            diag.retried.push(index);
        }
        match res {
            Ok(sim) => {
                acc.push(&sim.samples, sim.c0)?;
                diag.matvecs += sim.stats.matvecs;
                diag.chunks_redone += u64::from(sim.stats.chunks_redone);
                diag.max_norm_drift = diag.max_norm_drift.max(sim.stats.max_norm_drift);
                diag.max_lattice = (
                    diag.max_lattice.0.min(sim.final_lattice.0),
                    diag.max_lattice.1.max(sim.final_lattice.1),
                );
            }
            Err(e) => diag.failures.push(RealizationFailure {
                index,
                seed: seeds[index],
                error: e.to_string(),
            }),
        }
    }
    let succeeded = count - diag.failures.len();
    if (succeeded as f64) < MIN_SUCCESS_FRACTION * count as f64 {
        return Err(Error::PartialEnsemble {
            succeeded,
            requested: count,
            first_error: diag.failures.first().map(|f| f.error.clone()).unwrap_or_default(),
        });
    }
    Ok(EnsembleOutcome {
        series: acc.finish(),
        accumulator: acc,
        diagnostics: diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::ModelKind;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn spec() -> ModelSpec {
        ModelSpec::new(ModelKind::Wigner, 1.5, 0.4, 1.0, 12, 12, 0).unwrap()
    }

    #[test]
    fn independent_of_thread_count() {
        let times = [0.0, 0.5, 1.0, 2.0];
        let a = run_ensemble(&spec(), &times, PropagatorOptions::default(), 5, 3, 1).unwrap();
        let b = run_ensemble(&spec(), &times, PropagatorOptions::default(), 5, 3, 3).unwrap();
        assert_eq!(a.series, b.series);
        assert_eq!(a.series.realizations, 5);
    }

    #[test]
    fn retries_once_then_excludes() {
        let times = [0.0, 1.0];
        let calls = AtomicUsize::new(0);
        // Realization 0 fails twice; realization 1 fails once then succeeds.
        let bad0 = realization_seed(9, 0);
        let flaky = realization_seed(9, 1);
        let out = run_ensemble_with(&spec(), &times, 5, 9, 1, |s| {
            let k = calls.fetch_add(1, Ordering::SeqCst);
            if s.seed == bad0 || (s.seed == flaky && k < 3) {
                return Err(Error::Numerical("synthetic".into()));
            }
            simulate(s, &times, PropagatorOptions::default())
        })
        .unwrap();
        assert_eq!(out.series.realizations, 4);
        assert_eq!(out.diagnostics.failures.len(), 1);
        assert_eq!(out.diagnostics.failures[0].index, 0);
        assert_eq!(out.diagnostics.retried, vec![0, 1]);
    }

    #[test]
    fn too_many_failures_is_partial() {
        let times = [0.0, 1.0];
        let bad = [realization_seed(9, 0), realization_seed(9, 1)];
        let job = |s: &ModelSpec| {
            if bad.contains(&s.seed) {
                Err(Error::Numerical("synthetic".into()))
            } else {
                simulate(s, &times, PropagatorOptions::default())
            }
        };
        // Three of five is below the 80% floor; four of five is not.
        let r = run_ensemble_with(&spec(), &times, 5, 9, 1, job);
        assert!(matches!(r, Err(Error::PartialEnsemble { succeeded: 3, requested: 5, .. })));
        let bad1 = realization_seed(9, 0);
        let r = run_ensemble_with(&spec(), &times, 5, 9, 1, |s| {
            if s.seed == bad1 {
                Err(Error::Numerical("synthetic".into()))
            } else {
                simulate(s, &times, PropagatorOptions::default())
            }
        });
        assert_eq!(r.unwrap().series.realizations, 4);
        let r = run_ensemble_with(&spec(), &times, 5, 9, 1, |_| Err(Error::Numerical("x".into())));
        assert!(matches!(r, Err(Error::PartialEnsemble { succeeded: 0, requested: 5, .. })));
    }
}
