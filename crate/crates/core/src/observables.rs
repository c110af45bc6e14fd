//! Observables of the spreading wavepacket and the spreading theory.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hamiltonian::ModelSpec;
use crate::ldos::{Kernel, SurvivalAmplitude};
use crate::propagator::{PropagationStats, Propagator, PropagatorOptions, Wavepacket};
use crate::quadrature::integrate_pieces;
use crate::spectral::{BandProfile, CutoffKind, WignerVariant};
use crate::stats::{linear_fit, median, Accumulator, LineFit};

/// Observables of one wavepacket at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub p0: f64,
    pub de_core: f64,
    pub de_sprd: f64,
    pub e25: f64,
    pub e50: f64,
    pub e75: f64,
}

/// `P₀`, second-moment spread, and quartiles of the energy distribution.
///
/// Quartiles interpolate the mid-site cumulative distribution
/// `F_n = Σ_{m<n} P_m + P_n/2` linearly between occupied sites, so a
/// single occupied site gives all quartiles at its energy.
pub fn measure(psi: &Wavepacket) -> Sample {
    let probs = psi.probabilities();
    let total: f64 = probs.iter().sum();
    let energy = |i: usize| (psi.lo + i as i64) as f64 / psi.rho;
    let de_sprd = probs
        .iter()
        .enumerate()
        .map(|(i, p)| energy(i).powi(2) * p)
        .sum::<f64>()
        / total;
    let mut nodes: Vec<(f64, f64)> = Vec::new();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            nodes.push((energy(i), (acc + 0.5 * p) / total));
        }
        acc += p;
    }
    let quantile = |q: f64| -> f64 {
        if nodes.is_empty() {
            return 0.0;
        }
        let k = nodes.partition_point(|n| n.1 < q);
        if k == 0 {
            nodes[0].0
        } else if k == nodes.len() {
            nodes[k - 1].0
        } else {
            let (e0, f0) = nodes[k - 1];
            let (e1, f1) = nodes[k];
            e0 + (e1 - e0) * (q - f0) / (f1 - f0)
        }
    };
    let (e25, e50, e75) = (quantile(0.25), quantile(0.5), quantile(0.75));
    Sample {
        t: psi.t,
        p0: psi.amplitude(0).norm_sqr(),
        de_core: e75 - e25,
        de_sprd: de_sprd.sqrt(),
        e25,
        e50,
        e75,
    }
}

/// Time series of observables, possibly an ensemble mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub p0: Vec<f64>,
    pub de_core: Vec<f64>,
    pub de_sprd: Vec<f64>,
    pub e25: Vec<f64>,
    pub e50: Vec<f64>,
    pub e75: Vec<f64>,
    pub p0_err: Vec<f64>,
    pub de_core_err: Vec<f64>,
    pub de_sprd_err: Vec<f64>,
    pub realizations: usize,
    /// Mean realized `C(0) = Σ_n |V_{n0}|²`.
    pub c0: f64,
}

impl ObservableSeries {
    pub fn from_samples(samples: &[Sample], c0: f64) -> Self {
        let mut acc = SeriesAccumulator::new(samples.iter().map(|s| s.t).collect());
        acc.push(samples, c0).expect("grid built from the samples");
        acc.finish()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Per-time mean/variance accumulators for an ensemble of series on a
/// common grid. Merging is associative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesAccumulator {
    times: Vec<f64>,
    cols: [Vec<Accumulator>; 6],
    c0: Accumulator,
}

impl SeriesAccumulator {
    pub fn new(times: Vec<f64>) -> Self {
        let n = times.len();
        SeriesAccumulator {
            times,
            cols: std::array::from_fn(|_| vec![Accumulator::default(); n]),
            c0: Accumulator::default(),
        }
    }

    pub fn realizations(&self) -> u64 {
        self.c0.n
    }

    pub fn push(&mut self, samples: &[Sample], c0: f64) -> Result<()> {
        if samples.len() != self.times.len() || samples.iter().zip(&self.times).any(|(s, t)| s.t != *t) {
            return Err(invalid("realization sampled on a different time grid"));
        }
        for (k, s) in samples.iter().enumerate() {
            for (col, v) in self.cols.iter_mut().zip([s.p0, s.de_core, s.de_sprd, s.e25, s.e50, s.e75]) {
                col[k].push(v);
            }
        }
        self.c0.push(c0);
        Ok(())
    }

    pub fn merge(&self, other: &SeriesAccumulator) -> Result<SeriesAccumulator> {
        if self.times != other.times {
            return Err(invalid("cannot merge series on different grids"));
        }
        let cols = std::array::from_fn(|j| {
            self.cols[j]
                .iter()
                .zip(&other.cols[j])
                .map(|(a, b)| a.merge(b))
                .collect()
        });
        Ok(SeriesAccumulator {
            times: self.times.clone(),
            cols,
            c0: self.c0.merge(&other.c0),
        })
    }

    pub fn finish(&self) -> ObservableSeries {
        let mean = |j: usize| self.cols[j].iter().map(|a| a.mean).collect::<Vec<_>>();
        let err = |j: usize| self.cols[j].iter().map(|a| a.stderr()).collect::<Vec<_>>();
        ObservableSeries {
            times: self.times.clone(),
            p0: mean(0),
            de_core: mean(1),
            de_sprd: mean(2),
            e25: mean(3),
            e50: mean(4),
            e75: mean(5),
            p0_err: err(0),
            de_core_err: err(1),
            de_sprd_err: err(2),
            realizations: self.c0.n as usize,
            c0: self.c0.mean,
        }
    }
}

/// Output of one propagated realization.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub samples: Vec<Sample>,
    /// `ψ₀(t)` at the sample times.
    pub amplitude: Vec<Complex64>,
    /// Realized `C(0)`.
    pub c0: f64,
    pub stats: PropagationStats,
    pub final_lattice: (i64, i64),
}

/// Propagate `δ_{n,0}` under `spec` and measure at `times`.
pub fn simulate(spec: &ModelSpec, times: &[f64], opts: PropagatorOptions) -> Result<Simulation> {
    let mut p = Propagator::for_spec(spec, opts)?;
    let c0: f64 = p.matrix().row0().iter().map(|(_, v)| v * v).sum();
    let mut psi = p.initial_state()?;
    let mut samples = Vec::with_capacity(times.len());
    let mut amplitude = Vec::with_capacity(times.len());
    p.run(&mut psi, times, |w, _| {
        samples.push(measure(w));
        amplitude.push(w.amplitude(0));
        Ok(())
    })?;
    Ok(Simulation {
        samples,
        amplitude,
        c0,
        stats: p.stats.clone(),
        final_lattice: p.matrix().lattice(),
    })
}

/// `n` log-spaced times on `[lo, hi]`, preceded by `t = 0`.
pub fn log_times(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut t = vec![0.0];
    if n == 1 {
        t.push(lo);
    } else {
        t.extend((0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)));
    }
    t
}

/// Default sampling grid: log-spaced over `[1e-2 t₀, 1e3 t₀]`.
pub fn default_times(profile: &BandProfile, n: usize) -> Result<Vec<f64>> {
    let t0 = profile.wigner_time(WignerVariant::Exact)?;
    Ok(log_times(1e-2 * t0, 1e3 * t0, n))
}

// ---------------------------------------------------------------------------
// Perturbative distribution

/// Tail `(1/2π)(C̃(ω)/ω²) 4 sin²(ωt/2)` of the first-order energy
/// distribution.
pub fn fopt_distribution(profile: &BandProfile, omega: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let x = 0.5 * omega * t;
    // sin²(x)/ω² without cancellation at small ω.
    let sinc2 = if x.abs() < 1e-8 { 0.25 * t * t } else { (x.sin() / omega).powi(2) };
    let c = profile.spectral_function(omega);
    if c == 0.0 {
        return 0.0;
    }
    c / (2.0 * std::f64::consts::PI) * 4.0 * sinc2
}

/// Weight of the first-order tail, `∫ tail dω`; the delta part carries
/// `1 - weight`. `valid` is false once `t ≥ t₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoptWeight {
    pub tail: f64,
    pub complement: f64,
    pub valid: bool,
}

pub fn fopt_weight(profile: &BandProfile, t: f64) -> Result<FoptWeight> {
    let w = match profile.cutoff {
        CutoffKind::Sharp => profile.omega_c,
        CutoffKind::Exponential => 60.0 * profile.omega_c,
    };
    let mut breaks = vec![0.0];
    // Panels of one oscillation period after a geometric lead-in.
    let period = if t > 0.0 { 2.0 * std::f64::consts::PI / t } else { w };
    let mut x = (1e-12 * w).min(period);
    while x < w {
        breaks.push(x);
        x = (x * 1.5).min(x + period);
    }
    breaks.push(w);
    let half = integrate_pieces(|o| fopt_distribution(profile, o, t), &breaks, 1e-14, 1e-10)?;
    let tail = 2.0 * half;
    let t0 = profile.wigner_time(WignerVariant::Exact).unwrap_or(f64::INFINITY);
    Ok(FoptWeight {
        tail,
        complement: 1.0 - tail,
        valid: t < t0,
    })
}

// ---------------------------------------------------------------------------
// Spreading theory

/// Linear-response spread `[2(C(0) - Re C(t))]^(1/2)`.
pub fn spreading_lrt(c0: f64, ct: Complex64) -> f64 {
    (2.0 * (c0 - ct.re)).max(0.0).sqrt()
}

/// `spreading_lrt` of a kernel at each of `times`.
pub fn spreading_lrt_series(kernel: &Kernel, times: &[f64]) -> Result<Vec<f64>> {
    let c0 = kernel.c0();
    times.iter().map(|&t| Ok(spreading_lrt(c0, kernel.value(t)?))).collect()
}

/// Friedrichs-model spread from `c₀` and its derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FmSpread {
    pub t: f64,
    pub value: f64,
    /// Imaginary part of the bracket written without conjugation,
    /// `(1+c²)C(0) - ċ² + 2cc̈`.
    pub imag_residue: f64,
}

/// `ΔE² = (1+|c|²)C(0) - |ċ|² + 2 Re(c c̈*)`.
///
/// This is `⟨ψ|(H-V)²|ψ⟩` evaluated with `⟨H²⟩ = C(0)` and
/// `Σ_n V_{0n} ψ_n = iċ`. For real `c₀` it coincides with the bracket
/// without conjugation.
pub fn spreading_fm_exact(c: &SurvivalAmplitude, c0: f64) -> Result<Vec<FmSpread>> {
    let (d1, d2) = match (&c.dc0, &c.ddc0) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(invalid("survival amplitude lacks derivatives")),
    };
    let tol = 1e-6 * c0.abs().max(1e-300);
    c.times
        .iter()
        .zip(&c.c0)
        .zip(d1.iter().zip(d2))
        .map(|((&t, &a), (&da, &dda))| {
            let r = (1.0 + a.norm_sqr()) * c0 - da.norm_sqr() + 2.0 * (a * dda.conj()).re;
            if r < -tol {
                return Err(Error::Numerical(format!(
                    "negative spread radicand {r:e} at t = {t}; inputs are inconsistent"
                )));
            }
            let raw = (1.0 + a * a) * c0 - da * da + 2.0 * a * dda;
            Ok(FmSpread {
                t,
                value: r.max(0.0).sqrt(),
                imag_residue: raw.im,
            })
        })
        .collect()
}

/// Saturated spread `[2ε²(ω_c^s - ω_ϱ^s)/s]^(1/2)`; the `ω_ϱ` term only
/// with `finite_spacing`.
pub fn saturation_theory(profile: &BandProfile, finite_spacing: bool) -> Result<f64> {
    let s = profile.s;
    if !(s > 0.0) {
        return Err(invalid("s must be positive"));
    }
    let lower = if finite_spacing { profile.omega_rho.powf(s) } else { 0.0 };
    Ok((2.0 * profile.epsilon.powi(2) * (profile.omega_c.powf(s) - lower) / s).sqrt())
}

// ---------------------------------------------------------------------------
// Fits

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StretchFit {
    pub alpha: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub npoints: usize,
    /// Fitted `ln τ` in `P₀ = exp[-(t/τ)^α]`.
    pub ln_tau: f64,
}

/// Regress `ln(-ln P₀)` on `ln t` over `window`.
pub fn fit_stretch_exponent(series: &ObservableSeries, window: (f64, f64)) -> Result<StretchFit> {
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (&t, &p) in series.times.iter().zip(&series.p0) {
        if t >= window.0 && t <= window.1 && p > 0.0 && p < 1.0 && t > 0.0 {
            x.push(t.ln());
            y.push((-p.ln()).ln());
        }
    }
    if x.len() < 8 {
        return Err(Error::InsufficientData(format!(
            "{} usable points in window [{:e}, {:e}], need 8",
            x.len(),
            window.0,
            window.1
        )));
    }
    let f = linear_fit(&x, &y)?;
    Ok(StretchFit {
        alpha: f.slope,
        stderr: f.slope_stderr,
        window,
        npoints: f.n,
        ln_tau: -f.intercept / f.slope,
    })
}

/// `[2t₀, min(t∞, 50t₀)]`; empty (`lo ≥ hi`) when `t∞ < 2t₀`.
pub fn auto_fit_window(profile: &BandProfile) -> Result<(f64, f64)> {
    let ts = profile.time_scales()?;
    Ok((2.0 * ts.t0, ts.t_inf.min(50.0 * ts.t0)))
}

/// Smallest `P₀` admitted into a Wigner-model stretch fit. The ensemble
/// mean `P₀` levels off at the inverse participation number of the core,
/// which for lattices that fit in memory is a few percent.
pub const WIGNER_FIT_FLOOR: f64 = 0.1;

/// Stretch-fit window for a measured series.
///
/// Friedrichs: [`auto_fit_window`]. Wigner: `[2t₀, min(50t₀, t_f)]` where
/// `t_f` is the first time after `2t₀` with `P₀ < WIGNER_FIT_FLOOR`.
pub fn decay_fit_window(series: &ObservableSeries, profile: &BandProfile, kind: crate::hamiltonian::ModelKind) -> Result<(f64, f64)> {
    match kind {
        crate::hamiltonian::ModelKind::Friedrichs => auto_fit_window(profile),
        crate::hamiltonian::ModelKind::Wigner => {
            let t0 = profile.wigner_time(WignerVariant::Exact)?;
            let lo = 2.0 * t0;
            let floor = series
                .times
                .iter()
                .zip(&series.p0)
                .find(|(t, p)| **t >= lo && **p < WIGNER_FIT_FLOOR)
                .map_or(f64::INFINITY, |(t, _)| *t);
            Ok((lo, floor.min(50.0 * t0)))
        }
    }
}

/// First time after departure at which `ΔE_core` falls more than 10% below
/// its running maximum.
pub fn recurrence_time(series: &ObservableSeries) -> Option<f64> {
    let peak = series.de_core.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return None;
    }
    let mut run = 0.0f64;
    let mut departed = false;
    for (&t, &v) in series.times.iter().zip(&series.de_core) {
        run = run.max(v);
        departed |= v >= 0.5 * peak;
        if departed && v < 0.9 * run {
            return Some(t);
        }
    }
    None
}

/// One run's point in the core-scaling scatter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorePoint {
    pub epsilon: f64,
    /// First time `ΔE_core` exceeds half its saturation.
    pub departure: f64,
    /// Median `ΔE_core` over the last decade of the run.
    pub saturation: f64,
    /// Time at which `P₀` first drops to 1/2.
    pub half_life: Option<f64>,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreScaling {
    pub points: Vec<CorePoint>,
    /// Free fit of `ln(departure)` against `ln(1/saturation)`.
    pub fit: LineFit,
    /// Largest deviation from the best slope-1 line through the points.
    pub unit_slope_spread: f64,
}

fn core_point(epsilon: f64, s: &ObservableSeries) -> CorePoint {
    let t_end = *s.times.last().unwrap_or(&0.0);
    let decade: Vec<f64> = s
        .times
        .iter()
        .zip(&s.de_core)
        .filter(|(t, _)| **t >= 0.1 * t_end)
        .map(|(_, v)| *v)
        .collect();
    let early: Vec<f64> = s
        .times
        .iter()
        .zip(&s.de_core)
        .filter(|(t, _)| **t >= 0.1 * t_end && **t < 0.3 * t_end)
        .map(|(_, v)| *v)
        .collect();
    let late: Vec<f64> = s
        .times
        .iter()
        .zip(&s.de_core)
        .filter(|(t, _)| **t >= 0.3 * t_end)
        .map(|(_, v)| *v)
        .collect();
    let saturation = median(&decade).unwrap_or(0.0);
    let settled = match (median(&early), median(&late)) {
        (Some(a), Some(b)) => b > 0.0 && (a / b - 1.0).abs() < 0.1,
        _ => false,
    };
    let departure = s
        .times
        .iter()
        .zip(&s.de_core)
        .find(|(_, v)| **v > 0.5 * saturation)
        .map(|(t, _)| *t)
        .unwrap_or(f64::NAN);
    let half_life = s.times.iter().zip(&s.p0).find(|(_, p)| **p <= 0.5).map(|(t, _)| *t);
    CorePoint {
        epsilon,
        departure,
        saturation,
        half_life,
        saturated: settled && saturation > 0.0 && departure.is_finite(),
    }
}

/// Departure time against inverse core saturation over an `ε` scan.
pub fn core_scaling_analysis(runs: &[(f64, ObservableSeries)]) -> Result<CoreScaling> {
    if runs.len() < 4 {
        return Err(invalid("core scaling needs at least four epsilon values"));
    }
    let points: Vec<CorePoint> = runs.iter().map(|(e, s)| core_point(*e, s)).collect();
    let good: Vec<&CorePoint> = points.iter().filter(|p| p.saturated).collect();
    if good.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "only {} of {} runs saturated",
            good.len(),
            points.len()
        )));
    }
    let x: Vec<f64> = good.iter().map(|p| (1.0 / p.saturation).ln()).collect();
    let y: Vec<f64> = good.iter().map(|p| p.departure.ln()).collect();
    let fit = linear_fit(&x, &y)?;
    let offset = y.iter().zip(&x).map(|(a, b)| a - b).sum::<f64>() / x.len() as f64;
    let unit_slope_spread = y
        .iter()
        .zip(&x)
        .map(|(a, b)| (a - b - offset).abs())
        .fold(0.0, f64::max);
    Ok(CoreScaling {
        points,
        fit,
        unit_slope_spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::ModelKind;

    fn packet(probs: &[(i64, f64)], lo: i64, hi: i64, rho: f64) -> Wavepacket {
        let mut amps = vec![Complex64::default(); (hi - lo + 1) as usize];
        for &(n, p) in probs {
            amps[(n - lo) as usize] = Complex64::new(p.sqrt(), 0.0);
        }
        Wavepacket { amps, lo, rho, t: 0.0 }
    }

    #[test]
    fn delta_packet() {
        let s = measure(&packet(&[(0, 1.0)], -5, 5, 1.0));
        assert_eq!((s.p0, s.de_core, s.de_sprd, s.e25, s.e50, s.e75), (1.0, 0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn three_point_uniform() {
        let third = 1.0 / 3.0;
        let s = measure(&packet(&[(-1, third), (0, third), (1, third)], -4, 4, 1.0));
        assert!((s.de_sprd - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        // Mid-site cumulative: F(-1) = 1/6, F(0) = 1/2, F(1) = 5/6.
        assert!((s.e25 + 0.75).abs() < 1e-14 && s.e50.abs() < 1e-14 && (s.e75 - 0.75).abs() < 1e-14);
        assert!((s.de_core - 1.5).abs() < 1e-14);
    }

    #[test]
    fn skewed_three_point() {
        // P = (0.5, 0.3, 0.2) at E = (-2, 0, 3) with ϱ = 2 → E_n = n/2.
        let s = measure(&packet(&[(-4, 0.5), (0, 0.3), (6, 0.2)], -8, 8, 2.0));
        // F = 0.25, 0.65, 0.9 at E = -2, 0, 3.
        assert!((s.e25 + 2.0).abs() < 1e-14);
        assert!((s.e50 - (-2.0 + 2.0 * 0.25 / 0.4)).abs() < 1e-14);
        assert!((s.e75 - 3.0 * 0.1 / 0.25).abs() < 1e-14);
        assert!((s.de_sprd - (0.5 * 4.0 + 0.2 * 9.0f64).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn symmetric_median_is_zero() {
        let s = measure(&packet(&[(-3, 0.1), (-1, 0.2), (0, 0.4), (1, 0.2), (3, 0.1)], -6, 6, 1.0));
        assert!(s.e50.abs() < 1e-15);
        assert!(s.e25 <= s.e50 && s.e50 <= s.e75);
    }

    #[test]
    fn uncoupled_simulation_stays_put() {
        let spec = ModelSpec::new(ModelKind::Wigner, 1.5, 0.0, 1.0, 4, 10, 3).unwrap();
        let sim = simulate(&spec, &[0.0, 1.0, 100.0], PropagatorOptions::default()).unwrap();
        assert!(sim.samples.iter().all(|s| (s.p0 - 1.0).abs() < 1e-14 && s.de_sprd < 1e-7));
    }

    #[test]
    fn fopt_limits() {
        let p = BandProfile::new(1.5, 0.1, 100.0, 0.01, CutoffKind::Sharp).unwrap();
        assert_eq!(fopt_distribution(&p, 3.0, 0.0), 0.0);
        let w = 1e-6;
        let t = 2.0;
        let env = p.spectral_function(w) / (2.0 * std::f64::consts::PI) * t * t;
        assert!((fopt_distribution(&p, w, t) / env - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fopt_weight_short_time_is_c0_t2() {
        // For t ≪ 1/ω_c the tail weight is C(0) t².
        let p = BandProfile::new(1.5, 0.1, 100.0, 0.01, CutoffKind::Sharp).unwrap();
        let t = 1e-4;
        let w = fopt_weight(&p, t).unwrap();
        assert!((w.tail / (p.c0() * t * t) - 1.0).abs() < 1e-3);
        assert!(w.valid);
    }

    #[test]
    fn lrt_ballistic_onset() {
        let p = BandProfile::new(1.5, 0.1, 100.0, 0.01, CutoffKind::Sharp).unwrap();
        let k = Kernel::Profile(p);
        // -C''(0) = ∫ω² C̃ dω/2π = 2ε² ω_c^(s+2)/(s+2).
        let slope = (2.0 * 0.01 * 100f64.powf(3.5) / 3.5).sqrt();
        let t = 1e-5;
        let v = spreading_lrt_series(&k, &[0.0, t]).unwrap();
        assert_eq!(v[0], 0.0);
        assert!((v[1] / t / slope - 1.0).abs() < 1e-3);
    }

    #[test]
    fn fm_spread_endpoints() {
        let c0 = 2.5;
        let amp = SurvivalAmplitude {
            times: vec![0.0, 1e9],
            c0: vec![Complex64::new(1.0, 0.0), Complex64::default()],
            dc0: Some(vec![Complex64::default(); 2]),
            ddc0: Some(vec![Complex64::new(-c0, 0.0), Complex64::default()]),
            provenance: crate::ldos::Provenance::Asymptotic,
        };
        let s = spreading_fm_exact(&amp, c0).unwrap();
        assert_eq!(s[0].value, 0.0);
        assert!((s[1].value - c0.sqrt()).abs() < 1e-15);
        let bad = SurvivalAmplitude {
            ddc0: Some(vec![Complex64::new(-2.0 * c0, 0.0), Complex64::default()]),
            ..amp
        };
        assert!(spreading_fm_exact(&bad, c0).is_err());
    }

    #[test]
    fn fm_spread_matches_small_simulation() {
        // Exact c₀ and derivatives from the spectral sum of a small FM.
        let spec = ModelSpec::new(ModelKind::Friedrichs, 1.4, 0.3, 1.0, 30, 30, 5).unwrap();
        let times: Vec<f64> = (0..15).map(|k| 0.37 * k as f64).collect();
        let sim = simulate(&spec, &times, PropagatorOptions::default()).unwrap();
        let e = crate::ldos::diagonalize(&spec).unwrap();
        let c = crate::ldos::survival_from_ldos(crate::ldos::LdosSource::Discrete(&e), &times).unwrap();
        let th = spreading_fm_exact(&c, sim.c0).unwrap();
        for (a, b) in sim.samples.iter().zip(&th) {
            assert!((a.de_sprd - b.value).abs() < 1e-9 * (1.0 + b.value), "{} {}", a.de_sprd, b.value);
        }
    }

    #[test]
    fn saturation_values() {
        let p = BandProfile::new(1.0, 0.3, 50.0, 1.0, CutoffKind::Sharp).unwrap();
        let a = saturation_theory(&p, true).unwrap();
        assert!((a - (2.0 * 0.09 * 49.0f64).sqrt()).abs() < 1e-12);
        // s → 0: (ω_c^s - ω_ϱ^s)/s → ln(ϱω_c).
        let p = BandProfile::new(1e-7, 1.0, 50.0, 0.5, CutoffKind::Sharp).unwrap();
        let v = saturation_theory(&p, true).unwrap().powi(2) / 2.0;
        assert!((v - 100f64.ln()).abs() < 1e-4);
    }

    #[test]
    fn synthetic_stretch_fit() {
        let times = log_times(0.01, 100.0, 200);
        let p0: Vec<f64> = times.iter().map(|t| (-t.powf(0.7)).exp()).collect();
        let sample: Vec<Sample> = times
            .iter()
            .zip(&p0)
            .map(|(&t, &p)| Sample { t, p0: p, de_core: 0.0, de_sprd: 0.0, e25: 0.0, e50: 0.0, e75: 0.0 })
            .collect();
        let s = ObservableSeries::from_samples(&sample, 1.0);
        let f = fit_stretch_exponent(&s, (0.1, 10.0)).unwrap();
        assert!((f.alpha - 0.7).abs() < 1e-10 && f.ln_tau.abs() < 1e-9);
        assert!(fit_stretch_exponent(&s, (1.0, 1.05)).is_err());
    }

    #[test]
    fn auto_window_is_empty_when_power_law_takes_over_early() {
        let p = BandProfile::new(1.5, 0.1, 100.0, 0.01, CutoffKind::Sharp).unwrap();
        let (lo, hi) = auto_fit_window(&p).unwrap();
        assert!(lo > hi);
        let p = BandProfile::new(1.1, 0.1, 100.0, 0.01, CutoffKind::Sharp).unwrap();
        let (lo, hi) = auto_fit_window(&p).unwrap();
        assert!(lo < hi);
    }

    #[test]
    fn accumulator_merge_matches_single_pass() {
        let times = vec![0.0, 1.0];
        let mk = |p: f64| vec![
            Sample { t: 0.0, p0: 1.0, de_core: 0.0, de_sprd: 0.0, e25: 0.0, e50: 0.0, e75: 0.0 },
            Sample { t: 1.0, p0: p, de_core: 2.0 * p, de_sprd: p, e25: -p, e50: 0.0, e75: p },
        ];
        let mut all = SeriesAccumulator::new(times.clone());
        let mut a = SeriesAccumulator::new(times.clone());
        let mut b = SeriesAccumulator::new(times);
        for (i, p) in [0.1, 0.4, 0.35, 0.8].iter().enumerate() {
            all.push(&mk(*p), 1.0).unwrap();
            if i % 2 == 0 { a.push(&mk(*p), 1.0).unwrap() } else { b.push(&mk(*p), 1.0).unwrap() }
        }
        let m1 = all.finish();
        let m2 = b.merge(&a).unwrap().finish();
        assert!((m1.p0[1] - m2.p0[1]).abs() < 1e-15 && (m1.p0_err[1] - m2.p0_err[1]).abs() < 1e-15);
        assert_eq!(m2.realizations, 4);
    }
}
