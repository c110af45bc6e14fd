//! Local density of states (LDOS) of the initial state, and the survival
//! amplitude `c₀(t)` obtained from it three ways: Fourier transform of an
//! LDOS, the memory-kernel Volterra equation, and the long-time asymptotes.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen;
use crate::error::{invalid, Error, Result};
use crate::hamiltonian::{realization_seed, CouplingMatrix, ModelKind, ModelSpec};
use crate::quadrature::{graded_breaks, integrate, integrate_pieces, Rule};
use crate::spectral::{BandProfile, CutoffKind, WignerVariant};
use crate::stats::{linear_fit, LineFit};

/// Largest matrix `ldos_numerical` will diagonalize.
pub const MAX_DENSE_DIM: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Simulation,
    FtOfLdos,
    Volterra,
    Asymptotic,
}

/// `c₀(t)` on a time grid, optionally with its first two derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalAmplitude {
    pub times: Vec<f64>,
    pub c0: Vec<Complex64>,
    pub dc0: Option<Vec<Complex64>>,
    pub ddc0: Option<Vec<Complex64>>,
    pub provenance: Provenance,
}

impl SurvivalAmplitude {
    pub fn p0(&self) -> Vec<f64> {
        self.c0.iter().map(|c| c.norm_sqr()).collect()
    }

    /// Linear interpolation of `c₀` inside the grid.
    pub fn interpolate(&self, t: f64) -> Option<Complex64> {
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 || t > *self.times.last()? {
            return (k == 1 && self.times[0] == t).then(|| self.c0[0]);
        }
        if k == self.times.len() {
            return Some(self.c0[k - 1]);
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        Some(self.c0[k - 1] * (1.0 - w) + self.c0[k] * w)
    }
}

// ---------------------------------------------------------------------------
// Analytic Friedrichs LDOS

/// Which Lamb shift enters the Friedrichs LDOS denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambShiftModel {
    /// Principal value over the profile's band `0 < |ω'| ≤ ω_c`.
    #[default]
    Finite,
    /// Cutoff-free power law; no bound states.
    Universal,
}

/// Discrete eigenvalue split off a sharp band edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundState {
    pub omega: f64,
    pub weight: f64,
}

/// Exact Friedrichs-model LDOS `ρ(ω) = (1/π)(Γ/2)/((ω-Δ)² + (Γ/2)²)` with
/// `Γ = C̃(ω)`, plus any bound states outside a sharp band.
#[derive(Debug, Clone)]
pub struct FmLdos {
    profile: BandProfile,
    lamb: LambShiftModel,
    bound: Vec<BoundState>,
}

impl FmLdos {
    pub fn new(profile: BandProfile, lamb: LambShiftModel) -> Result<Self> {
        profile.validate()?;
        let mut ldos = FmLdos {
            profile,
            lamb,
            bound: Vec::new(),
        };
        if lamb == LambShiftModel::Finite && profile.cutoff == CutoffKind::Sharp && profile.epsilon > 0.0 {
            if let Some(b) = ldos.find_bound_state()? {
                ldos.bound = vec![BoundState { omega: -b.omega, weight: b.weight }, b];
            }
        }
        Ok(ldos)
    }

    pub fn profile(&self) -> &BandProfile {
        &self.profile
    }

    pub fn bound_states(&self) -> &[BoundState] {
        &self.bound
    }

    fn delta(&self, omega: f64) -> Result<f64> {
        match self.lamb {
            LambShiftModel::Finite => self.profile.lamb_shift_hilbert(omega),
            LambShiftModel::Universal => Ok(self.profile.lamb_shift(omega)?.value),
        }
    }

    /// Continuum density at `ω` (bound states excluded).
    pub fn density(&self, omega: f64) -> Result<f64> {
        let gamma = self.profile.spectral_function(omega);
        if gamma == 0.0 || gamma.is_infinite() {
            return Ok(if omega == 0.0 && gamma == 0.0 && self.profile.s > 1.0 {
                f64::INFINITY
            } else {
                0.0
            });
        }
        let half = 0.5 * gamma;
        let d = omega - self.delta(omega)?;
        Ok(half / PI / (d * d + half * half))
    }

    /// Root of `ω = Δ(ω)` above a sharp cutoff, if it is resolvable in
    /// double precision.
    fn find_bound_state(&self) -> Result<Option<BoundState>> {
        let wc = self.profile.omega_c;
        let f = |w: f64| -> Result<f64> { Ok(w - self.delta(w)?) };
        let near = wc * (1.0 + 1e-12);
        if f(near)? >= 0.0 {
            return Ok(None);
        }
        let mut hi = 2.0 * wc;
        while f(hi)? < 0.0 {
            hi = wc + 2.0 * (hi - wc);
            if hi > 1e12 * wc {
                return Err(Error::Numerical("bound state bracket diverged".into()));
            }
        }
        // Bisect in ln(ω - ω_c).
        let (mut a, mut b) = ((near - wc).ln(), (hi - wc).ln());
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(wc + m.exp())? < 0.0 {
                a = m;
            } else {
                b = m;
            }
            if b - a < 1e-14 {
                break;
            }
        }
        let x = (0.5 * (a + b)).exp();
        let w = wc + x;
        let h = 1e-5 * x;
        let slope = (self.delta(w + h)? - self.delta(w - h)?) / (2.0 * h);
        Ok(Some(BoundState {
            omega: w,
            weight: 1.0 / (1.0 - slope),
        }))
    }

    fn support(&self) -> f64 {
        match self.profile.cutoff {
            CutoffKind::Sharp => self.profile.omega_c,
            CutoffKind::Exponential => 60.0 * self.profile.omega_c,
        }
    }

    /// Quadrature nodes and `ρ`-weighted weights on the continuum.
    pub fn tabulate(&self, max_width: f64) -> Result<Spectrum> {
        let edge = self.profile.cutoff == CutoffKind::Sharp;
        let d = tabulate_density(|w| self.density(w), self.support(), max_width, edge)?;
        let mut points = d.points;
        points.extend(self.bound.iter().map(|b| (b.omega, b.weight)));
        Ok(Spectrum { points })
    }

    /// `∫ρ dω` over the continuum.
    pub fn continuum_weight(&self) -> Result<f64> {
        let t = self.tabulate(self.support() / 200.0)?;
        let bound: f64 = self.bound.iter().map(|b| b.weight).sum();
        Ok(t.points.iter().map(|p| p.1).sum::<f64>() - bound)
    }

    /// Probability in each bin of `binning` (both signs for folded bins).
    pub fn bin_integrals(&self, binning: &Binning) -> Result<Vec<f64>> {
        let edges = binning.edges();
        let folded = binning.folded();
        let mut out = Vec::with_capacity(edges.len() - 1);
        let piece = |a: f64, b: f64, sign: f64| -> Result<f64> {
            let f = |w: f64| self.density(sign * w).unwrap_or(f64::NAN);
            if a < 0.0 && b > 0.0 {
                integrate_pieces(f, &[a, 0.0, b], 1e-13, 1e-9)
            } else {
                integrate(f, a, b, 1e-13, 1e-9)
            }
        };
        for e in edges.windows(2) {
            let mut v = piece(e[0], e[1], 1.0)?;
            if folded {
                v += piece(e[0], e[1], -1.0)?;
            }
            for b in &self.bound {
                let x = if folded { b.omega.abs() } else { b.omega };
                if x >= e[0] && x < e[1] {
                    v += b.weight;
                }
            }
            if !v.is_finite() {
                return Err(Error::Numerical("LDOS bin integral did not converge".into()));
            }
            out.push(v);
        }
        Ok(out)
    }
}

/// Continuum density of the Friedrichs model at `ω` with the band-limited
/// Lamb shift.
pub fn fm_ldos_analytic(profile: &BandProfile, omega: f64) -> Result<f64> {
    profile.validate()?;
    FmLdos {
        profile: *profile,
        lamb: LambShiftModel::Finite,
        bound: Vec::new(),
    }
    .density(omega)
}

/// Approximate marginal (`s = 2`) LDOS `ε²/(ω² + t₀^(-2))^(1/2)` on the
/// band, with `t₀ = e^(1/(2ε²))/ω_c`.
pub fn marginal_ldos(profile: &BandProfile, omega: f64) -> f64 {
    if omega.abs() > profile.omega_c {
        return 0.0;
    }
    let a = 1.0 / marginal_decay_time(profile);
    profile.epsilon.powi(2) / (omega * omega + a * a).sqrt()
}

/// Decay time of the marginal `s = 2` case, `t₀ = e^(1/(2ε²))/ω_c`.
pub fn marginal_decay_time(profile: &BandProfile) -> f64 {
    (0.5 / profile.epsilon.powi(2)).exp() / profile.omega_c
}

/// A discrete set of `(ω, weight)` pairs whose sum approximates
/// `∫ρ(ω) f(ω) dω`.
#[derive(Debug, Clone, Default)]
pub struct Spectrum {
    pub points: Vec<(f64, f64)>,
}

impl Spectrum {
    pub fn total(&self) -> f64 {
        self.points.iter().map(|p| p.1).sum()
    }

    /// `c(t) = Σ w e^{-iωt}` and its first two time derivatives.
    pub fn transform(&self, times: &[f64], provenance: Provenance) -> SurvivalAmplitude {
        let rows: Vec<[Complex64; 3]> = times
            .par_iter()
            .map(|&t| {
                let (mut c, mut d1, mut d2) = (Complex64::default(), Complex64::default(), Complex64::default());
                for &(w, a) in &self.points {
                    let (sn, cs) = (w * t).sin_cos();
                    let e = Complex64::new(a * cs, -a * sn);
                    c += e;
                    d1 += Complex64::new(0.0, -w) * e;
                    d2 -= w * w * e;
                }
                [c, d1, d2]
            })
            .collect();
        SurvivalAmplitude {
            times: times.to_vec(),
            c0: rows.iter().map(|r| r[0]).collect(),
            dc0: Some(rows.iter().map(|r| r[1]).collect()),
            ddc0: Some(rows.iter().map(|r| r[2]).collect()),
            provenance,
        }
    }
}

/// Gauss-Legendre tabulation of a density on `(-W, W)`, graded
/// geometrically toward `ω = 0` (and toward `±W` when `edge`), with panels
/// no wider than `max_width`.
pub fn tabulate_density<F>(f: F, support: f64, max_width: f64, edge: bool) -> Result<Spectrum>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    if !(support > 0.0 && max_width > 0.0) {
        return Err(invalid("support and panel width must be positive"));
    }
    let lo = 1e-14 * support;
    let ratio = 1.25;
    let mut breaks = if edge {
        let mut b = graded_breaks(lo, 0.5 * support, ratio, max_width);
        let mut top: Vec<f64> = graded_breaks(lo, 0.5 * support, ratio, max_width)
            .into_iter()
            .map(|x| support - x)
            .collect();
        top.reverse();
        b.pop();
        b.extend(top);
        b
    } else {
        graded_breaks(lo, support, ratio, max_width)
    };
    breaks.dedup();
    let rule = Rule::composite(&breaks, 12);
    let pairs: Vec<(f64, f64)> = rule.nodes.iter().copied().zip(rule.weights.iter().copied()).collect();
    let points: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|&(x, w)| -> Result<[(f64, f64); 2]> { Ok([(x, w * f(x)?), (-x, w * f(-x)?)]) })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    if points.iter().any(|p| !p.1.is_finite()) {
        return Err(Error::Numerical("density is not finite on a quadrature node".into()));
    }
    Ok(Spectrum { points })
}

// ---------------------------------------------------------------------------
// Numerical LDOS

/// Histogram binning of `ω = E_ν - E₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Binning {
    /// Uniform bins on `[lo, hi]`.
    Linear { lo: f64, hi: f64, bins: usize },
    /// Log-spaced bins of `|ω|` on `[lo, hi]`, both signs folded together.
    LogAbs { lo: f64, hi: f64, bins: usize },
}

impl Binning {
    pub fn edges(&self) -> Vec<f64> {
        match *self {
            Binning::Linear { lo, hi, bins } => (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect(),
            Binning::LogAbs { lo, hi, bins } => (0..=bins)
                .map(|i| lo * (hi / lo).powf(i as f64 / bins as f64))
                .collect(),
        }
    }

    pub fn folded(&self) -> bool {
        matches!(self, Binning::LogAbs { .. })
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Binning::Linear { lo, hi, bins } => hi > lo && bins > 0,
            Binning::LogAbs { lo, hi, bins } => lo > 0.0 && hi > lo && bins > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid binning {self:?}")))
        }
    }

    fn index(&self, edges: &[f64], omega: f64) -> Option<usize> {
        let x = if self.folded() { omega.abs() } else { omega };
        let k = edges.partition_point(|&e| e <= x);
        (k >= 1 && k < edges.len()).then(|| k - 1)
    }
}

/// Eigenvalues and overlaps `|⟨E_ν|0⟩|²` of one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenLdos {
    pub energies: Vec<f64>,
    pub weights: Vec<f64>,
    pub seed: u64,
}

impl EigenLdos {
    pub fn spectrum(&self) -> Spectrum {
        Spectrum {
            points: self.energies.iter().copied().zip(self.weights.iter().copied()).collect(),
        }
    }
}

/// Diagonalize `diag(E_n) + V` on the initial lattice of `spec`.
pub fn diagonalize(spec: &ModelSpec) -> Result<EigenLdos> {
    let v = CouplingMatrix::build(spec)?;
    let n = v.size();
    if n > MAX_DENSE_DIM {
        return Err(Error::DimensionExceeded {
            requested: n,
            limit: MAX_DENSE_DIM,
        });
    }
    let flat: Vec<f64> = v.dense_hamiltonian(spec).into_iter().flatten().collect();
    let index = (-v.lattice().0) as usize;
    let (energies, weights) = eigen::eigh_weights(&flat, n, index)?;
    Ok(EigenLdos {
        energies,
        weights,
        seed: spec.seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdosHistogram {
    pub binning: Binning,
    pub edges: Vec<f64>,
    /// Mean probability per bin.
    pub weights: Vec<f64>,
    pub stderr: Vec<f64>,
    pub model: ModelKind,
    pub realizations: usize,
    /// Mean probability falling outside the bins.
    pub outside: f64,
}

impl LdosHistogram {
    /// Bin one or more realizations. A single realization gets its error bars
    /// from the scatter of the level weights inside each bin.
    pub fn from_samples(binning: Binning, model: ModelKind, samples: &[EigenLdos]) -> Result<Self> {
        binning.validate()?;
        if samples.is_empty() {
            return Err(invalid("no realizations to bin"));
        }
        let edges = binning.edges();
        let nb = edges.len() - 1;
        let r = samples.len();
        let mut per = vec![vec![0.0; nb]; r];
        let mut sq = vec![0.0; nb];
        let mut count = vec![0usize; nb];
        let mut outside = 0.0;
        for (k, s) in samples.iter().enumerate() {
            for (&e, &w) in s.energies.iter().zip(&s.weights) {
                match binning.index(&edges, e) {
                    Some(i) => {
                        per[k][i] += w;
                        sq[i] += w * w;
                        count[i] += 1;
                    }
                    None => outside += w,
                }
            }
        }
        let rf = r as f64;
        let weights: Vec<f64> = (0..nb).map(|i| per.iter().map(|p| p[i]).sum::<f64>() / rf).collect();
        let stderr = (0..nb)
            .map(|i| {
                if r > 1 {
                    let m = weights[i];
                    let var = per.iter().map(|p| (p[i] - m).powi(2)).sum::<f64>() / (rf - 1.0);
                    (var / rf).sqrt()
                } else {
                    let k = count[i] as f64;
                    if count[i] < 2 {
                        weights[i]
                    } else {
                        let w = weights[i];
                        ((sq[i] - w * w / k) * k / (k - 1.0)).max(0.0).sqrt()
                    }
                }
            })
            .collect();
        Ok(LdosHistogram {
            binning,
            edges,
            weights,
            stderr,
            model,
            realizations: r,
            outside: outside / rf,
        })
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges
            .windows(2)
            .map(|e| if self.binning.folded() { (e[0] * e[1]).sqrt() } else { 0.5 * (e[0] + e[1]) })
            .collect()
    }

    /// Probability per unit `ω` (per unit `|ω|` when folded).
    pub fn density(&self) -> Vec<f64> {
        self.edges.windows(2).zip(&self.weights).map(|(e, w)| w / (e[1] - e[0])).collect()
    }

    /// `χ²` and degrees of freedom against `expected` bin probabilities, over
    /// the bins lying inside `range` that carry a nonzero error.
    pub fn chi_square(&self, expected: &[f64], range: (f64, f64)) -> Result<(f64, usize)> {
        if expected.len() != self.weights.len() {
            return Err(invalid("expected bins do not match the histogram"));
        }
        let mut chi2 = 0.0;
        let mut dof = 0;
        for (i, e) in self.edges.windows(2).enumerate() {
            if e[0] >= range.0 && e[1] <= range.1 && self.stderr[i] > 0.0 {
                chi2 += ((self.weights[i] - expected[i]) / self.stderr[i]).powi(2);
                dof += 1;
            }
        }
        if dof == 0 {
            return Err(Error::InsufficientData("no bins inside the comparison range".into()));
        }
        Ok((chi2, dof))
    }

    /// Log-log regression of the density over bins inside `[lo, hi]`.
    pub fn tail_slope(&self, lo: f64, hi: f64) -> Result<LineFit> {
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for ((e, d), c) in self.edges.windows(2).zip(self.density()).zip(self.centers()) {
            if e[0] >= lo && e[1] <= hi && d > 0.0 {
                x.push(c.abs().ln());
                y.push(d.ln());
            }
        }
        if x.len() < 3 {
            return Err(Error::InsufficientData(format!(
                "only {} populated bins in [{lo}, {hi}]",
                x.len()
            )));
        }
        linear_fit(&x, &y)
    }

    /// Spectrum at bin centers; folded bins are split evenly between `±ω`.
    pub fn spectrum(&self) -> Spectrum {
        let mut points = Vec::new();
        for (c, &w) in self.centers().iter().zip(&self.weights) {
            if self.binning.folded() {
                points.push((*c, 0.5 * w));
                points.push((-*c, 0.5 * w));
            } else {
                points.push((*c, w));
            }
        }
        Spectrum { points }
    }
}

/// Diagonalize `realizations` matrices (seeds derived from `spec.seed`) and
/// bin their LDOS. One realization uses `spec.seed` itself.
pub fn ldos_numerical(spec: &ModelSpec, binning: Binning, realizations: usize) -> Result<LdosHistogram> {
    spec.validate()?;
    binning.validate()?;
    if realizations == 0 {
        return Err(invalid("need at least one realization"));
    }
    let dim = 2 * spec.n_levels + 1;
    if dim > MAX_DENSE_DIM {
        return Err(Error::DimensionExceeded {
            requested: dim,
            limit: MAX_DENSE_DIM,
        });
    }
    let samples = (0..realizations)
        .into_par_iter()
        .map(|r| {
            let seed = if realizations == 1 { spec.seed } else { realization_seed(spec.seed, r as u64) };
            diagonalize(&spec.with_seed(seed))
        })
        .collect::<Result<Vec<_>>>()?;
    LdosHistogram::from_samples(binning, spec.kind, &samples)
}

/// Source of an LDOS for [`survival_from_ldos`].
pub enum LdosSource<'a> {
    /// Analytic Friedrichs LDOS; panels sized for the longest time.
    Analytic(&'a FmLdos),
    Histogram(&'a LdosHistogram),
    /// Exact eigenvalues and weights.
    Discrete(&'a EigenLdos),
    /// Any tabulated spectrum.
    Spectrum(&'a Spectrum),
}

/// `c₀(t) = ∫ρ(ω) e^{-iωt} dω` with derivatives.
pub fn survival_from_ldos(source: LdosSource<'_>, times: &[f64]) -> Result<SurvivalAmplitude> {
    if times.iter().any(|t| !t.is_finite()) {
        return Err(invalid("times must be finite"));
    }
    let spectrum = match source {
        LdosSource::Analytic(ldos) => {
            let t_max = times.iter().fold(0.0f64, |m, t| m.max(t.abs()));
            let w = ldos.support();
            let width = (4.0 / t_max.max(1e-300)).min(w / 64.0);
            ldos.tabulate(width)?
        }
        LdosSource::Histogram(h) => h.spectrum(),
        LdosSource::Discrete(e) => e.spectrum(),
        LdosSource::Spectrum(s) => s.clone(),
    };
    Ok(spectrum.transform(times, Provenance::FtOfLdos))
}

// ---------------------------------------------------------------------------
// Volterra equation

/// Memory kernel `C(t)` of `ċ₀ = -∫₀ᵗ C(t-t') c₀(t') dt'`.
#[derive(Debug, Clone)]
pub enum Kernel {
    Profile(BandProfile),
    /// `C(t) = Σ g_n e^{-iω_n t}` of a sampled matrix.
    Realized { omegas: Vec<f64>, weights: Vec<f64> },
}

impl Kernel {
    /// Kernel of row 0 of `v`: `g_n = |V_{n0}|²`, `ω_n = E_n`.
    pub fn realized(spec: &ModelSpec, v: &CouplingMatrix) -> Self {
        let (omegas, weights) = v
            .row0()
            .into_iter()
            .filter(|p| p.1 != 0.0)
            .map(|(n, x)| (spec.energy(n), x * x))
            .unzip();
        Kernel::Realized { omegas, weights }
    }

    /// `C(0)`.
    pub fn c0(&self) -> f64 {
        match self {
            Kernel::Profile(p) => p.c0(),
            Kernel::Realized { weights, .. } => weights.iter().sum(),
        }
    }

    /// `C(t)` at a single time.
    pub fn value(&self, t: f64) -> Result<Complex64> {
        match self {
            Kernel::Profile(p) => p.correlation_function(t),
            Kernel::Realized { omegas, weights } => Ok(omegas
                .iter()
                .zip(weights)
                .map(|(w, g)| Complex64::from_polar(*g, -w * t))
                .sum()),
        }
    }

    /// Highest frequency present (the cutoff `ω_c` for a profile).
    pub fn max_frequency(&self) -> f64 {
        match self {
            Kernel::Profile(p) => p.omega_c,
            Kernel::Realized { omegas, .. } => omegas.iter().fold(0.0, |m, w| f64::max(m, w.abs())),
        }
    }

    /// `C(kh)` for `k = 0..=m`.
    pub fn samples(&self, h: f64, m: usize) -> Result<Vec<Complex64>> {
        match self {
            Kernel::Profile(p) => (0..=m)
                .into_par_iter()
                .map(|k| p.correlation_function(k as f64 * h))
                .collect(),
            Kernel::Realized { omegas, weights } => {
                let step: Vec<Complex64> = omegas.iter().map(|w| Complex64::from_polar(1.0, -w * h)).collect();
                let mut z = vec![Complex64::new(1.0, 0.0); omegas.len()];
                let mut out = Vec::with_capacity(m + 1);
                for k in 0..=m {
                    if k % 4096 == 0 && k > 0 {
                        // Reset the phasors to stop rounding drift.
                        let t = k as f64 * h;
                        for (zi, w) in z.iter_mut().zip(omegas) {
                            *zi = Complex64::from_polar(1.0, -w * t);
                        }
                    }
                    out.push(z.iter().zip(weights).map(|(zi, g)| zi * g).sum());
                    for (zi, s) in z.iter_mut().zip(&step) {
                        *zi *= s;
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Solve the memory-kernel equation on `t = 0, h, …, t_max` by trapezoidal
/// product integration with an implicit trapezoid step. With
/// `derivatives`, `ċ₀ = -∫C c₀` and `c̈₀ = -[C(t) + ∫₀ᵗ C(u) ċ₀(t-u) du]`
/// are returned too.
///
/// Refuses steps at or above the Nyquist limit `π/ω_max` of the kernel.
pub fn survival_volterra(kernel: &Kernel, h: f64, t_max: f64, derivatives: bool) -> Result<SurvivalAmplitude> {
    if !(h > 0.0 && t_max >= 0.0 && t_max.is_finite()) {
        return Err(invalid("step and horizon must be positive and finite"));
    }
    let wmax = kernel.max_frequency();
    if h * wmax >= PI {
        return Err(invalid(format!(
            "step {h} samples the kernel below its Nyquist rate (ω_max = {wmax}); use dt < {}",
            PI / wmax
        )));
    }
    let m = (t_max / h).round() as usize;
    let ck = kernel.samples(h, m)?;
    let (kr, ki): (Vec<f64>, Vec<f64>) = ck.iter().map(|c| (c.re, c.im)).unzip();
    let c0k = ck[0];
    let denom = Complex64::new(1.0, 0.0) + 0.25 * h * h * c0k;
    let mut cr = vec![0.0; m + 1];
    let mut ci = vec![0.0; m + 1];
    let mut f = vec![Complex64::default(); m + 1];
    cr[0] = 1.0;
    for k in 1..=m {
        // Σ_{j=1}^{k-1} C_{k-j} c_j
        let (sr, si) = conv(&kr[1..k], &ki[1..k], &cr[1..k], &ci[1..k]);
        let c_first = Complex64::new(cr[0], ci[0]);
        let s = h * (0.5 * ck[k] * c_first + Complex64::new(sr, si));
        let prev = Complex64::new(cr[k - 1], ci[k - 1]);
        let c = (prev - 0.5 * h * (f[k - 1] + s)) / denom;
        cr[k] = c.re;
        ci[k] = c.im;
        f[k] = s + 0.5 * h * c0k * c;
    }
    let times: Vec<f64> = (0..=m).map(|k| k as f64 * h).collect();
    let c0: Vec<Complex64> = cr.iter().zip(&ci).map(|(&r, &i)| Complex64::new(r, i)).collect();
    let (dc0, ddc0) = if derivatives {
        let d: Vec<Complex64> = f.iter().map(|x| -x).collect();
        let (dr, di): (Vec<f64>, Vec<f64>) = d.iter().map(|c| (c.re, c.im)).unzip();
        let dd: Vec<Complex64> = (0..=m)
            .into_par_iter()
            .map(|k| {
                if k == 0 {
                    return -ck[0];
                }
                // Σ_{j=1}^{k-1} C_j ċ_{k-j}; ċ_0 = 0.
                let (sr, si) = conv(&dr[1..k], &di[1..k], &kr[1..k], &ki[1..k]);
                let g = ck[k] + h * (0.5 * ck[0] * d[k] + Complex64::new(sr, si));
                -g
            })
            .collect();
        (Some(d), Some(dd))
    } else {
        (None, None)
    };
    Ok(SurvivalAmplitude {
        times,
        c0,
        dc0,
        ddc0,
        provenance: Provenance::Volterra,
    })
}

/// `Σ_j a_{n-1-j} b_j` for complex `a`, `b` held as split arrays.
fn conv(ar: &[f64], ai: &[f64], br: &[f64], bi: &[f64]) -> (f64, f64) {
    let n = ar.len();
    let (mut sr, mut si) = (0.0, 0.0);
    for j in 0..n {
        let (xr, xi) = (ar[n - 1 - j], ai[n - 1 - j]);
        sr += xr * br[j] - xi * bi[j];
        si += xr * bi[j] + xi * br[j];
    }
    (sr, si)
}

/// Richardson combination `(4 fine - coarse)/3` of two second-order runs,
/// on the coarse grid. `fine` must use half the step of `coarse`.
pub fn richardson(coarse: &SurvivalAmplitude, fine: &SurvivalAmplitude) -> Result<SurvivalAmplitude> {
    if fine.times.len() < 2 * (coarse.times.len() - 1) + 1 {
        return Err(invalid("fine grid does not refine the coarse one"));
    }
    let pick = |v: &Option<Vec<Complex64>>, u: &Option<Vec<Complex64>>| -> Option<Vec<Complex64>> {
        match (v, u) {
            (Some(c), Some(f)) => Some(c.iter().enumerate().map(|(k, x)| (4.0 * f[2 * k] - x) / 3.0).collect()),
            _ => None,
        }
    };
    Ok(SurvivalAmplitude {
        times: coarse.times.clone(),
        c0: coarse.c0.iter().enumerate().map(|(k, x)| (4.0 * fine.c0[2 * k] - x) / 3.0).collect(),
        dc0: pick(&coarse.dc0, &fine.dc0),
        ddc0: pick(&coarse.ddc0, &fine.ddc0),
        provenance: coarse.provenance,
    })
}

// ---------------------------------------------------------------------------
// Asymptotics

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayRegime {
    /// `exp[-½(t/t₀)^(2-s)]`
    Stretched,
    /// `[2 sin((s-1)π)/((2-s)π)] (t₀/t)^(2-s)`
    PowerLaw,
    /// `(ε²/π) ln(t₀/t)` for `s = 2`
    LogS2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Asymptote {
    pub value: f64,
    /// False outside the regime's validity window.
    pub valid: bool,
}

pub fn decay_asymptotics(profile: &BandProfile, t: f64, regime: DecayRegime) -> Result<Asymptote> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("time must be positive, got {t}")));
    }
    let s = profile.s;
    match regime {
        DecayRegime::Stretched => {
            let t0 = profile.wigner_time(WignerVariant::Exact)?;
            Ok(Asymptote {
                value: (-0.5 * (t / t0).powf(2.0 - s)).exp(),
                valid: true,
            })
        }
        DecayRegime::PowerLaw => {
            let t0 = profile.wigner_time(WignerVariant::Exact)?;
            let amp = 2.0 * ((s - 1.0) * PI).sin() / ((2.0 - s) * PI);
            Ok(Asymptote {
                value: amp * (t0 / t).powf(2.0 - s),
                valid: t > t0,
            })
        }
        DecayRegime::LogS2 => {
            if (s - 2.0).abs() > 1e-9 {
                return Err(Error::OutOfRange {
                    quantity: "log decay law",
                    s,
                    range: "s = 2",
                });
            }
            let t0 = marginal_decay_time(profile);
            let tc = 2.0 * PI / profile.omega_c;
            Ok(Asymptote {
                value: profile.epsilon.powi(2) / PI * (t0 / t).ln(),
                valid: t >= 10.0 * tc && t <= 0.1 * t0,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sharp(s: f64, eps: f64, wc: f64, wr: f64) -> BandProfile {
        BandProfile::new(s, eps, wc, wr, CutoffKind::Sharp).unwrap()
    }

    #[test]
    fn ohmic_universal_ldos_is_lorentzian() {
        let p = BandProfile::new(1.0, 0.2, 1e3, 1e-3, CutoffKind::Sharp).unwrap();
        let l = FmLdos::new(p, LambShiftModel::Universal).unwrap();
        let g = 2.0 * PI * 0.04;
        for w in [-0.3, 0.0001, 0.05, 0.7] {
            let lor = (g / 2.0 / PI) / (w * w + g * g / 4.0);
            assert!((l.density(w).unwrap() - lor).abs() < 1e-12 * lor);
        }
    }

    #[test]
    fn analytic_ldos_is_normalized() {
        for s in [0.5, 1.5] {
            let p = sharp(s, 0.3, 4.0, 1e-3);
            let l = FmLdos::new(p, LambShiftModel::Finite).unwrap();
            // Independent route: adaptive quadrature on the two half bands.
            let f = |w: f64| l.density(w).unwrap();
            let cont = integrate(f, 0.0, 4.0, 1e-12, 1e-10).unwrap() + integrate(f, -4.0, 0.0, 1e-12, 1e-10).unwrap();
            let bound: f64 = l.bound_states().iter().map(|b| b.weight).sum();
            assert!((cont + bound - 1.0).abs() < 1e-6, "s={s}: {cont} + {bound}");
            let tab = l.tabulate(0.01).unwrap().total();
            assert!((tab - 1.0).abs() < 1e-6, "s={s}: {tab}");
        }
    }

    #[test]
    fn bound_states_carry_missing_weight() {
        // Strong coupling pushes visible bound states out of the band.
        let p = sharp(1.5, 1.0, 2.0, 1e-3);
        let l = FmLdos::new(p, LambShiftModel::Finite).unwrap();
        let b = l.bound_states();
        assert_eq!(b.len(), 2);
        assert!(b[1].omega > 2.0 && b[1].weight > 1e-3);
        assert!((b[0].omega + b[1].omega).abs() < 1e-12);
        // At the root ω = Δ(ω).
        let d = p.lamb_shift_hilbert(b[1].omega).unwrap();
        assert!((d - b[1].omega).abs() < 1e-9 * b[1].omega);
    }

    #[test]
    fn tail_follows_universal_law() {
        let p = sharp(1.5, 0.02, 1e6, 1e-9);
        let g0 = p.core_frequencies().unwrap().gamma0;
        // The Lamb shift correction falls off only as (γ₀/ω)^(1/2).
        for (w, tol) in [(1e5 * g0, 0.02), (1e6 * g0, 0.006)] {
            let r = fm_ldos_analytic(&p, w).unwrap() * w.powf(1.5) / 4e-4;
            assert!((r - 1.0).abs() < tol, "{r}");
        }
    }

    #[test]
    fn lorentzian_transform_decays_exponentially() {
        let p = BandProfile::new(1.0, 0.1, 1e3, 1e-4, CutoffKind::Sharp).unwrap();
        let l = FmLdos::new(p, LambShiftModel::Universal).unwrap();
        let times = [0.0, 5.0, 20.0, 50.0];
        let c = survival_from_ldos(LdosSource::Analytic(&l), &times).unwrap();
        for (t, c) in times.iter().zip(&c.c0) {
            let exact = (-PI * 0.01 * t).exp();
            // The finite band clips the Lorentzian tails at ~Γ/(π ω_c).
            assert!((c.norm() - exact).abs() < 2e-4, "t={t}: {} vs {exact}", c.norm());
        }
    }

    #[test]
    fn delta_ldos_gives_unit_amplitude() {
        let s = Spectrum { points: vec![(0.0, 1.0)] };
        let c = survival_from_ldos(LdosSource::Spectrum(&s), &[0.0, 3.0, 1e6]).unwrap();
        assert!(c.c0.iter().all(|c| (c - Complex64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn uncoupled_ldos_is_single_bin() {
        let spec = ModelSpec::new(ModelKind::Wigner, 1.5, 0.0, 1.0, 10, 50, 1).unwrap();
        let h = ldos_numerical(&spec, Binning::Linear { lo: -5.5, hi: 5.5, bins: 11 }, 1).unwrap();
        assert!((h.weights[5] - 1.0).abs() < 1e-12);
        assert!(h.weights.iter().enumerate().all(|(i, w)| i == 5 || *w == 0.0));
    }

    #[test]
    fn eigen_weights_sum_to_one() {
        for kind in [ModelKind::Friedrichs, ModelKind::Wigner] {
            let spec = ModelSpec::new(kind, 1.5, 0.5, 1.0, 20, 100, 4).unwrap();
            let e = diagonalize(&spec).unwrap();
            assert!((e.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn dimension_guard() {
        let spec = ModelSpec::new(ModelKind::Wigner, 1.5, 0.5, 1.0, 20, 2500, 4).unwrap();
        assert!(matches!(
            ldos_numerical(&spec, Binning::Linear { lo: -1.0, hi: 1.0, bins: 4 }, 1),
            Err(Error::DimensionExceeded { .. })
        ));
    }

    #[test]
    fn discrete_transform_matches_dense_propagation() {
        let spec = ModelSpec::new(ModelKind::Wigner, 1.2, 0.4, 1.0, 6, 40, 9).unwrap();
        let e = diagonalize(&spec).unwrap();
        let v = CouplingMatrix::build(&spec).unwrap();
        let times = [0.5, 2.0, 7.0];
        let dense = crate::propagator::dense_propagate(&spec, &v, &times).unwrap();
        let c = survival_from_ldos(LdosSource::Discrete(&e), &times).unwrap();
        for (k, d) in dense.iter().enumerate() {
            assert!((c.c0[k] - d[40]).norm() < 1e-12);
        }
    }

    #[test]
    fn markovian_kernel_gives_exponential() {
        // Exponential cutoff, s = 1: C(t) = 2ε²ω_c/(1+ω_c²t²), ∫₀^∞ C = πε².
        let eps = 0.05;
        let p = BandProfile::new(1.0, eps, 200.0, 1e-3, CutoffKind::Exponential).unwrap();
        let c = survival_volterra(&Kernel::Profile(p), 0.002, 60.0, false).unwrap();
        for (t, c) in c.times.iter().zip(&c.c0).step_by(3000) {
            let exact = (-PI * eps * eps * t).exp();
            assert!((c.norm() - exact).abs() < 2e-3, "t={t}");
        }
    }

    #[test]
    fn volterra_matches_small_friedrichs_exactly() {
        let spec = ModelSpec::new(ModelKind::Friedrichs, 1.3, 0.3, 1.0, 8, 8, 2).unwrap();
        let v = CouplingMatrix::build(&spec).unwrap();
        let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.5).collect();
        let dense = crate::propagator::dense_propagate(&spec, &v, &times).unwrap();
        let kern = Kernel::realized(&spec, &v);
        let coarse = survival_volterra(&kern, 0.01, 10.0, true).unwrap();
        let fine = survival_volterra(&kern, 0.005, 10.0, true).unwrap();
        let rich = richardson(&coarse, &fine).unwrap();
        let mut err = [0.0f64; 3];
        for (k, d) in dense.iter().enumerate() {
            let i = 50 * k;
            err[0] = err[0].max((coarse.c0[i] - d[8]).norm());
            err[1] = err[1].max((fine.c0[2 * i] - d[8]).norm());
            err[2] = err[2].max((rich.c0[i] - d[8]).norm());
        }
        // Second order: halving the step quarters the error.
        let ratio = err[0] / err[1];
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
        assert!(err[2] < 0.05 * err[1], "{err:?}");
        // Derivatives against the exact spectral sum.
        let e = diagonalize(&spec).unwrap();
        let ft = survival_from_ldos(LdosSource::Discrete(&e), &fine.times).unwrap();
        for k in (0..fine.times.len()).step_by(100) {
            assert!((fine.dc0.as_ref().unwrap()[k] - ft.dc0.as_ref().unwrap()[k]).norm() < 1e-3);
            assert!((fine.ddc0.as_ref().unwrap()[k] - ft.ddc0.as_ref().unwrap()[k]).norm() < 2e-3);
        }
    }

    #[test]
    fn nyquist_refusal() {
        let p = sharp(1.5, 0.1, 10.0, 1e-3);
        assert!(survival_volterra(&Kernel::Profile(p), 0.4, 10.0, false).is_err());
    }

    #[test]
    fn asymptote_values() {
        let p = sharp(1.0, 0.1, 100.0, 1e-3);
        let t0 = 1.0 / (2.0 * PI * 0.01);
        let a = decay_asymptotics(&p, 3.0 * t0, DecayRegime::Stretched).unwrap();
        assert!((a.value - (-1.5f64).exp()).abs() < 1e-12);
        let pl = decay_asymptotics(&p, 3.0 * t0, DecayRegime::PowerLaw).unwrap();
        assert!(pl.value.abs() < 1e-15);
        let p = sharp(1.5, 0.1, 100.0, 1e-3);
        let t0 = p.wigner_time(WignerVariant::Exact).unwrap();
        let pl = decay_asymptotics(&p, 9.0 * t0, DecayRegime::PowerLaw).unwrap();
        assert!((pl.value - 4.0 / PI / 3.0).abs() < 1e-12);
        assert!(decay_asymptotics(&p, 1.0, DecayRegime::LogS2).is_err());
    }

    #[test]
    fn histogram_single_realization_errors() {
        let e = EigenLdos {
            energies: vec![0.1, 0.2, 0.3, 1.5],
            weights: vec![0.1, 0.3, 0.2, 0.4],
            seed: 0,
        };
        let h = LdosHistogram::from_samples(Binning::Linear { lo: 0.0, hi: 2.0, bins: 2 }, ModelKind::Friedrichs, &[e]).unwrap();
        assert!((h.weights[0] - 0.6).abs() < 1e-15);
        // Three levels, weights 0.1, 0.3, 0.2: k·var = 3·0.01 = 0.03.
        assert!((h.stderr[0] - 0.03f64.sqrt()).abs() < 1e-12);
        assert_eq!(h.stderr[1], 0.4);
    }
}
