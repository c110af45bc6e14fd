//! Coupling matrices on the energy lattice `E_n = n/ϱ`.
//!
//! Friedrichs models couple level 0 to every in-band level and nothing else;
//! Wigner models couple every pair within the band. Elements are drawn from
//! a counter-based stream keyed by `(min(n, m), |n - m|)`, so growing the
//! lattice never changes elements that already exist.

use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::spectral::{BandProfile, CutoffKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Friedrichs,
    Wigner,
}

/// How coupling magnitudes are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingAmplitude {
    /// Independent Gaussians with the band's variance.
    #[default]
    Gaussian,
    /// Deterministic `|V| = sqrt(variance)`: the realized spectral function
    /// equals its expectation level by level.
    Rms,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub s: f64,
    pub epsilon: f64,
    /// Levels per unit energy.
    pub rho: f64,
    /// Bandwidth in levels, `b = ϱ ω_c`.
    pub b: usize,
    /// Initial lattice half-width.
    pub n_levels: usize,
    pub seed: u64,
    #[serde(default)]
    pub amplitude: CouplingAmplitude,
}

impl ModelSpec {
    pub fn new(
        kind: ModelKind,
        s: f64,
        epsilon: f64,
        rho: f64,
        b: usize,
        n_levels: usize,
        seed: u64,
    ) -> Result<Self> {
        let spec = ModelSpec {
            kind,
            s,
            epsilon,
            rho,
            b,
            n_levels,
            seed,
            amplitude: CouplingAmplitude::Gaussian,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_amplitude(mut self, amplitude: CouplingAmplitude) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.b < 1 {
            return Err(invalid("bandwidth b must be >= 1"));
        }
        if self.n_levels < 1 {
            return Err(invalid("n_levels must be >= 1"));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(invalid(format!("rho must be positive, got {}", self.rho)));
        }
        if self.n_levels > i32::MAX as usize / 4 || self.b > i32::MAX as usize / 4 {
            return Err(invalid("lattice too large"));
        }
        if !(self.s.is_finite() && self.s > 0.0) {
            return Err(invalid(format!("s must be positive, got {}", self.s)));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(invalid(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        Ok(())
    }

    pub fn omega_c(&self) -> f64 {
        self.b as f64 / self.rho
    }

    pub fn omega_rho(&self) -> f64 {
        1.0 / self.rho
    }

    /// The continuum profile this lattice model discretizes.
    pub fn profile(&self) -> BandProfile {
        BandProfile {
            s: self.s,
            epsilon: self.epsilon,
            omega_c: self.omega_c(),
            omega_rho: self.omega_rho(),
            cutoff: CutoffKind::Sharp,
        }
    }

    pub fn energy(&self, n: i64) -> f64 {
        n as f64 / self.rho
    }

    /// Variance of `V_{n,n+d}`: `ε² |d/ϱ|^(s-1) / ϱ`, so that the level sum
    /// reproduces `C̃(ω) = 2π ε² |ω|^(s-1)`.
    pub fn coupling_variance(&self, d: u64) -> f64 {
        if d == 0 || d as usize > self.b {
            return 0.0;
        }
        let w = d as f64 / self.rho;
        self.epsilon * self.epsilon * w.powf(self.s - 1.0) / self.rho
    }

    /// Initial lattice `[lo, hi]`.
    pub fn initial_lattice(&self) -> (i64, i64) {
        let n = self.n_levels as i64;
        (-n, n)
    }
}

/// Seed of realization `index` in an ensemble with master seed `master`.
pub fn realization_seed(master: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(master ^ mix(index))
}

/// Source of the per-element Gaussian draws.
#[derive(Clone)]
struct ElementStream {
    key: [u8; 32],
}

impl ElementStream {
    fn new(seed: u64) -> Self {
        ElementStream {
            key: ChaCha8Rng::seed_from_u64(seed).get_seed(),
        }
    }

    fn row(&self, r: i64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(r as u64);
        rng
    }

    /// Box-Muller from exactly two words, so draw `k` of a row sits at a
    /// fixed stream position and can be read without generating the rest.
    fn normal(rng: &mut ChaCha8Rng) -> f64 {
        let u1 = 1.0 - (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Draw `d` (1-based) of row `r`.
    fn at(&self, r: i64, d: u64) -> f64 {
        let mut rng = self.row(r);
        rng.set_word_pos(4 * (d as u128 - 1));
        Self::normal(&mut rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Storage {
    /// `diags[d-1][i] = V(lo+i, lo+i+d)`.
    Banded(Vec<Vec<f64>>),
    /// `row[i] = V(0, lo+i)`.
    Arrow(Vec<f64>),
}

/// Symmetric, zero-diagonal coupling matrix over the lattice `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    kind: ModelKind,
    b: usize,
    lo: i64,
    hi: i64,
    pub(crate) storage: Storage,
}

fn element(spec: &ModelSpec, stream: &ElementStream, r: i64, d: u64, z: Option<f64>) -> f64 {
    let sd = spec.coupling_variance(d).sqrt();
    match spec.amplitude {
        CouplingAmplitude::Rms => sd,
        CouplingAmplitude::Gaussian => sd * z.unwrap_or_else(|| stream.at(r, d)),
    }
}

/// Fill `diags` for all pairs with at least one index outside `[old_lo, old_hi]`.
fn fill_banded(
    spec: &ModelSpec,
    lo: i64,
    hi: i64,
    old: Option<(i64, i64)>,
    diags: &mut [Vec<f64>],
) {
    let stream = ElementStream::new(spec.seed);
    let b = diags.len() as i64;
    let gaussian = spec.amplitude == CouplingAmplitude::Gaussian;
    for r in lo..hi {
        let dmax = b.min(hi - r);
        // Only pairs (r, r+d) not already present need drawing.
        let d_start = match old {
            Some((olo, ohi)) if r >= olo && r <= ohi => (ohi - r + 1).max(1),
            _ => 1,
        };
        if d_start > dmax {
            continue;
        }
        let mut rng = stream.row(r);
        if gaussian && d_start > 1 {
            rng.set_word_pos(4 * (d_start as u128 - 1));
        }
        let i = (r - lo) as usize;
        for d in d_start..=dmax {
            let z = if gaussian {
                Some(ElementStream::normal(&mut rng))
            } else {
                None
            };
            diags[(d - 1) as usize][i] = element(spec, &stream, r, d as u64, z);
        }
    }
}

impl CouplingMatrix {
    /// Sample the coupling matrix on the initial lattice.
    pub fn build(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let (lo, hi) = spec.initial_lattice();
        Ok(Self::build_on(spec, lo, hi))
    }

    fn build_on(spec: &ModelSpec, lo: i64, hi: i64) -> Self {
        let size = (hi - lo + 1) as usize;
        let storage = match spec.kind {
            ModelKind::Friedrichs => {
                let stream = ElementStream::new(spec.seed);
                let row = (lo..=hi)
                    .map(|n| {
                        let d = n.unsigned_abs();
                        if d == 0 || d as usize > spec.b {
                            0.0
                        } else {
                            element(spec, &stream, n.min(0), d, None)
                        }
                    })
                    .collect();
                Storage::Arrow(row)
            }
            ModelKind::Wigner => {
                let b = spec.b.min(size.saturating_sub(1));
                let mut diags: Vec<Vec<f64>> = (1..=b).map(|d| vec![0.0; size - d]).collect();
                fill_banded(spec, lo, hi, None, &mut diags);
                Storage::Banded(diags)
            }
        };
        CouplingMatrix {
            kind: spec.kind,
            b: spec.b,
            lo,
            hi,
            storage,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn bandwidth(&self) -> usize {
        self.b
    }

    /// Lattice bounds `[lo, hi]`, inclusive.
    pub fn lattice(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    pub fn size(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    /// `V_{nm}`; zero outside the lattice.
    pub fn get(&self, n: i64, m: i64) -> f64 {
        if n < self.lo || n > self.hi || m < self.lo || m > self.hi || n == m {
            return 0.0;
        }
        match &self.storage {
            Storage::Arrow(row) => {
                if n == 0 {
                    row[(m - self.lo) as usize]
                } else if m == 0 {
                    row[(n - self.lo) as usize]
                } else {
                    0.0
                }
            }
            Storage::Banded(diags) => {
                let (r, c) = (n.min(m), n.max(m));
                let d = (c - r) as usize;
                if d > diags.len() {
                    0.0
                } else {
                    diags[d - 1][(r - self.lo) as usize]
                }
            }
        }
    }

    /// Stored upper-triangle elements `(n, m, V)` with `n < m`, including
    /// structural zeros only where the draw happened to be exactly zero.
    pub fn upper_triplets(&self) -> Vec<(i64, i64, f64)> {
        let mut out = Vec::new();
        match &self.storage {
            Storage::Arrow(row) => {
                for (i, &v) in row.iter().enumerate() {
                    let n = self.lo + i as i64;
                    if v != 0.0 {
                        out.push((n.min(0), n.max(0), v));
                    }
                }
                out.sort_by_key(|t| (t.0, t.1));
            }
            Storage::Banded(diags) => {
                for r in self.lo..=self.hi {
                    let i = (r - self.lo) as usize;
                    for (k, d) in diags.iter().enumerate() {
                        if i < d.len() && d[i] != 0.0 {
                            out.push((r, r + k as i64 + 1, d[i]));
                        }
                    }
                }
            }
        }
        out
    }

    /// Row 0 couplings `(n, V_{n0})` for `n ≠ 0`.
    pub fn row0(&self) -> Vec<(i64, f64)> {
        (self.lo..=self.hi)
            .filter(|&n| n != 0)
            .map(|n| (n, self.get(n, 0)))
            .filter(|&(_, v)| v != 0.0)
            .collect()
    }

    /// Grow the lattice by `sites_per_edge` on both sides. Existing
    /// elements are copied verbatim; new ones come from the same streams.
    pub fn extend(&self, spec: &ModelSpec, sites_per_edge: usize) -> Result<Self> {
        if sites_per_edge < 1 {
            return Err(invalid("sites_per_edge must be >= 1"));
        }
        if spec.kind != self.kind || spec.b != self.b {
            return Err(invalid("spec does not match the matrix being extended"));
        }
        let g = sites_per_edge as i64;
        let (lo, hi) = (self.lo - g, self.hi + g);
        let size = (hi - lo + 1) as usize;
        let storage = match &self.storage {
            Storage::Arrow(old) => {
                let stream = ElementStream::new(spec.seed);
                let mut row = vec![0.0; size];
                for (i, slot) in row.iter_mut().enumerate() {
                    let n = lo + i as i64;
                    if n >= self.lo && n <= self.hi {
                        *slot = old[(n - self.lo) as usize];
                    } else {
                        let d = n.unsigned_abs();
                        if d as usize <= spec.b {
                            *slot = element(spec, &stream, n.min(0), d, None);
                        }
                    }
                }
                Storage::Arrow(row)
            }
            Storage::Banded(old) => {
                let b = spec.b.min(size - 1);
                let mut diags: Vec<Vec<f64>> = (1..=b).map(|d| vec![0.0; size - d]).collect();
                for (k, od) in old.iter().enumerate() {
                    diags[k][g as usize..g as usize + od.len()].copy_from_slice(od);
                }
                fill_banded(spec, lo, hi, Some((self.lo, self.hi)), &mut diags);
                Storage::Banded(diags)
            }
        };
        Ok(CouplingMatrix {
            kind: self.kind,
            b: self.b,
            lo,
            hi,
            storage,
        })
    }

    /// Dense matrix `diag(E_n) + V` in lattice order.
    pub fn dense_hamiltonian(&self, spec: &ModelSpec) -> Vec<Vec<f64>> {
        let n = self.size();
        let mut h = vec![vec![0.0; n]; n];
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = spec.energy(self.lo + i as i64);
        }
        for (a, c, v) in self.upper_triplets() {
            let (i, j) = ((a - self.lo) as usize, (c - self.lo) as usize);
            h[i][j] = v;
            h[j][i] = v;
        }
        h
    }

    /// Text dump: a JSON header line with the `ModelSpec`, then `n m value` triplets
    /// of the upper triangle.
    pub fn write_triplets<W: Write>(&self, spec: &ModelSpec, mut w: W) -> Result<()> {
        let header = serde_json::to_string(spec).map_err(|e| invalid(e.to_string()))?;
        writeln!(w, "# spec {header}")?;
        writeln!(w, "# seed {}", spec.seed)?;
        writeln!(w, "# lattice {} {}", self.lo, self.hi)?;
        for (n, m, v) in self.upper_triplets() {
            writeln!(w, "{n} {m} {v:e}")?;
        }
        Ok(())
    }
}

/// One bin of the realized spectral function estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBin {
    pub lo: f64,
    pub hi: f64,
    pub center: f64,
    /// `C̃` estimate in the bin (two-sided average).
    pub value: f64,
    pub levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedSpectrum {
    /// `C(0) = Σ_{n≠0} |V_{n0}|²`.
    pub c0: f64,
    pub bins: Vec<SpectralBin>,
    pub realizations: usize,
}

/// `C(0)` and a log-binned estimate of `C̃(|ω|)` from row 0 of each matrix,
/// averaged over the supplied realizations.
pub fn realized_spectral_sums(
    spec: &ModelSpec,
    matrices: &[CouplingMatrix],
    bins_per_decade: usize,
) -> Result<RealizedSpectrum> {
    if matrices.is_empty() {
        return Err(invalid("no realizations supplied"));
    }
    let wmin = 0.5 * spec.omega_rho();
    let wmax = spec.omega_c() * (1.0 + 0.5 / spec.b as f64);
    let decades = (wmax / wmin).log10();
    let nb = ((decades * bins_per_decade as f64).ceil() as usize).max(1);
    let edges: Vec<f64> = (0..=nb)
        .map(|i| wmin * (wmax / wmin).powf(i as f64 / nb as f64))
        .collect();
    let mut sums = vec![0.0; nb];
    let mut counts = vec![0usize; nb];
    let mut c0 = 0.0;
    for m in matrices {
        for (n, v) in m.row0() {
            let w = spec.energy(n).abs();
            c0 += v * v;
            let k = edges.partition_point(|&e| e <= w);
            if k >= 1 && k <= nb {
                sums[k - 1] += v * v;
                counts[k - 1] += 1;
            }
        }
    }
    let r = matrices.len() as f64;
    let bins = (0..nb)
        .filter(|&k| counts[k] > 0)
        .map(|k| SpectralBin {
            lo: edges[k],
            hi: edges[k + 1],
            center: (edges[k] * edges[k + 1]).sqrt(),
            value: 2.0 * std::f64::consts::PI * sums[k] / r / (2.0 * (edges[k + 1] - edges[k])),
            levels: counts[k] / matrices.len(),
        })
        .collect();
    Ok(RealizedSpectrum {
        c0: c0 / r,
        bins,
        realizations: matrices.len(),
    })
}

/// Result of the discrete principal-value sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLambShift {
    pub value: f64,
    /// Frequency actually used; differs from the request after a lattice collision.
    pub omega: f64,
    pub shifted: bool,
}

/// `Σ_{n≠0} ⟨|V_{n0}|²⟩ / (ω - E_n)` over the band `|n| ≤ b`.
///
/// A request that lands on a lattice energy is moved by half a level spacing.
pub fn lamb_shift_discrete(spec: &ModelSpec, omega: f64) -> Result<DiscreteLambShift> {
    spec.validate()?;
    let x = omega * spec.rho;
    let shifted = (x - x.round()).abs() < 1e-9;
    let w = if shifted {
        omega + 0.5 / spec.rho
    } else {
        omega
    };
    let mut sum = 0.0;
    for n in 1..=spec.b as u64 {
        let e = n as f64 / spec.rho;
        let g = spec.coupling_variance(n);
        sum += g * (1.0 / (w - e) + 1.0 / (w + e));
    }
    Ok(DiscreteLambShift {
        value: sum,
        omega: w,
        shifted,
    })
}
